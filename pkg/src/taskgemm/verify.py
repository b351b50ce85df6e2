"""Oracle suites behind ``taskgemm verify``."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linalg, oracles, spinmc
from .bench import ExperimentConfig, run_experiment
from .linalg import ComplexMatrix
from .rng import stream_for

SUITES = ("gemm", "entropy", "executors")


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _rel_err(got, want):
    scale = max(float(np.max(np.abs(want))), 1e-300)
    return float(np.max(np.abs(got - want))) / scale


def gemm_suite(instances=50, max_dim=24, seed=1234, tol=1e-13):
    rng = np.random.default_rng(seed)
    worst = 0.0
    tiles_ok = True
    for _ in range(instances):
        m, n, k = (int(x) for x in rng.integers(1, max_dim + 1, size=3))
        A = ComplexMatrix.random(m, k, rng)
        B = ComplexMatrix.random(k, n, rng)
        C = ComplexMatrix.random(m, n, rng)
        alpha = complex(*rng.standard_normal(2))
        beta = complex(*rng.standard_normal(2))
        got = linalg.gemm(alpha, A, B, beta, C)
        want = oracles.naive_gemm(alpha, A.array, B.array, beta, C.array)
        worst = max(worst, _rel_err(got.array, want))
        for tile in (1, 2, 3, 8, 17, 64):
            tiles_ok &= linalg.gemm_tiled(alpha, A, B, beta, C, tile).identical(got)
    ok = worst <= tol and tiles_ok
    return SuiteResult(
        "gemm", ok,
        f"{instances} instances, max rel err {worst:.2e} (tol {tol:g}), tiled bitwise {'ok' if tiles_ok else 'MISMATCH'}",
    )


def entropy_suite(states=20, seed=99, tol=1e-9):
    worst = 0.0
    for i in range(states):
        spins = (2, 4, 6, 8)[i % 4]
        psi = spinmc.random_state(spins, stream_for(seed, i))
        got = spinmc.entanglement_entropy(psi, "von-neumann")
        want = oracles.reference_entropy(psi.amplitudes, spins)
        worst = max(worst, abs(got - want))
    special = [
        abs(spinmc.entanglement_entropy(spinmc.product_state(6))),
        abs(spinmc.entanglement_entropy(spinmc.ghz_state(4)) - math.log(2)),
        abs(spinmc.entanglement_entropy(spinmc.bell_pairs_state(8)) - 4 * math.log(2)),
    ]
    ok = worst <= tol and special[0] <= 1e-10 and special[1] <= 1e-10 and special[2] <= 1e-8
    return SuiteResult(
        "entropy", ok,
        f"{states} random states, max abs err {worst:.2e} (tol {tol:g}); "
        f"product {special[0]:.1e}, GHZ {special[1]:.1e}, Bell pairs {special[2]:.1e}",
    )


def executor_suite(seed=5):
    base = ExperimentConfig(
        spins=6, steps=30, procedures=4, devices=2, procedures_per_device=2,
        entropy_kind="von-neumann", seed=seed, device_slots=2,
    )
    ref = run_experiment(base.replace(mode="cpu-reference"))
    mismatches = []
    combos = 0
    for mode in ("sequential", "batched", "tasked"):
        for dm in ("exclusive-context", "shared-context"):
            combos += 1
            rep = run_experiment(base.replace(mode=mode, device_mode=dm))
            if not all(a.same_trajectory(b) for a, b in zip(rep.traces, ref.traces)):
                mismatches.append(f"{mode}/{dm}")
    ok = not mismatches
    detail = f"{combos} executor/mode combinations vs inline reference"
    if mismatches:
        detail += f"; mismatched: {', '.join(mismatches)}"
    return SuiteResult("executors", ok, detail)


_RUNNERS = {"gemm": gemm_suite, "entropy": entropy_suite, "executors": executor_suite}


def run_suites(names=None):
    return [_RUNNERS[name]() for name in (names or SUITES)]
