"""Spin-chain statevector workload: random two-site gates, bipartite entropy, annealing.

Conventions: spin q is bit q of the amplitude index (spin 0 is the least
significant bit). Subsystem A is the low floor(S/2) spins, B the remaining
ceil(S/2). The reduced density matrix rho = Psi Psi^dagger is always formed by
a GEMM routed through the supplied executor; that GEMM is the hot kernel the
execution strategies compete on.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from numba import njit

from . import linalg
from .errors import ConfigError, PreconditionError
from .linalg import ComplexMatrix

MIN_SPINS = 2
MAX_SPINS = 30
NORM_TOL = 1e-9
EIG_CUTOFF = 1e-15
RENORMALIZE_EVERY = 1000
EXP_CLAMP = -745.0

ENTROPY_KINDS = ("von-neumann", "renyi-2")
OBJECTIVES = ("maximize", "minimize")


@dataclass(frozen=True)
class BipartitionDims:
    spins: int
    d_a: int
    d_b: int
    gemm_m: int
    gemm_n: int
    gemm_k: int


def dims_for_spins(spins):
    """Subsystem and GEMM sizes for an S-spin chain: (M, N, K) = (d_a, d_a, d_b)."""
    if not MIN_SPINS <= spins <= MAX_SPINS:
        raise ConfigError(f"spins out of range [{MIN_SPINS},{MAX_SPINS}]: {spins}")
    d_a = 1 << (spins // 2)
    d_b = 1 << (spins - spins // 2)
    return BipartitionDims(spins, d_a, d_b, d_a, d_a, d_b)


class SpinChainState:
    """Normalized amplitude vector of length 2**spins."""

    __slots__ = ("spins", "amplitudes")

    def __init__(self, spins, amplitudes):
        dims_for_spins(spins)
        amps = np.ascontiguousarray(amplitudes, dtype=np.complex128)
        if amps.shape != (1 << spins,):
            raise PreconditionError(
                f"expected {1 << spins} amplitudes for {spins} spins, got shape {amps.shape}"
            )
        self.spins = spins
        self.amplitudes = amps

    def norm(self):
        return float(np.sqrt(np.vdot(self.amplitudes, self.amplitudes).real))

    def copy(self):
        return SpinChainState(self.spins, self.amplitudes.copy())

    def __repr__(self):
        return f"SpinChainState(spins={self.spins})"


def product_state(spins):
    """|0...0>."""
    amps = np.zeros(1 << dims_for_spins(spins).spins, dtype=np.complex128)
    amps[0] = 1.0
    return SpinChainState(spins, amps)


def random_state(spins, stream):
    """Complex Gaussian amplitudes, normalized."""
    n = 1 << dims_for_spins(spins).spins
    z = stream.standard_normals(2 * n)
    amps = z[0::2] + 1j * z[1::2]
    amps /= np.sqrt(np.vdot(amps, amps).real)
    return SpinChainState(spins, amps)


def ghz_state(spins):
    amps = np.zeros(1 << spins, dtype=np.complex128)
    amps[0] = amps[-1] = 1.0 / math.sqrt(2.0)
    return SpinChainState(spins, amps)


def bell_pairs_state(spins):
    """Each spin of A maximally entangled with one spin of B; entropy floor(S/2) ln 2."""
    half = spins // 2
    amps = np.zeros(1 << spins, dtype=np.complex128)
    for a in range(1 << half):
        # spin q in A pairs with spin half + q in B
        amps[a | (a << half)] = 1.0
    amps /= np.sqrt(np.vdot(amps, amps).real)
    return SpinChainState(spins, amps)


def haar_two_site_unitary(stream):
    """4x4 Haar-random unitary: QR of a complex Ginibre matrix with the R-diagonal phase fix."""
    z = stream.standard_normals(32)
    g = (z[0::2] + 1j * z[1::2]).reshape((4, 4), order="F")
    q, r = np.linalg.qr(g)
    d = np.diagonal(r)
    q = q * (d / np.abs(d))
    return ComplexMatrix._wrap(np.asfortranarray(q))


@njit(nogil=True, cache=True)
def _apply_gate(src, dst, site, u):
    lo = 1 << site
    hi = lo << 1
    both = lo | hi
    for base in range(src.shape[0]):
        if base & both:
            continue
        i1 = base | lo
        i2 = base | hi
        i3 = base | both
        v0 = src[base]
        v1 = src[i1]
        v2 = src[i2]
        v3 = src[i3]
        dst[base] = u[0, 0] * v0 + u[0, 1] * v1 + u[0, 2] * v2 + u[0, 3] * v3
        dst[i1] = u[1, 0] * v0 + u[1, 1] * v1 + u[1, 2] * v2 + u[1, 3] * v3
        dst[i2] = u[2, 0] * v0 + u[2, 1] * v1 + u[2, 2] * v2 + u[2, 3] * v3
        dst[i3] = u[3, 0] * v0 + u[3, 1] * v1 + u[3, 2] * v2 + u[3, 3] * v3


def apply_two_site_gate(state, site, U, out=None):
    """Apply a 4x4 gate to spins (site, site+1).

    The gate's row/column index is bit(site) + 2*bit(site+1). When ``out`` is
    given it receives the new amplitudes; otherwise a fresh buffer is used.
    """
    if not 0 <= site <= state.spins - 2:
        raise PreconditionError(f"site {site} out of range [0, {state.spins - 2}]")
    u = U.array if isinstance(U, ComplexMatrix) else np.asarray(U, dtype=np.complex128)
    if u.shape != (4, 4):
        raise PreconditionError(f"two-site gate must be 4x4, got {u.shape}")
    if out is None:
        out = np.empty_like(state.amplitudes)
    _apply_gate(state.amplitudes, out, site, np.ascontiguousarray(u))
    return SpinChainState(state.spins, out)


def bipartite_matrix(state):
    """Psi[a, b] = psi[a + b*d_a]: the column-major reshape of the amplitudes."""
    dims = dims_for_spins(state.spins)
    return ComplexMatrix._wrap(
        state.amplitudes.reshape((dims.d_a, dims.d_b), order="F").copy(order="F")
    )


def reduced_density_matrix(state, executor=None):
    psi = bipartite_matrix(state)
    zeros = ComplexMatrix.zeros(psi.rows, psi.rows)
    if executor is None:
        return linalg.gemm(1.0, psi, psi.conj_transpose(), 0.0, zeros)
    return executor.gemm(1.0, psi, psi.conj_transpose(), 0.0, zeros)


def entropy_of_rho(rho, kind):
    if kind == "von-neumann":
        lam = linalg.hermitian_eigenvalues(rho)
        lam = lam[lam > EIG_CUTOFF]
        s = -float(np.sum(lam * np.log(lam)))
    elif kind == "renyi-2":
        s = -math.log(linalg.frobenius_norm(rho) ** 2)
    else:
        raise PreconditionError(f"unknown entropy kind {kind!r}; expected one of {ENTROPY_KINDS}")
    # roundoff around a pure state can push either formula to -1e-16 (or -0.0)
    return s if s > 0.0 else 0.0


def entanglement_entropy(state, kind="von-neumann", executor=None):
    """Bipartite entanglement entropy in nats."""
    norm = state.norm()
    if abs(norm - 1.0) > NORM_TOL:
        raise PreconditionError(f"state is not normalized: ||psi|| = {norm!r}")
    return entropy_of_rho(reduced_density_matrix(state, executor), kind)


@dataclass(frozen=True)
class AnnealSchedule:
    t0: float = 1.0
    t_min: float = 1e-3
    kind: str = "geometric"

    def __post_init__(self):
        if not (self.t0 > 0 and self.t_min > 0):
            raise ConfigError(f"temperatures must be positive, got t0={self.t0}, t_min={self.t_min}")
        if self.t_min > self.t0:
            raise ConfigError(f"t_min={self.t_min} exceeds t0={self.t0}")
        if self.kind != "geometric":
            raise ConfigError(f"unsupported schedule kind {self.kind!r}")


def temperature(schedule, step, total_steps):
    """Geometric cooling from t0 toward t_min over total_steps."""
    if not 0 <= step < total_steps:
        raise PreconditionError(f"step {step} not in [0, {total_steps})")
    if schedule.t0 == schedule.t_min:
        return schedule.t0
    return schedule.t0 * (schedule.t_min / schedule.t0) ** (step / total_steps)


def metropolis_step(
    state,
    step_index,
    schedule,
    stream,
    entropy_kind="von-neumann",
    objective="maximize",
    executor=None,
    *,
    total_steps,
    current_entropy=None,
    scratch=None,
):
    """One propose/evaluate/accept step.

    The proposal is written into ``scratch`` (allocated if missing). On accept
    the returned state wraps that buffer; on reject the input state object is
    returned untouched together with its entropy.
    """
    if current_entropy is None:
        current_entropy = entanglement_entropy(state, entropy_kind, executor)
    site = stream.uniform_index(state.spins - 1)
    U = haar_two_site_unitary(stream)
    proposal = apply_two_site_gate(state, site, U, out=scratch)
    new_entropy = entanglement_entropy(proposal, entropy_kind, executor)

    delta = new_entropy - current_entropy
    if objective == "minimize":
        delta = -delta
    elif objective != "maximize":
        raise PreconditionError(f"unknown objective {objective!r}; expected one of {OBJECTIVES}")
    if delta >= 0.0:
        accepted = True
    else:
        t = temperature(schedule, step_index, total_steps)
        p = math.exp(min(0.0, max(EXP_CLAMP, delta / t)))
        # u in (0, 1] so a clamped probability of exp(-745) never accepts
        accepted = (1.0 - stream.uniform01()) <= p
    if accepted:
        return proposal, new_entropy, True
    return state, current_entropy, False


InitialProvider = Union[str, Callable]


@dataclass(frozen=True)
class ProcedureConfig:
    spins: int
    steps: int
    entropy_kind: str = "von-neumann"
    objective: str = "maximize"
    schedule: AnnealSchedule = field(default_factory=AnnealSchedule)
    initial: InitialProvider = "product"

    def __post_init__(self):
        dims_for_spins(self.spins)
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if self.entropy_kind not in ENTROPY_KINDS:
            raise ConfigError(f"entropy kind must be one of {ENTROPY_KINDS}, got {self.entropy_kind!r}")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if not callable(self.initial) and self.initial not in ("product", "random"):
            raise ConfigError(f"initial state must be 'product', 'random' or a callable, got {self.initial!r}")


@dataclass
class EntropyTrace:
    procedure_index: int
    initial_entropy: float
    entropies: np.ndarray
    accepted: np.ndarray
    wall_ns: np.ndarray

    def __len__(self):
        return len(self.entropies)

    @property
    def final_entropy(self):
        if len(self.entropies) == 0:
            return self.initial_entropy
        return float(self.entropies[-1])

    def same_trajectory(self, other):
        """Bitwise equality of entropies and acceptance flags (timings ignored)."""
        return (
            self.procedure_index == other.procedure_index
            and self.entropies.tobytes() == other.entropies.tobytes()
            and self.accepted.tobytes() == other.accepted.tobytes()
        )


def _initial_state(config, stream):
    if callable(config.initial):
        return config.initial(config.spins, stream)
    if config.initial == "random":
        return random_state(config.spins, stream)
    return product_state(config.spins)


def mc_procedure(config, stream, executor=None, procedure_index=0):
    """Run one annealing trajectory of ``config.steps`` Metropolis steps."""
    state = _initial_state(config, stream)
    entropy = entanglement_entropy(state, config.entropy_kind, executor)
    initial = entropy
    n = config.steps
    entropies = np.empty(n)
    accepted = np.zeros(n, dtype=bool)
    wall = np.empty(n, dtype=np.int64)
    scratch = np.empty_like(state.amplitudes)
    for step in range(n):
        t_start = time.perf_counter_ns()
        new_state, entropy, ok = metropolis_step(
            state, step, config.schedule, stream, config.entropy_kind, config.objective,
            executor, total_steps=n, current_entropy=entropy, scratch=scratch,
        )
        if ok:
            scratch = state.amplitudes
            state = new_state
        if (step + 1) % RENORMALIZE_EVERY == 0:
            state.amplitudes /= state.norm()
        entropies[step] = entropy
        accepted[step] = ok
        wall[step] = time.perf_counter_ns() - t_start
    return EntropyTrace(procedure_index, initial, entropies, accepted, wall)


def average_entropy(traces):
    """Mean over procedures of each trace's final entropy."""
    traces = list(traces)
    if not traces:
        raise PreconditionError("average_entropy needs at least one trace")
    lengths = {len(t) for t in traces}
    if 0 in lengths:
        raise PreconditionError("average_entropy needs non-empty traces")
    if len(lengths) > 1:
        raise PreconditionError(f"traces have unequal lengths {sorted(lengths)}")
    return math.fsum(t.final_entropy for t in traces) / len(traces)
