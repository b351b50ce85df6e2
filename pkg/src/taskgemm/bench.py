"""Experiment orchestration: bind procedures to devices, run, time, report.

Modes
-----
sequential     one procedure at a time per device, GEMMs submitted to the device
batched        procedures on a device advance in lockstep; each step's GEMMs form
               one fixed-size batch (one submitting rank)
tasked         each procedure is an independent task submitting its own GEMMs
cpu-reference  no device; GEMMs run inline on the procedure's thread

Procedure p is bound to device ``p % devices``. At most
``procedures_per_device`` procedures are active on a device at once; the rest
start in waves as earlier procedures finish.
"""
from __future__ import annotations

import dataclasses
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import spinmc
from .errors import ConfigError, PreconditionError
from .execution import (
    DeviceExecutor,
    DeviceMode,
    InlineExecutor,
    LockstepBatcher,
    VirtualDevice,
    default_slots,
)
from .rng import stream_for
from .spinmc import AnnealSchedule, ProcedureConfig

MODES = ("sequential", "batched", "tasked", "cpu-reference")

# fields that define the workload; only these must agree for a speedup to make sense
WORKLOAD_FIELDS = ("spins", "steps", "procedures", "entropy_kind", "objective", "schedule", "seed", "initial")


@dataclass(frozen=True)
class ExperimentConfig:
    spins: int
    steps: int
    procedures: int = 1
    devices: int = 1
    procedures_per_device: int = 1
    mode: str = "tasked"
    device_mode: str = DeviceMode.SHARED.value
    device_slots: int = None
    entropy_kind: str = "renyi-2"
    objective: str = "maximize"
    schedule: AnnealSchedule = field(default_factory=AnnealSchedule)
    seed: int = 0
    initial: str = "product"

    def __post_init__(self):
        # validates spins, steps, entropy kind, objective, initial provider
        self.procedure_config()
        if self.procedures < 1:
            raise ConfigError(f"procedures must be >= 1, got {self.procedures}")
        if self.devices < 1:
            raise ConfigError(f"devices must be >= 1, got {self.devices}")
        if self.procedures_per_device < 1:
            raise ConfigError(f"procedures per device must be >= 1, got {self.procedures_per_device}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        try:
            DeviceMode(self.device_mode)
        except ValueError:
            raise ConfigError(
                f"device mode must be one of {[m.value for m in DeviceMode]}, got {self.device_mode!r}"
            ) from None
        if self.device_slots is not None and self.device_slots < 1:
            raise ConfigError(f"device slots must be >= 1, got {self.device_slots}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a uint64, got {self.seed}")
        if self.devices > self.procedures:
            raise ConfigError(
                f"infeasible binding: {self.devices} devices for {self.procedures} procedures "
                "leaves devices without work"
            )

    def procedure_config(self):
        return ProcedureConfig(
            spins=self.spins, steps=self.steps, entropy_kind=self.entropy_kind,
            objective=self.objective, schedule=self.schedule, initial=self.initial,
        )

    @property
    def slots(self):
        return self.device_slots if self.device_slots is not None else default_slots(self.devices)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def workload(self):
        return {f: getattr(self, f) for f in WORKLOAD_FIELDS}

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["schedule"] = dataclasses.asdict(self.schedule)
        d["device_slots"] = self.slots
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["schedule"] = AnnealSchedule(**d.get("schedule", {}))
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class RunReport:
    config: ExperimentConfig
    traces: list
    per_device: list
    total_wall_ns: int
    average_entropy: float
    speedup_vs: dict = None
    name: str = None
    kernel_records: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.name is None:
            self.name = f"{self.config.mode}-np{self.config.procedures}"

    @property
    def total_wall_s(self):
        return self.total_wall_ns * 1e-9

    def to_dict(self):
        return {
            "name": self.name,
            "config": self.config.to_dict(),
            "total_wall_ns": self.total_wall_ns,
            "average_entropy_nats": self.average_entropy,
            "per_device": [m.to_dict() for m in self.per_device],
            "speedup_vs": self.speedup_vs,
        }


def binding(procedures, devices):
    """Procedure indices per device under the ``p mod devices`` rule."""
    return [[p for p in range(procedures) if p % devices == d] for d in range(devices)]


def waves(procs, size):
    return [procs[i:i + size] for i in range(0, len(procs), size)]


def _run_procedure(pconfig, seed, p, executor):
    return spinmc.mc_procedure(pconfig, stream_for(seed, p), executor, procedure_index=p)


def _run_batched_wave(pconfig, seed, device, wave):
    batcher = LockstepBatcher(device, wave)
    out = {}

    def member(p):
        try:
            return _run_procedure(pconfig, seed, p, batcher.executor_for(p))
        finally:
            batcher.leave(p)

    with ThreadPoolExecutor(len(wave), thread_name_prefix=f"batch{device.id}") as pool:
        futures = {p: pool.submit(member, p) for p in wave}
        for p, f in futures.items():
            out[p] = f.result()
    return out


def _run_once(config):
    pconfig = config.procedure_config()
    bound = binding(config.procedures, config.devices)
    ppd = config.procedures_per_device
    traces = {}
    devices = []
    if config.mode != "cpu-reference":
        devices = [
            VirtualDevice(d, slots=config.slots, mode=config.device_mode)
            for d in range(config.devices)
        ]

    start = time.perf_counter_ns()
    try:
        if config.mode == "cpu-reference":
            with ThreadPoolExecutor(config.devices * ppd, thread_name_prefix="cpu") as pool:
                futures = [
                    pool.submit(_run_procedure, pconfig, config.seed, p, InlineExecutor())
                    for p in range(config.procedures)
                ]
                for f in futures:
                    t = f.result()
                    traces[t.procedure_index] = t
        elif config.mode == "batched":
            def drive(d):
                res = {}
                for wave in waves(bound[d], ppd):
                    res.update(_run_batched_wave(pconfig, config.seed, devices[d], wave))
                return res

            with ThreadPoolExecutor(config.devices, thread_name_prefix="driver") as pool:
                for res in pool.map(drive, range(config.devices)):
                    traces.update(res)
        else:
            width = 1 if config.mode == "sequential" else ppd
            pools = [
                ThreadPoolExecutor(width, thread_name_prefix=f"procs{d}")
                for d in range(config.devices)
            ]
            try:
                futures = [
                    pools[d].submit(
                        _run_procedure, pconfig, config.seed, p, DeviceExecutor(devices[d], p)
                    )
                    for d in range(config.devices)
                    for p in bound[d]
                ]
                for f in futures:
                    t = f.result()
                    traces[t.procedure_index] = t
            finally:
                for pool in pools:
                    pool.shutdown()
        total = time.perf_counter_ns() - start
    finally:
        for dev in devices:
            dev.shutdown()

    ordered = [traces[p] for p in range(config.procedures)]
    metrics = [dev.metrics() for dev in devices if dev.records()]
    records = [r for dev in devices for r in dev.records()]
    avg = spinmc.average_entropy(ordered) if config.steps > 0 else float(
        sum(t.initial_entropy for t in ordered) / len(ordered)
    )
    return RunReport(config, ordered, metrics, total, avg, kernel_records=records)


def run_experiment(config, repeats=1):
    """Run ``config``; with ``repeats`` > 1 the run with the median wall time is returned."""
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")
    runs = [_run_once(config) for _ in range(repeats)]
    runs.sort(key=lambda r: r.total_wall_ns)
    return runs[(len(runs) - 1) // 2]


def extrapolate_runtime(measured, measured_steps, target_steps):
    """Scale a runtime linearly in the number of Monte Carlo steps."""
    if measured_steps < 1:
        raise PreconditionError(f"measured_steps must be >= 1, got {measured_steps}")
    return measured * target_steps / measured_steps


def speedup(report, baseline):
    """baseline wall time / report wall time, for the same workload."""
    a, b = report.config.workload(), baseline.config.workload()
    if a != b:
        diff = sorted(k for k in a if a[k] != b[k])
        raise PreconditionError(f"reports describe different workloads (differ in {diff})")
    return baseline.total_wall_ns / report.total_wall_ns


@dataclass
class SweepTable:
    baseline_mode: str
    cells: dict
    rows: list

    def cell(self, mode, procedures):
        return self.cells[(mode, procedures)]

    def column(self, mode, key):
        return [r[key] for r in self.rows if r["mode"] == mode]

    def format(self):
        head = f"{'mode':<14}{'N_p':>5}{'wall_s':>10}{'speedup':>9}{'gemm_GF/s':>11}{'total_GF/s':>12}"
        lines = [head]
        for r in self.rows:
            lines.append(
                f"{r['mode']:<14}{r['procedures']:>5}{r['total_wall_ns'] * 1e-9:>10.3f}"
                f"{r['speedup']:>9.2f}{r['median_gemm_flops_per_s'] / 1e9:>11.3f}"
                f"{r['total_flops_per_s'] / 1e9:>12.3f}"
            )
        return "\n".join(lines)

    def to_dict(self):
        return {"baseline_mode": self.baseline_mode, "rows": self.rows}


def _throughputs(report):
    if not report.per_device:
        return float("nan"), float("nan")
    per = [x for m in report.per_device for x in m.per_gemm_throughput]
    total = sum(m.total_flops for m in report.per_device) / (report.total_wall_ns * 1e-9)
    return statistics.median(per), total


def sweep(base, procedures_list, modes_list, baseline_mode="sequential", repeats=3):
    """Cartesian sweep over N_p and modes, each cell the median of ``repeats`` runs.

    Every cell's speedup is taken against the ``baseline_mode`` cell with the
    same N_p, which is run too if it is not among ``modes_list``.
    """
    procedures_list = list(procedures_list)
    modes_list = list(modes_list)
    if not procedures_list or not modes_list:
        raise PreconditionError("sweep needs at least one procedure count and one mode")
    run_modes = list(modes_list)
    if baseline_mode is not None and baseline_mode not in run_modes:
        run_modes.insert(0, baseline_mode)
    cells = {}
    for n in procedures_list:
        for mode in run_modes:
            cells[(mode, n)] = run_experiment(base.replace(procedures=n, mode=mode), repeats)
    rows = []
    for n in procedures_list:
        base_report = cells[(baseline_mode, n)] if baseline_mode is not None else None
        for mode in modes_list:
            rep = cells[(mode, n)]
            if base_report is not None:
                rep.speedup_vs = {base_report.name: speedup(rep, base_report)}
            gemm_tp, total_tp = _throughputs(rep)
            rows.append({
                "mode": mode,
                "procedures": n,
                "total_wall_ns": rep.total_wall_ns,
                "speedup": speedup(rep, base_report) if base_report is not None else 1.0,
                "median_gemm_flops_per_s": gemm_tp,
                "total_flops_per_s": total_tp,
                "average_entropy_nats": rep.average_entropy,
            })
    return SweepTable(baseline_mode, cells, rows)

