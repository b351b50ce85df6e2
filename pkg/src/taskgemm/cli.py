"""Command-line front end: ``taskgemm run`` and ``taskgemm verify``.

Exit codes: 0 on success, 2 on configuration or usage errors, 1 on internal
errors or failed verification.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

from . import bench, verify
from .errors import ConfigError
from .spinmc import AnnealSchedule

log = logging.getLogger("taskgemm")

TRACE_HEADER = ["procedure", "step", "entropy_nats", "accepted", "wall_ns"]
KERNEL_HEADER = [
    "device_id", "procedure", "m", "n", "k", "queue_wait_ns", "exec_time_ns",
    "flops", "batch_size", "submitted_ns", "started_ns", "finished_ns",
]

_DEVICE_MODES = {
    "exclusive": "exclusive-context", "exclusive-context": "exclusive-context",
    "shared": "shared-context", "shared-context": "shared-context",
}
_OBJECTIVES = {"max": "maximize", "min": "minimize", "maximize": "maximize", "minimize": "minimize"}


def atomic_write(path, text):
    """Write ``text`` to ``path`` via a temp file in the same directory and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trace_csv(traces):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for t in traces:
        for step, (e, ok, ns) in enumerate(zip(t.entropies, t.accepted, t.wall_ns)):
            w.writerow([t.procedure_index, step, repr(float(e)), int(ok), int(ns)])
    return buf.getvalue()


def kernel_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(KERNEL_HEADER)
    for r in sorted(records, key=lambda r: (r.device_id, r.submitted_ns, r.procedure)):
        w.writerow([getattr(r, name) for name in KERNEL_HEADER])
    return buf.getvalue()


def _json_default(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def report_json(report):
    return json.dumps(report.to_dict(), indent=2, default=_json_default) + "\n"


def _int_list(text):
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one value")
    return values


def _seed_default():
    env = os.environ.get("TASKGEMM_SEED")
    if env is None:
        return 0
    try:
        return int(env, 0)
    except ValueError:
        raise ConfigError(f"TASKGEMM_SEED must be an integer, got {env!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="taskgemm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment or a sweep and write results")
    run.add_argument("--spins", type=int, required=True)
    run.add_argument("--steps", type=int, required=True)
    run.add_argument("--procedures", type=int, default=1)
    run.add_argument("--devices", type=int, default=1)
    run.add_argument("--procedures-per-device", type=int, default=None,
                     help="concurrent procedures per device (default: all bound procedures)")
    run.add_argument("--mode", choices=bench.MODES, default="tasked")
    run.add_argument("--device-mode", choices=sorted(_DEVICE_MODES), default="shared")
    run.add_argument("--device-slots", type=int, default=None,
                     help="concurrent kernels per device (default: physical cores / devices)")
    run.add_argument("--entropy", choices=("von-neumann", "renyi-2"), default="renyi-2")
    run.add_argument("--objective", choices=sorted(_OBJECTIVES), default="max")
    run.add_argument("--initial", choices=("product", "random"), default="product")
    run.add_argument("--t0", type=float, default=1.0)
    run.add_argument("--t-min", type=float, default=1e-3)
    run.add_argument("--seed", type=int, default=None, help="uint64; overrides TASKGEMM_SEED")
    run.add_argument("--repeats", type=int, default=1, help="runs per cell; the median is reported")
    run.add_argument("--sweep-procedures", type=_int_list, default=None, metavar="A,B,C")
    run.add_argument("--sweep-modes", default=None, metavar="M1,M2",
                     help="modes for --sweep-procedures (default: the --mode value)")
    run.add_argument("--baseline", type=Path, default=None, metavar="REPORT.json")
    run.add_argument("--kernel-log", action="store_true", help="also write per-kernel CSV")
    run.add_argument("--out", type=Path, default=Path("results"))

    ver = sub.add_parser("verify", help="run the oracle suites")
    ver.add_argument("--suite", action="append", choices=verify.SUITES, default=None)
    return parser


def _config_from_args(args):
    seed = args.seed if args.seed is not None else _seed_default()
    ppd = args.procedures_per_device
    if ppd is None:
        ppd = max(1, math.ceil(args.procedures / max(1, args.devices)))
    return bench.ExperimentConfig(
        spins=args.spins, steps=args.steps, procedures=args.procedures,
        devices=args.devices, procedures_per_device=ppd, mode=args.mode,
        device_mode=_DEVICE_MODES[args.device_mode], device_slots=args.device_slots,
        entropy_kind=args.entropy, objective=_OBJECTIVES[args.objective],
        schedule=AnnealSchedule(args.t0, args.t_min), seed=seed, initial=args.initial,
    )


def _load_baseline(path):
    try:
        data = json.loads(Path(path).read_text())
        cfg = bench.ExperimentConfig.from_dict(data["config"])
        return data.get("name") or str(path), cfg, int(data["total_wall_ns"])
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot read baseline report {path}: {exc}") from None


def _apply_baseline(report, baseline):
    name, cfg, wall = baseline
    if cfg.workload() != report.config.workload():
        diff = sorted(k for k, v in cfg.workload().items() if v != getattr(report.config, k))
        raise ConfigError(f"baseline {name} describes a different workload (differs in {diff})")
    report.speedup_vs = {name: wall / report.total_wall_ns}


def _write_bundle(out, report, stem="", kernel_log=False):
    suffix = f"_{stem}" if stem else ""
    atomic_write(out / f"report{suffix}.json", report_json(report))
    atomic_write(out / f"trace{suffix}.csv", trace_csv(report.traces))
    if kernel_log:
        atomic_write(out / f"kernels{suffix}.csv", kernel_csv(report.kernel_records))


def cmd_run(args):
    config = _config_from_args(args)
    baseline = _load_baseline(args.baseline) if args.baseline else None
    if args.sweep_procedures:
        modes = args.sweep_modes.split(",") if args.sweep_modes else [config.mode]
        for m in modes:
            if m not in bench.MODES:
                raise ConfigError(f"unknown sweep mode {m!r}; expected one of {bench.MODES}")
        for n in args.sweep_procedures:
            config.replace(procedures=n)  # validate every cell before running any
        table = bench.sweep(config, args.sweep_procedures, modes, repeats=args.repeats)
        for (mode, n), rep in table.cells.items():
            _write_bundle(args.out, rep, f"{mode}_np{n}", args.kernel_log)
        atomic_write(args.out / "sweep.json",
                     json.dumps(table.to_dict(), indent=2, default=_json_default) + "\n")
        print(table.format())
        return 0
    report = bench.run_experiment(config, repeats=args.repeats)
    if baseline is not None:
        _apply_baseline(report, baseline)
    _write_bundle(args.out, report, kernel_log=args.kernel_log)
    print(f"{report.name}: wall {report.total_wall_s:.3f} s, "
          f"average entropy {report.average_entropy:.6f} nats -> {args.out}")
    if report.speedup_vs:
        for name, value in report.speedup_vs.items():
            print(f"  speedup vs {name}: {value:.2f}x")
    return 0


def cmd_verify(args):
    results = verify.run_suites(args.suite)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_verify(args)
    except ConfigError as exc:
        print(f"taskgemm: error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        log.exception("internal error")
        return 1


if __name__ == "__main__":
    sys.exit(main())
