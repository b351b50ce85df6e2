"""Virtual devices and the two GEMM execution strategies.

A :class:`VirtualDevice` is a capacity-limited pool of CPU execution lanes
standing in for one GPU. Jobs are admitted strictly FIFO:

* shared-context mode (MPS-like): up to ``slots`` kernels run concurrently;
* exclusive-context mode: one kernel at a time;
* a batched job (:func:`batched_gemm`) waits for an idle device, spreads its
  entries over all lanes and holds the device until every entry finishes.

Concurrency is counted in kernel launches, so a whole batch is one launch.
"""
from __future__ import annotations

import itertools
import os
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import linalg
from .errors import KernelError, PreconditionError, SubmissionError
from .linalg import ComplexMatrix


class DeviceMode(str, Enum):
    EXCLUSIVE = "exclusive-context"
    SHARED = "shared-context"


def physical_cores():
    try:
        import psutil

        n = psutil.cpu_count(logical=False)
    except ImportError:  # pragma: no cover
        n = None
    return n or os.cpu_count() or 1


def default_slots(device_count=1):
    return max(1, physical_cores() // max(1, device_count))


@dataclass(frozen=True)
class GemmTask:
    alpha: complex
    a: ComplexMatrix
    b: ComplexMatrix
    beta: complex
    c: ComplexMatrix
    origin_procedure: int = 0

    def __post_init__(self):
        linalg._check_conformant(self.a, self.b, self.c)

    @property
    def dims(self):
        return self.a.rows, self.b.cols, self.a.cols

    def run(self):
        return linalg.gemm(self.alpha, self.a, self.b, self.beta, self.c)


@dataclass(frozen=True)
class GemmBatch:
    tasks: tuple

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if not self.tasks:
            raise PreconditionError("a batch needs at least one task")
        sizes = {t.dims for t in self.tasks}
        if len(sizes) > 1:
            raise PreconditionError(f"fixed-size batch has mixed (m, n, k): {sorted(sizes)}")

    @property
    def dims(self):
        return self.tasks[0].dims

    def __len__(self):
        return len(self.tasks)


@dataclass(frozen=True)
class KernelRecord:
    device_id: int
    procedure: int
    m: int
    n: int
    k: int
    queue_wait_ns: int
    exec_time_ns: int
    flops: int
    submitted_ns: int
    started_ns: int
    finished_ns: int
    batch_size: int = 1

    @property
    def throughput(self):
        """Flops per second of this GEMM; a batch entry is charged the whole batch time."""
        return self.flops / (max(self.exec_time_ns, 1) * 1e-9)


class CompletionHandle:
    """Resolves to ``(result, record)`` once the kernel finishes."""

    def __init__(self):
        self._done = threading.Event()
        self._value = None
        self._error = None
        self._claimed = False
        self._claim_lock = threading.Lock()

    def _resolve(self, value=None, error=None):
        self._value = value
        self._error = error
        self._done.set()

    def done(self):
        return self._done.is_set()

    def wait(self, timeout=None):
        with self._claim_lock:
            if self._claimed:
                raise PreconditionError("completion handle already awaited")
            self._claimed = True
        if not self._done.wait(timeout):
            with self._claim_lock:
                self._claimed = False
            raise TimeoutError("kernel did not complete in time")
        if self._error is not None:
            raise self._error
        return self._value


def wait_for(handle, timeout=None):
    """Block until the kernel behind ``handle`` completes; returns (matrix, record)."""
    return handle.wait(timeout)


@dataclass
class _Job:
    handles: list
    tasks: tuple
    batch: bool
    submitted_ns: int
    seq: int
    started_ns: int = 0
    remaining: int = 0
    results: list = field(default_factory=list)
    error: BaseException = None


@dataclass(frozen=True)
class DeviceMetrics:
    device_id: int
    mode: str
    slots: int
    kernels: int
    per_gemm_throughput: tuple
    median_gemm_throughput: float
    total_flops: int
    makespan_ns: int
    busy_ns: int
    idle_ns: int
    total_throughput: float
    high_water: int
    mean_queue_wait_ns: float

    def to_dict(self, include_distribution=False):
        d = {
            "device_id": self.device_id,
            "mode": self.mode,
            "slots": self.slots,
            "kernels": self.kernels,
            "median_gemm_flops_per_s": self.median_gemm_throughput,
            "total_flops": self.total_flops,
            "makespan_ns": self.makespan_ns,
            "busy_ns": self.busy_ns,
            "idle_ns": self.idle_ns,
            "total_flops_per_s": self.total_throughput,
            "high_water_concurrency": self.high_water,
            "mean_queue_wait_ns": self.mean_queue_wait_ns,
        }
        if include_distribution:
            d["per_gemm_flops_per_s"] = list(self.per_gemm_throughput)
        return d


class VirtualDevice:
    """One modeled accelerator: ``slots`` concurrent kernels over ``workers`` lanes."""

    def __init__(self, device_id=0, slots=None, workers=None, mode=DeviceMode.SHARED):
        self.id = device_id
        self.slots = default_slots() if slots is None else int(slots)
        self.workers = self.slots if workers is None else int(workers)
        if self.slots < 1 or self.workers < 1:
            raise PreconditionError(f"slots and workers must be >= 1, got {self.slots}, {self.workers}")
        self.mode = DeviceMode(mode)
        self._lanes = ThreadPoolExecutor(self.workers, thread_name_prefix=f"device{device_id}")
        self._cond = threading.Condition()
        self._queue = deque()
        self._seq = itertools.count()
        self._admitted = 0
        self._batch_admitted = False
        self._closed = False
        self.reset_metrics()

    def reset_metrics(self):
        with self._cond:
            self._executing = 0
            self._high_water = 0
            self._records = []
            self._intervals = []
            self._first_submit = None
            self._last_finish = None

    # --- submission ---------------------------------------------------

    def submit(self, task):
        """Queue one GEMM; the returned handle resolves to (result, KernelRecord)."""
        if not isinstance(task, GemmTask):
            raise PreconditionError(f"submit expects a GemmTask, got {type(task).__name__}")
        handle = CompletionHandle()
        self._enqueue([handle], (task,), batch=False)
        return handle

    def submit_batch(self, batch):
        handle = CompletionHandle()
        self._enqueue([handle], batch.tasks, batch=True)
        return handle

    def _enqueue(self, handles, tasks, batch):
        now = time.perf_counter_ns()
        with self._cond:
            if self._closed:
                raise SubmissionError(f"device {self.id} is shut down")
            if self._first_submit is None:
                self._first_submit = now
            self._queue.append(_Job(handles, tasks, batch, now, next(self._seq)))
            self._pump()

    def _admissible(self, job):
        if self._batch_admitted:
            return False
        if job.batch or self.mode is DeviceMode.EXCLUSIVE:
            return self._admitted == 0
        return self._admitted < self.slots

    def _pump(self):
        # caller holds self._cond; strict FIFO, no overtaking of a blocked head
        while self._queue and self._admissible(self._queue[0]):
            job = self._queue.popleft()
            self._admitted += 1
            if job.batch:
                self._batch_admitted = True
                job.remaining = len(job.tasks)
                job.results = [None] * len(job.tasks)
                for i in range(len(job.tasks)):
                    self._lanes.submit(self._run_batch_entry, job, i)
            else:
                self._lanes.submit(self._run_kernel, job)

    # --- lanes --------------------------------------------------------

    def _start(self, job):
        # first lane to touch a job stamps its start; batch entries share it
        with self._cond:
            if job.started_ns:
                return
            job.started_ns = time.perf_counter_ns()
            self._executing += 1
            self._high_water = max(self._high_water, self._executing)

    def _run_kernel(self, job):
        self._start(job)
        task = job.tasks[0]
        try:
            result, error = task.run(), None
        except Exception as exc:
            result, error = None, KernelError(task.origin_procedure, exc)
        self._finish(job, [result], error)

    def _run_batch_entry(self, job, i):
        self._start(job)
        task = job.tasks[i]
        try:
            job.results[i] = task.run()
        except Exception as exc:
            with self._cond:
                if job.error is None:
                    job.error = KernelError(task.origin_procedure, exc)
        with self._cond:
            job.remaining -= 1
            last = job.remaining == 0
        if last:
            self._finish(job, job.results, job.error)

    def _finish(self, job, results, error):
        end = time.perf_counter_ns()
        start = job.started_ns
        records = []
        for task in job.tasks:
            m, n, k = task.dims
            records.append(KernelRecord(
                device_id=self.id, procedure=task.origin_procedure, m=m, n=n, k=k,
                queue_wait_ns=start - job.submitted_ns, exec_time_ns=end - start,
                flops=linalg.gemm_flops(m, n, k), submitted_ns=job.submitted_ns,
                started_ns=start, finished_ns=end, batch_size=len(job.tasks),
            ))
        with self._cond:
            self._executing -= 1
            self._admitted -= 1
            if job.batch:
                self._batch_admitted = False
            if error is None:
                self._records.extend(records)
            self._intervals.append((start, end))
            self._last_finish = end if self._last_finish is None else max(self._last_finish, end)
            self._pump()
            self._cond.notify_all()
        handle = job.handles[0]
        if error is not None:
            handle._resolve(error=error)
        elif job.batch:
            handle._resolve(value=(list(results), records))
        else:
            handle._resolve(value=(results[0], records[0]))

    # --- lifecycle and metrics ---------------------------------------

    def shutdown(self, wait=True):
        with self._cond:
            self._closed = True
        self._lanes.shutdown(wait=wait)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()
        return False

    @property
    def high_water(self):
        with self._cond:
            return self._high_water

    def records(self):
        with self._cond:
            return list(self._records)

    def metrics(self):
        with self._cond:
            records = list(self._records)
            intervals = sorted(self._intervals)
            first, last = self._first_submit, self._last_finish
            high_water = self._high_water
        if not records:
            raise PreconditionError(f"device {self.id} has no completed kernels")
        busy = 0
        cur_s, cur_e = intervals[0]
        for s, e in intervals[1:]:
            if s > cur_e:
                busy += cur_e - cur_s
                cur_s, cur_e = s, e
            else:
                cur_e = max(cur_e, e)
        busy += cur_e - cur_s
        makespan = max(last - first, 1)
        per = tuple(r.throughput for r in records)
        total_flops = sum(r.flops for r in records)
        return DeviceMetrics(
            device_id=self.id,
            mode=self.mode.value,
            slots=self.slots,
            kernels=len(records),
            per_gemm_throughput=per,
            median_gemm_throughput=float(np.median(per)),
            total_flops=total_flops,
            makespan_ns=makespan,
            busy_ns=busy,
            idle_ns=makespan - busy,
            total_throughput=total_flops / (makespan * 1e-9),
            high_water=high_water,
            mean_queue_wait_ns=float(np.mean([r.queue_wait_ns for r in records])),
        )


def submit(device, task):
    return device.submit(task)


def batched_gemm(device, batch):
    """Run a fixed-size batch as one device job; results are in input order."""
    if not isinstance(batch, GemmBatch):
        batch = GemmBatch(tuple(batch))
    results, _ = device.submit_batch(batch).wait()
    return results


def device_metrics(device):
    return device.metrics()


# --- executors: what a Monte Carlo procedure calls to get its GEMM done ----


class InlineExecutor:
    """Runs the GEMM on the calling thread, no device."""

    def gemm(self, alpha, A, B, beta, C):
        return linalg.gemm(alpha, A, B, beta, C)


class DeviceExecutor:
    """Submits each GEMM to a device and blocks until it completes (tasked model)."""

    def __init__(self, device, procedure=0):
        self.device = device
        self.procedure = procedure

    def gemm(self, alpha, A, B, beta, C):
        task = GemmTask(alpha, A, B, beta, C, self.procedure)
        result, _ = self.device.submit(task).wait()
        return result


class LockstepBatcher:
    """Packs one GEMM from each participating procedure into a single batch.

    Every participant blocks until all active participants have submitted;
    the batch then runs as one device job. Tasks are ordered by procedure
    index so batch composition never depends on thread timing.
    """

    def __init__(self, device, procedures):
        self.device = device
        self._active = set(procedures)
        self._cond = threading.Condition()
        self._pending = {}
        self._generation = 0
        self._outcomes = {}

    def executor_for(self, procedure):
        return _BatchMember(self, procedure)

    def _launch_locked(self):
        tasks = [self._pending[p] for p in sorted(self._pending)]
        gen = self._generation
        self._pending = {}
        self._generation += 1
        return gen, tasks

    def _run(self, gen, tasks):
        try:
            results = batched_gemm(self.device, GemmBatch(tuple(tasks)))
            outcome = {t.origin_procedure: r for t, r in zip(tasks, results)}
        except Exception as exc:
            outcome = exc
        with self._cond:
            self._outcomes[gen] = outcome
            self._cond.notify_all()

    def _gemm(self, procedure, alpha, A, B, beta, C):
        task = GemmTask(alpha, A, B, beta, C, procedure)
        with self._cond:
            if procedure in self._pending:
                raise PreconditionError(f"procedure {procedure} already has a pending GEMM")
            gen = self._generation
            self._pending[procedure] = task
            launch = self._launch_locked() if set(self._pending) >= self._active else None
        if launch is not None:
            self._run(*launch)
        with self._cond:
            while gen not in self._outcomes:
                self._cond.wait()
            outcome = self._outcomes[gen]
        if isinstance(outcome, Exception):
            raise outcome
        return outcome[procedure]

    def leave(self, procedure):
        """Withdraw a finished (or failed) procedure so the others are not held back."""
        with self._cond:
            self._active.discard(procedure)
            launch = None
            if self._pending and set(self._pending) >= self._active:
                launch = self._launch_locked()
        if launch is not None:
            self._run(*launch)


class _BatchMember:
    def __init__(self, batcher, procedure):
        self._batcher = batcher
        self.procedure = procedure

    def gemm(self, alpha, A, B, beta, C):
        return self._batcher._gemm(self.procedure, alpha, A, B, beta, C)
