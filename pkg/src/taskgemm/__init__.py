"""Task-interleaved vs batched execution of many small complex GEMMs.

The workload is a simulated-annealing Monte Carlo search over spin-chain
states whose hot kernel is the GEMM forming the reduced density matrix.
"""
from .bench import ExperimentConfig, RunReport, extrapolate_runtime, run_experiment, speedup, sweep
from .errors import ConfigError, KernelError, PreconditionError, SubmissionError
from .execution import (
    DeviceMode,
    GemmBatch,
    GemmTask,
    VirtualDevice,
    batched_gemm,
    device_metrics,
    submit,
    wait_for,
)
from .linalg import ComplexMatrix, frobenius_norm, gemm, gemm_flops, gemm_tiled, hermitian_eigenvalues
from .rng import RandomStream, StreamSeed, derive_stream

__version__ = "0.1.0"
