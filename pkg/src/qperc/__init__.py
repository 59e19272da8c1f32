"""Quantum perceptrons on Rydberg atom arrays: simulation, training, benchmarks."""

from .kernels import BACKEND as KERNEL_BACKEND
from .statevec import QuantumState

__version__ = "0.1.0"

__all__ = ["QuantumState", "KERNEL_BACKEND", "__version__"]
