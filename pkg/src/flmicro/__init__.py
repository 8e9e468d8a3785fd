"""Fourier-Lebesgue microlocal analysis on periodic grids.

Modules
-------
polyhedron
    Complete Newton polyhedra with exact rational invariants.
weights
    Weight functions and sampled verification of their conditions.
grid
    Grids, fields, discrete Fourier transforms and weighted norms.
pdo
    Symbols, quantization and norm estimates for pseudodifferential operators.
microlocal
    Frequency neighborhoods, M-cones, microlocal norms and ellipticity.
propagation
    Regularity bookkeeping and the propagation demonstration.
cli
    Command-line entry point ``flmicro``.

Set ``FLMICRO_DISABLE_NUMBA=1`` before import to run the pure NumPy kernels.
"""

__version__ = "0.1.0"

from .errors import FLMicroError  # noqa: E402
from .grid import Field, GridSpec, Spectrum, dft, fl_norm, idft  # noqa: E402
from .weights import Weight, homogeneous, make_weight, quasi_homogeneous  # noqa: E402

__all__ = [
    "__version__",
    "FLMicroError",
    "Field",
    "GridSpec",
    "Spectrum",
    "dft",
    "idft",
    "fl_norm",
    "Weight",
    "homogeneous",
    "quasi_homogeneous",
    "make_weight",
]
