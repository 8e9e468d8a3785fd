"""Periodic grids, discrete Fourier pairs and weighted Lebesgue norms.

Space samples sit at ``x_j = -L + j dx`` with ``dx = 2L/N`` and frequency
samples at ``xi_k = (k - N/2) dxi`` with ``dxi = pi/L``.  The forward
transform approximates ``fhat(xi) = int exp(-i xi.x) f(x) dx`` and the
inverse carries the factor ``(2 pi)^-n``.  Because ``N/2`` is even for every
admissible ``N >= 8`` the index shifts reduce to checkerboard sign flips
around a plain FFT.

Examples
--------
>>> g = GridSpec(n=1, extent=16.0, points=512)
>>> f = Field.from_function(g, lambda x: np.exp(-x[..., 0] ** 2 / 2))
>>> s = dft(f)
>>> bool(abs(s.values[256] - np.sqrt(2 * np.pi)) < 1e-10)
True
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .errors import GridMismatch
from .weights import Weight

MAGIC = b"FLGR"


# --------------------------------------------------------------------------
# Grid and samples
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on ``[-L, L)^n`` and its dual frequency grid.

    Attributes
    ----------
    n : int
        Dimension.
    extent : float
        Half-width ``L``.
    points : int
        Samples per axis ``N``: a power of two, at least 8.
    """

    n: int
    extent: float
    points: int

    def __post_init__(self):
        N = self.points
        if self.n < 1:
            raise GridMismatch("dimension must be positive")
        if N < 8 or N & (N - 1):
            raise GridMismatch(f"points must be a power of two >= 8, got {N}")
        if not self.extent > 0:
            raise GridMismatch("extent must be positive")

    @property
    def dx(self) -> float:
        return 2.0 * self.extent / self.points

    @property
    def dxi(self) -> float:
        return np.pi / self.extent

    @property
    def xi_max(self) -> float:
        """Largest representable frequency magnitude ``pi N / (2L)``."""
        return np.pi * self.points / (2.0 * self.extent)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.n

    @property
    def cell_x(self) -> float:
        return self.dx ** self.n

    @property
    def cell_xi(self) -> float:
        return self.dxi ** self.n

    def x_axis(self) -> np.ndarray:
        return -self.extent + self.dx * np.arange(self.points)

    def xi_axis(self) -> np.ndarray:
        return self.dxi * (np.arange(self.points) - self.points // 2)

    def x_mesh(self) -> np.ndarray:
        """Space points, shape ``(N, ..., N, n)``."""
        return _mesh(self.x_axis().tobytes(), self.n)

    def xi_mesh(self) -> np.ndarray:
        """Frequency points, shape ``(N, ..., N, n)``."""
        return _mesh(self.xi_axis().tobytes(), self.n)

    def refine(self) -> "GridSpec":
        """Same box, twice the points: same ``dxi``, doubled frequency range."""
        return GridSpec(self.n, self.extent, 2 * self.points)

    def index_of_xi(self, xi: Sequence[float]) -> tuple[int, ...]:
        """Nearest frequency index for a point ``xi``."""
        return tuple(int(round(v / self.dxi)) + self.points // 2 for v in xi)


@lru_cache(maxsize=32)
def _mesh(axis_bytes: bytes, n: int) -> np.ndarray:
    ax = np.frombuffer(axis_bytes, dtype=float)
    m = np.stack(np.meshgrid(*([ax] * n), indexing="ij"), axis=-1)
    m.setflags(write=False)
    return m


@lru_cache(maxsize=32)
def _checker(N: int, n: int) -> np.ndarray:
    s = (-1.0) ** np.arange(N)
    out = s
    for _ in range(n - 1):
        out = np.multiply.outer(out, s)
    out = np.asarray(out)
    out.setflags(write=False)
    return out


@dataclass
class Field:
    """Complex samples on the space grid."""

    grid: GridSpec
    values: np.ndarray
    side: str = "space"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.grid.shape:
            raise GridMismatch(f"values shape {self.values.shape} does not match grid {self.grid.shape}")

    @classmethod
    def from_function(cls, grid: GridSpec, f: Callable[[np.ndarray], np.ndarray]) -> "Field":
        """Sample ``f`` (acting on arrays of shape ``(..., n)``) on the grid."""
        pts = grid.xi_mesh() if cls is Spectrum else grid.x_mesh()
        return cls(grid, np.asarray(f(pts), dtype=complex) * np.ones(grid.shape))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "Field":
        return cls(grid, np.zeros(grid.shape, dtype=complex))

    def _check(self, other: "Field") -> None:
        if not isinstance(other, Field) or other.grid != self.grid or other.side != self.side:
            raise GridMismatch("operands live on different grids")

    def _wrap(self, values) -> "Field":
        return type(self)(self.grid, values)

    def __add__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return self._wrap(self.values + other.values)
        return self._wrap(self.values + other)

    def __sub__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return self._wrap(self.values - other.values)
        return self._wrap(self.values - other)

    def __mul__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return self._wrap(self.values * other.values)
        return self._wrap(self.values * other)

    __rmul__ = __mul__
    __radd__ = __add__

    def __neg__(self):
        return self._wrap(-self.values)

    def conj(self):
        return self._wrap(np.conj(self.values))

    def norm2(self) -> float:
        """Plain ``L^2`` norm with the cell volume of this side."""
        cell = self.grid.cell_xi if self.side == "frequency" else self.grid.cell_x
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * cell))

    def points(self) -> np.ndarray:
        return self.grid.xi_mesh() if self.side == "frequency" else self.grid.x_mesh()


@dataclass
class Spectrum(Field):
    """Complex samples on the frequency grid."""

    side: str = "frequency"


# --------------------------------------------------------------------------
# Transforms
# --------------------------------------------------------------------------


def dft(f: Field) -> Spectrum:
    """Discrete approximation of ``int exp(-i xi.x) f(x) dx`` on the dual grid."""
    if not isinstance(f, Field) or f.side != "space":
        raise GridMismatch("dft expects a space-side Field")
    g = f.grid
    c = _checker(g.points, g.n)
    vals = g.cell_x * c * np.fft.fftn(c * f.values)
    return Spectrum(g, vals)


def idft(s: Spectrum) -> Field:
    """Inverse of :func:`dft`, with the ``(2 pi)^-n`` normalisation."""
    if not isinstance(s, Field) or s.side != "frequency":
        raise GridMismatch("idft expects a Spectrum")
    g = s.grid
    c = _checker(g.points, g.n)
    scale = (2 * np.pi) ** (-g.n) * g.cell_xi * g.points ** g.n
    return Field(g, scale * c * np.fft.ifftn(c * s.values))


def partial_dft_x(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Space transform applied to the leading ``n`` axes of a stacked array."""
    axes = tuple(range(grid.n))
    c = _checker(grid.points, grid.n).reshape(grid.shape + (1,) * (values.ndim - grid.n))
    return grid.cell_x * c * np.fft.fftn(c * values, axes=axes)


# --------------------------------------------------------------------------
# Norms
# --------------------------------------------------------------------------


def _lp(vals: np.ndarray, p: float, cell: float) -> float:
    a = np.abs(vals)
    if np.isinf(p):
        return float(a.max()) if a.size else 0.0
    return float((np.sum(a ** p) * cell) ** (1.0 / p))


def weighted_lp_norm(s: Field, w: Weight | None, p: float) -> float:
    """Riemann sum for ``(int w^p |f|^p)^(1/p)`` (grid maximum for ``p = inf``)."""
    cell = s.grid.cell_xi if s.side == "frequency" else s.grid.cell_x
    wv = 1.0 if w is None else w(s.points())
    return _lp(wv * s.values, p, cell)


def fl_norm(f: Field, w: Weight | None, p: float) -> float:
    """``|| fhat ||_{L^p_w}``."""
    return weighted_lp_norm(dft(f), w, p)


def local_fl_norm(u: Field, phi: Field, w: Weight | None, p: float) -> float:
    """``|| phi u ||_{FL^p_w}`` for a cutoff ``phi`` on the same grid."""
    if phi.grid != u.grid:
        raise GridMismatch("cutoff and field on different grids")
    return fl_norm(phi * u, w, p)


def mixed_norm(F: np.ndarray, kind: str, p: float, q: float, cell: tuple[float, float] = (1.0, 1.0)) -> float:
    """Iterated Lebesgue norm of a table ``F[zeta, eta]``.

    ``L1pq``: inner ``L^p`` over ``zeta`` (axis 0), outer ``L^q`` over
    ``eta``.  ``L2pq``: inner ``L^q`` over ``eta`` (axis 1), outer ``L^p``
    over ``zeta``.  ``cell`` holds the cell volumes along the two axes.
    """
    F = np.abs(np.asarray(F))
    cz, ce = cell
    if kind == "L1pq":
        inner = _axis_lp(F, p, cz, axis=0)
        return _lp(inner, q, ce)
    if kind == "L2pq":
        inner = _axis_lp(F, q, ce, axis=1)
        return _lp(inner, p, cz)
    raise ValueError(f"unknown mixed norm kind {kind!r}")


def _axis_lp(F: np.ndarray, p: float, cell: float, axis: int) -> np.ndarray:
    if np.isinf(p):
        return F.max(axis=axis) if F.size else np.zeros(0)
    return (np.sum(F ** p, axis=axis) * cell) ** (1.0 / p)


def conjugate(p: float) -> float:
    """Hölder conjugate exponent."""
    if p == 1:
        return np.inf
    if np.isinf(p):
        return 1.0
    return p / (p - 1.0)


# --------------------------------------------------------------------------
# Kernel operator
# --------------------------------------------------------------------------


@dataclass
class KernelResult:
    """Output of :func:`kernel_apply` with both sides of the norm bound."""

    spectrum: Spectrum
    lhs: float
    bound: float
    ratio: float
    norms: dict


def _diff_index(grid: GridSpec) -> np.ndarray:
    """Flat index of ``xi_i - eta_j`` on the grid, ``-1`` when outside."""
    N, n = grid.points, grid.n
    k = np.indices(grid.shape).reshape(n, -1).T  # (P, n)
    d = k[:, None, :] - k[None, :, :] + N // 2
    inside = np.all((d >= 0) & (d < N), axis=-1)
    flat = np.ravel_multi_index(tuple(np.clip(d, 0, N - 1).transpose(2, 0, 1)), grid.shape)
    return np.where(inside, flat, -1).astype(np.int64)


def _sample2(F, grid: GridSpec) -> np.ndarray:
    if callable(F):
        xi = grid.xi_mesh().reshape(-1, grid.n)
        return np.asarray(F(xi[:, None, :], xi[None, :, :]), dtype=complex) * np.ones((len(xi), len(xi)))
    return np.asarray(F, dtype=complex)


def kernel_apply(F, f, g: Spectrum, p: float = 2.0) -> KernelResult:
    """``Tg(xi) = int F(xi, eta) f(xi - eta, eta) g(eta) d eta`` on the grid.

    Parameters
    ----------
    F, f : array of shape ``(N^n, N^n)`` or callable ``(xi, eta) -> values``
        ``F[i, j]`` pairs frequency ``i`` with ``eta_j``; ``f[z, j]`` is
        indexed by ``zeta = xi - eta`` and ``eta``.  Terms with ``zeta`` off
        the grid are dropped.
    g : Spectrum
    p : float
        Exponent; ``q`` is its conjugate.

    Returns
    -------
    KernelResult
        The spectrum ``Tg`` with ``lhs = ||Tg||_p`` and
        ``bound = ||f||_{L1^{p,inf}} ||F||_{L2^{inf,q}} ||g||_p``.
    """
    if not isinstance(g, Spectrum):
        raise GridMismatch("kernel_apply expects a Spectrum")
    grid = g.grid
    P = grid.points ** grid.n
    Fa = _sample2(F, grid)
    fa = _sample2(f, grid)
    if Fa.shape != (P, P) or fa.shape != (P, P):
        raise GridMismatch("kernel tables do not match the grid")
    zidx = _diff_index(grid)
    gv = g.values.reshape(-1)
    out = _kernels.kernel_sum(Fa, fa, zidx, gv) * grid.cell_xi
    Tg = Spectrum(grid, out.reshape(grid.shape))
    q = conjugate(p)
    cell = (grid.cell_xi, grid.cell_xi)
    nf = mixed_norm(fa, "L1pq", p, np.inf, cell)
    nF = mixed_norm(Fa, "L2pq", np.inf, q, cell)
    ng = _lp(gv, p, grid.cell_xi)
    lhs = _lp(out, p, grid.cell_xi)
    bound = nf * nF * ng
    ratio = lhs / bound if bound > 0 else (0.0 if lhs == 0 else np.inf)
    return KernelResult(Tg, lhs, bound, float(ratio), {"f_L1": nf, "F_L2": nF, "g": ng})


# --------------------------------------------------------------------------
# Preconditions and IO
# --------------------------------------------------------------------------


def tail_mass(f: Field, frac: float = 0.875) -> tuple[float, float]:
    """Relative ``L^2`` mass of ``f`` near the box edge and of ``fhat`` near the band edge."""
    g = f.grid
    x = np.abs(g.x_mesh())
    s = dft(f)
    xi = np.abs(g.xi_mesh())
    e_x = np.abs(f.values) ** 2
    e_xi = np.abs(s.values) ** 2
    tx = float(e_x[np.any(x > frac * g.extent, axis=-1)].sum() / max(e_x.sum(), 1e-300))
    txi = float(e_xi[np.any(xi > frac * g.xi_max, axis=-1)].sum() / max(e_xi.sum(), 1e-300))
    return tx, txi


def check_band_limited(f: Field, tol: float = 1e-10, frac: float = 0.875) -> bool:
    """True when both tail masses from :func:`tail_mass` are below ``tol``."""
    tx, txi = tail_mass(f, frac)
    return tx < tol and txi < tol


def save_field(path: str | Path, f: Field) -> None:
    """Write the little-endian binary format (magic, n, points, extent, data)."""
    g = f.grid
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IId", g.n, g.points, g.extent))
        fh.write(np.ascontiguousarray(f.values, dtype="<c16").tobytes())


def load_field(path: str | Path, side: str = "space") -> Field:
    """Read a file written by :func:`save_field`."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise GridMismatch("bad magic")
    n, N, L = struct.unpack("<IId", data[4:20])
    g = GridSpec(int(n), float(L), int(N))
    vals = np.frombuffer(data[20:], dtype="<c16")
    if vals.size != N ** n:
        raise GridMismatch("payload size does not match header")
    cls = Spectrum if side == "frequency" else Field
    return cls(g, vals.reshape(g.shape).copy())


def export_csv(path: str | Path, f: Field, axis_index: int | None = None) -> None:
    """Write a 1-D field, or a 2-D field (optionally one row), as CSV."""
    g = f.grid
    pts = f.points()
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        coords = [f"{'xi' if f.side == 'frequency' else 'x'}{j + 1}" for j in range(g.n)]
        wr.writerow(coords + ["re", "im"])
        if g.n == 1:
            rows = zip(pts[:, 0], f.values)
            for x, v in rows:
                wr.writerow([repr(float(x)), repr(float(v.real)), repr(float(v.imag))])
        elif g.n == 2:
            idx = range(g.points) if axis_index is None else [axis_index]
            for i in idx:
                for j in range(g.points):
                    v = f.values[i, j]
                    wr.writerow([repr(float(pts[i, j, 0])), repr(float(pts[i, j, 1])),
                                 repr(float(v.real)), repr(float(v.imag))])
        else:
            raise GridMismatch("CSV export supports n <= 2")


# --------------------------------------------------------------------------
# Smooth cutoffs
# --------------------------------------------------------------------------


def smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for ``t <= 0``, 1 for ``t >= 1``."""
    t = np.asarray(t, dtype=float)

    def h(s):
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)

    a, b = h(t), h(1.0 - t)
    return a / (a + b)


def bump(r: np.ndarray) -> np.ndarray:
    """``exp(-1 / (1 - r^2))`` inside the unit ball, scaled to 1 at the centre."""
    r = np.asarray(r, dtype=float)
    inside = r < 1.0
    with np.errstate(divide="ignore", over="ignore"):
        v = np.where(inside, np.exp(1.0 - 1.0 / (1.0 - np.where(inside, r, 0.0) ** 2)), 0.0)
    return v


def bump_field(grid: GridSpec, center: Sequence[float], radius: float) -> Field:
    """Smooth bump of the given radius centred at ``center``."""
    x = grid.x_mesh()
    r = np.linalg.norm(x - np.asarray(center, dtype=float), axis=-1) / radius
    return Field(grid, bump(r))


def plateau_field(grid: GridSpec, center: Sequence[float], inner: float, outer: float) -> Field:
    """Cutoff equal to 1 on the ball of radius ``inner`` and 0 beyond ``outer``."""
    x = grid.x_mesh()
    r = np.linalg.norm(x - np.asarray(center, dtype=float), axis=-1)
    return Field(grid, 1.0 - smooth_step((r - inner) / (outer - inner)))
