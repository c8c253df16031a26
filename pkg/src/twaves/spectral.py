"""Periodic grids, Fourier multipliers, and the NLSF field container format.

All fields live on uniform tensor grids with periodic boundary conditions.
Coordinates are centered, x_i in [-L_i/2, L_i/2), and wavenumbers follow the
usual 2*pi*fftfreq convention.  Transforms go through scipy.fft so the
worker count can be steered with the TWAVES_THREADS environment variable.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import (
    NonRealResult,
    NotZeroMean,
    SizeMismatch,
)

_NLSF_MAGIC = b"NLSF"
_NLSF_VERSION = 1


def _workers():
    try:
        n = int(os.environ.get("TWAVES_THREADS", "1"))
    except ValueError:
        n = 1
    return max(n, 1)


def fftn(values):
    return sfft.fftn(values, workers=_workers())


def ifftn(values):
    return sfft.ifftn(values, workers=_workers())


@dataclass(frozen=True)
class Grid:
    """Uniform periodic tensor grid: per-axis sample counts and box lengths."""

    sizes: tuple
    lengths: tuple

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))
        object.__setattr__(self, "lengths", tuple(float(L) for L in self.lengths))
        if len(self.sizes) != len(self.lengths):
            raise SizeMismatch("sizes and lengths must have equal rank")
        if any(n < 2 for n in self.sizes):
            raise SizeMismatch("grids need at least 2 points per axis")
        if any(L <= 0 for L in self.lengths):
            raise SizeMismatch("box lengths must be positive")

    @property
    def ndim(self) -> int:
        return len(self.sizes)

    @property
    def spacing(self) -> tuple:
        return tuple(L / n for L, n in zip(self.lengths, self.sizes))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis_coords(self, axis: int) -> np.ndarray:
        n = self.sizes[axis]
        h = self.lengths[axis] / n
        return (np.arange(n) - n // 2) * h

    def axis_wavenumbers(self, axis: int) -> np.ndarray:
        n = self.sizes[axis]
        return 2.0 * np.pi * sfft.fftfreq(n, d=self.lengths[axis] / n)

    @cached_property
    def coord_meshes(self):
        axes = [self.axis_coords(i) for i in range(self.ndim)]
        return np.meshgrid(*axes, indexing="ij", sparse=True)

    @cached_property
    def wavenumber_meshes(self):
        ks = [self.axis_wavenumbers(i) for i in range(self.ndim)]
        return np.meshgrid(*ks, indexing="ij", sparse=True)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds rule mask, True on retained modes."""
        mask = np.ones(self.sizes, dtype=bool)
        for axis, n in enumerate(self.sizes):
            idx = np.abs(sfft.fftfreq(n, d=1.0 / n))
            keep = idx < n / 3.0
            shape = [1] * self.ndim
            shape[axis] = n
            mask &= keep.reshape(shape)
        return mask

    def check(self, values: np.ndarray):
        if tuple(values.shape) != self.sizes:
            raise SizeMismatch(
                f"field shape {values.shape} does not match grid {self.sizes}")

    def integrate(self, values: np.ndarray) -> float:
        self.check(values)
        return float(np.sum(values).real * self.cell_volume)


def slow_grid(grid: Grid, eps: float) -> Grid:
    """Same samples in long-wave coordinates: z1 = eps*x1, zperp = eps^2*xperp."""
    scales = [eps] + [eps**2] * (grid.ndim - 1)
    return Grid(grid.sizes, tuple(L * s for L, s in zip(grid.lengths, scales)))


def box_auto(eps: float, ndim: int, l1: float = 60.0, lperp: float = 120.0) -> tuple:
    """Physical box lengths whose slow-variable image is (l1, lperp, ...)."""
    return tuple([l1 / eps] + [lperp / eps**2] * (ndim - 1))


def apply_multiplier(values: np.ndarray, grid: Grid, symbol, real_tol: float = 1e-12):
    """Apply a Fourier multiplier.  symbol is an ndarray over the grid's
    wavenumbers or a callable taking the meshed wavenumber arrays.

    Real input must come back real: if the inverse transform carries an
    imaginary residue above real_tol (relative to the result's scale) the
    multiplier is not conjugate-symmetric and NonRealResult is raised.
    """
    grid.check(values)
    sym = symbol(*grid.wavenumber_meshes) if callable(symbol) else symbol
    out = ifftn(fftn(values) * sym)
    if np.isrealobj(values):
        scale = max(float(np.max(np.abs(out))), 1.0)
        resid = float(np.max(np.abs(out.imag)))
        if resid > real_tol * scale:
            raise NonRealResult(
                f"imaginary residue {resid:.3e} exceeds {real_tol:.1e} * scale")
        return out.real
    return out


def deriv(values: np.ndarray, grid: Grid, axis: int, order: int = 1):
    """Spectral derivative along one axis."""
    k = grid.wavenumber_meshes[axis]
    sym = (1j * k) ** order
    if order % 2 == 0:
        sym = sym.real
    out = ifftn(fftn(values) * sym)
    return out.real if np.isrealobj(values) else out


def laplacian(values: np.ndarray, grid: Grid):
    ks = grid.wavenumber_meshes
    sym = -sum(k**2 for k in ks)
    out = ifftn(fftn(values) * sym)
    return out.real if np.isrealobj(values) else out


def inv_dz1(values: np.ndarray, grid: Grid, mean_tol: float = 1e-10):
    """Antiderivative along the first axis of a field with zero line means.

    Every line x1 -> f(x1, xperp) must average to zero (tolerance relative
    to the field's sup norm), otherwise the inverse is ill-defined on the
    torus and NotZeroMean is raised.
    """
    grid.check(values)
    line_means = np.mean(values, axis=0)
    scale = max(float(np.max(np.abs(values))), 1.0)
    worst = float(np.max(np.abs(line_means)))
    if worst > mean_tol * scale:
        raise NotZeroMean(
            f"line mean {worst:.3e} exceeds {mean_tol:.1e} * scale")
    k1 = grid.wavenumber_meshes[0]
    sym = np.zeros_like(k1)
    nz = k1 != 0
    sym = np.where(nz, 1.0, 0.0) / np.where(nz, 1j * k1, 1.0)
    sym = np.where(nz, sym, 0.0)
    out = ifftn(fftn(values) * sym)
    return out.real if np.isrealobj(values) else out


def dealias_product(a: np.ndarray, b: np.ndarray, grid: Grid):
    """Pointwise product with the 2/3-rule projection applied afterwards."""
    prod = a * b
    out = ifftn(fftn(prod) * grid.dealias_mask)
    if np.isrealobj(a) and np.isrealobj(b):
        return out.real
    return out


def parseval_gap(values: np.ndarray, grid: Grid) -> float:
    """Relative mismatch between physical and Fourier quadratic sums."""
    grid.check(values)
    phys = float(np.sum(np.abs(values) ** 2))
    four = float(np.sum(np.abs(fftn(values)) ** 2)) / values.size
    return abs(phys - four) / max(phys, 1e-300)


# --- long-wave kernel symbols ---

def kernel_denominator(grid: Grid, eps: float, cs: float):
    """Denominator of the long-wave solution kernels on the slow grid.

    D(xi) = xi1^4 + xi1^2 + cs^2 |xiperp|^2 + 2 eps^2 xi1^2 |xiperp|^2
            + eps^4 |xiperp|^4
    """
    ks = grid.wavenumber_meshes
    k1sq = ks[0] ** 2
    kpsq = sum(k**2 for k in ks[1:]) if grid.ndim > 1 else 0.0
    return (k1sq**2 + k1sq + cs**2 * kpsq
            + 2.0 * eps**2 * k1sq * kpsq + eps**4 * kpsq**2)


def kernel_symbol(grid: Grid, eps: float, cs: float, which: str, j: int = 1):
    """One of the solution kernels: numerator over kernel_denominator.

    which = "first": xi1^2, "perp": |xiperp|^2, "cross": xi1*xi_j (j >= 1
    indexes a transverse axis).  The zero mode is set to 0.
    """
    ks = grid.wavenumber_meshes
    den = kernel_denominator(grid, eps, cs)
    if which == "first":
        num = ks[0] ** 2
    elif which == "perp":
        num = sum(k**2 for k in ks[1:]) if grid.ndim > 1 else np.zeros_like(den)
    elif which == "cross":
        if not 1 <= j < grid.ndim:
            raise SizeMismatch(f"cross kernel needs a transverse axis, got j={j}")
        num = ks[0] * ks[j]
    else:
        raise ValueError(f"unknown kernel {which!r}")
    sym = np.zeros(np.broadcast_shapes(np.shape(num), den.shape))
    nz = den > 0
    np.divide(np.broadcast_to(num, sym.shape), den, out=sym, where=nz)
    return sym


def kernel_convolve(values: np.ndarray, grid: Grid, eps: float, cs: float,
                    which: str, j: int = 1):
    return apply_multiplier(values, grid, kernel_symbol(grid, eps, cs, which, j))


def kernel_bounds(grid: Grid, eps: float, cs: float) -> dict:
    """Grid maxima of the scaled kernel symbols next to their analytic caps.

    Returns {name: (max_on_grid, bound)}.  The caps are
      xi1^2 / D <= 1
      eps^2 |xiperp|^2 / D <= max(eps^2 / cs^2, 1)
      eps^2 |xi1 xi_j| / D <= 1
    """
    out = {}
    first = kernel_symbol(grid, eps, cs, "first")
    out["first"] = (float(np.max(first)), 1.0)
    if grid.ndim > 1:
        perp = kernel_symbol(grid, eps, cs, "perp")
        out["perp"] = (float(np.max(eps**2 * perp)),
                       max(eps**2 / cs**2, 1.0))
        worst = 0.0
        for j in range(1, grid.ndim):
            cross = kernel_symbol(grid, eps, cs, "cross", j)
            worst = max(worst, float(np.max(eps**2 * np.abs(cross))))
        out["cross"] = (worst, 1.0)
    return out


# --- NLSF container format ---

def write_nlsf(path, values: np.ndarray, grid: Grid):
    """Write a field to the NLSF binary container.

    Layout (little endian): magic "NLSF", u32 version, u8 ndim, u8 scalar
    kind (0 = float64, 1 = complex128 stored as interleaved float64 pairs),
    then per axis u64 size + f64 length, then the raw samples row-major.
    """
    grid.check(values)
    if np.isrealobj(values):
        kind = 0
        payload = np.ascontiguousarray(values, dtype="<f8")
    else:
        kind = 1
        payload = np.ascontiguousarray(values, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(_NLSF_MAGIC)
        fh.write(struct.pack("<IBB", _NLSF_VERSION, grid.ndim, kind))
        for n, L in zip(grid.sizes, grid.lengths):
            fh.write(struct.pack("<Qd", n, L))
        fh.write(payload.tobytes())


def read_nlsf(path):
    """Read a field written by write_nlsf.  Returns (values, grid)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _NLSF_MAGIC:
        raise SizeMismatch("not an NLSF container (bad magic)")
    version, ndim, kind = struct.unpack_from("<IBB", blob, 4)
    if version != _NLSF_VERSION:
        raise SizeMismatch(f"unsupported NLSF version {version}")
    off = 10
    sizes, lengths = [], []
    for _ in range(ndim):
        n, L = struct.unpack_from("<Qd", blob, off)
        sizes.append(int(n))
        lengths.append(float(L))
        off += 16
    grid = Grid(tuple(sizes), tuple(lengths))
    count = int(np.prod(sizes))
    dtype = "<f8" if kind == 0 else "<c16"
    values = np.frombuffer(blob, dtype=dtype, count=count, offset=off)
    if values.size != count:
        raise SizeMismatch("NLSF payload truncated")
    return values.reshape(grid.sizes).copy(), grid
