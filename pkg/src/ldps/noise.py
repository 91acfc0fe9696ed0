"""Brownian noise on a grid: i.i.d. Brownian motions, Q-Wiener and cylindrical
processes, and the Brownian sheet (direct and spectral constructions).

Randomness comes from counter-based Philox streams keyed by ``(seed, purpose,
block)``.  Ensembles are cut into fixed blocks of ``BLOCK`` samples, so sample
``s`` of a given seed is the same array no matter how the ensemble is split
across workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .grid import Field, GridSpec

BLOCK = 1024

# stream purposes, part of the determinism contract
STREAM_BM = 1
STREAM_SHEET = 2
STREAM_AUX = 3


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) % 2**64, *[int(k) for k in key]])
    return np.random.Generator(np.random.Philox(ss))


def standard_normals(seed: int, purpose: int, shape: tuple[int, ...], n: int,
                     start: int = 0, threads: int = 1) -> np.ndarray:
    """Samples ``start .. start+n-1`` of an i.i.d. N(0, 1) ensemble of arrays."""
    shape = tuple(int(s) for s in shape)
    stop = start + n
    blocks = range(start // BLOCK, (stop - 1) // BLOCK + 1) if n > 0 else range(0)

    def one(b):
        lo, hi = b * BLOCK, (b + 1) * BLOCK
        block = stream(seed, purpose, b).standard_normal((BLOCK, *shape))
        return block[max(start, lo) - lo: min(stop, hi) - lo]

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(one, blocks))
    else:
        parts = [one(b) for b in blocks]
    if not parts:
        return np.zeros((0, *shape))
    return np.concatenate(parts, axis=0)


@dataclass(frozen=True)
class BasisSpec:
    """Truncated complete orthonormal system on the grid interval.

    Only the sine basis ``phi_k(x) = sqrt(2/L) sin(k pi (x - a) / L)`` is shipped.
    ``lam`` are the Q-Wiener eigenvalues (default ``k^-2``).
    """

    n_modes: int = 32
    kind: str = "sine"
    lam: np.ndarray | None = None
    domain: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if int(self.n_modes) < 1:
            raise ValueError("n_modes must be >= 1")
        if self.kind != "sine":
            raise ValueError(f"unsupported basis kind {self.kind!r}")
        lam = self.lam
        if lam is None:
            lam = 1.0 / np.arange(1, self.n_modes + 1) ** 2
        lam = np.array(lam, dtype=float)
        if lam.shape != (self.n_modes,) or np.any(lam <= 0) or not np.isfinite(lam.sum()):
            raise ValueError("lam must hold n_modes positive values with finite sum")
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, self.n_modes + 1)

    @property
    def length(self) -> float:
        return self.domain[1] - self.domain[0]

    def phi(self, x) -> np.ndarray:
        """Basis values, shape ``(n_modes, len(x))``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        a, L = self.domain[0], self.length
        return np.sqrt(2.0 / L) * np.sin(np.pi * np.outer(self.k, x - a) / L)

    def primitive(self, x) -> np.ndarray:
        """``int_a^x phi_k(y) dy``, shape ``(n_modes, len(x))``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        a, L = self.domain[0], self.length
        kpi = np.pi * self.k[:, None]
        return np.sqrt(2.0 * L) * (1.0 - np.cos(kpi * (x[None, :] - a) / L)) / kpi

    def gram(self, grid: GridSpec) -> np.ndarray:
        P = self.phi(grid.centers)
        return P @ P.T * grid.dx

    def orthonormality_residual(self, grid: GridSpec) -> float:
        return float(np.max(np.abs(self.gram(grid) - np.eye(self.n_modes))))

    def check_on(self, grid: GridSpec, tol: float = 1e-8) -> None:
        if tuple(grid.domain) != tuple(self.domain):
            raise ValueError("basis and grid domains differ")
        res = self.orthonormality_residual(grid)
        if res > tol:
            raise ValueError(
                f"basis with {self.n_modes} modes is not orthonormal on {grid.n_x} cells "
                f"(residual {res:.3g}); use n_modes < n_x")

    def project(self, values, grid: GridSpec) -> np.ndarray:
        """Midpoint-rule coefficients ``<phi_k, f>`` over the last axis."""
        return np.asarray(values, dtype=float) @ (self.phi(grid.centers).T * grid.dx)

    def synthesize(self, coeffs, grid: GridSpec) -> np.ndarray:
        return np.asarray(coeffs, dtype=float) @ self.phi(grid.centers)


@dataclass(frozen=True)
class BmPaths:
    """``N`` independent Brownian paths on the time grid; ``increments[k, i]``
    is the draw over ``(t_i, t_{i+1}]``."""

    increments: np.ndarray
    grid: GridSpec
    seed: int | None = None

    def __post_init__(self):
        inc = np.array(self.increments, dtype=float)
        if inc.ndim != 2 or inc.shape[1] != self.grid.n_t:
            raise ValueError("increments must have shape (n_modes, n_t)")
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @property
    def n_modes(self) -> int:
        return self.increments.shape[0]

    @property
    def paths(self) -> np.ndarray:
        out = np.zeros((self.n_modes, self.grid.n_t + 1))
        out[:, 1:] = np.cumsum(self.increments, axis=1)
        return out

    @classmethod
    def zero(cls, grid: GridSpec, n_modes: int) -> "BmPaths":
        return cls(np.zeros((n_modes, grid.n_t)), grid)

    def __add__(self, other: "BmPaths") -> "BmPaths":
        return BmPaths(self.increments + other.increments, self.grid)

    def scaled(self, c: float) -> "BmPaths":
        return BmPaths(self.increments * c, self.grid)


@dataclass(frozen=True)
class SheetSample:
    """Brownian sheet increments ``dB[i, j]`` over step ``i`` and cell ``j``.

    ``n_modes`` is the truncation level for spectrally assembled sheets and
    ``None`` for sheets drawn directly.
    """

    dB: np.ndarray
    grid: GridSpec
    n_modes: int | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        d = np.array(self.dB, dtype=float)
        if d.shape != (self.grid.n_t, self.grid.n_x):
            raise ValueError(f"sheet increments {d.shape} do not match grid")
        d.setflags(write=False)
        object.__setattr__(self, "dB", d)

    @property
    def values(self) -> np.ndarray:
        """``B(t_i, e_j)`` on times x cell edges, zero on both axes' first line."""
        out = np.zeros((self.grid.n_t + 1, self.grid.n_x + 1))
        out[1:, 1:] = np.cumsum(np.cumsum(self.dB, axis=0), axis=1)
        return out

    def at(self, i: int, j: int) -> float:
        """``B(t_i, e_j)`` with ``e_j`` the j-th cell edge."""
        return float(self.dB[:i, :j].sum())

    def shifted(self, control, scale: float = 1.0) -> "SheetSample":
        """Sheet plus ``scale * Int(u)``, i.e. increments ``dB + scale u dt dx``."""
        extra = np.asarray(control.values) * self.grid.cell_volume * scale
        return SheetSample(self.dB + extra, self.grid, self.n_modes, self.seed)

    @classmethod
    def zero(cls, grid: GridSpec) -> "SheetSample":
        return cls(np.zeros((grid.n_t, grid.n_x)), grid)


def _seed(grid: GridSpec, seed: int | None) -> int:
    return grid.seed if seed is None else int(seed)


def sample_iid_bm_batch(grid: GridSpec, n_modes: int, seed: int | None, n: int,
                        start: int = 0, threads: int = 1) -> np.ndarray:
    """Increments of ``n`` independent BmPaths samples, shape ``(n, n_modes, n_t)``."""
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    z = standard_normals(_seed(grid, seed), STREAM_BM, (n_modes, grid.n_t), n, start, threads)
    return z * np.sqrt(grid.dt)


def sample_iid_bm(grid: GridSpec, n_modes: int, seed: int | None = None,
                  index: int = 0) -> BmPaths:
    s = _seed(grid, seed)
    inc = sample_iid_bm_batch(grid, n_modes, s, 1, start=index)[0]
    return BmPaths(inc, grid, s)


def assemble_q_wiener(bm: BmPaths, basis: BasisSpec) -> Field:
    """``W(t_i, x_j) = sum_k sqrt(lam_k) beta_k(t_i) phi_k(x_j)``."""
    if basis.n_modes > bm.n_modes:
        raise ValueError(f"basis needs {basis.n_modes} modes, paths carry {bm.n_modes}")
    g = bm.grid
    coeffs = bm.paths[: basis.n_modes].T * np.sqrt(basis.lam)
    return Field(coeffs @ basis.phi(g.centers), g, {"kind": "q-wiener"})


def assemble_cylindrical(bm: BmPaths, basis: BasisSpec, h) -> np.ndarray:
    """``B_t(h) = sum_k beta_k(t) <phi_k, h>`` with midpoint inner products."""
    h = np.asarray(h, dtype=float)
    if h.shape != (bm.grid.n_x,):
        raise ValueError(f"h must have shape ({bm.grid.n_x},)")
    if basis.n_modes > bm.n_modes:
        raise ValueError("mode-count mismatch")
    c = basis.project(h, bm.grid)
    return c @ bm.paths[: basis.n_modes]


def spectral_sheet_increments(bm_increments, basis: BasisSpec, grid: GridSpec) -> np.ndarray:
    """Map ``(..., N, n_t)`` Brownian increments to ``(..., n_t, n_x)`` sheet increments."""
    psi = basis.primitive(grid.edges)
    cell = np.diff(psi, axis=1)  # (N, n_x)
    inc = np.asarray(bm_increments, dtype=float)[..., : basis.n_modes, :]
    return np.swapaxes(inc, -1, -2) @ cell


def assemble_sheet_spectral(bm: BmPaths, basis: BasisSpec, grid: GridSpec | None = None,
                            tol: float = 1e-8) -> SheetSample:
    """``B(t, x) = sum_k beta_k(t) int_a^x phi_k``, truncated at ``basis.n_modes``."""
    grid = bm.grid if grid is None else grid
    if grid.n_t != bm.grid.n_t or grid.T != bm.grid.T:
        raise ValueError("time grids of paths and target grid differ")
    if basis.n_modes > bm.n_modes:
        raise ValueError("mode-count mismatch")
    basis.check_on(grid, tol)
    dB = spectral_sheet_increments(bm.increments, basis, grid)
    return SheetSample(dB, grid, basis.n_modes, bm.seed)


def sample_sheet_batch(grid: GridSpec, seed: int | None, n: int, start: int = 0,
                       threads: int = 1) -> np.ndarray:
    """Direct sheet increments for samples ``start..start+n-1``, ``(n, n_t, n_x)``."""
    z = standard_normals(_seed(grid, seed), STREAM_SHEET, (grid.n_t, grid.n_x), n, start, threads)
    return z * np.sqrt(grid.cell_volume)


def sample_sheet_direct(grid: GridSpec, seed: int | None = None, index: int = 0) -> SheetSample:
    """Brownian sheet with i.i.d. N(0, dt dx) cell increments."""
    s = _seed(grid, seed)
    return SheetSample(sample_sheet_batch(grid, s, 1, start=index)[0], grid, None, s)


def sheet_covariance(t: float, x: float, s: float, y: float,
                     domain: tuple[float, float] = (0.0, 1.0), T: float | None = None) -> float:
    """``Cov(B(t, x), B(s, y))``: Lebesgue measure of the overlap of the two
    rectangles ``[0, t] x (a, x]``."""
    a, b = domain
    for tau in (t, s):
        if tau < 0 or (T is not None and tau > T):
            raise ValueError(f"time {tau} outside [0, T]")
    for z in (x, y):
        if z < a or z > b:
            raise ValueError(f"point {z} outside closure of {domain}")
    return min(t, s) * (min(x, y) - a)


def spectral_sheet_covariance(basis: BasisSpec, t: float, x: float, s: float, y: float) -> float:
    """Covariance of the N-mode spectral sheet (exact for the truncated series)."""
    px = basis.primitive([x])[:, 0]
    py = basis.primitive([y])[:, 0]
    return min(t, s) * float(px @ py)


def sheet_truncation_bias(basis: BasisSpec, t: float, x: float, s: float, y: float) -> float:
    """Covariance missed by truncating the spectral sheet at ``basis.n_modes``."""
    return (sheet_covariance(t, x, s, y, basis.domain)
            - spectral_sheet_covariance(basis, t, x, s, y))
