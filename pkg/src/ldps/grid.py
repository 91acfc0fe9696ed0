"""Space-time grids, fields and controls on [0, T] x (a, b)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Uniform discretization of ``[0, T] x O`` with O an interval (d = 1).

    Time points are ``t_i = i * T / n_t``; space is cut into ``n_x`` equal
    cells, and fields live at the cell centers.
    """

    T: float
    n_t: int
    n_x: int
    seed: int = 0
    domain: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if int(self.n_t) < 1:
            raise ValueError(f"n_t must be >= 1, got {self.n_t}")
        if int(self.n_x) < 1:
            raise ValueError(f"n_x must be >= 1, got {self.n_x}")
        a, b = self.domain
        if not b > a:
            raise ValueError(f"empty domain {self.domain}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")

    @property
    def dt(self) -> float:
        return self.T / self.n_t

    @property
    def dx(self) -> float:
        a, b = self.domain
        return (b - a) / self.n_x

    @property
    def cell_volume(self) -> float:
        return self.dt * self.dx

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_t + 1)

    @property
    def edges(self) -> np.ndarray:
        a, b = self.domain
        return np.linspace(a, b, self.n_x + 1)

    @property
    def centers(self) -> np.ndarray:
        a, _ = self.domain
        return a + (np.arange(self.n_x) + 0.5) * self.dx

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.T, self.n_t * factor, self.n_x * factor, self.seed, self.domain)

    def with_seed(self, seed: int) -> "GridSpec":
        return GridSpec(self.T, self.n_t, self.n_x, seed, self.domain)


def holder_seminorm_1d(values, points, alpha: float) -> float:
    """Discrete alpha-Holder seminorm of ``values`` sampled at ``points``."""
    v = np.asarray(values, dtype=float)
    p = np.asarray(points, dtype=float)
    if v.size < 2:
        return 0.0
    dv = np.abs(v[:, None] - v[None, :])
    dp = np.abs(p[:, None] - p[None, :])
    mask = (dp > 0) & (dp < 1)
    if not mask.any():
        return 0.0
    return float(np.max(dv[mask] / dp[mask] ** alpha))


def holder_seminorm_st(values, times, points, alpha: float, chunk: int = 256) -> float:
    """Space-time seminorm over all grid pairs at Euclidean distance < 1."""
    v = np.asarray(values, dtype=float)
    tt, rr = np.meshgrid(times, points, indexing="ij")
    coords = np.stack([tt.ravel(), rr.ravel()], axis=1)
    flat = v.ravel()
    best = 0.0
    for start in range(0, flat.size, chunk):
        # pairs with the partner at or after the chunk start cover every unordered pair
        c = coords[start:start + chunk]
        d = np.sqrt(((c[:, None, :] - coords[None, start:, :]) ** 2).sum(-1))
        dv = np.abs(flat[start:start + chunk, None] - flat[None, start:])
        mask = (d > 0) & (d < 1)
        if mask.any():
            best = max(best, float(np.max(dv[mask] / d[mask] ** alpha)))
    return best


@dataclass(frozen=True)
class Field:
    """Values ``X(t_i, r_j)`` for ``i = 0..n_t`` at the cell centers."""

    values: np.ndarray
    grid: GridSpec
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_t + 1, self.grid.n_x):
            raise ValueError(
                f"field shape {v.shape} does not match grid "
                f"({self.grid.n_t + 1}, {self.grid.n_x})")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def at(self, i: int) -> np.ndarray:
        return self.values[i]

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def holder_seminorm(self, alpha: float, space_time: bool = False) -> float:
        g = self.grid
        if space_time:
            return holder_seminorm_st(self.values, g.times, g.centers, alpha)
        return max(holder_seminorm_1d(row, g.centers, alpha) for row in self.values)

    def holder_norm(self, alpha: float, space_time: bool = False) -> float:
        """``||X||_0`` plus the alpha-seminorm (spatial, sup over t, or space-time)."""
        return self.sup_norm() + self.holder_seminorm(alpha, space_time)

    def distance(self, other: "Field") -> float:
        return float(np.max(np.abs(self.values - other.values)))


@dataclass(frozen=True)
class Control:
    """Square-integrable control ``u(t_i, r_j)`` on the step/cell lattice.

    Row ``i`` acts on ``(t_i, t_{i+1}]``, so ``values`` has shape ``(n_t, n_x)``.
    ``bound`` is the L^2 budget M; construction fails if the control exceeds it.
    """

    values: np.ndarray
    grid: GridSpec
    bound: float | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_t, self.grid.n_x):
            raise ValueError(
                f"control shape {v.shape} does not match ({self.grid.n_t}, {self.grid.n_x})")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.bound is not None and self.norm_sq > self.bound * (1 + 1e-12):
            raise ValueError(f"control L2 norm^2 {self.norm_sq:.6g} exceeds bound {self.bound}")

    @classmethod
    def zero(cls, grid: GridSpec) -> "Control":
        return cls(np.zeros((grid.n_t, grid.n_x)), grid)

    @classmethod
    def from_function(cls, grid: GridSpec, fn, bound: float | None = None) -> "Control":
        """Evaluate ``fn(t, r)`` at left step endpoints and cell centers."""
        t = grid.times[:-1][:, None]
        r = grid.centers[None, :]
        vals = np.broadcast_to(np.asarray(fn(t, r), dtype=float), (grid.n_t, grid.n_x))
        return cls(np.array(vals), grid, bound)

    @property
    def norm_sq(self) -> float:
        return float(np.sum(self.values ** 2) * self.grid.cell_volume)

    @property
    def action(self) -> float:
        return 0.5 * self.norm_sq

    def integrated(self) -> np.ndarray:
        """``Int(u)(t_i, x_j) = int_0^t int_{(-inf, x]} u``, on the (n_t+1, n_x+1) lattice."""
        inc = self.values * self.grid.cell_volume
        out = np.zeros((self.grid.n_t + 1, self.grid.n_x + 1))
        out[1:, 1:] = np.cumsum(np.cumsum(inc, axis=0), axis=1)
        return out

    def scaled(self, c: float) -> "Control":
        return Control(self.values * c, self.grid)

    def __add__(self, other: "Control") -> "Control":
        return Control(self.values + other.values, self.grid)
