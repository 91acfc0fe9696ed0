"""Walsh stochastic integrals against a grid Brownian sheet."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridSpec
from .io import write_table_csv
from .noise import SheetSample


class AdaptednessError(ValueError):
    """Integrand row uses noise from its own step or later."""


@dataclass(frozen=True)
class PredictableIntegrand:
    """Grid integrand; row ``i`` is the value on ``(t_i, t_{i+1}]``.

    ``known_through[i]`` counts the sheet steps row ``i`` was computed from;
    predictability requires ``known_through[i] <= i``.
    """

    values: np.ndarray
    grid: GridSpec
    deterministic: bool = True
    known_through: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        g = self.grid
        if v.shape != (g.n_t, g.n_x):
            raise ValueError(f"integrand shape {v.shape} != ({g.n_t}, {g.n_x})")
        if not np.all(np.isfinite(v)):
            raise ValueError("integrand must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        kt = self.known_through
        if kt is None:
            kt = np.zeros(g.n_t, int) if self.deterministic else np.arange(g.n_t)
        kt = np.asarray(kt, dtype=int)
        if kt.shape != (g.n_t,):
            raise ValueError("known_through must have one entry per time step")
        object.__setattr__(self, "known_through", kt)

    @property
    def adapted(self) -> bool:
        return bool(np.all(self.known_through <= np.arange(self.grid.n_t)))

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "PredictableIntegrand":
        """Deterministic integrand ``fn(t, x)`` at left endpoints and cell centers."""
        t = grid.times[:-1][:, None]
        x = grid.centers[None, :]
        vals = np.broadcast_to(np.asarray(fn(t, x), dtype=float), (grid.n_t, grid.n_x))
        return cls(np.array(vals), grid, True)

    @classmethod
    def elementary(cls, grid: GridSpec, X: float, a: float, b: float,
                   A: tuple[float, float]) -> "PredictableIntegrand":
        """``X 1_{(a, b]}(s) 1_A(x)`` with ``a, b`` snapped to the time grid."""
        t = grid.times[:-1]
        rows = (t >= a - 1e-12) & (t < b - 1e-12)
        x = grid.centers
        cols = (x > A[0]) & (x <= A[1])
        return cls(X * np.outer(rows, cols).astype(float), grid, True)

    @classmethod
    def from_rule(cls, sheet: SheetSample, rule) -> "PredictableIntegrand":
        """Path-dependent integrand: row ``i = rule(i, history)`` where ``history``
        is a read-only view of the sheet increments of steps ``0..i-1``."""
        g = sheet.grid
        rows = np.empty((g.n_t, g.n_x))
        for i in range(g.n_t):
            hist = sheet.dB[:i]
            rows[i] = rule(i, hist)
        return cls(rows, g, False, np.arange(g.n_t))

    @classmethod
    def from_states(cls, states: np.ndarray, grid: GridSpec, fn=None,
                    lag: int = 0) -> "PredictableIntegrand":
        """Integrand built from solver states ``X(t_i)`` (which use steps ``< i``).

        ``lag = 1`` would read ``X(t_{i+1})`` on step ``i`` and is rejected by
        :func:`walsh_integrate`.
        """
        s = np.asarray(states, dtype=float)
        idx = np.arange(grid.n_t) + lag
        rows = s[idx] if fn is None else fn(s[idx])
        return cls(rows, grid, False, idx)


def _check(f: PredictableIntegrand, grid: GridSpec) -> None:
    if (f.grid.n_t, f.grid.n_x, f.grid.T, f.grid.domain) != (grid.n_t, grid.n_x, grid.T, grid.domain):
        raise ValueError("integrand and sheet live on different grids")
    if not f.adapted:
        bad = int(np.argmax(f.known_through > np.arange(f.grid.n_t)))
        raise AdaptednessError(f"integrand row {bad} depends on noise of step {bad} or later")


def walsh_integrate(f: PredictableIntegrand, B: SheetSample) -> np.ndarray:
    """``M_{t_k}(f) = sum_{i<k} sum_j f(t_i, x_j) dB[i, j]``; returns ``k = 0..n_t``."""
    _check(f, B.grid)
    out = np.zeros(B.grid.n_t + 1)
    out[1:] = np.cumsum(np.sum(f.values * B.dB, axis=1))
    return out


def walsh_integrate_batch(values, dB) -> np.ndarray:
    """Terminal values ``M_T`` for stacked integrands/increments ``(n, n_t, n_x)``.

    Rows must already satisfy the left-endpoint convention.
    """
    return np.einsum("...ij,...ij->...", values, dB)


def quadratic_variation(f: PredictableIntegrand) -> np.ndarray:
    """Running ``sum f^2 dt dx``, starting at 0."""
    out = np.zeros(f.grid.n_t + 1)
    out[1:] = np.cumsum(np.sum(f.values ** 2, axis=1)) * f.grid.cell_volume
    return out


def qv_refinement(fn, grid: GridSpec, levels: int = 3) -> list[float]:
    """Terminal quadratic variation of ``fn`` on successively doubled grids."""
    out = []
    g = grid
    for _ in range(levels):
        out.append(float(quadratic_variation(PredictableIntegrand.from_function(g, fn))[-1]))
        g = g.refined(2)
    return out


def dump_diagnostics(path, f: PredictableIntegrand, B: SheetSample) -> None:
    """CSV with columns ``t, M_t, QV_t``."""
    m = walsh_integrate(f, B)
    qv = quadratic_variation(f)
    write_table_csv(path, ["t", "M_t", "QV_t"], zip(B.grid.times, m, qv))
