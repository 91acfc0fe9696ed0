"""Deterministic controlled (skeleton) equation: global Picard solver and the
small-noise convergence sweep."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import Control, Field, GridSpec
from .io import write_table_csv
from .kernel import KernelModel
from .solver import CoefficientSet, _Stepper, _check_x0, solve_ensemble

INIT_POLICIES = ("zero", "free")


@dataclass(frozen=True)
class PicardConfig:
    max_iters: int = 200
    tol: float = 1e-9
    init: str = "zero"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.init not in INIT_POLICIES:
            raise ValueError(f"init must be one of {INIT_POLICIES}")


@dataclass
class PicardReport:
    iterations: int
    final_gap: float
    gaps: list = field(default_factory=list)
    init: str = "zero"

    @property
    def contraction_ratio(self) -> float:
        """Median ratio of successive gaps after a burn-in of 3 iterations."""
        g = np.array([x for x in self.gaps if x > 0])
        if g.size < 5:
            return 0.0
        ratios = g[4:] / g[3:-1]
        return float(np.median(ratios)) if ratios.size else 0.0


class PicardDivergence(RuntimeError):
    def __init__(self, gaps):
        super().__init__(f"Picard iteration did not converge; last gaps {gaps[-5:]}")
        self.gaps = list(gaps)


def picard_map(st: _Stepper, x0: np.ndarray, prev: np.ndarray, u: np.ndarray | None) -> np.ndarray:
    """One sweep of the integral map over all of [0, T] with R, F read from ``prev``."""
    g = st.grid
    a = st.coeffs(x0)
    out = np.empty((g.n_t + 1, g.n_x))
    out[0] = st.to_grid(a)
    for i in range(g.n_t):
        a = st.decay * a + st.forcing(i, prev[i], 0.0, None, None if u is None else u[i])
        out[i + 1] = st.to_grid(a)
    return out


def free_trajectory(st: _Stepper, x0) -> np.ndarray:
    a0 = st.coeffs(x0)
    n = np.arange(st.grid.n_t + 1)[:, None]
    return (st.decay[None, :] ** n * a0) @ st.phi


def solve_skeleton(k: KernelModel, c: CoefficientSet, x0, u: Control | None,
                   cfg: PicardConfig = PicardConfig(), grid: GridSpec | None = None
                   ) -> tuple[Field, PicardReport]:
    """Fixed point of ``f -> U(., 0) x0 + int G R(f) + int G F(f) u``."""
    grid = grid or (u.grid if u is not None else None)
    if grid is None:
        raise ValueError("grid required when no control is given")
    x0 = _check_x0(x0, grid)
    st = _Stepper(k, c, grid)
    uv = None if u is None or not np.any(u.values) else u.values
    cur = np.zeros((grid.n_t + 1, grid.n_x)) if cfg.init == "zero" else free_trajectory(st, x0)
    gaps = []
    for it in range(1, cfg.max_iters + 1):
        nxt = picard_map(st, x0, cur, uv)
        gap = float(np.max(np.abs(nxt - cur)))
        gaps.append(gap)
        cur = nxt
        if gap < cfg.tol:
            rep = PicardReport(it, gap, gaps, cfg.init)
            return Field(cur, grid, {"eps": 0.0, "picard_iterations": it}), rep
    raise PicardDivergence(gaps)


@dataclass
class SweepRow:
    eps: float
    q50: float
    q90: float
    n_seeds: int


def convergence_sweep(k: KernelModel, c: CoefficientSet, x0, u: Control | None, grid: GridSpec,
                      eps_list, n_seeds: int, seed: int,
                      theta: Callable[[float], float] = lambda e: e,
                      x_eps: Callable[[float], np.ndarray] | None = None,
                      u_eps: Callable[[float], Control | None] | None = None,
                      cfg: PicardConfig = PicardConfig(), threads: int = 1) -> list[SweepRow]:
    """Sup-distance quantiles between controlled solutions at noise level
    ``theta(eps)`` (with ``x_eps(eps)``, ``u_eps(eps)``) and the skeleton at
    ``(x0, u)``.  All eps levels share the same sheet samples."""
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps list must be strictly decreasing")
    limit, _ = solve_skeleton(k, c, x0, u, cfg, grid)
    rows = []
    for eps in eps_list:
        xe = x0 if x_eps is None else x_eps(eps)
        ue = u if u_eps is None else u_eps(eps)
        th = float(theta(eps))
        if th == 0.0:
            f, _ = solve_skeleton(k, c, xe, ue, cfg, grid)
            d = np.full(n_seeds, limit.distance(f))
        else:
            X = solve_ensemble(k, c, th, xe, grid, seed, n_seeds, ue, threads=threads)
            d = np.max(np.abs(X - limit.values[None]), axis=(1, 2))
        rows.append(SweepRow(eps, float(np.quantile(d, 0.5)), float(np.quantile(d, 0.9)), n_seeds))
    return rows


def write_sweep_csv(path, rows: list[SweepRow]) -> None:
    write_table_csv(path, ["eps", "q50", "q90", "n_seeds"],
                    [(r.eps, r.q50, r.q90, r.n_seeds) for r in rows])
