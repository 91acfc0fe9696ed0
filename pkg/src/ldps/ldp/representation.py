"""Numerical check of the variational representation

    -log E exp(-f(beta)) = inf_u E[ 1/2 int |u|^2 ds + f(beta + int u ds) ]

for functionals of the terminal value of finitely many Brownian motions.  The
left side is computed by quadrature (one Brownian motion) or Monte Carlo; the
right side by backward induction over piecewise-constant adapted controls on
a finite lattice, with Gauss-Hermite expectations.

Restricting controls to be constant over each of ``n_steps`` steps makes the
right side an upper bound that only closes as the step count grows.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import RegularGridInterpolator
from scipy.special import logsumexp

from ..grid import GridSpec
from ..noise import BasisSpec, STREAM_AUX, sample_sheet_batch, standard_normals

DEFAULT_CEILING = 2e9


class LatticeTooLarge(ValueError):
    pass


@dataclass
class RepresentationResult:
    lhs: float
    rhs: float
    gap: float
    lhs_method: str
    lhs_stderr: float = 0.0
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "gap": self.gap, "lhs_method": self.lhs_method,
                "lhs_stderr": self.lhs_stderr, "details": self.details}


def gaussian_neg_log_laplace(f: Callable, var: float, breakpoints=()) -> float:
    """``-log E exp(-f(Y))`` for scalar ``Y ~ N(0, var)`` by adaptive quadrature."""
    dens = lambda y: np.exp(-f(y) - y * y / (2 * var)) / np.sqrt(2 * np.pi * var)
    edges = [-np.inf, *sorted(breakpoints), np.inf]
    total = sum(integrate.quad(dens, a, b, limit=400, epsabs=0, epsrel=1e-13)[0]
                for a, b in zip(edges, edges[1:]))
    if not total > 0:
        raise FloatingPointError("quadrature underflow")
    return float(-np.log(total))


def mc_neg_log_laplace(samples_f: np.ndarray) -> tuple[float, float]:
    a = -np.asarray(samples_f, dtype=float)
    n = a.size
    val = -(logsumexp(a) - np.log(n))
    w = np.exp(a - a.max())
    se = w.std(ddof=1) / (w.mean() * np.sqrt(n))
    return float(val), float(se)


def dynamic_programming_value(f: Callable, dim: int, n_steps: int, T: float = 1.0,
                              n_controls: int = 41, gh_order: int = 16, n_state: int = 801,
                              state_sd: float = 8.0, control_sd: float = 4.0,
                              ceiling: float = DEFAULT_CEILING) -> dict:
    """Backward induction ``V_k(x) = min_u [1/2 |u|^2 dt + E V_{k+1}(x + u dt + dW)]``.

    The control lattice spans ``+-control_sd`` noise standard deviations per
    step in each coordinate; the state grid spans ``+-state_sd sqrt(T)`` plus the
    reach of the largest control.
    """
    if dim < 1 or n_steps < 1:
        raise ValueError("dim and n_steps must be >= 1")
    if n_state < 3 or n_controls < 1:
        raise ValueError("state grid needs >= 3 points and lattice >= 1")
    work = float(n_steps) * n_state ** dim * n_controls ** dim * gh_order ** dim
    if work > ceiling:
        raise LatticeTooLarge(f"lattice work {work:.3g} exceeds ceiling {ceiling:.3g}")
    dt = T / n_steps
    umax = control_sd * np.sqrt(dt) / dt
    lattice = np.linspace(-umax, umax, n_controls) if n_controls > 1 else np.zeros(1)
    half = state_sd * np.sqrt(T) + umax * T
    axis = np.linspace(-half, half, n_state)
    z, wq = np.polynomial.hermite.hermgauss(gh_order)
    z = z * np.sqrt(2 * dt)
    wq = wq / np.sqrt(np.pi)

    mesh = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1)  # (n,)*dim + (dim,)
    V = np.asarray(f(mesh), dtype=float)
    nodes = list(itertools.product(range(gh_order), repeat=dim))
    shifts = np.array([[z[i] for i in idx] for idx in nodes])          # (G, dim)
    weights = np.array([np.prod([wq[i] for i in idx]) for idx in nodes])
    policy = None
    for _ in range(n_steps):
        if dim == 1:
            interp = lambda pts, V=V: np.interp(pts[..., 0], axis, V)
        else:
            rgi = RegularGridInterpolator([axis] * dim, V, bounds_error=False, fill_value=None)
            interp = lambda pts, rgi=rgi: rgi(np.clip(pts, -half, half))
        best = np.full(V.shape, np.inf)
        arg = np.zeros(V.shape + (dim,))
        for u in itertools.product(lattice, repeat=dim):
            u = np.array(u)
            pts = mesh[..., None, :] + u * dt + shifts          # (..., G, dim)
            ev = interp(pts) @ weights
            cand = 0.5 * float(u @ u) * dt + ev
            better = cand < best
            best = np.where(better, cand, best)
            arg[better] = u
        V = best
        policy = arg
    origin = tuple([n_state // 2] * dim)
    val = float(V[origin]) if abs(axis[n_state // 2]) < 1e-12 else float(
        RegularGridInterpolator([axis] * dim, V)(np.zeros((1, dim)))[0])
    return {"value": val, "u0": policy[origin].tolist(), "lattice_step": float(lattice[1] - lattice[0])
            if n_controls > 1 else 0.0, "umax": float(umax), "state_half_width": float(half)}


def verify_representation(f: Callable, dim: int = 1, n_steps: int = 4, T: float = 1.0,
                          n_controls: int = 41, gh_order: int = 16, n_mc: int = 200_000,
                          seed: int = 0, breakpoints=(), n_state: int = 801,
                          ceiling: float = DEFAULT_CEILING) -> RepresentationResult:
    """Compare ``-log E exp(-f(beta(T)))`` with the lattice control problem.

    ``f`` takes terminal values with trailing axis ``dim`` and must be bounded.
    One Brownian motion uses quadrature for the left side, more use Monte Carlo.
    """
    dp = dynamic_programming_value(f, dim, n_steps, T, n_controls, gh_order, n_state,
                                   ceiling=ceiling)
    if dim == 1:
        lhs = gaussian_neg_log_laplace(lambda y: float(f(np.array([y]))), T, breakpoints)
        se, method = 0.0, "quadrature"
    else:
        y = standard_normals(seed, STREAM_AUX, (dim,), n_mc) * np.sqrt(T)
        lhs, se = mc_neg_log_laplace(f(y))
        method = "monte-carlo"
    rhs = dp["value"]
    return RepresentationResult(lhs, rhs, abs(lhs - rhs), method, se,
                                {"dim": dim, "n_steps": n_steps, "T": T, "n_controls": n_controls,
                                 "gh_order": gh_order, **dp})


def verify_representation_sheet(g: Callable, grid: GridSpec, mode: int = 1, n_steps: int = 4,
                                n_controls: int = 41, gh_order: int = 16, n_mc: int = 100_000,
                                seed: int = 0, breakpoints=(), n_state: int = 801
                                ) -> RepresentationResult:
    """Sheet functional ``f(B) = g(<phi_mode, B(T, dx)>)``.

    The basis coefficient of the sheet is a standard Brownian motion at time T,
    and a control ``v(t) phi_mode(x)`` shifts it by ``int v`` at cost
    ``1/2 int v^2``, so the problem reduces to one Brownian motion.  The left
    side is estimated from sheet samples and the reduction is checked through
    the coefficient variance.
    """
    basis = BasisSpec(max(mode, 1), domain=grid.domain)
    basis.check_on(grid)
    phi = basis.phi(grid.centers)[mode - 1]
    coef = np.empty(n_mc)
    for lo in range(0, n_mc, 4096):
        hi = min(n_mc, lo + 4096)
        dB = sample_sheet_batch(grid, seed, hi - lo, start=lo)
        coef[lo:hi] = dB.sum(axis=1) @ phi
    lhs_mc, se = mc_neg_log_laplace(g(coef[:, None]))
    one = verify_representation(g, 1, n_steps, grid.T, n_controls, gh_order,
                                breakpoints=breakpoints, n_state=n_state)
    return RepresentationResult(lhs_mc, one.rhs, abs(lhs_mc - one.rhs), "sheet-monte-carlo", se,
                                {"coefficient_variance": float(coef.var(ddof=1)), "T": grid.T,
                                 "lhs_quadrature": one.lhs, "gap_one_bm": one.gap,
                                 "n_steps": n_steps, "n_controls": n_controls})
