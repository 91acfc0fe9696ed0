"""Mild-solution time steppers for the stochastic reaction-diffusion equation,
its controlled version, and finite-dimensional SDEs, plus moment and Holder
diagnostics.

The SPDE state is kept as coefficients on the kernel basis.  One step is

    a <- exp(-mu dt) a + dt * drift_w * <phi, R(X)>
                       + noise_w * (sqrt(eps) <phi, F(X) dB> + <phi, F(X) u dt dx>)

with R, F and u frozen at the left endpoint (see ``KernelModel.step_weights``).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import Control, Field, GridSpec
from .kernel import KernelModel
from .noise import BLOCK, BmPaths, SheetSample, sample_sheet_batch, stream, STREAM_AUX

DEFAULT_CEILING = 1e6


class BlowUpError(RuntimeError):
    def __init__(self, step: int, norm: float, ceiling: float):
        super().__init__(f"sup-norm {norm:.3g} exceeded ceiling {ceiling:.3g} at step {step}")
        self.step = step
        self.norm = norm
        self.ceiling = ceiling


def _fd_derivative(fn, t, r, x, h=1e-6):
    return (fn(t, r, x + h) - fn(t, r, x - h)) / (2 * h)


@dataclass(frozen=True)
class CoefficientSet:
    """Reaction ``R(t, r, x)`` and diffusion ``F(t, r, x)``, vectorized in ``x``.

    ``K_T`` is the declared Lipschitz constant (sum of both) and ``growth`` the
    declared linear-growth constant.  ``dR``/``dF`` are optional x-derivatives.
    """

    R: Callable
    F: Callable
    K_T: float
    growth: float
    dR: Callable | None = None
    dF: Callable | None = None
    F_is_constant: bool = False
    name: str = "custom"

    def dR_dx(self, t, r, x):
        return self.dR(t, r, x) if self.dR is not None else _fd_derivative(self.R, t, r, x)

    def dF_dx(self, t, r, x):
        if self.F_is_constant:
            return np.zeros_like(x)
        return self.dF(t, r, x) if self.dF is not None else _fd_derivative(self.F, t, r, x)

    def lipschitz_probe(self, box: float = 10.0, n: int = 20000, seed: int = 0) -> float:
        """Largest ``(|dR| + |dF|) / |dx|`` seen on random pairs in ``[-box, box]``."""
        g = stream(seed, STREAM_AUX, 0)
        x = g.uniform(-box, box, n)
        y = x + g.normal(0, 1, n) * 10 ** g.uniform(-6, 0, n)
        t = g.uniform(0, 1, n)
        r = g.uniform(0, 1, n)
        num = np.abs(self.R(t, r, x) - self.R(t, r, y)) + np.abs(self.F(t, r, x) - self.F(t, r, y))
        return float(np.max(num / np.abs(x - y)))

    def growth_probe(self, box: float = 100.0, n: int = 20000, seed: int = 1) -> float:
        """Largest ``(|R| + |F|) / (1 + |x|)`` on random points."""
        g = stream(seed, STREAM_AUX, 1)
        x = g.uniform(-box, box, n)
        t = g.uniform(0, 1, n)
        r = g.uniform(0, 1, n)
        return float(np.max((np.abs(self.R(t, r, x)) + np.abs(self.F(t, r, x))) / (1 + np.abs(x))))

    def validate(self, slack: float = 1e-6) -> None:
        lip = self.lipschitz_probe()
        if lip > self.K_T * (1 + slack):
            raise ValueError(f"{self.name}: Lipschitz probe {lip:.6g} exceeds declared K(T) {self.K_T}")
        gr = self.growth_probe()
        if gr > self.growth * (1 + slack):
            raise ValueError(f"{self.name}: growth probe {gr:.6g} exceeds declared {self.growth}")


@dataclass(frozen=True)
class FdModel:
    """Finite-dimensional SDE ``dX = b(X) dt + theta a(X) dW + a(X) u dt``.

    ``b`` maps ``(..., k) -> (..., k)`` and ``a`` maps ``(..., k) -> (..., k, k)``.
    """

    dim: int
    b: Callable
    a: Callable
    a_invertible: bool = True
    db: Callable | None = None
    da: Callable | None = None
    K_T: float = 1.0
    name: str = "fd"

    def b_jac(self, x):
        if self.db is not None:
            return self.db(x)
        h = 1e-6
        eye = np.eye(self.dim)
        cols = [(self.b(x + h * e) - self.b(x - h * e)) / (2 * h) for e in eye]
        return np.stack(cols, axis=-1)

    def a_jac(self, x):
        """``d a_{ij} / d x_l`` with shape ``(..., k, k, k)``."""
        if self.da is not None:
            return self.da(x)
        h = 1e-6
        eye = np.eye(self.dim)
        cols = [(self.a(x + h * e) - self.a(x - h * e)) / (2 * h) for e in eye]
        return np.stack(cols, axis=-1)

    def lipschitz_probe(self, box: float = 10.0, n: int = 5000, seed: int = 0) -> float:
        g = stream(seed, STREAM_AUX, 2)
        x = g.uniform(-box, box, (n, self.dim))
        y = x + g.normal(0, 1e-2, (n, self.dim))
        num = (np.linalg.norm(self.b(x) - self.b(y), axis=-1)
               + np.linalg.norm(self.a(x) - self.a(y), axis=(-2, -1)))
        return float(np.max(num / np.linalg.norm(x - y, axis=-1)))


class _Stepper:
    """Spectral exponential stepper shared by the SPDE solvers and the skeleton."""

    def __init__(self, k: KernelModel, c: CoefficientSet, grid: GridSpec):
        k.basis.check_on(grid)
        self.k, self.c, self.grid = k, c, grid
        self.phi = k.basis.phi(grid.centers)          # (N, n_x)
        self.proj = self.phi.T * grid.dx              # (n_x, N): grid values -> coefficients
        self.decay, self.drift_w, self.noise_w = k.step_weights(grid.dt)
        self.r = grid.centers

    def coeffs(self, x0) -> np.ndarray:
        return np.asarray(x0, dtype=float) @ self.proj

    def to_grid(self, a) -> np.ndarray:
        return a @ self.phi

    def forcing(self, i, X, eps=0.0, dB_i=None, u_i=None) -> np.ndarray:
        """Modal increment added on step ``i`` given the left-endpoint state ``X``."""
        g = self.grid
        t = g.times[i]
        out = (self.c.R(t, self.r, X) @ self.proj) * (g.dt * self.drift_w)
        stoch = None
        if (dB_i is not None and eps > 0) or u_i is not None:
            Fx = self.c.F(t, self.r, X)
            stoch = 0.0
            if dB_i is not None and eps > 0:
                stoch = stoch + np.sqrt(eps) * (Fx * dB_i) @ self.phi.T
            if u_i is not None:
                stoch = stoch + (Fx * u_i) @ self.phi.T * g.cell_volume
            out = out + stoch * self.noise_w
        return out

    def march(self, x0, eps=0.0, dB=None, u=None, ceiling=DEFAULT_CEILING) -> np.ndarray:
        """Grid states ``(..., n_t + 1, n_x)``; ``dB`` may carry leading batch axes."""
        g = self.grid
        a = self.coeffs(x0)
        lead = () if dB is None else np.shape(dB)[:-2]
        a = np.broadcast_to(a, (*lead, self.k.n_modes)).copy()
        out = np.empty((*lead, g.n_t + 1, g.n_x))
        X = self.to_grid(a)
        out[..., 0, :] = X
        for i in range(g.n_t):
            dB_i = None if dB is None else dB[..., i, :]
            u_i = None if u is None else u[i]
            a = self.decay * a + self.forcing(i, X, eps, dB_i, u_i)
            X = self.to_grid(a)
            norm = float(np.max(np.abs(X))) if X.size else 0.0
            if not np.isfinite(norm) or norm > ceiling:
                raise BlowUpError(i + 1, norm, ceiling)
            out[..., i + 1, :] = X
        return out


def _check_x0(x0, grid: GridSpec) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (grid.n_x,):
        raise ValueError(f"initial condition must have shape ({grid.n_x},)")
    return x0


def solve_spde(k: KernelModel, c: CoefficientSet, eps: float, x0, B: SheetSample | None,
               grid: GridSpec | None = None, ceiling: float = DEFAULT_CEILING) -> Field:
    """Mild solution driven by ``sqrt(eps) F B(dq ds)``; ``B`` may be None when eps = 0."""
    return solve_controlled_spde(k, c, eps, x0, B, None, grid, ceiling)


def solve_controlled_spde(k: KernelModel, c: CoefficientSet, eps: float, x0, B: SheetSample | None,
                          u: Control | None, grid: GridSpec | None = None,
                          ceiling: float = DEFAULT_CEILING) -> Field:
    """Controlled mild solution: ``solve_spde`` plus the kernel-smoothed ``F u`` drift."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    if grid is None:
        if B is not None:
            grid = B.grid
        elif u is not None:
            grid = u.grid
        else:
            raise ValueError("need a grid when neither sheet nor control is given")
    if eps > 0 and B is None:
        raise ValueError("a sheet sample is required for eps > 0")
    x0 = _check_x0(x0, grid)
    uv = None
    if u is not None:
        if u.values.shape != (grid.n_t, grid.n_x):
            raise ValueError("control and solver grids differ")
        if np.any(u.values):
            uv = u.values
    st = _Stepper(k, c, grid)
    X = st.march(x0, eps, None if B is None else B.dB, uv, ceiling)
    return Field(X, grid, {"eps": eps, "n_modes": k.n_modes, "coefficients": c.name})


def solve_ensemble(k: KernelModel, c: CoefficientSet, eps: float, x0, grid: GridSpec, seed: int,
                   n: int, u: Control | None = None, start: int = 0, threads: int = 1,
                   return_noise: bool = False, ceiling: float = DEFAULT_CEILING):
    """Solve for sheet samples ``start..start+n-1`` of ``seed``; ``(n, n_t+1, n_x)``.

    Work is cut along the fixed sample blocks of :mod:`ldps.noise`, so the result
    does not depend on ``threads``.
    """
    x0 = _check_x0(x0, grid)
    st = _Stepper(k, c, grid)
    uv = None if u is None or not np.any(u.values) else u.values
    stop = start + n
    pieces = []
    lo = start
    while lo < stop:
        hi = min(stop, (lo // BLOCK + 1) * BLOCK)
        pieces.append((lo, hi))
        lo = hi

    def run(piece):
        a, b = piece
        dB = sample_sheet_batch(grid, seed, b - a, start=a)
        X = st.march(x0, eps, dB, uv, ceiling)
        return X, dB

    if threads > 1 and len(pieces) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(run, pieces))
    else:
        parts = [run(p) for p in pieces]
    X = np.concatenate([p[0] for p in parts])
    if return_noise:
        return X, np.concatenate([p[1] for p in parts])
    return X


def solve_fd_sde(m: FdModel, x0, W: BmPaths | np.ndarray | None, u=None, theta: float = 0.0,
                 grid: GridSpec | None = None, ceiling: float = DEFAULT_CEILING) -> np.ndarray:
    """Euler-Maruyama for ``dX = b dt + theta a dW + a u dt``; returns ``(n_t+1, k)``.

    Pass ``theta = sqrt(eps)`` for the uncontrolled small-noise equation.
    """
    if not 0 <= theta:
        raise ValueError("theta must be >= 0")
    if isinstance(W, BmPaths):
        grid = W.grid
        dW = W.increments.T
    else:
        dW = None if W is None else np.asarray(W, dtype=float)
    if grid is None:
        raise ValueError("grid required")
    n_t, dt = grid.n_t, grid.dt
    x = np.asarray(x0, dtype=float).reshape(m.dim)
    if dW is not None and dW.shape[-2:] != (n_t, m.dim):
        raise ValueError(f"noise must have shape (n_t, {m.dim})")
    uu = None if u is None else np.asarray(u, dtype=float).reshape(n_t, m.dim)
    lead = () if dW is None else dW.shape[:-2]
    x = np.broadcast_to(x, (*lead, m.dim)).copy()
    out = np.empty((*lead, n_t + 1, m.dim))
    out[..., 0, :] = x
    for i in range(n_t):
        A = m.a(x)
        step = m.b(x) * dt
        if dW is not None and theta > 0:
            step = step + theta * np.einsum("...ij,...j->...i", A, dW[..., i, :])
        if uu is not None:
            step = step + np.einsum("...ij,j->...i", A, uu[i]) * dt
        x = x + step
        norm = float(np.max(np.abs(x)))
        if not np.isfinite(norm) or norm > ceiling:
            raise BlowUpError(i + 1, norm, ceiling)
        out[..., i + 1, :] = x
    return out


@dataclass
class MomentReport:
    p: float
    surface: np.ndarray
    max: float
    argmax: tuple
    max_stderr: float
    n: int
    meta: dict = field(default_factory=dict)


def estimate_moments(ensemble, p: float, n_boot: int = 200, seed: int = 0) -> MomentReport:
    """Empirical ``E|X(t, r)|^p`` per grid point with a bootstrap error on the max."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if isinstance(ensemble, (list, tuple)):
        X = np.stack([f.values if isinstance(f, Field) else np.asarray(f) for f in ensemble])
    else:
        X = np.asarray(ensemble, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("empty ensemble")
    A = np.abs(X) ** p
    surface = A.mean(axis=0)
    idx = np.unravel_index(int(np.argmax(surface)), surface.shape)
    mx = float(surface[idx])
    n = X.shape[0]
    if n > 1 and n_boot > 0:
        g = stream(seed, STREAM_AUX, 3)
        flat = A.reshape(n, -1)
        boots = np.empty(n_boot)
        for b in range(n_boot):
            pick = g.integers(0, n, n)
            boots[b] = flat[pick].mean(axis=0).max()
        err = float(boots.std(ddof=1))
    else:
        err = 0.0
    return MomentReport(p, surface, mx, tuple(int(i) for i in idx), err, n)


def holder_norm(f: Field, alpha: float, space_time: bool = False) -> float:
    """``||f||_alpha``: sup-norm plus the discrete alpha-Holder seminorm."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return f.holder_norm(alpha, space_time)


def gaussian_abs_moment(sigma, p: float):
    """``E|N(0, sigma^2)|^p``."""
    from scipy.special import gamma
    return np.asarray(sigma) ** p * 2 ** (p / 2) * gamma((p + 1) / 2) / np.sqrt(np.pi)
