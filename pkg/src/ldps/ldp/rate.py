"""Rate functions by the minimum action method, and the closed-form
finite-dimensional action used as its oracle.

The optimizer minimizes

    J(u) = 1/2 ||u||^2 + <lam, S(u) - f> + (1/mu) ||S(u) - f||^2

where ``S`` is the discrete skeleton map and all norms are grid L^2 norms.  It
first walks ``mu`` down the continuation schedule with ``lam = 0`` and then
runs multiplier updates ``lam += (2/mu) (S(u) - f)``, shrinking ``mu`` further
whenever an update fails to cut the residual by 4x, until the constraint
residual drops below ``feas_tol``.  Gradients come from a
discrete adjoint of the skeleton recursion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ..grid import Control, Field, GridSpec
from ..kernel import KernelModel
from ..solver import CoefficientSet, FdModel, _Stepper, _check_x0

DEFAULT_SCHEDULE = (1.0, 1e-1, 1e-2, 1e-3)


@dataclass(frozen=True)
class RateOptions:
    schedule: tuple = DEFAULT_SCHEDULE
    feas_tol: float = 1e-4
    max_outer: int = 60
    mu_min: float = 1e-8
    maxiter: int = 2000
    gtol: float = 1e-10


@dataclass
class RateResult:
    value: float
    control: np.ndarray
    residual: float
    iterations: int
    converged: bool
    action: float = 0.0
    path: np.ndarray | None = None
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"value": self.value, "action": self.action, "residual": self.residual,
                "iterations": self.iterations, "converged": self.converged,
                "history": self.history}


class _SpdeProblem:
    """Discrete skeleton ``u -> X`` for the SPDE and its adjoint."""

    def __init__(self, k: KernelModel, c: CoefficientSet, grid: GridSpec, x0, target):
        self.st = _Stepper(k, c, grid)
        self.grid = grid
        self.x0 = _check_x0(x0, grid)
        self.target = np.asarray(target, dtype=float)
        self.shape = (grid.n_t, grid.n_x)
        self.w = grid.cell_volume  # quadrature weight of one control / residual cell

    def forward(self, u):
        return self.st.march(self.x0, 0.0, None, u)

    def residual_rows(self, X):
        return X[1:] - self.target[1:]

    def adjoint(self, u, X, gX):
        """Gradient of ``sum_n <gX[n], X[n+1]>`` with respect to ``u``."""
        st, g = self.st, self.grid
        c = st.c
        phi, dx, dt = st.phi, g.dx, g.dt
        abar = np.zeros(st.k.n_modes)
        gu = np.zeros_like(u)
        for n in range(g.n_t - 1, -1, -1):
            abar = abar + gX[n] @ phi.T          # X[n+1] = a[n+1] phi
            t = g.times[n]
            Xn = X[n]
            back = (st.noise_w * abar) @ phi      # d/d(F u) of the control term, per grid point
            Fx = c.F(t, st.r, Xn)
            gu[n] = Fx * back * g.cell_volume
            xbar = c.dR_dx(t, st.r, Xn) * (((g.dt * st.drift_w) * abar) @ phi) * dx
            if not c.F_is_constant:
                xbar = xbar + c.dF_dx(t, st.r, Xn) * u[n] * back * g.cell_volume
            abar = st.decay * abar
            if n > 0:
                abar = abar + xbar @ phi.T
        return gu


class _FdProblem:
    """Euler skeleton ``X_{n+1} = X_n + b(X_n) dt + a(X_n) u_n dt``."""

    def __init__(self, m: FdModel, times, x0, target):
        self.m = m
        self.times = np.asarray(times, dtype=float)
        self.dt = np.diff(self.times)
        if not np.allclose(self.dt, self.dt[0]):
            raise ValueError("uniform time grid required")
        self.x0 = np.asarray(x0, dtype=float).reshape(m.dim)
        self.target = np.asarray(target, dtype=float).reshape(len(self.times), m.dim)
        self.shape = (len(self.times) - 1, m.dim)
        self.w = float(self.dt[0])

    def forward(self, u):
        m, dt = self.m, self.dt[0]
        X = np.empty((len(self.times), m.dim))
        X[0] = self.x0
        for n in range(len(self.dt)):
            X[n + 1] = X[n] + m.b(X[n]) * dt + m.a(X[n]) @ u[n] * dt
        return X

    def residual_rows(self, X):
        return X[1:] - self.target[1:]

    def adjoint(self, u, X, gX):
        m, dt = self.m, self.dt[0]
        lam = np.zeros(m.dim)
        gu = np.zeros_like(u)
        for n in range(len(self.dt) - 1, -1, -1):
            lam = lam + gX[n]
            A = m.a(X[n])
            gu[n] = A.T @ lam * dt
            J = m.b_jac(X[n])
            dA = m.a_jac(X[n])  # (k, k, k): d a_ij / d x_l
            lam = lam + J.T @ lam * dt + np.einsum("ijl,j,i->l", dA, u[n], lam) * dt
        return gu


def _minimize_action(prob, opts: RateOptions, u0=None) -> RateResult:
    w = prob.w
    sw = np.sqrt(w)
    shape = prob.shape
    v = np.zeros(int(np.prod(shape))) if u0 is None else np.asarray(u0, float).ravel() * sw
    lam = np.zeros((shape[0],) + prob.target.shape[1:])
    history = []
    iters = 0

    def objective(vflat, mu, lam):
        u = vflat.reshape(shape) / sw
        X = prob.forward(u)
        res = prob.residual_rows(X)
        J = 0.5 * vflat @ vflat + w * np.sum(lam * res) + w * np.sum(res ** 2) / mu
        gX = w * lam + 2 * w * res / mu
        gu = prob.adjoint(u, X, gX)
        return J, vflat + gu.ravel() / sw

    def solve(mu, lam, v):
        nonlocal iters
        r = minimize(objective, v, args=(mu, lam), jac=True, method="L-BFGS-B",
                     options={"maxiter": opts.maxiter, "gtol": opts.gtol, "ftol": 1e-15,
                              "maxcor": 30})
        iters += int(r.nit)
        u = r.x.reshape(shape) / sw
        X = prob.forward(u)
        res = prob.residual_rows(X)
        history.append({"mu": mu, "action": float(0.5 * r.x @ r.x),
                        "residual": float(np.max(np.abs(res))) if res.size else 0.0,
                        "nit": int(r.nit)})
        return r.x, X, res

    X = prob.forward(v.reshape(shape) / sw)
    res = prob.residual_rows(X)
    if np.max(np.abs(res)) == 0.0 and not np.any(v):
        return RateResult(0.0, np.zeros(shape), 0.0, 0, True, 0.0, X, history)

    for mu in opts.schedule:
        v, X, res = solve(mu, lam, v)
    mu = opts.schedule[-1]
    prev = np.max(np.abs(res))
    for _ in range(opts.max_outer):
        if prev <= opts.feas_tol:
            break
        lam = lam + 2 * res / mu
        v, X, res = solve(mu, lam, v)
        cur = np.max(np.abs(res))
        if cur > 0.25 * prev and mu > opts.mu_min:
            # slow multiplier progress: tighten the penalty as well
            mu = max(mu / 10, opts.mu_min)
        prev = cur
    u = v.reshape(shape) / sw
    action = float(0.5 * v @ v)
    resid = float(np.max(np.abs(res))) if res.size else 0.0
    ok = resid <= opts.feas_tol
    return RateResult(action if ok else np.inf, u, resid, iters, ok, action, X, history)


def rate_function(k: KernelModel, c: CoefficientSet, x0, f_target, opts: RateOptions = RateOptions(),
                  grid: GridSpec | None = None, u0=None) -> RateResult:
    """``I_x(f) = inf {1/2 ||u||^2 : skeleton(x, u) = f}`` by penalized minimum action.

    ``value`` is ``inf`` when the constraint residual cannot be brought below
    ``opts.feas_tol``; the best action found is kept in ``action``.
    """
    if isinstance(f_target, Field):
        grid = f_target.grid
        f_target = f_target.values
    if grid is None:
        raise ValueError("grid required for array targets")
    f = np.asarray(f_target, dtype=float)
    if f.shape != (grid.n_t + 1, grid.n_x):
        raise ValueError("target does not match the solver grid")
    prob = _SpdeProblem(k, c, grid, x0, f)
    if np.max(np.abs(f[0] - prob.st.to_grid(prob.st.coeffs(prob.x0)))) > max(opts.feas_tol, 1e-8):
        raise ValueError("target does not start at the (projected) initial condition")
    u_start = None if u0 is None else (u0.values if isinstance(u0, Control) else u0)
    return _minimize_action(prob, opts, u_start)


def minimum_action_fd(m: FdModel, x0, f_target, times, opts: RateOptions = RateOptions()) -> RateResult:
    """Minimum action for the finite-dimensional skeleton ``xdot = b(x) + a(x) u``."""
    prob = _FdProblem(m, times, x0, f_target)
    return _minimize_action(prob, opts)


def rate_function_fd(m: FdModel, f_target, times) -> RateResult:
    """Closed form ``1/2 int |a(f)^{-1} (f' - b(f))|^2 dt`` with centered differences."""
    if not m.a_invertible:
        raise ValueError("closed form needs an invertible diffusion matrix")
    t = np.asarray(times, dtype=float)
    f = np.asarray(f_target, dtype=float).reshape(len(t), m.dim)
    fdot = np.gradient(f, t, axis=0, edge_order=2)
    A = m.a(f)
    if np.any(np.abs(np.linalg.det(A)) < 1e-12):
        raise ValueError("diffusion matrix is singular along the path")
    u = np.linalg.solve(A, (fdot - m.b(f))[..., None])[..., 0]
    val = 0.5 * float(np.trapezoid(np.sum(u ** 2, axis=1), t))
    return RateResult(val, u, 0.0, 0, True, val, f)
