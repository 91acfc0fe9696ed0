"""Spectral semigroup kernels and a numerical audit of their regularity estimates.

The shipped kernel is the Dirichlet heat kernel on (0, 1),

    G(t, s, r, q) = sum_k exp(-mu_k (t - s)) phi_k(r) phi_k(q),   mu_k = (k pi)^2,

truncated at ``basis.n_modes`` and set to zero for ``t <= s``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import GridSpec
from .noise import BasisSpec


@dataclass(frozen=True)
class KernelModel:
    basis: BasisSpec
    mu: np.ndarray
    K_T: float = 1.0
    gamma: float = 2.0
    d: int = 1
    name: str = "heat"

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        if mu.shape != (self.basis.n_modes,):
            raise ValueError("need one decay rate per basis mode")
        if np.any(mu <= 0) or np.any(np.diff(mu) <= 0):
            raise ValueError("decay rates must be positive and strictly increasing")
        if not self.gamma > self.d:
            raise ValueError("gamma must exceed the spatial dimension")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @property
    def n_modes(self) -> int:
        return self.basis.n_modes

    @property
    def alpha_bar(self) -> float:
        return (self.gamma - self.d) / (2 * self.gamma)

    def with_modes(self, n_modes: int) -> "KernelModel":
        b = BasisSpec(n_modes, self.basis.kind, domain=self.basis.domain)
        L = b.length
        return KernelModel(b, (np.pi * b.k / L) ** 2, self.K_T, self.gamma, self.d, self.name)

    def step_weights(self, dt: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-mode weights for one step of length ``dt``.

        ``decay = exp(-mu dt)`` propagates the state; ``drift`` is
        ``(1 - exp(-mu dt)) / (mu dt)``, the step average of the kernel; ``noise``
        is ``sqrt((1 - exp(-2 mu dt)) / (2 mu dt))``, which makes the variance of the
        discrete stochastic convolution equal to that of the continuous one.
        Controls share the noise weight so that shifting the sheet by ``Int(u)``
        is the same as adding the control drift.
        """
        x = self.mu * dt
        decay = np.exp(-x)
        drift = -np.expm1(-x) / x
        noise = np.sqrt(-np.expm1(-2 * x) / (2 * x))
        return decay, drift, noise


def heat_kernel(n_modes: int = 32, domain=(0.0, 1.0)) -> KernelModel:
    """Dirichlet heat kernel, ``gamma = 2``, ``d = 1``, mass bound ``K(T) = 1``."""
    b = BasisSpec(n_modes, domain=domain)
    return KernelModel(b, (np.pi * b.k / b.length) ** 2, K_T=1.0, gamma=2.0, d=1, name="heat")


def kernel_eval(k: KernelModel, t, s, r, q):
    """``G(t, s, r, q)``; broadcasts over array arguments."""
    t, s, r, q = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (t, s, r, q)))
    lag = t - s
    pos = lag > 0
    shape = lag.shape
    lag_f, r_f, q_f = lag.ravel(), r.ravel(), q.ravel()
    out = np.zeros(lag_f.size)
    if pos.any():
        idx = pos.ravel()
        damp = np.exp(-np.outer(k.mu, lag_f[idx]))
        out[idx] = np.sum(damp * (k.basis.phi(r_f[idx]) * k.basis.phi(q_f[idx])), axis=0)
    return out.reshape(shape) if shape else float(out[0])


def kernel_matrix(k: KernelModel, lag: float, r, q) -> np.ndarray:
    """``G`` at fixed lag on the product of point sets ``r x q``."""
    if lag <= 0:
        return np.zeros((np.size(r), np.size(q)))
    Pr = k.basis.phi(r)
    Pq = k.basis.phi(q)
    return (Pr * np.exp(-k.mu * lag)[:, None]).T @ Pq


def apply_semigroup(k: KernelModel, t: float, s: float, f, grid: GridSpec) -> np.ndarray:
    """``(U(t, s) f)(r_j)`` by projection, damping and resynthesis.

    Components of ``f`` outside the span of the first ``n_modes`` basis
    functions are dropped.
    """
    if t < s:
        raise ValueError("apply_semigroup needs t >= s")
    c = k.basis.project(f, grid)
    return k.basis.synthesize(c * np.exp(-k.mu * (t - s)), grid)


def truncation_change(k: KernelModel, t, s, r, q) -> float:
    """``max |G_{2N} - G_N|`` over the given points."""
    return float(np.max(np.abs(kernel_eval(k.with_modes(2 * k.n_modes), t, s, r, q)
                               - kernel_eval(k, t, s, r, q))))


def l2_difference(k: KernelModel, t1: float, r1: float, t2: float, r2: float) -> float:
    """``int_0^T int_O |G(t1, s, r1, q) - G(t2, s, r2, q)|^2 dq ds`` for ``t1 <= t2``.

    Parseval in ``q`` and exact time integrals per mode.
    """
    if t1 > t2:
        t1, r1, t2, r2 = t2, r2, t1, r1
    mu = k.mu
    p1 = k.basis.phi([r1])[:, 0]
    p2 = k.basis.phi([r2])[:, 0]
    h = t2 - t1
    head = -np.expm1(-2 * mu * t1) / (2 * mu) * (p1 - np.exp(-mu * h) * p2) ** 2
    tail = -np.expm1(-2 * mu * h) / (2 * mu) * p2 ** 2
    return float(np.sum(head + tail))


@dataclass
class EstimateReport:
    bound_54: float
    exponent_55: float
    exponent_510: float
    alpha: float
    passes: bool
    alpha_bar: float = 0.0
    target_55: float = 0.0
    fitted_K_55: float = 0.0
    fitted_K_510: float = 0.0
    flags: dict = field(default_factory=dict)
    lags: list = field(default_factory=list)
    sup_values: list = field(default_factory=list)
    rhos: list = field(default_factory=list)
    l2_values: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def verify_assumption4(k: KernelModel, grid: GridSpec, alpha: float = 0.2, n_lags: int = 12,
                       n_quad: int = 4096, exponent_tol: float = 0.05,
                       holder_rel_tol: float = 0.2, mass_slack: float = 1e-6) -> EstimateReport:
    """Audit the mass bound, the short-time sup bound and the L2 Holder bound.

    Lags run over ``[dt, T/4]``; shorter lags are never used.  Constants are
    fitted, not assumed.  The L2 bound is reported as holding when the fitted
    slope is at least ``(1 - holder_rel_tol) * 2 alpha``, so that the difference
    decays at least like ``rho^(2 alpha)``; ``slope_in_band_510`` records whether
    the slope is also within ``holder_rel_tol`` of ``2 alpha``.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    T, dt = grid.T, grid.dt
    lags = np.geomspace(dt, T / 4, n_lags) if T / 4 > dt else np.array([])
    if lags.size < 4 or grid.n_t < 4:
        raise ValueError("degenerate grid: need at least 4 lags in [dt, T/4]")

    a, b = grid.domain
    q = a + (np.arange(n_quad) + 0.5) * (b - a) / n_quad
    dq = (b - a) / n_quad
    r = grid.centers

    # (a) mass bound over every grid lag >= dt
    grid_lags = dt * np.arange(1, grid.n_t + 1)
    mass = 0.0
    for lag in grid_lags:
        mass = max(mass, float(np.max(np.abs(kernel_matrix(k, lag, r, q)).sum(axis=1) * dq)))

    # (b) sup |G| against the lag; the sup sits on the diagonal r = q
    fine = a + (np.arange(1, 2 * n_quad // 8) / (2 * n_quad // 8)) * (b - a)
    sups = []
    for lag in lags:
        diag = np.sum(np.exp(-k.mu * lag)[:, None] * k.basis.phi(fine) ** 2, axis=0)
        sups.append(float(np.max(np.abs(diag))))
    sups = np.array(sups)
    exp55 = _slope(lags, sups)
    target55 = -k.d / k.gamma
    K55 = float(np.max(sups * lags ** (k.d / k.gamma)))

    # (c) envelope of the L2 kernel difference over directions and base points
    L = b - a
    bases = [(T / 2, a + 0.5 * L), (T / 2, a + 0.3 * L)]
    rhos = lags
    env = []
    for rho in rhos:
        vals = []
        for t0, r0 in bases:
            vals.append(l2_difference(k, t0, r0, t0 + rho, r0))
            vals.append(l2_difference(k, t0, r0, t0, r0 + rho))
            c = rho / np.sqrt(2)
            vals.append(l2_difference(k, t0, r0, t0 + c, r0 + c))
        env.append(max(vals))
    env = np.array(env)
    exp510 = _slope(rhos, env)
    K510 = float(np.max(env / rhos ** (2 * alpha)))

    flags = {
        "mass_54": mass <= k.K_T + mass_slack,
        "exponent_55": abs(exp55 - target55) <= exponent_tol,
        "holds_510": exp510 >= (1 - holder_rel_tol) * 2 * alpha,
        "slope_in_band_510": abs(exp510 - 2 * alpha) <= holder_rel_tol * 2 * alpha,
        "alpha_below_alpha_bar": alpha < k.alpha_bar,
    }
    passes = flags["mass_54"] and flags["exponent_55"] and flags["holds_510"] and flags["alpha_below_alpha_bar"]
    return EstimateReport(
        bound_54=mass, exponent_55=exp55, exponent_510=exp510, alpha=alpha, passes=bool(passes),
        alpha_bar=k.alpha_bar, target_55=target55, fitted_K_55=K55, fitted_K_510=K510,
        flags={key: bool(v) for key, v in flags.items()},
        lags=lags.tolist(), sup_values=sups.tolist(), rhos=rhos.tolist(), l2_values=env.tolist(),
        settings={"T": T, "dt": dt, "n_x": grid.n_x, "n_modes": k.n_modes, "n_quad": n_quad,
                  "exponent_tol": exponent_tol, "holder_rel_tol": holder_rel_tol},
    )
