"""Laplace functionals ``-eps log E exp(-h(X^eps)/eps)`` and their comparison
with ``inf_f {h(f) + I(f)}``."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize
from scipy.special import logsumexp

from ..noise import STREAM_AUX, standard_normals


@dataclass(frozen=True)
class LaplaceSpec:
    """Test functional ``h`` (vectorized over leading sample axis), eps schedule
    and per-eps sample count.  ``clip`` bounds ``|h|``."""

    h: Callable
    eps: tuple
    n_samples: int = 10_000
    clip: float | None = None

    def __post_init__(self):
        e = [float(x) for x in self.eps]
        if any(b >= a for a, b in zip(e, e[1:])) or any(x <= 0 for x in e):
            raise ValueError("eps schedule must be positive and strictly decreasing")
        if self.n_samples < 1000:
            raise ValueError("need at least 1000 samples per eps")
        object.__setattr__(self, "eps", tuple(e))

    def evaluate(self, paths) -> np.ndarray:
        v = np.asarray(self.h(paths), dtype=float)
        if self.clip is not None:
            v = np.clip(v, -self.clip, self.clip)
        return v


@dataclass
class LaplaceEstimate:
    eps: float
    value: float
    stderr: float
    n: int


def log_mean_exp_estimate(hv: np.ndarray, eps: float) -> tuple[float, float]:
    """``-eps log mean exp(-hv/eps)`` with a delta-method standard error."""
    a = -np.asarray(hv, dtype=float) / eps
    n = a.size
    lme = logsumexp(a) - np.log(n)
    w = np.exp(a - a.max())
    m = w.mean()
    se_rel = w.std(ddof=1) / (m * np.sqrt(n)) if n > 1 else 0.0
    return float(-eps * lme), float(eps * se_rel)


def laplace_functional(sampler: Callable, spec: LaplaceSpec, seed: int) -> list[LaplaceEstimate]:
    """``sampler(eps, n, seed) -> paths``; one estimate per eps in the schedule."""
    out = []
    for eps in spec.eps:
        paths = sampler(eps, spec.n_samples, seed)
        val, se = log_mean_exp_estimate(spec.evaluate(paths), eps)
        out.append(LaplaceEstimate(eps, val, se, spec.n_samples))
    return out


def schilder_sampler(T: float = 1.0, n_t: int = 1) -> Callable:
    """Paths of ``sqrt(eps) W`` on ``n_t`` steps of ``[0, T]``; shape ``(n, n_t + 1)``."""
    dt = T / n_t

    def sample(eps, n, seed):
        z = standard_normals(seed, STREAM_AUX, (n_t,), n) * np.sqrt(dt * eps)
        out = np.zeros((n, n_t + 1))
        out[:, 1:] = np.cumsum(z, axis=1)
        return out

    return sample


def gaussian_laplace_quadrature(h_terminal: Callable, eps: float, var: float = 1.0,
                                breakpoints=()) -> float:
    """``-eps log E exp(-h(Y)/eps)`` for ``Y ~ N(0, eps var)`` by adaptive quadrature.

    The exponent is shifted by its minimum over a coarse scan before integrating.
    """
    def expo(y):
        return h_terminal(y) / eps + y * y / (2 * eps * var)

    scan = np.linspace(-20, 20, 40001) * np.sqrt(var)
    ev = np.array([expo(y) for y in scan])
    i = int(np.argmin(ev))
    y0, m = scan[i], ev[i]
    width = np.sqrt(eps * var)
    lo, hi = y0 - 40 * width - 10, y0 + 40 * width + 10
    pts = sorted({p for p in (y0, *breakpoints) if lo < p < hi})
    edges = [lo, *pts, hi]
    total = 0.0
    for a, b in zip(edges, edges[1:]):
        total += integrate.quad(lambda y: np.exp(-(expo(y) - m)), a, b, limit=400,
                                epsabs=0, epsrel=1e-12)[0]
    total /= np.sqrt(2 * np.pi * eps * var)
    return float(eps * m - eps * np.log(total))


@dataclass
class LaplaceReport:
    infimum: float
    argmin: object
    eps: list
    values: list
    gaps: list
    monotone: bool
    final_gap: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"infimum": self.infimum, "argmin": np.asarray(self.argmin).tolist(),
                "eps": self.eps, "values": self.values, "gaps": self.gaps,
                "monotone": self.monotone, "final_gap": self.final_gap, "details": self.details}


def variational_infimum(h_det: Callable, family: Callable, rate: Callable,
                        bounds=None, x0=None) -> tuple[float, object, dict]:
    """``inf_z {h(f_z) + I(f_z)}`` over a parametrized target family.

    ``family(z) -> f``; ``rate(f) -> RateResult``; ``h_det(f) -> float``.  A
    scalar parameter uses bounded Brent search over ``bounds``; vectors use
    Nelder-Mead from ``x0``.
    """
    evals = {}

    def obj(z):
        f = family(z)
        r = rate(f)
        val = float(h_det(f)) + float(r.value)
        evals[str(np.round(np.atleast_1d(z), 10).tolist())] = val
        return val

    if bounds is not None:
        res = optimize.minimize_scalar(obj, bounds=bounds, method="bounded",
                                       options={"xatol": 1e-6})
        return float(res.fun), float(res.x), {"n_evals": len(evals)}
    res = optimize.minimize(obj, np.atleast_1d(x0), method="Nelder-Mead",
                            options={"xatol": 1e-6, "fatol": 1e-10})
    return float(res.fun), res.x, {"n_evals": len(evals)}


def verify_laplace(estimates, h_det: Callable, family: Callable, rate: Callable,
                   bounds=None, x0=None) -> LaplaceReport:
    """Gap between per-eps Laplace values and the variational infimum.

    ``estimates`` is a list of :class:`LaplaceEstimate` or ``(eps, value)``
    pairs in decreasing eps order.
    """
    pairs = [(e.eps, e.value) if isinstance(e, LaplaceEstimate) else (float(e[0]), float(e[1]))
             for e in estimates]
    inf, arg, det = variational_infimum(h_det, family, rate, bounds, x0)
    gaps = [abs(v - inf) for _, v in pairs]
    mono = all(b < a for a, b in zip(gaps, gaps[1:]))
    return LaplaceReport(inf, arg, [p[0] for p in pairs], [p[1] for p in pairs], gaps, mono,
                         gaps[-1], det)


def verify_laplace_uniform(per_x: dict, h_det: Callable, family_for: Callable, rate_for: Callable,
                           bounds=None, x0=None) -> dict:
    """Repeat :func:`verify_laplace` over a finite family of initial conditions.

    ``per_x`` maps a label to its estimates; ``family_for(label)`` and
    ``rate_for(label)`` build the target family and rate for that label.
    """
    reports = {lab: verify_laplace(est, h_det, family_for(lab), rate_for(lab), bounds, x0)
               for lab, est in per_x.items()}
    n_eps = len(next(iter(reports.values())).gaps)
    max_gap = [max(r.gaps[i] for r in reports.values()) for i in range(n_eps)]
    return {"reports": {k: v.to_dict() for k, v in reports.items()},
            "max_gap": max_gap,
            "monotone": all(b < a for a, b in zip(max_gap, max_gap[1:]))}


def schilder_terminal_family(T: float = 1.0, n_t: int = 100):
    """Straight paths ``t -> z t / T`` on the grid; the minimizers for terminal costs."""
    t = np.linspace(0.0, T, n_t + 1)
    return t, (lambda z: float(np.atleast_1d(z)[0]) * t / T)
