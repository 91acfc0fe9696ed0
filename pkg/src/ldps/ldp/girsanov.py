"""Monte Carlo check of the change of measure for controlled SPDEs.

With ``Z = exp(-eps^{-1/2} int u dB - (2 eps)^{-1} int u^2)``, the controlled
solution reweighted by ``Z`` has the law of the uncontrolled one:
``E[phi(X^{eps,u}) Z] = E[phi(X^eps)]`` and ``E[Z] = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..grid import Control, GridSpec
from ..kernel import KernelModel
from ..solver import CoefficientSet, solve_ensemble
from ..walsh import walsh_integrate_batch


@dataclass
class GirsanovResult:
    weighted_mean: float
    baseline_mean: float
    stderr: float
    weighted_stderr: float
    baseline_stderr: float
    mean_weight: float
    weight_stderr: float
    ess: float
    degenerate: bool
    weight_ok: bool
    means_ok: bool
    n_mc: int

    @property
    def passed(self) -> bool:
        return self.weight_ok and self.means_ok and not self.degenerate

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["pass"] = self.passed
        return d


def density_weights(u: Control, dB: np.ndarray, eps: float) -> np.ndarray:
    """Exponential-martingale weights for stacked sheet increments ``(n, n_t, n_x)``."""
    stoch = walsh_integrate_batch(u.values, dB)
    return np.exp(-stoch / np.sqrt(eps) - u.norm_sq / (2 * eps))


def girsanov_check(k: KernelModel, c: CoefficientSet, eps: float, x0, u: Control,
                   statistic: Callable, n_mc: int, seed: int, grid: GridSpec | None = None,
                   n_sigma: float = 4.0, threads: int = 1) -> GirsanovResult:
    """Both sides are driven by the same sheet samples; the difference of the two
    means is judged against the standard error of the paired differences."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    grid = grid or u.grid
    Xu, dB = solve_ensemble(k, c, eps, x0, grid, seed, n_mc, u, threads=threads, return_noise=True)
    X0 = solve_ensemble(k, c, eps, x0, grid, seed, n_mc, None, threads=threads)
    Z = density_weights(u, dB, eps)
    a = np.asarray(statistic(Xu), dtype=float) * Z
    b = np.asarray(statistic(X0), dtype=float)
    n = float(n_mc)
    diff = a - b
    se_diff = float(diff.std(ddof=1) / np.sqrt(n))
    se_a = float(a.std(ddof=1) / np.sqrt(n))
    se_b = float(b.std(ddof=1) / np.sqrt(n))
    mw = float(Z.mean())
    se_w = float(Z.std(ddof=1) / np.sqrt(n))
    ess = float(Z.sum() ** 2 / np.sum(Z ** 2))
    return GirsanovResult(
        weighted_mean=float(a.mean()), baseline_mean=float(b.mean()), stderr=se_diff,
        weighted_stderr=se_a, baseline_stderr=se_b, mean_weight=mw, weight_stderr=se_w, ess=ess,
        degenerate=ess < 0.01 * n,
        weight_ok=abs(mw - 1.0) <= n_sigma * se_w,
        means_ok=abs(float(diff.mean())) <= n_sigma * se_diff,
        n_mc=n_mc)


def spatial_mean_at_T(X: np.ndarray) -> np.ndarray:
    """Spatial average of the final time slice for ``(n, n_t + 1, n_x)`` ensembles."""
    return np.asarray(X)[..., -1, :].mean(axis=-1)
