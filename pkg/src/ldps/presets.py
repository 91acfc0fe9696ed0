"""Named coefficient presets. Each one declares its Lipschitz and growth constants."""

from __future__ import annotations

import numpy as np

from .solver import CoefficientSet, FdModel


def _zero(t, r, x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _one(t, r, x):
    return np.ones_like(np.asarray(x, dtype=float))


def _clipped_cubic(t, r, x):
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    return np.where(ax <= 1, -x ** 3, -np.sign(x) * (3 * ax - 2))


def _clipped_cubic_dx(t, r, x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= 1, -3 * x ** 2, -3.0)


def _one_plus_clipped_abs(t, r, x):
    return 1.0 + np.minimum(np.abs(np.asarray(x, dtype=float)), 1.0)


def _one_plus_clipped_abs_dx(t, r, x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) < 1, np.sign(x), 0.0)


def heat_linear() -> CoefficientSet:
    """R = 0, F = 1."""
    return CoefficientSet(_zero, _one, K_T=1.0, growth=1.0, dR=_zero, dF=_zero,
                          F_is_constant=True, name="heat-linear")


def heat_reaction() -> CoefficientSet:
    """R = -x^3 on |x| <= 1 continued linearly (slope 3), F = 1 + min(|x|, 1).

    |R(x) - R(y)| + |F(x) - F(y)| <= 4 |x - y| and |R| + |F| <= 3 (1 + |x|).
    """
    return CoefficientSet(_clipped_cubic, _one_plus_clipped_abs, K_T=4.0, growth=3.0,
                          dR=_clipped_cubic_dx, dF=_one_plus_clipped_abs_dx, name="heat-reaction")


def fd_schilder() -> FdModel:
    """b = 0, a = 1 in one dimension."""
    return FdModel(1, lambda x: np.zeros_like(x),
                   lambda x: np.ones(np.shape(x) + (1,)),
                   db=lambda x: np.zeros(np.shape(x) + (1,)),
                   da=lambda x: np.zeros(np.shape(x) + (1, 1)),
                   K_T=1.0, name="fd-schilder")


def fd_ou() -> FdModel:
    """b(x) = -x, a = 1 in one dimension."""
    return FdModel(1, lambda x: -np.asarray(x, dtype=float),
                   lambda x: np.ones(np.shape(x) + (1,)),
                   db=lambda x: -np.ones(np.shape(x) + (1,)),
                   da=lambda x: np.zeros(np.shape(x) + (1, 1)),
                   K_T=1.0, name="fd-ou")


SPDE_PRESETS = {"heat-linear": heat_linear, "heat-reaction": heat_reaction}
FD_PRESETS = {"fd-schilder": fd_schilder, "fd-ou": fd_ou}

_DESCRIPTIONS = {
    "heat-linear": "stochastic heat equation, R = 0, F = 1 (K(T) = 1)",
    "heat-reaction": "R = Lipschitz-clipped cubic, F = 1 + min(|x|, 1) (K(T) = 4)",
    "fd-schilder": "dX = sqrt(eps) dW, b = 0, a = 1",
    "fd-ou": "dX = -X dt + sqrt(eps) dW, b(x) = -x, a = 1",
}


def list_presets() -> dict[str, str]:
    return dict(_DESCRIPTIONS)


def get_preset(name: str):
    if name in SPDE_PRESETS:
        return SPDE_PRESETS[name]()
    if name in FD_PRESETS:
        return FD_PRESETS[name]()
    raise KeyError(f"unknown preset {name!r}; known: {', '.join(sorted(_DESCRIPTIONS))}")
