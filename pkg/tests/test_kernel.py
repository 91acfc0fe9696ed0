import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from ldps.grid import GridSpec
from ldps.kernel import (KernelModel, apply_semigroup, heat_kernel, kernel_eval, kernel_matrix,
                         l2_difference, truncation_change, verify_assumption4)
from ldps.noise import BasisSpec

unit = st.floats(0.0, 1.0)


def test_heat_kernel_constants():
    k = heat_kernel(8)
    np.testing.assert_allclose(k.mu, (np.pi * np.arange(1, 9)) ** 2)
    assert k.alpha_bar == 0.25 and k.gamma == 2 and k.d == 1 and k.K_T == 1


def test_kernel_model_validation():
    b = BasisSpec(3)
    with pytest.raises(ValueError):
        KernelModel(b, [1.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        KernelModel(b, [1.0, 2.0])
    with pytest.raises(ValueError):
        KernelModel(b, [1.0, 2.0, 3.0], gamma=1.0)


@given(unit, unit, st.floats(0.01, 0.6), st.floats(0.0, 0.4))
@settings(max_examples=50, deadline=None)
def test_kernel_symmetric_and_zero_before_source(r, q, t, s):
    k = heat_kernel(16)
    assert kernel_eval(k, t, s, r, q) == kernel_eval(k, t, s, q, r)
    assert kernel_eval(k, s, t, r, q) == 0.0 or s > t
    assert kernel_eval(k, s, s, r, q) == 0.0


def test_kernel_matrix_matches_pointwise():
    k = heat_kernel(10)
    r = np.array([0.1, 0.5])
    q = np.array([0.2, 0.3, 0.9])
    M = kernel_matrix(k, 0.01, r, q)
    for i, ri in enumerate(r):
        for j, qj in enumerate(q):
            assert M[i, j] == pytest.approx(kernel_eval(k, 0.02, 0.01, ri, qj), rel=1e-12)
    assert not np.any(kernel_matrix(k, 0.0, r, q))


def test_kernel_positive_and_sub_markov_on_grid():
    k = heat_kernel(64)
    g = GridSpec(0.1, 100, 64)
    q = (np.arange(4096) + 0.5) / 4096
    for lag in g.dt * np.array([1, 2, 10, 50, 100]):
        G = kernel_matrix(k, lag, g.centers, g.centers)
        assert G.min() > -1e-10
        mass = np.abs(kernel_matrix(k, lag, g.centers, q)).sum(axis=1) / 4096
        assert mass.max() <= 1 + 1e-6


def test_truncation_change_shrinks_with_modes():
    pts = dict(t=0.01, s=0.0, r=np.array([0.3, 0.5]), q=np.array([0.31, 0.7]))
    changes = [truncation_change(heat_kernel(n), **pts) for n in (4, 8, 16)]
    assert changes[0] > changes[1] > changes[2]
    assert changes[-1] < 1e-10


def test_semigroup_identity_eigenfunction_and_composition():
    g = GridSpec(1.0, 1, 64)
    k = heat_kernel(32)
    f = k.basis.synthesize(np.random.default_rng(3).normal(size=32) / np.arange(1, 33), g)
    np.testing.assert_allclose(apply_semigroup(k, 0.3, 0.3, f, g), f, atol=1e-10)
    phi1 = k.basis.phi(g.centers)[0]
    np.testing.assert_allclose(apply_semigroup(k, 0.5, 0.2, phi1, g), np.exp(-np.pi**2 * 0.3) * phi1,
                               atol=1e-12)
    two = apply_semigroup(k, 0.05, 0.02, apply_semigroup(k, 0.02, 0.0, f, g), g)
    np.testing.assert_allclose(two, apply_semigroup(k, 0.05, 0.0, f, g), atol=1e-12)
    with pytest.raises(ValueError):
        apply_semigroup(k, 0.1, 0.2, f, g)


@pytest.mark.parametrize("t1,r1,t2,r2", [(0.05, 0.5, 0.07, 0.5), (0.05, 0.3, 0.05, 0.36),
                                         (0.08, 0.4, 0.05, 0.45)])
def test_l2_difference_against_brute_force(t1, r1, t2, r2):
    """Oracle: direct 2-d quadrature of |G(t1, s, r1, q) - G(t2, s, r2, q)|^2."""
    k = heat_kernel(12)
    q = (np.arange(2000) + 0.5) / 2000

    def inner(s):
        d = kernel_eval(k, t1, s, r1, q) - kernel_eval(k, t2, s, r2, q)
        return np.sum(d**2) / len(q)

    brk = sorted({min(t1, t2), max(t1, t2)})
    total = 0.0
    for a, b in zip([0.0, *brk], brk):
        total += integrate.quad(inner, a, b, limit=200, epsrel=1e-10)[0]
    assert l2_difference(k, t1, r1, t2, r2) == pytest.approx(total, rel=1e-6)
    assert l2_difference(k, t1, r1, t2, r2) == pytest.approx(l2_difference(k, t2, r2, t1, r1))


def test_assumption_audit_on_shipped_kernel():
    rep = verify_assumption4(heat_kernel(64), GridSpec(0.1, 100, 64), alpha=0.2)
    assert rep.bound_54 <= 1 + 1e-6
    assert -0.55 <= rep.exponent_55 <= -0.45
    assert rep.flags["mass_54"] and rep.flags["exponent_55"] and rep.flags["holds_510"]
    assert rep.flags["alpha_below_alpha_bar"]
    assert rep.passes
    # the L2 difference decays at the kernel's own rate 2 * alpha_bar = 0.5, faster than 2 alpha
    assert rep.exponent_510 == pytest.approx(0.5, abs=0.05)
    d = rep.to_dict()
    assert {"bound_54", "exponent_55", "exponent_510", "alpha", "passes"} <= set(d)


def test_audit_flags_alpha_above_threshold():
    rep = verify_assumption4(heat_kernel(64), GridSpec(0.1, 100, 64), alpha=0.3)
    assert not rep.flags["alpha_below_alpha_bar"] and not rep.passes


def test_audit_rejects_degenerate_grid():
    with pytest.raises(ValueError, match="4 lags"):
        verify_assumption4(heat_kernel(8), GridSpec(0.1, 3, 16))
    with pytest.raises(ValueError):
        verify_assumption4(heat_kernel(8), GridSpec(0.1, 100, 16), alpha=1.5)
