import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import assert_mc, mean_and_se
from ldps.grid import GridSpec
from ldps.kernel import heat_kernel
from ldps.noise import SheetSample, sample_sheet_batch, sample_sheet_direct
from ldps.presets import heat_linear
from ldps.solver import solve_ensemble
from ldps.walsh import (AdaptednessError, PredictableIntegrand, dump_diagnostics, quadratic_variation,
                        qv_refinement, walsh_integrate, walsh_integrate_batch)


def test_unit_integrand_telescopes_to_sheet_corner(small_grid):
    B = sample_sheet_direct(small_grid, 4)
    f = PredictableIntegrand.from_function(small_grid, lambda t, x: 1.0 + 0 * t * x)
    M = walsh_integrate(f, B)
    assert M[0] == 0.0
    assert M[-1] == pytest.approx(B.values[-1, -1], abs=1e-12)
    np.testing.assert_allclose(M, B.values[:, -1], atol=1e-12)


def test_elementary_integrand_is_mass_of_rectangle():
    g = GridSpec(1.0, 10, 10)
    B = sample_sheet_direct(g, 5)
    f = PredictableIntegrand.elementary(g, 2.5, 0.2, 0.7, (0.3, 0.8))
    mass = B.dB[2:7, 3:8].sum()
    assert walsh_integrate(f, B)[-1] == pytest.approx(2.5 * mass, abs=1e-12)


@given(st.floats(-5, 5), st.floats(-5, 5))
@settings(max_examples=30, deadline=None)
def test_bilinear_on_fixed_noise(a, b):
    g = GridSpec(1.0, 8, 6)
    B1, B2 = sample_sheet_direct(g, 1), sample_sheet_direct(g, 2)
    f = PredictableIntegrand.from_function(g, lambda t, x: np.sin(3 * x) + t)
    h = PredictableIntegrand.from_function(g, lambda t, x: x * x - t)
    comb = PredictableIntegrand(a * f.values + b * h.values, g)
    np.testing.assert_allclose(walsh_integrate(comb, B1),
                               a * walsh_integrate(f, B1) + b * walsh_integrate(h, B1), atol=1e-12)
    Bs = SheetSample(a * B1.dB + b * B2.dB, g)
    np.testing.assert_allclose(walsh_integrate(f, Bs),
                               a * walsh_integrate(f, B1) + b * walsh_integrate(f, B2), atol=1e-12)


def test_ito_isometry_and_martingale_mean():
    """Oracle: E M_t = 0 and E M_t^2 = sum f^2 dt dx for deterministic f."""
    g = GridSpec(1.0, 10, 20)
    f = PredictableIntegrand.from_function(g, lambda t, x: x * np.cos(t))
    dB = sample_sheet_batch(g, 13, 30000)
    inc = np.einsum("ij,nij->ni", f.values, dB)
    M = np.concatenate([np.zeros((len(dB), 1)), np.cumsum(inc, axis=1)], axis=1)
    qv = quadratic_variation(f)
    for k in (3, 7, 10):
        m, se = mean_and_se(M[:, k])
        assert_mc(m, se, 0.0)
        m2, se2 = mean_and_se(M[:, k] ** 2)
        assert_mc(m2, se2, qv[k])
    np.testing.assert_allclose(M[:, -1], walsh_integrate_batch(f.values, dB), atol=1e-12)


def test_isometry_for_path_dependent_integrand_from_solver_states():
    g = GridSpec(0.2, 20, 16)
    X, dB = solve_ensemble(heat_kernel(15), heat_linear(), 1.0, np.zeros(16), g, 3, 20000,
                           return_noise=True)
    M2, QV = [], []
    for x, d in zip(X, dB):
        f = PredictableIntegrand.from_states(x, g, fn=np.tanh)
        M2.append(walsh_integrate(f, SheetSample(d, g))[-1] ** 2)
        QV.append(quadratic_variation(f)[-1])
    m, se = mean_and_se(np.array(M2) - np.array(QV))
    assert_mc(m, se, 0.0)


def test_anticipating_integrand_is_rejected(small_grid):
    X = np.zeros((small_grid.n_t + 1, small_grid.n_x))
    f = PredictableIntegrand.from_states(X, small_grid, lag=1)
    assert not f.adapted
    with pytest.raises(AdaptednessError, match="row 0"):
        walsh_integrate(f, sample_sheet_direct(small_grid, 0))


def test_rule_based_integrand_sees_only_the_past(small_grid):
    B = sample_sheet_direct(small_grid, 9)
    seen = []

    def rule(i, hist):
        seen.append(hist.shape[0])
        with pytest.raises(ValueError):
            hist[...] = 0.0
        return np.full(small_grid.n_x, float(np.sign(hist.sum())) if i else 1.0)

    f = PredictableIntegrand.from_rule(B, rule)
    assert seen == list(range(small_grid.n_t))
    assert f.adapted and not f.deterministic
    walsh_integrate(f, B)


def test_quadratic_variation_examples():
    g = GridSpec(2.0, 40, 50)
    zero = PredictableIntegrand.from_function(g, lambda t, x: 0 * t * x)
    assert not np.any(quadratic_variation(zero))
    one = PredictableIntegrand.from_function(g, lambda t, x: 1 + 0 * t * x)
    np.testing.assert_allclose(quadratic_variation(one), g.times, atol=1e-12)
    lin = quadratic_variation(PredictableIntegrand.from_function(g, lambda t, x: x + 0 * t))
    assert np.all(np.diff(lin) >= 0) and lin[0] == 0
    # midpoint quadrature of x^2 misses exactly dx^2 / 12 per unit time
    assert lin[-1] == pytest.approx(g.T * (1 / 3 - g.dx**2 / 12), rel=1e-12)


def test_qv_refinement_converges_to_one_third():
    vals = qv_refinement(lambda t, x: x + 0 * t, GridSpec(1.0, 4, 4), levels=4)
    errs = np.abs(np.array(vals) - 1 / 3)
    np.testing.assert_allclose(errs[1:] / errs[:-1], 0.25, rtol=1e-9)


def test_grid_mismatch_is_rejected(small_grid):
    f = PredictableIntegrand.from_function(small_grid, lambda t, x: t + x)
    with pytest.raises(ValueError):
        walsh_integrate(f, sample_sheet_direct(small_grid.refined(), 0))


def test_diagnostics_csv(tmp_path, small_grid):
    B = sample_sheet_direct(small_grid, 1)
    f = PredictableIntegrand.from_function(small_grid, lambda t, x: x + t)
    p = tmp_path / "diag.csv"
    dump_diagnostics(p, f, B)
    lines = p.read_text().splitlines()
    assert lines[0] == "t,M_t,QV_t" and len(lines) == small_grid.n_t + 2
    rows = np.array([[float(c) for c in ln.split(",")] for ln in lines[1:]])
    np.testing.assert_allclose(rows[:, 1], walsh_integrate(f, B))
    np.testing.assert_allclose(rows[:, 2], quadratic_variation(f))
