import csv

import numpy as np
import pytest

from ldps.grid import Control, GridSpec
from ldps.kernel import apply_semigroup, heat_kernel
from ldps.presets import heat_linear, heat_reaction
from ldps.skeleton import (PicardConfig, PicardDivergence, convergence_sweep, solve_skeleton,
                           write_sweep_csv)

G = GridSpec(0.5, 50, 16)
K = heat_kernel(15)


def sine(amp=1.0, mode=1, grid=G):
    return amp * np.sqrt(2) * np.sin(mode * np.pi * grid.centers)


def mode_control(amp, grid=G, mode=1):
    return Control.from_function(grid, lambda t, r: amp * np.sqrt(2) * np.sin(mode * np.pi * r) + 0 * t)


def test_free_decay_without_control():
    x0 = np.random.default_rng(1).normal(size=16)
    f, rep = solve_skeleton(K, heat_linear(), x0, None, grid=G)
    for i in (0, 10, 50):
        np.testing.assert_allclose(f.values[i], apply_semigroup(K, G.times[i], 0.0, x0, G), atol=1e-12)
    assert rep.iterations <= 2


def test_zero_control_is_same_as_none():
    f, _ = solve_skeleton(K, heat_reaction(), sine(), None, grid=G)
    h, _ = solve_skeleton(K, heat_reaction(), sine(), Control.zero(G))
    assert f.distance(h) == 0.0


def test_single_mode_control_amplitude():
    """Oracle: a' = -mu_1 a + 2 from rest; only the first mode is excited."""
    errs = []
    for n_t in (50, 100, 200):
        g = GridSpec(0.5, n_t, 16)
        f, _ = solve_skeleton(K, heat_linear(), np.zeros(16), mode_control(2.0, g))
        c = K.basis.project(f.values, g)
        errs.append(np.max(np.abs(c[:, 0] - 2 * -np.expm1(-np.pi**2 * g.times) / np.pi**2)))
        assert np.max(np.abs(c[:, 1:])) < 1e-12
    assert errs[-1] < 2e-4
    assert errs[0] / errs[2] > 3.0


@pytest.mark.parametrize("amp,u", [(1.5, 2.0), (0.5, -1.0), (2.0, 0.0)])
def test_initial_guesses_agree_and_contract(amp, u):
    cfg = PicardConfig(tol=1e-10)
    a, ra = solve_skeleton(K, heat_reaction(), sine(amp), mode_control(u), cfg)
    b, rb = solve_skeleton(K, heat_reaction(), sine(amp), mode_control(u),
                           PicardConfig(tol=1e-10, init="free"))
    assert a.distance(b) <= 10 * cfg.tol
    for r in (ra, rb):
        assert r.final_gap < cfg.tol
        assert r.contraction_ratio < 1.0
        assert r.gaps[-1] < r.gaps[0]


def test_fixed_point_property():
    from ldps.skeleton import picard_map
    from ldps.solver import _Stepper
    u = mode_control(2.0)
    f, _ = solve_skeleton(K, heat_reaction(), sine(1.5), u, PicardConfig(tol=1e-13))
    again = picard_map(_Stepper(K, heat_reaction(), G), sine(1.5), f.values, u.values)
    assert np.max(np.abs(again - f.values)) < 1e-12


def test_divergence_reported_with_gap_history():
    with pytest.raises(PicardDivergence) as info:
        solve_skeleton(K, heat_reaction(), sine(1.5), mode_control(2.0), PicardConfig(max_iters=2, tol=1e-14))
    assert len(info.value.gaps) == 2


def test_grid_is_required_without_control():
    with pytest.raises(ValueError):
        solve_skeleton(K, heat_linear(), sine(), None)


@pytest.mark.parametrize("kw", [{"max_iters": 0}, {"tol": 0.0}, {"tol": -1.0}, {"init": "random"}])
def test_picard_config_validation(kw):
    with pytest.raises(ValueError):
        PicardConfig(**kw)


# -- small-noise convergence sweep


def test_sweep_with_zero_noise_level_is_exact():
    rows = convergence_sweep(K, heat_reaction(), sine(), mode_control(1.0), G, [0.2, 0.1], 5, 0,
                             theta=lambda e: 0.0, cfg=PicardConfig(tol=1e-11))
    for r in rows:
        assert r.q90 < 1e-9 and r.n_seeds == 5


def test_sweep_quantiles_shrink_with_noise():
    rows = convergence_sweep(K, heat_linear(), sine(), None, G, [0.2, 0.1, 0.05, 0.025], 200, 3)
    q90 = [r.q90 for r in rows]
    assert all(a > b for a, b in zip(q90, q90[1:]))
    assert q90[-1] < 0.5 * q90[0]
    # linear case: distance is exactly sqrt(eps) times a fixed field, so ratios are sqrt(2)
    np.testing.assert_allclose(np.array(q90[:-1]) / q90[1:], np.sqrt(2), rtol=1e-9)


def test_sweep_with_perturbed_data_tracks_perturbation():
    """With noise off and control u + eps * v, the distance is linear in eps."""
    v = mode_control(1.0, mode=2)
    base = mode_control(1.0)
    rows = convergence_sweep(
        K, heat_reaction(), sine(), base, G, [0.2, 0.1, 0.05], 3, 0, theta=lambda e: 0.0,
        u_eps=lambda e: Control(base.values + e * v.values, G), cfg=PicardConfig(tol=1e-13))
    d = np.array([r.q50 for r in rows])
    slope = np.polyfit(np.log([0.2, 0.1, 0.05]), np.log(d), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.05)


def test_sweep_rejects_non_decreasing_eps():
    with pytest.raises(ValueError, match="decreasing"):
        convergence_sweep(K, heat_linear(), sine(), None, G, [0.1, 0.2], 2, 0)


def test_sweep_csv(tmp_path):
    rows = convergence_sweep(K, heat_linear(), sine(), None, G, [0.2, 0.1], 10, 1)
    write_sweep_csv(tmp_path / "s.csv", rows)
    with open(tmp_path / "s.csv") as fh:
        got = list(csv.reader(fh))
    assert got[0] == ["eps", "q50", "q90", "n_seeds"]
    assert float(got[2][2]) == rows[1].q90 and int(float(got[1][3])) == 10
