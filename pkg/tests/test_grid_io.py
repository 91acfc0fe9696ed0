import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldps.grid import Control, Field, GridSpec, holder_seminorm_1d, holder_seminorm_st
from ldps.io import (MAGIC, dumps, read_binary, read_grid_csv, to_jsonable, write_binary,
                     write_dat, write_grid_csv, write_json, write_table_csv)


def test_grid_geometry():
    g = GridSpec(T=2.0, n_t=4, n_x=5, domain=(1.0, 2.0))
    assert g.dt == 0.5 and g.dx == pytest.approx(0.2)
    np.testing.assert_allclose(g.times, [0, 0.5, 1, 1.5, 2])
    np.testing.assert_allclose(g.centers, [1.1, 1.3, 1.5, 1.7, 1.9])
    assert g.refined().n_t == 8 and g.with_seed(3).seed == 3


@pytest.mark.parametrize("kwargs", [dict(T=0, n_t=1, n_x=1), dict(T=1, n_t=0, n_x=1),
                                    dict(T=1, n_t=1, n_x=0), dict(T=1, n_t=1, n_x=1, domain=(1, 1)),
                                    dict(T=1, n_t=1, n_x=1, seed=-1)])
def test_grid_rejects_bad_input(kwargs):
    with pytest.raises(ValueError):
        GridSpec(**kwargs)


def test_field_is_read_only_and_finite(unit_grid):
    v = np.zeros((unit_grid.n_t + 1, unit_grid.n_x))
    f = Field(v, unit_grid)
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0
    v[0, 0] = np.nan
    with pytest.raises(ValueError):
        Field(v, unit_grid)
    with pytest.raises(ValueError):
        Field(np.zeros((2, 2)), unit_grid)


def test_constant_field_holder_norm_is_sup(unit_grid):
    f = Field(np.full((unit_grid.n_t + 1, unit_grid.n_x), -2.5), unit_grid)
    assert f.holder_seminorm(0.3) == 0.0
    assert f.holder_norm(0.3) == 2.5
    assert f.holder_norm(0.3, space_time=True) == 2.5


def test_linear_profile_holder_seminorm():
    # |r - q|^(1 - alpha) is largest at the widest pair of points
    r = np.linspace(0.0005, 0.9995, 1000)
    assert holder_seminorm_1d(r, r, 0.5) == pytest.approx(np.sqrt(0.999), rel=1e-12)


@given(st.floats(0.05, 0.95), st.floats(-3, 3))
@settings(max_examples=30, deadline=None)
def test_holder_seminorm_scales_linearly(alpha, c):
    x = np.linspace(0.05, 0.95, 12)
    v = np.sin(5 * x)
    assert holder_seminorm_1d(c * v, x, alpha) == pytest.approx(abs(c) * holder_seminorm_1d(v, x, alpha),
                                                               rel=1e-12, abs=1e-14)


def test_space_time_seminorm_dominates_spatial(unit_grid):
    rng = np.random.default_rng(0)
    v = rng.normal(size=(unit_grid.n_t + 1, unit_grid.n_x))
    f = Field(v, unit_grid)
    assert holder_seminorm_st(v, unit_grid.times, unit_grid.centers, 0.3) >= f.holder_seminorm(0.3) - 1e-12


def test_control_norm_and_bound(unit_grid):
    u = Control.from_function(unit_grid, lambda t, r: 2.0 + 0 * t * r)
    assert u.norm_sq == pytest.approx(4.0)
    assert u.action == pytest.approx(2.0)
    with pytest.raises(ValueError):
        Control.from_function(unit_grid, lambda t, r: 2.0 + 0 * t * r, bound=3.9)
    assert (u + u.scaled(-1.0)).norm_sq == 0.0


def test_control_integrated_corner_equals_total_mass(unit_grid):
    rng = np.random.default_rng(1)
    u = Control(rng.normal(size=(unit_grid.n_t, unit_grid.n_x)), unit_grid)
    I = u.integrated()
    assert I.shape == (unit_grid.n_t + 1, unit_grid.n_x + 1)
    assert I[-1, -1] == pytest.approx(u.values.sum() * unit_grid.cell_volume)
    assert np.all(I[0] == 0) and np.all(I[:, 0] == 0)


def test_binary_round_trip_and_header(tmp_path):
    data = np.arange(12, dtype=float).reshape(3, 4) / 7
    p = tmp_path / "x.bin"
    write_binary(p, data, n_modes=5, seed=2**63 + 1)
    raw = p.read_bytes()
    assert raw[:4] == MAGIC
    assert int.from_bytes(raw[4:6], "little") == 1
    assert len(raw) == 4 + 2 + 4 + 4 + 4 + 8 + 8 * 12
    back, meta = read_binary(p)
    np.testing.assert_array_equal(back, data)
    assert meta == {"version": 1, "n_t": 3, "n_x": 4, "n_modes": 5, "seed": 2**63 + 1}


@pytest.mark.parametrize("mutate", [lambda b: b"XXXX" + b[4:], lambda b: b[:-8], lambda b: b[:10]])
def test_binary_rejects_corruption(tmp_path, mutate):
    p = tmp_path / "x.bin"
    write_binary(p, np.ones((2, 2)))
    p.write_bytes(mutate(p.read_bytes()))
    with pytest.raises(ValueError):
        read_binary(p)


def test_grid_csv_round_trip_is_exact(tmp_path):
    t = np.array([0.0, 0.1, 0.2])
    x = np.array([1 / 3, 2 / 3])
    v = np.array([[np.pi, -np.e], [1e-300, 1e300], [0.1, 0.2]])
    p = tmp_path / "g.csv"
    write_grid_csv(p, t, x, v)
    assert p.read_text().splitlines()[0] == "t,x,value"
    rows = read_grid_csv(p)
    np.testing.assert_array_equal(rows[:, 2], v.ravel())
    np.testing.assert_array_equal(rows[:, 0], np.repeat(t, 2))


def test_tables_dat_and_json(tmp_path):
    write_table_csv(tmp_path / "t.csv", ["a", "b"], [(1, 0.5), (2, 0.25)])
    assert (tmp_path / "t.csv").read_text().splitlines() == ["a,b", "1,0.5", "2,0.25"]
    write_dat(tmp_path / "d.dat", [1.0, 2.0], [3.0, 4.0])
    assert (tmp_path / "d.dat").read_text() == "1.0 3.0\n2.0 4.0\n"
    obj = {"b": np.inf, "a": np.arange(2), "c": np.bool_(True), "d": -np.inf, "e": np.nan}
    write_json(tmp_path / "r.json", obj)
    back = json.loads((tmp_path / "r.json").read_text())
    assert back == {"a": [0, 1], "b": "inf", "c": True, "d": "-inf", "e": "nan"}
    assert dumps(obj) == dumps(to_jsonable(obj))
