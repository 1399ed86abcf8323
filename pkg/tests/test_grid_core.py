from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraclinic.grid_core import (Extension, Grid, GridFunction, max_min_combine, pin_indices,
                                 read_csv, reflect, write_csv)


@pytest.mark.parametrize("X,N", [(5.0, 11), (3.7, 1001), (50.0, 2001)])
def test_grid_nodes_symmetric_and_zero_centered(X, N):
    g = Grid(X, N)
    assert g.x[g.mid] == 0.0
    np.testing.assert_array_equal(g.x, -g.x[::-1])
    assert g.x[-1] == pytest.approx(X, rel=1e-14)


@pytest.mark.parametrize("N", [2, 10, 1])
def test_grid_rejects_even_or_tiny(N):
    with pytest.raises(ValueError):
        Grid(1.0, N)


def test_refine_and_widen_nest():
    g = Grid(3.0, 31)
    r, w = g.refine(), g.widen()
    assert r.X == 3.0 and r.h == pytest.approx(g.h / 2)
    assert w.X == 6.0 and w.h == pytest.approx(g.h)
    np.testing.assert_allclose(r.x[::2], g.x, atol=1e-14)


def test_values_are_read_only():
    q = GridFunction.zeros(Grid(1.0, 5))
    with pytest.raises(ValueError):
        q.values[0, 0] = 1.0


def test_nonfinite_rejected():
    with pytest.raises(ValueError):
        GridFunction(Grid(1.0, 3), [0.0, np.nan, 0.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=9, max_size=9))
def test_reflect_involution_and_max_min_symmetry(vals):
    g = Grid(2.0, 9)
    q = GridFunction(g, vals)
    np.testing.assert_array_equal(reflect(reflect(q)).values, q.values)
    M, m = max_min_combine(q, reflect(q))
    np.testing.assert_array_equal(M.values, M.values[::-1])
    np.testing.assert_array_equal(m.values, m.values[::-1])
    np.testing.assert_array_equal(M.values + m.values, q.values + reflect(q).values)


def test_max_min_constant_tails():
    g = Grid(1.0, 5)
    q = GridFunction(g, np.zeros(5), Extension.constant(-1, 2))
    M, m = max_min_combine(q, reflect(q))
    assert M.extension.left == (2.0,) and m.extension.right == (-1.0,)


def test_pin_indices_interval_and_point():
    g = Grid(2.0, 41)
    pin = pin_indices(g, -1.0, 1.0)
    assert g.x[pin.indices[0]] == pytest.approx(-1.0) and g.x[pin.indices[-1]] == pytest.approx(1.0)
    assert pin_indices(g, 0.0, 0.0, s=0.75).indices.tolist() == [g.mid]
    with pytest.raises(ValueError):
        pin_indices(g, 0.0, 0.0, s=0.5)
    with pytest.raises(ValueError):
        pin_indices(g, 1.0, -1.0)
    with pytest.raises(ValueError):
        pin_indices(g, 2.5, 2.5, s=0.75)


def test_csv_round_trip(tmp_path):
    g = Grid(1.5, 7)
    q = GridFunction(g, np.stack([np.sin(g.x), np.cos(g.x)], axis=1))
    path = tmp_path / "q.csv"
    write_csv(q, path)
    back = read_csv(path)
    assert back.grid == g
    np.testing.assert_array_equal(back.values, q.values)


def test_power_extension_needs_positive_exponent():
    with pytest.raises(ValueError):
        Extension.power(0.0)
