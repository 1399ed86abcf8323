from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraclinic.energy import (dirderiv_confined, energy_confined, energy_pinned, hs_tilde_norm,
                              interpolation_check, lattice_norm, pinned_residual)
from fraclinic.frac_ops import FracParams
from fraclinic.grid_core import Extension, Grid, GridFunction
from fraclinic.potentials import power_W, quadratic_well, shifted_identity_L

G = Grid(3.0, 121)


def _rand(rng, n=1, scale=0.5):
    return GridFunction(G, rng.normal(0, scale, (G.N, n)))


def test_pinned_gradient_matches_central_difference():
    rng = np.random.default_rng(3)
    V, p = quadratic_well(), FracParams(0.6)
    q, psi = _rand(rng), _rand(rng, scale=1)
    t = 1e-5
    fd = (energy_pinned(q.with_values(q.values + t * psi.values), V, p).total
          - energy_pinned(q.with_values(q.values - t * psi.values), V, p).total) / (2 * t)
    an = G.h * np.sum(pinned_residual(q, V, p) * psi.values)
    assert fd == pytest.approx(an, rel=1e-6)


def test_confined_dirderiv_matches_central_difference():
    rng = np.random.default_rng(4)
    W, L, p = power_W(), shifted_identity_L(), FracParams(0.4)
    q, psi = _rand(rng), _rand(rng, scale=1)
    t = 1e-5
    fd = (energy_confined(q.with_values(q.values + t * psi.values), W, L, p).total
          - energy_confined(q.with_values(q.values - t * psi.values), W, L, p).total) / (2 * t)
    assert fd == pytest.approx(dirderiv_confined(q, psi, W, L, p), rel=1e-6)


def test_zero_profile_energies_vanish():
    z = GridFunction.zeros(G)
    assert energy_pinned(z, quadratic_well(), FracParams(0.5)).total == 0.0
    assert energy_confined(z, power_W(), shifted_identity_L(), FracParams(0.5)).total == 0.0


def test_constant_tail_with_nonzero_V_is_minus_infinity_potential():
    q = GridFunction(G, np.ones(G.N), Extension.constant(1.0, 1.0))
    e = energy_pinned(q, quadratic_well(), FracParams(0.5))
    assert e.potential_integral == -np.inf


def test_power_tail_confinement_converges_or_raises():
    L = shifted_identity_L()
    q = GridFunction(G, np.exp(-G.x**2) + 1e-3, Extension.power(3.0))
    assert np.isfinite(hs_tilde_norm(q, L, FracParams(0.5)))
    with pytest.raises(ValueError):
        hs_tilde_norm(GridFunction(G, np.ones(G.N), Extension.power(1.0)), L, FracParams(0.5))


@settings(max_examples=60, deadline=None)
@given(st.floats(1.0, 3.0), st.floats(3.5, 8.0), st.floats(0.05, 0.95), st.integers(0, 10**6))
def test_interpolation_inequality(pe, qe, theta, seed):
    u = GridFunction(G, np.random.default_rng(seed).normal(size=(G.N, 2)))
    assert interpolation_check(u, pe, qe, theta).holds


def test_lattice_norm_inf():
    q = GridFunction(G, np.stack([np.full(G.N, 3.0), np.full(G.N, 4.0)], axis=1))
    assert lattice_norm(q, np.inf) == 5.0
