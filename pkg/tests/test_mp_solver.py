from __future__ import annotations

import math

import numpy as np
import pytest

from _shared import confined_problem, mp_run
from fraclinic.energy import dirderiv_confined, hs_tilde_norm
from fraclinic.grid_core import GridFunction
from fraclinic.mp_solver import (choose_endpoint, nontriviality_audit, ps_norm_bound, rho_beta,
                                 t_bar_formula, unit_plateau)
from fraclinic.potentials import shifted_identity_L


def test_ps_norm_bound_values():
    assert ps_norm_bound(1.0, 3.0) == pytest.approx(math.sqrt(6))
    assert ps_norm_bound(2.0, 4.0) == pytest.approx(math.sqrt(8))
    assert ps_norm_bound(0.0, 3.0) == 0.0
    with pytest.raises(ValueError):
        ps_norm_bound(1.0, 2.0)


def test_rho_beta_formula_s_large():
    # rho = delta / c_inf, beta = rho^2 / 4 with delta = 0.2, c_inf = 1
    rho = 0.2 / 1.0
    assert 0.25 * rho**2 == pytest.approx(0.01)


def test_t_bar_direct():
    # mu = 3, omega_1 = 1/3 on (-1, 1): t_bar = max(rho, (2*(2/3)/n^2)^(-1)) + 1
    nd = 2.0
    assert t_bar_formula(0.5, 2 / 3, nd, 3.0) == pytest.approx(max(0.5, nd**2 / (4 / 3)) + 1)


@pytest.mark.parametrize("s", [0.4, 0.75])
def test_endpoint_and_geometry(s):
    prob = confined_problem(s, h=0.04)
    rho, beta, info = rho_beta(prob)
    assert beta > 0
    if s <= 0.5:
        assert 1 - info["k"] * rho > 0
    ep = choose_endpoint(prob, rho)
    assert ep.energy < 0 and ep.norm > rho
    plateau = unit_plateau(prob.grid)
    inside = np.abs(prob.grid.x) < 1
    assert np.all(plateau.values[inside] == 1.0)
    assert np.all(plateau.values[np.abs(prob.grid.x) >= 2] == 0.0)


def test_mountain_pass_invariants():
    prob, q, rep, path = mp_run(0.75)
    assert rep.converged and rep.dual_residual <= 1e-4
    assert rep.sandwich
    assert rep.initial_path_max <= rep.endpoint_w_bound
    assert rep.crossing_energy >= rep.beta_geom
    assert rep.crit_norm <= 1.05 * rep.ps_bound
    assert np.any(path.nodes[-1].values) and not np.any(path.nodes[0].values)
    # dual norm is a sup over test directions: any probe gives a smaller pairing
    rng = np.random.default_rng(0)
    for _ in range(5):
        psi = GridFunction(prob.grid, rng.normal(size=(prob.grid.N, 1)))
        pair = abs(dirderiv_confined(q, psi, prob.potential, prob.matrix, prob.frac))
        assert pair <= rep.dual_residual * hs_tilde_norm(psi, prob.matrix, prob.frac) * (1 + 1e-9)


def test_audit():
    prob, q, rep, _ = mp_run(0.75)
    a = nontriviality_audit(q, prob, 10.0)
    assert a.beta_K >= 101 - 1e-9
    assert a.concentrated and not a.trivial
    z = nontriviality_audit(GridFunction.zeros(prob.grid), prob, 4.0)
    assert z.trivial and z.outer_mass == 0.0


def test_beta_K_grows():
    L = shifted_identity_L()
    vals = [np.min(np.linalg.eigvalsh(L.L(np.array([K, -K])))) for K in (1, 5, 25)]
    assert vals == sorted(vals)
