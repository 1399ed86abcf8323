from __future__ import annotations

import numpy as np
import pytest

from _shared import degiorgi, layer, mp_run
from fraclinic.certify import (build_barrier, degiorgi_verify, fit_tail_exponent,
                               positive_part_membership)
from fraclinic.frac_ops import FracParams
from fraclinic.grid_core import Grid, GridFunction
from fraclinic.potentials import ConfinementMatrix, power_W, shifted_identity_L


def test_degiorgi_zero():
    tr = degiorgi_verify(GridFunction.zeros(Grid(5.0, 101)), 0.4)
    assert tr.bound == 0.0 and all(u == 0 for u in tr.U)


def test_degiorgi_on_mountain_pass_solution():
    tr = degiorgi()
    assert tr.admissible and tr.bound_holds
    assert tr.U[0] <= tr.delta**tr.t * (1 + 1e-12)  # equality for n = 1, up to rounding
    assert all(b <= a for a, b in zip(tr.U, tr.U[1:]))
    assert tr.structural == {"ww": True, "subsets": True, "boundPhi": True}
    ratios = [tr.U[k] / tr.U[k - 1] for k in range(2, len(tr.U)) if tr.U[k - 1] > 0]
    assert max(ratios) <= tr.mu_dg < 1


def test_layer_properties():
    lay = layer(0.4)
    u = lay.profile.values[:, 0]
    assert u[lay.profile.grid.mid] == 0.0
    assert lay.monotone_defect >= -1e-10
    assert np.all(lay.beta > 0)
    assert lay.a.max() <= 1.0 and lay.a.min() > -2.0
    assert lay.beta_integral == pytest.approx(2.0, abs=0.05)


def test_tail_fit_oracle():
    x = np.linspace(1, 100, 1000)
    assert fit_tail_exponent(x, 3 * x**-1.7, (10, 50)) == pytest.approx(1.7)


def test_barrier_zero_profile_and_monotone_in_A():
    prob, q, _, _ = mp_run(0.4)
    lay = layer(0.4)
    W, L = prob.potential, prob.matrix
    z = GridFunction.zeros(q.grid)
    cz = build_barrier(z, lay, L, W, 0.1, sup_bound=1.0)
    assert min(cz.v_min + cz.w_min) > 0
    c2 = build_barrier(q, lay, L, W, 0.1, A_mult=2.0)
    c3 = build_barrier(q, lay, L, W, 0.1, A_mult=3.0)
    assert all(b >= a for a, b in zip(c2.v_min + c2.w_min, c3.v_min + c3.w_min))
    with pytest.raises(ValueError):
        build_barrier(q, lay, L, W, 0.1, A_mult=1.0)


def test_positive_part_basic():
    g = Grid(3.0, 61)
    L, p = shifted_identity_L(), FracParams(0.4)
    below = GridFunction(g, np.full(g.N, 0.1))
    r = positive_part_membership(below, L, 0.5, p)
    assert r.norm_u == 0.0
    rng = np.random.default_rng(0)
    q = GridFunction(g, np.abs(rng.normal(size=(g.N, 1))))
    norms = [positive_part_membership(q, L, c, p).norm_u for c in (0.1, 0.01, 1e-6)]
    from fraclinic.energy import hs_tilde_norm
    full = hs_tilde_norm(q, L, p)
    assert abs(norms[-1] - full) < abs(norms[0] - full)
    assert norms[-1] == pytest.approx(full, rel=1e-4)


def test_positive_part_confinement_counterexample():
    # positive off-diagonal coupling with a sign-changing profile: the confinement
    # integral of the positive part can exceed that of q
    M = np.array([[1.0, 0.9], [0.9, 1.0]])
    L = ConfinementMatrix("coupled", lambda x: np.broadcast_to(M, (len(x), 2, 2)), 0.1, n=2,
                          nonnegative=True)
    g = Grid(2.0, 41)
    q = GridFunction(g, np.tile([-1.0, 2.0], (g.N, 1)) * (np.abs(g.x) < 1)[:, None])
    r = positive_part_membership(q, L, 1e-3, FracParams(0.4))
    assert r.seminorm_contracts
    assert not r.confinement_contracts
