"""Acceptance criteria 1-14, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s`` or ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import os
import sys
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from _shared import degiorgi, layer, mp_run, pinned  # noqa: E402
from fraclinic.certify import barrier_sweep, positive_part_membership  # noqa: E402
from fraclinic.energy import (dirderiv_confined, energy_confined, energy_pinned,  # noqa: E402
                              hs_tilde_norm, interpolation_check, pinned_residual)
from fraclinic.frac_ops import (FracParams, frac_laplacian, gagliardo_sq,  # noqa: E402
                                gagliardo_sq_spectral)
from fraclinic.grid_core import Grid, GridFunction  # noqa: E402
from fraclinic.pinned_solver import (bootstrap_exponents, nonexistence_probe,  # noqa: E402
                                     scaling_experiment)
from fraclinic.potentials import (ConfinementMatrix, cutoff_TR, power_W,  # noqa: E402
                                  quadratic_well, shifted_identity_L)

REL = 1e-12


def _bump(x, c, w):
    z = (x - c) / w
    out = np.zeros_like(x)
    m = np.abs(z) < 1
    out[m] = np.exp(-1.0 / (1.0 - z[m] ** 2))
    return out


def c01_cutoff_monotonicity():
    rng = np.random.default_rng(101)
    g = Grid(5.0, 201)
    bad, worst = 0, -math.inf
    for s in (0.25, 0.5, 0.75):
        p = FracParams(s)
        for _ in range(200):
            n = int(rng.integers(1, 4))
            q = GridFunction(g, rng.normal(0, rng.uniform(0.2, 3), (g.N, n)))
            R = rng.uniform(0.05, 2.5)
            a, b = gagliardo_sq(cutoff_TR(q, R), p), gagliardo_sq(q, p)
            worst = max(worst, (a - b) / b)
            bad += a > b * (1 + REL)
    return bad == 0, f"violations={bad} over 600 cases, worst relative change {worst:.3g}"


def c02_scaling_law():
    r25, r40, r50 = (scaling_experiment(s) for s in (0.25, 0.4, 0.5))
    dec = all(b < a for a, b in zip(r50.energies, r50.energies[1:]))
    ok = (abs(r25.slope - 0.5) <= 0.1 and abs(r40.slope - 0.2) <= 0.1 and dec
          and r50.slope >= 0.9)
    return ok, (f"slopes s=0.25: {r25.slope:.4f}, s=0.4: {r40.slope:.4f}, "
                f"s=0.5: {r50.slope:.4f} (decreasing={dec})")


def c03_operator_consistency():
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    g = Grid(8.0, 4097)
    x = g.x
    worst = 0.0
    for _ in range(10):
        c, w, k = rng.uniform(-2, 2), rng.uniform(0.8, 3.0), rng.uniform(0, 3)
        q = GridFunction(g, _bump(x, c, w) * np.cos(k * x))
        for s in (0.25, 0.5, 0.75):
            p = FracParams(s)
            a, b = gagliardo_sq(q, p), gagliardo_sq_spectral(q, p)
            worst = max(worst, abs(a - b) / b)
    elapsed = time.perf_counter() - t0
    # symbol: windowed cos(k x) -> |k|^(2s) cos(k x) in the interior
    sym = 0.0
    inner = np.abs(x) < 1.5
    for s in (0.25, 0.5, 0.75):
        k = 2.0
        q = GridFunction(g, np.cos(k * x) * np.exp(-(x / 4) ** 8))
        L = frac_laplacian(q, FracParams(s)).values[:, 0]
        sym = max(sym, float(np.max(np.abs(L[inner] - k ** (2 * s) * q.values[inner, 0])))
                  / k ** (2 * s))
    # limits on a Gaussian
    gq = GridFunction(g, np.exp(-x**2))
    sel = np.abs(x) < 2
    minus_dd = -(4 * x**2 - 2) * np.exp(-x**2)
    L1 = frac_laplacian(gq, FracParams(0.99)).values[:, 0]
    L0 = frac_laplacian(gq, FracParams(0.01)).values[:, 0]
    e1 = float(np.max(np.abs(L1[sel] - minus_dd[sel])) / np.max(np.abs(minus_dd)))
    e0 = float(np.max(np.abs(L0[sel] - gq.values[sel, 0])) / np.max(gq.values))
    ok = worst <= 1e-2 and elapsed <= 10 and sym <= 0.02 and e1 <= 0.05 and e0 <= 0.05
    return ok, (f"spectral rel diff {worst:.3g} ({elapsed:.2f}s), symbol {sym:.3g}, "
                f"s->1 {e1:.3g}, s->0 {e0:.3g}")


def c04_pinned_solve():
    prob, q, rep = pinned(50.0, 1001)
    _, q2, rep2 = pinned(50.0, 2001)
    _, qw, repw = pinned(100.0, 2001)
    diff = float(np.max(np.abs(q2.values[::2] - q.values)) / q.sup())
    ok = (rep.residual <= 1e-6 and rep2.residual <= 1e-6 and rep.decay["sup"] <= 1e-2
          and repw.decay["sup"] <= 0.5 * rep.decay["sup"] and rep.evenness_defect <= 1e-8
          and diff <= 0.01)
    return ok, (f"residual {rep.residual:.3g}, edge sup {rep.decay['sup']:.3g} -> "
                f"{repw.decay['sup']:.3g} at 2X, evenness {rep.evenness_defect:.3g}, "
                f"N vs 2N {diff:.4f}")


def c05_local_minimality():
    prob, q, _ = pinned(50.0, 1001)
    V, p, x = prob.potential, prob.frac, prob.grid.x
    rng = np.random.default_rng(505)
    free = ~prob.pin.mask(prob.grid.N)
    E0 = energy_pinned(q, V, p).total
    bad, worst = 0, math.inf
    for _ in range(100):
        c = rng.uniform(-45, 45)
        w = rng.uniform(0.5, 10)
        psi = _bump(x, c, w) * rng.normal(size=x.size) * free
        if not np.any(psi):
            psi = _bump(x, 3.0, 1.5) * free
        psi /= np.max(np.abs(psi))
        for tau in (1e-3, -1e-3):
            E = energy_pinned(q.with_values(q.values + tau * psi[:, None]), V, p).total
            worst = min(worst, E - E0)
            bad += E < E0 - 1e-8
    return bad == 0, f"violations={bad} over 200 trials, min I(q+tau psi)-I(q) = {worst:.3g}"


def c06_nonexistence():
    rep = nonexistence_probe(0.5)
    ok = rep.final_sup <= 1e-6 and rep.min_operator_at_max >= -1e-8 and rep.checks > 0
    return ok, (f"final sup {rep.final_sup:.3g} after {rep.steps} steps, "
                f"min operator at max {rep.min_operator_at_max:.3g} over {rep.checks} iterates")


def c07_mountain_pass():
    t0 = time.perf_counter()
    prob, q, rep, _ = mp_run(0.75)
    elapsed = time.perf_counter() - t0
    ok = (rep.beta_geom <= rep.c_est <= rep.upper_bound and rep.dual_residual <= 1e-4
          and rep.crit_norm <= 1.05 * rep.ps_bound and rep.crit_l2 >= 1e-3 and elapsed <= 300)
    return ok, (f"beta {rep.beta_geom:.4g} <= c {rep.c_est:.6g} <= {rep.upper_bound:.4g}, "
                f"dual {rep.dual_residual:.3g}, norm {rep.crit_norm:.5g} vs bound "
                f"{rep.ps_bound:.5g}, L2 {rep.crit_l2:.4g}, {elapsed:.1f}s")


def c08_degiorgi():
    tr = degiorgi(0.4)
    ok = (tr.admissible and tr.U[0] <= tr.delta**tr.t * (1 + REL) and tr.mu_dg < 1
          and tr.bound >= tr.measured_sup)
    return ok, (f"delta {tr.delta:.6f}, t {tr.t:.4g}, U0 {tr.U[0]:.4g} <= {tr.delta**tr.t:.4g}, "
                f"mu_dg {tr.mu_dg:.3g}, bound {tr.bound:.10g} >= sup {tr.measured_sup:.10g}")


def c09_layer():
    parts, ok = [], True
    for s in (0.25, 0.4):
        lay = layer(s)
        good = (lay.monotone_defect >= -1e-10 and lay.endpoint_gap <= 0.05
                and abs(lay.tail_exponent - (1 + 2 * s)) <= 0.2
                and abs(lay.a_endpoint + 2) <= 0.05)
        ok &= good
        parts.append(f"s={s}: X={lay.profile.grid.X:.4g}, tail exp {lay.tail_exponent:.3f}, "
                     f"a(X) {lay.a_endpoint:.4f}, gap {lay.endpoint_gap:.4f}")
    return ok, "; ".join(parts)


def c10_barrier():
    prob, q, _, _ = mp_run(0.4)
    lay = layer(0.4)
    sweep = barrier_sweep(q, lay, prob.matrix, prob.potential, (0.1, 0.01, 0.001), A_mult=2.0)
    x = q.grid.x
    beta = np.interp(x, lay.x, lay.beta)
    first = sweep[0]
    ok = min(first.v_min + first.w_min) >= -1e-8
    for c in sweep:
        env = c.A * beta + c.eta * (1 + np.abs(x) ** c.s) + 1e-8
        ok &= bool(np.all(np.abs(q.values) <= env[:, None]))
    mins = ", ".join(f"eta={c.eta}: {min(c.v_min + c.w_min):.4g}" for c in sweep)
    return ok, f"R0 {first.R0:.3g}, A {first.A:.4g}, minima {mins}"


def c11_gradient_checks():
    rng = np.random.default_rng(1111)
    g = Grid(3.0, 121)
    V, W, L = quadratic_well(), power_W(3.0), shifted_identity_L()
    worst, t = 0.0, 1e-5
    for _ in range(50):
        p = FracParams(rng.uniform(0.1, 0.9))
        q = GridFunction(g, rng.normal(0, 0.7, (g.N, 1)))
        psi = GridFunction(g, rng.normal(0, 1, (g.N, 1)))
        qp, qm = q.with_values(q.values + t * psi.values), q.with_values(q.values - t * psi.values)
        fd = (energy_pinned(qp, V, p).total - energy_pinned(qm, V, p).total) / (2 * t)
        an = g.h * float(np.sum(pinned_residual(q, V, p) * psi.values))
        worst = max(worst, abs(fd - an) / abs(an))
        fd = (energy_confined(qp, W, L, p).total - energy_confined(qm, W, L, p).total) / (2 * t)
        an = dirderiv_confined(q, psi, W, L, p)
        worst = max(worst, abs(fd - an) / abs(an))
    return worst <= 1e-5, f"worst relative mismatch {worst:.3g} over 100 checks"


def _coupled_L():
    def L(x):
        x = np.asarray(x, dtype=float)
        out = np.empty((x.size, 2, 2))
        out[:, 0, 0] = out[:, 1, 1] = 1.0 + x**2
        out[:, 0, 1] = out[:, 1, 0] = 0.5
        return out

    return ConfinementMatrix("coupled", L, alpha_L=0.5, n=2, nonnegative=True, growth=2.0)


def c12_inequality_suites():
    rng = np.random.default_rng(1212)
    g = Grid(3.0, 101)
    Lid = shifted_identity_L(n=2)
    Lc = _coupled_L()
    tri = hom = interp = pos = 0
    for _ in range(500):
        p = FracParams(rng.uniform(0.05, 0.95))
        a = GridFunction(g, rng.normal(0, rng.uniform(0.1, 3), (g.N, 2)))
        b = GridFunction(g, rng.normal(0, rng.uniform(0.1, 3), (g.N, 2)))
        na, nb = hs_tilde_norm(a, Lid, p), hs_tilde_norm(b, Lid, p)
        nab = hs_tilde_norm(a.with_values(a.values + b.values), Lid, p)
        tri += nab > (na + nb) * (1 + REL)
        lam = rng.uniform(-5, 5)
        nl = hs_tilde_norm(a.with_values(lam * a.values), Lid, p)
        hom += abs(nl - abs(lam) * na) > REL * abs(lam) * na + 1e-300
        pe = rng.uniform(1, 3)
        qe = rng.uniform(pe + 0.5, 10)
        interp += not interpolation_check(a, pe, qe, rng.uniform(0.05, 0.95), rtol=REL).holds
        c = rng.uniform(0.01, 2)
        mixed = positive_part_membership(a, Lid, c, p)  # diagonal L, any sign
        nonneg = positive_part_membership(a.with_values(np.abs(a.values)), Lc, c, p)
        pos += not (mixed.seminorm_contracts and mixed.confinement_contracts
                    and nonneg.seminorm_contracts and nonneg.confinement_contracts)
    ok = tri == hom == interp == pos == 0
    return ok, (f"violations: triangle {tri}, homogeneity {hom}, interpolation {interp}, "
                f"positive part {pos} (500 cases each)")


def c13_bootstrap():
    seq, lim = bootstrap_exponents(0.4, 0.5, 0.4)
    crosses = next(k for k, b in enumerate(seq) if b > 1)
    incr = all(b - a >= 2 * 0.4 - 1 + 0.5 - 1e-15 for a, b in zip(seq, seq[1:]))
    ok = crosses == 2 and lim == 1.6 and incr and seq[1] == 1.0
    return ok, f"sequence {seq}, crosses 1 at k={crosses}, limit {lim!r}"


def c14_embedding():
    rng = np.random.default_rng(1414)
    g = Grid(6.0, 241)
    L = shifted_identity_L(alpha=2.0)
    p1, p2 = FracParams(0.3), FracParams(0.6)
    mult = 1.0 / L.alpha_L + 1.0
    bad, worst = 0, 0.0
    for _ in range(100):
        kind = rng.integers(3)
        if kind == 0:
            v = rng.normal(size=g.N)
        elif kind == 1:
            v = _bump(g.x, rng.uniform(-3, 3), rng.uniform(0.2, 3)) * rng.normal()
        else:
            v = np.cos(rng.uniform(0, 20) * g.x) * np.exp(-(g.x / rng.uniform(0.3, 3)) ** 2)
        q = GridFunction(g, v)
        lhs, rhs = hs_tilde_norm(q, L, p1) ** 2, mult * hs_tilde_norm(q, L, p2) ** 2
        worst = max(worst, lhs / rhs)
        bad += lhs > rhs * (1 + REL)
    return bad == 0, f"violations={bad}/100, worst ratio lhs/rhs {worst:.4f} (multiplier {mult})"


CRITERIA = [c01_cutoff_monotonicity, c02_scaling_law, c03_operator_consistency,
            c04_pinned_solve, c05_local_minimality, c06_nonexistence, c07_mountain_pass,
            c08_degiorgi, c09_layer, c10_barrier, c11_gradient_checks, c12_inequality_suites,
            c13_bootstrap, c14_embedding]


def _line(i, fn):
    ok, detail = fn()
    return ok, f"criterion {i:2d} {'PASS' if ok else 'FAIL'}: {fn.__name__[4:]}: {detail}"


@pytest.mark.parametrize("i,fn", list(enumerate(CRITERIA, 1)), ids=[f.__name__ for f in CRITERIA])
def test_criterion(i, fn, capsys):
    ok, line = _line(i, fn)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    results = [_line(i, fn) for i, fn in enumerate(CRITERIA, 1)]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
