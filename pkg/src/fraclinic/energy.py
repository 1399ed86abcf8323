"""Pinned and confined energies, first variations, the ~H^s norm, inequality checks.

Spatial integrals use the lattice rule h * sum_i over box nodes, the same node set as
the seminorm, so for zero-extended profiles the gradient of the discrete energy with
respect to node values is exactly h times the discrete Euler-Lagrange residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .frac_ops import FracParams, _power_padded, apply_laplacian, gagliardo_sq
from .grid_core import GridFunction
from .potentials import ConfinedPotential, ConfinementMatrix, PinnedPotential


@dataclass(frozen=True)
class PinnedEnergyValue:
    kinetic: float
    potential_integral: float
    total: float

    def as_dict(self):
        return {"kinetic": self.kinetic, "potential_integral": self.potential_integral,
                "total": self.total}


@dataclass(frozen=True)
class ConfinedEnergyValue:
    kinetic: float
    confinement: float
    w_integral: float
    total: float

    def as_dict(self):
        return {"kinetic": self.kinetic, "confinement": self.confinement,
                "w_integral": self.w_integral, "total": self.total}


def _tail_nodes(q: GridFunction):
    """Exterior nodes and values of a non-zero tail (power tails only)."""
    big, vals, box = _power_padded(q)
    mask = np.ones(big.N, dtype=bool)
    mask[box] = False
    return big.x[mask], vals[mask]


def energy_pinned(q: GridFunction, V: PinnedPotential, p: FracParams) -> PinnedEnergyValue:
    h = q.grid.h
    kinetic = 0.5 * gagliardo_sq(q, p)
    pot = float(h * np.sum(V.V(q.values)))
    ext = q.extension
    if ext.kind == "power":
        _, tv = _tail_nodes(q)
        pot += float(h * np.sum(V.V(tv)))
    elif ext.kind == "constant":
        vl = float(V.V(np.asarray(ext.left)[None, :])[0])
        vr = float(V.V(np.asarray(ext.right)[None, :])[0])
        if vl != 0.0 or vr != 0.0:
            pot = -math.inf
    return PinnedEnergyValue(kinetic, pot, kinetic - pot)


def pinned_residual(q: GridFunction, V: PinnedPotential, p: FracParams) -> np.ndarray:
    """(-Delta)^s q - grad V(q) at every node."""
    return apply_laplacian(q.values, q.grid, p, q.extension) - V.grad(q.values)


def grad_energy_pinned(q: GridFunction, V: PinnedPotential, p: FracParams,
                       free_indices) -> GridFunction:
    """Residual on free nodes, 0 on pinned ones. Energy gradient = h * this."""
    res = pinned_residual(q, V, p)
    mask = np.zeros(q.grid.N, dtype=bool)
    mask[np.asarray(free_indices, dtype=int)] = True
    res[~mask] = 0.0
    return GridFunction(q.grid, res)


def _confinement_integral(q: GridFunction, L: ConfinementMatrix) -> float:
    x, h = q.grid.x, q.grid.h
    val = float(h * np.sum(L.quad_form(x, q.values)))
    ext = q.extension
    if ext.kind == "constant":
        if np.any(np.asarray(ext.left)) or np.any(np.asarray(ext.right)):
            raise ValueError("confinement integral diverges for a nonzero constant tail")
    elif ext.kind == "power":
        growth = L.growth if L.growth is not None else 0.0
        if 2 * ext.exponent - growth <= 1:
            raise ValueError(f"confinement tail diverges: L ~ |x|^{growth}, "
                             f"q ~ |x|^-{ext.exponent}")
        tx, tv = _tail_nodes(q)
        val += float(h * np.sum(L.quad_form(tx, tv)))
        X, pe = q.grid.X, ext.exponent
        far = np.max(tx) + 0.5 * h
        for edge, sign in ((q.values[-1], 1.0), (q.values[0], -1.0)):
            if not np.any(edge):
                continue

            def f(t, edge=edge, sign=sign):
                tail = edge[None, :] * (X / t) ** pe
                return float(L.quad_form(np.array([sign * t]), tail)[0])

            # beyond the sampled tail
            val += integrate.quad(f, far, np.inf, limit=200)[0]
    return val


def hs_tilde_norm(q: GridFunction, L: ConfinementMatrix, p: FracParams) -> float:
    """(seminorm^2 + int L q.q)^(1/2)."""
    return math.sqrt(max(gagliardo_sq(q, p) + _confinement_integral(q, L), 0.0))


def energy_confined(q: GridFunction, W: ConfinedPotential, L: ConfinementMatrix,
                    p: FracParams) -> ConfinedEnergyValue:
    h = q.grid.h
    kinetic = 0.5 * gagliardo_sq(q, p)
    conf = 0.5 * _confinement_integral(q, L)
    wint = float(h * np.sum(W.W(q.grid.x, q.values)))
    if q.extension.kind == "power":
        tx, tv = _tail_nodes(q)
        wint += float(h * np.sum(W.W(tx, tv)))
    return ConfinedEnergyValue(kinetic, conf, wint, kinetic + conf - wint)


def confined_residual(q: GridFunction, W: ConfinedPotential, L: ConfinementMatrix,
                      p: FracParams) -> np.ndarray:
    """(-Delta)^s q + L q - grad_q W at every node."""
    x = q.grid.x
    return (apply_laplacian(q.values, q.grid, p, q.extension) + L.apply(x, q.values)
            - W.grad(x, q.values))


def dirderiv_confined(q: GridFunction, phi: GridFunction, W: ConfinedPotential,
                      L: ConfinementMatrix, p: FracParams) -> float:
    """<I'(q), phi> for phi supported in the box."""
    if phi.extension.kind != "zero":
        raise ValueError("test direction must be zero outside the box")
    return float(q.grid.h * np.sum(confined_residual(q, W, L, p) * phi.values))


def lattice_norm(q: GridFunction, r: float) -> float:
    """(h sum |q_i|^r)^(1/r) with |.| the Euclidean norm across components."""
    a = np.linalg.norm(q.values, axis=1)
    if math.isinf(r):
        return float(np.max(a)) if a.size else 0.0
    return float((q.grid.h * np.sum(a**r)) ** (1.0 / r))


@dataclass(frozen=True)
class InterpolationReport:
    r: float
    lhs: float
    rhs: float
    margin: float
    holds: bool


def interpolation_check(u: GridFunction, p_exp: float, q_exp: float, theta: float,
                        rtol: float = 1e-12) -> InterpolationReport:
    """||u||_r^r <= ||u||_p^(p(1-theta)) ||u||_q^(q theta), r = p(1-theta) + q theta."""
    if not (1 <= p_exp < q_exp < math.inf):
        raise ValueError("need 1 <= p < q < inf")
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    r = p_exp * (1 - theta) + q_exp * theta
    lhs = lattice_norm(u, r) ** r
    rhs = lattice_norm(u, p_exp) ** (p_exp * (1 - theta)) * lattice_norm(u, q_exp) ** (q_exp * theta)
    margin = rhs - lhs
    return InterpolationReport(r, lhs, rhs, margin, bool(margin >= -rtol * max(abs(rhs), 1e-300)))
