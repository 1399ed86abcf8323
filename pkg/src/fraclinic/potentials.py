"""Pinned potentials V(q), confined potentials W(x, q), confinement matrices L(x).

Arrays follow one convention: x has shape (N,), q has shape (N, n); V and W return (N,),
gradients return (N, n), L returns (N, n, n). Structural hypotheses are checked by
seeded sampling and reported with their worst margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid_core import Extension, GridFunction


class HypothesisError(ValueError):
    """A catalog entry failed its structural checks at construction."""


@dataclass(frozen=True)
class PinnedPotential:
    name: str
    V: Callable
    grad: Callable
    R: float
    n: int = 1
    gamma: float | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("cutoff level R must be positive")


@dataclass(frozen=True)
class ConfinedPotential:
    name: str
    W: Callable
    grad: Callable
    mu: float
    n: int = 1
    p: float | None = None
    a0: float | None = None
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ConfinementMatrix:
    name: str
    L: Callable
    alpha_L: float
    n: int = 1
    D: float | None = None
    diag: Callable | None = None  # d_j(x), shape (N, n), valid for |x| >= D
    nonnegative: bool = False
    growth: float | None = None  # L(x) = O(|x|^growth)
    params: dict = field(default_factory=dict)

    def quad_form(self, x: np.ndarray, q: np.ndarray) -> np.ndarray:
        return np.einsum("ni,nij,nj->n", q, self.L(x), q)

    def apply(self, x: np.ndarray, q: np.ndarray) -> np.ndarray:
        return np.einsum("nij,nj->ni", self.L(x), q)


@dataclass
class HypothesisReport:
    name: str
    passed: bool
    worst_margin: float
    samples: int
    seed: int
    details: dict = field(default_factory=dict)


def cutoff_TR(q: GridFunction, R: float) -> GridFunction:
    """Componentwise clamp to [-R, R]; constant tails are clamped too."""
    if not R > 0:
        raise ValueError("R must be positive")
    ext = q.extension
    if ext.kind == "constant":
        ext = Extension.constant(np.clip(ext.left, -R, R), np.clip(ext.right, -R, R))
    return GridFunction(q.grid, np.clip(q.values, -R, R), ext)


def _rng(seed):
    return np.random.default_rng(seed)


def _random_vectors(rng, m, n, lo, hi):
    d = rng.normal(size=(m, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = rng.uniform(lo, hi, size=(m, 1))
    return d * r


def check_V(V: PinnedPotential, seed: int = 0, samples: int = 2000, qmax: float | None = None
            ) -> HypothesisReport:
    """V(0) = 0, V(q) < 0 for q != 0, and V(q) <= V(T_R q) outside the cube."""
    rng = _rng(seed)
    n, R = V.n, V.R
    qmax = qmax or 4.0 * R
    v0 = float(V.V(np.zeros((1, n)))[0])
    inside = _random_vectors(rng, samples, n, 1e-3, qmax)
    v1 = V.V(inside)
    outside = rng.uniform(-qmax, qmax, size=(samples, n))
    j = rng.integers(0, n, size=samples)
    outside[np.arange(samples), j] = rng.choice([-1.0, 1.0], size=samples) * \
        rng.uniform(R, qmax, size=samples)
    v2 = V.V(np.clip(outside, -R, R)) - V.V(outside)
    margins = {"zero_at_origin": -abs(v0), "negative": float(np.min(-v1)),
               "cutoff": float(np.min(v2))}
    passed = abs(v0) == 0.0 and margins["negative"] > 0 and margins["cutoff"] >= -1e-14
    return HypothesisReport(V.name, passed, min(margins.values()), 2 * samples, seed, margins)


def _x_samples(rng, m, xmax=20.0):
    return np.concatenate([np.linspace(-xmax, xmax, 41), rng.uniform(-xmax, xmax, m)])


def check_AR(W: ConfinedPotential, seed: int = 0, samples: int = 2000, qmax: float = 10.0
             ) -> HypothesisReport:
    """0 < mu W <= grad W . q on samples, plus delta(eps) of the near-origin bound."""
    if not W.mu > 2:
        return HypothesisReport(W.name, False, -math.inf, 0, seed,
                                {"reason": f"AR exponent mu={W.mu} must exceed 2"})
    rng = _rng(seed)
    xs = _x_samples(rng, samples)
    q = _random_vectors(rng, xs.size, W.n, 1e-3, qmax)
    w = W.W(xs, q)
    gq = np.sum(W.grad(xs, q) * q, axis=1)
    scale = np.maximum(np.abs(gq), 1e-300)
    pos = float(np.min(w / np.sum(q * q, axis=1) ** (W.mu / 2)))
    ar = float(np.min((gq - W.mu * w) / scale))
    details = {"positivity": pos, "ar_margin": ar}
    for eps in (1.0, 0.1):
        details[f"delta_eps_{eps}"] = delta_near_origin(W, eps, seed=seed)
    passed = pos > 0 and ar >= -1e-12
    return HypothesisReport(W.name, passed, min(pos, ar), xs.size, seed, details)


def delta_near_origin(W: ConfinedPotential, eps: float, seed: int = 0, dmax: float = 10.0,
                      shells: int = 64, iters: int = 50) -> float:
    """Largest delta with 0 < W(x,q) < eps |q|^2 for sampled 0 < |q| <= delta."""
    rng = _rng(seed)
    xs = _x_samples(rng, 200)
    dirs = _unit_net(W.n, rng)

    def ok(delta):
        r = delta * np.linspace(1.0 / shells, 1.0, shells)
        for d in dirs:
            q = r[:, None] * d[None, :]
            for x in xs[::4]:
                w = W.W(np.full(shells, x), q)
                if np.any(w <= 0) or np.any(w >= eps * r**2):
                    return False
        return True

    if ok(dmax):
        return dmax
    lo, hi = 0.0, dmax
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


def _unit_net(n: int, rng=None, density: int = 24) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        t = np.linspace(0, 2 * np.pi, 8 * density, endpoint=False)
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    if n == 3:
        th = np.linspace(0, np.pi, 2 * density + 1)
        ph = np.linspace(0, 2 * np.pi, 4 * density, endpoint=False)
        T, P = np.meshgrid(th, ph, indexing="ij")
        pts = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1)
        return np.unique(np.round(pts.reshape(-1, 3), 14), axis=0)
    rng = rng or _rng(0)
    d = rng.normal(size=(4000, n))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def omega1(W: ConfinedPotential, x: float) -> float:
    """inf over the unit sphere of W(x, xi), on a net ({-1, +1} when n = 1)."""
    net = _unit_net(W.n)
    val = float(np.min(W.W(np.full(len(net), float(x)), net)))
    if not val > 0:
        raise ValueError(f"omega_1({x}) = {val} is not positive (AR fails on the net)")
    return val


def check_WGEQ(W: ConfinedPotential, seed: int = 0, samples: int = 1000, qmax: float = 5.0
               ) -> HypothesisReport:
    """W(x, q) >= omega_1(x) |q|^mu for sampled |q| >= 1."""
    rng = _rng(seed)
    xs = rng.uniform(-10, 10, samples)
    q = _random_vectors(rng, samples, W.n, 1.0, qmax)
    om = np.array([omega1(W, x) for x in xs])
    lhs = W.W(xs, q)
    rhs = om * np.linalg.norm(q, axis=1) ** W.mu
    margin = float(np.min((lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)))
    return HypothesisReport(W.name, margin >= -1e-12, margin, samples, seed)


@dataclass(frozen=True)
class GrowthBounds:
    sigma: float
    r0: float
    a1: float
    a2: float
    split_margin: float


def growth_bounds(W: ConfinedPotential, eps: float, seed: int = 0, samples: int = 2000,
                  qmax: float = 10.0, rmax: float = 1e3, resolution: float = 1e-6
                  ) -> GrowthBounds:
    """sigma(eps), r0, a1 = 1, a2 = a0 (r0^(2-p) + 1), with the split checked on samples."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if W.p is None or W.a0 is None:
        raise ValueError("growth data (p, a0) missing")
    rng = _rng(seed)
    xs = _x_samples(rng, 200)
    dirs = _unit_net(W.n, rng)

    def gnorm(x, q):
        return np.linalg.norm(W.grad(x, q), axis=1)

    def small_ok(r):
        rad = r * np.linspace(1.0 / 64, 1.0, 64)
        for d in dirs:
            q = rad[:, None] * d[None, :]
            for x in xs[::4]:
                if np.any(gnorm(np.full(rad.size, x), q) > rad * (1 + 1e-12)):
                    return False
        return True

    if small_ok(rmax):
        r0 = rmax
    else:
        lo, hi = 0.0, rmax
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if small_ok(mid) else (lo, mid)
        r0 = lo
    if r0 < resolution:
        raise ValueError("no radius r0 with |grad W| <= |q| found (gradient not o(|q|))")

    # sigma(eps) = sup (|grad W| - eps|q|)^+ / |q|^(p-1), log-spaced radii
    p = W.p
    rad = np.geomspace(1e-3, qmax, 200)
    sigma = 0.0
    for d in dirs:
        q = rad[:, None] * d[None, :]
        for x in xs[::2]:
            excess = gnorm(np.full(rad.size, x), q) - eps * rad
            sigma = max(sigma, float(np.max(np.maximum(excess, 0.0) / rad ** (p - 1))))
    xs2 = rng.uniform(-20, 20, samples)
    q2 = _random_vectors(rng, samples, W.n, 1e-3, qmax)
    r2 = np.linalg.norm(q2, axis=1)
    lhs = gnorm(xs2, q2)
    rhs = eps * r2 + sigma * r2 ** (p - 1)
    split = float(np.min((rhs - lhs) / np.maximum(rhs, 1e-300))) if sigma > 0 or np.any(lhs) \
        else 0.0
    a2 = W.a0 * (r0 ** (2 - p) + 1)
    return GrowthBounds(sigma, r0, 1.0, a2, split)


def check_growth(W: ConfinedPotential, seed: int = 0, samples: int = 2000, qmax: float = 10.0
                 ) -> HypothesisReport:
    """|d_j W| <= a0 |q_j| (1 + |q|^(p-2)) on samples."""
    rng = _rng(seed)
    xs = _x_samples(rng, samples)
    q = _random_vectors(rng, xs.size, W.n, 1e-3, qmax)
    g = np.abs(W.grad(xs, q))
    bound = W.a0 * np.abs(q) * (1 + np.linalg.norm(q, axis=1, keepdims=True) ** (W.p - 2))
    margin = float(np.min((bound - g) / np.maximum(bound, 1e-300)))
    return HypothesisReport(W.name, margin >= -1e-12, margin, xs.size, seed)


def kappa_M(W: ConfinedPotential, M: float, seed: int = 0, samples: int = 2000) -> float:
    """Estimate of sup_{0<|q|<=M} |grad W . q / 2 - W| / |q|^2."""
    rng = _rng(seed)
    xs = _x_samples(rng, samples)
    q = _random_vectors(rng, xs.size, W.n, 1e-4, M)
    val = np.abs(0.5 * np.sum(W.grad(xs, q) * q, axis=1) - W.W(xs, q))
    return float(np.max(val / np.sum(q * q, axis=1)))


def check_matrix(L: ConfinementMatrix, seed: int = 0, samples: int = 500, xmax: float = 50.0
                 ) -> HypothesisReport:
    """Symmetry, coercivity, divergence beyond D, diagonal tail."""
    rng = _rng(seed)
    xs = np.concatenate([np.linspace(-xmax, xmax, 201), rng.uniform(-xmax, xmax, samples)])
    mats = L.L(xs)
    sym = float(np.max(np.abs(mats - np.swapaxes(mats, 1, 2))))
    lam = np.linalg.eigvalsh(0.5 * (mats + np.swapaxes(mats, 1, 2)))[:, 0]
    coer = float(np.min(lam - L.alpha_L))
    D = L.D or 0.0
    r = np.linspace(D, xmax, 200)
    grow = np.linalg.eigvalsh(L.L(r))[:, 0]
    grow_l = np.linalg.eigvalsh(L.L(-r))[:, 0]
    monotone = bool(np.all(np.diff(grow) >= -1e-12) and np.all(np.diff(grow_l) >= -1e-12))
    details = {"symmetry": sym, "coercivity": coer, "monotone_growth": monotone,
               "eig_at_xmax": float(min(grow[-1], grow_l[-1]))}
    ok = sym <= 1e-12 and coer >= -1e-12 and monotone
    if L.diag is not None:
        far = xs[np.abs(xs) >= D]
        fm = L.L(far)
        off = fm - np.einsum("nj,jk->njk", np.einsum("njj->nj", fm), np.eye(L.n))
        details["offdiag_beyond_D"] = float(np.max(np.abs(off))) if far.size else 0.0
        details["diag_mismatch"] = float(np.max(np.abs(np.einsum("njj->nj", fm) - L.diag(far))))
        ok = ok and details["offdiag_beyond_D"] == 0.0 and details["diag_mismatch"] <= 1e-12
    if L.nonnegative:
        ok = ok and bool(np.all(mats >= 0))
    return HypothesisReport(L.name, ok, min(coer, -sym), xs.size, seed, details)


# ---- catalog ---------------------------------------------------------------------------

def quadratic_well(R: float = 1.0, n: int = 1, scale: float = 1.0) -> PinnedPotential:
    """V(q) = -scale |q|^2 (scale = 1 is the textbook well)."""
    if not scale > 0:
        raise HypothesisError("well depth must be positive")
    return PinnedPotential(
        "quadratic-well",
        lambda q: -scale * np.sum(q * q, axis=-1),
        lambda q: -2.0 * scale * q,
        R, n, params={"R": R, "scale": scale})


def perturbed_cosine(eps: float = 0.1, delta: float = 0.1, R: float = 2 * math.pi, n: int = 1
                     ) -> PinnedPotential:
    """V(q) = sum_j (cos q_j - 1) + eps (exp(-delta |q|^2) - 1)."""

    def V(q):
        return np.sum(np.cos(q) - 1.0, axis=-1) + eps * (np.exp(-delta * np.sum(q * q, axis=-1)) - 1)

    def grad(q):
        e = np.exp(-delta * np.sum(q * q, axis=-1))[..., None]
        return -np.sin(q) - 2.0 * eps * delta * e * q

    return PinnedPotential("perturbed-cosine", V, grad, R, n,
                           params={"eps": eps, "delta": delta, "R": R})


def power_W(p: float = 3.0, n: int = 1) -> ConfinedPotential:
    """W = |q|^p / p, AR with mu = p, growth constant a0 = 1."""

    def W(x, q):
        return np.linalg.norm(q, axis=1) ** p / p

    def grad(x, q):
        return np.linalg.norm(q, axis=1, keepdims=True) ** (p - 2) * q

    return ConfinedPotential("power-W", W, grad, mu=p, n=n, p=p, a0=1.0, params={"p": p})


def weighted_power_W(mu: float = 3.0, n: int = 1) -> ConfinedPotential:
    """W = a(x) |q|^mu with a(x) = 2 + sin x."""

    def W(x, q):
        return (2.0 + np.sin(x)) * np.linalg.norm(q, axis=1) ** mu

    def grad(x, q):
        return ((2.0 + np.sin(x)) * mu)[:, None] * np.linalg.norm(q, axis=1, keepdims=True) ** (mu - 2) * q

    return ConfinedPotential("weighted-power-W", W, grad, mu=mu, n=n, p=mu, a0=3.0 * mu,
                             params={"mu": mu})


def pn_perturbed_W(eps: float = 0.1, p: float = 3.0) -> ConfinedPotential:
    """W = -(1 - cos q)^(1+eps) + eps |q|^p (scalar). Not AR near 0; growth only."""

    def W(x, q):
        u = q[:, 0]
        return -(1 - np.cos(u)) ** (1 + eps) + eps * np.abs(u) ** p

    def grad(x, q):
        u = q[:, 0]
        return (-(1 + eps) * (1 - np.cos(u)) ** eps * np.sin(u)
                + eps * p * np.abs(u) ** (p - 2) * u)[:, None]

    # a0 from |W'| <= (1+eps) 2^eps |u| + eps p |u|^(p-1)
    a0 = max((1 + eps) * 2 ** eps, eps * p) * 1.0
    return ConfinedPotential("pn-perturbed-W", W, grad, mu=math.nan, n=1, p=p, a0=a0,
                             params={"eps": eps, "p": p})


def shifted_identity_L(eps: float = 1.0, alpha: float = 1.0, n: int = 1) -> ConfinementMatrix:
    """L(x) = alpha (1 + eps x^2) Id."""

    def L(x):
        x = np.asarray(x, dtype=float)
        return (alpha * (1 + eps * x**2))[:, None, None] * np.eye(n)[None]

    def diag(x):
        return np.repeat((alpha * (1 + eps * np.asarray(x) ** 2))[:, None], n, axis=1)

    return ConfinementMatrix("shifted-identity-L", L, alpha_L=alpha, n=n, D=0.0, diag=diag,
                             nonnegative=True, growth=2.0, params={"eps": eps, "alpha": alpha})


def _validated(obj, checks):
    for chk in checks:
        rep = chk(obj)
        if not rep.passed:
            raise HypothesisError(f"{obj.name}: {rep.details or rep.worst_margin}")
    return obj


def builtin_library() -> dict[str, Callable]:
    """Named constructors; each validates its hypotheses when called."""

    def qw(R=1.0, n=1, scale=1.0):
        return _validated(quadratic_well(R, n, scale), [check_V])

    def pc(eps=0.1, delta=0.1, R=2 * math.pi, n=1):
        return _validated(perturbed_cosine(eps, delta, R, n), [check_V])

    def pw(p=3.0, n=1):
        return _validated(power_W(p, n), [check_AR, check_growth])

    def wpw(mu=3.0, n=1):
        return _validated(weighted_power_W(mu, n), [check_AR, check_growth])

    def pn(eps=0.1, p=3.0):
        return _validated(pn_perturbed_W(eps, p), [check_growth])

    def sil(eps=1.0, alpha=1.0, n=1):
        return _validated(shifted_identity_L(eps, alpha, n), [check_matrix])

    return {
        "quadratic-well": qw,
        "perturbed-cosine": pc,
        "power-W": pw,
        "weighted-power-W": wpw,
        "pn-perturbed-W": pn,
        "shifted-identity-L": sil,
    }
