"""Mountain-pass solver for (-Delta)^s q + L q = grad_q W on a truncated line.

Everything is computed in the discrete ~H^s geometry: with A the lattice operator plus
L(x) on the box, <u, v> = h u.A v, so the Riesz gradient of I is A^{-1} (residual) and
the dual norm of I'(q) is sqrt(h res.A^{-1}res), the exact sup over all test directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .energy import energy_confined, hs_tilde_norm
from .frac_ops import FracParams, laplacian_matrix
from .grid_core import Grid, GridFunction
from .potentials import (ConfinedPotential, ConfinementMatrix, delta_near_origin,
                         growth_bounds, omega1)


@dataclass
class ConfinedProblem:
    grid: Grid
    frac: FracParams
    potential: ConfinedPotential
    matrix: ConfinementMatrix
    t_half: float = 4.0  # integrability exponent used at s = 1/2

    def __post_init__(self):
        if self.potential.n != self.matrix.n:
            raise ValueError("potential and matrix disagree on the number of components")
        self._chol = None

    @property
    def n(self) -> int:
        return self.potential.n

    @property
    def size(self) -> int:
        return self.grid.N * self.n

    def operator(self) -> np.ndarray:
        g, n = self.grid, self.n
        A = np.kron(laplacian_matrix(g, self.frac), np.eye(n))
        Lx = self.matrix.L(g.x)
        for i in range(g.N):
            A[i * n:(i + 1) * n, i * n:(i + 1) * n] += Lx[i]
        return A

    @property
    def A(self) -> np.ndarray:
        if self._chol is None:
            A = self.operator()
            self._A = A
            self._chol = linalg.cho_factor(A, lower=True)
        return self._A

    def riesz(self, res: np.ndarray) -> np.ndarray:
        self.A
        return linalg.cho_solve(self._chol, res)

    # flat vectors v of length N*n
    def energy(self, v: np.ndarray) -> float:
        h = self.grid.h
        q = v.reshape(-1, self.n)
        return 0.5 * h * float(v @ (self.A @ v)) - h * float(np.sum(self.potential.W(self.grid.x, q)))

    def residual(self, v: np.ndarray) -> np.ndarray:
        q = v.reshape(-1, self.n)
        return self.A @ v - self.potential.grad(self.grid.x, q).reshape(-1)

    def norm(self, v: np.ndarray) -> float:
        return math.sqrt(max(self.grid.h * float(v @ (self.A @ v)), 0.0))

    def dual_norm(self, v: np.ndarray) -> float:
        r = self.residual(v)
        return math.sqrt(max(self.grid.h * float(r @ self.riesz(r)), 0.0))

    def to_gf(self, v: np.ndarray) -> GridFunction:
        return GridFunction(self.grid, v.reshape(-1, self.n))


@dataclass
class Path:
    nodes: list  # GridFunction per node; first is 0, last is the endpoint

    def __post_init__(self):
        if len(self.nodes) < 3:
            raise ValueError("a path needs at least 3 nodes")
        if np.any(self.nodes[0].values):
            raise ValueError("path must start at 0")

    @classmethod
    def segment(cls, q_end: GridFunction, P: int = 33) -> Path:
        eta = np.linspace(0.0, 1.0, P)
        nodes = [q_end.with_values(e * q_end.values) for e in eta[:-1]] + [q_end]
        return cls(nodes)

    @property
    def P(self) -> int:
        return len(self.nodes)


@dataclass
class MPOptions:
    P: int = 33
    tol: float = 1e-4
    max_sweeps: int = 3000
    reparam_every: int = 50
    stagnation: int = 400
    seed: int = 0


@dataclass
class EmbeddingConstants:
    s: float
    c_inf: float | None  # sup |q|_inf / ||q||, s > 1/2
    c_2: float
    c_p: float | None
    p: float | None

    def as_dict(self):
        return {"s": self.s, "c_inf": self.c_inf, "c_2": self.c_2, "c_p": self.c_p, "p": self.p}


@dataclass
class MPReport:
    c_est: float
    beta_geom: float
    rho: float
    upper_bound: float
    endpoint_w_bound: float
    initial_path_max: float
    dual_residual: float
    sweeps: int
    converged: bool
    level_history: list
    ps_norm_history: list
    ps_bound: float
    crit_norm: float
    crit_l2: float
    crossing_energy: float
    endpoint: dict
    embedding: dict
    energy: dict
    seed: int = 0
    config: dict = field(default_factory=dict)

    @property
    def sandwich(self) -> bool:
        return self.beta_geom <= self.c_est <= self.upper_bound

    def as_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["sandwich"] = self.sandwich
        return d


# ---- geometry --------------------------------------------------------------------------

def _smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    a = np.where(t > 0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
    return a / (a + b)


def unit_plateau(grid: Grid, n: int = 1) -> GridFunction:
    """|q| = 1 on (-1, 1), smooth, supported in (-2, 2), pointing along (1,..,1)/sqrt(n)."""
    prof = 1.0 - _smooth_step(np.abs(grid.x) - 1.0)
    return GridFunction(grid, prof[:, None] * np.full(n, 1.0 / math.sqrt(n))[None, :])


def embedding_constants(prob: ConfinedProblem, probes: int = 12, ascent_iter: int = 200
                        ) -> EmbeddingConstants:
    """Discrete embedding constants of ~H^s.

    c_inf and c_2 are exact for the lattice (diagonal of A^{-1}, smallest eigenvalue of A).
    c_p is the best value over a probe family (Gaussians of several widths, the plateau
    bump, and a layer-like bump) each refined by fixed-point ascent A q ~ |q|^(p-2) q.
    """
    A, h, s = prob.A, prob.grid.h, prob.frac.s
    lam_min = float(linalg.eigh(A, eigvals_only=True, subset_by_index=[0, 0])[0])
    c2 = 1.0 / math.sqrt(lam_min)
    c_inf = None
    if s > 0.5:
        Ainv_diag = np.diag(linalg.cho_solve(prob._chol, np.eye(prob.size)))
        c_inf = math.sqrt(float(Ainv_diag.max()) / h)
    p = prob.potential.p
    c_p = None
    if p is not None:
        x = prob.grid.x
        cands = [np.exp(-(x / w) ** 2) for w in np.geomspace(0.1, 4.0, probes)]
        cands.append(unit_plateau(prob.grid).values[:, 0])
        cands.append(1.0 / np.cosh(x) ** 2)
        e = np.full(prob.n, 1.0 / math.sqrt(prob.n))

        def ratio(v):
            return (h * np.sum(np.abs(v) ** p)) ** (1 / p) / prob.norm(v)

        best = 0.0
        for c in cands:
            v = (c[:, None] * e[None, :]).reshape(-1)
            v /= prob.norm(v)
            r = ratio(v)
            for _ in range(ascent_iter):
                w = prob.riesz(np.abs(v) ** (p - 2) * v)
                w /= prob.norm(w)
                r_new = ratio(w)
                v = w
                if r_new <= r * (1 + 1e-12):
                    r = max(r, r_new)
                    break
                r = r_new
            best = max(best, r)
        c_p = float(best)
    return EmbeddingConstants(s, c_inf, c2, c_p, p)


def rho_beta(prob: ConfinedProblem, emb: EmbeddingConstants | None = None, seed: int = 0
             ) -> tuple[float, float, dict]:
    """Radius rho and level beta with I >= beta on the sphere ||q|| = rho.

    s > 1/2: delta from the near-origin bound at eps = min(alpha_L, 1)/4, rho = delta/c_inf,
    beta = rho^2/4. s <= 1/2: I >= (1/4)||q||^2 (1 - k ||q||^(p-2)) with
    k = 4 sigma c^p / p, c = max(c_2, c_p), sigma = sigma(1/(2 c^2)); rho maximizes the
    right side, so rho^(p-2) = 2/(k p) and beta = rho^2 (1 - 2/p)/4.
    """
    emb = emb or embedding_constants(prob)
    s = prob.frac.s
    if s > 0.5:
        eps = min(prob.matrix.alpha_L, 1.0) / 4.0
        delta = delta_near_origin(prob.potential, eps, seed=seed)
        if not (emb.c_inf and math.isfinite(emb.c_inf)):
            raise ValueError("no finite L-infinity embedding estimate")
        rho = delta / emb.c_inf
        return rho, 0.25 * rho**2, {"delta": delta, "eps": eps, "c_inf": emb.c_inf}
    p = prob.potential.p
    if p is None or emb.c_p is None:
        raise ValueError("s <= 1/2 needs the growth exponent p")
    c = max(emb.c_2, emb.c_p)
    eps = 1.0 / (2.0 * c**2)
    sigma = growth_bounds(prob.potential, eps, seed=seed, qmax=1e6).sigma
    if sigma == 0:
        raise ValueError("sigma vanished; growth sampling failed")
    k = 4.0 * sigma * c**p / p
    rho = (2.0 / (k * p)) ** (1.0 / (p - 2))
    beta = 0.25 * rho**2 * (1.0 - k * rho ** (p - 2))
    return rho, beta, {"sigma": sigma, "eps": eps, "c": c, "k": k}


@dataclass
class Endpoint:
    q_end: GridFunction
    t_bar: float
    rule: str
    energy: float
    norm: float
    omega_integral: float
    plateau_norm: float

    def as_dict(self):
        return {"t_bar": self.t_bar, "rule": self.rule, "energy": self.energy,
                "norm": self.norm, "omega_integral": self.omega_integral,
                "plateau_norm": self.plateau_norm}


def t_bar_formula(rho: float, omega_int: float, plateau_norm: float, mu: float) -> float:
    return max(rho, (2.0 * omega_int / plateau_norm**2) ** (1.0 / (2.0 - mu))) + 1.0


def choose_endpoint(prob: ConfinedProblem, rho: float) -> Endpoint:
    """Scaled plateau with negative energy and norm beyond rho.

    Tries q_end = t q_plat / ||q_plat|| first; when that still has I >= 0 (the bound behind
    t_bar is stated for multiples t q_plat) it falls back to q_end = t q_plat.
    """
    W = prob.potential
    if not W.mu > 2:
        raise ValueError("AR exponent must exceed 2")
    qd = unit_plateau(prob.grid, prob.n)
    nd = hs_tilde_norm(qd, prob.matrix, prob.frac)
    from scipy import integrate
    om = integrate.quad(lambda x: omega1(W, x), -1.0, 1.0, limit=100)[0]
    tb = t_bar_formula(rho, om, nd, W.mu)
    for rule, scale in (("normalized", tb / nd), ("unnormalized", tb)):
        v = scale * qd.values.reshape(-1)
        E = prob.energy(v)
        nv = prob.norm(v)
        if E < 0 and nv > rho:
            return Endpoint(prob.to_gf(v), tb, rule, E, nv, om, nd)
    raise ValueError(f"endpoint energy is not negative (I = {E}); check omega_1 quadrature")


def ps_norm_bound(c_level: float, mu: float) -> float:
    """(2 mu c / (mu - 2))^(1/2)."""
    if not mu > 2:
        raise ValueError("need mu > 2")
    if c_level < 0:
        raise ValueError("level must be nonnegative")
    return math.sqrt(2.0 * mu * c_level / (mu - 2.0))


# ---- min-max iteration ----------------------------------------------------------------

def _segment_max(prob, a, b):
    res = optimize.minimize_scalar(lambda t: -prob.energy((1 - t) * a + t * b),
                                   bounds=(0.0, 1.0), method="bounded",
                                   options={"xatol": 1e-8})
    t = float(res.x)
    return (1 - t) * a + t * b, -float(res.fun)


def _line_max(prob, v, d, lo, hi):
    res = optimize.minimize_scalar(lambda t: -prob.energy(v + t * d), bounds=(lo, hi),
                                   method="bounded", options={"xatol": 1e-10})
    t = float(res.x)
    return v + t * d, -float(res.fun)


def _reparametrize(prob, V):
    """Equal ~H^s arc length between nodes; endpoints untouched."""
    d = np.array([prob.norm(V[i + 1] - V[i]) for i in range(len(V) - 1)])
    cum = np.concatenate([[0.0], np.cumsum(d)])
    if cum[-1] == 0:
        return V
    target = np.linspace(0.0, cum[-1], len(V))
    out = [V[0]]
    for t in target[1:-1]:
        j = min(int(np.searchsorted(cum, t, side="right")) - 1, len(V) - 2)
        w = (t - cum[j]) / d[j] if d[j] > 0 else 0.0
        out.append((1 - w) * V[j] + w * V[j + 1])
    out.append(V[-1])
    return out


def _crossing_energy(prob, V, rho):
    """I at the first point of the polyline with ||.|| = rho."""
    norms = [prob.norm(v) for v in V]
    for i in range(len(V) - 1):
        if norms[i] <= rho <= norms[i + 1]:
            a, b = V[i], V[i + 1]
            t = optimize.brentq(lambda t: prob.norm((1 - t) * a + t * b) - rho, 0.0, 1.0)
            return prob.energy((1 - t) * a + t * b)
    return math.nan


def mountain_pass(prob: ConfinedProblem, path_init: Path | None = None,
                  opts: MPOptions | None = None, rho_beta_value=None
                  ) -> tuple[GridFunction, MPReport, Path]:
    """Steepest-descent min-max on a discrete path from 0 to a negative-energy endpoint.

    Each sweep re-maximizes the top node along the local path tangent, then moves it along
    the negative Riesz gradient with the tangent part removed (Armijo backtracking).
    """
    opts = opts or MPOptions()
    emb = embedding_constants(prob)
    rho, beta, rb_info = rho_beta_value or rho_beta(prob, emb, seed=opts.seed)
    if path_init is None:
        ep = choose_endpoint(prob, rho)
        path_init = Path.segment(ep.q_end, opts.P)
        ep_info = ep.as_dict()
    else:
        ep_info = {"rule": "given", "energy": prob.energy(path_init.nodes[-1].values.reshape(-1))}
    V = [nd.values.reshape(-1).copy() for nd in path_init.nodes]
    q_end = V[-1]
    h = prob.grid.h

    E = np.array([prob.energy(v) for v in V])
    initial_max = float(E.max())
    # the straight segment eta q_end: its maximum bounds the level from above
    eta_grid = np.linspace(0, 1, 401)
    upper = max(prob.energy(e * q_end) for e in eta_grid)
    upper = max(upper, _segment_max(prob, 0 * q_end, q_end)[1])
    endpoint_w = h * float(np.sum(prob.potential.W(prob.grid.x, q_end.reshape(-1, prob.n))))

    levels, dual_hist, norm_hist = [], [], []
    tau = 1.0
    best = (math.inf, None)
    since_best = 0
    converged = False
    sweep = 0
    for sweep in range(1, opts.max_sweeps + 1):
        k = int(np.argmax(E[1:-1])) + 1
        tan = V[k + 1] - V[k - 1]
        tan = tan / prob.norm(tan)
        lo, hi = -prob.norm(V[k] - V[k - 1]), prob.norm(V[k + 1] - V[k])
        cand, ec = _line_max(prob, V[k], tan, lo, hi)
        if ec > E[k]:
            V[k], E[k] = cand, ec
        c_est = float(E.max())
        k = int(np.argmax(E[1:-1])) + 1
        r = prob.residual(V[k])
        G = prob.riesz(r)
        dual = math.sqrt(max(h * float(r @ G), 0.0))
        levels.append(c_est)
        dual_hist.append(dual)
        norm_hist.append(prob.norm(V[k]))
        if c_est < beta:
            raise RuntimeError(f"path maximum {c_est} fell below the geometric level {beta}")
        if dual <= opts.tol:
            converged = True
            break
        if dual < best[0] * (1 - 1e-3):
            best, since_best = (dual, sweep), 0
        else:
            since_best += 1
            if since_best > opts.stagnation:
                break
        # descend orthogonally to the path so the tangent maximization is not undone
        tan = V[k + 1] - V[k - 1]
        tan = tan / prob.norm(tan)
        D = G - h * float(tan @ (prob.A @ G)) * tan
        slope = h * float(r @ D)
        tau = min(1.0, 2.0 * tau)
        e0 = E[k]
        while tau > 1e-10:
            trial = V[k] - tau * D
            et = prob.energy(trial)
            if et <= e0 - 1e-4 * tau * slope:
                break
            tau *= 0.5
        V[k], E[k] = trial, et
        if sweep % opts.reparam_every == 0:
            V = _reparametrize(prob, V)
            V[-1] = q_end
            E = np.array([prob.energy(v) for v in V])

    k = int(np.argmax(E[1:-1])) + 1
    qv = V[k]
    q_crit = prob.to_gf(qv)
    c_est = float(E[k])
    dual = prob.dual_norm(qv)
    mu = prob.potential.mu
    rep = MPReport(
        c_est=c_est, beta_geom=beta, rho=rho, upper_bound=upper, endpoint_w_bound=endpoint_w,
        initial_path_max=initial_max, dual_residual=dual, sweeps=sweep,
        converged=dual <= opts.tol, level_history=levels[:: max(1, len(levels) // 200)],
        ps_norm_history=norm_hist[:: max(1, len(norm_hist) // 200)], ps_bound=ps_norm_bound(max(c_est, 0.0), mu)
        if mu > 2 else math.nan,
        crit_norm=prob.norm(qv), crit_l2=math.sqrt(h * float(qv @ qv)),
        crossing_energy=_crossing_energy(prob, V, rho), endpoint=ep_info,
        embedding={**emb.as_dict(), **rb_info},
        energy=energy_confined(q_crit, prob.potential, prob.matrix, prob.frac).as_dict(),
        seed=opts.seed)
    path = Path([prob.to_gf(v) for v in V])
    return q_crit, rep, path


@dataclass
class AuditReport:
    K: float
    beta_K: float
    gamma: float
    outer_mass: float
    inner_mass: float
    bound: float
    concentrated: bool
    trivial: bool


def nontriviality_audit(q: GridFunction, prob: ConfinedProblem, K: float,
                        samples: int = 2001) -> AuditReport:
    """L^2 mass outside [-K, K] against gamma/beta(K), gamma = int L q.q."""
    if not 0 < K < prob.grid.X:
        raise ValueError("K must lie in (0, X)")
    far = np.concatenate([np.linspace(K, 50 * K, samples), -np.linspace(K, 50 * K, samples)])
    betaK = float(np.min(np.linalg.eigvalsh(prob.matrix.L(far))[:, 0]))
    x, h = prob.grid.x, prob.grid.h
    a2 = np.sum(q.values**2, axis=1)
    out = np.abs(x) > K
    outer, inner = h * float(a2[out].sum()), h * float(a2[~out].sum())
    gamma = h * float(np.sum(prob.matrix.quad_form(x, q.values)))
    bound = gamma / betaK
    trivial = not np.any(q.values)
    return AuditReport(K, betaK, gamma, outer, inner, bound,
                       bool(outer <= bound * (1 + 1e-12)) and (trivial or inner > outer), trivial)
