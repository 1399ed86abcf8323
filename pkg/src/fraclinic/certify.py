"""A posteriori certificates: level-set sup bound, layer profile, barrier decay, positive part."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .energy import _confinement_integral, hs_tilde_norm
from .frac_ops import FracParams, apply_laplacian, cs_constant, estimate_Cs, gagliardo_sq
from .grid_core import Extension, Grid, GridFunction
from .potentials import ConfinedPotential, ConfinementMatrix


def fit_tail_exponent(x: np.ndarray, y: np.ndarray, window: tuple) -> float:
    """-slope of log|y| against log|x| over window[0] <= |x| <= window[1]."""
    x, y = np.asarray(x), np.abs(np.asarray(y))
    sel = (np.abs(x) >= window[0]) & (np.abs(x) <= window[1]) & (y > 0)
    if np.count_nonzero(sel) < 3:
        raise ValueError("not enough points in the fit window")
    return float(-np.polyfit(np.log(np.abs(x[sel])), np.log(y[sel]), 1)[0])


# ---- level-set iteration ----------------------------------------------------------------

def default_exponent(s: float, t_half: float = 4.0) -> float:
    if s < 0.5:
        return 2.0 / (1.0 - 2.0 * s)
    if s == 0.5:
        if not t_half > 2:
            raise ValueError("t at s = 1/2 must exceed 2")
        return t_half
    raise ValueError("the level-set certificate is set up for s <= 1/2; pass t explicitly")


@dataclass
class DeGiorgiTrace:
    t: float
    levels: list
    U: list
    delta: float
    mu_dg: float
    norm_t: float
    bound: float
    measured_sup: float
    admissible: bool
    structural: dict = field(default_factory=dict)

    @property
    def bound_holds(self) -> bool:
        return self.bound >= self.measured_sup

    def as_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["bound_holds"] = self.bound_holds
        return d


def _level_masses(a: np.ndarray, h: float, t: float, k_max: int):
    """U_k = h sum_j sum_i (phi_j - A_k)_+^t for k = 0..k_max; a = phi values (N, n)."""
    U = []
    for k in range(k_max + 1):
        w = np.maximum(a - (1.0 - 2.0**-k), 0.0)
        U.append(float(h * np.sum(w**t)))
    return U


def _rate(U):
    ratios = [U[k] / U[k - 1] for k in range(2, len(U)) if U[k - 1] > 0]
    return max(ratios) if ratios else 0.0


def _structural(a: np.ndarray, k_max: int) -> dict:
    ww = subsets = bound_phi = True
    for k in range(k_max):
        wk = np.maximum(a - (1.0 - 2.0**-k), 0.0)
        wk1 = np.maximum(a - (1.0 - 2.0 ** -(k + 1)), 0.0)
        ww &= bool(np.all(wk1 <= wk))
        on = wk1 > 0
        subsets &= bool(np.all(wk[on] > 2.0 ** -(k + 1)))
        bound_phi &= bool(np.all((a[on] > 0) & (a[on] < 2.0 ** (k + 1) * wk[on])))
    return {"ww": ww, "subsets": subsets, "boundPhi": bound_phi}


def degiorgi_verify(q: GridFunction, s: float, k_max: int = 40, t: float | None = None,
                    t_half: float = 4.0, iters: int = 60) -> DeGiorgiTrace:
    """Largest delta in (0, 1) whose level masses decay geometrically to exactly 0.

    phi_j = delta |q_j| / ||q||_t (both signs at once). delta is admissible when
    U_0 <= delta^t, U_kmax = 0 and the worst ratio U_k/U_{k-1} (k >= 2) is below 1.
    The certified bound is ||q||_t / delta.
    """
    t = t if t is not None else default_exponent(s, t_half)
    h = q.grid.h
    absq = np.abs(q.values)
    sup = q.sup()
    nt = float((h * np.sum(np.linalg.norm(q.values, axis=1) ** t)) ** (1.0 / t))
    levels = [1.0 - 2.0**-k for k in range(k_max + 1)]
    if nt == 0:
        return DeGiorgiTrace(t, levels, [0.0] * (k_max + 1), 1.0, 0.0, 0.0, 0.0, 0.0, True,
                             {"ww": True, "subsets": True, "boundPhi": True, "trivial": True})

    def evaluate(delta):
        a = delta * absq / nt
        U = _level_masses(a, h, t, k_max)
        ok = U[0] <= delta**t * (1 + 1e-12) and U[-1] == 0.0 and _rate(U) < 1.0
        return ok, U

    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if evaluate(mid)[0]:
            lo = mid
        else:
            hi = mid
    if lo == 0.0:
        raise ValueError("no admissible delta: level masses do not decay")
    ok, U = evaluate(lo)
    a = lo * absq / nt
    return DeGiorgiTrace(t, levels, U, lo, _rate(U), nt, nt / lo, sup, ok,
                         _structural(a, k_max))


# ---- layer profile ----------------------------------------------------------------------

def layer_width(s: float, target: float = 0.012) -> float:
    """Half width where the far-field estimate 2c_s/(2s x^(2s)) of 1 - layer drops to target."""
    return max(20.0, (2.0 * cs_constant(s) / (2.0 * s * target)) ** (1.0 / (2.0 * s)))


def layer_grid(s: float, h: float | None = None) -> Grid:
    X = layer_width(s)
    h = h if h is not None else (0.05 if X <= 100 else 0.1)
    return Grid.from_spacing(X, h)


@dataclass
class LayerResult:
    s: float
    profile: GridFunction  # constant extensions -1 / +1
    beta: np.ndarray
    a: np.ndarray
    newton_iterations: int
    residual: float
    monotone_defect: float
    endpoint_gap: float
    a_endpoint: float
    tail_exponent: float
    beta_integral: float

    @property
    def x(self):
        return self.profile.grid.x

    def as_dict(self):
        return {"s": self.s, "X": self.profile.grid.X, "N": self.profile.grid.N,
                "newton_iterations": self.newton_iterations, "residual": self.residual,
                "monotone_defect": self.monotone_defect, "endpoint_gap": self.endpoint_gap,
                "a_endpoint": self.a_endpoint, "tail_exponent": self.tail_exponent,
                "beta_integral": self.beta_integral}


def layer_solution(s: float, grid: Grid | None = None, tol: float = 1e-10,
                   max_newton: int = 50) -> LayerResult:
    """Monotone solution of (-Delta)^s u = u - u^3 with u = -1 / +1 beyond the box.

    Damped Newton from tanh, linear solves by GMRES on the FFT operator; every iterate is
    made odd, which removes the translation mode and fixes u(0) = 0.
    """
    grid = grid or layer_grid(s)
    if grid.X < 20:
        raise ValueError("layer box must have X >= 20")
    p = FracParams(s)
    ext = Extension.constant(-1.0, 1.0)
    N = grid.N

    def odd(v):
        return 0.5 * (v - v[::-1])

    def F(u):
        return apply_laplacian(u[:, None], grid, p, ext)[:, 0] - u + u**3

    u = odd(np.tanh(grid.x))
    r = F(u)
    rn = float(np.max(np.abs(r)))
    it = 0
    while rn > tol and it < max_newton:
        it += 1
        diag = 3.0 * u**2 - 1.0
        J = LinearOperator((N, N), dtype=float,
                           matvec=lambda v, d=diag: apply_laplacian(v[:, None], grid, p)[:, 0] + d * v)
        du, info = gmres(J, -r, rtol=1e-12, atol=0.0, restart=200, maxiter=50)
        du = odd(du)
        lam = 1.0
        while True:
            trial = odd(u + lam * du)
            rt = F(trial)
            rtn = float(np.max(np.abs(rt)))
            if rtn < (1 - 1e-4 * lam) * rn or lam < 1e-6:
                break
            lam *= 0.5
        if rtn >= rn:
            raise RuntimeError(f"Newton stalled at residual {rn:.3g}")
        u, r, rn = trial, rt, rtn
    if rn > tol:
        raise RuntimeError(f"Newton did not converge: residual {rn:.3g}")
    mono = float(np.min(np.diff(u)))
    if mono < -1e-10:
        raise RuntimeError(f"layer is not monotone (min forward difference {mono:.3g})")
    gap = float(max(abs(u[-1] - 1.0), abs(u[0] + 1.0)))
    if gap > 0.05:
        raise RuntimeError(f"layer endpoints {u[0]:.4f}, {u[-1]:.4f} are not within 0.05 of -1, 1")
    beta = np.gradient(u, grid.h)
    a = 1.0 - 3.0 * u**2
    X = grid.X
    expo = fit_tail_exponent(grid.x, beta, (X / 8, X / 3))
    h = grid.h
    integral = float(h * (beta.sum() - 0.5 * (beta[0] + beta[-1])))
    return LayerResult(s, GridFunction(grid, u, ext), beta, a, it, rn, mono, gap,
                       float(max(a[0], a[-1])), expo, integral)


# ---- barriers ---------------------------------------------------------------------------

@dataclass
class BarrierCertificate:
    s: float
    eta: float
    A_mult: float
    A: float
    A_R0: float
    C_s: float
    R0: float
    R_bar: float
    R_tilde: float
    R_cs: float
    varsigma: float
    sup_q: float
    v_min: list
    w_min: list
    beta_positive: bool
    a_range: tuple

    @property
    def passed(self) -> bool:
        return min(self.v_min + self.w_min) >= -1e-8

    def as_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["a_range"] = list(self.a_range)
        d["passed"] = self.passed
        return d


def _outward_radius(r: np.ndarray, ok: np.ndarray) -> float:
    """Smallest scanned radius beyond which ok holds at every scanned point."""
    bad = np.nonzero(~ok)[0]
    if bad.size == 0:
        return float(r[0])
    if bad[-1] == r.size - 1:
        return math.inf
    return float(r[bad[-1] + 1])


def barrier_constants(layer: LayerResult, L: ConfinementMatrix, W: ConfinedPotential,
                      sup_q: float, C_s: float | None = None) -> dict:
    s = layer.s
    if L.diag is None:
        raise ValueError("barrier needs a matrix that is diagonal beyond D")
    if W.p is None or W.a0 is None:
        raise ValueError("barrier needs the growth data (p, a0)")
    D = L.D or 0.0
    x = layer.x
    r = x[x >= D]
    thresh = 3.0 + W.a0 * (1.0 + sup_q ** (W.p - 2))
    dr, dl = L.diag(r), L.diag(-r)
    R_bar = _outward_radius(r, np.all(dr > thresh, axis=1) & np.all(dl > thresh, axis=1))
    rr = x[x >= 0]
    a = layer.a
    mid = layer.profile.grid.mid
    R_tilde = _outward_radius(rr, (a[mid:] <= -1.0) & (a[mid::-1] <= -1.0))
    if C_s is None:
        C_s = estimate_Cs(FracParams(s)).C_s
    R_cs = 1.0 + C_s ** (1.0 / (2.0 * s))
    return {"R_bar": R_bar, "R_tilde": R_tilde, "R_cs": R_cs, "C_s": C_s,
            "R0": max(R_bar, R_tilde, R_cs), "threshold": thresh}


def build_barrier(q: GridFunction, layer: LayerResult, L: ConfinementMatrix,
                  W: ConfinedPotential, eta: float, A_mult: float = 2.0,
                  sup_bound: float | None = None, consts: dict | None = None
                  ) -> BarrierCertificate:
    """v = A beta - q_j + eta (1 + |x|^s), w = A beta + q_j + eta (1 + |x|^s) on q's nodes."""
    s = layer.s
    if s > 0.5:
        raise ValueError("barrier certificate applies for s <= 1/2")
    if not A_mult > 1:
        raise ValueError("A_mult must exceed 1")
    if not eta > 0:
        raise ValueError("eta must be positive")
    x = q.grid.x
    if layer.x[-1] < x[-1]:
        raise ValueError("layer box must cover the profile box")
    sup_q = sup_bound if sup_bound is not None else q.sup()
    c = consts or barrier_constants(layer, L, W, sup_q)
    R0 = c["R0"]
    if R0 > q.grid.X:
        raise ValueError(f"R0 = {R0:.4g} exceeds the box half width {q.grid.X}")
    beta = np.interp(x, layer.x, layer.beta)
    inner = np.abs(x) <= R0
    varsigma = float(beta[inner].min())
    A_R0 = sup_q / varsigma
    A = A_mult * A_R0
    slack = eta * (1.0 + np.abs(x) ** s)
    base = A * beta + slack
    v = base[:, None] - q.values
    w = base[:, None] + q.values
    return BarrierCertificate(
        s, eta, A_mult, A, A_R0, c["C_s"], R0, c["R_bar"], c["R_tilde"], c["R_cs"], varsigma,
        sup_q, [float(m) for m in v.min(axis=0)], [float(m) for m in w.min(axis=0)],
        bool(np.all(beta > 0)), (float(layer.a.min()), float(layer.a.max())))


def barrier_sweep(q: GridFunction, layer: LayerResult, L: ConfinementMatrix,
                  W: ConfinedPotential, etas=(0.1, 0.01, 0.001), A_mult: float = 2.0,
                  sup_bound: float | None = None) -> list[BarrierCertificate]:
    sup_q = sup_bound if sup_bound is not None else q.sup()
    consts = barrier_constants(layer, L, W, sup_q)
    return [build_barrier(q, layer, L, W, e, A_mult, sup_q, consts) for e in etas]


# ---- positive part ----------------------------------------------------------------------

@dataclass
class PositivePartReport:
    c_level: float
    seminorm_q: float
    seminorm_u: float
    confinement_q: float
    confinement_u: float
    norm_u: float
    seminorm_contracts: bool
    confinement_contracts: bool


def positive_part(q: GridFunction, c_level: float) -> GridFunction:
    """((q_1 - c)^+, ..., (q_n - c)^+)."""
    if q.extension.kind != "zero":
        raise ValueError("positive part is taken for zero-extended profiles")
    return q.with_values(np.maximum(q.values - c_level, 0.0))


def positive_part_membership(q: GridFunction, L: ConfinementMatrix, c_level: float,
                             p: FracParams, rtol: float = 1e-12) -> PositivePartReport:
    """Seminorm and confinement of u = (q - c)^+ against those of q.

    The seminorm inequality holds for every q. The confinement inequality is guaranteed
    when q >= 0 or L is diagonal; with positive off-diagonal entries and sign-changing q
    it can fail (u drops the negative part, which was lowering q.L q).
    """
    if not c_level > 0:
        raise ValueError("c must be positive")
    if not L.nonnegative:
        raise ValueError("L must have nonnegative entries")
    u = positive_part(q, c_level)
    sq, su = gagliardo_sq(q, p), gagliardo_sq(u, p)
    cq, cu = _confinement_integral(q, L), _confinement_integral(u, L)
    return PositivePartReport(
        c_level, sq, su, cq, cu, hs_tilde_norm(u, L, p),
        su <= sq * (1 + rtol) + 1e-300, cu <= cq * (1 + rtol) + 1e-300)
