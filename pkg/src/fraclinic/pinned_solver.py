"""Pinned minimization, even symmetrization, and the experiments around it."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .energy import energy_pinned, pinned_residual
from .frac_ops import FracParams, apply_laplacian, stencil
from .grid_core import Grid, GridFunction, PinRegion, max_min_combine, pin_indices, reflect
from .potentials import PinnedPotential, cutoff_TR, quadratic_well


@dataclass(frozen=True)
class PinnedProblem:
    grid: Grid
    frac: FracParams
    potential: PinnedPotential
    pin: PinRegion
    datum: np.ndarray  # (len(pin.indices), n)
    holder_alpha: float = 0.5
    beta_bar: float | None = None

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.datum, dtype=float))
        if d.shape[0] == 1 and len(self.pin.indices) > 1:
            d = np.repeat(d, len(self.pin.indices), axis=0)
        if d.shape != (len(self.pin.indices), self.potential.n):
            raise ValueError(f"datum shape {d.shape} does not match the pin region")
        if not np.all(np.isfinite(d)):
            raise ValueError("datum must be finite")
        if self.frac.s <= 0.5 and self.pin.degenerate:
            raise ValueError("a single pinned point needs s > 1/2")
        if not 0 < self.holder_alpha < 1:
            raise ValueError("Hoelder exponent of the datum must lie in (0, 1)")
        object.__setattr__(self, "datum", d)

    @classmethod
    def constant(cls, grid, frac, potential, a, b, value=1.0, **kw) -> PinnedProblem:
        pin = pin_indices(grid, a, b, frac.s)
        datum = np.full((len(pin.indices), potential.n), float(value))
        return cls(grid, frac, potential, pin, datum, **kw)

    @property
    def regularity_target(self) -> float:
        """min(alpha, s) unless they coincide, then beta_bar (default s/2)."""
        a, s = self.holder_alpha, self.frac.s
        if a != s:
            return min(a, s)
        bb = self.beta_bar if self.beta_bar is not None else 0.5 * s
        if not 0 < bb < s:
            raise ValueError("beta_bar must lie in (0, s)")
        return bb

    @property
    def symmetric(self) -> bool:
        """a = -b with an even datum."""
        if self.pin.a != -self.pin.b:
            return False
        return bool(np.array_equal(self.datum, self.datum[::-1]))


@dataclass
class SolverOptions:
    tol: float = 1e-6
    max_iter: int = 20000
    memory: int = 10
    k_cut: int = 10
    energy_floor: float = -1e12
    seed: int = 0


@dataclass
class SolveReport:
    energy: dict
    initial_energy: float
    residual: float
    iterations: int
    converged: bool
    cutoff_applications: int
    decay: dict
    evenness_defect: float
    holder: dict
    sup_norm: float
    history: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: int = 0

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def initial_guess(prob: PinnedProblem) -> GridFunction:
    """Datum on the pin region, linear taper to 0 over one unit on either side."""
    g = prob.grid
    x = g.x
    vals = np.zeros((g.N, prob.potential.n))
    idx = prob.pin.indices
    vals[idx] = prob.datum
    lo, hi = idx[0], idx[-1]
    right = x > x[hi]
    left = x < x[lo]
    vals[right] = prob.datum[-1] * np.maximum(0.0, 1.0 - (x[right] - x[hi]))[:, None]
    vals[left] = prob.datum[0] * np.maximum(0.0, 1.0 - (x[lo] - x[left]))[:, None]
    return GridFunction(g, vals)


def _energy_and_residual(values, grid, V, p):
    lap = apply_laplacian(values, grid, p)
    h = grid.h
    kin = 0.5 * h * float(np.sum(values * lap))
    pot = h * float(np.sum(V.V(values)))
    return kin - pot, lap - V.grad(values)


def solve_pinned(prob: PinnedProblem, opts: SolverOptions | None = None,
                 initial: GridFunction | None = None) -> tuple[GridFunction, SolveReport]:
    """L-BFGS on free nodal values; cutoff every k_cut iterations; even symmetrization."""
    opts = opts or SolverOptions()
    g, p, V = prob.grid, prob.frac, prob.potential
    h = g.h
    free = ~prob.pin.mask(g.N)
    q0 = initial if initial is not None else initial_guess(prob)
    vals = np.array(q0.values)
    vals[prob.pin.indices] = prob.datum
    E, res = _energy_and_residual(vals, g, V, p)
    E_init = E
    _, tails = stencil(p.s, p.split_radius, g.N - 1)
    h0 = 1.0 / (h * (p.scale(h) * 2.0 * tails[1] + 1.0))  # inverse diagonal scale

    S, Y = deque(maxlen=opts.memory), deque(maxlen=opts.memory)
    history = [E]
    cuts = 0
    it = 0
    resmax = float(np.max(np.abs(res[free]))) if free.any() else 0.0
    slack = 64 * np.finfo(float).eps

    while resmax > opts.tol and it < opts.max_iter:
        it += 1
        grad = h * res[free]
        # two-loop recursion
        d = -grad.copy()
        alphas = []
        for s_k, y_k in reversed(list(zip(S, Y))):
            rho = 1.0 / np.sum(y_k * s_k)
            a = rho * np.sum(s_k * d)
            alphas.append((a, rho, s_k, y_k))
            d -= a * y_k
        gam = np.sum(S[-1] * Y[-1]) / np.sum(Y[-1] * Y[-1]) if S else h0
        d *= gam
        for a, rho, s_k, y_k in reversed(alphas):
            b = rho * np.sum(y_k * d)
            d += (a - b) * s_k
        slope = float(np.sum(grad * d))
        if slope >= 0:
            S.clear(), Y.clear()
            d = -h0 * grad
            slope = float(np.sum(grad * d))

        step = 1.0
        while True:
            trial = vals.copy()
            trial[free] += step * d
            E_new, res_new = _energy_and_residual(trial, g, V, p)
            if E_new <= E + 1e-4 * step * slope + slack * max(1.0, abs(E)):
                break
            step *= 0.5
            if step < 1e-12:
                break
        if step < 1e-12:
            if not S:
                break  # line search stalled on a fresh gradient step
            S.clear(), Y.clear()
            continue
        s_vec = step * d
        y_vec = h * (res_new[free] - res[free])
        if np.sum(s_vec * y_vec) > 1e-16 * np.sqrt(np.sum(s_vec**2) * np.sum(y_vec**2)):
            S.append(s_vec)
            Y.append(y_vec)
        vals, E, res = trial, E_new, res_new
        if E < opts.energy_floor:
            raise RuntimeError("energy fell below the floor; V may violate V(q) < V(0)")

        if it % opts.k_cut == 0 and np.max(np.abs(vals)) > V.R:
            clipped = np.clip(vals, -V.R, V.R)
            E_c, res_c = _energy_and_residual(clipped, g, V, p)
            if E_c > E + slack * max(1.0, abs(E)):
                raise RuntimeError(f"cutoff raised the energy ({E} -> {E_c})")
            vals, E, res = clipped, E_c, res_c
            S.clear(), Y.clear()
            cuts += 1
        history.append(E)
        resmax = float(np.max(np.abs(res[free]))) if free.any() else 0.0

    q = GridFunction(g, vals)
    if np.max(np.abs(vals)) > V.R:
        q = cutoff_TR(q, V.R)
        cuts += 1
    if prob.symmetric:
        sym = even_symmetrize(q, V, p)
        if energy_pinned(sym, V, p).total <= energy_pinned(q, V, p).total + slack * max(1.0, abs(E)):
            q = sym
    res = pinned_residual(q, V, p)
    resmax = float(np.max(np.abs(res[free]))) if free.any() else 0.0
    en = energy_pinned(q, V, p)
    window = 0.1 * g.X
    report = SolveReport(
        energy=en.as_dict(), initial_energy=E_init, residual=resmax, iterations=it,
        converged=resmax <= opts.tol, cutoff_applications=cuts,
        decay=check_decay(q, window).as_dict(),
        evenness_defect=float(np.max(np.abs(q.values - q.values[::-1]))),
        holder={"beta": prob.regularity_target,
                "seminorm": holder_seminorm(q, prob.regularity_target).seminorm},
        sup_norm=q.sup(), history=history[:: max(1, len(history) // 200)],
        seed=opts.seed)
    return q, report


def even_symmetrize(q: GridFunction, V: PinnedPotential, p: FracParams) -> GridFunction:
    """Whichever of max(q, q(-x)), min(q, q(-x)) has the lower pinned energy."""
    M, m = max_min_combine(q, reflect(q))
    eM, em = energy_pinned(M, V, p).total, energy_pinned(m, V, p).total
    return M if eM <= em else m


@dataclass(frozen=True)
class DecayMargins:
    left_sup: float
    right_sup: float
    left_deriv: float
    right_deriv: float
    tail_exponent: float

    @property
    def sup(self) -> float:
        return max(self.left_sup, self.right_sup)

    def as_dict(self):
        return {"left_sup": self.left_sup, "right_sup": self.right_sup,
                "left_deriv": self.left_deriv, "right_deriv": self.right_deriv,
                "tail_exponent": self.tail_exponent, "sup": self.sup}


def check_decay(q: GridFunction, window: float) -> DecayMargins:
    """sup |q| and sup |q'| on the edge windows, plus a log-log tail fit."""
    g = q.grid
    if not 0 < window < g.X:
        raise ValueError("window must lie in (0, X)")
    x = g.x
    a = np.linalg.norm(q.values, axis=1)
    da = np.linalg.norm(np.gradient(q.values, g.h, axis=0), axis=1)
    right = x >= g.X - window - 1e-12
    left = x <= -g.X + window + 1e-12
    sel = (np.abs(x) >= g.X / 4) & (np.abs(x) <= g.X - window) & (a > 1e-300)
    expo = math.nan
    if np.count_nonzero(sel) >= 4:
        expo = float(-np.polyfit(np.log(np.abs(x[sel])), np.log(a[sel]), 1)[0])
    return DecayMargins(float(a[left].max()), float(a[right].max()),
                        float(da[left].max()), float(da[right].max()), expo)


# ---- scaling experiment ------------------------------------------------------------

_GL8 = np.polynomial.legendre.leggauss(8)


def _cell_average(f, x, h):
    t = x[:, None] + 0.5 * h * _GL8[0][None, :]
    return (f(t) * 0.5 * _GL8[1][None, :]).sum(axis=1)


def scaling_profile(s: float, M_val: float, eps: float):
    """x -> q_sharp(x / eps) for the log-log construction (vectorized callable)."""
    theta = 1.0 if s < 0.5 else 1.0 / eps
    sign = 1.0 if M_val > 0 else -1.0

    def f(x):
        y = np.abs(np.asarray(x, dtype=float) / eps)
        out = np.zeros_like(y)
        m = (y > 0) & (y < 1)
        out[m] = np.log(1.0 - np.log(y[m]))
        out[y == 0] = np.inf
        star = sign * out / theta
        return np.minimum(star, M_val) if sign > 0 else np.maximum(star, M_val)

    return f


@dataclass(frozen=True)
class ScalingResult:
    s: float
    eps: list
    energies: list
    kinetic: list
    potential: list
    slope: float


def scaling_experiment(s: float, M_val: float = 1.0, eps_list=(1.0, 0.5, 0.25, 0.125),
                       V: PinnedPotential | None = None, grid: Grid | None = None
                       ) -> ScalingResult:
    """I(q_eps) for q_eps(x) = q_sharp(x/eps); least-squares slope of log I vs log eps.

    Profiles are projected on the grid by cell averages (8-point Gauss-Legendre per cell),
    which keeps the measure-zero spike at x = 0 out of the node values. The default well
    is V = -0.01 |q|^2 so that the kinetic term dominates over the eps range.
    """
    if not 0 < s <= 0.5:
        raise ValueError("scaling experiment needs s in (0, 1/2]")
    eps = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps_list must be decreasing")
    if M_val == 0:
        raise ValueError("M must be nonzero")
    V = V or quadratic_well(R=abs(M_val), scale=0.01)
    grid = grid or Grid(2.0, 8001)
    p = FracParams(s)
    I, K, P = [], [], []
    for e in eps:
        vals = _cell_average(scaling_profile(s, M_val, e), grid.x, grid.h)
        q = GridFunction(grid, vals)
        en = energy_pinned(q, V, p)
        if not math.isfinite(en.total):
            raise ValueError("non-finite energy; grid too coarse near the singularity")
        I.append(en.total), K.append(en.kinetic), P.append(en.potential_integral)
    slope = float(np.polyfit(np.log(eps), np.log(I), 1)[0])
    return ScalingResult(s, eps, I, K, P, slope)


# ---- non-existence probe ----------------------------------------------------------

@dataclass(frozen=True)
class ProbeReport:
    final_sup: float
    steps: int
    converged: bool
    checks: int
    min_operator_at_max: float
    min_residual_excess: float


def nonexistence_probe(s: float, grid: Grid | None = None, V: PinnedPotential | None = None,
                       initial: GridFunction | None = None, tol: float = 1e-6,
                       max_steps: int = 100000) -> ProbeReport:
    """Explicit gradient flow q' = -((-Delta)^s q - grad V(q)) on the whole box.

    At every iterate with a positive maximum, records (-Delta)^s q at the argmax and
    the excess residual - 2 max q (both must be >= 0 up to rounding).
    """
    grid = grid or Grid(20.0, 801)
    V = V or quadratic_well(R=1.0)
    if V.name != "quadratic-well":
        raise ValueError("the probe is defined for the quadratic well")
    p = FracParams(s)
    if initial is None:
        x = grid.x
        initial = GridFunction(grid, np.where(np.abs(x) < 1, (1 - x**2) ** 2, 0.0))
    vals = np.array(initial.values)
    _, tails = stencil(p.s, p.split_radius, grid.N - 1)
    lam = 2.0 * p.scale(grid.h) * 2.0 * tails[1] + 2.0 * V.params.get("scale", 1.0)
    dt = 1.0 / lam
    min_op, min_exc, checks = math.inf, math.inf, 0
    steps = 0
    while True:
        lap = apply_laplacian(vals, grid, p)
        i = int(np.argmax(vals[:, 0]))
        m = vals[i, 0]
        if m > 0:
            checks += 1
            op = lap[i, 0]
            gv = V.grad(vals[i:i + 1])[0, 0]
            min_op = min(min_op, op)
            min_exc = min(min_exc, (op - gv) - 2.0 * V.params.get("scale", 1.0) * m)
            if not gv < 0:
                raise AssertionError("grad V at a positive maximum is not negative")
        sup = float(np.max(np.abs(vals)))
        if sup <= tol or steps >= max_steps:
            break
        vals = vals - dt * (lap - V.grad(vals))
        steps += 1
    return ProbeReport(sup, steps, sup <= tol, checks,
                       float(min_op) if checks else 0.0, float(min_exc) if checks else 0.0)


# ---- bootstrap and Hoelder diagnostics ------------------------------------------------

def bootstrap_exponents(s: float, gamma: float, beta_start: float, max_steps: int = 50
                        ) -> tuple[list, float]:
    """beta_k = 2s + gamma beta_{k-1} until it exceeds 1; limit 2s/(1-gamma)."""
    lo = max(0.0, 1.0 - 2.0 * s)
    if not lo < gamma < 1:
        raise ValueError(f"gamma must lie in ({lo}, 1)")
    if not 0 < beta_start <= s:
        raise ValueError("beta_start must lie in (0, s]")
    seq = [beta_start]
    while seq[-1] <= 1.0 and len(seq) <= max_steps:
        seq.append(2.0 * s + gamma * seq[-1])
    return seq, 2.0 * s / (1.0 - gamma)


@dataclass(frozen=True)
class HolderEstimate:
    seminorm: float
    sup: float


def holder_seminorm(q: GridFunction, beta_exp: float, local: int = 64, max_global: int = 1500
                    ) -> HolderEstimate:
    """sup |q(x)-q(y)| / |x-y|^beta over all near pairs plus a strided global sample."""
    if not 0 < beta_exp <= 1:
        raise ValueError("exponent must lie in (0, 1]")
    v, h = q.values, q.grid.h
    N = v.shape[0]
    best = 0.0
    for k in range(1, min(local, N - 1) + 1):
        d = np.linalg.norm(v[k:] - v[:-k], axis=1)
        best = max(best, float(d.max()) / (k * h) ** beta_exp)
    stride = max(1, N // max_global)
    idx = np.arange(0, N, stride)
    sub, xs = v[idx], q.grid.x[idx]
    for j in range(len(idx) - 1):
        d = np.linalg.norm(sub[j + 1:] - sub[j], axis=1)
        dist = xs[j + 1:] - xs[j]
        best = max(best, float(np.max(d / dist**beta_exp)))
    return HolderEstimate(best, q.sup())
