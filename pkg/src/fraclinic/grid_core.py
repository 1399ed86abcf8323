"""Truncated uniform grids, sampled profiles q: R -> R^n and pin bookkeeping."""

from __future__ import annotations

import io
import math
import os
import tempfile
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

EXTENSION_KINDS = ("zero", "constant", "power")


@dataclass(frozen=True)
class Grid:
    """Nodes x_i = -X + i*h, i = 0..N-1, with N odd so that x = 0 is a node."""

    X: float
    N: int

    def __post_init__(self):
        if not (self.X > 0 and math.isfinite(self.X)):
            raise ValueError(f"half width must be positive, got {self.X}")
        if self.N < 3 or self.N % 2 == 0:
            raise ValueError(f"point count must be odd and >= 3, got {self.N}")

    @property
    def h(self) -> float:
        return 2.0 * self.X / (self.N - 1)

    @cached_property
    def x(self) -> np.ndarray:
        # h * (i - mid) is exactly antisymmetric, so reflection is exact in floating point
        x = self.h * (np.arange(self.N) - (self.N - 1) // 2).astype(float)
        x.setflags(write=False)
        return x

    @property
    def mid(self) -> int:
        return (self.N - 1) // 2

    def refine(self) -> Grid:
        """Same box, half the spacing (nested nodes)."""
        return Grid(self.X, 2 * self.N - 1)

    def widen(self) -> Grid:
        """Twice the box, same spacing."""
        return Grid(2.0 * self.X, 2 * self.N - 1)

    @classmethod
    def from_spacing(cls, X: float, h: float) -> Grid:
        half = int(round(X / h))
        return cls(half * h, 2 * half + 1)


@dataclass(frozen=True, eq=False)
class Extension:
    """How a profile continues beyond [-X, X].

    zero:     q = 0 outside.
    constant: q = left (x < -X) and q = right (x > X), one value per component.
    power:    q(x) = q(+-X) * (X/|x|)**exponent, exponent > 0.
    """

    kind: str = "zero"
    left: tuple = ()
    right: tuple = ()
    exponent: float | None = None

    def __post_init__(self):
        if self.kind not in EXTENSION_KINDS:
            raise ValueError(f"unknown extension {self.kind!r}")
        if self.kind == "power" and not (self.exponent is not None and self.exponent > 0):
            raise ValueError("power-tail extension needs a positive exponent")
        if self.kind == "constant" and len(self.left) != len(self.right):
            raise ValueError("constant tails need one value per component on each side")

    @classmethod
    def zero(cls) -> Extension:
        return cls("zero")

    @classmethod
    def constant(cls, left, right) -> Extension:
        left = tuple(float(v) for v in np.atleast_1d(left))
        right = tuple(float(v) for v in np.atleast_1d(right))
        return cls("constant", left, right)

    @classmethod
    def power(cls, exponent: float) -> Extension:
        return cls("power", exponent=float(exponent))

    def mirrored(self) -> Extension:
        if self.kind == "constant":
            return Extension("constant", self.right, self.left)
        return self

    def same_as(self, other: Extension) -> bool:
        return (self.kind == other.kind and self.left == other.left
                and self.right == other.right and self.exponent == other.exponent)

    def as_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "constant":
            out["left"] = list(self.left)
            out["right"] = list(self.right)
        if self.kind == "power":
            out["exponent"] = self.exponent
        return out


class GridFunction:
    """Values of q on a grid (N x n, read-only) plus an extension rule."""

    __slots__ = ("grid", "values", "extension")

    def __init__(self, grid: Grid, values, extension: Extension | None = None):
        vals = np.array(values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or vals.shape[0] != grid.N:
            raise ValueError(f"values must have shape ({grid.N}, n), got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")
        ext = extension or Extension.zero()
        if ext.kind == "constant" and len(ext.left) != vals.shape[1]:
            raise ValueError("constant tail has the wrong number of components")
        vals.setflags(write=False)
        self.grid = grid
        self.values = vals
        self.extension = ext

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def with_values(self, values, extension: Extension | None = None) -> GridFunction:
        return GridFunction(self.grid, values, extension or self.extension)

    def component(self, j: int = 0) -> np.ndarray:
        return self.values[:, j]

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    @classmethod
    def from_callable(cls, grid: Grid, f, extension: Extension | None = None) -> GridFunction:
        return cls(grid, f(grid.x), extension)

    @classmethod
    def zeros(cls, grid: Grid, n: int = 1) -> GridFunction:
        return cls(grid, np.zeros((grid.N, n)))

    def __repr__(self):
        return f"GridFunction(X={self.grid.X}, N={self.grid.N}, n={self.n}, ext={self.extension.kind})"


@dataclass(frozen=True)
class PinRegion:
    a: float
    b: float
    indices: np.ndarray = field(repr=False)

    def mask(self, N: int) -> np.ndarray:
        m = np.zeros(N, dtype=bool)
        m[self.indices] = True
        return m

    @property
    def degenerate(self) -> bool:
        return self.a == self.b


def reflect(q: GridFunction) -> GridFunction:
    """q_*(x) = q(-x); exact because the nodes are symmetric about 0."""
    return GridFunction(q.grid, q.values[::-1].copy(), q.extension.mirrored())


def _check_same(q: GridFunction, w: GridFunction):
    if q.grid != w.grid:
        raise ValueError("grid mismatch")
    if q.n != w.n:
        raise ValueError("component count mismatch")


def max_min_combine(q: GridFunction, q_star: GridFunction) -> tuple[GridFunction, GridFunction]:
    """Componentwise M = max(q, q_*), m = min(q, q_*)."""
    _check_same(q, q_star)
    ea, eb = q.extension, q_star.extension
    if ea.kind == "constant" and eb.kind == "constant":
        hi = Extension.constant(np.maximum(ea.left, eb.left), np.maximum(ea.right, eb.right))
        lo = Extension.constant(np.minimum(ea.left, eb.left), np.minimum(ea.right, eb.right))
    elif ea.same_as(eb):
        hi = lo = ea
    else:
        raise ValueError("cannot combine profiles with different extension rules")
    M = GridFunction(q.grid, np.maximum(q.values, q_star.values), hi)
    m = GridFunction(q.grid, np.minimum(q.values, q_star.values), lo)
    return M, m


def pin_indices(grid: Grid, a: float, b: float, s: float | None = None) -> PinRegion:
    """Nodes with x_i in [a, b]; a = b snaps to the nearest node within h/2."""
    if math.isnan(a) or math.isnan(b):
        raise ValueError("pin endpoints must not be NaN")
    if a > b:
        raise ValueError(f"pin interval is empty: a={a} > b={b}")
    x, h = grid.x, grid.h
    if a == b:
        if s is not None and s <= 0.5:
            raise ValueError("a single pinned point needs s > 1/2")
        i = int(np.argmin(np.abs(x - a)))
        if abs(x[i] - a) > 0.5 * h + 1e-12 * h:
            raise ValueError(f"pin point {a} is not within h/2 of a grid node")
        return PinRegion(float(a), float(b), np.array([i]))
    slack = 1e-9 * h
    idx = np.nonzero((x >= a - slack) & (x <= b + slack))[0]
    if idx.size == 0:
        raise ValueError(f"no grid node in [{a}, {b}]")
    return PinRegion(float(a), float(b), idx)


def atomic_write_text(path, text: str):
    """Write via a temp file in the same directory, then rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(v: float) -> str:
    return format(float(v), ".17g")


def to_csv(q: GridFunction) -> str:
    buf = io.StringIO()
    buf.write(",".join(["x"] + [f"q_{j + 1}" for j in range(q.n)]) + "\n")
    for xi, row in zip(q.x, q.values):
        buf.write(",".join([fmt(xi)] + [fmt(v) for v in row]) + "\n")
    return buf.getvalue()


def write_csv(q: GridFunction, path):
    atomic_write_text(path, to_csv(q))


def read_csv(path, extension: Extension | None = None) -> GridFunction:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if not header or header[0] != "x" or len(header) < 2:
            raise ValueError(f"{path}: expected header 'x,q_1,...'")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    x = data[:, 0]
    grid = Grid(float(-x[0]), len(x))
    if not np.allclose(x, grid.x, rtol=0, atol=1e-9 * max(1.0, grid.X)):
        raise ValueError(f"{path}: nodes are not a symmetric uniform grid")
    return GridFunction(grid, data[:, 1:], extension)
