"""Constructors for the model spaces: dyadic sequences, circle-times-sequences,
the weighted real line, the star and spider configurations and the
Heisenberg group."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import FiniteMMS, MMSError, PointedMMS, SizeGuard

MAX_POINTS = 2**20


@dataclass(frozen=True)
class STruncationSpec:
    m: int
    n: int

    def __post_init__(self):
        if self.m > self.n:
            raise MMSError("need m <= n")
        if self.n - self.m > 20:
            raise SizeGuard(f"2^{self.n - self.m + 1} points exceeds the size guard")

    @property
    def size(self) -> int:
        return 2 ** (self.n - self.m + 1)


@dataclass(frozen=True)
class TTruncationSpec:
    circle_points: int
    m: int = 0
    n_levels: int = 1

    def __post_init__(self):
        if self.circle_points <= 0 or self.circle_points % 2:
            raise MMSError("circle_points must be a positive even integer")
        if self.m < 0 or self.n_levels <= 0:
            raise MMSError("need m >= 0 and n_levels >= 1")
        if self.circle_points * 2**self.n_levels > MAX_POINTS:
            raise SizeGuard("T truncation exceeds the size guard")


def make_S(spec: STruncationSpec | tuple[int, int]) -> PointedMMS:
    """Binary strings on indices m..n with d(s, t) = sum 2^i |s_i - t_i|.

    Point k encodes the string whose bit j is s_{m+j}, so the distance is
    2^m * (k XOR l), exact in binary64.
    """
    if not isinstance(spec, STruncationSpec):
        spec = STruncationSpec(*spec)
    codes = np.arange(spec.size, dtype=np.int64)
    unit = 2.0**spec.m

    def row(i: int) -> np.ndarray:
        return (codes ^ codes[i]).astype(float) * unit

    space = FiniteMMS(np.full(spec.size, unit), row_fn=row, labels=codes.tolist())
    return PointedMMS(space, 0)


def s_string(code: int, spec: STruncationSpec) -> dict[int, int]:
    """Index -> bit for an encoded point of make_S."""
    return {spec.m + j: (code >> j) & 1 for j in range(spec.n - spec.m + 1)}


def make_T(spec: TTruncationSpec | tuple[int, int, int]) -> PointedMMS:
    """Circle R/2Z (discretized) times binary strings on indices m..m+levels-1.

    Point index = string_code * circle_points + node.  Each point carries
    mass 1/circle_points, i.e. H/2 of its arc.
    """
    if not isinstance(spec, TTruncationSpec):
        spec = TTruncationSpec(*spec)
    cp = spec.circle_points
    nstr = 2**spec.n_levels
    idx = np.arange(cp * nstr, dtype=np.int64)
    node = idx % cp
    code = idx // cp
    step = 2.0 / cp
    unit = 2.0**spec.m

    def row(i: int) -> np.ndarray:
        k = np.abs(node - node[i])
        arc = np.minimum(k, cp - k).astype(float) * step
        return arc + (code ^ code[i]).astype(float) * unit

    labels = [(int(a), int(b)) for a, b in zip(node, code)]
    return PointedMMS(FiniteMMS(np.full(len(idx), 1.0 / cp), row_fn=row, labels=labels), 0)


def make_R_grid(h: float, extent: float) -> PointedMMS:
    """Grid -extent..extent with step h carrying H/2 (mass h/2 per point)."""
    if h <= 0 or extent <= 0:
        raise MMSError("h and extent must be positive")
    k = int(math.floor(extent / h + 1e-9))
    if 2 * k + 1 > MAX_POINTS:
        raise SizeGuard("grid exceeds the size guard")
    x = np.arange(-k, k + 1, dtype=float) * h

    def row(i: int) -> np.ndarray:
        return np.abs(x - x[i])

    return PointedMMS(FiniteMMS(np.full(len(x), h / 2.0), row_fn=row, labels=x.tolist()), k)


def line_space(x, weight, base: int) -> PointedMMS:
    x = np.asarray(x, dtype=float)
    return PointedMMS(FiniteMMS(np.asarray(weight, dtype=float), np.abs(x[:, None] - x[None, :]), labels=x.tolist()), base)


def make_star_Sn(n: int) -> PointedMMS:
    """s_0 joined to s_i at distance 2^i; d(s_i, s_j) = 2^i + 2^j."""
    if not 1 <= n <= 30:
        raise MMSError("need 1 <= n <= 30")
    r = np.array([0.0] + [2.0**i for i in range(1, n + 1)])
    d = r[:, None] + r[None, :]
    np.fill_diagonal(d, 0.0)
    return PointedMMS(FiniteMMS(np.ones(n + 1), d, labels=[f"s{i}" for i in range(n + 1)]), 0)


def make_spider_midpoints(n: int) -> FiniteMMS:
    """Hub s_0 at distance 2 from each midpoint m_i, midpoints mutually 4 apart."""
    if not 1 <= n <= 30:
        raise MMSError("need 1 <= n <= 30")
    d = np.full((n + 1, n + 1), 4.0)
    d[0, :] = d[:, 0] = 2.0
    np.fill_diagonal(d, 0.0)
    return FiniteMMS(np.ones(n + 1), d, labels=["s0"] + [f"m{i}" for i in range(1, n + 1)])


def scale_space(X: FiniteMMS, lam: float) -> FiniteMMS:
    if lam <= 0:
        raise MMSError("scale factor must be positive")
    return X.scaled(lam)


# Heisenberg group with the Koranyi gauge


@dataclass(frozen=True)
class HeisenbergPoint:
    x: float
    y: float
    t: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.t])


def heisenberg_mul(a, b) -> HeisenbergPoint:
    return HeisenbergPoint(a.x + b.x, a.y + b.y, a.t + b.t + 2.0 * (a.x * b.y - b.x * a.y))


def heisenberg_inv(a) -> HeisenbergPoint:
    return HeisenbergPoint(-a.x, -a.y, -a.t)


def heisenberg_dilate(a, lam: float) -> HeisenbergPoint:
    return HeisenbergPoint(lam * a.x, lam * a.y, lam * lam * a.t)


def koranyi_norm(a) -> float:
    return float(((a.x**2 + a.y**2) ** 2 + a.t**2) ** 0.25)


def heisenberg_dist_matrix(pts: np.ndarray) -> np.ndarray:
    """Pairwise ||a^-1 * b|| for an (k, 3) array of points."""
    x, y, t = pts[:, 0], pts[:, 1], pts[:, 2]
    dx = x[None, :] - x[:, None]
    dy = y[None, :] - y[:, None]
    dt = t[None, :] - t[:, None] + 2.0 * (-x[:, None] * y[None, :] + x[None, :] * y[:, None])
    return ((dx**2 + dy**2) ** 2 + dt**2) ** 0.25


def make_heisenberg_sample(k: int, radius: float, seed: int = 0) -> PointedMMS:
    """k points of the Koranyi ball (identity first), by seeded rejection sampling."""
    if not 1 <= k <= 5000:
        raise MMSError("need 1 <= k <= 5000")
    rng = np.random.default_rng(seed)
    pts = [np.zeros(3)]
    while len(pts) < k:
        cand = rng.uniform([-radius, -radius, -radius**2], [radius, radius, radius**2], size=(4 * k, 3))
        norm = ((cand[:, 0] ** 2 + cand[:, 1] ** 2) ** 2 + cand[:, 2] ** 2) ** 0.25
        pts.extend(cand[norm <= radius][: k - len(pts)])
    arr = np.array(pts)
    d = heisenberg_dist_matrix(arr)
    np.fill_diagonal(d, 0.0)
    d = (d + d.T) / 2.0
    return PointedMMS(FiniteMMS(np.ones(k), d, labels=arr.tolist()), 0)
