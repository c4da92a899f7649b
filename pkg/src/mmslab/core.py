"""Finite pointed metric measure spaces and their elementary geometry."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

TIE_TOL = 1e-9
METRIC_TOL = 1e-9
DENSE_LIMIT = 6000


class MMSError(ValueError):
    """Base class for invalid inputs to the lab."""


class ZeroMass(MMSError):
    pass


class InvalidCorrespondence(MMSError):
    pass


class EmptySubset(MMSError):
    pass


class SizeGuard(MMSError):
    pass


class SchemaError(MMSError):
    pass


@dataclass(frozen=True, eq=False)
class FiniteMMS:
    """A finite metric measure space.

    Either a dense distance table or a row callback is supplied; the
    callback form lets large model spaces (2^17 points) answer ball
    queries without materializing an n x n table.
    """

    weight: np.ndarray
    table: np.ndarray | None = None
    row_fn: Callable[[int], np.ndarray] | None = field(default=None, repr=False)
    labels: list | None = None

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=float)
        object.__setattr__(self, "weight", w)
        if self.table is not None:
            t = np.asarray(self.table, dtype=float)
            if t.shape != (len(w), len(w)):
                raise SchemaError(f"dist shape {t.shape} does not match {len(w)} weights")
            object.__setattr__(self, "table", t)
        elif self.row_fn is None:
            raise SchemaError("either a distance table or a row function is required")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise SchemaError("weights must be finite and nonnegative")
        if w.sum() <= 0:
            raise ZeroMass("total mass must be positive")

    @property
    def n(self) -> int:
        return len(self.weight)

    @property
    def total_mass(self) -> float:
        return float(self.weight.sum())

    def row(self, i: int) -> np.ndarray:
        if self.table is not None:
            return self.table[i]
        return self.row_fn(int(i))

    @cached_property
    def dist(self) -> np.ndarray:
        if self.table is not None:
            return self.table
        if self.n > DENSE_LIMIT:
            raise SizeGuard(f"refusing to materialize a {self.n}x{self.n} distance table")
        return np.stack([self.row(i) for i in range(self.n)])

    def sub(self, idx) -> np.ndarray:
        """Distance block between the index arrays ``idx`` (rows and columns)."""
        idx = np.asarray(idx, dtype=int)
        if self.table is not None or "dist" in self.__dict__:
            return self.dist[np.ix_(idx, idx)]
        return np.stack([self.row(i)[idx] for i in idx]) if len(idx) else np.zeros((0, 0))

    def min_positive_distance(self, sample: int | None = None) -> float:
        rows = range(self.n) if sample is None else range(min(sample, self.n))
        best = np.inf
        for i in rows:
            r = self.row(i)
            pos = r[r > TIE_TOL]
            if len(pos):
                best = min(best, float(pos.min()))
        return best

    def scaled(self, dist_factor: float, weight_factor: float = 1.0) -> "FiniteMMS":
        if self.table is not None:
            return FiniteMMS(self.weight * weight_factor, self.table * dist_factor, labels=self.labels)
        fn = self.row_fn
        return FiniteMMS(
            self.weight * weight_factor,
            row_fn=lambda i: fn(i) * dist_factor,
            labels=self.labels,
        )

    def check_metric(self, tol: float = METRIC_TOL) -> list[str]:
        """Return a list of violated metric axioms (empty when the table is a metric)."""
        d = self.dist
        problems = []
        if np.any(np.abs(np.diag(d)) > tol):
            problems.append("nonzero diagonal")
        if np.any(np.abs(d - d.T) > tol):
            problems.append("asymmetric")
        if np.any(d < -tol):
            problems.append("negative distance")
        for k in range(self.n):
            if np.any(d > d[:, k, None] + d[None, k, :] + tol):
                problems.append(f"triangle inequality fails through point {k}")
                break
        return problems


@dataclass(frozen=True, eq=False)
class PointedMMS:
    space: FiniteMMS
    base: int = 0

    def __post_init__(self):
        if not 0 <= self.base < self.space.n:
            raise SchemaError(f"base {self.base} out of range")

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def weight(self) -> np.ndarray:
        return self.space.weight

    def base_row(self) -> np.ndarray:
        return self.space.row(self.base)


@dataclass(frozen=True)
class Ball:
    center: int
    radius: float
    kind: str = "closed"

    def __post_init__(self):
        if self.radius < 0:
            raise MMSError("radius must be nonnegative")
        if self.kind not in ("open", "closed", "closure"):
            raise MMSError(f"unknown ball kind {self.kind!r}")


def _closure_mask(space: FiniteMMS, row: np.ndarray, radius: float, resolution: float | None) -> np.ndarray:
    inside = row < radius - TIE_TOL
    sphere = np.abs(row - radius) <= TIE_TOL
    if not sphere.any() or not inside.any():
        return inside
    if resolution is None:
        resolution = min(2.0 * space.min_positive_distance(sample=64), radius / 2.0)
    members = np.flatnonzero(inside)
    for j in np.flatnonzero(sphere):
        if space.row(j)[members].min() <= resolution + TIE_TOL:
            inside[j] = True
    return inside


def ball_mask(space: FiniteMMS, b: Ball, resolution: float | None = None) -> np.ndarray:
    row = space.row(b.center)
    if b.kind == "open":
        return row < b.radius - TIE_TOL
    if b.kind == "closed":
        return row <= b.radius + TIE_TOL
    return _closure_mask(space, row.copy(), b.radius, resolution)


def ball_points(space: FiniteMMS, b: Ball, resolution: float | None = None) -> set[int]:
    """Indices in the ball.

    ``closure`` is the finite stand-in for the closure of the open ball: the
    open ball plus sphere points lying within ``resolution`` of it.
    """
    return set(np.flatnonzero(ball_mask(space, b, resolution)).tolist())


def ball_measure(space: FiniteMMS, b: Ball) -> float:
    return float(space.weight[ball_mask(space, b)].sum())


def rescale(p: PointedMMS, r: float) -> PointedMMS:
    """The tangent rescaling: distances divided by r, mass normalized on the open r-ball."""
    if r <= 0:
        raise MMSError("scale must be positive")
    m = ball_measure(p.space, Ball(p.base, r, "open"))
    if m <= 0:
        raise ZeroMass(f"open ball of radius {r} at the base has zero mass")
    return PointedMMS(p.space.scaled(1.0 / r, 1.0 / m), p.base)


def restrict(space: FiniteMMS, subset: Iterable[int]) -> FiniteMMS:
    idx = np.asarray(sorted(set(int(i) for i in subset)), dtype=int)
    if len(idx) == 0:
        raise EmptySubset("subset is empty")
    labels = [space.labels[i] for i in idx] if space.labels is not None else None
    return FiniteMMS(space.weight[idx], space.sub(idx), labels=labels)


def restrict_pointed(p: PointedMMS, subset: Iterable[int]) -> tuple[PointedMMS, np.ndarray]:
    """Restrict keeping the base; returns the new space and the kept original indices."""
    idx = np.asarray(sorted(set(int(i) for i in subset) | {p.base}), dtype=int)
    labels = [p.space.labels[i] for i in idx] if p.space.labels is not None else None
    sub = FiniteMMS(p.space.weight[idx], p.space.sub(idx), labels=labels)
    return PointedMMS(sub, int(np.searchsorted(idx, p.base))), idx


def window(p: PointedMMS, radius: float) -> tuple[PointedMMS, np.ndarray]:
    """Closed ball around the base as a pointed space."""
    keep = np.flatnonzero(p.base_row() <= radius + TIE_TOL)
    return restrict_pointed(p, keep)


def density_profile(p: PointedMMS, radii: Sequence[float]) -> list[tuple[float, float]]:
    """Density estimates mu(C(x, r)) / 2r with closed balls."""
    out = []
    for r in radii:
        if r <= 0:
            raise MMSError("radii must be positive")
        out.append((float(r), ball_measure(p.space, Ball(p.base, r, "closed")) / (2.0 * r)))
    return out


@dataclass(frozen=True)
class Correspondence:
    pairs: tuple[tuple[int, int], ...]
    slack: float = 0.0

    def __post_init__(self):
        if not self.pairs:
            raise InvalidCorrespondence("correspondence is empty")
        if self.slack < 0:
            raise InvalidCorrespondence("slack must be nonnegative")

    @classmethod
    def make(cls, pairs, slack: float = 0.0) -> "Correspondence":
        return cls(tuple((int(a), int(b)) for a, b in pairs), float(slack))

    def mirrored(self) -> "Correspondence":
        return Correspondence(tuple((b, a) for a, b in self.pairs), self.slack)

    def to_json(self) -> dict:
        return {"pairs": [list(p) for p in self.pairs], "slack": self.slack}

    @classmethod
    def from_json(cls, obj: dict) -> "Correspondence":
        try:
            return cls.make(obj["pairs"], obj.get("slack", 0.0))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"bad correspondence: {exc}") from exc


def distortion(X: FiniteMMS, Y: FiniteMMS, pairs) -> float:
    p = np.array([a for a, _ in pairs])
    q = np.array([b for _, b in pairs])
    if len(p) < 2:
        return 0.0
    return float(np.abs(X.sub(p) - Y.sub(q)).max())


def cross_distances(X: FiniteMMS, Y: FiniteMMS, corr: Correspondence) -> np.ndarray:
    """min over matched (p, q) of d_X(u, p) + slack + d_Y(q, v)."""
    cross = np.full((X.n, Y.n), np.inf)
    for p, q in corr.pairs:
        np.minimum(cross, X.row(p)[:, None] + Y.row(q)[None, :], out=cross)
    return cross + corr.slack


def _floyd(d: np.ndarray) -> np.ndarray:
    d = d.copy()
    for k in range(len(d)):
        np.minimum(d, d[:, k, None] + d[None, k, :], out=d)
    return d


def glue(X: PointedMMS, Y: PointedMMS, corr: Correspondence) -> tuple[PointedMMS, np.ndarray, np.ndarray]:
    """Disjoint union of X and Y with cross distances induced by a correspondence.

    Returns the glued pointed space (based at X's base) and the index maps of
    X and Y into it.  When the slack is below half the correspondence's
    distortion the metric closure is applied; if that would shorten any
    within-side distance the embeddings are not isometric and the
    correspondence is rejected.
    """
    if (X.base, Y.base) not in set(corr.pairs):
        raise InvalidCorrespondence("correspondence must relate base to base")
    nx, ny = X.n, Y.n
    for a, b in corr.pairs:
        if not (0 <= a < nx and 0 <= b < ny):
            raise InvalidCorrespondence(f"pair {(a, b)} out of range")
    DX, DY = X.space.dist, Y.space.dist
    C = cross_distances(X.space, Y.space, corr)
    D = np.block([[DX, C], [C.T, DY]])
    if corr.slack + METRIC_TOL < distortion(X.space, Y.space, corr.pairs) / 2:
        closed = _floyd(D)
        if np.any(closed[:nx, :nx] < DX - METRIC_TOL) or np.any(closed[nx:, nx:] < DY - METRIC_TOL):
            raise InvalidCorrespondence("slack too small: gluing would shorten distances within a side")
        D = closed
    labels = None
    if X.space.labels is not None or Y.space.labels is not None:
        lx = X.space.labels or [None] * nx
        ly = Y.space.labels or [None] * ny
        labels = [("X", l) for l in lx] + [("Y", l) for l in ly]
    Z = FiniteMMS(np.concatenate([X.weight, Y.weight]), D, labels=labels)
    return PointedMMS(Z, X.base), np.arange(nx), nx + np.arange(ny)


# JSON space format


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (tuple, list)):
        return [_jsonable(x) for x in v]
    return v


def space_to_json(space: FiniteMMS, base: int | None = None) -> dict:
    return {
        "n": space.n,
        "dist": space.dist.tolist(),
        "weight": space.weight.tolist(),
        "base": base,
        "labels": None if space.labels is None else [_jsonable(l) for l in space.labels],
    }


def pointed_to_json(p: PointedMMS) -> dict:
    return space_to_json(p.space, p.base)


def space_from_json(obj: dict, check: bool = True) -> tuple[FiniteMMS, int | None]:
    try:
        n = int(obj["n"])
        dist = np.asarray(obj["dist"], dtype=float)
        weight = np.asarray(obj["weight"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad space JSON: {exc}") from exc
    if dist.shape != (n, n) or weight.shape != (n,):
        raise SchemaError("dist must be n x n and weight length n")
    base = obj.get("base")
    if base is not None and not 0 <= int(base) < n:
        raise SchemaError("base out of range")
    space = FiniteMMS(weight, dist, labels=obj.get("labels"))
    if check:
        bad = space.check_metric()
        if bad:
            raise SchemaError("not a metric: " + "; ".join(bad))
    return space, None if base is None else int(base)


def pointed_from_json(obj: dict, check: bool = True) -> PointedMMS:
    space, base = space_from_json(obj, check)
    return PointedMMS(space, 0 if base is None else base)


def load_pointed(path) -> PointedMMS:
    with open(path) as fh:
        return pointed_from_json(json.load(fh))
