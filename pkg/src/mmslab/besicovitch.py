"""Besicovitch pairs, neighbour maps, pair doubling and the uniform-space classifier."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .core import TIE_TOL, Ball, FiniteMMS, MMSError, PointedMMS, ball_mask

CHECK_TOL = 1e-9


class EmptySide(MMSError):
    pass


class DoublingExhausted(MMSError):
    pass


@dataclass(frozen=True)
class PairCertificate:
    a: int
    b: int
    d: float
    margin: float

    @property
    def certified(self) -> bool:
        return self.margin >= -CHECK_TOL

    def to_json(self) -> dict:
        return {"a": self.a, "b": self.b, "d": self.d, "margin": self.margin}


def _open(X: FiniteMMS, c: int, r: float) -> np.ndarray:
    return np.flatnonzero(X.row(c) < r - TIE_TOL)


def is_besicovitch_pair(X: FiniteMMS, a: int, b: int) -> float:
    """min over x in B(a,d), y in B(b,d) of d(x,y) - d, with d = d(a,b) and open balls."""
    if a == b:
        raise MMSError("a pair needs two distinct points")
    d = float(X.row(a)[b])
    A, B = _open(X, a, d), _open(X, b, d)
    if np.intersect1d(A, B, assume_unique=True).size:
        return -d
    best = np.inf
    for x in A:
        best = min(best, float(X.row(x)[B].min()))
    return best - d


def certify(X: FiniteMMS, a: int, b: int) -> PairCertificate:
    return PairCertificate(int(a), int(b), float(X.row(a)[b]), is_besicovitch_pair(X, a, b))


def resolution_limited(X: FiniteMMS, a: int, b: int) -> bool:
    """True when both open balls of the pair are singletons.

    Any two nearest neighbours of a discrete sample look like a pair at that
    distance; such a pair carries no information about the sampled space.
    """
    d = float(X.row(a)[b])
    return len(_open(X, a, d)) == 1 and len(_open(X, b, d)) == 1


def find_pairs(X: FiniteMMS, max_d: float, anchors=None, resolution_guard: bool = True) -> list[PairCertificate]:
    """All certified pairs with d <= max_d, optionally with a restricted to ``anchors``.

    A candidate is discarded at once when some point is strictly inside both
    open balls, which already witnesses a negative margin.  With the
    resolution guard, a pair whose open balls are singletons is kept only if
    it doubles (pairs in uniform spaces always do; neighbouring grid points
    of a sampled line or circle do not).
    """
    anchors = range(X.n) if anchors is None else sorted(set(int(a) for a in anchors))
    anchor_set = set(anchors)
    out = []
    for a in anchors:
        ra = X.row(a)
        for b in np.flatnonzero((ra > TIE_TOL) & (ra <= max_d + TIE_TOL)):
            b = int(b)
            if b in anchor_set and b < a:
                continue  # already seen as (b, a)
            d = float(ra[b])
            rb = X.row(b)
            if np.any((ra < d - TIE_TOL) & (rb < d - TIE_TOL)):
                continue
            cert = certify(X, a, b)
            if not cert.certified:
                continue
            if resolution_guard and resolution_limited(X, a, b) and double_pair(X, cert) is None:
                continue
            out.append(cert)
    out.sort(key=lambda c: (c.d, min(c.a, c.b), max(c.a, c.b)))
    return out


def min_pair_distance(X: FiniteMMS, anchors=None, max_d: float = np.inf) -> float | None:
    pairs = find_pairs(X, max_d, anchors)
    return pairs[0].d if pairs else None


def closure_ball(X: FiniteMMS, c: int, r: float) -> np.ndarray:
    """Finite stand-in for the closure of the open ball B(c, r)."""
    return np.flatnonzero(ball_mask(X, Ball(int(c), float(r), "closure")))


@dataclass
class NeighborMap:
    pair: PairCertificate
    side_a: np.ndarray
    side_b: np.ndarray
    image: dict
    ties: list = field(default_factory=list)

    def __call__(self, x: int) -> int:
        return self.image[int(x)]


def neighbor_map(X: FiniteMMS, pair: PairCertificate) -> NeighborMap:
    """Send each point of C(a,d) to its nearest point of C(b,d) and vice versa."""
    Ca = closure_ball(X, pair.a, pair.d)
    Cb = closure_ball(X, pair.b, pair.d)
    Ca_only = np.setdiff1d(Ca, Cb)
    Cb_only = np.setdiff1d(Cb, Ca)
    if len(Ca_only) == 0 or len(Cb_only) == 0:
        raise EmptySide("one side of the pair is empty")
    image, ties = {}, []
    for src, dst in ((Ca_only, Cb_only), (Cb_only, Ca_only)):
        for x in src:
            row = X.row(x)[dst]
            m = row.min()
            hits = dst[row <= m + TIE_TOL]
            if len(hits) > 1:
                ties.append((int(x), hits.tolist()))
            image[int(x)] = int(hits[0])
    return NeighborMap(pair, Ca_only, Cb_only, image, ties)


def verify_pair_properties(X: FiniteMMS, pair: PairCertificate, tol: float = CHECK_TOL) -> dict:
    """Check the six structural identities of a Besicovitch pair.

    Returns {name: {"ok": bool, "witness": ...}} with the first failing
    witness for each property.
    """
    a, b, d = pair.a, pair.b, pair.d
    nm = neighbor_map(X, pair)
    Ca, Cb = nm.side_a, nm.side_b
    dom = np.concatenate([Ca, Cb])
    report = {}

    big = set(closure_ball(X, a, 2 * d).tolist())
    union = set(dom.tolist())
    diff = sorted(big ^ union)
    report["ball_union"] = {"ok": not diff, "witness": diff[:1] or None}

    bad = None
    Ca_set = set(closure_ball(X, a, d).tolist())
    for x in Ca:
        if set(closure_ball(X, x, d).tolist()) != Ca_set:
            bad = int(x)
            break
    report["ball_recentering"] = {"ok": bad is None, "witness": bad}

    off = [(int(x), float(X.row(x)[nm(x)])) for x in dom if abs(X.row(x)[nm(x)] - d) > tol]
    report["neighbor_distance"] = {"ok": not off, "witness": off[0] if off else None}

    bad = None
    for x in Ca:
        rx = X.row(x)[Cb]
        ri = X.row(nm(x))[Cb]
        err = np.abs(rx - (d + ri))
        if err.max() > tol:
            k = int(np.argmax(err))
            bad = (int(x), int(Cb[k]), float(err[k]))
            break
    report["cross_distance"] = {"ok": bad is None, "witness": bad}

    bad = next((int(x) for x in dom if nm(nm(x)) != x), None)
    report["involution"] = {"ok": bad is None, "witness": bad}

    img = np.array([nm(x) for x in dom])
    D = X.sub(dom)
    Di = X.sub(img)
    err = np.abs(D - Di)
    if err.size and err.max() > tol:
        i, j = np.unravel_index(int(np.argmax(err)), err.shape)
        report["isometry"] = {"ok": False, "witness": (int(dom[i]), int(dom[j]), float(err[i, j]))}
    else:
        report["isometry"] = {"ok": True, "witness": None}
    report["ties"] = nm.ties
    return report


def double_pair(X: FiniteMMS, pair: PairCertificate) -> PairCertificate | None:
    """Lowest-index b' at distance 2d from a forming a certified pair with a."""
    ra = X.row(pair.a)
    for b in np.flatnonzero(np.abs(ra - 2.0 * pair.d) <= CHECK_TOL):
        cert = certify(X, pair.a, int(b))
        if cert.certified:
            return cert
    return None


def doubling_chain(X: FiniteMMS, pair: PairCertificate, limit: int = 64) -> list[PairCertificate]:
    chain = [pair]
    while len(chain) < limit:
        nxt = double_pair(X, chain[-1])
        if nxt is None:
            break
        chain.append(nxt)
    return chain


def product_coordinates(X: FiniteMMS, pair: PairCertificate, levels: int) -> tuple[dict, float]:
    """Coordinates p -> (point of C(a,d), bits) on C(a, 2^levels d), and the metric defect.

    Level j folds C(b_j, 2^j d) onto C(a, 2^j d) with the neighbour map of the
    pair (a, b_j) at distance 2^j d and records bit j.
    """
    if levels < 1:
        raise MMSError("levels must be >= 1")
    chain = doubling_chain(X, pair, levels)
    if len(chain) < levels:
        raise DoublingExhausted(f"only {len(chain)} doubling levels available, {levels} requested")
    maps = [neighbor_map(X, c) for c in chain]
    sides_b = [set(m.side_b.tolist()) for m in maps]
    dom = closure_ball(X, pair.a, 2.0**levels * pair.d)
    coords = {}
    for p in dom:
        q, bits = int(p), [0] * levels
        for j in range(levels - 1, -1, -1):
            if q in sides_b[j]:
                bits[j] = 1
                q = maps[j](q)
        coords[int(p)] = (q, tuple(bits))
    pts = np.array(sorted(coords))
    bars = np.array([coords[p][0] for p in pts])
    S = np.array([coords[p][1] for p in pts], dtype=float)
    weights = pair.d * 2.0 ** np.arange(levels)
    model = X.sub(bars) + np.abs(S[:, None, :] - S[None, :, :]) @ weights
    defect = float(np.abs(X.sub(pts) - model).max()) if len(pts) else 0.0
    return coords, defect


def epsilon_components(X: FiniteMMS, eps: float) -> list[np.ndarray]:
    """Components of the graph joining points at distance < eps."""
    if eps <= 0:
        raise MMSError("eps must be positive")
    D = X.dist
    adj = sparse.csr_matrix(D < eps - TIE_TOL)
    _, lab = connected_components(adj, directed=False)
    groups = {}
    for i, l in enumerate(lab):
        groups.setdefault(l, []).append(i)
    return sorted((np.array(g) for g in groups.values()), key=lambda g: g[0])


@dataclass
class ClassificationResult:
    verdict: str
    delta: float | None = None
    evidence: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "delta": self.delta, "evidence": self.evidence}


def _probe(P: PointedMMS, max_points: int) -> tuple[FiniteMMS, int, float]:
    d0 = P.base_row()
    s = np.sort(d0)
    if len(s) <= max_points:
        R = float(s[-1])
    else:
        R = float(s[max_points - 1])
        if s[max_points] <= R + TIE_TOL:  # do not split a sphere
            smaller = s[s < R - TIE_TOL]
            R = float(smaller[-1]) if len(smaller) else 0.0
    idx = np.flatnonzero(d0 <= R + TIE_TOL)
    from .core import restrict_pointed

    W, _ = restrict_pointed(P, idx)
    return W.space, W.base, R


def central_point(X: FiniteMMS) -> int:
    """Point minimizing max(d(0, .), d(f, .)) with f farthest from point 0."""
    r0 = X.row(0)
    f = int(np.argmax(r0))
    return int(np.argmin(np.maximum(r0, X.row(f))))


def classify_uniform(X, floor: float | None = None, tol: float = 0.25, base: int | None = None, max_points: int = 2048) -> ClassificationResult:
    """Decide whether X looks like a scaled R, T or S at the scales it resolves.

    Works in the largest ball around the base with at most ``max_points``
    points; pairs are anchored at the base (uniform spaces look the same
    from every point) and limited to half the probe radius so both open
    balls of a candidate lie inside the probe.
    """
    from .geoprobe import uniformity_defect

    if isinstance(X, PointedMMS):
        P = X if base is None else PointedMMS(X.space, base)
    else:
        P = PointedMMS(X, central_point(X) if base is None else base)
    Z, zb, R = _probe(P, max_points)
    minpos = Z.min_positive_distance()
    floor = 4.0 * minpos if floor is None else float(floor)
    ev: dict = {"probe_radius": R, "probe_points": Z.n, "floor": floor}

    core = R / 2.0
    d0 = Z.row(zb)
    radii = [2.0**k for k in range(math.floor(math.log2(2 * floor)), math.ceil(math.log2(core)) + 1)]
    radii = [r for r in radii if 2 * floor <= r <= core / 2.0]
    if radii:
        centers = np.flatnonzero(d0 <= core - max(radii) + TIE_TOL)
        centers = centers[np.linspace(0, len(centers) - 1, min(64, len(centers))).round().astype(int)]
        defect, witness = uniformity_defect(Z, radii, centers=centers, normalize=True)
    else:
        defect, witness = 0.0, None
    ev["uniformity_defect"] = defect
    ev["uniformity_witness"] = witness
    if defect > tol:
        ev["notes"] = "uniformity gate failed"
        return ClassificationResult("Unknown", None, ev)

    comps = epsilon_components(Z, floor * (1 + 1e-9))
    ev["epsilon_connectivity"] = [(floor, len(comps))]
    pairs = find_pairs(Z, R / 2.0, anchors=[zb])
    ev["pair_count"] = len(pairs)
    ev["pair_distances"] = sorted({round(p.d, 12) for p in pairs})
    delta = pairs[0].d if pairs else None
    ev["delta_min"] = delta
    if len(comps) == 1 and not pairs:
        return ClassificationResult("RLike", None, ev)
    if delta is not None and delta > floor:
        ok = True
        rad = delta * (1 - 1e-6)
        centers = np.flatnonzero(d0 <= R - delta)
        for c in centers[np.linspace(0, len(centers) - 1, min(16, len(centers))).round().astype(int)]:
            ball = np.flatnonzero(Z.row(c) < rad)
            sub = Z.sub(ball)
            n_comp = connected_components(sparse.csr_matrix(sub < floor + TIE_TOL), directed=False)[0]
            if n_comp != 1:
                ok = False
                ev["disconnected_ball"] = int(c)
                break
        if ok:
            return ClassificationResult("TLike", delta, ev)
    scales = {round(math.log2(p.d)) for p in pairs if p.d >= floor - TIE_TOL and abs(math.log2(p.d) - round(math.log2(p.d))) < 1e-9}
    ev["dyadic_scales"] = sorted(scales)
    if len(scales) >= 3:
        return ClassificationResult("SLike", None, ev)
    ev["notes"] = "no rule matched"
    return ClassificationResult("Unknown", delta, ev)
