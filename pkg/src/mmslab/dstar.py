"""Bounds on the pointed distance d*, model comparators and tangent scans.

Upper bounds come from explicit gluings (a correspondence turned into a
common ambient space) evaluated with F_x.  Lower bounds come from test
functions whose integrals are the same in every ambient space, so they
bound F from below no matter how X and Y are embedded.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.sparse.csgraph import dijkstra

from .core import (
    TIE_TOL,
    Ball,
    Correspondence,
    FiniteMMS,
    MMSError,
    PointedMMS,
    ball_measure,
    distortion,
    glue,
    rescale,
)
from .lipdual import F_X_ITERATIONS, FxEvaluator
from .models import make_R_grid, make_S, make_T

COARSE_ITERATIONS = 12
LOWER_GRID = tuple([0.5] + [0.5 * 0.95**k for k in range(1, 180)])


class ResolutionFloor(MMSError):
    pass


class HypothesisUnmet(MMSError):
    pass


@dataclass
class DStarEstimate:
    lower: float
    upper: float
    witness_corr: Correspondence | None = None
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.lower <= self.upper + 1e-12 and self.upper <= 0.5):
            raise AssertionError(f"inconsistent estimate [{self.lower}, {self.upper}]")

    def to_json(self, with_corr: bool = False) -> dict:
        out = {
            "lower": {"value": self.lower, "provenance": "bound-lower", "tolerance": 0.0},
            "upper": {"value": self.upper, "provenance": "bound-upper", "tolerance": 0.0},
            "notes": self.notes,
        }
        if with_corr and self.witness_corr is not None:
            out["witness_corr"] = self.witness_corr.to_json()
        return out


# upper bounds


def glued_evaluator(X: PointedMMS, Y: PointedMMS, corr: Correspondence) -> tuple[FxEvaluator, Correspondence]:
    """Glue with slack at least half the distortion (no metric closure needed)."""
    slack = max(corr.slack, distortion(X.space, Y.space, corr.pairs) / 2.0)
    corr = Correspondence(corr.pairs, slack)
    Z, mx, my = glue(X, Y, corr)
    signed = np.zeros(Z.n)
    signed[mx] += X.weight
    signed[my] -= Y.weight
    return FxEvaluator(Z.space, Z.base, signed), corr


def correspondence_upper(X: PointedMMS, Y: PointedMMS, corr: Correspondence, iterations: int = F_X_ITERATIONS) -> float:
    """Certified upper bound (top of the final bisection bracket) from one gluing."""
    ev, _ = glued_evaluator(X, Y, corr)
    _, hi, _ = ev.bracket(iterations)
    return hi


def greedy_matching(X: PointedMMS, Y: PointedMMS, tau: float) -> list[tuple[int, int]]:
    """Match points in order of distance to the base, keeping distortion <= tau."""
    dx, dy = X.base_row(), Y.base_row()
    DX, DY = X.space.dist, Y.space.dist
    order_y = np.argsort(dy, kind="stable")
    sy = dy[order_y]
    free = np.ones(Y.n, dtype=bool)
    free[Y.base] = False
    P, Q = [X.base], [Y.base]
    for p in np.argsort(dx, kind="stable"):
        if p == X.base:
            continue
        lo = np.searchsorted(sy, dx[p] - tau - TIE_TOL, "left")
        hi = np.searchsorted(sy, dx[p] + tau + TIE_TOL, "right")
        cand = order_y[lo:hi]
        cand = cand[free[cand]]
        if len(cand) == 0:
            continue
        err = np.abs(DX[p, P][None, :] - DY[np.ix_(cand, Q)]).max(axis=1)
        good = err <= tau + TIE_TOL
        if not good.any():
            continue
        q = int(cand[good][np.argmin(err[good])])
        P.append(int(p))
        Q.append(q)
        free[q] = False
    return list(zip(P, Q))


def _resolution(P: PointedMMS) -> float:
    d = P.space.dist
    pos = d[d > TIE_TOL]
    return float(pos.min()) if len(pos) else 1.0


def candidate_correspondences(X: PointedMMS, Y: PointedMMS, taus=None) -> list[Correspondence]:
    out = [Correspondence.make([(X.base, Y.base)])]
    if taus is None:
        h = max(_resolution(X), _resolution(Y))
        taus = (0.0, 0.5 * h, h)
    seen = set()
    for tau in taus:
        pairs = greedy_matching(X, Y, tau)
        key = tuple(pairs)
        if len(pairs) > 1 and key not in seen:
            seen.add(key)
            out.append(Correspondence.make(pairs))
    return out


def dstar_upper(
    X: PointedMMS,
    Y: PointedMMS,
    search_budget: int = 4,
    seed: int = 0,
    iterations: int = F_X_ITERATIONS,
    coarse_iterations: int = COARSE_ITERATIONS,
    taus=None,
    with_lower: bool = True,
) -> DStarEstimate:
    """Best gluing over profile-matched candidates and seeded random trims."""
    rng = np.random.default_rng(seed)
    scored = []
    for corr in candidate_correspondences(X, Y, taus):
        scored.append((correspondence_upper(X, Y, corr, coarse_iterations), len(scored), corr))
    best_val, _, best = min(scored, key=lambda t: (t[0], t[1]))
    for _ in range(search_budget):
        pairs = list(best.pairs)
        if len(pairs) <= 2:
            break
        rest = pairs[1:]
        if rng.random() < 0.5:
            # trim the matching beyond a random radius
            dx = X.base_row()
            cut = rng.uniform(0.25, 1.0) * max(dx[p] for p, _ in rest)
            rest = [pq for pq in rest if dx[pq[0]] <= cut]
        else:
            keep = rng.random(len(rest)) > 0.1
            rest = [pq for pq, k in zip(rest, keep) if k]
        trial = Correspondence.make([pairs[0]] + rest)
        val = correspondence_upper(X, Y, trial, coarse_iterations)
        if val < best_val:
            best_val, best = val, trial
    upper = correspondence_upper(X, Y, best, iterations)
    _, used = glued_evaluator(X, Y, best)
    lower = dstar_lower_tent(X, Y) if with_lower else 0.0
    return DStarEstimate(min(lower, upper), upper, used, {"candidates": len(scored), "search_budget": search_budget})


# lower bounds


def _line_lp(s: np.ndarray, m: np.ndarray, L: float, r: float) -> float:
    """F^{L,r} for a signed measure on points s >= 0 of the half-line, base at 0."""
    cap = np.minimum(1.0, L * np.maximum(0.0, r - s))
    act = cap > 0
    s, m, cap = s[act], m[act], cap[act]
    if len(s) == 0 or not np.any(np.abs(m) > 0):
        return 0.0
    k = len(s)
    if k == 1:
        return float(cap[0] * abs(m[0]))
    gaps = L * np.diff(s)
    rows = np.arange(k - 1)
    A = sparse.csr_matrix(
        (
            np.concatenate([np.ones(k - 1), -np.ones(k - 1), -np.ones(k - 1), np.ones(k - 1)]),
            (np.concatenate([rows, rows, k - 1 + rows, k - 1 + rows]), np.concatenate([rows + 1, rows, rows + 1, rows])),
        ),
        shape=(2 * (k - 1), k),
    )
    res = linprog(-m, A_ub=A, b_ub=np.concatenate([gaps, gaps]), bounds=np.column_stack([-cap, cap]), method="highs")
    return float(-res.fun)


def _radial_profile(X: PointedMMS, Y: PointedMMS) -> tuple[np.ndarray, np.ndarray]:
    s = np.concatenate([X.base_row(), Y.base_row()])
    m = np.concatenate([X.weight, -Y.weight])
    key = np.round(s, 12)
    uniq, inv = np.unique(key, return_inverse=True)
    agg = np.zeros(len(uniq))
    np.add.at(agg, inv, m)
    return uniq, agg


def _chains(P: PointedMMS, max_chains: int = 4) -> list[np.ndarray]:
    """Vertex-disjoint short-step paths from the base to far points."""
    D = P.space.dist
    n = P.n
    if n < 2:
        return []
    masked = np.where(D > TIE_TOL, D, np.inf)
    tau = 1.01 * float(masked.min(axis=1).max())
    if not np.isfinite(tau):
        return []
    adj = np.where((D <= tau) & (D > TIE_TOL), D, 0.0)
    d0 = P.base_row()
    used = np.zeros(n, dtype=bool)
    chains = []
    for _ in range(max_chains):
        a = adj.copy()
        a[used, :] = 0.0
        a[:, used] = 0.0
        dist, pred = dijkstra(sparse.csr_matrix(a), indices=P.base, return_predecessors=True)
        reach = np.isfinite(dist) & ~used
        reach[P.base] = False
        if not reach.any():
            break
        cand = np.flatnonzero(reach)
        far = int(cand[np.argmax(d0[cand])])
        path = [far]
        while path[-1] != P.base:
            path.append(int(pred[path[-1]]))
        path = np.array(path[::-1])
        chains.append(path)
        used[path[1:]] = True
    return chains


def _chain_bound(P: PointedMMS, chain: np.ndarray, A: float, B: float, RQ: float) -> float:
    """Least mass a chain must put where dist(., Q) lies in [A, B].

    dist(., Q) is 0 at the base, exceeds B once d(base, .) > RQ + B, and
    changes by at most the step length along the chain; the last crossing
    below A before the first point above B brackets a window whose interior
    sits in [A, B] and whose path length exceeds B - A.
    """
    d0 = P.base_row()[chain]
    beyond = np.flatnonzero(d0 - RQ > B + 1e-12)
    if len(beyond) == 0:
        return 0.0
    jstar = int(beyond[0])
    D = P.space.dist
    steps = D[chain[:-1], chain[1:]]
    cum = np.concatenate([[0.0], np.cumsum(steps)])
    W = np.cumsum(P.weight[chain])
    best = np.inf
    need = B - A - 1e-12
    for i in range(jstar):
        j = int(np.searchsorted(cum, cum[i] + need, "right"))
        if j > jstar:
            break
        best = min(best, W[j - 1] - W[i])
    return float(max(best, 0.0)) if np.isfinite(best) else 0.0


def _tent_phi(s: np.ndarray, A: float, B: float, L: float) -> np.ndarray:
    return np.clip(np.minimum(1.0 - L * (A - s), 1.0 - L * (s - B)), 0.0, 1.0)


def _gap_tent_bound(Qside: PointedMMS, other: PointedMMS, chains, L: float, rho: float, max_q: int = 32) -> float:
    """Best tent of dist(., Q) with Q a ball of Qside around the base."""
    if not chains:
        return 0.0
    D = Qside.space.dist
    d0 = Qside.base_row()
    radii = np.unique(np.round(d0[d0 <= rho - 2.0 / L], 12))
    if len(radii) > max_q:
        radii = radii[np.unique(np.linspace(0, len(radii) - 1, max_q).round().astype(int))]
    best = 0.0
    w = Qside.weight
    for R in radii:
        Q = np.flatnonzero(d0 <= R + TIE_TOL)
        RQ = float(d0[Q].max())
        sQ = D[Q].min(axis=0)
        v = np.unique(np.round(sQ, 12))
        ends = np.concatenate([v[1:], [np.inf]])
        for lo, hi in zip(v, ends):
            if hi - lo < 2.0 / L:
                continue
            A = lo + 1.0 / L
            B = min(hi - 1.0 / L, rho - RQ - 1.0 / L - 1e-12)
            if B < A:
                continue
            gain = sum(_chain_bound(other, c, A, B, RQ) for c in chains)
            if gain <= best:
                continue
            penalty = float(w @ _tent_phi(sQ, A, B, L))
            best = max(best, gain - penalty)
    return best


class TentLowerBound:
    """Embedding-invariant lower bounds for F^{L,rho} between X and Y."""

    def __init__(self, X: PointedMMS, Y: PointedMMS):
        self.X, self.Y = X, Y
        self.s, self.m = _radial_profile(X, Y)
        self.chains_X = _chains(X)
        self.chains_Y = _chains(Y)

    def bound(self, L: float, rho: float) -> tuple[float, str]:
        vals = {
            "radial": _line_lp(self.s, self.m, L, rho),
            "tent_QX": _gap_tent_bound(self.X, self.Y, self.chains_Y, L, rho),
            "tent_QY": _gap_tent_bound(self.Y, self.X, self.chains_X, L, rho),
        }
        which = max(vals, key=vals.get)
        return vals[which], which

    def certified(self, eps: float) -> bool:
        return self.bound(1.0 / eps, 1.0 / eps)[0] >= eps


def dstar_lower_tent(X: PointedMMS, Y: PointedMMS, grid=LOWER_GRID, detail: bool = False):
    """Largest grid value eps with a certificate F^{1/eps,1/eps} >= eps.

    Such a certificate forces F >= eps' for every eps' < eps as well (F is
    nondecreasing in L and r), so F_z >= eps in every ambient space.
    """
    tb = TentLowerBound(X, Y)
    grid = sorted(grid, reverse=True)
    found, which = 0.0, None
    if tb.certified(grid[0]):
        found = grid[0]
    else:
        lo, hi = 0, len(grid)  # grid[lo] fails; search for the first success
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if tb.certified(grid[mid]):
                hi = mid
            else:
                lo = mid
        if hi < len(grid):
            found = grid[hi]
    if found:
        which = tb.bound(1.0 / found, 1.0 / found)[1]
    if detail:
        return found, {"family": which}
    return found


# coarse graining and models


def coarse_grain(P: PointedMMS, res: float, idx=None) -> tuple[PointedMMS, np.ndarray]:
    """Push the measure onto a greedy net of the points ``idx`` (default all).

    Centers are chosen in order of distance to the base with covering
    radius equal to the largest base distance below res/2; each point's mass
    goes to its nearest center, split equally on ties.  Returns the net and
    the original indices of the centers.
    """
    idx = np.arange(P.n) if idx is None else np.asarray(idx, dtype=int)
    d0 = P.base_row()[idx]
    below = d0[d0 < res / 2.0 - TIE_TOL]
    rad = float(below.max()) if len(below) else 0.0
    order = np.argsort(d0, kind="stable")
    base_pos = int(np.flatnonzero(idx == P.base)[0])
    order = np.concatenate([[base_pos], order[order != base_pos]])
    mind = np.full(len(idx), np.inf)
    centers, rows = [], []
    for k in order:
        if mind[k] > rad + TIE_TOL:
            row = P.space.row(idx[k])[idx]
            centers.append(k)
            rows.append(row)
            np.minimum(mind, row, out=mind)
    R = np.stack(rows)  # centers x points
    near = R <= mind[None, :] + 1e-12
    share = near / near.sum(axis=0, keepdims=True)
    w = share @ P.weight[idx]
    cidx = np.asarray(centers)
    D = R[:, cidx]
    D = (D + D.T) / 2.0
    labels = None
    if P.space.labels is not None:
        labels = [P.space.labels[idx[c]] for c in cidx]
    return PointedMMS(FiniteMMS(w, D, labels=labels), 0), idx[cidx]


def tangent_window(P: PointedMMS, r: float, radius: float, res: float) -> PointedMMS:
    """T_r of P, cut to the closed ball of ``radius`` and coarse grained at ``res``."""
    T = rescale(P, r)
    keep = np.flatnonzero(T.base_row() <= radius + TIE_TOL)
    return coarse_grain(T, res, keep)[0]


def _snap_resolution(P: PointedMMS, target: float, radius: float) -> float:
    """Smallest 2^(j+1) * (min positive distance near the base) that is >= target."""
    d0 = P.base_row()
    near = np.flatnonzero(d0 <= radius + TIE_TOL)[:64]
    h = min(float(P.space.row(i)[P.space.row(i) > TIE_TOL].min()) for i in near)
    j = max(0, math.ceil(math.log2(target / (2.0 * h)) - 1e-9))
    return 2.0 ** (j + 1) * h


_MODEL_CACHE: dict = {}


def model_window(kind: str, rho: float, res: float, radius: float) -> PointedMMS:
    key = (kind, round(rho, 12), round(res, 15), radius)
    if key in _MODEL_CACHE:
        return _MODEL_CACHE[key]
    fine = res / 4.0
    if kind == "R":
        P = make_R_grid(fine, radius + 1.0)
        W = tangent_window(P, 1.0, radius, res)
    elif kind == "S":
        m = math.floor(math.log2(rho * fine) + 1e-9)
        n = max(m, math.ceil(math.log2(radius * rho + 1.0)) + 1)
        W = tangent_window(make_S((m, n)), rho, radius, res)
    elif kind == "T":
        cp = 2 * math.ceil(4.0 / (rho * fine))
        levels = max(1, math.ceil(math.log2(radius * rho + 1.0)) + 1)
        W = tangent_window(make_T((cp, 0, levels)), rho, radius, res)
    else:
        raise MMSError(f"unknown model {kind!r}")
    _MODEL_CACHE[key] = W
    return W


def _fingerprint(P: PointedMMS) -> str:
    h = hashlib.sha1()
    h.update(np.round(P.weight, 13).tobytes())
    h.update(np.round(P.space.dist, 11).tobytes())
    h.update(str(P.base).encode())
    return h.hexdigest()


_COMPARE_CACHE: dict = {}
_LOWER_CACHE: dict = {}


def _compare(X: PointedMMS, M: PointedMMS, iterations: int) -> DStarEstimate:
    key = (_fingerprint(X), _fingerprint(M), iterations)
    if key not in _COMPARE_CACHE:
        _COMPARE_CACHE[key] = dstar_upper(X, M, search_budget=0, iterations=iterations, with_lower=False)
    return _COMPARE_CACHE[key]


def _lower(X: PointedMMS, M: PointedMMS) -> float:
    key = (_fingerprint(X), _fingerprint(M))
    if key not in _LOWER_CACHE:
        _LOWER_CACHE[key] = dstar_lower_tent(X, M)
    return _LOWER_CACHE[key]


MODEL_BRACKETS = {"R": None, "S": (1.0, 2.0), "T": (0.5, 8.0)}
LOWER_SCALES = 5
SCALE_TOL = 0.02


def model_distance(
    X: PointedMMS,
    model: str,
    resolution: float,
    radius: float = 8.0,
    bracket=None,
    steps: int = 20,
    iterations: int = F_X_ITERATIONS,
    lower_scales: int = LOWER_SCALES,
) -> tuple[DStarEstimate, float | None]:
    """d* bounds from X to the model family, optimizing the model scale.

    The scale is chosen by golden section on log(scale) over coarse upper
    bounds, bracket endpoints included, stopping once the bracket is
    narrower than SCALE_TOL or when the first four values are all saturated
    at 1/2.  The family lower bound is the smallest certified lower bound over
    ``lower_scales`` log-spaced scales plus the chosen one.
    """
    bracket = MODEL_BRACKETS[model] if bracket is None else bracket
    if bracket is None:
        M = model_window(model, 1.0, resolution, radius)
        up = _compare(X, M, iterations)
        return DStarEstimate(min(_lower(X, M), up.upper), up.upper, up.witness_corr, {"scale": 1.0}), None
    evals: dict = {}

    def f(logrho: float) -> float:
        key = round(math.exp(logrho), 12)
        if key not in evals:
            evals[key] = _compare(X, model_window(model, key, resolution, radius), COARSE_ITERATIONS).upper
        return evals[key]

    a, b = math.log(bracket[0]), math.log(bracket[1])
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fa, fb, fc, fd = f(a), f(b), f(c), f(d)
    if min(fa, fb, fc, fd) < 0.5:
        for _ in range(max(0, steps - 4)):
            if b - a < SCALE_TOL:
                break
            if fc <= fd:
                b, d, fd = d, c, fc
                c = b - g * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, d, fd
                d = a + g * (b - a)
                fd = f(d)
    best_rho = min(evals, key=lambda k: (evals[k], k))
    M = model_window(model, best_rho, resolution, radius)
    final = _compare(X, M, iterations)
    probe = {round(float(v), 12) for v in np.geomspace(bracket[0], bracket[1], lower_scales)} | {best_rho}
    lower = min(_lower(X, model_window(model, rho, resolution, radius)) for rho in sorted(probe))
    est = DStarEstimate(
        min(lower, final.upper),
        final.upper,
        final.witness_corr,
        {"scale": best_rho, "scales_evaluated": len(evals), "lower_scales": len(probe)},
    )
    return est, best_rho


def verdict(estimates: dict) -> str:
    """Argmin of the upper bounds when it beats every other lower bound strictly."""
    win = min(estimates, key=lambda k: (estimates[k].upper, k))
    others = [e.lower for k, e in estimates.items() if k != win]
    if others and estimates[win].upper < min(others):
        return win
    return "ambiguous"


@dataclass
class ScaleEntry:
    r: float
    resolution: float
    points: int
    estimates: dict
    verdict: str


@dataclass
class TangentScanReport:
    center: int
    scales: list
    entries: list
    stopped: str = ""
    config: dict = field(default_factory=dict)

    def verdicts(self) -> list[str]:
        return [e.verdict for e in self.entries]

    def to_json(self) -> dict:
        return {
            "center": self.center,
            "scales": self.scales,
            "stopped": self.stopped,
            "config": self.config,
            "per_scale": [
                {
                    "r": e.r,
                    "resolution": e.resolution,
                    "points": e.points,
                    "verdict": e.verdict,
                    **{f"dist_to_{k}": v.to_json() for k, v in e.estimates.items()},
                }
                for e in self.entries
            ],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "model", "lower", "upper", "model_scale", "verdict"])
        for e in self.entries:
            for k, v in e.estimates.items():
                w.writerow([repr(e.r), k, repr(v.lower), repr(v.upper), v.notes.get("scale", ""), e.verdict])
        return buf.getvalue()


MIN_UNIT_BALL_POINTS = 8


def tangent_scan(
    X: PointedMMS,
    r0: float,
    lam: float = 2.0,
    k_max: int = 8,
    radius: float = 8.0,
    target_resolution: float = 1.0 / 16.0,
    steps: int = 20,
) -> TangentScanReport:
    """Compare T_r X with R, S and T at r = r0 / lam^k, k = 0..k_max.

    The scan stops at the resolution floor: fewer than MIN_UNIT_BALL_POINTS
    points in the unit ball of T_r X, or a snapped resolution above twice the
    target.  If even the first scale is below the floor ResolutionFloor is
    raised.
    """
    if not 1.0 < lam <= 4.0:
        raise MMSError("lambda must lie in (1, 4]")
    if r0 <= 0:
        raise MMSError("r0 must be positive")
    report = TangentScanReport(X.base, [], [], config={"r0": r0, "lambda": lam, "k_max": k_max, "radius": radius, "target_resolution": target_resolution, "steps": steps})
    for k in range(k_max + 1):
        r = r0 / lam**k
        T = rescale(X, r)
        unit = int(np.count_nonzero(T.base_row() < 1.0 - TIE_TOL))
        if unit < MIN_UNIT_BALL_POINTS:
            report.stopped = f"resolution floor at r={r!r}: {unit} points in the unit ball"
            break
        res = _snap_resolution(T, target_resolution, radius)
        if res > 2.0 * target_resolution + TIE_TOL:
            report.stopped = f"resolution floor at r={r!r}: data resolve only {res!r}"
            break
        keep = np.flatnonzero(T.base_row() <= radius + TIE_TOL)
        W = coarse_grain(T, res, keep)[0]
        ests = {m: model_distance(W, m, res, radius, steps=steps)[0] for m in ("R", "S", "T")}
        report.scales.append(r)
        report.entries.append(ScaleEntry(r, res, W.n, ests, verdict(ests)))
    if not report.entries:
        raise ResolutionFloor(report.stopped or "no scale resolved")
    return report


# propagation and continuity checks


def flat_propagation_check(X: PointedMMS, r: float, lam: float, eps: float, radius: float = 8.0, target_resolution: float = 1.0 / 16.0) -> dict:
    if not 0 < eps < 1.0 / 24.0:
        raise HypothesisUnmet("need 0 < eps < 1/24")
    if lam < 1:
        raise HypothesisUnmet("need lambda >= 1")

    def at(scale):
        T = rescale(X, scale)
        res = _snap_resolution(T, target_resolution, radius)
        keep = np.flatnonzero(T.base_row() <= radius + TIE_TOL)
        return coarse_grain(T, res, keep)[0], res

    W1, res1 = at(r)
    d_r = model_distance(W1, "R", res1, radius)[0]
    if not d_r.upper < eps:
        raise HypothesisUnmet(f"d*(T_r, R) upper {d_r.upper} is not below eps={eps}")
    W2, res2 = at(r / lam)
    near = {}
    for m in ("R", "S", "T"):
        near[m] = model_distance(W2, m, res2, radius)[0]
    if not any(e.upper < eps / lam for e in near.values()):
        raise HypothesisUnmet(f"no model within eps/lambda={eps / lam} of T_(r/lambda)")
    bound = 25.0 * eps / lam
    return {
        "r": r,
        "lambda": lam,
        "eps": eps,
        "d_T_r_R_upper": d_r.upper,
        "d_T_r_over_lambda_models_upper": {k: v.upper for k, v in near.items()},
        "d_T_r_over_lambda_R_upper": near["R"].upper,
        "bound": bound,
        "passed": near["R"].upper < bound,
    }


def scale_continuity_check(X: PointedMMS, lam_list, max_points: int = 300, iterations: int = F_X_ITERATIONS) -> dict:
    """Glue consecutive scaled copies along the identity and compare with the linear bound.

    The gluing uses slack max(|lam - lam'|, distortion / 2): with slack
    |lam - lam'| alone the cross distances are not a metric once the window
    is wider than 2.  If F_x of the gluing is eps then F^{1/e,1/e} >= e for
    e < eps, while the Lipschitz bound gives F^{L,r} <= L * slack * mu(B(x, r));
    the check reports both sides at e = bracket bottom.
    """
    lam_list = [float(l) for l in lam_list]
    if any(l <= 0 for l in lam_list):
        raise MMSError("scales must be positive")
    d0 = X.base_row()
    order = np.argsort(d0, kind="stable")[:max_points]
    idx = np.sort(np.union1d(order, [X.base]))
    from .core import restrict_pointed

    W, _ = restrict_pointed(X, idx)
    rows = []
    for a, b in zip(lam_list, lam_list[1:]):
        A = PointedMMS(W.space.scaled(a), W.base)
        Bp = PointedMMS(W.space.scaled(b), W.base)
        corr = Correspondence.make([(i, i) for i in range(W.n)], abs(a - b))
        ev, used = glued_evaluator(A, Bp, corr)
        lo, hi, moved = ev.bracket(iterations)
        if not moved or lo <= 0:
            K, bound, ok = 0.0, 0.0, True
        else:
            Lm = 1.0 / lo
            K = 2.0 * Lm * ball_measure(A.space, Ball(A.base, Lm, "open"))
            bound = K * used.slack
            ok = lo <= bound + 1e-9
        rows.append({"lambda": a, "lambda_next": b, "upper": hi, "slack": used.slack, "K": K, "bound": bound, "passed": ok})
    return {"pairs": rows, "passed": all(r["passed"] for r in rows)}
