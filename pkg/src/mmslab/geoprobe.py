"""Geometric measurements: uniformity defect, covering and doubling numbers,
Hausdorff estimates, separation profiles, l_p embedding stress and the
Heisenberg dilation identity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, sparse
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree

from .core import TIE_TOL, Ball, FiniteMMS, MMSError, PointedMMS, ball_mask
from .models import HeisenbergPoint, heisenberg_dilate, heisenberg_inv, heisenberg_mul, koranyi_norm


class WrongSpaceKind(MMSError):
    pass


def _space(X):
    return X.space if isinstance(X, PointedMMS) else X


# uniformity


def uniformity_defect(X, radii, centers=None, normalize: bool = False) -> tuple[float, dict | None]:
    """max over centers x and radii r of |mu(C(x,r)) - r| with closed balls.

    With ``normalize`` the measure is first divided by the fitted density
    c = median mu(C(x,r)) / r and the error is reported relative to r, which
    makes the number independent of the scale of X.
    """
    X = _space(X)
    radii = [float(r) for r in radii]
    if any(r <= 0 for r in radii):
        raise MMSError("radii must be positive")
    centers = range(X.n) if centers is None else [int(c) for c in centers]
    table = []
    for c in centers:
        row = X.row(c)
        order = np.argsort(row, kind="stable")
        cum = np.cumsum(X.weight[order])
        srt = row[order]
        for r in radii:
            k = np.searchsorted(srt, r + TIE_TOL, "right")
            table.append((c, r, float(cum[k - 1]) if k else 0.0))
    if not table:
        return 0.0, None
    m = np.array([t[2] for t in table])
    r = np.array([t[1] for t in table])
    if normalize:
        dens = float(np.median(m / r))
        err = np.abs(m / dens - r) / r
    else:
        dens = 1.0
        err = np.abs(m - r)
    k = int(np.argmax(err))
    return float(err[k]), {"center": table[k][0], "radius": table[k][1], "measure": table[k][2], "density": dens}


# covering


@dataclass
class CoverResult:
    lower: int
    upper: int
    exact: bool
    centers: list = field(default_factory=list)

    @property
    def value(self) -> int:
        return self.upper

    def to_json(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "exact": self.exact, "centers": self.centers}


def _separated_lower(X: FiniteMMS, targets: np.ndarray, rp: float) -> int:
    """Size of a greedy set of targets pairwise farther apart than 2 r'.

    A closed r'-ball contains at most one point of such a set.
    """
    chosen = []
    for t in targets:
        if all(X.row(t)[c] > 2.0 * rp + TIE_TOL for c in chosen):
            chosen.append(int(t))
    return len(chosen)


def cover_points(X, targets, rp: float, exact_limit: int = 25, node_budget: int = 200000, search_large: bool = True) -> CoverResult:
    """Fewest closed r'-balls centred at points of X covering ``targets``.

    Candidates whose coverage is contained in another's are dropped first
    (keeping the lowest index).  If the greedy and separated-set bounds
    agree the answer is exact.  Otherwise branch and bound runs; with more
    than ``exact_limit`` candidates it runs only when ``search_large`` is set,
    and it is always capped by ``node_budget``.  Whenever the search does not
    finish both bounds are reported with exact=False.
    """
    X = _space(X)
    if rp <= 0:
        raise MMSError("r' must be positive")
    targets = np.asarray(sorted(set(int(t) for t in targets)), dtype=int)
    if len(targets) == 0:
        return CoverResult(0, 0, True, [])
    pos = {int(t): k for k, t in enumerate(targets)}
    masks = {}
    for t in targets:
        for c in np.flatnonzero(X.row(t) <= rp + TIE_TOL):
            masks[int(c)] = masks.get(int(c), 0) | (1 << pos[int(t)])
    cands = sorted(masks, key=lambda c: (-bin(masks[c]).count("1"), c))
    kept = []
    for c in cands:
        m = masks[c]
        if not any((m | masks[k]) == masks[k] for k in kept):
            kept.append(c)
    full = (1 << len(targets)) - 1

    # greedy upper bound
    left, greedy = full, []
    while left:
        c = max(kept, key=lambda k: (bin(masks[k] & left).count("1"), -k))
        greedy.append(c)
        left &= ~masks[c]
    lower = _separated_lower(X, targets, rp)
    if lower == len(greedy):
        return CoverResult(lower, lower, True, sorted(greedy))
    if len(kept) > exact_limit and not search_large:
        return CoverResult(lower, len(greedy), False, sorted(greedy))

    best = list(greedy)
    nodes = 0
    by_bit = {}
    for k, c in enumerate(kept):
        for b in range(len(targets)):
            if masks[c] >> b & 1:
                by_bit.setdefault(b, []).append(c)

    def rec(left: int, chosen: list):
        nonlocal best, nodes
        nodes += 1
        if nodes > node_budget:
            raise TimeoutError
        if not left:
            if len(chosen) < len(best):
                best = list(chosen)
            return
        if len(chosen) + 1 >= len(best):
            return
        # branch on the uncovered target with the fewest covering candidates
        bits = [b for b in range(len(targets)) if left >> b & 1]
        b = min(bits, key=lambda b: (len(by_bit[b]), b))
        for c in by_bit[b]:
            chosen.append(c)
            rec(left & ~masks[c], chosen)
            chosen.pop()

    try:
        rec(full, [])
    except TimeoutError:
        return CoverResult(lower, len(best), False, sorted(best))
    return CoverResult(len(best), len(best), True, sorted(best))


def covering_number(X, b: Ball, rp: float, **kw) -> CoverResult:
    X = _space(X)
    return cover_points(X, np.flatnonzero(ball_mask(X, b)), rp, **kw)


def doubling_constant(X, sample_balls) -> dict:
    """Largest half-radius cover number over the sampled balls, with its witness."""
    X = _space(X)
    worst, witness, exact = 0, None, True
    for b in sample_balls:
        res = covering_number(X, b, b.radius / 2.0)
        exact = exact and res.exact
        if res.upper > worst:
            worst, witness = res.upper, {"center": b.center, "radius": b.radius, "cover": res.to_json()}
    return {"value": worst, "exact": exact, "witness": witness}


def hausdorff_upper(X, delta: float, subset=None) -> float:
    """Sum of diameters of a greedy cover by sets of diameter <= delta."""
    X = _space(X)
    if delta <= 0:
        raise MMSError("delta must be positive")
    pts = np.arange(X.n) if subset is None else np.asarray(sorted(set(int(i) for i in subset)), dtype=int)
    left = np.ones(len(pts), dtype=bool)
    total = 0.0
    for k in range(len(pts)):
        if not left[k]:
            continue
        row = X.row(pts[k])[pts]
        grab = np.flatnonzero(left & (row <= delta / 2.0 + TIE_TOL))
        piece = pts[grab]
        if len(piece) > 1:
            diam = max(float(X.row(p)[piece].max()) for p in piece)
            while diam > delta + TIE_TOL:  # trim the farthest point
                far = grab[np.argmax(row[grab])]
                grab = grab[grab != far]
                piece = pts[grab]
                diam = max(float(X.row(p)[piece].max()) for p in piece)
            total += diam
        left[grab] = False
    return total


def _is_S_space(X: FiniteMMS) -> float:
    labels = X.labels
    if labels is None or not all(isinstance(l, (int, np.integer)) for l in labels[: min(8, len(labels))]):
        raise WrongSpaceKind("expected a space built by make_S (integer codes as labels)")
    codes = np.asarray(labels, dtype=np.int64)
    w = X.weight
    if not np.allclose(w, w[0]):
        raise WrongSpaceKind("expected uniform point masses")
    unit = float(w[0])
    for i in {0, len(codes) // 2, len(codes) - 1}:
        if not np.allclose(X.row(i), (codes ^ codes[i]) * unit):
            raise WrongSpaceKind("metric is not the dyadic l1 metric")
    return unit


def lip_projection_lower(X, subset=None) -> float:
    """Lebesgue measure of the image of the dyadic sum map s -> sum 2^i s_i.

    Each point of make_S stands for a dyadic cell of length 2^m, and the
    map is 1-Lipschitz, so the measure of the union of image cells bounds
    the Hausdorff measure from below.
    """
    X = _space(X)
    unit = _is_S_space(X)
    codes = np.asarray(X.labels, dtype=np.int64)
    if subset is not None:
        codes = codes[np.asarray(list(subset), dtype=int)] if len(list(subset)) else codes[:0]
    return float(len(np.unique(codes)) * unit)


# separation profile


@dataclass
class SeparationProfile:
    entries: list
    flagged: bool
    c0: float = 0.25

    def to_json(self) -> dict:
        return {
            "entries": [
                {"scale": s, "clusters": n, "max_diameter": d, "min_separation": g} for s, n, d, g in self.entries
            ],
            "separation_unrectifiable_evidence": self.flagged,
            "c0": self.c0,
        }


def _mst(X: FiniteMMS) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if X.table is not None or X.n <= 4000:
        T = minimum_spanning_tree(sparse.csr_matrix(np.where(X.dist > 0, X.dist, 0.0))).tocoo()
        return T.row, T.col, T.data
    # Prim with rows computed on demand
    n = X.n
    best = X.row(0).astype(float).copy()
    parent = np.zeros(n, dtype=int)
    done = np.zeros(n, dtype=bool)
    done[0] = True
    best[0] = np.inf
    rows, cols, vals = [], [], []
    for _ in range(n - 1):
        k = int(np.argmin(np.where(done, np.inf, best)))
        rows.append(parent[k])
        cols.append(k)
        vals.append(best[k])
        done[k] = True
        r = X.row(k)
        upd = ~done & (r < best)
        best[upd] = r[upd]
        parent[upd] = k
    return np.array(rows), np.array(cols), np.array(vals)


def separation_profile(X, scales, c0: float = 0.25) -> SeparationProfile:
    """Single-linkage clusters (merge below ``scale``) at each scale.

    Coincident points (distance 0) never form their own cluster.
    """
    X = _space(X)
    scales = [float(s) for s in scales]
    if any(a <= b for a, b in zip(scales, scales[1:])):
        raise MMSError("scales must be decreasing")
    r, c, v = _mst(X)
    n = X.n
    entries = []
    for s in scales:
        keep = v < s - TIE_TOL
        g = sparse.csr_matrix((np.ones(int(keep.sum())), (r[keep], c[keep])), shape=(n, n))
        ncomp, lab = connected_components(g, directed=False)
        cut = v[~keep]
        sep = float(cut.min()) if len(cut) else math.inf
        diam = 0.0
        for k in range(ncomp):
            members = np.flatnonzero(lab == k)
            if len(members) > 1:
                diam = max(diam, max(float(X.row(p)[members].max()) for p in members))
        entries.append((s, int(ncomp), diam, sep))
    run, flagged = 0, False
    for s, ncl, d, g in entries:
        ok = ncl > 1 and d > 0 and g / d >= c0
        run = run + 1 if ok else 0
        flagged = flagged or run >= 4
    return SeparationProfile(entries, flagged, c0)


# embedding stress


@dataclass
class StressResult:
    p: float
    dim: int
    best_stress: float
    config: np.ndarray
    restarts: int
    per_restart: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "dim": self.dim,
            "best_stress": {"value": self.best_stress, "provenance": "measured", "tolerance": 0.0},
            "config": self.config.tolist(),
            "restarts": self.restarts,
        }


def _pdist_p(U: np.ndarray, p: float) -> np.ndarray:
    diff = np.abs(U[:, None, :] - U[None, :, :])
    if math.isinf(p):
        return diff.max(axis=-1)
    return (diff**p).sum(axis=-1) ** (1.0 / p)


def stress(U: np.ndarray, D: np.ndarray, p: float) -> float:
    iu = np.triu_indices(len(D), 1)
    E = _pdist_p(U, p)[iu]
    return float(np.max(np.abs(E / D[iu] - 1.0))) if len(iu[0]) else 0.0


def _coordinate_descent(U: np.ndarray, D: np.ndarray, p: float, sweeps: int, step: float) -> np.ndarray:
    U = U.copy()
    for _ in range(sweeps):
        for i in range(U.shape[0]):
            for k in range(U.shape[1]):
                def f(t, i=i, k=k):
                    old = U[i, k]
                    U[i, k] = t
                    v = stress(U, D, p)
                    U[i, k] = old
                    return v

                res = optimize.minimize_scalar(f, bounds=(U[i, k] - step, U[i, k] + step), method="bounded", options={"xatol": 1e-10})
                if res.fun < f(U[i, k]):
                    U[i, k] = res.x
        step *= 0.5
    return U


def _polish_l1(U: np.ndarray, D: np.ndarray, rounds: int = 4) -> np.ndarray:
    """Minimize the max relative error inside the current sign pattern (an LP)."""
    n, dim = U.shape
    iu = list(zip(*np.triu_indices(n, 1)))
    for _ in range(rounds):
        nv = n * dim + 1  # coordinates then t
        A, b = [], []
        for i, j in iu:
            sgn = np.sign(U[i] - U[j])
            sgn[sgn == 0] = 1.0
            row = np.zeros(nv)
            for k in range(dim):
                row[i * dim + k] += sgn[k]
                row[j * dim + k] -= sgn[k]
            # sign consistency: sgn_k (u_ik - u_jk) >= 0
            for k in range(dim):
                r = np.zeros(nv)
                r[i * dim + k] = -sgn[k]
                r[j * dim + k] = sgn[k]
                A.append(r)
                b.append(0.0)
            r1 = row / D[i, j]
            r1[-1] = -1.0
            A.append(r1)
            b.append(1.0)
            r2 = -row / D[i, j]
            r2[-1] = -1.0
            A.append(r2)
            b.append(-1.0)
        c = np.zeros(nv)
        c[-1] = 1.0
        bounds = [(None, None)] * (n * dim) + [(0, None)]
        # pin the first point at the origin (translation invariance)
        for k in range(dim):
            bounds[k] = (0.0, 0.0)
        res = optimize.linprog(c, A_ub=np.array(A), b_ub=np.array(b), bounds=bounds, method="highs")
        if res.status != 0:
            break
        V = res.x[:-1].reshape(n, dim) + U[0]
        if stress(V, D, 1.0) >= stress(U, D, 1.0) - 1e-15:
            if stress(V, D, 1.0) < stress(U, D, 1.0):
                U = V
            break
        U = V
    return U


def _polish_smooth(U: np.ndarray, D: np.ndarray, p: float) -> np.ndarray:
    """Epigraph form min t s.t. |d_p(u_i,u_j)/D_ij - 1| <= t, solved by SLSQP."""
    n, dim = U.shape
    iu = np.triu_indices(n, 1)

    def unpack(z):
        return z[:-1].reshape(n, dim), z[-1]

    def cons(z):
        V, t = unpack(z)
        e = _pdist_p(V, p)[iu] / D[iu] - 1.0
        return np.concatenate([t - e, t + e])

    z0 = np.concatenate([U.ravel(), [stress(U, D, p)]])
    res = optimize.minimize(lambda z: z[-1], z0, constraints=[{"type": "ineq", "fun": cons}], method="SLSQP", options={"maxiter": 500, "ftol": 1e-14})
    V, _ = unpack(res.x)
    return V if stress(V, D, p) < stress(U, D, p) else U


def lp_embed_stress(X, p: float, dim: int, restarts: int = 100, seed: int = 0, sweeps: int = 6) -> StressResult:
    """Multistart search for an embedding into l_p^dim minimizing max relative error.

    Each restart runs coordinate descent from a seeded random start, then a
    polish step: an LP over the current sign pattern for p = 1, SLSQP on the
    epigraph form otherwise.  Restart seeds are spawned from ``seed``.
    """
    X = _space(X)
    if not (p >= 1):
        raise MMSError("p must lie in [1, inf]")
    if not 1 <= dim <= 10:
        raise MMSError("dim must lie in 1..10")
    if X.n > 50:
        raise MMSError("stress search is limited to 50 points")
    D = X.dist
    scale = float(D.max())
    best, best_U, per = math.inf, None, []
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        U = rng.normal(scale=scale / 2.0, size=(X.n, dim))
        U = _coordinate_descent(U, D, p, sweeps, scale / 2.0)
        U = _polish_l1(U, D) if p == 1 else _polish_smooth(U, D, p)
        s = stress(U, D, p)
        per.append(s)
        if s < best:
            best, best_U = s, U
    return StressResult(float(p), dim, float(best), best_U, restarts, per)


# Heisenberg group


def heisenberg_identity_check(samples: int = 1000, seed: int = 0, m_range=(-6, 6)) -> dict:
    """Compare ||delta_l(a)^-1 * delta_m(a)|| with |m - l| ||(x, y, (m+l)/(m-l) t)||."""
    rng = np.random.default_rng(seed)
    worst, witness = 0.0, None
    for _ in range(samples):
        x, y, t = rng.uniform(-1.0, 1.0, 3)
        m, n = rng.choice(np.arange(m_range[0], m_range[1] + 1), 2, replace=False)
        lam, mu = 2.0 ** int(m), 2.0 ** int(n)
        a = HeisenbergPoint(x, y, t)
        lhs = koranyi_norm(heisenberg_mul(heisenberg_inv(heisenberg_dilate(a, lam)), heisenberg_dilate(a, mu)))
        rhs = abs(mu - lam) * koranyi_norm(HeisenbergPoint(x, y, (mu + lam) / (mu - lam) * t))
        err = abs(lhs - rhs) / max(abs(rhs), 1e-300)
        if err > worst:
            worst, witness = err, {"a": [x, y, t], "lambda": lam, "mu": mu, "lhs": lhs, "rhs": rhs}
    return {"samples": samples, "seed": seed, "max_relative_error": worst, "witness": witness}


def heisenberg_growth_constant(samples: int = 2000, m_n_range=(1, 8), seed: int = 0) -> dict:
    """max of ||delta_l(a)^-1 * delta_m(a)|| / (|m - l| ||a||) over ||a|| <= 1, l = 2^i, m = 2^j.

    Sampling domain: a uniform in the box [-1,1]^3 restricted to the unit
    Koranyi ball, i != j drawn from ``m_n_range`` (inclusive).
    """
    rng = np.random.default_rng(seed)
    lo, hi = m_n_range
    if hi <= lo:
        raise MMSError("need at least two exponents")
    best, witness, k = 0.0, None, 0
    while k < samples:
        x, y, t = rng.uniform(-1.0, 1.0, 3)
        a = HeisenbergPoint(x, y, t)
        na = koranyi_norm(a)
        if na > 1.0 or na == 0.0:
            continue
        k += 1
        i, j = rng.choice(np.arange(lo, hi + 1), 2, replace=False)
        lam, mu = 2.0 ** int(i), 2.0 ** int(j)
        v = koranyi_norm(heisenberg_mul(heisenberg_inv(heisenberg_dilate(a, lam)), heisenberg_dilate(a, mu))) / (abs(mu - lam) * na)
        if v > best:
            best, witness = v, {"a": [x, y, t], "lambda": lam, "mu": mu}
    return {"C": best, "samples": samples, "exponents": [lo, hi], "seed": seed, "witness": witness}
