"""Bounded-Lipschitz functionals F^{L,r} and F_x on finite spaces.

F^{L,r} is the LP

    maximize    sum_i g_i m_i
    subject to  |g_i - g_j| <= L d(i, j)
                |g_i| <= min(1, L (r - d(z, i))^+)

where the second bound is what L-Lipschitz continuity forces against an
exterior at distance r from the base z.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .core import FiniteMMS, MMSError, SizeGuard
from .simplex import simplex_max

MERGE_TOL = 1e-12
BETWEEN_TOL = 1e-12
SIMPLEX_MAX_VARS = 10
F_X_ITERATIONS = 40


@dataclass(frozen=True, eq=False)
class LipschitzDualProblem:
    space: FiniteMMS
    base: int
    L: float
    r: float
    signed_mass: np.ndarray

    def __post_init__(self):
        if not (self.L > 0 and self.r > 0):
            raise MMSError("L and r must be positive")
        m = np.asarray(self.signed_mass, dtype=float)
        if m.shape != (self.space.n,) or not np.all(np.isfinite(m)):
            raise MMSError("signed_mass must be a finite n-vector")
        object.__setattr__(self, "signed_mass", m)

    def caps(self) -> np.ndarray:
        d0 = self.space.row(self.base)
        return np.minimum(1.0, self.L * np.maximum(0.0, self.r - d0))


@dataclass
class LPResult:
    value: float
    witness: np.ndarray
    status: str = "optimal"

    def to_json(self) -> dict:
        return {"value": self.value, "witness": self.witness.tolist(), "status": self.status}


def nonredundant_pairs(D: np.ndarray, tol: float = BETWEEN_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Pairs (i < j) whose Lipschitz constraint is not implied by a point strictly between them.

    If d(i,k) + d(k,j) = d(i,j) with k distinct from both, the (i,j) constraint
    follows from (i,k) and (k,j); both are strictly shorter, so induction on
    length shows every dropped constraint is implied by kept ones.  The same
    induction shows a witness k can always be taken among the kept partners
    of i, so partners are scanned in order of distance and only kept ones
    are used as witnesses.
    """
    n = len(D)
    if n < 2:
        return np.zeros(0, int), np.zeros(0, int)
    I, J = [], []
    for i in range(n):
        row = D[i]
        dup = np.flatnonzero(row <= tol)
        dup = dup[dup > i]
        I.extend([i] * len(dup))
        J.extend(dup.tolist())
        order = np.flatnonzero(row > tol)
        order = order[np.argsort(row[order], kind="stable")]
        reach = np.full(n, np.inf)
        pos = 0
        while pos < len(order):
            free = reach[order[pos:]] > row[order[pos:]] + tol
            hits = np.flatnonzero(free)
            if len(hits) == 0:
                break
            pos += int(hits[0])
            j = int(order[pos])
            if j > i:
                I.append(i)
                J.append(j)
            via = row[j] + np.where(D[j] > tol, D[j], np.inf)
            np.minimum(reach, via, out=reach)
            pos += 1
    I = np.asarray(I, dtype=int)
    J = np.asarray(J, dtype=int)
    o = np.lexsort((J, I))
    return I[o], J[o]


def _nonredundant_pairs_bruteforce(D: np.ndarray, tol: float = BETWEEN_TOL) -> tuple[np.ndarray, np.ndarray]:
    n = len(D)
    keep = []
    for i in range(n):
        for j in range(i + 1, n):
            ok = True
            if D[i, j] > tol:
                for k in range(n):
                    if D[i, k] > tol and D[k, j] > tol and D[i, k] + D[k, j] <= D[i, j] + tol:
                        ok = False
                        break
            if ok:
                keep.append((i, j))
    arr = np.array(keep, dtype=int).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def _solve_reduced(D: np.ndarray, cap: np.ndarray, mass: np.ndarray, L: float, method: str) -> tuple[float, np.ndarray]:
    n = len(cap)
    ii, jj = nonredundant_pairs(D)
    lip = L * D[ii, jj]
    if method == "auto":
        method = "simplex" if n <= SIMPLEX_MAX_VARS else "highs"
    if method == "simplex":
        # shift x = g + cap so the origin is feasible
        m = len(ii)
        A = np.zeros((2 * m + n, n))
        b = np.empty(2 * m + n)
        rows = np.arange(m)
        A[rows, ii] = 1.0
        A[rows, jj] = -1.0
        b[:m] = lip + cap[ii] - cap[jj]
        A[m + rows, ii] = -1.0
        A[m + rows, jj] = 1.0
        b[m : 2 * m] = lip + cap[jj] - cap[ii]
        A[2 * m + np.arange(n), np.arange(n)] = 1.0
        b[2 * m :] = 2.0 * cap
        _, x = simplex_max(mass, A, np.maximum(b, 0.0))
        g = x - cap
        return float(g @ mass), g
    if method != "highs":
        raise MMSError(f"unknown LP method {method!r}")
    m = len(ii)
    if m:
        data = np.concatenate([np.ones(m), -np.ones(m), -np.ones(m), np.ones(m)])
        rows = np.concatenate([np.arange(m), np.arange(m), m + np.arange(m), m + np.arange(m)])
        cols = np.concatenate([ii, jj, ii, jj])
        A = sparse.csr_matrix((data, (rows, cols)), shape=(2 * m, n))
        b = np.concatenate([lip, lip])
    else:
        A, b = None, None
    res = linprog(-mass, A_ub=A, b_ub=b, bounds=np.column_stack([-cap, cap]), method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    g = np.clip(res.x, -cap, cap)
    return float(g @ mass), g


def f_lr(problem: LipschitzDualProblem, method: str = "auto") -> LPResult:
    """Optimal value and witness of F^{L,r}.

    Points outside the open r-ball are pinned to 0 and dropped; coincident
    points are merged; massless points are eliminated (any feasible g on the
    rest extends to them by McShane extension clipped to the caps, which
    stays L-Lipschitz because the caps are).
    """
    Z, L = problem.space, problem.L
    n = Z.n
    cap = problem.caps()
    mass = problem.signed_mass
    active = np.flatnonzero(cap > 0)
    witness = np.zeros(n)
    if len(active) == 0 or not np.any(np.abs(mass[active]) > 0):
        return LPResult(0.0, witness)

    Dact = Z.sub(active)
    # merge coincident points onto the lowest index of their class
    rep = np.arange(len(active))
    for a in range(len(active)):
        if rep[a] == a:
            same = np.flatnonzero(Dact[a] <= MERGE_TOL)
            rep[same[same > a]] = a
    merged_mass = np.zeros(len(active))
    np.add.at(merged_mass, rep, mass[active])
    reps = np.unique(rep)
    kept = reps[np.abs(merged_mass[reps]) > 0]
    if len(kept) == 0:
        return LPResult(0.0, witness)

    Dk = Dact[np.ix_(kept, kept)]
    _, g = _solve_reduced(Dk, cap[active[kept]], merged_mass[kept], L, method)

    # the caps already encode the constraint against the exterior (pinned
    # at 0), so extending from the kept points and clipping is feasible
    witness[active[kept]] = g
    rest = np.setdiff1d(np.arange(len(active)), kept)
    if len(rest):
        ext = np.min(g[:, None] + L * Dact[np.ix_(kept, rest)], axis=0)
        c = cap[active[rest]]
        witness[active[rest]] = np.clip(ext, -c, c)
    return LPResult(float(witness @ mass), witness)


def witness_violation(problem: LipschitzDualProblem, g: np.ndarray) -> float:
    """Largest constraint violation of a candidate g (0 when feasible)."""
    D = problem.space.dist
    cap = problem.caps()
    lip = np.abs(g[:, None] - g[None, :]) - problem.L * D
    return float(max(0.0, lip.max(), (np.abs(g) - cap).max()))


def f_lr_oracle(problem: LipschitzDualProblem) -> float:
    """Exact optimum by enumerating polytope vertices (n <= 4)."""
    n = problem.space.n
    if n > 4:
        raise SizeGuard("vertex enumeration oracle handles at most 4 points")
    D = problem.space.dist
    cap = problem.caps()
    rows, rhs = [], []
    for i, j in itertools.combinations(range(n), 2):
        for s in (1.0, -1.0):
            a = np.zeros(n)
            a[i], a[j] = s, -s
            rows.append(a)
            rhs.append(problem.L * D[i, j])
    for i in range(n):
        for s in (1.0, -1.0):
            a = np.zeros(n)
            a[i] = s
            rows.append(a)
            rhs.append(cap[i])
    A = np.array(rows)
    b = np.array(rhs)
    best = -np.inf
    for combo in itertools.combinations(range(len(A)), n):
        M = A[list(combo)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        g = np.linalg.solve(M, b[list(combo)])
        if np.all(A @ g <= b + 1e-9):
            best = max(best, float(g @ problem.signed_mass))
    return best


class FxEvaluator:
    """F^{L,r} for one signed measure on one space, at many (L, r).

    The betweenness pruning depends only on the metric, so it is computed
    once over all points.  Pinning exterior points at 0 is equivalent to the
    caps, which is why the cached pairs stay valid after dropping them.
    """

    def __init__(self, Z: FiniteMMS, base: int, signed_mass):
        self.D = Z.dist
        self.d0 = self.D[base]
        self.mass = np.asarray(signed_mass, dtype=float)
        self.ii, self.jj = nonredundant_pairs(self.D)
        self.calls = 0

    def value(self, L: float, r: float) -> float:
        self.calls += 1
        cap = np.minimum(1.0, L * np.maximum(0.0, r - self.d0))
        active = cap > 0
        if not np.any(np.abs(self.mass[active]) > 0):
            return 0.0
        idx = np.flatnonzero(active)
        pos = np.full(len(cap), -1)
        pos[idx] = np.arange(len(idx))
        keep = active[self.ii] & active[self.jj]
        ii, jj = pos[self.ii[keep]], pos[self.jj[keep]]
        m = len(ii)
        mass = self.mass[idx]
        c = cap[idx]
        if m:
            lip = L * self.D[self.ii[keep], self.jj[keep]]
            data = np.concatenate([np.ones(m), -np.ones(m), -np.ones(m), np.ones(m)])
            rows = np.concatenate([np.arange(m), np.arange(m), m + np.arange(m), m + np.arange(m)])
            cols = np.concatenate([ii, jj, ii, jj])
            A = sparse.csr_matrix((data, (rows, cols)), shape=(2 * m, len(idx)))
            b = np.concatenate([lip, lip])
        else:
            A, b = None, None
        res = linprog(-mass, A_ub=A, b_ub=b, bounds=np.column_stack([-c, c]), method="highs")
        if res.status != 0:
            raise RuntimeError(f"LP solver failed: {res.message}")
        return float(np.clip(res.x, -c, c) @ mass)

    def holds(self, eps: float) -> bool:
        return self.value(1.0 / eps, 1.0 / eps) < eps

    def f_x(self, iterations: int = F_X_ITERATIONS) -> float:
        return bisect_threshold(self.holds, iterations)

    def bracket(self, iterations: int = F_X_ITERATIONS) -> tuple[float, float, bool]:
        return bisect_bracket(self.holds, iterations)


def bisect_bracket(holds, iterations: int = F_X_ITERATIONS) -> tuple[float, float, bool]:
    """Final bracket (lo, hi) of a monotone predicate on (0, 1/2), and whether it ever held."""
    lo, hi = 0.0, 0.5
    moved = False
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if holds(mid):
            hi, moved = mid, True
        else:
            lo = mid
    return lo, hi, moved


def bisect_threshold(holds, iterations: int = F_X_ITERATIONS) -> float:
    """Threshold of a monotone predicate on (0, 1/2); 1/2 when it never holds."""
    lo, hi, moved = bisect_bracket(holds, iterations)
    if not moved:
        return 0.5
    return 0.5 * (lo + hi)


def f_x(Z: FiniteMMS, base: int, mu, nu, iterations: int = F_X_ITERATIONS, method: str = "auto") -> float:
    """Infimum of eps in (0, 1/2) with F^{1/eps,1/eps}(mu, nu) < eps, else 1/2.

    The predicate is monotone in eps, so bisection applies; the midpoint of
    the final bracket is returned.
    """
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if np.any(mu < 0) or np.any(nu < 0):
        raise MMSError("measures must be nonnegative")
    signed = mu - nu

    if method == "cached":
        return FxEvaluator(Z, base, signed).f_x(iterations)

    def holds(eps: float) -> bool:
        prob = LipschitzDualProblem(Z, base, 1.0 / eps, 1.0 / eps, signed)
        return f_lr(prob, method).value < eps

    return bisect_threshold(holds, iterations)
