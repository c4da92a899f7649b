"""Global minimum of the max relative distortion of the star S_3 into Euclidean space.

Four points always fit in R^3, so the answer is the same for every
dimension >= 3 and a lower bound for dimensions 1 and 2.  Writing
e_ij = |u_i - u_j|^2, the condition |d_ij / D_ij - 1| <= t is the box
(1 - t)^2 D_ij^2 <= e_ij <= (1 + t)^2 D_ij^2, and the e_ij come from
points iff the Gram matrix G_ij = (e_0i + e_0j - e_ij) / 2 is PSD.  For
fixed t this is a convex feasibility problem; bisection on t gives the
global optimum up to solver tolerance.

Run: python3 scripts/stress_threshold.py   (needs cvxpy)
"""

import itertools

import cvxpy as cp
import numpy as np

from mmslab.models import make_star_Sn


def feasible(D: np.ndarray, t: float) -> bool:
    n = len(D)
    E = cp.Variable((n, n), symmetric=True)
    G = cp.Variable((n - 1, n - 1), PSD=True)
    cons = [cp.diag(E) == 0]
    for i, j in itertools.combinations(range(n), 2):
        cons += [E[i, j] >= (1 - t) ** 2 * D[i, j] ** 2, E[i, j] <= (1 + t) ** 2 * D[i, j] ** 2]
    for a in range(1, n):
        for b in range(1, n):
            cons.append(G[a - 1, b - 1] == (E[0, a] + E[0, b] - E[a, b]) / 2)
    prob = cp.Problem(cp.Minimize(0), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.status in ("optimal", "optimal_inaccurate")


def main():
    D = make_star_Sn(3).space.dist
    lo, hi = 0.0, 0.5
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if feasible(D, mid):
            hi = mid
        else:
            lo = mid
    print(f"global optimum in [{lo:.6f}, {hi:.6f}]")


if __name__ == "__main__":
    main()
