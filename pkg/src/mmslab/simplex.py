"""Dense tableau simplex with Bland's rule for max c.x, A x <= b, x >= 0, b >= 0."""

from __future__ import annotations

import numpy as np


class Unbounded(ArithmeticError):
    pass


def simplex_max(c, A, b, tol: float = 1e-11, max_iter: int = 100000) -> tuple[float, np.ndarray]:
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if np.any(b < -tol):
        raise ValueError("origin must be feasible (b >= 0)")
    # columns: x (n), slacks (m), rhs
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = np.maximum(b, 0.0)
    T[m, :n] = -c
    basis = list(range(n, n + m))
    for _ in range(max_iter):
        reduced = T[m, :-1]
        entering = np.flatnonzero(reduced < -tol)
        if len(entering) == 0:
            break
        j = int(entering[0])  # Bland: lowest index
        col = T[:m, j]
        pos = np.flatnonzero(col > tol)
        if len(pos) == 0:
            raise Unbounded("objective is unbounded")
        ratios = T[pos, -1] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + tol * max(1.0, abs(best))]
        i = int(min(ties, key=lambda r: basis[r]))
        T[i] /= T[i, j]
        others = np.arange(m + 1) != i
        T[others] -= np.outer(T[others, j], T[i])
        basis[i] = j
    else:
        raise RuntimeError("simplex iteration limit reached")
    x = np.zeros(n + m)
    x[basis] = T[:m, -1]
    return float(T[m, -1]), x[:n]
