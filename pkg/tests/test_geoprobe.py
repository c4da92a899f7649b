from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmslab.core import Ball, FiniteMMS, MMSError, ball_mask
from mmslab.geoprobe import (
    WrongSpaceKind,
    cover_points,
    covering_number,
    doubling_constant,
    hausdorff_upper,
    heisenberg_growth_constant,
    heisenberg_identity_check,
    lip_projection_lower,
    lp_embed_stress,
    separation_profile,
    stress,
    uniformity_defect,
)
from mmslab.models import line_space, make_R_grid, make_S, make_spider_midpoints, make_star_Sn, make_T


def brute_cover(X, targets, rp):
    """Smallest k such that k closed rp-balls at points of X cover targets."""
    hit = X.dist[:, targets] <= rp + 1e-9
    for k in range(1, len(targets) + 1):
        for combo in combinations(range(X.n), k):
            if hit[list(combo)].any(axis=0).all():
                return k
    return None


def test_uniformity_star_is_far_from_uniform():
    err, wit = uniformity_defect(make_star_Sn(3), [1.0, 2.0, 4.0])
    assert err == 3.0 and wit["radius"] == 4.0


def test_uniformity_exact_on_S():
    err, _ = uniformity_defect(make_S((-6, 3)), [0.5, 1.0, 2.0, 4.0])
    assert err <= 2.0**-6
    with pytest.raises(MMSError):
        uniformity_defect(make_S((-2, 2)), [0.0])


def test_uniformity_normalized_is_scale_free():
    T = make_T((64, 0, 3))
    a, _ = uniformity_defect(T, [0.5, 1.0, 2.0], normalize=True)
    b, _ = uniformity_defect(T.space.scaled(3.0), [1.5, 3.0, 6.0], normalize=True)
    assert a == pytest.approx(b, abs=1e-12)


def test_cover_on_S_matches_brute_force():
    X = make_S((-4, 4)).space
    targets = np.flatnonzero(ball_mask(X, Ball(0, 4.0, "closed")))
    res = covering_number(X, Ball(0, 4.0, "closed"), 2.0)
    assert res.exact and res.upper == res.lower
    assert res.upper == brute_cover(X, targets, 2.0)


def test_self_cover_is_one():
    X = make_T((16, 0, 2)).space
    for c in (0, 5, 20):
        assert covering_number(X, Ball(c, 1.0, "closed"), 1.0).value == 1


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.integers(3, 9), st.floats(0.2, 2.0), st.floats(1.0, 2.0))
def test_cover_monotone_in_radius(seed, n, rp, k):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 4, (n, 2))
    X = FiniteMMS(np.ones(n), np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1)))
    t = np.arange(n)
    small, big = cover_points(X, t, rp), cover_points(X, t, rp * k)
    assert small.exact and big.exact
    assert big.upper <= small.upper
    assert small.upper == brute_cover(X, t, rp)


def test_spider_needs_n_balls():
    for n in (2, 3, 5):
        res = cover_points(make_spider_midpoints(n), range(1, n + 1), 1.0)
        assert res.exact and res.upper == n


def test_doubling_constant_on_R():
    R = make_R_grid(1 / 16, 4)
    out = doubling_constant(R, [Ball(R.base, 1.0, "closed"), Ball(0, 2.0, "closed")])
    assert out["value"] == 2 and out["exact"]


def test_hausdorff_examples():
    R = make_R_grid(1 / 8, 2)
    assert hausdorff_upper(R, 0.5) == pytest.approx(2.75)
    assert hausdorff_upper(R, 0.5) <= 4.0
    assert hausdorff_upper(make_star_Sn(3), 100.0) == 12.0
    assert hausdorff_upper(make_star_Sn(3), 1.0) == 0.0
    with pytest.raises(MMSError):
        hausdorff_upper(R, 0.0)


def test_lip_projection():
    S = make_S((-4, 4))
    assert lip_projection_lower(S) == 32.0
    assert lip_projection_lower(S, range(10)) == 0.625
    with pytest.raises(WrongSpaceKind):
        lip_projection_lower(make_R_grid(1 / 8, 2))


def test_separation_profile_S_vs_R():
    s = separation_profile(make_S((-4, 4)), [4, 2, 1, 0.5, 0.25, 0.125])
    assert [e[1] for e in s.entries] == [8, 16, 32, 64, 128, 256]
    assert s.flagged
    r = separation_profile(make_R_grid(1 / 16, 2), [1, 0.5, 0.25, 0.125])
    assert all(e[1] == 1 for e in r.entries)
    assert not r.flagged
    with pytest.raises(MMSError):
        separation_profile(make_S((-2, 2)), [1, 2])


def test_stress_of_path_in_line():
    res = lp_embed_stress(line_space([0.0, 1.0, 2.0], [1, 1, 1], 0), 2.0, 1, restarts=5)
    assert res.best_stress <= 1e-9


def test_stress_explicit_l1_embedding_of_star():
    X = make_star_Sn(3).space
    # centre at the origin, leaf k on its own axis at distance d(0, k)
    U = np.zeros((4, 3))
    for k in range(1, 4):
        U[k, k - 1] = X.dist[0, k]
    assert stress(U, X.dist, 1.0) == 0.0
    assert stress(U, X.dist, 2.0) > 0.05


def test_l1_search_finds_star_embedding():
    for n in (3, 5):
        assert lp_embed_stress(make_star_Sn(n), 1.0, n, restarts=5).best_stress <= 1e-6


def test_stress_argument_checks():
    X = make_star_Sn(2)
    with pytest.raises(MMSError):
        lp_embed_stress(X, 0.5, 2)
    with pytest.raises(MMSError):
        lp_embed_stress(X, 2.0, 0)


def test_heisenberg_identity():
    assert heisenberg_identity_check(200, 1)["max_relative_error"] <= 1e-10


def test_heisenberg_growth_constant_stable():
    a = heisenberg_growth_constant(500, seed=0)["C"]
    b = heisenberg_growth_constant(500, seed=1)["C"]
    assert 1.7 <= a <= 3 ** 0.5 + 1e-9
    assert abs(a - b) <= 0.01
    with pytest.raises(MMSError):
        heisenberg_growth_constant(10, (3, 3))
