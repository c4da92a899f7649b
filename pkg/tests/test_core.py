import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmslab.core import (
    Ball,
    Correspondence,
    EmptySubset,
    FiniteMMS,
    InvalidCorrespondence,
    PointedMMS,
    SchemaError,
    ZeroMass,
    ball_measure,
    ball_points,
    density_profile,
    glue,
    pointed_from_json,
    pointed_to_json,
    rescale,
    restrict,
    space_from_json,
    space_to_json,
)
from mmslab.models import line_space, make_R_grid, make_S, make_star_Sn, make_T


def random_metric(seed, n):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 4, (n, 2))
    return np.abs(x[:, None] - x[None]).sum(-1)


def test_star_open_ball_excludes_sphere():
    X = make_star_Sn(3).space
    assert ball_points(X, Ball(0, 2.0, "open")) == {0}
    assert ball_points(X, Ball(0, 2.0, "closed")) == {0, 1}


def test_closed_radius_zero_is_the_point_and_duplicates():
    X = FiniteMMS(np.ones(3), np.array([[0, 0, 1], [0, 0, 1], [1, 1, 0.0]]))
    assert ball_points(X, Ball(0, 0.0, "closed")) == {0, 1}
    assert ball_points(X, Ball(2, 0.0, "open")) == set()


def test_S_closed_ball_radius_three():
    X = make_S((0, 4)).space
    assert ball_points(X, Ball(0, 3.0, "closed")) == {0, 1, 2, 3}


def test_S_closed_ball_includes_sphere():
    X = make_S((0, 8)).space
    assert ball_measure(X, Ball(0, 16.0, "closed")) == 17.0
    assert ball_measure(X, Ball(0, 16.0, "open")) == 16.0


def test_R_grid_ball_measure():
    P = make_R_grid(0.01, 10)
    m = ball_measure(P.space, Ball(P.base, 1.0, "closed"))
    assert abs(m - 1.0) <= 0.01


def test_empty_ball_measure_zero():
    X = make_S((0, 2)).space
    assert ball_measure(X, Ball(0, 0.0, "open")) == 0.0


def test_ball_rejects_negative_radius():
    with pytest.raises(ValueError):
        Ball(0, -1.0, "open")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 9), st.floats(0.0, 6.0), st.floats(0.0, 3.0))
def test_balls_monotone_and_open_in_closed(seed, n, r, dr):
    X = FiniteMMS(np.ones(n), random_metric(seed, n))
    for c in range(n):
        small_o, small_c = ball_points(X, Ball(c, r, "open")), ball_points(X, Ball(c, r, "closed"))
        assert small_o <= small_c
        assert small_c <= ball_points(X, Ball(c, r + dr, "closed"))


def test_rescale_identity_when_unit_ball_has_mass_one():
    P = make_S((-4, 4))
    # open unit ball at 0 holds the codes below 2^4, each of mass 1/16
    Q = rescale(P, 1.0)
    assert np.array_equal(Q.space.dist, P.space.dist)
    assert np.allclose(Q.weight, P.weight)


def test_rescale_unit_ball_mass_one():
    P = rescale(make_S((-4, 8)), 2.0)
    assert ball_measure(P.space, Ball(P.base, 1.0, "open")) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("a,b", [(2.0, 0.5), (0.5, 0.25), (4.0, 0.125)])
def test_rescale_composition(a, b):
    P = make_R_grid(1 / 64, 8)
    lhs = rescale(rescale(P, a), b)
    rhs = rescale(P, a * b)
    assert np.array_equal(lhs.space.dist, rhs.space.dist)
    assert np.allclose(lhs.weight, rhs.weight, rtol=0, atol=1e-12)


def test_rescale_zero_mass():
    P = PointedMMS(FiniteMMS(np.array([0.0, 1.0]), np.array([[0, 2.0], [2.0, 0]])), 0)
    with pytest.raises(ZeroMass):
        rescale(P, 1.0)


def test_glue_identity_keeps_distances():
    P = make_star_Sn(3)
    corr = Correspondence.make([(i, i) for i in range(P.n)])
    Z, mx, my = glue(P, P, corr)
    D = Z.space.dist
    assert np.array_equal(D[np.ix_(mx, my)], P.space.dist)


def test_glue_one_point_spaces():
    one = PointedMMS(FiniteMMS(np.ones(1), np.zeros((1, 1))), 0)
    Z, mx, my = glue(one, one, Correspondence.make([(0, 0)], 0.5))
    assert Z.space.dist[0, 1] == 0.5


def test_glue_base_only_formula():
    X, Y = make_star_Sn(2), line_space([0.0, 1.0, 3.0], [1, 1, 1], 0)
    Z, mx, my = glue(X, Y, Correspondence.make([(0, 0)], 0.25))
    for u in range(X.n):
        for v in range(Y.n):
            assert Z.space.dist[mx[u], my[v]] == X.space.dist[u, 0] + 0.25 + Y.space.dist[0, v]


def test_glue_requires_base_pair():
    X = make_star_Sn(2)
    with pytest.raises(InvalidCorrespondence):
        glue(X, X, Correspondence.make([(1, 1)]))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 6), st.integers(2, 6), st.floats(0.0, 2.0))
def test_glue_properties(seed, nx, ny, slack):
    rng = np.random.default_rng(seed)
    X = PointedMMS(FiniteMMS(np.ones(nx), random_metric(seed, nx)), 0)
    Y = PointedMMS(FiniteMMS(np.ones(ny), random_metric(seed + 1, ny)), 0)
    pairs = [(0, 0)] + [(int(rng.integers(nx)), int(rng.integers(ny))) for _ in range(2)]
    try:
        Z, mx, my = glue(X, Y, Correspondence.make(pairs, slack))
    except InvalidCorrespondence:
        return
    D = Z.space.dist
    assert np.array_equal(D[np.ix_(mx, mx)], X.space.dist)
    assert np.array_equal(D[np.ix_(my, my)], Y.space.dist)
    assert Z.space.check_metric() == []
    for p, q in pairs:
        low = np.abs(X.space.dist[:, p][:, None] - Y.space.dist[q][None, :])
        assert np.all(D[np.ix_(mx, my)] >= low - slack - 1e-9)
        if slack == 0.0:
            assert np.all(D[np.ix_(mx, my)] >= low - 1e-9)


def test_restrict():
    X = make_T((8, 0, 1)).space
    assert np.array_equal(restrict(X, range(X.n)).dist, X.dist)
    one = restrict(X, [3])
    assert one.n == 1 and one.weight[0] == X.weight[3]
    arc = restrict(X, sorted(ball_points(X, Ball(0, 0.5, "closed"))))
    assert arc.n == 5 and arc.dist.max() == 1.0
    with pytest.raises(EmptySubset):
        restrict(X, [])


def test_density_profile():
    P = make_R_grid(0.01, 10)
    for r, v in density_profile(P, [0.5, 1.0, 2.0]):
        assert abs(v - 0.5) <= 0.01
    S = make_S((-6, 6))
    for r, v in density_profile(S, [2.0**k for k in range(-3, 5)]):
        assert abs(v - 0.5) <= 2.0**-6 / r
    small = make_star_Sn(2)
    (r, v), = density_profile(small, [100.0])
    assert v == small.space.total_mass / 200.0


def test_metric_axioms_on_models():
    for P in (make_S((0, 4)), make_T((8, 0, 2)), make_R_grid(0.25, 2), make_star_Sn(4)):
        assert P.space.check_metric() == []


def test_json_round_trip_bit_exact():
    P = make_T((8, 1, 2))
    obj = json.loads(json.dumps(pointed_to_json(P)))
    Q = pointed_from_json(obj)
    assert np.array_equal(Q.space.dist, P.space.dist)
    assert np.array_equal(Q.weight, P.weight)
    assert Q.base == P.base


def test_json_schema_errors():
    X = make_star_Sn(2).space
    obj = space_to_json(X, 0)
    obj["dist"][0][1] = 100.0
    with pytest.raises(SchemaError):
        space_from_json(obj)
    with pytest.raises(SchemaError):
        space_from_json({"n": 2, "dist": [[0]], "weight": [1, 1]})
    with pytest.raises(SchemaError):
        space_from_json({"n": 1, "weight": [1]})
