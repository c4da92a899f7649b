import numpy as np
import pytest

from mmslab.besicovitch import (
    DoublingExhausted,
    EmptySide,
    certify,
    classify_uniform,
    double_pair,
    doubling_chain,
    epsilon_components,
    find_pairs,
    is_besicovitch_pair,
    neighbor_map,
    product_coordinates,
    verify_pair_properties,
)
from mmslab.core import FiniteMMS, MMSError, PointedMMS
from mmslab.models import line_space, make_R_grid, make_S, make_star_Sn, make_T


def test_S_pairs_at_every_dyadic_distance():
    S = make_S((0, 6)).space
    got = [(p.a, p.b, p.d, p.margin) for p in find_pairs(S, 8.0, anchors=[0])]
    assert got == [(0, 1, 1.0, 0.0), (0, 2, 2.0, 0.0), (0, 4, 4.0, 0.0), (0, 8, 8.0, 0.0)]


def test_star_pairs_have_margin_zero():
    X = make_star_Sn(3).space
    pairs = find_pairs(X, 10.0, resolution_guard=False)
    assert [(p.a, p.b) for p in pairs] == [(0, 1), (0, 2), (0, 3)]
    assert all(p.margin == 0.0 for p in pairs)


def test_R_grid_has_no_positive_margin():
    R = make_R_grid(1 / 8, 2).space
    assert max(is_besicovitch_pair(R, 0, j) for j in range(1, R.n)) <= 0.0
    # neighbours pass the margin test but the resolution guard drops them
    assert find_pairs(R, 2.0, resolution_guard=False)
    assert find_pairs(R, 2.0) == []


def test_pair_needs_two_points():
    with pytest.raises(MMSError):
        is_besicovitch_pair(make_S((0, 2)).space, 1, 1)


def test_T_pairs_start_at_circle_diameter():
    T = make_T((16, 0, 3)).space
    pairs = find_pairs(T, 4.0, anchors=[0])
    assert [p.d for p in pairs] == [1.0, 2.0, 4.0]


def test_neighbor_map_is_an_involution():
    S = make_S((0, 6)).space
    for b in (1, 2, 4):
        nm = neighbor_map(S, certify(S, 0, b))
        for x in np.concatenate([nm.side_a, nm.side_b]):
            assert nm(nm(x)) == x
            assert S.row(x)[nm(x)] == float(b)


def test_pair_properties_hold_on_S():
    S = make_S((0, 8)).space
    for b in (1, 2, 4, 8):
        props = verify_pair_properties(S, certify(S, 0, b))
        assert all(v["ok"] for k, v in props.items() if k != "ties")


def test_perturbed_space_breaks_a_property():
    S = make_S((0, 4)).space
    D = S.dist.copy()
    # a single-bit distance is not on any geodesic, so this stays a metric
    D[2, 3] = D[3, 2] = D[2, 3] + 0.05
    X = FiniteMMS(S.weight, D)
    assert X.check_metric() == []
    props = verify_pair_properties(X, certify(X, 0, 2))
    failed = [k for k, v in props.items() if k != "ties" and not v["ok"]]
    assert failed
    assert props[failed[0]]["witness"] is not None


def test_empty_side():
    X = line_space([0.0, 0.5, 1.0], [1, 1, 1], 0).space
    with pytest.raises(EmptySide):
        neighbor_map(X, certify(X, 0, 2))


def test_doubling_chain_on_S():
    S = make_S((0, 10)).space
    chain = doubling_chain(S, certify(S, 0, 1))
    assert [p.d for p in chain] == [2.0**k for k in range(11)]
    assert double_pair(S, chain[-1]) is None


def test_product_coordinates_exact_on_S():
    S = make_S((0, 6)).space
    coords, defect = product_coordinates(S, certify(S, 0, 1), 4)
    assert defect == 0.0
    # the closure of the open ball of radius 16 holds the codes below 16
    assert len(coords) == 16
    assert len(set(coords.values())) == 16
    with pytest.raises(DoublingExhausted):
        product_coordinates(S, certify(S, 0, 1), 8)
    with pytest.raises(MMSError):
        product_coordinates(S, certify(S, 0, 1), 0)


def test_epsilon_components():
    X = line_space([0.0, 1.0, 2.0, 5.0, 6.0], np.ones(5), 0).space
    comps = epsilon_components(X, 1.5)
    assert [c.tolist() for c in comps] == [[0, 1, 2], [3, 4]]
    # the relation is strict
    assert len(epsilon_components(X, 1.0)) == 5
    assert len(epsilon_components(X, 3.5)) == 1
    with pytest.raises(MMSError):
        epsilon_components(X, 0.0)


def test_classification_examples():
    assert classify_uniform(make_R_grid(1 / 32, 8)).verdict == "RLike"
    t = classify_uniform(make_T((64, 0, 3)))
    assert t.verdict == "TLike" and t.delta == 1.0
    assert classify_uniform(make_S((-4, 6))).verdict == "SLike"
    assert classify_uniform(make_star_Sn(6)).verdict in ("Unknown", "SLike")


@pytest.mark.parametrize("lam", [0.5, 2.0, 4.0])
def test_classification_scale_equivariant(lam):
    T = make_T((64, 0, 3))
    t = classify_uniform(PointedMMS(T.space.scaled(lam), T.base))
    assert t.verdict == "TLike" and t.delta == pytest.approx(lam)
    S = make_S((-4, 6))
    assert classify_uniform(PointedMMS(S.space.scaled(lam), S.base)).verdict == "SLike"
    R = make_R_grid(1 / 32, 8)
    assert classify_uniform(PointedMMS(R.space.scaled(lam), R.base)).verdict == "RLike"
