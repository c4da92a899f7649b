import numpy as np
import pytest

from mmslab.core import Correspondence, MMSError, PointedMMS
from mmslab.dstar import (
    LOWER_GRID,
    DStarEstimate,
    HypothesisUnmet,
    ResolutionFloor,
    coarse_grain,
    correspondence_upper,
    dstar_lower_tent,
    dstar_upper,
    flat_propagation_check,
    model_window,
    scale_continuity_check,
    tangent_scan,
    tangent_window,
    verdict,
)
from mmslab.models import line_space, make_R_grid, make_S, make_star_Sn, make_T

# 0.5 * 0.95^8, the grid point certified for the gap cases below
GAP_LOWER = 0.3317102156445311


def test_self_distance_zero():
    X = make_S((-3, 3))
    e = dstar_upper(X, X)
    assert e.lower == 0.0 and e.upper <= 1e-9


def test_symmetric_bounds():
    X, Y = make_S((-3, 3)), make_R_grid(1 / 8, 4)
    a, b = dstar_upper(X, Y), dstar_upper(Y, X)
    assert a.lower == pytest.approx(b.lower)
    assert a.upper == pytest.approx(b.upper)
    assert a.lower == pytest.approx(GAP_LOWER)


def test_small_dilation_is_close():
    X = make_S((-3, 3))
    near = dstar_upper(X, PointedMMS(X.space.scaled(1 + 1e-5), X.base)).upper
    far = dstar_upper(X, PointedMMS(X.space.scaled(1.001), X.base)).upper
    assert near < 0.05
    assert near <= far


def test_tent_lower_never_beats_a_gluing():
    rng = np.random.default_rng(3)
    for _ in range(6):
        xs = np.sort(rng.uniform(0, 4, 6))
        ys = np.sort(rng.uniform(0, 4, 5))
        X = line_space(np.concatenate([[0.0], xs]), np.ones(7), 0)
        Y = line_space(np.concatenate([[0.0], ys]), rng.uniform(0.5, 2, 6), 0)
        lo = dstar_lower_tent(X, Y)
        for pairs in ([(0, 0)], [(i, i) for i in range(6)]):
            assert lo <= correspondence_upper(X, Y, Correspondence.make(pairs)) + 1e-9


def test_lower_grid_shape():
    assert LOWER_GRID[0] == 0.5
    assert all(a > b for a, b in zip(LOWER_GRID, LOWER_GRID[1:]))


def test_S_window_far_from_R():
    R = model_window("R", 1.0, 1 / 16, 8.0)
    W = tangent_window(make_S((-8, 6)), 1.0, 8.0, 1 / 16)
    assert dstar_lower_tent(W, R) == pytest.approx(GAP_LOWER)


def test_T_window_vs_R_at_scale_two():
    R = model_window("R", 1.0, 1 / 16, 8.0)
    W = tangent_window(make_T((256, 0, 6)), 2.0, 8.0, 1 / 16)
    lo = dstar_lower_tent(W, R)
    assert lo == pytest.approx(GAP_LOWER)


def test_estimate_consistency_guard():
    with pytest.raises(AssertionError):
        DStarEstimate(0.3, 0.1)
    with pytest.raises(AssertionError):
        DStarEstimate(0.0, 0.7)


def test_verdict_rules():
    e = DStarEstimate
    assert verdict({"R": e(0.0, 0.01), "S": e(0.3, 0.5), "T": e(0.2, 0.4)}) == "R"
    assert verdict({"R": e(0.0, 0.25), "S": e(0.3, 0.5), "T": e(0.2, 0.4)}) == "ambiguous"
    # equality is not strict enough
    assert verdict({"R": e(0.0, 0.2), "S": e(0.3, 0.5), "T": e(0.2, 0.4)}) == "ambiguous"


def test_coarse_grain_conserves_mass():
    P = make_R_grid(1 / 64, 2)
    W, centers = coarse_grain(P, 1 / 8)
    assert W.weight.sum() == pytest.approx(P.weight.sum(), abs=1e-12)
    assert W.base == 0 and centers[0] == P.base
    assert W.space.check_metric() == []
    assert W.n == 65


def test_coarse_grain_below_resolution_is_identity():
    P = make_star_Sn(3)
    W, centers = coarse_grain(P, 0.5)
    assert W.n == P.n
    assert np.allclose(W.weight, P.weight)


def test_model_window_unknown():
    with pytest.raises(MMSError):
        model_window("Q", 1.0, 1 / 16, 8.0)


def test_small_scan_on_S():
    rep = tangent_scan(make_S((-6, 3)), 1.0, 2.0, k_max=3, radius=2.0, target_resolution=0.25, steps=4)
    assert rep.verdicts() == ["S"] * 4
    assert rep.scales == [1.0, 0.5, 0.25, 0.125]
    out = rep.to_json()
    assert len(out["per_scale"]) == 4
    assert rep.to_csv().count("\n") == 1 + 4 * 3


def test_scan_floor_raises():
    with pytest.raises(ResolutionFloor):
        tangent_scan(make_R_grid(0.5, 4), 1.0)


def test_scan_argument_checks():
    with pytest.raises(MMSError):
        tangent_scan(make_S((-3, 3)), 1.0, lam=1.0)
    with pytest.raises(MMSError):
        tangent_scan(make_S((-3, 3)), -1.0)


def test_flat_propagation_hypotheses():
    X = make_S((-6, 3))
    with pytest.raises(HypothesisUnmet):
        flat_propagation_check(X, 1.0, 2.0, 0.1)
    with pytest.raises(HypothesisUnmet):
        flat_propagation_check(X, 1.0, 0.5, 0.01)
    with pytest.raises(HypothesisUnmet):
        flat_propagation_check(X, 1.0, 2.0, 0.04)


def test_scale_continuity():
    res = scale_continuity_check(make_S((-3, 3)), [1.0, 1.01, 1.02])
    assert res["passed"]
    assert all(r["slack"] >= 0.01 - 1e-12 for r in res["pairs"])
    with pytest.raises(MMSError):
        scale_continuity_check(make_S((-3, 3)), [1.0, 0.0])
