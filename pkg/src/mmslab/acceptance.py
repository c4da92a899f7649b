"""The twelve acceptance checks, each with its runtime budget.

``run_all`` returns CriterionResult records; ``format_table`` renders the
pass/fail table printed by ``mmslab accept``.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import Ball


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    elapsed: float
    budget: float
    detail: dict = field(default_factory=dict)

    @property
    def within_budget(self) -> bool:
        return self.elapsed <= self.budget

    def to_json(self) -> dict:
        return {
            "number": self.number,
            "name": self.name,
            "passed": self.passed,
            "elapsed_s": {"value": round(self.elapsed, 3), "provenance": "measured", "tolerance": 0.0},
            "budget_s": self.budget,
            "detail": self.detail,
        }


def c1_S_uniform():
    from .geoprobe import uniformity_defect
    from .models import make_S

    S = make_S((-10, 6)).space
    centers = np.random.default_rng(0).choice(S.n, 512, replace=False)
    radii = [2.0**k for k in range(-8, 6)]
    err, wit = uniformity_defect(S, radii, centers)
    return err <= 2.0**-9, {"defect": err, "bound": 2.0**-9, "witness": wit}


def c2_T_uniform():
    from .geoprobe import uniformity_defect
    from .models import make_T

    T = make_T((256, 0, 4)).space
    radii = np.linspace(1.0 / 64.0, 15.9, 200)
    err, wit = uniformity_defect(T, radii)
    bound = 2.0 / 256.0 + 2.0**-6
    return err <= bound, {"defect": err, "bound": bound, "witness": wit}


def random_instance(rng, n_max: int = 4):
    """A random pseudo-metric problem on at most n_max points."""
    from .core import FiniteMMS, _floyd
    from .lipdual import LipschitzDualProblem

    n = int(rng.integers(1, n_max + 1))
    D = rng.uniform(0.1, 3.0, (n, n))
    D = np.triu(D, 1)
    D = _floyd(D + D.T)
    if rng.random() < 0.3:  # coincident points
        D[:, -1] = D[-1, :] = D[0, :] if n > 1 else 0.0
        D[-1, -1] = 0.0
        if n > 1:
            D[0, -1] = D[-1, 0] = 0.0
    mass = rng.uniform(-1.0, 1.0, n)
    mass[rng.random(n) < 0.2] = 0.0
    return LipschitzDualProblem(FiniteMMS(np.ones(n), D), int(rng.integers(n)), float(rng.uniform(0.2, 5.0)), float(rng.uniform(0.2, 4.0)), mass)


def c3_lp():
    from .lipdual import f_lr, f_lr_oracle

    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        prob = random_instance(rng)
        worst = max(worst, abs(f_lr(prob).value - f_lr_oracle(prob)))
    return worst <= 1e-7, {"max_abs_error": worst, "tolerance": 1e-7}


def c4_T_vs_R():
    from .dstar import dstar_lower_tent, dstar_upper, model_window, tangent_window
    from .models import make_T

    res, E = 1.0 / 16.0, 8.0
    R = model_window("R", 1.0, res, E)
    T = make_T((256, 0, 6))
    rows, ok = [], True
    for r in (0.25, 0.5, 1.0, 2.0):
        W = tangent_window(T, r, E, res)
        lo = dstar_lower_tent(W, R)
        up = dstar_upper(W, R, search_budget=0, with_lower=False).upper
        a, b = min(r / 4.0, 0.5), 2.0 * r
        good = lo <= b and up >= a and up <= 2.0 * r + 0.1
        ok = ok and good
        rows.append({"r": r, "lower": lo, "upper": up, "target_interval": [a, b], "ok": good})
    return ok, {"rows": rows}


def c5_S_gap():
    from .dstar import dstar_lower_tent, model_window, tangent_window
    from .models import make_S

    res, E = 1.0 / 16.0, 8.0
    R = model_window("R", 1.0, res, E)
    S = make_S((-8, 6))
    rows = {r: dstar_lower_tent(tangent_window(S, r, E, res), R) for r in (0.5, 1.0, 2.0)}
    bound = 1.0 / 8.0 - 0.05
    return all(v >= bound for v in rows.values()), {"lower": rows, "bound": bound}


def c6_pairs():
    from .besicovitch import certify, doubling_chain, product_coordinates, verify_pair_properties
    from .models import make_S

    S = make_S((0, 10)).space
    pair = certify(S, 0, 1)
    props = verify_pair_properties(S, pair, 1e-9)
    checks = {k: v["ok"] for k, v in props.items() if k != "ties"}
    chain = [p.d for p in doubling_chain(S, pair)]
    _, defect = product_coordinates(S, pair, 8)
    ok = pair.certified and pair.margin == 0.0 and all(checks.values()) and max(chain) >= 2.0**9 and defect == 0.0
    return ok, {"margin": pair.margin, "properties": checks, "chain": chain, "defect": defect}


def c7_classify():
    from .besicovitch import classify_uniform
    from .models import make_R_grid, make_S, make_T

    r = classify_uniform(make_R_grid(0.01, 50))
    t = classify_uniform(make_T((256, 0, 4)))
    s = classify_uniform(make_S((-10, 6)))
    ok = r.verdict == "RLike" and t.verdict == "TLike" and t.delta is not None and abs(t.delta - 1.0) <= 0.05 and s.verdict == "SLike"
    return ok, {"R": r.verdict, "T": [t.verdict, t.delta], "S": s.verdict}


def sampled_balls(P, count: int, rng, radii):
    return [Ball(int(rng.integers(P.n)), float(rng.choice(radii)) * float(rng.uniform(0.75, 1.0)), "closed") for _ in range(count)]


def c8_five_balls():
    from .geoprobe import covering_number
    from .models import make_R_grid, make_S, make_T

    rng = np.random.default_rng(0)
    fams = {
        "S": (make_S((-6, 3)).space, [2.0**k for k in range(-3, 4)]),
        "T": (make_T((64, 0, 3)).space, [2.0**k for k in range(-3, 3)]),
        "R": (make_R_grid(1.0 / 32.0, 4.0).space, [2.0**k for k in range(-3, 2)]),
    }
    # the greedy upper bound already bounds the exact cover number
    worst, exact, per = 0, True, {}
    for i, (name, (X, radii)) in enumerate(fams.items()):
        count = 67 if i < 2 else 66
        vals = []
        for b in sampled_balls(X, count, rng, radii):
            res = covering_number(X, b, b.radius / 2.0)
            exact = exact and res.exact
            vals.append(res.upper)
        per[name] = {"balls": count, "max_cover_upper": max(vals)}
        worst = max(worst, max(vals))
    return worst <= 5, {"families": per, "max_cover_upper": worst, "all_exact": exact}


def c9_spider():
    from .geoprobe import cover_points
    from .models import make_spider_midpoints

    got = {}
    for n in range(2, 9):
        res = cover_points(make_spider_midpoints(n), range(1, n + 1), 1.0)
        got[n] = res.upper if res.exact else None
    return all(got[n] == n for n in got), {"cover": got}


STRESS_THRESHOLD = 0.05


def c10_stress():
    from .geoprobe import lp_embed_stress
    from .models import make_star_Sn

    X = make_star_Sn(3)
    l2 = {dim: lp_embed_stress(X, 2.0, dim, restarts=100).best_stress for dim in (3, 5)}
    l1 = lp_embed_stress(X, 1.0, 4, restarts=100).best_stress
    ok = min(l2.values()) >= STRESS_THRESHOLD and l1 <= 1e-6
    return ok, {"l2_stress": l2, "threshold": STRESS_THRESHOLD, "l1_dim4_stress": l1}


def c11_heisenberg():
    from .geoprobe import heisenberg_identity_check

    res = heisenberg_identity_check(1000, 0)
    return res["max_relative_error"] <= 1e-10, {"max_relative_error": res["max_relative_error"]}


SCAN_CONFIG = {"r0": 1.0, "lam": 2.0, "k_max": 12}


def c12_scans():
    from .dstar import tangent_scan
    from .models import make_R_grid, make_S

    R = tangent_scan(make_R_grid(2.0**-8, 16.0), **SCAN_CONFIG)
    S = tangent_scan(make_S((-12, 4)), **SCAN_CONFIG)
    vr, vs = R.verdicts(), S.verdicts()
    ok = bool(vr) and bool(vs) and all(v == "R" for v in vr) and all(v == "S" for v in vs)
    return ok, {
        "R_scan": {"scales": R.scales, "verdicts": vr, "stopped": R.stopped},
        "S_scan": {"scales": S.scales, "verdicts": vs, "stopped": S.stopped},
    }


CRITERIA = {
    1: ("S uniformity", c1_S_uniform, 60.0),
    2: ("T uniformity", c2_T_uniform, 30.0),
    3: ("LP correctness", c3_lp, 10.0),
    4: ("d* sandwich T vs R", c4_T_vs_R, 300.0),
    5: ("S flatness gap", c5_S_gap, 120.0),
    6: ("pair machinery", c6_pairs, 120.0),
    7: ("classification", c7_classify, 180.0),
    8: ("5-ball covering", c8_five_balls, 120.0),
    9: ("spider obstruction", c9_spider, 10.0),
    10: ("l2 stress vs l1", c10_stress, 120.0),
    11: ("Heisenberg identity", c11_heisenberg, 5.0),
    12: ("tangent scans", c12_scans, 600.0),
}


def run_one(number: int) -> CriterionResult:
    name, fn, budget = CRITERIA[number]
    t = time.perf_counter()
    passed, detail = fn()
    elapsed = time.perf_counter() - t
    return CriterionResult(number, name, bool(passed), elapsed, budget, detail)


def run_all(only=None, workers: int = 1) -> list[CriterionResult]:
    numbers = sorted(CRITERIA) if only is None else sorted(only)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run_one, numbers))
    return [run_one(k) for k in numbers]


def format_line(res: CriterionResult) -> str:
    mark = "PASS" if res.passed else "FAIL"
    note = "" if res.within_budget else " (over budget)"
    return f"[{mark}] {res.number:2d} {res.name:<22s} {res.elapsed:8.1f}s / {res.budget:.0f}s{note}"


def format_table(results) -> str:
    return "".join(format_line(r) + "\n" for r in results)
