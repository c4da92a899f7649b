"""Command-line entry point: ``mmslab <command> [flags]``.

Reports are JSON on stdout (or ``--out``), written with sorted keys so that
identical inputs and seed give byte-identical files.  Errors go to stderr
as JSON with exit status 1 (schema), 2 (size guard) or 3 (acceptance).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from importlib import resources

import jsonschema
import numpy as np

from . import __version__
from .core import (
    DENSE_LIMIT,
    Ball,
    Correspondence,
    MMSError,
    SchemaError,
    SizeGuard,
    glue,
    pointed_from_json,
    pointed_to_json,
)

EXIT_SCHEMA = 1
EXIT_SIZE = 2
EXIT_ACCEPT = 3


def threads() -> int:
    try:
        return max(1, int(os.environ.get("MMSLAB_THREADS", "1")))
    except ValueError:
        return 1


def num(value, provenance: str = "measured", tolerance: float = 0.0) -> dict:
    return {"value": value, "provenance": provenance, "tolerance": tolerance}


def _schema(name: str) -> dict:
    return json.loads(resources.files("mmslab").joinpath("schemas", name).read_text())


def _read_json(path: str, schema: str) -> dict:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    try:
        jsonschema.validate(obj, _schema(schema))
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"{path}: {exc.message}") from exc
    return obj


def load_space(path: str, max_points: int):
    obj = _read_json(path, "space.schema.json")
    if obj["n"] > max_points:
        raise SizeGuard(f"{path}: {obj['n']} points exceeds --max-points {max_points}")
    return pointed_from_json(obj)


def load_corr(path: str) -> Correspondence:
    return Correspondence.from_json(_read_json(path, "correspondence.schema.json"))


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg["threads"] = threads()
    cfg["version"] = __version__
    return cfg


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=True) + "\n"


def _emit(args, report: dict) -> None:
    report["config"] = _config(args)
    text = _dump(report)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_csv(path: str | None, header, rows) -> None:
    if not path:
        return
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


# commands


def cmd_gen(args) -> None:
    from . import models

    k = args.kind
    if k == "S":
        P = models.make_S((args.m, args.n))
    elif k == "T":
        P = models.make_T((args.circle_points, args.m, args.levels))
    elif k == "R":
        P = models.make_R_grid(args.h, args.extent)
    elif k == "star":
        P = models.make_star_Sn(args.count)
    elif k == "spider":
        P = models.PointedMMS(models.make_spider_midpoints(args.count), 0)
    else:
        P = models.make_heisenberg_sample(args.count, args.extent, args.seed)
    if P.n > args.max_points:
        raise SizeGuard(f"{P.n} points exceeds --max-points {args.max_points}")
    _emit(args, pointed_to_json(P))


def _glued(args):
    X = load_space(args.x, args.max_points)
    Y = load_space(args.y, args.max_points)
    corr = load_corr(args.corr)
    Z, mx, my = glue(X, Y, corr)
    signed = np.zeros(Z.n)
    signed[mx] += X.weight
    signed[my] -= Y.weight
    return Z, signed


def cmd_flr(args) -> None:
    from .lipdual import LipschitzDualProblem, f_lr

    Z, signed = _glued(args)
    res = f_lr(LipschitzDualProblem(Z.space, Z.base, args.L, args.r, signed))
    _emit(args, {"value": num(res.value, "measured", 1e-9), "witness": res.witness.tolist(), "status": res.status})


def cmd_fx(args) -> None:
    from .lipdual import FxEvaluator

    Z, signed = _glued(args)
    ev = FxEvaluator(Z.space, Z.base, signed)
    lo, hi, moved = ev.bracket(args.iterations)
    value = 0.5 * (lo + hi) if moved else 0.5
    _emit(args, {
        "value": num(value, "measured", 0.5 * (hi - lo)),
        "bracket": [num(lo, "bound-lower"), num(hi, "bound-upper")],
        "status": "optimal" if moved else "saturated",
    })


def cmd_compare(args) -> None:
    from .dstar import dstar_upper

    X = load_space(args.x, args.max_points)
    Y = load_space(args.y, args.max_points)
    est = dstar_upper(X, Y, search_budget=args.budget, seed=args.seed)
    _emit(args, est.to_json(with_corr=True))


def cmd_tangent_scan(args) -> None:
    from .dstar import tangent_scan

    X = load_space(args.space, args.max_points)
    rep = tangent_scan(X, args.r0, args.lam, args.kmax, radius=args.radius, target_resolution=args.resolution, steps=args.steps)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(rep.to_csv())
    _emit(args, rep.to_json())


def cmd_pairs(args) -> None:
    from .besicovitch import find_pairs

    X = load_space(args.space, args.max_points)
    anchors = args.anchor if args.anchor else None
    certs = find_pairs(X.space, args.max_d, anchors=anchors)
    _emit(args, {
        "pairs": [{**c.to_json(), "margin": num(c.margin, "measured", 1e-9), "certified": c.certified} for c in certs],
        "count": len(certs),
    })


def cmd_classify(args) -> None:
    from .besicovitch import classify_uniform

    X = load_space(args.space, args.max_points)
    res = classify_uniform(X, floor=args.floor, tol=args.tol)
    out = res.to_json()
    if res.delta is not None:
        out["delta"] = num(res.delta, "measured", args.floor or 0.0)
    _emit(args, out)


def _dyadic(lo: int, hi: int) -> list[float]:
    return [2.0**k for k in range(lo, hi + 1)]


def _centers(n: int, count: int | None, seed: int) -> list[int]:
    if count is None or count >= n:
        return list(range(n))
    rng = np.random.default_rng(seed)
    return sorted(int(c) for c in rng.choice(n, count, replace=False))


def cmd_probe(args) -> None:
    from . import geoprobe

    what = args.probe
    if what == "heisenberg":
        ident = geoprobe.heisenberg_identity_check(args.samples, args.seed)
        growth = geoprobe.heisenberg_growth_constant(args.samples, seed=args.seed)
        _write_csv(args.csv, ["samples", "max_relative_error", "growth_C"], [[args.samples, repr(ident["max_relative_error"]), repr(growth["C"])]])
        growth["C"] = num(growth["C"], "bound-lower")
        ident["max_relative_error"] = num(ident["max_relative_error"])
        _emit(args, {"identity": ident, "growth": growth})
        return
    X = load_space(args.space, args.max_points)
    S = X.space
    if what == "uniformity":
        radii = args.radii or _dyadic(-4, 2)
        centers = _centers(S.n, args.centers, args.seed)
        err, wit = geoprobe.uniformity_defect(S, radii, centers, normalize=args.normalize)
        rows = []
        for r in radii:
            e, _ = geoprobe.uniformity_defect(S, [r], centers, normalize=args.normalize)
            rows.append([repr(r), repr(e)])
        _write_csv(args.csv, ["radius", "defect"], rows)
        _emit(args, {"defect": num(err), "witness": wit, "radii": radii, "centers": len(centers)})
    elif what == "cover":
        res = geoprobe.covering_number(S, Ball(args.center, args.radius, "closed"), args.rprime)
        prov = "measured" if res.exact else "bound-upper"
        _write_csv(args.csv, ["center", "radius", "rprime", "lower", "upper", "exact"], [[args.center, repr(args.radius), repr(args.rprime), res.lower, res.upper, res.exact]])
        _emit(args, {"cover": res.to_json(), "value": num(res.upper, prov)})
    elif what == "doubling":
        rng = np.random.default_rng(args.seed)
        radii = args.radii or _dyadic(-2, 2)
        balls = [Ball(int(rng.integers(S.n)), float(rng.choice(radii)), "closed") for _ in range(args.samples)]
        rows = []
        for b in balls:
            c = geoprobe.covering_number(S, b, b.radius / 2.0)
            rows.append([b.center, repr(b.radius), c.lower, c.upper, c.exact])
        _write_csv(args.csv, ["center", "radius", "lower", "upper", "exact"], rows)
        res = geoprobe.doubling_constant(S, balls)
        res["value"] = num(res["value"], "measured" if res["exact"] else "bound-upper")
        _emit(args, res)
    elif what == "hausdorff":
        val = geoprobe.hausdorff_upper(S, args.delta)
        out = {"hausdorff_upper": num(val, "bound-upper"), "delta": args.delta}
        try:
            out["lip_projection_lower"] = num(geoprobe.lip_projection_lower(S), "bound-lower")
        except geoprobe.WrongSpaceKind:
            pass
        _write_csv(args.csv, ["delta", "hausdorff_upper"], [[repr(args.delta), repr(val)]])
        _emit(args, out)
    elif what == "separation":
        scales = args.scales or sorted(_dyadic(-4, 2), reverse=True)
        prof = geoprobe.separation_profile(S, scales)
        _write_csv(args.csv, ["scale", "clusters", "max_diameter", "min_separation"], [[repr(v) for v in e] for e in prof.entries])
        _emit(args, prof.to_json())
    elif what == "stress":
        res = geoprobe.lp_embed_stress(S, args.p, args.dim, restarts=args.restarts, seed=args.seed)
        _write_csv(args.csv, ["restart", "stress"], [[i, repr(s)] for i, s in enumerate(res.per_restart)])
        _emit(args, res.to_json())


def cmd_accept(args) -> int:
    from .acceptance import format_table, run_all

    only = [int(c) for c in args.only.split(",")] if args.only else None
    results = run_all(only, workers=threads())
    sys.stderr.write(format_table(results))
    _emit(args, {"criteria": [r.to_json() for r in results], "all_passed": all(r.passed for r in results)})
    return 0 if all(r.passed for r in results) else EXIT_ACCEPT


# parser


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mmslab", description="Finite metric measure space laboratory.")
    ap.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write the JSON report here instead of stdout")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--max-points", type=int, default=DENSE_LIMIT, help="size guard on inputs and outputs")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="emit a model space as JSON")
    g.add_argument("--kind", required=True, choices=["S", "T", "R", "star", "spider", "heis"])
    g.add_argument("--m", type=int, default=0)
    g.add_argument("--n", type=int, default=3)
    g.add_argument("--h", type=float, default=0.125)
    g.add_argument("--extent", type=float, default=1.0)
    g.add_argument("--circle-points", type=int, default=16)
    g.add_argument("--levels", type=int, default=1)
    g.add_argument("--count", type=int, default=3)
    g.set_defaults(func=cmd_gen)

    for name, fn in (("flr", cmd_flr), ("fx", cmd_fx)):
        p = sub.add_parser(name, parents=[common], help=f"{name} on two glued spaces")
        p.add_argument("--x", required=True)
        p.add_argument("--y", required=True)
        p.add_argument("--corr", required=True)
        if name == "flr":
            p.add_argument("--L", type=float, required=True)
            p.add_argument("--r", type=float, required=True)
        else:
            p.add_argument("--iterations", type=int, default=40)
        p.set_defaults(func=fn)

    c = sub.add_parser("compare", parents=[common], help="bounds on d* between two spaces")
    c.add_argument("--x", required=True)
    c.add_argument("--y", required=True)
    c.add_argument("--budget", type=int, default=4)
    c.set_defaults(func=cmd_compare)

    t = sub.add_parser("tangent-scan", parents=[common], help="compare rescalings with R, S and T")
    t.add_argument("--space", required=True)
    t.add_argument("--r0", type=float, default=1.0)
    t.add_argument("--lambda", dest="lam", type=float, default=2.0)
    t.add_argument("--kmax", type=int, default=8)
    t.add_argument("--radius", type=float, default=8.0)
    t.add_argument("--resolution", type=float, default=1.0 / 16.0)
    t.add_argument("--steps", type=int, default=20)
    t.add_argument("--csv")
    t.set_defaults(func=cmd_tangent_scan)

    p = sub.add_parser("pairs", parents=[common], help="Besicovitch pair certificates")
    p.add_argument("--space", required=True)
    p.add_argument("--max-d", type=float, default=math.inf)
    p.add_argument("--anchor", type=int, action="append")
    p.set_defaults(func=cmd_pairs)

    k = sub.add_parser("classify", parents=[common], help="R / T / S classification")
    k.add_argument("--space", required=True)
    k.add_argument("--floor", type=float)
    k.add_argument("--tol", type=float, default=0.25)
    k.set_defaults(func=cmd_classify)

    pr = sub.add_parser("probe", parents=[common], help="geometric probes")
    pr.add_argument("probe", choices=["uniformity", "cover", "doubling", "hausdorff", "separation", "stress", "heisenberg"])
    pr.add_argument("--space")
    pr.add_argument("--csv")
    pr.add_argument("--radii", type=_floats)
    pr.add_argument("--scales", type=_floats)
    pr.add_argument("--centers", type=int)
    pr.add_argument("--normalize", action="store_true")
    pr.add_argument("--center", type=int, default=0)
    pr.add_argument("--radius", type=float, default=1.0)
    pr.add_argument("--rprime", type=float, default=0.5)
    pr.add_argument("--delta", type=float, default=0.25)
    pr.add_argument("--samples", type=int, default=1000)
    pr.add_argument("--p", type=float, default=2.0)
    pr.add_argument("--dim", type=int, default=3)
    pr.add_argument("--restarts", type=int, default=100)
    pr.set_defaults(func=cmd_probe)

    a = sub.add_parser("accept", parents=[common], help="run the acceptance suite")
    a.add_argument("--only", help="comma-separated criterion numbers")
    a.set_defaults(func=cmd_accept)
    return ap


def _fail(code: int, exc: Exception) -> int:
    sys.stderr.write(_dump({"error": type(exc).__name__, "message": str(exc), "exit": code}))
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "probe" and args.probe != "heisenberg" and not args.space:
        return _fail(EXIT_SCHEMA, SchemaError("probe needs --space"))
    try:
        rc = args.func(args)
    except SizeGuard as exc:
        return _fail(EXIT_SIZE, exc)
    except MMSError as exc:
        return _fail(EXIT_SCHEMA, exc)
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
