"""Command-line front end: ``convext <command> [options]``.

Input files are JSON. A file is either a domain document (see
:func:`convext.domains.domain_from_json`; with ``values`` it is already a
sampled function) or a wrapper::

    {"domain": <domain document> | {"named": "<name>", "params": {...}},
     "function": "<expression in x0, x1, ... (or x, y, z)>",
     "expect": {"convex": true, "convex_strict": false, ...}}

Exit codes: 0 when every check passes, 1 when a mathematical check fails
(verdict mismatch against ``expect``, failed certification, failed tuning,
gallery or oracle mismatch), 2 for usage and input errors. Errors are
reported on standard error as ``error[<code>]: <message>``.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import errors
from .classify import (convexity_verdict, interval_convexity_verdict, line_convexity_verdict,
                       local_convexity_verdict)
from .domains import (BandDomain, FiniteSampledFunction, GridDomain, GridFunction, PointCloud,
                      domain_from_json, named_domain, sample_function)
from .extend import OuterExtender, band_extension, convex_roof, results_to_csv
from .gallery import SCENARIO_NAMES, run_scenario, to_plain
from .oracles import caratheodory_roof, random_roof_instance
from .smooth import full_smooth_extension, hull_smooth_extension, outside_smooth_extension, \
    pd_certify
from .tolerances import DEFAULT_TOLERANCES

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2

# failures of a mathematical check rather than of the input
_CHECK_ERRORS = (errors.TuningFailed, errors.PreconditionFailed, errors.CoverageCheckFailed,
                 errors.NotConvexInput, errors.NumericBreakdown)


class UsageError(Exception):
    code = "usage"


# ----------------------------------------------------------------------------
# input handling

def parse_point(text: str) -> list:
    try:
        return [float(t) for t in text.split(",")]
    except ValueError:
        raise UsageError(f"cannot parse point {text!r}; use comma-separated numbers") from None


def expression_oracle(expr: str, dim: int):
    """Vectorized callable for a sympy expression in ``x0..x{dim-1}``."""
    import sympy

    names = [f"x{k}" for k in range(dim)]
    syms = sympy.symbols(names)
    local = dict(zip(names, syms))
    for alias, k in (("x", 0), ("y", 1), ("z", 2)):
        if k < dim:
            local[alias] = syms[k]
    try:
        parsed = sympy.sympify(expr, locals=local)
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise UsageError(f"cannot parse function {expr!r}: {exc}") from None
    unknown = parsed.free_symbols - set(syms)
    if unknown:
        raise UsageError(f"unknown symbols in function: {sorted(map(str, unknown))}")
    fn = sympy.lambdify(syms, parsed, modules="numpy")

    def f(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = fn(*[X[:, k] for k in range(dim)])
        return np.broadcast_to(np.asarray(out, dtype=float), (X.shape[0],)).copy()

    f.expression = expr
    return f


class Loaded:
    """Parsed input: domain, optional sampled function and optional oracle."""

    def __init__(self, domain, sampled=None, oracle=None, expect=None):
        self.domain, self.sampled, self.oracle = domain, sampled, oracle
        self.expect = expect or {}

    @property
    def dim(self) -> int:
        d = self.domain
        if isinstance(d, BandDomain):
            return d.outer.dim
        if isinstance(d, GridDomain):
            return d.dim
        return d.points.shape[1]

    def require_sampled(self):
        if self.sampled is None:
            if self.oracle is None:
                raise UsageError("input has neither values nor a function expression")
            dom = self.domain.band if isinstance(self.domain, BandDomain) else self.domain
            self.sampled = sample_function(dom, self.oracle)
        return self.sampled

    def require_oracle(self):
        if self.oracle is None:
            raise UsageError("this command needs a \"function\" expression in the input")
        return self.oracle


def load_input(path: str, resolution: int | None = None) -> Loaded:
    if path is None:
        raise UsageError("--input is required")
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("input must be a JSON object")
    if "kind" in data:
        data = {"domain": data}
    spec = data.get("domain")
    if spec is None:
        raise UsageError("input needs a \"domain\"")
    if "named" in spec:
        params = dict(spec.get("params", {}))
        if resolution is not None:
            params["resolution"] = resolution
        obj = named_domain(spec["named"], **params)
    else:
        obj = domain_from_json(spec)
    sampled = None
    if isinstance(obj, (FiniteSampledFunction, GridFunction)):
        sampled = obj
        obj = obj.domain if isinstance(obj, GridFunction) else PointCloud(obj.points)
    loaded = Loaded(obj, sampled, None, data.get("expect"))
    if data.get("function") is not None:
        loaded.oracle = expression_oracle(str(data["function"]), loaded.dim)
    if "values" in data and sampled is None:
        dom = obj.band if isinstance(obj, BandDomain) else obj
        vals = np.asarray(data["values"], dtype=float)
        loaded.sampled = (GridFunction(dom, vals) if isinstance(dom, GridDomain)
                          else FiniteSampledFunction(dom.points, vals))
    return loaded


# ----------------------------------------------------------------------------
# output

class Output:
    def __init__(self, out_dir: str | None, seed: int):
        self.out_dir, self.seed = out_dir, seed

    def emit(self, name: str, payload: dict, csv_text: str | None = None):
        payload = {**payload, "seed": self.seed}
        text = json.dumps(to_plain(payload), sort_keys=True, indent=2, allow_nan=False) + "\n"
        sys.stdout.write(csv_text if csv_text is not None else text)
        if self.out_dir is not None:
            try:
                os.makedirs(self.out_dir, exist_ok=True)
                _write(os.path.join(self.out_dir, f"{name}.json"), text)
                if csv_text is not None:
                    _write(os.path.join(self.out_dir, f"{name}.csv"), csv_text)
            except OSError as exc:
                raise UsageError(f"cannot write to {self.out_dir}: {exc.strerror}") from None


def _write(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


# ----------------------------------------------------------------------------
# commands

_NOTIONS = ("convex", "local", "line", "interval")
_NOTION_LABELS = {"convex": "Convex", "local": "LocallyConvex", "line": "LineConvex",
                  "interval": "IntervalConvex"}


def cmd_classify(args, out: Output) -> int:
    inp = load_input(args.input, args.resolution)
    f = inp.require_sampled()
    tol = DEFAULT_TOLERANCES.scaled(args.tolerance_scale)
    notions = _NOTIONS if args.notion == "all" else (args.notion,)
    stricts = (False, True) if args.notion == "all" else (args.strict,)
    verdicts = []
    for notion in notions:
        for strict in stricts:
            if notion == "convex":
                v = convexity_verdict(f, strict, tol)
            elif notion == "local":
                v = local_convexity_verdict(f, args.radius, strict, tol)
            elif notion == "line":
                v = line_convexity_verdict(f if isinstance(f, FiniteSampledFunction)
                                           else f.to_finite(), strict, tol)
            else:
                v = interval_convexity_verdict(f, strict, tol, seed=args.seed)
            verdicts.append(v.to_json_dict())
    mismatches, unchecked = [], []
    for key, want in sorted(inp.expect.items()):
        strict = key.endswith("_strict")
        label = key[:-len("_strict")] if strict else key
        label = _NOTION_LABELS.get(label, label)
        if label not in _NOTION_LABELS.values():
            raise UsageError(f"unknown expect key {key!r}")
        got = [v["holds"] for v in verdicts if v["notion"] == label and v["strict"] == strict]
        if not got:
            unchecked.append(key)
        elif got[0] != bool(want):
            mismatches.append(key)
    out.emit("classify", {"command": "classify", "verdicts": verdicts,
                          "expect": inp.expect, "mismatches": mismatches,
                          "unchecked": unchecked})
    return EXIT_CHECK if mismatches else EXIT_OK


def _queries(args, dim):
    if not args.query:
        raise UsageError("at least one --query is required")
    Q = np.array([parse_point(q) for q in args.query], dtype=float)
    if Q.shape[1] != dim:
        raise UsageError(f"queries have dimension {Q.shape[1]}, domain has {dim}")
    return Q


def cmd_roof(args, out: Output) -> int:
    inp = load_input(args.input, args.resolution)
    f = inp.require_sampled()
    Q = _queries(args, inp.dim)
    tol = DEFAULT_TOLERANCES.scaled(args.tolerance_scale)
    results = [convex_roof(f, q, tol) for q in Q]
    out.emit("roof", {"command": "roof", "queries": Q,
                      "results": [r.to_json_dict() for r in results]},
             results_to_csv(Q, results))
    return EXIT_OK


def cmd_extend_outer(args, out: Output) -> int:
    inp = load_input(args.input, args.resolution)
    f = inp.require_sampled()
    if not isinstance(f, GridFunction):
        raise UsageError("extend-outer needs a grid function")
    Q = _queries(args, inp.dim)
    ext = OuterExtender(f, True, DEFAULT_TOLERANCES.scaled(args.tolerance_scale))
    results = [ext.evaluate(q) for q in Q]
    out.emit("extend-outer", {"command": "extend-outer", "queries": Q,
                              "results": [r.to_json_dict() for r in results]},
             results_to_csv(Q, results))
    return EXIT_OK


def cmd_extend_band(args, out: Output) -> int:
    inp = load_input(args.input, args.resolution)
    if not isinstance(inp.domain, BandDomain):
        raise UsageError("extend-band needs a band domain")
    f = inp.require_sampled()
    Q = _queries(args, inp.dim) if args.query else np.zeros((0, inp.dim))
    res = band_extension(inp.domain, f, Q, tol=DEFAULT_TOLERANCES.scaled(args.tolerance_scale))
    payload = {"command": "extend-band", "queries": Q, **res.to_json_dict()}
    out.emit("extend-band", payload, results_to_csv(Q, list(res.values)) if len(Q) else None)
    return EXIT_OK


def _bbox(args, dim):
    if args.bbox is None:
        return (np.full(dim, -3.0), np.full(dim, 3.0))
    b = parse_point(args.bbox)
    if len(b) != 2 * dim:
        raise UsageError(f"--bbox needs {2 * dim} numbers (lower corner, then upper)")
    return (np.array(b[:dim]), np.array(b[dim:]))


def cmd_extend_smooth(args, out: Output) -> int:
    inp = load_input(args.input, args.resolution)
    f = inp.require_oracle()
    if args.eps is None:
        raise UsageError("--eps is required")
    dom = inp.domain
    kind = args.kind or ("full" if isinstance(dom, BandDomain) else "hull")
    if kind == "full":
        band = dom if isinstance(dom, BandDomain) else BandDomain(dom, None)
        ext = full_smooth_extension(band, f, args.eps, _bbox(args, inp.dim))
    else:
        grid = dom.band if isinstance(dom, BandDomain) else dom
        if not isinstance(grid, GridDomain):
            raise UsageError("extend-smooth needs a grid or band domain")
        if kind == "hull":
            ext = hull_smooth_extension(f, grid, args.eps)
        else:
            margin = args.margin if args.margin is not None else 0.8 * args.eps
            ext = outside_smooth_extension(f, grid, margin, args.eps, _bbox(args, inp.dim))
    payload = {"command": "extend-smooth", "kind": kind, **ext.recipe()}
    if args.query:
        Q = _queries(args, inp.dim)
        payload["queries"] = Q
        payload["values"] = ext(Q)
    out.emit("extend-smooth", payload)
    return EXIT_OK


def cmd_certify_hessian(args, out: Output) -> int:
    inp = load_input(args.input, args.resolution)
    f = inp.require_oracle()
    dom = inp.domain.band if isinstance(inp.domain, BandDomain) else inp.domain
    if isinstance(dom, GridDomain):
        cert = pd_certify(f, dom, margin=args.margin or 0.0)
    else:
        cert = pd_certify(f, dom.points, h=1e-3, margin=args.margin or 0.0)
    out.emit("certify-hessian", {"command": "certify-hessian", **cert.to_json_dict()})
    return EXIT_OK if cert.holds else EXIT_CHECK


def cmd_gallery(args, out: Output) -> int:
    if args.all:
        names = SCENARIO_NAMES
    elif args.name:
        names = tuple(sorted(args.name))
    else:
        raise UsageError("gallery needs --all or at least one --name")
    reports = {}
    for n in names:
        reports[n] = run_scenario(n, resolution=args.resolution, seed=args.seed,
                                  tolerance_scale=args.tolerance_scale, out_dir=args.out_dir)
    ok = all(r["passed"] for r in reports.values())
    summary = {"command": "gallery", "passed": ok,
               "scenarios": {n: r["passed"] for n, r in reports.items()}}
    text = json.dumps(to_plain({**summary, "seed": args.seed}), sort_keys=True, indent=2) + "\n"
    sys.stdout.write(text)
    if args.out_dir is not None:
        _write(os.path.join(args.out_dir, "gallery.json"), text)
    for n, r in reports.items():
        if not r["passed"]:
            bad = [c["operation"] for c in r["checks"] if not c["passed"]]
            print(f"scenario {n} failed: {', '.join(bad)}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_oracle_check(args, out: Output) -> int:
    rng = np.random.default_rng(args.seed)
    tol = 1e-9 * args.tolerance_scale
    worst, rows = 0.0, []
    for i in range(args.count):
        dim = (1, 2, 3)[i % 3]
        P, v, q = random_roof_instance(rng, dim)
        lp = convex_roof(FiniteSampledFunction(P, v), q).value
        brute = caratheodory_roof(P, v, q)[0]
        worst = max(worst, abs(lp - brute))
        rows.append({"dim": dim, "points": len(P), "lp": lp, "brute_force": brute})
    ok = worst <= tol
    out.emit("oracle-check", {"command": "oracle-check", "instances": args.count,
                              "max_abs_difference": worst, "tolerance": tol, "passed": ok,
                              "results": rows})
    return EXIT_OK if ok else EXIT_CHECK


COMMANDS = {
    "classify": cmd_classify, "roof": cmd_roof, "extend-outer": cmd_extend_outer,
    "extend-band": cmd_extend_band, "extend-smooth": cmd_extend_smooth,
    "certify-hessian": cmd_certify_hessian, "gallery": cmd_gallery,
    "oracle-check": cmd_oracle_check,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="convext", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def common(sp):
        sp.add_argument("--input", help="input JSON file")
        sp.add_argument("--resolution", type=int, help="override the resolution of named "
                        "domains and gallery scenarios")
        sp.add_argument("--tolerance-scale", type=float, default=1.0,
                        help="multiply every numerical tolerance")
        sp.add_argument("--seed", type=int, default=0, help="seed for randomized parts")
        sp.add_argument("--out-dir", help="also write results into this directory")
        return sp

    sp = common(sub.add_parser("classify", help="convexity verdicts for a sampled function"))
    sp.add_argument("--notion", choices=_NOTIONS + ("all",), default="all")
    sp.add_argument("--strict", action="store_true")
    sp.add_argument("--radius", type=float, help="ball radius for local convexity")

    for name, text in (("roof", "convex roof values"),
                       ("extend-outer", "minimal convex extension beyond the hull"),
                       ("extend-band", "extension from a band domain")):
        sp = common(sub.add_parser(name, help=text))
        sp.add_argument("--query", action="append",
                        help="query point, e.g. 0.5,1 (use --query=-1,0 for a leading minus)")

    sp = common(sub.add_parser("extend-smooth", help="certified smooth extension"))
    sp.add_argument("--eps", type=float)
    sp.add_argument("--kind", choices=("hull", "outside", "full"))
    sp.add_argument("--margin", type=float, help="omega-prime margin (outside kind)")
    sp.add_argument("--bbox", help="lower and upper corner, comma-separated "
                    "(--bbox=-3,-3,3,3 when the first number is negative)")
    sp.add_argument("--radius", type=float, help=argparse.SUPPRESS)
    sp.add_argument("--query", action="append")

    sp = common(sub.add_parser("certify-hessian", help="positive definiteness on a domain"))
    sp.add_argument("--margin", type=float)

    sp = common(sub.add_parser("gallery", help="run registered scenarios"))
    sp.add_argument("--all", action="store_true")
    sp.add_argument("--name", action="append", choices=SCENARIO_NAMES)

    sp = common(sub.add_parser("oracle-check", help="LP roof against brute force"))
    sp.add_argument("--count", type=int, default=200)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    out = Output(args.out_dir, args.seed)
    try:
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        return _fail(exc, EXIT_USAGE)
    except _CHECK_ERRORS as exc:
        return _fail(exc, EXIT_CHECK)
    except errors.ConvextError as exc:
        return _fail(exc, EXIT_USAGE)


def _fail(exc, code) -> int:
    print(f"error[{getattr(exc, 'code', 'error')}]: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
