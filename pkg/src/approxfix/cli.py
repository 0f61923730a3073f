"""Command-line front end: ``approxfix solve | verify | catalog``.

Exit codes: 0 certified, 1 input error, 2 certification failure (a report is
still written).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import brouwer, kakutani, minimax
from . import expr as ex
from .geometry import Box, Hull, GeometryError, as_point
from .modulus import ContinuityModulus, Lipschitz
from .setvalued import SetValuedError, SetValuedMap, from_function, from_polygonal_graph

KINDS = ("brouwer", "kakutani", "minimax")
DEFAULT_GRID_CAP = 2 ** 20
VERIFY_GRID_K = 200
VERIFY_BUDGET = 2 ** 24


class InputError(ValueError):
    pass


# --- serialisation -------------------------------------------------------------


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def dumps(obj, indent: int = 2) -> str:
    """JSON with every real written to 17 significant digits (non-finite reals become null)."""

    def enc(v, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(v, dict):
            if not v:
                return "{}"
            items = [f"{pad}{json.dumps(k)}: {enc(x, level + 1)}" for k, x in v.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(v, list):
            if not v:
                return "[]"
            if all(not isinstance(x, (dict, list)) for x in v):
                return "[" + ", ".join(enc(x, level) for x in v) + "]"
            return "[\n" + ",\n".join(pad + enc(x, level + 1) for x in v) + "\n" + end + "]"
        if isinstance(v, bool) or v is None:
            return json.dumps(v)
        if isinstance(v, float):
            return format(v, ".17g") if math.isfinite(v) else "null"
        return json.dumps(v)

    return enc(_plain(obj), 0) + "\n"


# --- problem files ----------------------------------------------------------------


@dataclass
class Problem:
    kind: str
    eps: float
    seed: int
    n: int
    m: int | None
    domain: Box | Hull
    functions: list | None
    graph: list | None
    modulus: object
    raw: dict


def _field(doc: dict, name: str, required: bool = True, default=None):
    if name not in doc:
        if required:
            raise InputError(f"field '{name}': missing")
        return default
    return doc[name]


def _positive(name, v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not (v > 0 and math.isfinite(v)):
        raise InputError(f"field '{name}': must be a positive number, got {v!r}")
    return float(v)


def _domain(doc: dict, n: int):
    d = doc.get("domain")
    if d is None:
        return Box.unit(n)
    try:
        if isinstance(d, dict) and "box" in d:
            b = np.asarray(d["box"], dtype=float)
            if b.ndim != 2 or b.shape != (n, 2):
                raise InputError(f"field 'domain.box': expected {n} [lo, hi] pairs")
            return Box(b[:, 0], b[:, 1])
        if isinstance(d, dict) and "hull" in d:
            h = Hull(d["hull"])
            if h.dim != n:
                raise InputError(f"field 'domain.hull': points must have {n} coordinates")
            return h
    except (GeometryError, ValueError, TypeError) as err:
        if isinstance(err, InputError):
            raise
        raise InputError(f"field 'domain': {err}") from err
    raise InputError("field 'domain': expected {\"box\": [[lo, hi], ...]} or {\"hull\": [[...], ...]}")


def parse_problem(doc, eps: float | None = None, seed: int | None = None) -> Problem:
    if not isinstance(doc, dict):
        raise InputError("problem file must hold a JSON object")
    kind = _field(doc, "kind")
    if kind not in KINDS:
        raise InputError(f"field 'kind': expected one of {', '.join(KINDS)}, got {kind!r}")
    dim = _field(doc, "dimension", required=False, default={})
    if not isinstance(dim, dict):
        raise InputError("field 'dimension': expected {\"n\": int, \"m\": int}")
    e = _positive("eps", eps if eps is not None else _field(doc, "eps"))
    s = seed if seed is not None else doc.get("seed", 0)
    if isinstance(s, bool) or not isinstance(s, int):
        raise InputError(f"field 'seed': must be an integer, got {s!r}")
    functions = graph = None
    if "function" in doc and "graph" in doc:
        raise InputError("give either 'function' or 'graph', not both")
    if "graph" in doc:
        if kind != "kakutani":
            raise InputError("field 'graph': only kakutani problems take a polygonal graph")
        graph = doc["graph"]
        seg = np.asarray(graph, dtype=float) if isinstance(graph, list) else None
        if seg is None or seg.ndim != 3 or seg.shape[1:] != (2, 2):
            raise InputError("field 'graph': expected a list of segments [[x, u], [x', u']]")
    else:
        fn = _field(doc, "function")
        functions = [fn] if isinstance(fn, str) else fn
        if not isinstance(functions, list) or not functions or not all(isinstance(f, str) for f in functions):
            raise InputError("field 'function': expected an expression string or a list of them")
        try:
            functions = [ex.parse(f) for f in functions]
        except ex.ExprSyntaxError as err:
            raise InputError(f"field 'function': {err}") from err
        if kind == "minimax" and len(functions) != 1:
            raise InputError("field 'function': a minimax problem takes one expression")
    if kind == "minimax":
        nx, ny = ex.dimensions(functions[0])
        n = int(dim.get("n", max(nx, 1)))
        m = int(dim.get("m", max(ny, 1)))
        if n < nx or m < ny:
            raise InputError("field 'dimension': the expression uses more variables than declared")
        if "domain" in doc:
            raise InputError("field 'domain': minimax problems live on unit cubes")
    else:
        if graph is not None:
            n = 1
        else:
            nx, ny = max(ex.dimensions(f)[0] for f in functions), max(ex.dimensions(f)[1] for f in functions)
            if ny:
                raise InputError("field 'function': fixed-point maps use x-variables only")
            n = int(dim.get("n", max(len(functions), nx)))
            if len(functions) != n or nx > n:
                raise InputError(f"field 'function': need {n} expressions in x0..x{n - 1}")
        m = None
    domain = _domain(doc, n)
    if kind == "brouwer" and not isinstance(domain, Box):
        raise InputError("field 'domain': brouwer problems need a box")
    mod = doc.get("modulus", "auto")
    if mod != "auto":
        if not isinstance(mod, dict) or "lipschitz" not in mod:
            raise InputError("field 'modulus': expected \"auto\" or {\"lipschitz\": L}")
        mod = Lipschitz(_positive("modulus.lipschitz", mod["lipschitz"]))
    return Problem(kind, e, s, n, m, domain, functions, graph, mod, doc)


def load_problem(path: str, eps: float | None = None, seed: int | None = None) -> Problem:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as err:
        raise InputError(f"cannot read {path}: {err.strerror}") from err
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise InputError(f"{path}: malformed JSON at line {err.lineno}, column {err.colno}: {err.msg}") from err
    return parse_problem(doc, eps, seed)


def _auto_modulus(functions, box: Box) -> Lipschitz:
    L = max(ex.lipschitz_modulus(f, box).L for f in functions)
    return Lipschitz(L, float(np.max(box.sides)) or None)


def modulus_for(p: Problem) -> ContinuityModulus:
    if isinstance(p.modulus, ContinuityModulus):
        return p.modulus
    if p.kind == "minimax":
        return minimax.payoff_modulus(p.functions[0], p.n, p.m)
    if p.graph is not None:
        return Lipschitz(1.0)
    return _auto_modulus(p.functions, p.domain.bounding_box())


def build_map(p: Problem) -> SetValuedMap:
    try:
        if p.graph is not None:
            return from_polygonal_graph(p.graph, p.domain, modulus_for(p), seed=p.seed)
        return from_function(p.functions, modulus_for(p), p.domain)
    except (SetValuedError, ex.ExprError) as err:
        raise InputError(f"map construction: {err}") from err


# --- solving ----------------------------------------------------------------------------


class CertificationFailure(RuntimeError):
    def __init__(self, message: str, report: dict):
        super().__init__(message)
        self.report = report


def _brouwer_unit(p: Problem):
    box = p.domain
    s = np.where(box.sides > 0, box.sides, 1.0)

    def g(T):
        X = box.lower + np.atleast_2d(T) * box.sides
        F = np.stack([ex.evaluate_batch(f, X) for f in p.functions], axis=1)
        return (F - box.lower) / s

    L = modulus_for(p).L
    ratio = float(np.max(box.sides) / np.min(s))
    return g, Lipschitz(max(L * ratio, 1e-12))


def solve(p: Problem, grid_cap: int = DEFAULT_GRID_CAP) -> dict:
    out = {"kind": p.kind, "eps": p.eps}
    trace = {"seed": p.seed}
    try:
        if p.kind == "brouwer":
            g, omega = _brouwer_unit(p)
            try:
                res = brouwer.approx_fixed_point(g, omega, p.n, p.eps / float(np.max(p.domain.sides) or 1.0),
                                                 vectorized=True, resolution_cap=grid_cap)
            except brouwer.ResidualCheckFailed as err:
                raise CertificationFailure(str(err), {"best_point": err.best_point}) from err
            x = p.domain.lower + res.point * p.domain.sides
            fx = np.array([ex.evaluate(f, x) for f in p.functions])
            residual = float(np.max(np.abs(fx - x)))
            out.update(point=x, image=fx, residual=residual,
                       certificate={"residual_below_eps": residual < p.eps})
            trace.update(k=res.resolution_used, cell_base=list(res.cell.base), cell_perm=list(res.cell.perm))
            if not residual < p.eps:
                raise CertificationFailure("witnessed residual is not below eps", out)
        elif p.kind == "kakutani":
            U = build_map(p)
            try:
                res = kakutani.approx_kakutani(U, p.eps, resolution_cap=grid_cap)
            except kakutani.KakutaniError as err:
                raise CertificationFailure(str(err), {"trace": err.trace}) from err
            out.update(point=res.x, u=res.u, residual=res.residual,
                       certificate={"graph_defect": res.graph_defect, "graph_tol": U.graph_tol})
            trace.update(k=res.trace["grid"], deltas=res.trace["deltas"], retries=res.trace["retries"],
                         brouwer_k=res.trace["brouwer_k"])
        else:
            f = p.functions[0]
            try:
                cert = minimax.approx_saddle(f, modulus_for(p), p.eps, p.n, p.m, seed=p.seed,
                                            resolution_cap=grid_cap)
            except kakutani.KakutaniError as err:
                raise CertificationFailure(str(err), {"trace": err.trace}) from err
            out.update(point=np.concatenate([cert.x0, cert.y0]), x0=cert.x0, y0=cert.y0, value=cert.value,
                       residual=cert.trace["residual"],
                       certificate={"inf_bound": cert.inf_bound, "sup_bound": cert.sup_bound,
                                    "grid_tol": cert.grid_tol, "gap_estimate": cert.gap_estimate})
            trace.update(k=cert.trace["grid"], deltas=cert.trace["deltas"], retries=cert.trace["retries"],
                         brouwer_k=cert.trace["brouwer_k"], fixed_point_eps=cert.trace["fixed_point_eps"])
    except brouwer.ResolutionOverflow as err:
        raise CertificationFailure(str(err), {"trace": trace}) from err
    except minimax.MinimaxError as err:
        if "violation" in err.trace:
            raise InputError(str(err)) from err
        raise CertificationFailure(str(err), {"trace": dict(trace, **err.trace)}) from err
    except brouwer.BrouwerError as err:
        raise InputError(str(err)) from err
    out["trace"] = trace
    return out


# --- verification -----------------------------------------------------------------------


def verify(p: Problem, result: dict) -> tuple[bool, dict]:
    """Re-check a result with oracles that do not share the solver's search."""
    if not isinstance(result, dict) or result.get("kind") != p.kind:
        raise InputError(f"result kind {result.get('kind') if isinstance(result, dict) else None!r} "
                         f"does not match problem kind {p.kind!r}")
    try:
        x = as_point(result["point"], p.n + (p.m or 0))
    except (KeyError, GeometryError, TypeError, ValueError) as err:
        raise InputError(f"result field 'point': {err}") from err
    eps = p.eps
    if p.kind == "brouwer":
        inside = p.domain.contains(x)
        fx = np.array([ex.evaluate(f, x) for f in p.functions])
        r = float(np.max(np.abs(fx - x)))
        return inside and r < eps, {"residual": r, "in_domain": inside}
    if p.kind == "kakutani":
        U = build_map(p)
        inside = p.domain.contains(x)
        hint = result.get("u")
        cert = kakutani.residual_certificate(U, x, eps, u_hint=None if hint is None else np.asarray(hint, float))
        return inside and cert.ok, {"residual": cert.residual, "u": cert.u, "in_domain": inside}
    return _verify_minimax(p, x, result)


def _verify_minimax(p: Problem, x: np.ndarray, result: dict) -> tuple[bool, dict]:
    f = p.functions[0]
    n, m, eps = p.n, p.m, p.eps
    x0, y0 = x[:n], x[n:]
    if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
        return False, {"in_domain": False}
    k = VERIFY_GRID_K
    while (k + 1) ** (n + m) > VERIFY_BUDGET and k > 1:
        k //= 2
    L = modulus_for(p).L
    err = L / (2 * k)
    cert = result.get("certificate", {})
    grid_tol = float(cert.get("grid_tol", eps / 16))
    tol = eps + 2 * grid_tol
    axes_y = minimax._unit_grid(m, 1.0 / k, VERIFY_BUDGET)
    axes_x = minimax._unit_grid(n, 1.0 / k, VERIFY_BUDGET)
    inf_g = float(ex.evaluate_batch(f, x0[None, :], axes_y).min())
    sup_g = float(ex.evaluate_batch(f, axes_x, y0[None, :]).max())
    value = float(ex.evaluate(f, x0, y0))
    sup_inf, inf_sup = minimax.brute_gap(f, k, n, m)
    checks = {
        "near_inf": value < inf_g - err + tol,
        "near_sup": value > sup_g + err - tol,
        "value_matches": abs(value - float(result.get("value", value))) <= 1e-12 * max(1.0, abs(value)),
        "within_brute_bracket": sup_inf - err - tol <= value <= inf_sup + err + tol,
        "weak_duality": sup_inf <= inf_sup + 1e-12,
    }
    report = {"value": value, "grid_inf": inf_g, "grid_sup": sup_g, "brute_sup_inf": sup_inf,
              "brute_inf_sup": inf_sup, "grid_k": k, "grid_error": err, "checks": checks}
    return all(checks.values()), report


# --- catalogue --------------------------------------------------------------------------

FIGURE1 = [[[0.0, 0.0], [0.5, 0.0]], [[0.5, 0.0], [0.5, 1.0]], [[0.5, 1.0], [1.0, 1.0]]]

CATALOG = {
    "identity": {"kind": "kakutani", "dimension": {"n": 1}, "function": ["x0"], "modulus": "auto",
                 "eps": 0.01, "seed": 0},
    "one-minus-x": {"kind": "brouwer", "dimension": {"n": 1}, "function": ["1 - x0"], "modulus": "auto",
                    "eps": 0.001, "seed": 0},
    "figure1": {"kind": "kakutani", "dimension": {"n": 1}, "graph": FIGURE1, "modulus": {"lipschitz": 1.0},
                "eps": 0.01, "domain": {"box": [[0.0, 1.0]]}, "seed": 0},
    "bilinear-saddle": {"kind": "minimax", "dimension": {"n": 1, "m": 1}, "function": "(x0-0.5)*(y0-0.5)",
                        "modulus": "auto", "eps": 0.05, "seed": 0},
    # row player mixes rows with weights (x0, 1-x0), column player (y0, 1-y0); payoff [[1, 0], [0.25, 0.75]]
    "matrix-game-2x2": {"kind": "minimax", "dimension": {"n": 1, "m": 1},
                        "function": "1*x0*y0 + 0*x0*(1-y0) + 0.25*(1-x0)*y0 + 0.75*(1-x0)*(1-y0)",
                        "modulus": "auto", "eps": 0.05, "seed": 0},
}


def catalog_expressions() -> dict[str, list]:
    """Parsed expressions of every catalogue problem that has them."""
    out = {}
    for name, doc in CATALOG.items():
        if "function" in doc:
            fn = doc["function"]
            out[name] = [ex.parse(f) for f in ([fn] if isinstance(fn, str) else fn)]
    return out


# --- entry points -----------------------------------------------------------------------


def _write(text: str, path: str | None):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def cmd_solve(args) -> int:
    start = time.perf_counter()
    p = load_problem(args.problem, args.eps, args.seed)
    try:
        report = solve(p, args.grid_cap)
        report["certified"] = True
        code = 0
    except CertificationFailure as err:
        report = {"kind": p.kind, "eps": p.eps, "certified": False, "error": str(err), **err.report}
        report.setdefault("trace", {})["seed"] = p.seed
        code = 2
    report["wallTimeMs"] = (time.perf_counter() - start) * 1000.0
    _write(dumps(report), args.out)
    if not args.quiet:
        status = "certified" if code == 0 else "NOT certified"
        print(f"{p.kind}: {status} in {report['wallTimeMs']:.0f} ms", file=sys.stderr)
    return code


def cmd_verify(args) -> int:
    p = load_problem(args.problem)
    try:
        with open(args.result) as fh:
            result = json.load(fh)
    except OSError as err:
        raise InputError(f"cannot read {args.result}: {err.strerror}") from err
    except json.JSONDecodeError as err:
        raise InputError(f"{args.result}: malformed JSON at line {err.lineno}, column {err.colno}") from err
    ok, report = verify(p, result)
    report["certified"] = ok
    if not args.quiet:
        sys.stdout.write(dumps(report))
    return 0 if ok else 2


def cmd_catalog(args) -> int:
    for name, doc in CATALOG.items():
        fn = doc.get("function", "<polygonal graph>")
        print(f"{name:18s} {doc['kind']:9s} {fn}")
    if args.emit:
        try:
            os.makedirs(args.emit, exist_ok=True)
            for name, doc in CATALOG.items():
                with open(os.path.join(args.emit, f"{name}.json"), "w") as fh:
                    fh.write(dumps(doc))
        except OSError as err:
            raise InputError(f"cannot write templates to {args.emit}: {err.strerror}") from err
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="approxfix", description="Certified approximate fixed points and saddle points.")
    sub = ap.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="solve a problem file")
    s.add_argument("problem")
    s.add_argument("--eps", type=float)
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.add_argument("--grid-cap", type=int, default=DEFAULT_GRID_CAP,
                   help="largest Brouwer grid resolution per axis (default 2^20)")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_solve)
    v = sub.add_parser("verify", help="re-check a result against its problem")
    v.add_argument("problem")
    v.add_argument("result")
    v.add_argument("--quiet", action="store_true")
    v.set_defaults(func=cmd_verify)
    c = sub.add_parser("catalog", help="list built-in example problems")
    c.add_argument("--emit", metavar="DIR", help="write the problems as JSON templates into DIR")
    c.set_defaults(func=cmd_catalog)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
