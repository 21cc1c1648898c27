"""Command line front end: scenario files in, deterministic reports out.

Exit codes: 0 when every certificate completed, 2 when some quadrature did not
converge (inconclusive), 1 on validation errors (bad expression, self-map
violation, bad exponents). Validation happens before any integration.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .carleson import (ApexLattice, TestFunction, boundedness_certificate, carleson_intensity,
                       default_escape_sequences, lattice_certificate, test_function_norm,
                       test_function_norm_closed_form, testing_condition_value, vanishing_probe)
from .geometry import HalfPlanePoint, Interval, cover_interval, tent
from .quadrature import QuadratureSpec, measure_alpha, pullback_measure
from .sparse import (SparseFormParams, compactness_tail, default_collections, default_corpus,
                     operator_vs_sparse, sparse_form, unweighted_sparse_form)
from .symbols import ExpressionError, SymbolExpression, parse, parse_weight, verify_self_map
from .weights import BWeightParams, b_class_constant, not_carleson_probe, weighted_estimate_check

SCHEMA = "bergsparse.report/1"
COMMANDS = ("check-bounded", "check-compact", "sparse-bound", "weight-class",
            "weighted-estimate", "selftest", "run")


class ValidationError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    u: SymbolExpression
    phi: SymbolExpression
    omega: SymbolExpression | None
    p: float
    q: float
    alpha: float
    gamma: float = 1.0
    N: int | None = None
    s: float | None = None
    weight_q: float | None = None
    lattice: ApexLattice = field(default_factory=ApexLattice)
    spec: QuadratureSpec = field(default_factory=QuadratureSpec)
    poles: list = field(default_factory=list)
    sparse: dict = field(default_factory=dict)
    compact: dict = field(default_factory=dict)
    certificates: list = field(default_factory=list)
    raw: dict = field(default_factory=dict)


def _expr(text, weight: bool, where: str) -> SymbolExpression:
    try:
        return parse_weight(text) if weight else parse(text)
    except ExpressionError as e:
        raise ValidationError(f"{where}: {e}") from e


def _lattice(cfg: dict) -> ApexLattice:
    if not cfg:
        return ApexLattice()
    xs = tuple(float(x) for x in cfg.get("xs", ApexLattice().xs))
    if "ys" in cfg:
        ys = tuple(float(y) for y in cfg["ys"])
    else:
        lo, hi = cfg.get("y_exponents", [-10, 10])
        ys = tuple(2.0**k for k in range(int(lo), int(hi) + 1))
    if not ys or min(ys) <= 0:
        raise ValidationError("lattice: y values must be positive")
    return ApexLattice(xs, ys)


def _spec(cfg: dict) -> QuadratureSpec:
    kw = {}
    for key in ("rel_tol", "abs_tol", "max_extent", "min_cell"):
        if key in cfg:
            kw[key] = float(cfg[key])
    if "max_cells" in cfg:
        kw["max_cells"] = int(cfg["max_cells"])
    if "truncation" in cfg:
        kw["truncation"] = tuple(float(v) for v in cfg["truncation"])
    if "decay" in cfg:
        kw["tail_model"] = "power_law"
        kw["decay"] = float(cfg["decay"])
    try:
        return QuadratureSpec(**kw)
    except ValueError as e:
        raise ValidationError(f"quadrature: {e}") from e


def load_scenario(source: str | Path) -> Scenario:
    """Read a TOML scenario from a path or a bundled name (``remark``, ``identity``, ...)."""
    path = Path(source)
    if path.exists():
        data = path.read_bytes()
    else:
        bundled = resources.files("bergsparse") / "scenarios" / f"{source}.toml"
        if not bundled.is_file():
            raise ValidationError(f"no scenario file or bundled scenario named {source!r}")
        data = bundled.read_bytes()
    try:
        raw = tomllib.loads(data.decode("utf-8"))
    except tomllib.TOMLDecodeError as e:
        raise ValidationError(f"scenario TOML: {e}") from e
    return scenario_from_dict(raw)


def scenario_from_dict(raw: dict) -> Scenario:
    sym = raw.get("symbols", {})
    ex = raw.get("exponents", {})
    if "phi" not in sym:
        raise ValidationError("symbols.phi is required")
    u = _expr(sym.get("u", "1"), False, "symbols.u")
    phi = _expr(sym["phi"], False, "symbols.phi")
    omega = _expr(sym["omega"], True, "symbols.omega") if "omega" in sym else None
    p, q = float(ex.get("p", 2.0)), float(ex.get("q", ex.get("p", 2.0)))
    alpha = float(ex.get("alpha", 0.0))
    if not q >= p >= 1:
        raise ValidationError(f"exponents: need q >= p >= 1, got p={p}, q={q}")
    if not alpha > -1:
        raise ValidationError(f"exponents: alpha must exceed -1, got {alpha}")
    gamma = float(ex.get("gamma", 1.0))
    if gamma < 1:
        raise ValidationError("exponents: gamma must be >= 1")
    N = ex.get("N")
    if N is not None and (int(N) != N or N < 1):
        raise ValidationError("exponents: N must be a positive integer")
    report = verify_self_map(phi)
    if not report.ok:
        pts = ", ".join(f"z={x:g}{y:+g}i (Im phi={v:g})" for x, y, v in report.violations[:10])
        raise ValidationError(f"symbols.phi is not a self-map of the upper half-plane; "
                              f"{len(report.violations)} violations, e.g. {pts}")
    weights = raw.get("weights", {})
    return Scenario(
        name=str(raw.get("name", "unnamed")), u=u, phi=phi, omega=omega,
        p=p, q=q, alpha=alpha, gamma=gamma, N=int(N) if N is not None else None,
        s=float(weights["s"]) if "s" in weights else None,
        weight_q=float(weights["q"]) if "q" in weights else None,
        lattice=_lattice(raw.get("lattice", {})), spec=_spec(raw.get("quadrature", {})),
        poles=list(sym.get("poles", [])), sparse=dict(raw.get("sparse", {})),
        compact=dict(raw.get("compact", {})),
        certificates=list(raw.get("certificates", [])), raw=raw)


# --- certificate runners ----------------------------------------------------------------


def _inconclusive(payload: dict) -> bool:
    v = payload.get("verdict", "")
    return v == "inconclusive" or payload.get("converged") is False


def run_bounded(sc: Scenario, refine: int, threads: int) -> dict:
    cert = boundedness_certificate(sc.u, sc.phi, sc.p, sc.q, sc.alpha, sc.lattice, sc.spec,
                                   refine=refine, threads=threads)
    intensity = lattice_certificate(
        lambda a: carleson_intensity(sc.u, sc.phi, sc.p, sc.q, sc.alpha, a, sc.spec),
        sc.lattice, sc.p, sc.q, sc.alpha, refine, threads=threads, rel_tol=sc.spec.rel_tol,
        quantity="intensity",
        labels=("carleson (numerical evidence)", "not carleson (supremum not stable)", "inconclusive"))
    return {"testing": cert.to_dict(), "intensity": intensity.to_dict(),
            "verdict": cert.verdict, "converged": cert.verdict != "inconclusive"}


def run_compact(sc: Scenario, refine: int, threads: int) -> dict:
    n_esc = int(sc.compact.get("escape_terms", 12))
    prof = vanishing_probe(sc.u, sc.phi, sc.p, sc.q, sc.alpha, default_escape_sequences(n_esc),
                           sc.spec, tol=float(sc.compact.get("tol", 1e-3)), threads=threads)
    bounded = boundedness_certificate(sc.u, sc.phi, sc.p, sc.q, sc.alpha, sc.lattice, sc.spec,
                                      refine=refine, threads=threads)
    out = {"vanishing": prof.to_dict(), "bounded_verdict": bounded.verdict,
           "verdict": prof.verdict, "converged": prof.converged}
    if sc.compact.get("tail", False):
        N = int(sc.compact.get("N", 1))
        gamma = float(sc.compact.get("gamma", 1.5))
        params = SparseFormParams(N, gamma, sc.p, sc.q)
        m_max = int(sc.compact.get("m_max", 12))
        seq_kind = sc.compact.get("sequence", "to_boundary")
        if seq_kind == "to_boundary":
            seq = [TestFunction(complex(0, 1 / m), sc.q, sc.alpha) for m in range(1, m_max + 1)]
        else:
            seq = [TestFunction(complex(0, m), sc.q, sc.alpha) for m in range(1, m_max + 1)]
        n_max = int(sc.compact.get("n_max", 8))
        tail = compactness_tail(seq, sc.u, sc.phi, params, sc.alpha, n_values=range(1, n_max + 1),
                                collections=_collections(sc), threads=threads)
        out["tail"] = {"n": tail["n"], "tail": tail["tail"], "sequence": seq_kind,
                       "N": N, "gamma": gamma, "m_max": m_max}
    return out


def _collections(sc: Scenario, widen: bool = False):
    cols = default_collections(int(sc.sparse.get("level_min", -8)), int(sc.sparse.get("level_max", 6)),
                               tuple(sc.sparse.get("window", (-64, 64))))
    return [c.widened() for c in cols] if widen else cols


def run_sparse(sc: Scenario, refine: int, threads: int) -> dict:
    corpus = default_corpus(sc.p, sc.alpha)
    res = {}
    for label, widen in (("base", False), ("widened", True)):
        t = operator_vs_sparse(corpus, sc.u, sc.phi, sc.p, sc.q, sc.alpha, sc.gamma,
                               _collections(sc, widen), sc.spec, threads)
        res[label] = t
    a, b = res["base"]["max_ratio"], res["widened"]["max_ratio"]
    drift = abs(b - a) / a if a > 0 else 0.0
    return {
        "corpus": [[f.apex.real, f.apex.imag] for f in corpus],
        "base": res["base"], "widened": res["widened"], "drift": drift,
        "verdict": "stable sparse constant" if drift < 0.1 else "sparse constant drifts",
        "converged": res["base"]["converged"] and res["widened"]["converged"],
    }


def _weight_params(sc: Scenario) -> BWeightParams:
    if sc.omega is None:
        raise ValidationError("symbols.omega is required for weight commands")
    q = sc.weight_q if sc.weight_q is not None else sc.q
    try:
        return BWeightParams(q, sc.u, sc.phi, sc.omega, sc.alpha, sc.s)
    except ValueError as e:
        raise ValidationError(f"weights: {e}") from e


def run_weight_class(sc: Scenario, refine: int, threads: int) -> dict:
    params = _weight_params(sc)
    cert = b_class_constant(params, sc.lattice, sc.spec, refine, threads=threads)
    probe = not_carleson_probe(sc.omega, sc.alpha)
    return {"class": cert.to_dict(), "not_carleson": probe, "verdict": cert.verdict,
            "converged": cert.verdict != "inconclusive"}


def run_weighted(sc: Scenario, refine: int, threads: int) -> dict:
    params = _weight_params(sc)
    bounded = boundedness_certificate(sc.u, sc.phi, params.q, params.q, sc.alpha, sc.lattice,
                                      sc.spec, refine=refine, threads=threads)
    corpus = default_corpus(params.q, sc.alpha)
    table = weighted_estimate_check(corpus, params, sc.spec, sc.lattice, refine, threads)
    table["bounded_verdict"] = bounded.verdict
    ok = bounded.verdict.startswith("bounded") and table["class_verdict"].startswith("in class")
    table["verdict"] = ("estimate holds on corpus (numerical evidence)"
                        if ok and math.isfinite(table["max_ratio"]) else "preconditions not certified")
    return table


def selftest() -> dict:
    """Closed-form oracle checks; each entry records value, expected and pass flag."""
    checks = []

    def add(name, value, expected, tol):
        ok = abs(value - expected) <= tol * max(1.0, abs(expected))
        checks.append({"name": name, "value": value, "expected": expected, "pass": bool(ok)})

    add("measure Q[0,1) alpha=0", measure_alpha((0.0, 1.0, 0.0, 1.0), 0), 1 / math.pi, 1e-14)
    add("measure Q[0,2) alpha=1", measure_alpha((0.0, 2.0, 0.0, 2.0), 1), 16 / math.pi, 1e-14)
    for a in (1j, 2 + 1j, 10j):
        add(f"test norm a={a}", test_function_norm(TestFunction(a, 2, 0)).value, 0.25, 1e-6)
    add("test norm alpha=1", test_function_norm(TestFunction(1j, 2, 1)).value,
        test_function_norm_closed_form(1), 1e-6)
    u, phi = parse("1"), parse("z+i")
    for y in (0.25, 1.0, 4.0):
        add(f"testing value y_a={y}", testing_condition_value(u, phi, 2, 2, 0, complex(0, y)).value,
            y * y / (4 * (1 + y) ** 2), 1e-6)
    add("pullback T_2i", pullback_measure(tent(HalfPlanePoint(0, 2)), u, phi, 2, 0).value,
        2 / math.pi, 1e-14)
    c = cover_interval(Interval.from_endpoints(0, 1))
    add("cover [0,1) ratio", float(c.ratio), 1.0, 0)
    one = parse("1")
    s1 = sparse_form(None, one, parse("z"), SparseFormParams(1, 1.0, 2, 2), 0,
                     default_collections(0, 0, (0, 1))[:1])
    add("single-box sparse form", s1.value, 1 / math.pi, 1e-12)
    return {"checks": checks, "passed": all(c["pass"] for c in checks), "converged": True,
            "verdict": "pass" if all(c["pass"] for c in checks) else "fail"}


RUNNERS = {
    "check-bounded": run_bounded,
    "check-compact": run_compact,
    "sparse-bound": run_sparse,
    "weight-class": run_weight_class,
    "weighted-estimate": run_weighted,
}


def run_scenario(sc: Scenario, command: str, refine: int = 1, threads: int = 1) -> dict:
    if command == "run":
        names = sc.certificates or ["check-bounded"]
    else:
        names = [command]
    for n in names:
        if n not in RUNNERS:
            raise ValidationError(f"unknown certificate {n!r}")
    if any(n in ("weight-class", "weighted-estimate") for n in names):
        _weight_params(sc)
    payloads = {n: RUNNERS[n](sc, refine, threads) for n in names}
    return {
        "schema": SCHEMA,
        "tool_version": __version__,
        "command": command,
        "scenario": sc.raw,
        "refine": refine,
        "seed": None,
        "certificates": payloads,
        "inconclusive": any(_inconclusive(p) for p in payloads.values()),
    }


# --- emission -----------------------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if hasattr(obj, "to_dict"):
        return _clean(obj.to_dict())
    return obj


def to_json(report: dict) -> str:
    return json.dumps(_clean(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _tables(report: dict) -> dict[str, list[dict]]:
    """Flatten per-point tables out of a report: one table per certificate."""
    out = {}
    for cmd, payload in report.get("certificates", {}).items():
        stem = cmd.replace("-", "_")
        for key, val in payload.items():
            if isinstance(val, dict) and isinstance(val.get("points"), list):
                out[f"{stem}_{key}"] = val["points"]
            elif isinstance(val, dict) and isinstance(val.get("rows"), list):
                out[f"{stem}_{key}"] = val["rows"]
        if isinstance(payload.get("rows"), list):
            out[stem] = payload["rows"]
        if isinstance(payload.get("checks"), list):
            out[stem] = payload["checks"]
        tail = payload.get("tail")
        if isinstance(tail, dict):
            out[f"{stem}_tail"] = [{"n": n, "tail": v} for n, v in zip(tail["n"], tail["tail"])]
        nc = payload.get("not_carleson")
        if isinstance(nc, dict):
            out[f"{stem}_not_carleson"] = [{"y": y, "ratio": r} for y, r in zip(nc["y"], nc["ratio"])]
    return out


def to_csv(rows: list[dict]) -> str:
    rows = _clean(rows)
    cols: list[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols)
    w.writeheader()
    for r in rows:
        w.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in r.items()})
    return buf.getvalue()


def emit(report: dict, fmt: str, out: str | None) -> list[str]:
    """Write the report; returns the paths written (``-`` for stdout)."""
    if fmt == "json":
        text = to_json(report)
        if out in (None, "-"):
            sys.stdout.write(text)
            return ["-"]
        Path(out).write_text(text)
        return [out]
    tables = _tables(report)
    if out in (None, "-"):
        for name, rows in tables.items():
            sys.stdout.write(f"# {name}\n{to_csv(rows)}")
        return ["-"]
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, rows in tables.items():
        p = d / f"{name}.csv"
        with open(p, "w", newline="") as fh:
            fh.write(to_csv(rows))
        paths.append(str(p))
    return paths


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bergsparse",
                                 description="Numerical certificates for weighted composition "
                                             "operators on Bergman spaces of the upper half-plane.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=name != "selftest",
                       help="scenario TOML path or bundled name (remark, identity, identity_pq)")
        p.add_argument("--out", default=None, help="output file (json) or directory (csv); default stdout")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--refine", type=int, default=1, help="lattice refinements for stability checks")
        p.add_argument("--threads", type=int, default=1, help="worker threads; never changes results")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    if args.refine < 0 or args.threads < 1:
        print("error: --refine must be >= 0 and --threads >= 1", file=sys.stderr)
        return 1
    try:
        if args.command == "selftest":
            report = {"schema": SCHEMA, "tool_version": __version__, "command": "selftest",
                      "certificates": {"selftest": selftest()}}
            report["inconclusive"] = False
            emit(report, args.format, args.out)
            return 0 if report["certificates"]["selftest"]["passed"] else 1
        sc = load_scenario(args.scenario)
        report = run_scenario(sc, args.command, args.refine, args.threads)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    emit(report, args.format, args.out)
    print(f"{args.command}: done in {time.perf_counter() - t0:.1f}s", file=sys.stderr)
    return 2 if report["inconclusive"] else 0


if __name__ == "__main__":
    sys.exit(main())
