"""Command line front end: ``bifh curve``, ``bifh surface`` and ``bifh verify``.

Exit codes: 0 satisfied, 3 violated, 4 nonexistence certificate,
10 invalid input, 11 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from .classify import (
    CaseTag,
    classify_report,
    reduction_identity_check,
    substitution_equivalence,
)
from .curve import (
    CurvatureProfile,
    CurveSamples,
    SampledCurvature,
    frenet_apparatus,
    resample_arclength,
)
from .errors import BifhError, ConfigError, NumericalError
from .expr import parse
from .hypersurface import (
    MODES,
    SurfaceChart,
    chart_geometry,
    convergence_study,
    corollary_residual,
    corpus,
    direct_bi_f_tension_oracle,
    split,
)
from .spaceform import MODELS, SpaceForm
from .tension import WeightFn, energies

SCHEMA = "bifh/1"
EXIT_OK, EXIT_VIOLATED, EXIT_NONEXISTENCE = 0, 3, 4
EXIT_CONFIG, EXIT_NUMERICAL = 10, 11
_MODEL_FOR_C = {0.0: "euclidean", 1.0: "sphere", -1.0: "hyperbolic"}


def _thread_limit():
    value = os.environ.get("BIFH_THREADS")
    if not value:
        return nullcontext()
    try:
        limit = int(value)
    except ValueError:
        raise ConfigError("BIFH_THREADS must be a positive integer") from None
    if limit < 1:
        raise ConfigError("BIFH_THREADS must be a positive integer")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=limit)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _clean(x):
    """Replace non-finite floats (not valid JSON) by None."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return float(x) if np.isfinite(x) else None
    return x


def _write_outputs(out: str | None, stem: str, report: dict, header, rows) -> None:
    text = json.dumps(_clean(report), indent=2, sort_keys=True, default=_json_default, ensure_ascii=False)
    print(text)
    if out is None:
        return
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    (path / f"{stem}.json").write_text(text + "\n", encoding="utf-8")
    with open(path / f"{stem}.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{x:.17g}" for x in row])


def _report(command: str, spec: dict, verdict: str, sup_norms, diagnostics, **extra) -> dict:
    report = {
        "schema": SCHEMA,
        "command": command,
        "spec": spec,
        "verdict": verdict,
        "sup_norms": list(np.asarray(sup_norms, dtype=float)),
        "diagnostics": list(diagnostics),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    report.update(extra)
    return report


def _resolve_c(args) -> float:
    if args.space is not None:
        return SpaceForm(args.space, 3).c
    return float(args.c)


# ---------------------------------------------------------------- curve


def _profile_from_csv(path: str) -> CurvatureProfile:
    data = np.genfromtxt(path, delimiter=",", names=True)
    names = data.dtype.names or ()
    if "s" not in names or "k1" not in names:
        raise ConfigError("profile CSV needs a header with at least s and k1")
    s = np.asarray(data["s"], dtype=float)
    parts = {}
    for k in ("k1", "k2", "k3"):
        parts[k] = SampledCurvature(s, data[k]) if k in names else parse("0", {"s"})
    return CurvatureProfile(parts["k1"], parts["k2"], parts["k3"], (float(s[0]), float(s[-1])))


def _profile_from_points(path: str, c: float, dim: int | None, n: int) -> tuple[CurvatureProfile, np.ndarray]:
    raw = np.loadtxt(path, delimiter=",", ndmin=2)
    model = _MODEL_FOR_C.get(c)
    if model is None:
        raise ConfigError("point input needs c in {0, 1, -1}")
    n_dim = raw.shape[1] if model == "euclidean" else raw.shape[1] - 1
    if dim is not None and dim != n_dim:
        raise ConfigError("point dimension does not match --dim")
    space = SpaceForm(model, n_dim)
    samples = resample_arclength(raw, space, max(n, 64))
    fa = frenet_apparatus(space, samples)
    mask = fa.valid_mask()
    s = samples.s[mask]
    parts = {}
    for i, k in enumerate(("k1", "k2", "k3")):
        vals = fa.curvatures[i][mask] if i < len(fa.curvatures) else np.zeros_like(s)
        parts[k] = SampledCurvature(s, vals)
    return CurvatureProfile(parts["k1"], parts["k2"], parts["k3"], (float(s[0]), float(s[-1]))), s


def cmd_curve(args) -> int:
    c = _resolve_c(args)
    if args.n < 16:
        raise ConfigError("n must be at least 16")
    if args.tol <= 0:
        raise ConfigError("tol must be positive")
    s0, s1 = args.range
    grid = np.linspace(s0, s1, args.n)
    if args.points:
        profile, grid = _profile_from_points(args.points, c, None, args.n)
    elif args.profile_csv:
        profile = _profile_from_csv(args.profile_csv)
        lo, hi = profile.domain
        grid = np.linspace(max(lo, s0), min(hi, s1), args.n)
    else:
        profile = CurvatureProfile.from_strings(args.k1, args.k2, args.k3, (s0, s1))
    f = WeightFn.parse(args.f)
    cert, rep = classify_report(profile, f, c, args.tol, grid)
    if cert.kind == "nonexistence":
        code = EXIT_NONEXISTENCE
    else:
        code = EXIT_OK if rep.verdict == "satisfied" else EXIT_VIOLATED
    spec = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    spec["c"] = c
    report = _report("curve", spec, rep.verdict, rep.sup_norms, cert.diagnostics,
                     certificate=cert.to_dict(), exit_code=code)
    header = ["s", "eq1", "eq2", "eq3", "eq4", "coef1", "coef2", "coef3", "coef4"]
    rows = np.column_stack([rep.grid, rep.eq_residuals.T, rep.frenet_coefficients.T])
    _write_outputs(args.out, "curve", report, header, rows)
    return code


# ---------------------------------------------------------------- surface


def cmd_surface(args) -> int:
    if args.tol <= 0:
        raise ConfigError("tol must be positive")
    try:
        data = json.loads(Path(args.chart).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"chart file {args.chart!r} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"chart file is not valid JSON: {exc}") from None
    if args.space:
        data["space"] = args.space
    if args.grid:
        data["grid"] = args.grid
    chart = SurfaceChart.from_json(data)
    geom = chart_geometry(chart)
    f = chart.field(args.f)
    res = corollary_residual(geom, f, args.mode, r=args.r, curvature_trace=args.curvature_trace)
    sup = [res.sup_tangential, res.sup_normal]
    verdict = "satisfied" if all(np.isfinite(sup)) and max(sup) <= args.tol else "violated"
    code = EXIT_OK if verdict == "satisfied" else EXIT_VIOLATED
    diagnostics = list(res.diagnostics)
    extra = {"mode": res.mode, "exit_code": code}
    U, V = chart.mesh()
    header = ["u", "v", "H", "normal", "tangential_u", "tangential_v"]
    cols = [U.ravel(), V.ravel(), geom.H.ravel(), res.normal.ravel(),
            res.tangential[..., 0].ravel(), res.tangential[..., 1].ravel()]
    if args.oracle:
        oracle = split(geom, direct_bi_f_tension_oracle(geom, f))
        header += ["oracle_normal", "oracle_tangential_u", "oracle_tangential_v"]
        cols += [oracle.normal.ravel(), oracle.tangential[..., 0].ravel(), oracle.tangential[..., 1].ravel()]
        study = convergence_study(chart, args.f, curvature_trace=args.curvature_trace)
        extra["oracle"] = [
            {"quantity": r.quantity, "errors": list(r.errors), "order": r.order,
             "floor": r.floor, "passed": bool(r.passed())} for r in study
        ]
    spec = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    spec["chart_spec"] = data
    report = _report("surface", spec, verdict, sup, diagnostics, **extra)
    _write_outputs(args.out, "surface", report, header, np.column_stack(cols))
    return code


# ---------------------------------------------------------------- verify


def _curve_checks():
    grid = np.linspace(0.0, 1.0, 101)
    weights = ["exp(s)", "s^2+1", "2+sin(3*s)", "1/(1+s^2)", "sqrt(1+s)*cos(s/2)"]
    for text in weights:
        for k1 in (0.5, 1.0, 2.0):
            val = reduction_identity_check(WeightFn.parse(text), k1, grid, relative=True)
            yield f"reduction identity f={text} k1={k1:g}", val, 1e-10
    profiles = {
        "VI": ("1+0.1*sin(s)", "1"),
        "IV": ("1", "1+0.1*cos(s)"),
        "VII": ("1+0.1*sin(s)", "2+0.3*s"),
    }
    for case, (k1, k2) in profiles.items():
        fr = substitution_equivalence(CaseTag(case), CurvatureProfile.from_strings(k1, k2), grid)
        yield f"substitution case {case}", fr.worst, 1e-9
    e2 = SpaceForm.euclidean(2)
    circle = CurveSamples.from_function(
        lambda s: np.stack([np.cos(s), np.sin(s)], -1), 0.0, 2 * np.pi, 2001, e2)
    en = energies(e2, circle, WeightFn.parse("1"))
    yield "energy E2 of the unit circle", abs(en.E2 - np.pi), 1e-6


def _surface_checks():
    rng = np.random.default_rng(7)
    for i in range(3):
        a, b, cc = rng.uniform(-0.3, 0.3, 3)
        chart = SurfaceChart.from_strings(
            ["u", "v", f"{a:.6f}*u^2+{b:.6f}*u*v+{cc:.6f}*v^3"],
            [[-0.5, 0.5], [-0.5, 0.5]], (33, 33), "euclidean", name=f"graph-{i}")
        for r in convergence_study(chart, "1+0.1*x+0.05*y^2", which="identities"):
            yield f"identity {r.quantity} on {chart.name} (order {r.order:.2f})", r
    for chart in corpus(65):
        for r in convergence_study(chart, "1+0.1*x"):
            yield f"oracle {r.quantity} on {chart.name} (order {r.order:.2f})", r


def cmd_verify(args) -> int:
    rows = []
    if args.suite in ("curves", "all"):
        for name, value, limit in _curve_checks():
            rows.append((name, f"{value:.3g} < {limit:g}", bool(value < limit)))
    if args.suite in ("hypersurface", "all"):
        for name, r in _surface_checks():
            rows.append((name, f"{r.errors[1]:.3g} (floor {r.floor:.1g})", r.passed()))
    width = max(len(r[0]) for r in rows)
    for name, detail, ok in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    failed = sum(not ok for _, _, ok in rows)
    print(f"{len(rows) - failed}/{len(rows)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_VIOLATED


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bifh", description="Bi-f-harmonic curve and surface checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("curve", help="check a curvature profile and weight against the curve system")
    space = pc.add_mutually_exclusive_group()
    space.add_argument("--c", type=float, default=0.0, help="ambient curvature (default 0)")
    space.add_argument("--space", choices=MODELS, help="ambient model instead of --c")
    pc.add_argument("--k1", default="0")
    pc.add_argument("--k2", default="0")
    pc.add_argument("--k3", default="0")
    pc.add_argument("--profile-csv", help="CSV with header s,k1[,k2,k3]")
    pc.add_argument("--points", help="CSV of ambient points; curvatures are measured from it")
    pc.add_argument("--f", default="1", help="weight expression in s, k1, k2, k3")
    pc.add_argument("--range", nargs=2, type=float, default=(0.0, 1.0), metavar=("S0", "S1"))
    pc.add_argument("--n", type=int, default=128)
    pc.add_argument("--tol", type=float, default=1e-6)
    pc.add_argument("--out", help="directory for curve.json and curve.csv")
    pc.set_defaults(func=cmd_curve)

    ps = sub.add_parser("surface", help="evaluate the surface conditions on a chart")
    ps.add_argument("--chart", required=True, help="chart JSON file")
    ps.add_argument("--f", default="1", help="weight expression in u, v, x, y, z, w")
    ps.add_argument("--space", choices=MODELS, help="override the chart's ambient model")
    ps.add_argument("--grid", nargs=2, type=int, metavar=("NU", "NV"))
    ps.add_argument("--mode", choices=MODES, default="general")
    ps.add_argument("--r", type=float, help="ambient scalar curvature for --mode einstein")
    ps.add_argument("--curvature-trace", choices=("tangent", "ricci"), default="tangent")
    ps.add_argument("--oracle", action="store_true", help="add the oracle comparison and refinement study")
    ps.add_argument("--tol", type=float, default=1e-6)
    ps.add_argument("--out", help="directory for surface.json and surface.csv")
    ps.set_defaults(func=cmd_surface)

    pv = sub.add_parser("verify", help="run the built-in identity suites")
    pv.add_argument("suite", choices=("curves", "hypersurface", "all"))
    pv.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with _thread_limit():
            return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except BifhError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
