"""Command-line front end: ``eqmanifold {check,classify,portrait,curves}``."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import errors
from .classify import ManifoldViolation, classify
from .desingular import divide_by_x, verify_manifold
from .dynamics import (
    TrajectoryOptions,
    cusp_fold_curve,
    heteroclinic_targets,
    phase_portrait,
    tangent_angle,
    transcritical_curve,
)
from .field import FieldModel, load_problem
from .flowbox import build_chart

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_PRECONDITION, EXIT_IO = 0, 1, 2, 3, 4

_USAGE_ERRORS = (errors.ParseError, errors.ProblemError)


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code, self.kind = code, kind


# ---------------------------------------------------------------------------
# deterministic output


def _plain(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _encode(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return "null"
        return format(obj, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (list, dict)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = ",\n".join(pad + _encode(v, indent, level + 1) for v in obj)
        return "[\n" + items + "\n" + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = ",\n".join(
            f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()
        )
        return "{\n" + items + "\n" + end + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with floats at 17 significant digits and NaN/inf as null."""
    return _encode(_plain(obj), indent, 0)


def write_csv(path: Path, header: Sequence[str], rows: np.ndarray) -> None:
    rows = np.atleast_2d(np.asarray(rows, float))
    lines = [",".join(header)]
    lines += [",".join(format(v, ".17g") for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# helpers


def _load(source: str) -> FieldModel:
    try:
        return load_problem(source)
    except _USAGE_ERRORS as exc:
        raise CliError(EXIT_USAGE, exc.kind, str(exc)) from exc


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CliError(EXIT_IO, "IOError", f"cannot write to {out}: {exc}") from exc
    return out


def _anchor(model: FieldModel, values: Sequence[float] | None) -> np.ndarray | None:
    if values is None:
        return None
    if len(values) != model.dim:
        raise CliError(EXIT_USAGE, "UsageError", f"--anchor needs {model.dim} values")
    return np.array(values, float)


def _read_seeds(path: str, dim: int) -> np.ndarray:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise CliError(EXIT_IO, "IOError", f"cannot read seeds {p}: {exc}") from exc
    try:
        if text.lstrip().startswith("["):
            seeds = np.array(json.loads(text), float)
        else:
            rows = [ln.replace(",", " ").split() for ln in text.splitlines()]
            seeds = np.array([[float(v) for v in r] for r in rows if r and not r[0].startswith("#")])
    except (ValueError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_USAGE, "ParseError", f"malformed seed file {p}: {exc}") from exc
    if seeds.size == 0:
        raise CliError(EXIT_USAGE, "EmptySeeds", "seed list is empty")
    seeds = seeds.reshape(-1, seeds.shape[-1]) if seeds.ndim > 1 else seeds.reshape(1, -1)
    if seeds.shape[1] != dim:
        raise CliError(EXIT_USAGE, "ParseError", f"seeds must have {dim} coordinates")
    return seeds


def grid_seeds(model: FieldModel, n: int) -> np.ndarray:
    """``n`` points per axis on a box centered at the anchor and inside the domain ball."""
    if n < 1:
        raise CliError(EXIT_USAGE, "EmptySeeds", "grid needs at least one point per axis")
    half = min(0.5, 0.9 / math.sqrt(model.dim)) * model.domain_radius
    axis = np.linspace(-half, half, n) if n > 1 else np.zeros(1)
    mesh = np.meshgrid(*([axis] * model.dim), indexing="ij")
    return model.anchor + np.stack([g.ravel() for g in mesh], axis=1)


# ---------------------------------------------------------------------------
# subcommands


def cmd_check(args) -> tuple[int, dict]:
    model = _load(args.problem)
    report = verify_manifold(model, samples=args.samples)
    return (EXIT_OK if report.passed else EXIT_VERIFY), {"problem": model.describe(),
                                                         "manifold": report.to_dict()}


def cmd_classify(args) -> tuple[int, dict]:
    model = _load(args.problem)
    anchor = _anchor(model, args.anchor)
    report = classify(model, anchor, max_order=args.order)
    return EXIT_OK, {"problem": model.describe(), "classification": report.to_dict()}


def _trajectory_opts(model: FieldModel, args) -> TrajectoryOptions:
    return TrajectoryOptions.for_model(model, t_max=args.t_max, max_steps=args.max_steps)


def _portrait_set(model: FieldModel, seeds, opts, threads, out: Path) -> list[dict]:
    header = ["t", *model.phase_variables]
    entries = phase_portrait(model, seeds, opts, threads)
    listing = []
    for i, entry in enumerate(entries):
        item: dict[str, Any] = {"index": i, "seed": entry.seed}
        if entry.error is not None:
            item["error"] = entry.error
            listing.append(item)
            continue
        for label, tag, traj in (("forward", "fwd", entry.forward),
                                ("backward", "bwd", entry.backward)):
            name = f"traj_{i:04d}_{tag}.csv"
            try:
                write_csv(out / name, header, np.column_stack([traj.t, traj.states]))
            except OSError as exc:
                raise CliError(EXIT_IO, "IOError", f"cannot write {name}: {exc}") from exc
            item[label] = {"file": name, "termination": traj.termination,
                           "samples": len(traj), "t_final": float(traj.t[-1]),
                           "events": [{"t": t, "kind": k, "state": s} for t, k, s in traj.events]}
        listing.append(item)
    return listing


def cmd_portrait(args) -> tuple[int, dict]:
    model = _load(args.problem)
    out = _out_dir(args.out)
    dim = model.dim
    if args.seeds:
        seeds = _read_seeds(args.seeds, dim)
    else:
        seeds = grid_seeds(model, args.grid)
    threads = args.threads or os.cpu_count() or 1

    if model.parameter is not None:
        lams = args.lam if args.lam else [-0.1, 0.0, 0.1]
        sets = []
        for k, lam in enumerate(lams):
            frozen = model.at_parameter(lam)
            sub = _out_dir(str(out / f"lambda_{k:02d}"))
            opts = _trajectory_opts(frozen, args)
            sets.append({"lambda": lam, "directory": sub.name,
                         "trajectories": _portrait_set(frozen, seeds, opts, threads, sub)})
        manifest = {"problem": model.describe(), "seeds": seeds, "options": opts.to_dict(),
                    "sets": sets}
    else:
        if args.lam:
            raise CliError(EXIT_USAGE, "UsageError", "--lambda given for a problem without parameter")
        opts = _trajectory_opts(model, args)
        manifest = {"problem": model.describe(), "seeds": seeds, "options": opts.to_dict(),
                    "trajectories": _portrait_set(model, seeds, opts, threads, out)}
    try:
        (out / "manifest.json").write_text(dumps(manifest) + "\n")
    except OSError as exc:
        raise CliError(EXIT_IO, "IOError", f"cannot write manifest: {exc}") from exc
    summary = {"out": str(out), "seeds": len(seeds),
               "files": sorted(p.name for p in out.rglob("*.csv"))}
    return EXIT_OK, summary


def cmd_curves(args) -> tuple[int, dict]:
    model = _load(args.problem)
    if model.parameter is not None:
        raise CliError(EXIT_PRECONDITION, "UsageError", "curves need a problem without parameter")
    out = _out_dir(args.out)
    anchor = _anchor(model, args.anchor)
    report = classify(model, anchor, max_order=args.order)
    base = model.anchor if anchor is None else anchor
    result: dict[str, Any] = {"ell": report.ell, "sign": report.sign, "notes": []}
    if model.m == 1:
        result["gamma"] = [base.tolist()]
        result["notes"].append("m = 1: gamma is the single anchor point; sigma skipped")
        return EXIT_OK, result
    if model.m != 2:
        raise CliError(EXIT_PRECONDITION, "UsageError", "curves are computed for m = 1 or m = 2")
    if report.ell is None or report.sign is None:
        raise CliError(EXIT_PRECONDITION, "Degenerate", "singularity order is undetermined")

    local = model.replace(anchor=base)
    R = model.domain_radius
    gamma = transcritical_curve(local, arc_steps=args.arc_steps)
    gpts = gamma.phase_points()
    write_csv(out / "gamma.csv", list(model.phase_variables), gpts)
    result["gamma"] = {"file": "gamma.csv", "points": len(gpts), "stops": list(gamma.stops),
                       "transversal_fraction": float(np.mean(gamma.transversal))}

    # gamma points for shooting: both components, away from the anchor
    d = np.linalg.norm(gamma.points - base[1:], axis=1)
    signed = np.sign((gamma.points - base[1:]) @ (gamma.points[-1] - gamma.points[0]))
    targets_y = []
    for comp in (-1.0, 1.0):
        idx = np.nonzero((signed == comp) & (d >= 0.05 * R) & (d <= args.sigma_extent * R))[0]
        if idx.size:
            pick = idx[np.linspace(0, idx.size - 1, min(args.sigma_points, idx.size)).astype(int)]
            targets_y.append(gamma.points[pick])
    gamma_y = np.vstack(targets_y) if targets_y else np.empty((0, 2))
    germ_scale = abs(report.germ_coefficients[-1]) if report.germ_coefficients else 1.0
    targets = heteroclinic_targets(local, gamma_y, report.sign, eps=args.eps,
                                   germ_scale=germ_scale, ell=report.ell,
                                   threads=args.threads or os.cpu_count())
    landed = [t for t in targets if t.landing is not None]
    sigma = np.array([t.landing for t in landed]) if landed else np.empty((0, model.dim))
    write_csv(out / "sigma.csv", list(model.phase_variables), sigma)
    comps = {"negative": 0, "positive": 0}
    gdir = gamma.points[-1] - gamma.points[0]
    for t in landed:
        key = "positive" if (np.array(t.gamma_point[1:]) - base[1:]) @ gdir > 0 else "negative"
        comps[key] += 1
    result["sigma"] = {"file": "sigma.csv", "points": len(sigma), "per_component": comps,
                       "failures": [t.to_dict() for t in targets if t.landing is None],
                       "time_direction": -int(report.sign),
                       "sides": sorted({t.side for t in targets})}
    if len(sigma) >= 3:
        radius = args.tangent_radius * R
        gamma_near = np.vstack([gamma.points, base[1:]])
        sigma_near = np.vstack([sigma[:, 1:], base[1:]])
        result["tangent_angle_deg"] = tangent_angle(gamma_near, sigma_near, base[1:], radius)
    else:
        result["notes"].append("too few sigma points for a tangent fit")
    if report.ell == 2:
        chart = build_chart(divide_by_x(local, check=False))
        fold = cusp_fold_curve(chart, np.linspace(-0.3, 0.3, 31) * chart.chart_radius)
        write_csv(out / "fold.csv", ["z0", "z1", "z2"], fold.points)
        result["fold"] = {"file": "fold.csv", "points": len(fold.points),
                          "max_relative_deviation_from_cubic": fold.max_deviation}
    return EXIT_OK, result


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eqmanifold",
        description="Bifurcations without parameters on a manifold of equilibria {x = 0}.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def problem(p):
        p.add_argument("problem", help="JSON problem file or builtin:<name>")

    p = sub.add_parser("check", help="verify that {x = 0} consists of equilibria")
    problem(p)
    p.add_argument("--samples", type=int, default=64)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("classify", help="singularity order, sign and genericity at the anchor")
    problem(p)
    p.add_argument("--anchor", type=float, nargs="+")
    p.add_argument("--order", type=int, default=6, help="highest germ order fitted")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("portrait", help="batch trajectories written as CSV")
    problem(p)
    p.add_argument("--seeds", help="seed file (JSON array or CSV rows)")
    p.add_argument("--grid", type=int, default=5, help="points per axis when no seed file")
    p.add_argument("--out", default="portrait")
    p.add_argument("--lambda", dest="lam", type=float, nargs="+", help="parameter sweep")
    p.add_argument("--t-max", type=float, default=1e4)
    p.add_argument("--max-steps", type=int, default=200_000)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_portrait)

    p = sub.add_parser("curves", help="transcritical curve, heteroclinic targets and fold")
    problem(p)
    p.add_argument("--anchor", type=float, nargs="+")
    p.add_argument("--order", type=int, default=6)
    p.add_argument("--out", default="curves")
    p.add_argument("--arc-steps", type=int, default=200)
    p.add_argument("--eps", type=float, default=1e-3, help="shooting offset from the manifold")
    p.add_argument("--sigma-points", type=int, default=8, help="shots per component of gamma")
    p.add_argument("--sigma-extent", type=float, default=0.4,
                   help="largest gamma distance from the anchor, in domain radii")
    p.add_argument("--tangent-radius", type=float, default=0.5,
                   help="fit radius for tangent lines, in domain radii")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_curves)
    return parser


_PRECONDITION_ERRORS = (
    errors.NotOnManifold, errors.VanishingDrift, errors.Degenerate, errors.NotABifurcationPoint,
    errors.DegenerateCoefficient, errors.NonHyperbolic, errors.NoSeedConvergence,
    errors.FoldInCurve, errors.NoLanding, errors.NotDivisible,
)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        code, payload = args.func(args)
    except CliError as exc:
        code, payload = exc.code, {"error": exc.kind, "message": str(exc)}
    except ManifoldViolation as exc:
        code = EXIT_VERIFY
        payload = {"error": exc.kind, "message": str(exc), "manifold": exc.report.to_dict()}
    except _USAGE_ERRORS as exc:
        code, payload = EXIT_USAGE, {"error": exc.kind, "message": str(exc)}
    except _PRECONDITION_ERRORS as exc:
        code, payload = EXIT_PRECONDITION, {"error": exc.kind, "message": str(exc)}
    except errors.EqManifoldError as exc:
        code, payload = EXIT_PRECONDITION, {"error": exc.kind, "message": str(exc)}
    except ValueError as exc:
        code, payload = EXIT_USAGE, {"error": "UsageError", "message": str(exc)}
    except OSError as exc:
        code, payload = EXIT_IO, {"error": "IOError", "message": str(exc)}
    sys.stdout.write(dumps(payload) + "\n")
    if code != EXIT_OK and "message" in payload:
        print(f"eqmanifold: {payload['message']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
