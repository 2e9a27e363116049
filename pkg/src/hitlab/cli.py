"""Command-line front end.

Subcommands: classify, simulate, hitprob, capacity, cantor, bounds-sweep.
Exit status is 0 on success, 2 on invalid input and 3 on numerical or I/O
failure. Values from --config are overridden by explicit flags.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from .errors import (
    BoundNotEstablished,
    ConstructionError,
    DomainError,
    NumericalError,
    ResourceError,
)
from .report import Report, emit_report
from .rng import DEFAULT_SEED

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3

# keys that never enter the echoed config: they do not change results
_NOT_ECHOED = {"output", "format", "threads", "config", "command", "ensemble_out", "ensemble_csv"}

# long-format CSV export is meant for small grids
ENSEMBLE_CSV_MAX_ROWS = 10**6


class ValidationError(Exception):
    pass


# ---------------------------------------------------------------------------
# parsing helpers
# ---------------------------------------------------------------------------


def parse_range(text: str) -> list[float]:
    """'lo:hi:step' (inclusive) or a comma list."""
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValidationError(f"bad range {text!r}; expected lo:hi:step")
        lo, hi, step = parts
        n = int(math.floor((hi - lo) / step + 1e-9))
        return [round(lo + i * step, 12) for i in range(n + 1)]
    return [float(p) for p in text.split(",") if p.strip()]


def parse_list(text: str) -> list[float]:
    return [float(p) for p in str(text).split(",") if p.strip()]


def parse_window(text: str) -> tuple[float, float]:
    try:
        a, b = (float(p) for p in str(text).split(":"))
    except ValueError as exc:
        raise ValidationError(f"bad window {text!r}; expected a:b") from exc
    return a, b


def parse_model(desc):
    """bm | fbm:H | powerlog:H:beta[:r_max] | JSON object | path to JSON file."""
    from .variance import PowerLog, model_from_dict

    if isinstance(desc, dict):
        return model_from_dict(desc)
    text = str(desc).strip()
    if text.startswith("{"):
        return model_from_dict(json.loads(text))
    parts = text.split(":")
    name = parts[0].lower()
    if name == "bm":
        return PowerLog(0.5, 0.0)
    if name == "fbm" and len(parts) == 2:
        return PowerLog(float(parts[1]), 0.0)
    if name == "powerlog" and len(parts) in (3, 4):
        r_max = float(parts[3]) if len(parts) == 4 else None
        return PowerLog(float(parts[1]), float(parts[2]), r_max)
    try:
        with open(text, encoding="utf-8") as fh:
            return model_from_dict(json.load(fh))
    except FileNotFoundError:
        raise ValidationError(f"unknown model {text!r}") from None


def parse_kernel(desc: str):
    """newtonian:beta | powerlog:alpha:b | constant[:v] | K:<model>:d:a:b."""
    from .potential import kernels as kn

    parts = str(desc).split(":")
    name = parts[0].lower()
    if name == "newtonian" and len(parts) == 2:
        return kn.newtonian_kernel(float(parts[1]))
    if name == "powerlog" and len(parts) == 3:
        return kn.power_log_kernel(float(parts[1]), float(parts[2]))
    if name == "constant":
        return kn.constant_kernel(float(parts[1]) if len(parts) > 1 else 1.0)
    if name == "k" and len(parts) >= 5:
        a, b = float(parts[-2]), float(parts[-1])
        d = int(parts[-3])
        model = parse_model(":".join(parts[1:-3]))
        return kn.kernel_K(model, d, a, b)
    raise ValidationError(f"unknown kernel {desc!r}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_classify(cfg: dict) -> Report:
    from .potential.phase import polarity_classify, texa_case_select
    from .variance import ADMISSIBILITY_RULE, check_admissible

    Hs = parse_list(cfg.get("H", "0.5"))
    ds = [int(x) for x in parse_list(cfg.get("d", "2"))]
    betas = parse_range(cfg["beta_grid"]) if cfg.get("beta_grid") else parse_list(cfg.get("beta", "0"))
    for H in Hs:
        for b in betas:
            try:
                check_admissible(H, b)
            except DomainError:
                raise ValidationError(f"inadmissible (H={H}, beta={b}): {ADMISSIBILITY_RULE}") from None
    rows = []
    for H in Hs:
        for d in ds:
            for b in betas:
                case = texa_case_select(H, b, d)
                rows.append({"H": H, "beta": b, "d": d, "dH": d * H, "polarity": polarity_classify(H, b, d),
                             "texa_cases": "+".join(str(c) for c in case.cases), "case_label": case.label,
                             "upper_established": case.upper_established})
    cols = ["H", "beta", "d", "dH", "polarity", "texa_cases", "case_label", "upper_established"]
    return Report("classify", cfg, cols, rows, {"n_cells": len(rows)})


def cmd_simulate(cfg: dict) -> Report:
    from .simulation import (
        EXACT,
        VOLTERRA,
        ProcessSpec,
        build_factor,
        sample_paths,
        ensemble_rows,
        uniform_grid,
        window_grid,
        write_ensemble_binary,
    )

    model = parse_model(cfg.get("model", "bm"))
    construction = EXACT if cfg.get("construction", "volterra") == "exact" else VOLTERRA
    spec = ProcessSpec(model, int(cfg.get("d", 1)), construction)
    k = int(cfg.get("grid_k", 8))
    if cfg.get("window"):
        a, b = parse_window(cfg["window"])
        grid = window_grid(a, b, k)
    else:
        grid = uniform_grid(float(cfg.get("T") or model.r_max), 2**k)
    factor = build_factor(spec, grid)
    n = int(cfg.get("paths", 1000))
    seed = int(cfg["seed"])
    if cfg.get("ensemble_csv") and n * spec.dim * (grid.m + 1) > ENSEMBLE_CSV_MAX_ROWS:
        raise ValidationError(f"--ensemble-csv is limited to {ENSEMBLE_CSV_MAX_ROWS} rows; use --ensemble-out")
    ens = sample_paths(factor, spec.dim, n, seed, int(cfg.get("threads", 1)))
    if cfg.get("ensemble_out"):
        write_ensemble_binary(ens, cfg["ensemble_out"])
    if cfg.get("ensemble_csv"):
        echo = {k: v for k, v in cfg.items() if k not in _NOT_ECHOED}
        emit_report(Report("simulate", echo, ["path", "coord", "index", "time", "value"], ensemble_rows(ens),
                           {"n_paths": n}, seed, f"{grid.m} steps"), "csv", cfg["ensemble_csv"])
    g2 = np.asarray(model.gamma(ens.times)) ** 2
    rows = []
    for i, t in enumerate(ens.times):
        row = {"index": i, "time": float(t), "gamma2": float(g2[i])}
        for c in range(spec.dim):
            x = ens.values[:, c, i]
            row[f"mean_{c}"] = float(x.mean()) if n else float("nan")
            row[f"var_{c}"] = float(x.var()) if n else float("nan")
        rows.append(row)
    cols = ["index", "time", "gamma2"] + [f"{s}_{c}" for c in range(spec.dim) for s in ("mean", "var")]
    return Report("simulate", cfg, cols, rows, {"n_paths": n, "factor": ens.factor_id}, seed,
                  f"{grid.m} steps, head {grid.head}")


def cmd_hitprob(cfg: dict) -> Report:
    from .hitting import TargetSet, mc_hit_probability, point_hit_bound
    from .simulation import EXACT, VOLTERRA, ProcessSpec

    model = parse_model(cfg.get("model", "bm"))
    a, b = parse_window(cfg.get("window", "0.1:0.2"))
    z = parse_list(cfg.get("z", "0"))
    d = int(cfg.get("d") or len(z))
    if len(z) == 1 and d > 1:
        z = z * d
    eps = float(cfg.get("eps", 0.0))
    construction = EXACT if cfg.get("construction", "volterra") == "exact" else VOLTERRA
    spec = ProcessSpec(model, d, construction, float(cfg.get("ell", 1.0)))
    target = TargetSet.ball(z, eps) if eps > 0 else TargetSet.point(z)
    k = int(cfg.get("grid_k", 10))
    n = int(cfg.get("paths", 10000))
    seed = int(cfg["seed"])
    est = mc_hit_probability(spec, target, a, b, k, n, seed, float(cfg.get("safety", 3.0)),
                             int(cfg.get("threads", 1)))
    lo, hi = est.bracket(3.0)
    oracle = float("nan")
    if d == 1 and eps == 0 and z[0] == 0 and getattr(model, "H", None) == 0.5 and getattr(model, "beta", None) == 0:
        oracle = 1.0 - (2.0 / math.pi) * math.asin(math.sqrt(a / b))
    bound = float("nan")
    if d == 1 and eps == 0:
        try:
            bound = point_hit_bound(model, a, b, spec.ell_target, float(cfg.get("c_u", 1.0)))
        except DomainError:
            pass
    row = {"target": target.describe(), "eps": eps, "a": a, "b": b, **est.to_row(), "grid_k": k,
           "bracket_lo": lo, "bracket_hi": hi, "oracle": oracle, "point_bound": bound}
    cols = ["target", "eps", "a", "b", "p_lower", "p_upper", "ci_lower_lo", "ci_lower_hi", "ci_upper_lo",
            "ci_upper_hi", "n_paths", "grid_k", "threshold", "bracket_lo", "bracket_hi", "oracle", "point_bound"]
    summary = {"bracket_contains_oracle": bool(lo <= oracle <= hi) if math.isfinite(oracle) else None}
    return Report("hitprob", cfg, cols, [row], summary, seed, f"2^{k} window steps")


def cmd_capacity(cfg: dict) -> Report:
    from .potential.cantor import CantorSpec, cantor_points
    from .potential.capacity import ball_points, capacity_estimate, segment_points

    kernel = parse_kernel(cfg.get("kernel", "newtonian:0"))
    kind = cfg.get("set", "segment")
    n = int(cfg.get("points", 128))
    if kind == "segment":
        lo, hi = parse_window(cfg.get("interval", "0:1"))
        pts, rad = segment_points(n, lo, hi)
    elif kind == "cantor":
        spec = CantorSpec.constant(cfg.get("q", "1/3"))
        pts, rad = cantor_points(spec, int(cfg.get("level", 6)), bool(cfg.get("endpoints", False)))
    elif kind == "ball":
        z = parse_list(cfg.get("z", "0,0"))
        pts, rad = ball_points(z, float(cfg.get("eps", 0.1)), n)
    else:
        raise ValidationError(f"unknown set {kind!r}")
    res = capacity_estimate(pts, rad, kernel, float(cfg.get("tol", 1e-8)))
    rows = [{"index": i, "x": [float(v) for v in p], "cell_radius": float(r), "weight": float(w)}
            for i, (p, r, w) in enumerate(zip(pts, rad, res.equilibrium.weights))]
    summary = {"capacity": res.capacity, "energy": res.energy, "off_diagonal_energy": res.off_diagonal_energy,
               "converged": res.converged, "iterations": res.iterations, "gap": res.gap, "n_points": len(pts)}
    rep = Report("capacity", cfg, ["index", "x", "cell_radius", "weight"], rows, summary)
    if not res.converged:
        rep.summary["failure"] = "energy minimization did not converge"
    return rep


def cmd_cantor(cfg: dict) -> Report:
    from .potential.cantor import CantorSpec, cantor_capacity_series, critical_ratio, hausdorff_premeasure
    from .potential.kernels import power_log_gauge

    N = int(cfg.get("levels", 20))
    if cfg.get("corex3"):
        c, H, d = (float(p) for p in str(cfg["corex3"]).split(":"))
        spec = CantorSpec.corex3(c, H, int(d), cfg.get("variant", "corrected"))
    elif cfg.get("critical"):
        H, d = (float(p) for p in str(cfg["critical"]).split(":"))
        spec = CantorSpec.constant(critical_ratio(H, int(d)))
    else:
        spec = CantorSpec.constant(cfg.get("q", "1/3"))
    logd = spec.log_diameters(N)
    rows = [{"n": i + 1, "log_diameter": float(logd[i])} for i in range(N)]
    cols = ["n", "log_diameter"]
    summary = {"dimension": spec.dimension()}
    if cfg.get("gauge_exp") is not None:
        g = power_log_gauge(float(cfg["gauge_exp"]), float(cfg.get("gauge_log", 0.0)))
        pm = hausdorff_premeasure(spec, g, N)
        for r, s in zip(rows, pm.sequence):
            r["premeasure"] = float(s)
        cols.append("premeasure")
        summary.update(premeasure_trend=pm.trend, premeasure_exponent=pm.tail_exponent)
    if cfg.get("kernel"):
        if N < 8:
            raise ValidationError("the capacity series needs --levels >= 8")
        ser = cantor_capacity_series(spec, parse_kernel(cfg["kernel"]), N)
        for r, t, s in zip(rows, ser.terms, ser.partial_sums):
            r["term"], r["partial_sum"] = float(t), float(s)
        cols += ["term", "partial_sum"]
        summary.update(series_verdict=ser.verdict, series_tail_exponent=ser.tail_exponent)
    return Report("cantor", cfg, cols, rows, summary)


def cmd_bounds_sweep(cfg: dict) -> Report:
    from .hitting import (
        TargetSet,
        calibrate_constant,
        loglog_slope,
        mc_window_sweep,
        point_hit_bound,
        sandwich_experiment,
    )
    from .simulation import ProcessSpec

    model = parse_model(cfg.get("model", "bm"))
    seed = int(cfg["seed"])
    threads = int(cfg.get("threads", 1))
    n = int(cfg.get("paths", 10000))
    k = int(cfg.get("grid_k", 10))
    if cfg.get("kind", "ball") == "window":
        a = float(cfg.get("a", 0.2))
        z = parse_list(cfg.get("z", "0"))
        widths = sorted(parse_list(cfg.get("widths", "0.1,0.05,0.025,0.0125")), reverse=True)
        spec = ProcessSpec(model, 1, ell_target=float(cfg.get("ell", 1.0)))
        est = mc_window_sweep(spec, TargetSet.point(z), a, widths, k, n, seed, threads=threads)
        shape = {w: point_hit_bound(model, a, a + w, spec.ell_target) for w in widths}
        c_u = calibrate_constant(est[widths[0]].p_upper, shape[widths[0]])
        rows = []
        for w in widths:
            e = est[w]
            rows.append({"width": w, **e.to_row(), "grid_k": k, "midpoint": e.midpoint,
                         "bound": c_u * shape[w], "dominates": bool(c_u * shape[w] >= e.p_upper)})
        summary = {"c_u": c_u, "slope_midpoint": loglog_slope(widths, [est[w].midpoint for w in widths]),
                   "all_dominated": all(r["dominates"] for r in rows)}
        cols = ["width", "p_lower", "p_upper", "ci_lower_lo", "ci_lower_hi", "ci_upper_lo", "ci_upper_hi",
                "n_paths", "grid_k", "threshold", "midpoint", "bound", "dominates"]
        return Report("bounds-sweep", cfg, cols, rows, summary, seed, f"2^{k} steps per window")
    d = int(cfg.get("d", 3))
    a, b = parse_window(cfg.get("window", "0.1:0.2"))
    eps = parse_list(cfg["eps_list"]) if cfg.get("eps_list") else [2.0**e for e in parse_range(cfg.get("eps_exp", "-8:-3:1"))]
    rep = sandwich_experiment(ProcessSpec(model, d), a, b, eps, grid_k=k, n_paths=n, seed=seed, threads=threads)
    cols = ["target", "eps", "p_lower", "p_upper", "ci_upper_lo", "ci_upper_hi", "n_paths", "grid_k",
            "threshold", "phi", "capacity", "C_capacity"]
    summary = {"slope_p_upper": rep.slope_p_upper, "slope_phi": rep.slope_phi, "C": rep.constant_C,
               "ordering_holds": rep.ordering_holds, "case": list(rep.case)}
    return Report("bounds-sweep", cfg, cols, rep.rows, summary, seed, f"2^{k} window steps")


COMMANDS = {
    "classify": cmd_classify,
    "simulate": cmd_simulate,
    "hitprob": cmd_hitprob,
    "capacity": cmd_capacity,
    "cantor": cmd_cantor,
    "bounds-sweep": cmd_bounds_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--seed", type=int, help=f"master seed (default {DEFAULT_SEED})")
    g.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    g.add_argument("--output", help="output file (default stdout)")
    g.add_argument("--format", choices=["csv", "json"], help="output format (default csv)")
    g.add_argument("--config", help="JSON file with option values")

    p = argparse.ArgumentParser(prog="hitlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"hitlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    s = sub.add_parser("classify", parents=[common], help="polarity and bound cases over an (H, beta, d) grid")
    s.add_argument("--H")
    s.add_argument("--d")
    s.add_argument("--beta")
    s.add_argument("--beta-grid", dest="beta_grid")

    s = sub.add_parser("simulate", parents=[common], help="simulate an ensemble and report its moments")
    s.add_argument("--model")
    s.add_argument("--construction", choices=["volterra", "exact"])
    s.add_argument("--d", type=int)
    s.add_argument("--paths", type=int)
    s.add_argument("--grid-k", dest="grid_k", type=int)
    s.add_argument("--T", type=float)
    s.add_argument("--window")
    s.add_argument("--ensemble-out", dest="ensemble_out", help="write the binary ensemble here")
    s.add_argument("--ensemble-csv", dest="ensemble_csv", help="write the ensemble as long-format CSV")

    s = sub.add_parser("hitprob", parents=[common], help="Monte Carlo hitting probability of a point or ball")
    s.add_argument("--model")
    s.add_argument("--construction", choices=["volterra", "exact"])
    s.add_argument("--window")
    s.add_argument("--z")
    s.add_argument("--eps", type=float)
    s.add_argument("--d", type=int)
    s.add_argument("--paths", type=int)
    s.add_argument("--grid-k", dest="grid_k", type=int)
    s.add_argument("--safety", type=float)
    s.add_argument("--ell", type=float)
    s.add_argument("--c-u", dest="c_u", type=float)

    s = sub.add_parser("capacity", parents=[common], help="capacity estimate by energy minimization")
    s.add_argument("--set", choices=["segment", "cantor", "ball"])
    s.add_argument("--kernel")
    s.add_argument("--points", type=int)
    s.add_argument("--interval")
    s.add_argument("--q")
    s.add_argument("--level", type=int)
    s.add_argument("--endpoints", action="store_true", default=None)
    s.add_argument("--z")
    s.add_argument("--eps", type=float)
    s.add_argument("--tol", type=float)

    s = sub.add_parser("cantor", parents=[common], help="capacity series and Hausdorff premeasure of a Cantor set")
    s.add_argument("--q")
    s.add_argument("--critical", help="H:d, the ratio 2^(-1/(d-1/H))")
    s.add_argument("--corex3", help="c:H:d, the fattened critical sequence")
    s.add_argument("--variant", choices=["corrected", "literal"])
    s.add_argument("--gauge-exp", dest="gauge_exp", type=float)
    s.add_argument("--gauge-log", dest="gauge_log", type=float)
    s.add_argument("--kernel")
    s.add_argument("--levels", type=int)

    s = sub.add_parser("bounds-sweep", parents=[common], help="MC hit estimates against the closed-form bounds")
    s.add_argument("--kind", choices=["ball", "window"])
    s.add_argument("--model")
    s.add_argument("--d", type=int)
    s.add_argument("--window")
    s.add_argument("--a", type=float)
    s.add_argument("--z")
    s.add_argument("--widths")
    s.add_argument("--eps-list", dest="eps_list")
    s.add_argument("--eps-exp", dest="eps_exp")
    s.add_argument("--paths", type=int)
    s.add_argument("--grid-k", dest="grid_k", type=int)
    s.add_argument("--ell", type=float)
    return p


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults < config file < explicit flags."""
    cfg = {"seed": DEFAULT_SEED, "threads": 1, "format": "csv"}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from exc
        cfg.update({k.replace("-", "_"): v for k, v in file_cfg.items()})
    cfg.update({k: v for k, v in vars(args).items() if v is not None})
    if not 0 <= int(cfg["seed"]) < 2**64:
        raise ValidationError("seed must be an unsigned 64-bit integer")
    return cfg


def _glue_negative_values(argv: list[str], parser: argparse.ArgumentParser) -> list[str]:
    """Turn '--opt -1:1:0.25' into '--opt=-1:1:0.25' so argparse takes it as a value."""
    known = set()
    for action in parser._subparsers._group_actions[0].choices.values():
        known.update(o for a in action._actions for o in a.option_strings)
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        nxt = argv[i + 1] if i + 1 < len(argv) else None
        if tok.startswith("--") and "=" not in tok and nxt and nxt.startswith("-") and nxt not in known \
                and len(nxt) > 1 and (nxt[1].isdigit() or nxt[1] == "."):
            out.append(f"{tok}={nxt}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(_glue_negative_values(argv, parser))
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        echo = {k: v for k, v in cfg.items() if k not in _NOT_ECHOED}
        runner = COMMANDS[args.command]
        report = runner({**cfg})
        report.config = echo
        emit_report(report, cfg.get("format", "csv"), cfg.get("output"))
    except (ValidationError, DomainError, BoundNotEstablished, ValueError) as exc:
        print(f"hitlab: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, ConstructionError, ResourceError, OSError) as exc:
        print(f"hitlab: failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if report.summary.get("failure"):
        print(f"hitlab: failure: {report.summary['failure']}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
