"""Command-line front end: ``adra analyze|simulate|optimize|sweep``.

Single results are printed as JSON, sweeps as CSV.  Exit codes: 0 success,
2 usage or config error, 3 model error (degenerate chain, no convergence,
no finite grid point).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from .analytic import DegenerateChain, NonConvergence, analyze, fixed_point_candidates
from .model import ADAPTIVE, ConfigError, FixedPolicy, ProtocolConfig, parse_policy, validate_config
from .optimizer import DEFAULT_P_GRID, AllDegenerate, aoi_curve, compare, default_delta_max
from .simulator import DEFAULT_RUNS, SimConfig, match_simulation, run_replicated

EXIT_OK, EXIT_USAGE, EXIT_MODEL = 0, 2, 3
CSV_HEADER = ["variable", "value", "policy", "analytic_aoi", "sim_aoi", "sim_stderr"]
POLICY_CLASSES = ("fixed-optimal", "adaptive", "aira-fixed-optimal", "aira-adaptive")


class UsageError(Exception):
    pass


def fmt(x):
    """Twelve significant digits; ``NaN`` for missing model values."""
    if x is None:
        return ""
    if isinstance(x, float) and math.isnan(x):
        return "NaN"
    return f"{x:.12g}"


def _num(x):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return None
    return float(f"{x:.12g}")


def parse_values(text):
    """``a:b:step`` (inclusive of ``b`` when hit) or ``v1,v2,...``; must be strictly increasing."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [int(v) for v in text.split(":")]
            if len(parts) != 3 or parts[2] <= 0:
                raise ValueError
            values = list(range(parts[0], parts[1] + 1, parts[2]))
        else:
            values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad --values {text!r}") from None
    if not values:
        raise UsageError("--values is empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise UsageError("--values must be strictly increasing")
    return values


def parse_p_grid(text):
    if text is None:
        return list(DEFAULT_P_GRID)
    try:
        grid = sorted(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"bad --p-grid {text!r}") from None
    if not grid or not all(0.0 < p <= 1.0 for p in grid):
        raise UsageError("--p-grid needs probabilities in (0, 1]")
    return grid


def resolve_config(args):
    """Merge ``--config`` with the individual flags (flags win) and validate."""
    data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError([("bad_config", f"cannot read {args.config}: {exc}")]) from None
        ProtocolConfig.from_dict(data)
    if args.devices is not None:
        data["n_devices"] = args.devices
    if args.period is not None:
        data["frame_len"] = args.period
    if args.threshold is not None:
        data["age_threshold"] = args.threshold
    data.setdefault("age_threshold", 0)
    if args.policy is not None:
        try:
            policy = parse_policy(args.policy)
        except ValueError as exc:
            raise ConfigError([("bad_policy", str(exc))]) from None
        data["policy"] = "adaptive" if policy == ADAPTIVE else {"fixed": policy.p}
    data.setdefault("policy", "adaptive")
    return ProtocolConfig.from_dict(data)


def _sim_config(args, protocol):
    return SimConfig(protocol, args.slots, args.warmup, args.seed, args.runs).validate()


def _sim_record(report):
    return {
        "per_run_aoi": [_num(a) for a in report.per_run_aoi],
        "mean_aoi": _num(report.mean_aoi),
        "std_err": _num(report.std_err),
        "success_rate": _num(report.success_rate),
    }


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_analyze(args):
    config = resolve_config(args)
    record = {"config": config.to_dict(resolved=True)}
    try:
        sol = analyze(config)
    except (DegenerateChain, NonConvergence) as exc:
        record["error"] = type(exc).__name__
        record["message"] = str(exc)
        return EXIT_MODEL, record
    candidates = fixed_point_candidates(config)
    if args.match_sim:
        matched = match_simulation(_sim_config(args, config))
        sol = matched.solution
        record["simulation"] = {"mean_aoi": _num(matched.report.mean_aoi), "std_err": _num(matched.report.std_err)}
    record.update(
        beta_lambda=_num(sol.steady.beta_lambda),
        beta_lambda_plus=_num(sol.steady.beta_lambda_plus),
        avg_aoi=_num(sol.avg_aoi),
        iterations=sol.iterations,
        residual=_num(sol.residual),
        fixed_points=[
            {
                "beta_lambda": _num(c.steady.beta_lambda),
                "beta_lambda_plus": _num(c.steady.beta_lambda_plus),
                "avg_aoi": _num(c.avg_aoi),
            }
            for c in candidates
        ],
    )
    return EXIT_OK, record


def cmd_simulate(args):
    config = resolve_config(args)
    sim = _sim_config(args, config)
    report = run_replicated(sim)
    record = {
        "config": config.to_dict(resolved=True),
        "horizon_slots": sim.horizon_slots,
        "warmup_slots": sim.warmup,
        "runs": sim.runs,
        "seed": sim.seed,
    }
    record.update(_sim_record(report))
    return EXIT_OK, record


def cmd_optimize(args):
    config = resolve_config(args)
    p_grid = parse_p_grid(args.p_grid)
    delta_max = args.delta_max if args.delta_max is not None else default_delta_max(config)
    if delta_max < 0:
        raise UsageError("--delta-max must be >= 0")
    record = {
        "config": config.to_dict(resolved=True),
        "policy_class": "adaptive" if config.adaptive else "fixed-optimal",
        "delta_max": delta_max,
    }
    try:
        result = compare(config, delta_max, p_grid, args.skip_multistable)
    except AllDegenerate as exc:
        record["error"] = "AllDegenerate"
        record["message"] = str(exc)
        return EXIT_MODEL, record
    adra = result.adra
    record.update(
        best_delta=adra.best_delta,
        best_p=_num(adra.best_p),
        best_aoi=_num(adra.best_aoi),
        aira={"delta": 0, "p": _num(result.aira.p), "aoi": _num(result.aira.aoi)},
        improvement=_num(result.improvement),
        curve_csv=args.out,
    )
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["delta", "p", "aoi"])
            for pt in adra.curve:
                writer.writerow([pt.delta, "adaptive" if pt.p is None else fmt(pt.p), fmt(pt.aoi)])
    return EXIT_OK, record


def _point_for_class(template, policy_class, p_grid, delta_max, optimize_threshold, skip_multistable=False):
    """Analytic AoI and the ``(delta, policy)`` achieving it for one sweep point."""
    adaptive = policy_class.endswith("adaptive")
    if policy_class.startswith("aira"):
        deltas = np.array([0])
    elif optimize_threshold:
        dmax = default_delta_max(template) if delta_max is None else delta_max
        deltas = np.arange(dmax + 1)
    else:
        deltas = np.array([template.age_threshold])
    policies = [ADAPTIVE] if adaptive else [FixedPolicy(p) for p in p_grid]
    best = (math.nan, None, None)
    for policy in policies:
        aoi = aoi_curve(template.replace(policy=policy), deltas, skip_multistable)
        if np.all(np.isnan(aoi)):
            continue
        i = int(np.nanargmin(aoi))
        if math.isnan(best[0]) or aoi[i] < best[0]:
            best = (float(aoi[i]), int(deltas[i]), policy)
    return best


def cmd_sweep(args):
    values = parse_values(args.values)
    classes = [c.strip() for c in args.classes.split(",") if c.strip()]
    bad = [c for c in classes if c not in POLICY_CLASSES]
    if bad or not classes:
        raise UsageError(f"--classes must be drawn from {', '.join(POLICY_CLASSES)}")
    if args.var == "threshold" and any(c.startswith("aira") for c in classes):
        raise UsageError("aira classes fix the threshold at 0 and cannot sweep it")
    p_grid = parse_p_grid(args.p_grid)
    base = resolve_config(args)
    rows = []
    for value in values:
        if args.var == "threshold":
            template = base.replace(age_threshold=value)
        elif args.var == "period":
            template = base.replace(frame_len=value)
        else:
            template = base.replace(n_devices=value)
        validate_config(template)
        for policy_class in classes:
            aoi, delta, policy = _point_for_class(
                template, policy_class, p_grid, args.delta_max, args.var != "threshold", args.skip_multistable
            )
            sim_aoi = sim_err = None
            if args.with_sim and policy is not None:
                report = run_replicated(_sim_config(args, template.replace(age_threshold=delta, policy=policy)))
                sim_aoi, sim_err = report.mean_aoi, report.std_err
            rows.append([args.var, value, policy_class, fmt(aoi), fmt(sim_aoi), fmt(sim_err)])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    writer.writerows(rows)
    return EXIT_OK, buf.getvalue()


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config with n_devices, frame_len, age_threshold, policy")
    common.add_argument("--devices", "-n", type=int)
    common.add_argument("--period", "-d", type=int)
    common.add_argument("--threshold", type=int)
    common.add_argument("--policy", help="fixed:<p> or adaptive")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--slots", type=int, help="slots per run (default 10^6 rounded down to whole frames)")
    sim.add_argument("--runs", type=int, default=DEFAULT_RUNS)
    sim.add_argument("--warmup", type=int, help="discarded slots (default 100 frames)")
    sim.add_argument("--seed", type=int, default=0)

    search = argparse.ArgumentParser(add_help=False)
    search.add_argument("--delta-max", type=int)
    search.add_argument("--p-grid", help="comma-separated fixed transmit probabilities")
    search.add_argument(
        "--skip-multistable", action="store_true", help="ignore points that also admit a congested fixed point"
    )

    parser = argparse.ArgumentParser(prog="adra", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    ana = sub.add_parser("analyze", parents=[common, sim], help="analytic average AoI")
    ana.add_argument(
        "--match-sim", action="store_true", help="report the fixed point closest to a simulation (uses the sim flags)"
    )
    sub.add_parser("simulate", parents=[common, sim], help="Monte-Carlo average AoI")
    opt = sub.add_parser("optimize", parents=[common, search], help="optimal threshold vs AIRA")
    opt.add_argument("--out", help="write the search curve as CSV here")
    sw = sub.add_parser("sweep", parents=[common, sim, search], help="CSV sweep over one variable")
    sw.add_argument("--var", choices=["threshold", "period", "devices"], required=True)
    sw.add_argument("--values", required=True, help="a:b:step or v1,v2,...")
    sw.add_argument("--classes", default="fixed-optimal,adaptive", help=f"subset of {','.join(POLICY_CLASSES)}")
    sw.add_argument("--with-sim", action="store_true")
    sw.add_argument("--out", help="write the CSV here instead of stdout")
    return parser


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "optimize": cmd_optimize, "sweep": cmd_sweep}


def main(argv=None, stdout=None):
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        code, result = COMMANDS[args.command](args)
    except ConfigError as exc:
        json.dump({"error": "ConfigError", "codes": exc.codes, "message": str(exc)}, stdout)
        stdout.write("\n")
        return EXIT_USAGE
    except UsageError as exc:
        print(f"adra: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if isinstance(result, str):
        if getattr(args, "out", None):
            with open(args.out, "w", newline="") as fh:
                fh.write(result)
        else:
            stdout.write(result)
    else:
        json.dump(result, stdout, indent=2)
        stdout.write("\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
