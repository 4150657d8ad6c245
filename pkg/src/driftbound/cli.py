"""Command-line front end.

Exit codes: 0 success, 1 acceptance/gate failure, 2 configuration error,
3 certification failure.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import presets
from .config import parse_value
from .errors import CertificationError, ConfigError, DomainError
from .estimators import estimate_moments, estimate_passage_moments
from .integrator import SimulationGrid, simulate_batch
from .lyapunov import LyapunovProfile, certify_L_condition
from .model import verify_kernel_bounds
from .oracles import FORMULA_IDS, evaluate
from .reports import fmt, write_csv
from .scenarios import (OUTPUT_DIR_ENV, SCENARIO_IDS, replay, run_scenario,
                        scenario_defaults)


def _kv_pairs(items):
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError("expected key=value, got %r" % item)
        key, raw = item.split("=", 1)
        out[key.strip()] = parse_value(raw.strip())
    return out


def _out_dir(args):
    return args.out or os.environ.get(OUTPUT_DIR_ENV) or "driftbound-out"


def _build(args):
    model_kwargs = _kv_pairs(args.model)
    params_kwargs = {"p": args.p} if args.p is not None else {}
    return presets.build(args.preset, model_kwargs, params_kwargs)


def _sim_args(parser):
    parser.add_argument("--preset", required=True, choices=presets.preset_names())
    parser.add_argument("--model", action="append", metavar="KEY=VALUE",
                        help="preset model parameter override")
    parser.add_argument("--p", type=float, default=None,
                        help="moment order for the dissipativity parameters")
    parser.add_argument("--n-paths", type=int, default=1000)
    parser.add_argument("--dt", type=float, default=1e-3)
    parser.add_argument("--horizon", type=float, default=10.0)
    parser.add_argument("--x0", type=float, default=0.0)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--retain-stride", type=int, default=10)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("-o", "--out", default=None)


def _simulate(args, passage_levels=()):
    model, params = _build(args)
    grid = SimulationGrid(horizon=args.horizon, dt=args.dt,
                          retain_stride=args.retain_stride)
    x0 = np.full(model.dimension, args.x0)
    batch = simulate_batch(model, grid, x0, args.n_paths, args.seed,
                           passage_levels=passage_levels, workers=args.workers)
    return model, params, batch


def _cmd_certify(args):
    model, params = _build(args)
    kern = verify_kernel_bounds(model.kernel, params)
    status = "pass" if kern.passed else "FAIL"
    print("kernel moment constants: %s" % status)
    for note in kern.notes:
        print("  " + note)
    _, cert = certify_L_condition(model, LyapunovProfile(p=params.p), params,
                                  directions_per_radius=args.directions,
                                  rel_tol=args.rel_tol, seed=args.seed)
    print("decay certificate: %s" % ("pass" if cert.passed else "FAIL"))
    print("  C_V=%s  c_V=%s  gamma=%s  V_star=%s  worst margin=%s"
          % (fmt(cert.big_c), fmt(cert.small_c), fmt(cert.gamma),
             fmt(cert.v_star), fmt(cert.worst_margin)))
    print("  %-12s %-14s %-14s %s" % ("radius", "max_generator", "decay",
                                      "excess"))
    for radius, gen, decay, excess in cert.as_rows():
        print("  %-12s %-14s %-14s %s"
              % (fmt(radius), fmt(gen), fmt(decay), fmt(excess)))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_csv(os.path.join(args.out, "certificate.csv"),
                  ["radius", "max_generator", "decay", "excess"],
                  cert.as_rows())
    return 0 if (kern.passed and cert.passed) else 3


def _cmd_simulate(args):
    model, params, batch = _simulate(args)
    dest = _out_dir(args)
    os.makedirs(dest, exist_ok=True)
    keep = min(args.keep, batch.n_paths)
    radii = batch.radii()
    header = ["time"] + ["path%d" % i for i in range(keep)]
    rows = [tuple([t] + [radii[i, j] for i in range(keep)])
            for j, t in enumerate(batch.times)]
    path = os.path.join(dest, "paths.csv")
    write_csv(path, header, rows)
    print("wrote %s (%d paths retained of %d simulated, %d exploded)"
          % (path, keep, batch.n_paths, int(batch.exploded.sum())))
    return 0


def _cmd_moments(args):
    model, params, batch = _simulate(args)
    orders = tuple(float(q) for q in args.order)
    count = min(args.times, batch.times.size)
    idx = np.unique(np.linspace(0, batch.times.size - 1, count).astype(int))
    times = batch.times[idx]
    rep = estimate_moments(batch, times, orders)
    dest = _out_dir(args)
    os.makedirs(dest, exist_ok=True)
    header = ["time"]
    for q in orders:
        header += ["p%s_robust" % fmt(q), "p%s_robust_hw" % fmt(q),
                   "p%s_mean" % fmt(q), "p%s_mean_hw" % fmt(q)]
    rows = []
    for j, t in enumerate(rep.times):
        row = [t]
        for i in range(len(orders)):
            row += [rep.robust[i, j], rep.robust_halfwidth[i, j],
                    rep.mean[i, j], rep.mean_halfwidth[i, j]]
        rows.append(tuple(row))
    path = os.path.join(dest, "moments.csv")
    write_csv(path, header, rows)
    tail = rows[-1]
    print("wrote %s" % path)
    print("at t=%s:" % fmt(tail[0]))
    for i, q in enumerate(orders):
        print("  E|X|^%s = %s +- %s (median of means)"
              % (fmt(q), fmt(tail[1 + 4 * i]), fmt(tail[2 + 4 * i])))
    return 0


def _cmd_passage(args):
    model, params, batch = _simulate(args, passage_levels=(args.level,))
    stats = estimate_passage_moments(batch, args.level,
                                     orders=tuple(args.order or (1.0,)))
    print("passage below level %s: %d paths, censored fraction %s"
          % (fmt(args.level), stats.n_paths, fmt(stats.censored_fraction)))
    print("  quantiles: q25=%s median=%s q75=%s"
          % (fmt(stats.quantiles[0.25]), fmt(stats.quantiles[0.5]),
             fmt(stats.quantiles[0.75])))
    for q, val in sorted(stats.moments.items()):
        if val is None:
            print("  E delta^%s withheld (censoring too heavy)" % fmt(q))
        else:
            print("  E delta^%s = %s +- %s" % (fmt(q), fmt(val[0]), fmt(val[1])))
    for note in stats.notes:
        print("  note: " + note)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        tau = np.asarray(batch.passage(args.level), dtype=float)
        obs = np.sort(tau[~np.isnan(tau)])
        surv = 1.0 - np.arange(1, obs.size + 1) / tau.size
        write_csv(os.path.join(args.out, "survival.csv"),
                  ["delta", "survival"], list(zip(obs, surv)))
    return 0


def _cmd_oracle(args):
    inputs = _kv_pairs(args.input)
    if args.var is None:
        res = evaluate(args.formula, **inputs)
        print("%s = %s" % (args.formula, fmt(res.value)))
        if not res.finite:
            print("  note: value is not finite")
        if res.ill_conditioned:
            print("  note: near a balance boundary, value is ill conditioned")
        return 0
    if args.max <= args.min or args.count < 2:
        raise ConfigError("grid needs min < max and count >= 2")
    grid = (np.geomspace(args.min, args.max, args.count) if args.log
            else np.linspace(args.min, args.max, args.count))
    rows = []
    for v in grid:
        res = evaluate(args.formula, **{**inputs, args.var: float(v)})
        rows.append((float(v), res.value))
    dest = _out_dir(args)
    os.makedirs(dest, exist_ok=True)
    path = os.path.join(dest, "oracle.csv")
    write_csv(path, [args.var, args.formula], rows)
    print("wrote %s (%d points)" % (path, len(rows)))
    return 0


def _cmd_run(args):
    overrides = _kv_pairs(args.set)
    result = run_scenario(args.scenario, overrides=overrides,
                          out_dir=args.out, workers=args.workers,
                          waive_certify=args.waive_certify)
    summary = os.path.join(result.out_dir, "summary.txt")
    if os.path.exists(summary):
        with open(summary, "r", encoding="utf-8") as fh:
            sys.stdout.write(fh.read())
    return result.exit_code


def _cmd_replay(args):
    rep = replay(args.manifest, out_dir=args.out, workers=args.workers)
    if rep.matched:
        print("replay of %s matched all %d outputs"
              % (rep.scenario, len(rep.result.outputs)))
        return 0
    for name in rep.mismatched:
        print("MISMATCH %s" % name)
    for name in rep.missing:
        print("MISSING %s" % name)
    for name in rep.extra:
        print("EXTRA %s" % name)
    return 1


def _cmd_defaults(args):
    cfg = scenario_defaults(args.scenario)
    for key in sorted(cfg):
        val = cfg[key]
        if isinstance(val, (list, tuple)):
            val = ", ".join(fmt(v) if isinstance(v, float) else str(v)
                            for v in val)
        print("%s = %s" % (key, val))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="driftbound",
        description="simulation and certification toolkit for dissipative "
                    "jump models")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify", help="verify kernel constants and fit a "
                                       "decay certificate")
    p.add_argument("--preset", required=True, choices=presets.preset_names())
    p.add_argument("--model", action="append", metavar="KEY=VALUE")
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--directions", type=int, default=16)
    p.add_argument("--rel-tol", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("simulate", help="simulate a batch and dump sample "
                                        "paths")
    _sim_args(p)
    p.add_argument("--keep", type=int, default=8,
                   help="number of paths written to CSV")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("moments", help="simulate and estimate moment curves")
    _sim_args(p)
    p.add_argument("--order", action="append", type=float, required=True)
    p.add_argument("--times", type=int, default=101)
    p.set_defaults(func=_cmd_moments)

    p = sub.add_parser("passage", help="simulate and summarize passage times")
    _sim_args(p)
    p.add_argument("--level", type=float, required=True)
    p.add_argument("--order", action="append", type=float)
    p.set_defaults(func=_cmd_passage)

    p = sub.add_parser("oracle", help="evaluate a closed-form reference "
                                      "formula")
    p.add_argument("--formula", required=True, choices=FORMULA_IDS)
    p.add_argument("--input", action="append", metavar="KEY=VALUE")
    p.add_argument("--var", default=None,
                   help="sweep this input over a grid instead of one value")
    p.add_argument("--min", type=float, default=1.0)
    p.add_argument("--max", type=float, default=100.0)
    p.add_argument("--count", type=int, default=25)
    p.add_argument("--log", action="store_true")
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("run", help="run a named scenario end to end")
    p.add_argument("scenario", choices=SCENARIO_IDS)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a scenario config entry")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--waive-certify", action="store_true",
                   help="skip the certification precondition (recorded in "
                        "the manifest)")
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("replay", help="re-run a manifest and compare output "
                                      "hashes")
    p.add_argument("manifest")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("defaults", help="print a scenario's full default "
                                        "configuration")
    p.add_argument("scenario", choices=SCENARIO_IDS)
    p.set_defaults(func=_cmd_defaults)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except (CertificationError, DomainError) as exc:
        print("certification error: %s" % exc, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
