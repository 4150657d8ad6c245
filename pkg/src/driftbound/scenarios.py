"""Named end-to-end experiments with deterministic, replayable artifacts.

A scenario binds a preset model, a simulation budget, and estimator gates
that check registry claims, then writes CSV data, SVG figures, a
line-per-gate summary, and a manifest.  `replay` re-runs a manifest and
compares output hashes, so every emitted number is reproducible from the
manifest alone.

Exit codes: 0 all gates pass, 1 gate failure, 3 certification failure
(config problems raise ConfigError, which the CLI maps to 2).
"""
from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import t as student_t

from . import presets
from .config import format_config
from .errors import CertificationError, ConfigError, DomainError
from .estimators import (_Z95, divergence_trend_test, estimate_cesaro,
                         estimate_moments, estimate_passage_moments,
                         estimate_windowed_averages, intervals_overlap,
                         sup_moment_trend, trailing_windows)
from .integrator import SimulationGrid, simulate_batch
from .lyapunov import LyapunovProfile, certify_L_condition
from .model import CLAIMS, verify_dissipativity, verify_kernel_bounds
from .oracles import evaluate, storage_tail_lower_bound, diffusion_stationary_moment
from .reports import (file_sha256, fmt, read_manifest, svg_line_plot,
                      write_csv, write_manifest, write_text)
from .rng import GENERATOR_NAME

OUTPUT_DIR_ENV = "DRIFTBOUND_OUT"

SCENARIO_IDS = (
    "sublinear-moments",
    "linear-exponential-passage",
    "superlinear-uniform",
    "superlinear-passage",
    "storage-optimality",
    "diffusion-critical",
    "lorenz84",
    "lyapunov-certify",
    "oracle-dump",
)


@dataclass
class GateResult:
    name: str
    claim: str              # id in the claims registry
    passed: bool
    detail: str


@dataclass
class ScenarioResult:
    scenario: str
    exit_code: int
    gates: list
    outputs: dict           # artifact name -> sha256
    out_dir: str
    manifest_path: str | None
    config: dict
    certificate: object = None
    waived: bool = False

    @property
    def passed(self):
        return self.exit_code == 0


@dataclass
class ReplayResult:
    scenario: str
    manifest_path: str
    matched: bool
    mismatched: list
    missing: list
    extra: list
    result: ScenarioResult


# ---- defaults -----------------------------------------------------------

_CERTIFY_KEYS = {
    "certify.directions": 16,
    "certify.rel_tol": 1e-6,
    "certify.seed": 0,
}

_STORAGE_MODEL = {
    "model.preset": "storage",
    "model.kappa": 0.0,
    "model.alpha": 2.5,
    "model.compensated": True,
    "params.p": 1.4,
}

_DEFAULTS = {
    "sublinear-moments": {
        **_STORAGE_MODEL, **_CERTIFY_KEYS,
        "sim.n_paths": 10000,
        "sim.dt": 1e-3,
        "sim.horizon": 100.0,
        "sim.x0": 0.0,
        "sim.seed": 1101,
        "sim.retain_stride": 100,
        "est.bounded_orders": [0.5, 1.0, 1.4],
        "est.divergent_order": 1.6,
        "est.burn_in": 20.0,
        "est.tail_times": [10.0, 50.0],
        "est.tail_levels": [5.0, 20.0],
        "est.slope_tol": 0.02,
        "est.n_boot": 400,
        "est.seed": 7,
    },
    "storage-optimality": {
        **_STORAGE_MODEL, **_CERTIFY_KEYS,
        "sim.n_paths": 4000,
        "sim.dt": 1e-2,
        "sim.horizon": 50.0,
        "sim.x0": 0.0,
        "sim.seed": 1501,
        "sim.retain_stride": 10,
        "est.tail_times": [10.0, 50.0],
        "est.level_min": 2.0,
        "est.level_max": 40.0,
        "est.level_count": 9,
        "est.divergent_order": 1.6,
        "est.burn_in": 10.0,
        "est.slope_tol": 0.02,
        "est.n_boot": 400,
        "est.seed": 7,
    },
    "linear-exponential-passage": {
        "model.preset": "linear_ou",
        "model.beta": 1.0,
        "model.alpha": 2.0,
        "model.scale": 1.0,
        **_CERTIFY_KEYS,
        "sim.n_paths": 4000,
        "sim.dt": 1e-2,
        "sim.horizon": 30.0,
        "sim.x0": 50.0,
        "sim.seed": 1201,
        "sim.retain_stride": 10,
        "est.level": 5.0,
        "est.min_rate": 0.5,
        "est.fit_upper": 0.5,       # survival range used for the tail fit
        "est.fit_lower": 0.02,
        "est.max_censoring": 0.05,
    },
    "superlinear-uniform": {
        "model.preset": "superlinear",
        "model.kappa": 3.0,
        "model.alpha": 2.5,
        "model.beta": 1.0,
        "params.p": 2.4,
        **_CERTIFY_KEYS,
        "sim.n_paths": 4000,
        "sim.dt": 1e-3,
        "sim.horizon": 20.0,
        "sim.x0_list": [1e2, 1e4, 1e6],
        "sim.seed": 1301,
        "sim.retain_stride": 100,
        "est.order": 2.0,
        "est.t_start": 1.0,
        "est.t_step": 1.0,
    },
    "superlinear-passage": {
        "model.preset": "superlinear",
        "model.kappa": 3.0,
        "model.alpha": 2.5,
        "model.beta": 1.0,
        "params.p": 2.4,
        **_CERTIFY_KEYS,
        "sim.n_paths": 4000,
        "sim.dt": 1e-5,
        "sim.horizon": 0.1,
        "sim.x0": 1e6,
        "sim.seed": 1401,
        "sim.retain_stride": 100,
        "est.level": 10.0,
        "est.bound_multiple": 8.0,
        "est.max_tail_prob": 0.05,
        "est.median_factor": 2.0,
    },
    "diffusion-critical": {
        "model.preset": "gradient_diffusion",
        "model.beta": 2.0,
        "model.sigma_sq": 1.0,
        "params.p": 3.0,
        **_CERTIFY_KEYS,
        "sim.n_paths": 1000,
        "sim.dt": 1e-2,
        "sim.horizon": 1000.0,
        "sim.x0": "stationary",
        "sim.seed": 1602,
        "sim.retain_stride": 100,
        "est.match_order": 2.0,
        "est.divergent_order": 3.2,
        "est.burn_in": 200.0,
        "est.slope_tol": 0.02,
        "est.n_boot": 400,
        "est.seed": 7,
    },
    "lorenz84": {
        "model.preset": "lorenz84",
        "model.a": 0.25,
        "model.b": 4.0,
        "model.c": 1.0,
        "model.gamma_exp": 0.0,
        "model.alpha": 1.5,
        "model.eps": 0.1,
        "params.p": 1.45,
        **_CERTIFY_KEYS,
        "sim.n_paths": 2000,
        "sim.dt": 1e-3,
        "sim.horizon": 50.0,
        "sim.x0": 0.0,
        "sim.seed": 1701,
        "sim.retain_stride": 50,
        "est.order": 1.35,
        "est.n_boot": 400,
        "est.seed": 7,
    },
    "lyapunov-certify": {
        **_STORAGE_MODEL, **_CERTIFY_KEYS,
    },
    "oracle-dump": {
        "oracle.formula": "f_inf",
        "oracle.alpha": 2.0,
        "oracle.kappa": 0.0,
        "grid.var": "level",
        "grid.min": 2.0,
        "grid.max": 100.0,
        "grid.count": 25,
        "grid.log": True,
        "plot.logy": True,
    },
}

# which registry claims each scenario exercises, for the summary header
_SCENARIO_CLAIMS = {
    "sublinear-moments": ("uniform-moment-bound", "moment-order-optimality",
                          "storage-tail-lower-bound"),
    "storage-optimality": ("storage-tail-lower-bound", "moment-order-optimality"),
    "linear-exponential-passage": ("passage-time-exponential",),
    "superlinear-uniform": ("uniform-in-x0-bound",),
    "superlinear-passage": ("superlinear-passage-time", "relaxation-time-scale"),
    "diffusion-critical": ("stationary-moment-threshold",),
    "lorenz84": ("drift-dissipativity", "uniform-moment-bound"),
    "lyapunov-certify": ("kernel-moment-bounds", "lyapunov-drift-condition"),
    "oracle-dump": (),
}


def scenario_defaults(scenario):
    """A copy of the scenario's full default configuration."""
    if scenario not in _DEFAULTS:
        raise ConfigError("unknown scenario %r; known: %s"
                          % (scenario, ", ".join(SCENARIO_IDS)))
    return dict(_DEFAULTS[scenario])


def _resolve_config(scenario, overrides):
    cfg = scenario_defaults(scenario)
    # oracle-dump formulas differ in their required inputs, so extra
    # oracle.* keys are accepted there and passed through
    open_prefix = "oracle." if scenario == "oracle-dump" else None
    for key, value in (overrides or {}).items():
        if key not in cfg and not (open_prefix and key.startswith(open_prefix)):
            raise ConfigError("scenario %s has no option %r" % (scenario, key))
        cfg[key] = value
    return cfg


def _as_list(value):
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(value)]


def _build_model(cfg):
    preset = cfg["model.preset"]
    model_kwargs = {k.split(".", 1)[1]: v for k, v in cfg.items()
                    if k.startswith("model.") and k != "model.preset"}
    params_kwargs = {"p": float(cfg["params.p"])} if "params.p" in cfg else {}
    return presets.build(preset, model_kwargs, params_kwargs)


def _grid(cfg):
    return SimulationGrid(horizon=float(cfg["sim.horizon"]),
                          dt=float(cfg["sim.dt"]),
                          retain_stride=int(cfg["sim.retain_stride"]))


def _x0_vector(cfg, dimension, key="sim.x0"):
    raw = cfg[key]
    arr = np.asarray(raw, dtype=float).reshape(-1)
    if arr.size == 1:
        return np.full(dimension, float(arr[0]))
    if arr.size != dimension:
        raise ConfigError("%s has %d entries for a %d-dimensional model"
                          % (key, arr.size, dimension))
    return arr


def _time_index(batch, t):
    i = int(np.argmin(np.abs(batch.times - t)))
    spacing = float(batch.times[1] - batch.times[0]) if batch.times.size > 1 else 0.0
    if spacing and abs(float(batch.times[i]) - t) > 0.51 * spacing:
        raise DomainError("time %g not on the retained grid" % t)
    return i


def _curve_times(batch, max_points=201):
    idx = np.unique(np.linspace(0, batch.times.size - 1, max_points).astype(int))
    return batch.times[idx]


def _batch_lines(batch):
    return ["paths: %d, exploded: %d, truncated: %d"
            % (batch.n_paths, int(batch.exploded.sum()),
               int(np.isfinite(batch.truncated_at).sum()))]


# ---- per-scenario runners ----------------------------------------------

def _run_sublinear_moments(cfg, model, params, dest, workers, outputs):
    batch = simulate_batch(model, _grid(cfg), _x0_vector(cfg, model.dimension),
                           int(cfg["sim.n_paths"]), int(cfg["sim.seed"]),
                           workers=workers)
    n_boot = int(cfg["est.n_boot"])
    eseed = int(cfg["est.seed"])
    gates = []

    orders = _as_list(cfg["est.bounded_orders"])
    trend_rows = []
    for i, q in enumerate(orders):
        tr = sup_moment_trend(batch, q, n_boot=n_boot, seed=eseed + i)
        ok = tr.ci_low <= 0.0 <= tr.ci_high
        gates.append(GateResult(
            "sup-trend-p%s" % fmt(q), "uniform-moment-bound", ok,
            "slope %s per window step, CI [%s, %s]"
            % (fmt(tr.slope), fmt(tr.ci_low), fmt(tr.ci_high))))
        for (w0, w1), v in zip(tr.windows, tr.values):
            trend_rows.append((q, w0, w1, v, tr.slope, tr.ci_low, tr.ci_high))
    outputs["sup_trend.csv"] = write_csv(
        os.path.join(dest, "sup_trend.csv"),
        ["order", "win_start", "win_end", "sup_stat", "slope", "ci_low",
         "ci_high"],
        trend_rows)

    qd = float(cfg["est.divergent_order"])
    wins = trailing_windows(float(cfg["sim.horizon"]), float(cfg["est.burn_in"]))
    wrep = estimate_windowed_averages(batch, qd, wins)
    verdict = divergence_trend_test(wrep, slope_tol=float(cfg["est.slope_tol"]),
                                    n_boot=n_boot, seed=eseed + 100)
    gates.append(GateResult(
        "window-growth-q%s" % fmt(qd), "moment-order-optimality",
        verdict.verdict == "growing",
        "verdict %s, slope CI [%s, %s], tolerance %s"
        % (verdict.verdict, fmt(verdict.ci_low), fmt(verdict.ci_high),
           fmt(verdict.slope_tol))))
    outputs["windowed.csv"] = write_csv(
        os.path.join(dest, "windowed.csv"),
        ["order", "window", "median", "median_halfwidth", "mean",
         "mean_halfwidth"],
        [(qd, w, m, mh, mn, mnh) for w, m, mh, mn, mnh in
         zip(wrep.windows, wrep.medians, wrep.median_halfwidth,
             wrep.means, wrep.mean_halfwidth)])

    keep = ~batch.exploded
    n = int(keep.sum())
    alpha = model.kernel.tail_exponent
    kappa = float(cfg["model.kappa"])
    tail_rows = []
    tail_ok = True
    worst = ""
    for t in _as_list(cfg["est.tail_times"]):
        xs = batch.states[keep, _time_index(batch, t), 0]
        for level in _as_list(cfg["est.tail_levels"]):
            p_hat = float((xs > level).mean())
            se = math.sqrt(max(p_hat * (1.0 - p_hat), 1e-12) / n)
            bound = storage_tail_lower_bound(alpha, kappa, t, level)
            ok = p_hat >= bound - 3.0 * se
            tail_rows.append((t, level, p_hat, se, bound, int(ok)))
            if not ok and not worst:
                worst = " first failure at t=%s level=%s" % (fmt(t), fmt(level))
            tail_ok = tail_ok and ok
    gates.append(GateResult(
        "tail-lower-bound", "storage-tail-lower-bound", tail_ok,
        "%d/%d cells dominate the oracle minus 3 s.e.%s"
        % (sum(r[-1] for r in tail_rows), len(tail_rows), worst)))
    outputs["tail_cells.csv"] = write_csv(
        os.path.join(dest, "tail_cells.csv"),
        ["time", "level", "prob", "se", "oracle_bound", "dominates"],
        tail_rows)

    times = _curve_times(batch)
    mrep = estimate_moments(batch, times, tuple(orders))
    curve_rows = []
    for j, t in enumerate(mrep.times):
        row = [t]
        for i in range(len(orders)):
            row += [mrep.robust[i, j], mrep.robust_halfwidth[i, j],
                    mrep.mean[i, j], mrep.mean_halfwidth[i, j]]
        curve_rows.append(tuple(row))
    headers = ["time"]
    for q in orders:
        base = "p%s" % fmt(q)
        headers += [base + "_robust", base + "_robust_hw",
                    base + "_mean", base + "_mean_hw"]
    outputs["moment_curve.csv"] = write_csv(
        os.path.join(dest, "moment_curve.csv"), headers, curve_rows)

    series = [("p=%s" % fmt(q), mrep.times, mrep.robust[i])
              for i, q in enumerate(orders)]
    bands = [("p=%s band" % fmt(q), mrep.times,
              mrep.robust[i] - mrep.robust_halfwidth[i],
              mrep.robust[i] + mrep.robust_halfwidth[i])
             for i, q in enumerate(orders)]
    svg_line_plot(os.path.join(dest, "moment_curve.svg"), series,
                  title="moment estimates over time", xlabel="t",
                  ylabel="median-of-means |X|^p", bands=bands)
    outputs["moment_curve.svg"] = file_sha256(os.path.join(dest, "moment_curve.svg"))

    svg_line_plot(os.path.join(dest, "window_growth.svg"),
                  [("q=%s" % fmt(qd), np.asarray(wrep.windows), wrep.medians)],
                  title="trailing-window averages", xlabel="window length",
                  ylabel="median path average", logx=True, logy=True,
                  bands=[("band", np.asarray(wrep.windows),
                          wrep.medians - wrep.median_halfwidth,
                          wrep.medians + wrep.median_halfwidth)])
    outputs["window_growth.svg"] = file_sha256(os.path.join(dest, "window_growth.svg"))
    return gates, _batch_lines(batch)


def _run_storage_optimality(cfg, model, params, dest, workers, outputs):
    batch = simulate_batch(model, _grid(cfg), _x0_vector(cfg, model.dimension),
                           int(cfg["sim.n_paths"]), int(cfg["sim.seed"]),
                           workers=workers)
    gates = []
    keep = ~batch.exploded
    n = int(keep.sum())
    alpha = model.kernel.tail_exponent
    kappa = float(cfg["model.kappa"])
    levels = np.geomspace(float(cfg["est.level_min"]),
                          float(cfg["est.level_max"]),
                          int(cfg["est.level_count"]))
    rows = []
    all_ok = True
    worst = ""
    curves = {}
    for t in _as_list(cfg["est.tail_times"]):
        xs = batch.states[keep, _time_index(batch, t), 0]
        emp = np.array([(xs > lv).mean() for lv in levels])
        ses = np.sqrt(np.maximum(emp * (1.0 - emp), 1e-12) / n)
        oracle = np.array([storage_tail_lower_bound(alpha, kappa, t, lv)
                           for lv in levels])
        ok_cells = emp >= oracle - 3.0 * ses
        for lv, p_hat, se, bd, ok in zip(levels, emp, ses, oracle, ok_cells):
            rows.append((t, lv, p_hat, se, bd, int(ok)))
            if not ok and not worst:
                worst = " first failure at t=%s level=%s" % (fmt(t), fmt(lv))
        all_ok = all_ok and bool(ok_cells.all())
        curves[t] = (emp, oracle)
    gates.append(GateResult(
        "tail-domination", "storage-tail-lower-bound", all_ok,
        "%d/%d grid cells dominate the oracle minus 3 s.e.%s"
        % (sum(r[-1] for r in rows), len(rows), worst)))
    outputs["tail_curve.csv"] = write_csv(
        os.path.join(dest, "tail_curve.csv"),
        ["time", "level", "prob", "se", "oracle_bound", "dominates"], rows)

    qd = float(cfg["est.divergent_order"])
    wins = trailing_windows(float(cfg["sim.horizon"]), float(cfg["est.burn_in"]))
    wrep = estimate_windowed_averages(batch, qd, wins)
    verdict = divergence_trend_test(wrep, slope_tol=float(cfg["est.slope_tol"]),
                                    n_boot=int(cfg["est.n_boot"]),
                                    seed=int(cfg["est.seed"]) + 100)
    gates.append(GateResult(
        "window-growth-q%s" % fmt(qd), "moment-order-optimality",
        verdict.verdict == "growing",
        "verdict %s, slope CI [%s, %s], tolerance %s"
        % (verdict.verdict, fmt(verdict.ci_low), fmt(verdict.ci_high),
           fmt(verdict.slope_tol))))
    outputs["windowed.csv"] = write_csv(
        os.path.join(dest, "windowed.csv"),
        ["order", "window", "median", "median_halfwidth", "mean",
         "mean_halfwidth"],
        [(qd, w, m, mh, mn, mnh) for w, m, mh, mn, mnh in
         zip(wrep.windows, wrep.medians, wrep.median_halfwidth,
             wrep.means, wrep.mean_halfwidth)])

    series = []
    bands = []
    for t, (emp, oracle) in sorted(curves.items()):
        series.append(("empirical t=%s" % fmt(t), levels, emp))
        series.append(("bound t=%s" % fmt(t), levels, oracle))
        # shade the domination margin between the bound and the estimate
        bands.append(("margin t=%s" % fmt(t), levels, oracle,
                      np.maximum(emp, oracle)))
    svg_line_plot(os.path.join(dest, "tail_overlay.svg"), series,
                  title="tail probability vs oracle lower bound",
                  xlabel="level", ylabel="P(X_t > level)",
                  logx=True, logy=True, bands=bands)
    outputs["tail_overlay.svg"] = file_sha256(os.path.join(dest, "tail_overlay.svg"))
    return gates, _batch_lines(batch)


def _run_linear_exponential_passage(cfg, model, params, dest, workers, outputs):
    level = float(cfg["est.level"])
    batch = simulate_batch(model, _grid(cfg), _x0_vector(cfg, model.dimension),
                           int(cfg["sim.n_paths"]), int(cfg["sim.seed"]),
                           passage_levels=(level,), workers=workers)
    gates = []
    tau = np.asarray(batch.passage(level), dtype=float)
    n = tau.size
    censored = np.isnan(tau)
    frac = float(censored.mean())
    max_c = float(cfg["est.max_censoring"])
    gates.append(GateResult(
        "passage-censoring", "passage-time-exponential", frac < max_c,
        "censored %s of %d paths (limit %s)" % (fmt(frac), n, fmt(max_c))))

    obs = np.sort(tau[~censored])
    surv = 1.0 - (np.arange(1, obs.size + 1)) / n
    lo, hi = float(cfg["est.fit_lower"]), float(cfg["est.fit_upper"])
    sel = (surv >= lo) & (surv <= hi)
    if sel.sum() >= 8:
        ts = obs[sel]
        ls = np.log(surv[sel])
        a = np.vstack([ts, np.ones_like(ts)]).T
        coef, *_ = np.linalg.lstsq(a, ls, rcond=None)
        rate = -float(coef[0])
    else:
        rate = math.nan
    min_rate = float(cfg["est.min_rate"])
    gates.append(GateResult(
        "exp-tail-rate", "passage-time-exponential",
        bool(rate >= min_rate),
        "fitted tail rate %s over survival [%s, %s] (needs >= %s)"
        % (fmt(rate), fmt(lo), fmt(hi), fmt(min_rate))))

    outputs["survival.csv"] = write_csv(
        os.path.join(dest, "survival.csv"), ["delta", "survival"],
        list(zip(obs, surv)))
    stats = estimate_passage_moments(batch, level, orders=(1.0, 2.0))
    m1 = stats.moments[1.0] or (math.nan, math.nan)
    outputs["passage_stats.csv"] = write_csv(
        os.path.join(dest, "passage_stats.csv"),
        ["level", "n_paths", "censored_fraction", "median", "q25", "q75",
         "mean", "mean_halfwidth", "fitted_rate"],
        [(level, n, frac, stats.quantiles[0.5], stats.quantiles[0.25],
          stats.quantiles[0.75], m1[0], m1[1], rate)])

    series = [("empirical", obs, surv)]
    if math.isfinite(rate):
        ts = np.linspace(obs[0], obs[-1], 64)
        fit = np.exp(coef[1] - rate * ts)
        series.append(("exponential fit", ts, fit))
    svg_line_plot(os.path.join(dest, "survival.svg"), series,
                  title="passage-time survival", xlabel="delta",
                  ylabel="P(delta > t)", logy=True)
    outputs["survival.svg"] = file_sha256(os.path.join(dest, "survival.svg"))
    return gates, _batch_lines(batch)


def _run_superlinear_uniform(cfg, model, params, dest, workers, outputs):
    n_paths = int(cfg["sim.n_paths"])
    x0s = _as_list(cfg["sim.x0_list"])
    t0 = float(cfg["est.t_start"])
    step = float(cfg["est.t_step"])
    horizon = float(cfg["sim.horizon"])
    times = np.arange(t0, horizon + 0.5 * step, step)
    order = float(cfg["est.order"])
    grid = _grid(cfg)

    reports = []
    batches = []
    for i, x0 in enumerate(x0s):
        batch = simulate_batch(model, grid, np.full(model.dimension, x0),
                               n_paths, int(cfg["sim.seed"]),
                               stream_offset=i * n_paths, workers=workers)
        batches.append(batch)
        reports.append(estimate_moments(batch, times, (order,)))

    rows = []
    overlap_fail = []
    for j, t in enumerate(times):
        ivals = []
        for x0, rep in zip(x0s, reports):
            m, hw = rep.robust[0, j], rep.robust_halfwidth[0, j]
            ivals.append((m - hw, m + hw))
            rows.append((x0, t, rep.mean[0, j], rep.mean_halfwidth[0, j], m, hw))
        if not intervals_overlap(ivals):
            overlap_fail.append(t)
    ok = not overlap_fail
    detail = ("%d/%d times overlap across %d starting points"
              % (len(times) - len(overlap_fail), len(times), len(x0s)))
    if overlap_fail:
        detail += "; first disagreement at t=%s" % fmt(overlap_fail[0])
    gates = [GateResult("moment-overlap", "uniform-in-x0-bound", ok, detail)]

    outputs["uniform_moments.csv"] = write_csv(
        os.path.join(dest, "uniform_moments.csv"),
        ["x0", "time", "mean", "mean_halfwidth", "robust", "robust_halfwidth"],
        rows)
    series = [("x0=%s" % fmt(x0), times, rep.robust[0])
              for x0, rep in zip(x0s, reports)]
    bands = [("x0=%s band" % fmt(x0), times,
              rep.robust[0] - rep.robust_halfwidth[0],
              rep.robust[0] + rep.robust_halfwidth[0])
             for x0, rep in zip(x0s, reports)]
    svg_line_plot(os.path.join(dest, "uniform.svg"), series,
                  title="moment order %s vs time by starting point" % fmt(order),
                  xlabel="t", ylabel="median-of-means |X|^q", bands=bands)
    outputs["uniform.svg"] = file_sha256(os.path.join(dest, "uniform.svg"))
    extra = []
    for x0, batch in zip(x0s, batches):
        extra += ["x0=%s: %s" % (fmt(x0), _batch_lines(batch)[0])]
    return gates, extra


def _run_superlinear_passage(cfg, model, params, dest, workers, outputs):
    level = float(cfg["est.level"])
    kappa = float(cfg["model.kappa"])
    beta = float(cfg["model.beta"])
    if kappa <= 1.0:
        raise ConfigError("superlinear passage needs kappa > 1")
    relax = level ** (1.0 - kappa) / (beta * (kappa - 1.0))
    threshold = float(cfg["est.bound_multiple"]) * relax

    batch = simulate_batch(model, _grid(cfg), _x0_vector(cfg, model.dimension),
                           int(cfg["sim.n_paths"]), int(cfg["sim.seed"]),
                           passage_levels=(level,), workers=workers)
    stats = estimate_passage_moments(batch, level, orders=(1.0,),
                                     tail_thresholds=(threshold,))
    gates = []
    tail = stats.tail[threshold]
    max_p = float(cfg["est.max_tail_prob"])
    gates.append(GateResult(
        "late-return-prob", "superlinear-passage-time",
        tail is not None and tail[0] <= max_p,
        "P(delta > %s) = %s (limit %s)"
        % (fmt(threshold), fmt(tail[0]) if tail else "n/a", fmt(max_p))))
    med = stats.quantiles[0.5]
    factor = float(cfg["est.median_factor"])
    ok = relax / factor <= med <= relax * factor
    gates.append(GateResult(
        "median-vs-relaxation", "relaxation-time-scale", ok,
        "median %s vs deterministic scale %s (factor %s)"
        % (fmt(med), fmt(relax), fmt(factor))))

    tau = np.asarray(batch.passage(level), dtype=float)
    obs = np.sort(tau[~np.isnan(tau)])
    surv = 1.0 - np.arange(1, obs.size + 1) / tau.size
    outputs["survival.csv"] = write_csv(
        os.path.join(dest, "survival.csv"), ["delta", "survival"],
        list(zip(obs, surv)))
    outputs["passage_stats.csv"] = write_csv(
        os.path.join(dest, "passage_stats.csv"),
        ["level", "relaxation_scale", "threshold", "tail_prob", "tail_hw",
         "median", "q25", "q75", "censored_fraction"],
        [(level, relax, threshold,
          tail[0] if tail else math.nan, tail[1] if tail else math.nan,
          med, stats.quantiles[0.25], stats.quantiles[0.75],
          stats.censored_fraction)])
    svg_line_plot(os.path.join(dest, "survival.svg"),
                  [("empirical", obs, surv)],
                  title="return-time survival from a far start",
                  xlabel="delta", ylabel="P(delta > t)", logy=True)
    outputs["survival.svg"] = file_sha256(os.path.join(dest, "survival.svg"))
    return gates, _batch_lines(batch)


def _stationary_diffusion_start(beta, sigma_sq):
    """Per-path draw from the stationary density, a scaled Student law.

    Starting at the invariant law makes the moment match a preservation
    test: the simulated dynamics must hold the closed-form value, with no
    transient to wait out.
    """
    nu = 2.0 * beta / sigma_sq - 1.0
    if nu <= 0:
        raise ConfigError("no stationary law: needs 2 beta / sigma^2 > 1")
    root = math.sqrt(nu)

    def draw(stream):
        u = float(stream.uniform(1)[0])
        u = min(max(u, 1e-15), 1.0 - 1e-15)
        return np.array([float(student_t.ppf(u, nu)) / root])

    return draw


def _run_diffusion_critical(cfg, model, params, dest, workers, outputs):
    beta = float(cfg["model.beta"])
    sigma_sq = float(cfg["model.sigma_sq"])
    if cfg["sim.x0"] == "stationary":
        x0 = _stationary_diffusion_start(beta, sigma_sq)
    else:
        x0 = _x0_vector(cfg, model.dimension)
    batch = simulate_batch(model, _grid(cfg), x0,
                           int(cfg["sim.n_paths"]), int(cfg["sim.seed"]),
                           workers=workers)
    gates = []
    burn = float(cfg["est.burn_in"])
    horizon = float(cfg["sim.horizon"])

    q_match = float(cfg["est.match_order"])
    ces = estimate_cesaro(batch, q_match, burn, horizon)
    oracle = diffusion_stationary_moment(beta, sigma_sq, q_match)
    se = ces.mean_halfwidth / _Z95
    ok = abs(ces.mean - oracle.value) <= 4.0 * se
    gates.append(GateResult(
        "stationary-moment-match", "stationary-moment-threshold", ok,
        "estimate %s vs oracle %s, |diff| = %s, 4 s.e. = %s"
        % (fmt(ces.mean), fmt(oracle.value),
           fmt(abs(ces.mean - oracle.value)), fmt(4.0 * se))))

    qd = float(cfg["est.divergent_order"])
    wins = trailing_windows(horizon, burn)
    wrep = estimate_windowed_averages(batch, qd, wins)
    verdict = divergence_trend_test(wrep, slope_tol=float(cfg["est.slope_tol"]),
                                    n_boot=int(cfg["est.n_boot"]),
                                    seed=int(cfg["est.seed"]) + 100)
    threshold_order = 2.0 * beta / sigma_sq - 1.0
    gates.append(GateResult(
        "window-growth-q%s" % fmt(qd), "stationary-moment-threshold",
        verdict.verdict == "growing",
        "verdict %s above threshold order %s, slope CI [%s, %s]"
        % (verdict.verdict, fmt(threshold_order), fmt(verdict.ci_low),
           fmt(verdict.ci_high))))

    outputs["stationary.csv"] = write_csv(
        os.path.join(dest, "stationary.csv"),
        ["order", "estimate", "halfwidth", "oracle", "threshold_order"],
        [(q_match, ces.mean, ces.mean_halfwidth, oracle.value, threshold_order)])
    outputs["windowed.csv"] = write_csv(
        os.path.join(dest, "windowed.csv"),
        ["order", "window", "median", "median_halfwidth", "mean",
         "mean_halfwidth"],
        [(qd, w, m, mh, mn, mnh) for w, m, mh, mn, mnh in
         zip(wrep.windows, wrep.medians, wrep.median_halfwidth,
             wrep.means, wrep.mean_halfwidth)])

    times = _curve_times(batch, 101)
    mrep = estimate_moments(batch, times, (q_match,))
    svg_line_plot(os.path.join(dest, "moment_curve.svg"),
                  [("estimate", times, mrep.robust[0]),
                   ("stationary oracle", times,
                    np.full(times.size, oracle.value))],
                  title="second moment vs stationary value", xlabel="t",
                  ylabel="median-of-means X^2",
                  bands=[("band", times,
                          mrep.robust[0] - mrep.robust_halfwidth[0],
                          mrep.robust[0] + mrep.robust_halfwidth[0])])
    outputs["moment_curve.svg"] = file_sha256(os.path.join(dest, "moment_curve.svg"))
    return gates, _batch_lines(batch)


def _run_lorenz84(cfg, model, params, dest, workers, outputs):
    gates = []
    rep = verify_dissipativity(model, params)
    gates.append(GateResult(
        "radial-dissipativity", "drift-dissipativity", rep.passed,
        "worst relative margin %s at kappa=%s beta=%s"
        % (fmt(rep.worst_margin), fmt(params.kappa), fmt(params.beta))))

    batch = simulate_batch(model, _grid(cfg), _x0_vector(cfg, model.dimension),
                           int(cfg["sim.n_paths"]), int(cfg["sim.seed"]),
                           workers=workers)
    order = float(cfg["est.order"])
    tr = sup_moment_trend(batch, order, n_boot=int(cfg["est.n_boot"]),
                          seed=int(cfg["est.seed"]))
    ok = tr.ci_low <= 0.0 <= tr.ci_high
    gates.append(GateResult(
        "sup-trend-p%s" % fmt(order), "uniform-moment-bound", ok,
        "slope %s per window step, CI [%s, %s]"
        % (fmt(tr.slope), fmt(tr.ci_low), fmt(tr.ci_high))))

    outputs["sup_trend.csv"] = write_csv(
        os.path.join(dest, "sup_trend.csv"),
        ["order", "win_start", "win_end", "sup_stat", "slope", "ci_low",
         "ci_high"],
        [(order, w0, w1, v, tr.slope, tr.ci_low, tr.ci_high)
         for (w0, w1), v in zip(tr.windows, tr.values)])
    times = _curve_times(batch, 101)
    mrep = estimate_moments(batch, times, (order,))
    outputs["moment_curve.csv"] = write_csv(
        os.path.join(dest, "moment_curve.csv"),
        ["time", "robust", "robust_hw", "mean", "mean_hw"],
        [(t, mrep.robust[0, j], mrep.robust_halfwidth[0, j],
          mrep.mean[0, j], mrep.mean_halfwidth[0, j])
         for j, t in enumerate(times)])
    svg_line_plot(os.path.join(dest, "moment_curve.svg"),
                  [("|X|^%s" % fmt(order), times, mrep.robust[0])],
                  title="perturbed circulation model moment", xlabel="t",
                  ylabel="median-of-means |X|^q",
                  bands=[("band", times,
                          mrep.robust[0] - mrep.robust_halfwidth[0],
                          mrep.robust[0] + mrep.robust_halfwidth[0])])
    outputs["moment_curve.svg"] = file_sha256(os.path.join(dest, "moment_curve.svg"))
    return gates, _batch_lines(batch)


def _run_oracle_dump(cfg, dest, outputs):
    formula = cfg["oracle.formula"]
    var = cfg["grid.var"]
    lo, hi = float(cfg["grid.min"]), float(cfg["grid.max"])
    count = int(cfg["grid.count"])
    if count < 2 or hi <= lo:
        raise ConfigError("oracle grid needs min < max and count >= 2")
    if cfg["grid.log"]:
        if lo <= 0:
            raise ConfigError("log grid needs a positive minimum")
        grid = np.geomspace(lo, hi, count)
    else:
        grid = np.linspace(lo, hi, count)
    inputs = {k.split(".", 1)[1]: v for k, v in cfg.items()
              if k.startswith("oracle.") and k != "oracle.formula"}
    rows = []
    for v in grid:
        try:
            res = evaluate(formula, **{**inputs, var: float(v)})
        except KeyError as exc:
            raise ConfigError("formula %s needs input %s" % (formula, exc))
        rows.append((float(v), res.value))
    outputs["oracle.csv"] = write_csv(
        os.path.join(dest, "oracle.csv"), [var, formula], rows)
    xs = np.array([r[0] for r in rows])
    ys = np.array([r[1] for r in rows])
    svg_line_plot(os.path.join(dest, "oracle.svg"), [(formula, xs, ys)],
                  title="%s over %s" % (formula, var), xlabel=var,
                  ylabel=formula, logx=bool(cfg["grid.log"]),
                  logy=bool(cfg["plot.logy"]))
    outputs["oracle.svg"] = file_sha256(os.path.join(dest, "oracle.svg"))
    return [], []


def _write_certificate_table(cert, dest, outputs):
    outputs["certificate.csv"] = write_csv(
        os.path.join(dest, "certificate.csv"),
        ["radius", "max_generator", "decay", "excess"], cert.as_rows())
    radii = np.asarray(cert.radii, dtype=float)
    ratio = -cert.generator_by_radius / cert.decay_by_radius
    svg_line_plot(os.path.join(dest, "certificate.svg"),
                  [("-generator / decay", radii, ratio),
                   ("target", radii, np.ones(radii.size))],
                  title="certified decay ratio by radius", xlabel="radius",
                  ylabel="ratio", logx=True)
    outputs["certificate.svg"] = file_sha256(os.path.join(dest, "certificate.svg"))


_RUNNERS = {
    "sublinear-moments": _run_sublinear_moments,
    "storage-optimality": _run_storage_optimality,
    "linear-exponential-passage": _run_linear_exponential_passage,
    "superlinear-uniform": _run_superlinear_uniform,
    "superlinear-passage": _run_superlinear_passage,
    "diffusion-critical": _run_diffusion_critical,
    "lorenz84": _run_lorenz84,
}


# ---- orchestration ------------------------------------------------------

def _cert_summary(cert):
    return ("certification: passed (C_V=%s, c_V=%s, gamma=%s, V_star=%s)"
            % (fmt(cert.big_c), fmt(cert.small_c), fmt(cert.gamma),
               fmt(cert.v_star)))


def _summary_text(scenario, cert_line, extra, gates, exit_code):
    lines = ["scenario: %s" % scenario]
    claims = _SCENARIO_CLAIMS[scenario]
    if claims:
        lines.append("claims: %s" % ", ".join(claims))
        for cid in claims:
            lines.append("  %s: %s" % (cid, CLAIMS[cid]))
    lines.append(cert_line)
    lines.extend(extra)
    for g in gates:
        lines.append("%s %s [%s] %s"
                     % ("PASS" if g.passed else "FAIL", g.name, g.claim,
                        g.detail))
    word = {0: "PASS", 1: "GATE FAILURE", 3: "CERTIFICATION FAILURE"}[exit_code]
    lines.append("result: %s (exit %d)" % (word, exit_code))
    return "\n".join(lines) + "\n"


def run_scenario(scenario, overrides=None, out_dir=None, workers=1,
                 waive_certify=False):
    """Run one named scenario end to end and write its artifact set.

    Returns a ScenarioResult; raises ConfigError for unusable input.  A
    failed certification precondition still writes summary.txt (and the
    certificate table when one was fitted) and returns exit code 3.
    """
    cfg = _resolve_config(scenario, overrides)
    base = out_dir or os.environ.get(OUTPUT_DIR_ENV) or "driftbound-out"
    dest = os.path.join(base, scenario)
    os.makedirs(dest, exist_ok=True)
    outputs = {}

    cert = None
    if scenario == "oracle-dump":
        cert_line = "certification: not applicable"
        gates, extra = _run_oracle_dump(cfg, dest, outputs)
    else:
        model, params = _build_model(cfg)
        if waive_certify and scenario != "lyapunov-certify":
            cert_line = "certification: waived"
            gates, extra = _RUNNERS[scenario](cfg, model, params, dest,
                                              workers, outputs)
        else:
            failure = None
            kern = (verify_kernel_bounds(model.kernel, params)
                    if model.kernel is not None else None)
            try:
                _, cert = certify_L_condition(
                    model, LyapunovProfile(p=params.p), params,
                    directions_per_radius=int(cfg["certify.directions"]),
                    rel_tol=float(cfg["certify.rel_tol"]),
                    seed=int(cfg["certify.seed"]))
            except CertificationError as exc:
                failure = str(exc)

            if scenario == "lyapunov-certify":
                if kern is None:
                    gates = [GateResult("kernel-moment-bounds",
                                        "kernel-moment-bounds", True,
                                        "no jump component to verify")]
                else:
                    gates = [GateResult("kernel-moment-bounds",
                                        "kernel-moment-bounds", kern.passed,
                                        "; ".join(kern.notes) or "closed "
                                        "forms match quadrature")]
                if cert is not None:
                    _write_certificate_table(cert, dest, outputs)
                    if cert.passed:
                        detail = ("worst margin %s at c_V=%s"
                                  % (fmt(cert.worst_margin), fmt(cert.small_c)))
                    else:
                        detail = "; ".join(cert.notes) or "rejected"
                    gates.append(GateResult(
                        "decay-certificate", "lyapunov-drift-condition",
                        cert.passed, detail))
                    cert_line = (_cert_summary(cert) if cert.passed else
                                 "certification: FAILED (excess persists "
                                 "at the outer radii)")
                else:
                    gates.append(GateResult(
                        "decay-certificate", "lyapunov-drift-condition",
                        False, failure))
                    cert_line = "certification: FAILED (%s)" % failure
                dis = verify_dissipativity(model, params)
                extra = ["dissipativity check (informational): %s, "
                         "worst margin %s"
                         % ("passed" if dis.passed else "failed",
                            fmt(dis.worst_margin))]
                if cert is None or not cert.passed:
                    exit_code = 3
                    summary = _summary_text(scenario, cert_line, extra, gates,
                                            exit_code)
                    outputs["summary.txt"] = write_text(
                        os.path.join(dest, "summary.txt"), summary)
                    return ScenarioResult(scenario, exit_code, gates, outputs,
                                          dest, None, cfg, cert, waive_certify)
            else:
                if failure is None and kern is not None and not kern.passed:
                    failure = "kernel moment constants fail verification"
                if failure is None and not cert.passed:
                    failure = ("decay certificate rejected: generator excess "
                               "persists at the outer radii")
                if failure is not None:
                    cert_line = "certification: FAILED (%s)" % failure
                    summary = _summary_text(scenario, cert_line, [], [], 3)
                    outputs["summary.txt"] = write_text(
                        os.path.join(dest, "summary.txt"), summary)
                    return ScenarioResult(scenario, 3, [], outputs, dest,
                                          None, cfg, cert, waive_certify)
                cert_line = _cert_summary(cert)
                gates, extra = _RUNNERS[scenario](cfg, model, params, dest,
                                                  workers, outputs)

    exit_code = 0 if all(g.passed for g in gates) else 1
    summary = _summary_text(scenario, cert_line, extra, gates, exit_code)
    outputs["summary.txt"] = write_text(os.path.join(dest, "summary.txt"),
                                        summary)
    from . import __version__
    meta = {"scenario": scenario, "version": __version__,
            "generator": GENERATOR_NAME}
    if waive_certify:
        meta["waived_certification"] = True
    manifest_path = os.path.join(dest, "run.manifest")
    write_manifest(manifest_path, cfg, outputs, meta)
    return ScenarioResult(scenario, exit_code, gates, outputs, dest,
                          manifest_path, cfg, cert, waive_certify)


def replay(manifest_path, out_dir=None, workers=1):
    """Re-run a recorded scenario and compare every output hash."""
    run, conf, recorded = read_manifest(manifest_path)
    scenario = run.get("scenario")
    if scenario not in SCENARIO_IDS:
        raise ConfigError("manifest names unknown scenario %r" % (scenario,))
    waive = bool(run.get("waived_certification", False))
    if out_dir is None:
        out_dir = tempfile.mkdtemp(prefix="driftbound-replay-")
    result = run_scenario(scenario, overrides=conf, out_dir=out_dir,
                          workers=workers, waive_certify=waive)
    mismatched = sorted(k for k in recorded
                        if k in result.outputs and result.outputs[k] != recorded[k])
    missing = sorted(k for k in recorded if k not in result.outputs)
    extra = sorted(k for k in result.outputs if k not in recorded)
    matched = not (mismatched or missing or extra)
    return ReplayResult(scenario=scenario, manifest_path=manifest_path,
                        matched=matched, mismatched=mismatched,
                        missing=missing, extra=extra, result=result)
