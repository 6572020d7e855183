"""
Monte Carlo orchestration and result files.

All methods of one trial consume the same synthesised frames.  Trials are
independent and may run in worker processes; results are merged in trial
order, so output files depend only on (config, seed).
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import crlb_report, error_cdf, overhead_table
from .baselines import (baseline_estimate, coherent_objectives, noncoherent_objectives,
                        per_pair_estimates, prior_search_bounds, soft_objectives,
                        symbol_objectives)
from .config import ExperimentConfig
from .errors import SensingError
from .fusion import SpectrumGrid, observe, sample_spectrum
from .scene import synthesize_frames
from .solvers import bayes_objectives, pcga_estimate, traversal_estimate

TRIAL_COLUMNS = ("trial", "method", "x_hat", "y_hat", "vx_hat", "vy_hat", "err_pos_m",
                 "err_vel_mps", "iters", "converged", "wall_us", "failed")


@dataclass
class TrialRecord:
    trial: int
    method: str
    p_hat: tuple[float, float]
    v_hat: tuple[float, float]
    err_pos: float
    err_vel: float
    iterations: int
    converged: bool
    wall_us: float | None = None
    failed: bool = False

    def row(self) -> list[str]:
        def num(x):
            return "" if x is None or not math.isfinite(x) else repr(float(x))
        return [str(self.trial), self.method, num(self.p_hat[0]), num(self.p_hat[1]),
                num(self.v_hat[0]), num(self.v_hat[1]), num(self.err_pos), num(self.err_vel),
                str(self.iterations), str(int(self.converged)),
                "" if self.wall_us is None else str(int(round(self.wall_us))),
                str(int(self.failed))]


def run_method(method: str, obs, exp: ExperimentConfig):
    cfg = obs.cfg
    prior = exp.prior_box()
    grids = exp.grid_specs()
    params = exp.pcga_params()
    if method == "bayes":
        return pcga_estimate(obs, cfg, prior, grids, params)
    if method == "traversal_oracle":
        return traversal_estimate(obs, cfg, prior, exp.traversal_step)
    return baseline_estimate(method, obs, cfg, prior, grids, params)


def run_trial(exp: ExperimentConfig, trial: int, timing: bool = False) -> list[TrialRecord]:
    cfg = exp.ofdm_config()
    truth = exp.scene_obj()
    frames = synthesize_frames(truth, cfg, exp.snr_model(), exp.sigma2, exp.seed, trial)
    obs = observe(frames, cfg)
    out = []
    for method in exp.methods:
        t0 = time.perf_counter()
        try:
            est = run_method(method, obs, exp)
        except (SensingError, ArithmeticError, ValueError):
            nan = float("nan")
            out.append(TrialRecord(trial, method, (nan, nan), (nan, nan), nan, nan, 0, False,
                                   None, True))
            continue
        wall = (time.perf_counter() - t0) * 1e6 if timing else None
        ep = float(np.hypot(*(est.p_hat - truth.target_pos)))
        ev = float(np.hypot(*(est.v_hat - truth.target_vel)))
        out.append(TrialRecord(trial, method, tuple(map(float, est.p_hat)),
                               tuple(map(float, est.v_hat)), ep, ev, int(est.iterations),
                               bool(est.converged), wall, False))
    return out


def _worker(payload):
    data, trials, timing = payload
    exp = ExperimentConfig.model_validate(data)
    return [run_trial(exp, t, timing) for t in trials]


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("SENSE_THREADS", "1") or 1)
    return max(1, int(threads))


def run_trials(exp: ExperimentConfig, threads: int | None = None, timing: bool = False):
    """Records for every trial, ordered by (trial, method)."""
    threads = resolve_threads(threads)
    indices = list(range(exp.trials))
    if threads == 1 or exp.trials == 1:
        batches = [run_trial(exp, t, timing) for t in indices]
    else:
        chunks = [indices[i::threads] for i in range(threads)]
        data = exp.model_dump(mode="json")
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_worker, [(data, c, timing) for c in chunks if c]))
        by_trial = {}
        for chunk, res in zip([c for c in chunks if c], results):
            by_trial.update(zip(chunk, res))
        batches = [by_trial[t] for t in indices]
    return [r for batch in batches for r in batch]


def _pair_variances(exp: ExperimentConfig):
    cfg = exp.ofdm_config()
    truth = exp.scene_obj()
    snr = exp.snr_model()
    st2 = np.array([snr.sigma_tilde2(p, truth.target_pos, cfg, exp.sigma2) for p in truth.pairs()])
    return np.full(len(st2), exp.sigma2), st2


def summarize(records: list[TrialRecord], exp: ExperimentConfig, timing: bool = False) -> dict:
    cfg = exp.ofdm_config()
    truth = exp.scene_obj()
    summary = {"config_echo": exp.echo(), "rmse": {}, "cdf": {}, "crlb": None,
               "overhead": None, "timing": None}
    for method in exp.methods:
        ok = [r for r in records if r.method == method and not r.failed]
        n_failed = sum(1 for r in records if r.method == method and r.failed)
        if ok:
            ep = np.array([r.err_pos for r in ok])
            ev = np.array([r.err_vel for r in ok])
            summary["rmse"][method] = {
                "position_m": float(np.sqrt(np.mean(ep**2))),
                "velocity_mps": float(np.sqrt(np.mean(ev**2))),
                "median_position_m": float(np.median(ep)),
                "median_velocity_mps": float(np.median(ev)),
                "trials": len(ok), "failed": n_failed,
            }
            summary["cdf"][method] = {"grid_m": list(exp.cdf_grid),
                                      "position": error_cdf(ep, exp.cdf_grid).tolist(),
                                      "velocity": error_cdf(ev, exp.cdf_grid).tolist()}
        else:
            summary["rmse"][method] = None
            summary["cdf"][method] = None
    sigma2, st2 = _pair_variances(exp)
    rep = crlb_report(truth, cfg, sigma2, st2)
    summary["crlb"] = {
        "range_var_m2": rep.range_var.tolist(),
        "speed_var_m2ps2": rep.speed_var.tolist(),
        "position_trace": rep.position_trace,
        "velocity_trace": rep.velocity_trace,
        "position_rmse_bound_m": None if rep.position_trace is None else math.sqrt(rep.position_trace),
        "velocity_rmse_bound_mps": None if rep.velocity_trace is None else math.sqrt(rep.velocity_trace),
    }
    summary["overhead"] = overhead_table(cfg, exp.prior_box(), truth)
    if timing:
        summary["timing"] = {}
        for method in exp.methods:
            w = [r.wall_us for r in records if r.method == method and r.wall_us is not None]
            summary["timing"][method] = {"median_us": float(np.median(w)) if w else None,
                                         "mean_us": float(np.mean(w)) if w else None}
    return summary


def run_monte_carlo(exp: ExperimentConfig, threads: int | None = None, timing: bool = False):
    records = run_trials(exp, threads, timing)
    return records, summarize(records, exp, timing)


def position_spectrum(exp: ExperimentConfig, method: str, trial: int = 0,
                      n_points: int = 101) -> SpectrumGrid:
    """Position-stage objective of ``method`` sampled over the prior box for one trial."""
    cfg = exp.ofdm_config()
    truth = exp.scene_obj()
    obs = observe(synthesize_frames(truth, cfg, exp.snr_model(), exp.sigma2, exp.seed, trial), cfg)
    prior = exp.prior_box()
    if method in ("bayes", "traversal_oracle"):
        pos, _ = bayes_objectives(obs)
    elif method == "signal_nc":
        pos, _ = noncoherent_objectives(obs)
    elif method == "signal_c":
        pos, _ = coherent_objectives(obs)
    elif method in ("param_soft", "param_hard", "symbol"):
        meas = per_pair_estimates(obs, cfg, prior_search_bounds(obs, prior), strict=False)
        pos = (soft_objectives(meas, obs.tx, obs.rx)[0] if method != "symbol"
               else symbol_objectives(obs, meas)[0])
    else:
        raise ValueError(f"unknown method {method!r}")
    x = np.linspace(prior.pos[0], prior.pos[1], n_points)
    y = np.linspace(prior.pos[2], prior.pos[3], n_points)
    return sample_spectrum(pos, x, y)


def emit_results(records: list[TrialRecord], summary: dict, out_dir,
                 spectra: dict | None = None) -> list[Path]:
    """Write trials.csv, summary.json and, when given, spectrum.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    path = out / "trials.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIAL_COLUMNS)
        for r in records:
            w.writerow(r.row())
    written.append(path)
    path = out / "summary.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written.append(path)
    if spectra:
        path = out / "spectrum.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("method", "x", "y", "value"))
            for method, grid in spectra.items():
                for i, x in enumerate(grid.x):
                    for j, y in enumerate(grid.y):
                        w.writerow((method, repr(float(x)), repr(float(y)),
                                    repr(float(grid.values[i, j]))))
        written.append(path)
    return written
