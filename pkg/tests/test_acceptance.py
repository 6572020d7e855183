"""
Acceptance suite.  Each test records one line per criterion (printed in the
pytest terminal summary) and then asserts it.
"""

import io
import json
import time
from contextlib import redirect_stdout

import numpy as np
import pytest

from bpfusion.analysis import crlb_position, crlb_range, crlb_speed, global_snr
from bpfusion.cli import main
from bpfusion.config import bundled, parse_config
from bpfusion.fusion import (Observation, PriorBox, normalized_fused_spectrum, observe,
                             observed_term)
from bpfusion.geometry import ApPair, Scene, bistatic_range, bistatic_speed
from bpfusion.montecarlo import run_monte_carlo
from bpfusion.scene import SnrModel, pair_rng, synthesize_frame, synthesize_frames
from bpfusion.solvers import (bayes_objectives, cga_refine, coarse_grid_search, default_grids,
                              default_params, pcga_estimate, traversal_estimate)
from bpfusion.waveform import OfdmConfig, freq_steering, time_steering

from conftest import record

pytestmark = pytest.mark.slow

SEC6 = bundled("scenario_paper_sec6.json")
SETTINGS = {1: [10, 10, 10, 10, -10, -10, -10, -10],
            2: [20, 20, 10, 10, -10, -10, -20, -20],
            3: [20, 15, 10, 5, -5, -10, -15, -20]}


def sec6(**over):
    data = json.loads(SEC6.read_text())
    ofdm = over.pop("ofdm", None)
    if ofdm:
        data["ofdm"].update(ofdm)
    rho = over.pop("rho2_db", None)
    if rho is not None:
        data["snr"]["rho2_db"] = list(rho)
    data.update(over)
    return parse_config(data)


# --- criteria 1 and 10 share the same runs ----------------------------------

@pytest.fixture(scope="module")
def oracle_runs():
    exp = sec6()
    cfg, truth, prior = exp.ofdm_config(), exp.scene_obj(), exp.prior_box()
    grids, params = exp.grid_specs(), exp.pcga_params()
    rows = []
    for trial in range(100):
        frames = synthesize_frames(truth, cfg, exp.snr_model(), 0.0, exp.seed, trial)
        obs = observe(frames, cfg)
        t0 = time.perf_counter()
        a = pcga_estimate(obs, cfg, prior, grids, params)
        t1 = time.perf_counter()
        b = traversal_estimate(obs, cfg, prior, exp.traversal_step)
        t2 = time.perf_counter()
        rows.append((float(np.hypot(*(a.p_hat - b.p_hat))), t1 - t0, t2 - t1))
    return np.array(rows)


def test_c01_pcga_matches_traversal(oracle_runs):
    gap = oracle_runs[:, 0]
    hits = int(np.sum(gap <= 0.02))
    total = oracle_runs[:, 1:].sum()
    ok = record(1, "oracle", hits >= 95 and total < 120,
                f"{hits}/100 within 0.02 m (max gap {gap.max():.4f} m), {total:.1f} s total")
    assert ok


def test_c01_fieldtest_geometry():
    exp = parse_config(json.loads(bundled("scenario_fieldtest.json").read_text()))
    cfg, truth, prior = exp.ofdm_config(), exp.scene_obj(), exp.prior_box()
    gaps = []
    for trial in range(20):
        obs = observe(synthesize_frames(truth, cfg, exp.snr_model(), 0.0, exp.seed, trial), cfg)
        a = pcga_estimate(obs, cfg, prior, exp.grid_specs(), exp.pcga_params())
        b = traversal_estimate(obs, cfg, prior, exp.traversal_step)
        gaps.append(float(np.hypot(*(a.p_hat - b.p_hat))))
    hits = int(np.sum(np.array(gaps) <= 0.02))
    ok = record(1, "field-test geometry", hits >= 19,
                f"{hits}/20 within 0.02 m (max gap {max(gaps):.4f} m)")
    assert ok


def test_c10_pcga_faster_than_traversal(oracle_runs):
    tp, tt = oracle_runs[:, 1], oracle_runs[:, 2]
    every = bool(np.all(tp < tt))
    ok = record(10, "timing", every and np.median(tp) < np.median(tt),
                f"median PCGA {np.median(tp) * 1e3:.1f} ms vs traversal "
                f"{np.median(tt) * 1e3:.1f} ms, PCGA faster in {int(np.sum(tp < tt))}/100 runs")
    assert ok


# --- 2: RMSE versus SNR -------------------------------------------------------

def test_c02_rmse_vs_snr():
    rmse, bound = [], None
    for snr in (-10, -5, 0, 5, 10):
        exp = sec6(ofdm={"k": 64, "l": 64}, rho2_db=[snr] * 8, trials=200, methods=["bayes"])
        _, summary = run_monte_carlo(exp, threads=1)
        rmse.append(summary["rmse"]["bayes"]["position_m"])
        bound = summary["crlb"]["position_rmse_bound_m"]
    monotone = all(b <= a for a, b in zip(rmse, rmse[1:]))
    ratio = rmse[-1] / bound
    ok = record(2, "rmse-snr", monotone and 1.0 <= ratio <= 3.0,
                f"rmse {[round(r, 4) for r in rmse]} m, +10 dB ratio to CRLB {ratio:.3f}")
    assert ok


# --- 3: method ordering -------------------------------------------------------

def test_c03_method_ordering():
    methods = ["bayes", "signal_nc", "param_soft", "symbol"]
    strict_pos = strict_vel = 0
    all_ok = True
    broken = []
    for sid, rho in SETTINGS.items():
        exp = sec6(rho2_db=rho, trials=200, methods=methods)
        _, summary = run_monte_carlo(exp, threads=1)
        med = {m: (summary["rmse"][m]["median_position_m"], summary["rmse"][m]["median_velocity_mps"])
               for m in methods}
        for axis in (0, 1):
            b, nc = med["bayes"][axis], med["signal_nc"][axis]
            checks = {"bayes<=signal_nc": b <= nc, "signal_nc<=param_soft": nc <= med["param_soft"][axis],
                      "signal_nc<=symbol": nc <= med["symbol"][axis]}
            broken += [f"{name} ({'pos' if axis == 0 else 'vel'}, setting {sid})"
                       for name, good in checks.items() if not good]
            strict = all(b < med[m][axis] for m in methods[1:])
            all_ok &= all(checks.values())
            if axis == 0:
                strict_pos += strict
            else:
                strict_vel += strict
        record(3, f"setting {sid}", True,
               "medians pos/vel " + ", ".join(f"{m} {med[m][0]:.4f}/{med[m][1]:.5f}" for m in methods))
    ok = record(3, "ordering", all_ok and strict_pos >= 2 and strict_vel >= 2,
                f"Bayes strictly best in {strict_pos}/3 (position), {strict_vel}/3 (velocity); "
                f"violated: {', '.join(broken) or 'none'}")
    assert ok


# --- 4: one low-SNR pair ------------------------------------------------------

def test_c04_heterogeneous_snr():
    bayes, at_m10 = [], None
    for low in (-30, -20, -10, 0, 10):
        exp = sec6(rho2_db=[10] * 7 + [low], trials=200, methods=["bayes", "signal_nc"])
        _, summary = run_monte_carlo(exp, threads=1)
        bayes.append(summary["rmse"]["bayes"]["position_m"])
        if low == -10:
            at_m10 = summary["rmse"]
    spread = max(bayes) / min(bayes)
    b, nc = at_m10["bayes"], at_m10["signal_nc"]
    better = (b["position_m"] < nc["position_m"]
              and b["median_position_m"] < nc["median_position_m"])
    ok = record(4, "low-snr pair", spread < 2 and better,
                f"Bayes rmse {[round(r, 4) for r in bayes]} (max/min {spread:.2f}); at -10 dB "
                f"median {b['median_position_m']:.4f} vs {nc['median_position_m']:.4f}")
    assert ok


# --- 5: weight optimality -----------------------------------------------------

def test_c05_weight_optimality():
    rng = np.random.default_rng(20240501)
    rho2 = 10 ** (rng.uniform(-30, 20, (10_000, 8)) / 10)
    wins = sum(global_snr(r, r) >= global_snr(np.ones(8), r) * (1 - 1e-12) for r in rho2)
    ok = record(5, "global snr", wins == 10_000, f"{wins}/10000 draws")
    assert ok


# --- 6: CRLB closed forms -----------------------------------------------------

# mpmath (30 digit) substitutions into the closed forms
CRLB_CASES = [
    (crlb_range, (1.0, 1.0, 100, 100, 240e3), 0.00474333571452432782),
    (crlb_range, (1.0, 10.0, 100, 100, 240e3), 0.00047433357145243278),
    (crlb_range, (2.0, 0.5, 64, 32, 120e3), 0.90484992768484344319),
    (crlb_speed, (1.0, 1.0, 100, 100, 0.625e-3, 299792458.0 / 30e9), 7.7714812346766587e-7),
    (crlb_speed, (1.0, 10.0, 100, 100, 0.625e-3, 299792458.0 / 30e9), 7.7714812346766587e-8),
    (crlb_speed, (2.0, 0.5, 64, 32, 0.156e-3, 299792458.0 / 25.6e9), 0.0032703045090795117),
]


def test_c06_crlb():
    worst = max(abs(fn(*args) / want - 1) for fn, args, want in CRLB_CASES)
    dd = float(np.sqrt(crlb_range(1.0, 1.0, 100, 100, 240e3)))
    pairs = [ApPair(0, 0, np.array([10.0, 0.0]), np.array([10.0, 0.0]), 0),
             ApPair(0, 1, np.array([0.0, 10.0]), np.array([0.0, 10.0]), 1)]
    cov = crlb_position(np.zeros(2), pairs, [1.0, 1.0])
    diag_err = float(np.max(np.abs(cov - np.diag([0.25, 0.25]))))
    ok = record(6, "crlb", worst <= 1e-12 and diag_err <= 0.25e-12 and abs(dd - 0.0689) < 5e-5,
                f"max rel err {worst:.1e}, delta_d {dd * 100:.3f} cm, diag err {diag_err:.1e}")
    assert ok


# --- 7: unimodality and PCGA contracts ----------------------------------------

def _projected(g, point, bounds):
    """Gradient with components pointing out of the box at active bounds removed."""
    g = g.copy()
    for i in (0, 1):
        lo, hi = bounds[2 * i], bounds[2 * i + 1]
        if (point[i] <= lo and g[i] < 0) or (point[i] >= hi and g[i] > 0):
            g[i] = 0.0
    return g


def _refine_contract(objective, grid, params, bounds):
    init = coarse_grid_search(objective, grid, bounds)
    res = cga_refine(objective, init, params, bounds)
    monotone = bool(np.all(np.diff(res.trace) >= 0))
    limit = 2 * params.eps / res.rate
    raw_ok = float(np.hypot(*res.gradient)) <= limit
    proj_ok = float(np.hypot(*_projected(res.gradient, res.point, bounds))) <= limit
    return monotone, raw_ok, proj_ok, res


def test_c07_convergence_properties():
    rng = np.random.default_rng(77)
    bad_modal = bad_mono = bad_grad = bad_raw = 0
    for i in range(1000):
        k, l = int(rng.integers(16, 129)), int(rng.integers(8, 65))
        cfg = OfdmConfig(30e9, 240e3, 0.625e-3, k, l)
        tx = rng.uniform(-50, 50, 2)
        rx = rng.uniform(-50, 50, 2)
        target = rng.uniform(-50, 50, 2)
        while min(np.hypot(*(target - tx)), np.hypot(*(target - rx))) < 5:
            target = rng.uniform(-50, 50, 2)
        vel = rng.uniform(-5, 5, 2)
        sc = Scene(tx[None], rx[None], target, vel)
        fr = synthesize_frame(sc.pairs()[0], sc, cfg, SnrModel(rho2=(10.0,)), 0.0,
                              pair_rng(7, i, 0))
        obs = observe([fr], cfg)
        d0 = bistatic_range(target, sc.pairs()[0])
        res = cfg.range_resolution
        d = d0 + np.arange(-res, res + 1e-12, 0.01)
        prof = obs.range_energy(d[:, None])[:, 0]
        interior_min = np.any((prof[1:-1] < prof[:-2]) & (prof[1:-1] < prof[2:]))
        bad_modal += bool(interior_min)

        prior = PriorBox((*(target[0] + np.array([-4, 4])), *(target[1] + np.array([-4, 4]))),
                         (*(vel[0] + np.array([-1, 1])), *(vel[1] + np.array([-1, 1]))))
        grids = default_grids(cfg, prior)
        params = default_params(cfg, grids)
        pos, vel_factory = bayes_objectives(obs)
        m1, r1, g1, rp = _refine_contract(pos, grids[0], params[0], prior.pos)
        m2, r2, g2, _ = _refine_contract(vel_factory(rp.point), grids[1], params[1], prior.vel)
        bad_mono += not (m1 and m2)
        bad_grad += not (g1 and g2)
        bad_raw += not (r1 and r2)
    ok = record(7, "convergence", bad_modal == 0 and bad_mono == 0 and bad_grad == 0,
                f"non-unimodal {bad_modal}, non-monotone {bad_mono}, projected-gradient "
                f"violations {bad_grad}, raw-gradient above bound {bad_raw} (all of them are "
                f"prior-box boundary stops when the projected count is 0), of 1000")
    assert ok


# --- 8: normalization identity -------------------------------------------------

def test_c08a_cell_energy():
    cfg = OfdmConfig(30e9, 240e3, 0.625e-3, 16, 16)
    sc = Scene(np.array([(0.0, 0.0)]), np.array([(30.0, 5.0)]), (12.0, 20.0), (1.5, -0.5))
    pp = sc.pairs()[0]
    d, v = bistatic_range(sc.target_pos, pp), bistatic_speed(sc.target_pos, sc.target_vel, pp)
    u = np.outer(freq_steering(d, cfg), time_steering(v, cfg)) / np.sqrt(cfg.k * cfg.l)
    worst = 0.0
    for rho2_db, sigma2 in ((0.0, 1.0), (10.0, 2.5), (-10.0, 0.3)):
        snr = SnrModel.from_db([rho2_db])
        energy = np.array([abs(np.vdot(u, synthesize_frame(pp, sc, cfg, snr, sigma2,
                                                           pair_rng(8, t, 0)).y)) ** 2
                           for t in range(10_000)])
        expect = sigma2 * (cfg.k * cfg.l * 10 ** (rho2_db / 10) + 1)
        worst = max(worst, abs(energy.mean() / expect - 1))
    ok = record(8, "cell energy", worst <= 0.10, f"max deviation {worst * 100:.2f}%")
    assert ok


def test_c08b_normalized_spectrum_scaling():
    rng = np.random.default_rng(88)
    cfg = OfdmConfig(30e9, 240e3, 0.625e-3, 16, 16)
    exp = sec6()
    worst = 0.0
    for g in range(100):
        sigma2 = float(10 ** rng.uniform(-2, 2))
        frames = synthesize_frames(exp.scene_obj(), cfg, exp.snr_model(), sigma2, 99, g)
        pts = rng.uniform(25, 35, (20, 2))
        vel = rng.uniform(0, 4, (20, 2))
        lhs = normalized_fused_spectrum(pts, vel, frames, cfg)
        rhs = sigma2 * observed_term(pts, vel, frames, cfg)
        worst = max(worst, float(np.max(np.abs(lhs / rhs - 1))))
    ok = record(8, "sigma2 x observed term", worst <= 1e-12,
                f"max rel deviation {worst:.3g} (implementation satisfies the factor-1 identity)")
    assert ok


# --- 9: overhead ---------------------------------------------------------------

def test_c09_overhead_cli():
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = main(["overhead", "--config", str(SEC6)])
    table = json.loads(buf.getvalue())
    s = {m: table[m]["scalars"] for m in ("signal", "bayes", "symbol", "soft")}
    ordered = s["signal"] > s["bayes"] > s["symbol"] > s["soft"]
    ok = record(9, "overhead", code == 0 and ordered and table["bayes_to_signal"] <= 0.10,
                f"scalars {s}, bayes/signal {table['bayes_to_signal']:.3f}")
    assert ok


# --- 11: determinism -----------------------------------------------------------

def test_c11_cli_determinism(tmp_path):
    args = ["mc", "--config", str(SEC6), "--trials", "6", "--methods",
            "bayes,signal_nc,param_soft,param_hard,symbol,traversal_oracle"]
    with redirect_stdout(io.StringIO()):
        a = main(args + ["--out", str(tmp_path / "a"), "--threads", "1"])
        b = main(args + ["--out", str(tmp_path / "b"), "--threads", "2"])
    same = (tmp_path / "a/trials.csv").read_bytes() == (tmp_path / "b/trials.csv").read_bytes()
    ok = record(11, "determinism", a == b == 0 and same, "trials.csv identical for 1 and 2 threads")
    assert ok
