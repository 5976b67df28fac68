"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line."""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import p0, random_params
from retire_dual import free_boundary as fb
from retire_dual import solve
from retire_dual.cli import main
from retire_dual.numerics import log_grid
from retire_dual.params import Regime, characteristic, dual_roots
from retire_dual.policy import Phase
from retire_dual.post_retirement import build
from retire_dual.simulator import SimConfig, budget_check, martingale_check
from retire_dual.verification import (
    branch_grids,
    drift_identity_error,
    drift_points,
    merton_limit_errors,
    oracle_head,
    oracle_tail,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
MC_PATHS = 100_000
MC_SEED = 20240101


@pytest.fixture
def line(capsys):
    def emit(number: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[acceptance {number:2d}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")

    return emit


def draws(n: int, seed: int):
    rng = np.random.default_rng(seed)
    return [random_params(rng) for _ in range(n)]


def feasible_draws(n: int, seed: int):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        p = random_params(rng)
        gap = p.y1 - p.y2
        out.append(p.with_updates(L=gap * float(rng.uniform(1.05, 2.0))))
    return out


def test_01_root_properties(line):
    params = draws(1000, 1)
    t0 = time.perf_counter()
    worst_res = worst_1 = worst_0 = 0.0
    bounds_ok = True
    for p in params:
        roots = dual_roots(p)
        bounds_ok &= roots.m_plus > 1 and roots.m_minus < min(0.0, 1 - 1 / p.gamma)
        worst_res = max(worst_res, abs(characteristic(p, roots.m_plus)), abs(characteristic(p, roots.m_minus)))
        worst_1 = max(worst_1, abs(characteristic(p, 1.0) + p.r))
        worst_0 = max(worst_0, abs(characteristic(p, 0.0) + p.rho + p.delta))
    elapsed = time.perf_counter() - t0
    ok = bounds_ok and worst_res <= 1e-12 and worst_1 <= 1e-12 and worst_0 <= 1e-12 and elapsed < 1.0
    line(1, "root properties", ok,
         f"1000 draws, bounds={bounds_ok}, residual={worst_res:.2e}, q(1)+r={worst_1:.2e}, "
         f"q(0)+rho+delta={worst_0:.2e}, {elapsed:.3f}s")
    assert ok


def test_02_ode_residual(line):
    params = draws(50, 2)
    t0 = time.perf_counter()
    worst = 0.0
    for p in params:
        d = build(p)
        low, high = branch_grids(d.kink, 200)
        worst = max(worst, max(d.relative_ode_residual(z) for z in low + high))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 5.0
    line(2, "ODE residual", ok, f"50 sets x 2 x 200 points, worst relative={worst:.2e}, {elapsed:.2f}s")
    assert ok


def test_03_smooth_pasting(line):
    worst = 0.0
    for p in draws(50, 3):
        d = build(p)
        for order in (0, 1):
            lo, hi = d.branch_values(d.kink, order)
            worst = max(worst, abs(lo - hi) / max(abs(lo), abs(hi)))
    ok = worst <= 1e-8
    line(3, "smooth pasting at the kink", ok, f"50 sets, worst relative gap={worst:.2e}")
    assert ok


def test_04_oracle_equivalence(line):
    worst_g = worst_psi = 0.0
    models = [solve(p0(1.2))] + [solve(p) for p in feasible_draws(4, 4)]
    for m in models:
        rw, roots = m.reward, m.roots
        for z in log_grid(1e-3 * m.boundary.j, 10 * m.boundary.j, 50):
            quad, size = oracle_tail(rw, roots, z)
            worst_g = max(worst_g, abs(float(fb.tail_integral_G(rw, roots, z)) - quad) / size)
        zb = m.z_bar
        head_bar, head_bar_abs = oracle_head(rw, roots, zb)
        c = 2.0 / (m.params.theta**2 * roots.spread)
        for z in log_grid(zb * 1.01, 10 * m.boundary.j, 50):
            tail, tail_abs = oracle_tail(rw, roots, z)
            head, head_abs = oracle_head(rw, roots, z)
            quad = c * (z**roots.m_plus * tail + z**roots.m_minus * (head - head_bar))
            size = c * (z**roots.m_plus * tail_abs + z**roots.m_minus * (head_abs + head_bar_abs))
            worst_psi = max(worst_psi, abs(float(m.psi(z)) - quad) / size)
    ok = worst_g <= 1e-8 and worst_psi <= 1e-8
    line(4, "closed forms vs quadrature", ok,
         f"{len(models)} sets x 50 points, G worst={worst_g:.2e}, premium worst={worst_psi:.2e}")
    assert ok


def test_05_free_boundary(line):
    m = solve(p0(1.2, y1=1.0, y2=0.0))
    b = m.boundary
    j_err = abs(b.j - 1.98317) / 1.98317
    scaled = b.residual / b.scale
    scan = np.linspace(b.j / 1001, b.j * 1000 / 1001, 1000)
    changes = fb.sign_changes(fb.tail_integral_G(m.reward, m.roots, scan))
    ok = j_err <= 1e-5 and scaled <= 1e-10 and changes == 1
    line(5, "free boundary", ok,
         f"j={b.j:.8f} (rel err {j_err:.1e}), z_bar={b.z_bar:.12g}, |G(z_bar)|/|G(j)|={scaled:.1e}, "
         f"sign changes={changes}")
    assert ok


def test_06_variational_inequality(line):
    m = solve(p0(1.2))
    zb = m.z_bar
    theta = m.params.theta
    above = log_grid(zb * (1 + 1e-6), 1e3 * m.boundary.j, 500)
    ratios = [float(m.psi(z)) / fb.premium_scale_at(m.reward, m.roots, z, theta) for z in above]
    sign_ok = max(ratios) <= 1e-12
    scale = fb.premium_scale_at(m.reward, m.roots, zb, theta)
    at_bar = abs(float(m.psi(zb))) / scale
    slope = abs(float(m.psi_derivative(zb * (1 + 1e-12), 1))) * zb / scale
    ok = sign_ok and at_bar <= 1e-6 and slope <= 1e-6
    line(6, "variational inequality (premium <= 1e-12 scale above z_bar)", ok,
         f"max premium/scale above z_bar={max(ratios):.3e} (min {min(ratios):.3e}), "
         f"premium at z_bar={at_bar:.1e}, slope at z_bar+={slope:.1e}")
    assert ok


def test_07_regime_theorem(line):
    gap = 1.0
    below = [solve(p0(L)).regime for L in (0.5, 0.8, 0.99)]
    at = solve(p0(gap)).regime
    Ls = np.linspace(1.5, gap + 0.01, 10)
    z_bars = [solve(p0(float(L))).z_bar for L in Ls]
    decreasing = all(b < a for a, b in zip(z_bars, z_bars[1:]))
    ok = (
        all(r is Regime.DELAY_FOREVER for r in below)
        and at is Regime.KNIFE_EDGE
        and all(z is not None for z in z_bars)
        and decreasing
        and z_bars[-1] < 1e-3 * z_bars[0]
    )
    line(7, "regime split at the income gap", ok,
         f"below={[r.value for r in below]}, at gap={at.value}, z_bar from {z_bars[0]:.4g} "
         f"down to {z_bars[-1]:.3g} over 10 points, monotone={decreasing}")
    assert ok


def test_08_merton_limit(line):
    p = p0(1.2, y2=0.3)
    c_err, pi_err = merton_limit_errors(p, L=1e-9, n=20)
    # the same consumption rule measured against K at the undiscounted rate rho
    small = solve(p.with_updates(L=1e-9))
    from retire_dual.policy import consumption, wealth_of_dual

    z = 1.0
    eff = float(wealth_of_dual(Phase.POST, small, z)) + p.y2 / p.r
    literal = abs(float(consumption(Phase.POST, small.params, z)) - p.K * eff) / (p.K * eff)
    ok = c_err <= 1e-6 and pi_err <= 1e-6
    line(8, "Merton limit of post-retirement policies", ok,
         f"20 points, c vs k_dual(w + y2/r) rel err={c_err:.1e}, pi fraction rel err={pi_err:.1e}; "
         f"against K at rate rho the gap is {literal:.2f}")
    assert ok


def test_09_budget_drift_identity(line):
    m = solve(p0(1.2))
    pre = max(drift_identity_error(m, Phase.PRE, z) for z in drift_points(m, Phase.PRE, 20))
    post = max(drift_identity_error(m, Phase.POST, z) for z in drift_points(m, Phase.POST, 20))
    ok = pre <= 1e-4 and post <= 1e-4
    line(9, "budget-drift identity", ok, f"20 points per phase, worst relative pre={pre:.1e}, post={post:.1e}")
    assert ok


@pytest.mark.slow
def test_10_monte_carlo(line):
    m = solve(p0(1.2))
    t0 = time.perf_counter()
    mart = martingale_check(SimConfig(MC_PATHS, 25.0, 1 / 12, MC_SEED, z0=0.5), m, workers=1)
    post_cfg = SimConfig(MC_PATHS, 400.0, 0.25, MC_SEED, z0=0.5)
    post = budget_check(post_cfg, m, Phase.POST, workers=1)
    pre = budget_check(SimConfig(MC_PATHS, 100.0, 0.25, MC_SEED, w0=20.0), m, Phase.PRE, workers=1)
    elapsed = time.perf_counter() - t0
    rerun = budget_check(post_cfg, m, Phase.POST, workers=4)
    same = (rerun.estimate, rerun.std_error) == (post.estimate, post.std_error)
    ok = all(e.passed for e in mart) and post.passed and pre.passed and same and elapsed < 60.0
    zs = ", ".join(f"{e.label}:{e.z_score:.2f}" for e in mart)
    line(10, "Monte Carlo martingale and static budget", ok,
         f"{MC_PATHS} paths; martingale z-scores [{zs}]; post budget {post.estimate:.6g} vs "
         f"{post.target:.6g} (z={post.z_score:.2f}); pre budget {pre.estimate:.6g} vs {pre.target:.6g} "
         f"(z={pre.z_score:.2f}); identical with 4 workers={same}; {elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_11_end_to_end_verify(line, tmp_path):
    results = {}
    for name in ("delay_forever", "knife_edge", "retirement_feasible"):
        out = tmp_path / name
        code = main(["verify", "--config", str(CONFIGS / f"{name}.json"), "--out", str(out)])
        rep = json.loads((out / "verification.json").read_text())
        populated = bool(rep["checks"]) and all(
            c["status"] in ("pass", "skipped") and (c["status"] == "skipped" or c["measured"] is not None)
            for c in rep["checks"]
        ) and rep["regime"] and "params" in rep
        results[name] = (code, populated, rep["n_pass"], rep["n_skipped"])
    ok = all(code == 0 and populated for code, populated, _, _ in results.values())
    detail = "; ".join(f"{k}: exit {v[0]}, {v[2]} pass, {v[3]} skipped" for k, v in results.items())
    line(11, "verify on shipped configs", ok, detail)
    assert ok
