"""Acceptance checks, one test per criterion; each prints a PASS/FAIL line (see the terminal summary)."""
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from roughscl.flows import build_coefficients, integrate_points, solve_transport_flow
from roughscl.harness import (
    audit_linf,
    audit_max_principle,
    audit_tv,
    calibrate_scheme_constant,
    default_config,
    divergence_audit,
    entropy_audit,
    expansion_shock_residual,
    oracle_burgers_shock,
    oracle_linear_advection,
    run_rate_experiment,
    run_wong_zakai,
    transform_round_trip,
    twin_flux_audit,
)
from roughscl.lattice import Lattice
from roughscl.roughpath import PiecewiseLinearPath, brownian_piecewise_linear, lift, signature_increment

ROTATION = build_coefficients({"d": 2, "H": [{"name": "rotation"}]})


def _chen_sum(times, values, s, t):
    """Level-1 and level-2 increments over [s, t] by direct segment-wise accumulation."""
    knots = np.concatenate([[s], times[(times > s) & (times < t)], [t]])
    pts = np.stack([np.array([np.interp(k, times, values[:, i]) for i in range(values.shape[1])]) for k in knots])
    x1 = np.zeros(values.shape[1])
    x2 = np.zeros((values.shape[1],) * 2)
    for dx in np.diff(pts, axis=0):
        x2 += np.outer(x1, dx) + 0.5 * np.outer(dx, dx)
        x1 += dx
    return x1, x2


def test_criterion_01_rough_path_algebra(report):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst_chen = worst_geo = worst_oracle = 0.0
    for _ in range(1000):
        n, dims = int(rng.integers(1, 65)), int(rng.integers(1, 4))
        times = np.concatenate([[0.0], np.cumsum(rng.uniform(0.05, 1.0, n))])
        values = np.vstack([np.zeros(dims), np.cumsum(rng.standard_normal((n, dims)), axis=0)])
        L = lift(PiecewiseLinearPath(times, values), 2.5)
        s, t, u = np.sort(rng.uniform(0.0, times[-1], 3))
        scale = max(1.0, float(np.max(np.abs(values)))) ** 2
        a1, a2 = signature_increment(L, s, t)
        b1, b2 = signature_increment(L, t, u)
        c1, c2 = signature_increment(L, s, u)
        worst_chen = max(worst_chen, float(np.max(np.abs(c2 - (a2 + b2 + np.outer(a1, b1))))) / scale,
                         float(np.max(np.abs(c1 - a1 - b1))) / scale)
        worst_geo = max(worst_geo, float(np.max(np.abs(0.5 * (c2 + c2.T) - 0.5 * np.outer(c1, c1)))) / scale)
        o1, o2 = _chen_sum(times, values, s, u)
        worst_oracle = max(worst_oracle, float(np.max(np.abs(c2 - o2))) / scale)
    elapsed = time.perf_counter() - start
    ok = worst_chen < 1e-12 and worst_geo < 1e-12 and worst_oracle < 1e-12 and elapsed < 5.0
    report(1, ok, f"chen {worst_chen:.1e}, geometric {worst_geo:.1e}, oracle {worst_oracle:.1e} (< 1e-12); "
                  f"{elapsed:.1f} s (< 5 s)")


def test_criterion_02_flow_correctness(report):
    start = time.perf_counter()
    z = PiecewiseLinearPath([0.0, 1.0], [[0.0], [1.0]])
    end = integrate_points(ROTATION, z, np.array([[1.0, 0.0]]), 0.0, 1.0, 32)[0]
    endpoint = float(np.linalg.norm(end - [np.cos(1.0), -np.sin(1.0)]))
    lat = Lattice.from_box([-1.0, -1.0], [1.0, 1.0], 128)
    flow = solve_transport_flow(ROTATION, brownian_piecewise_linear(7, 1, 1.0, 5), lat, [0.5, 1.0], 32)
    vol, inv = flow.volume_defect(), flow.inverse_defect()
    elapsed = time.perf_counter() - start
    ok = endpoint < 1e-8 and vol < 1e-6 and inv < 1e-6 and elapsed < 10.0
    report(2, ok, f"endpoint {endpoint:.1e} (< 1e-8), |det - 1| {vol:.1e}, inverse {inv:.1e} (< 1e-6); "
                  f"{elapsed:.1f} s (< 10 s)")


def test_criterion_03_divergence_identity(report):
    coarse, fine = divergence_audit(1 / 128), divergence_audit(1 / 256)
    decay = coarse["residual_a"] / fine["residual_a"]
    report(3, decay >= 3.0, f"residual {coarse['residual_a']:.2e} -> {fine['residual_a']:.2e}, "
                            f"decay {decay:.2f} (>= 3)")


def test_criterion_04_solver_oracles(report):
    start = time.perf_counter()
    shock = oracle_burgers_shock(1 / 400)
    adv = oracle_linear_advection((1 / 100, 1 / 200, 1 / 400))
    elapsed = time.perf_counter() - start
    ok = shock["pass"] and adv["pass"] and elapsed < 30.0
    errs = ", ".join(f"{e:.2e}<{t:.2e}" for e, t in zip(adv["errors"], adv["tolerances"]))
    report(4, ok, f"shock error {shock['error']:.2e} (< 2h = {shock['tolerance']:.1e}); advection {errs}, "
                  f"monotone {adv['monotone']}; {elapsed:.1f} s (< 30 s)")


def test_criterion_05_max_principle(report):
    audits = [audit_max_principle(default_config("B1"), 1 / 400),
              audit_max_principle(default_config("B2"), 1 / 400),
              audit_max_principle(default_config("B3"))]
    ok = all(a["pass"] for a in audits)
    detail = ", ".join(f"{a['benchmark']} {a['measured']:.15g} <= {a['bound']:.15g}" for a in audits)
    report(5, ok, detail + " (to rounding)")


def test_criterion_06_linf_growth(report):
    a = audit_linf(default_config("B2"), 1 / 400)
    report(6, a["pass"], f"B2 sup {a['measured']:.4f} <= {a['bound']:.4f} + {a['allowance']:.4f} (M = {a['rate']:.3f})")


def test_criterion_07_tv_growth(report):
    audits = audit_tv(default_config("B1"), 1 / 400) + audit_tv(default_config("B2"), 1 / 400)
    ok = all(a["pass"] for a in audits)
    worst = max(audits, key=lambda a: a["measured"] / (a["bound"] + a["allowance"]))
    report(7, ok, f"{len(audits)} checks on B1/B2 at h = 1/400; tightest {worst['benchmark']} {worst['name']}: "
                  f"{worst['measured']:.4f} <= {worst['bound']:.4f} + {worst['allowance']:.4f}")


def test_criterion_08_twin_flux(report):
    C = calibrate_scheme_constant(1 / 400)
    audits = [twin_flux_audit(eps, 1 / 400, C=C) for eps in (0.05, 0.1)]
    ok = all(a["pass"] for a in audits)
    detail = "; ".join(f"{a['name']} {a['measured']:.2e} <= {a['bound']:.2e} + {a['allowance']:.2e}"
                       for a in audits)
    report(8, ok, f"{detail} (C = {C:.3f})")


@pytest.mark.slow
def test_criterion_09_wong_zakai(report):
    start = time.perf_counter()
    cfg = default_config("B3")
    res = run_wong_zakai(cfg, 1 / 256)
    D = {r["level"]: r["D"] for r in res.rows}
    decreasing = all(D[n + 1] < D[n] for n in range(3, 6))
    ratio = D[6] / D[3]
    fine = run_wong_zakai(cfg, 1 / 512, levels=[7, 8])
    floor_coarse = D[7]
    floor_fine = fine.rows[0]["D"]
    elapsed = time.perf_counter() - start
    ok = decreasing and ratio < 0.4 and floor_fine < floor_coarse and elapsed < 600 and res.passed
    seq = ", ".join(f"{D[n]:.4f}" for n in range(3, 8))
    report(9, ok, f"D_3..D_7 = {seq}; decreasing {decreasing}, D6/D3 {ratio:.3f} (< 0.4); floor "
                  f"{floor_coarse:.5f} at 1/256 -> {floor_fine:.5f} at 1/512 (must drop); {elapsed:.0f} s (< 600 s)")


def test_criterion_10_rate(report):
    b1 = run_rate_experiment(default_config("B1"))
    b3 = default_config("B3")
    b3 = b3.replace(coefficients={**b3.coefficients, "nu": [], "g": []})
    b3r = run_rate_experiment(b3, h=1 / 64)
    ok = b1.passed and b3r.passed
    detail = "; ".join(
        f"{r.config['benchmark']} spread {r.summary['ratio_spread']:.3f} (< 0.3), "
        f"contraction {r.summary['contraction_sup_gap']:.4f} <= {r.summary['contraction_data_gap']:.4f}"
        for r in (b1, b3r))
    report(10, ok, detail)


def test_criterion_11_entropy(report):
    audits = [entropy_audit(default_config("B1"), 1 / 400), entropy_audit(default_config("B2"), 1 / 400),
              entropy_audit(default_config("B3"), 1 / 64)]
    expansion = expansion_shock_residual(1 / 400)
    ok = all(a["pass"] for a in audits) and expansion < -0.1
    detail = ", ".join(f"{a['benchmark']} {-a['measured']:.1e}" for a in audits)
    report(11, ok, f"residuals {detail} (>= -1e-3); expansion shock {expansion:.3f} (< -0.1)")


def test_criterion_12_round_trip(report):
    coarse, fine = transform_round_trip(1 / 64), transform_round_trip(1 / 128)
    ratio = fine / coarse
    report(12, ratio <= 0.55, f"round trip {coarse:.2e} -> {fine:.2e}, ratio {ratio:.3f} (halves: <= 0.55)")


def _run_cli(args, out, threads):
    cmd = [sys.executable, "-m", "roughscl", *args, "--out", str(out), "--threads", str(threads)]
    subprocess.run(cmd, check=True, capture_output=True)
    return {p.name: p.read_bytes() for p in sorted(Path(out).iterdir())}


def test_criterion_13_determinism(report, tmp_path):
    b1 = default_config("B1").replace(grid={"h": 1 / 100}, driver={"levels": [3, 4, 5], "level": 5})
    b3 = default_config("B3").replace(grid={"h": 1 / 32}, driver={"levels": [3, 4, 5], "level": 5})
    b1.save(tmp_path / "b1.json")
    b3.save(tmp_path / "b3.json")
    jobs = [["lift", "--config", str(tmp_path / "b1.json")],
            ["solve", "--config", str(tmp_path / "b1.json")],
            ["wongzakai", "--config", str(tmp_path / "b3.json")]]
    same, files = True, 0
    for i, job in enumerate(jobs):
        runs = [_run_cli(job, tmp_path / f"{i}-{k}", threads) for k, threads in enumerate((1, 1, 2))]
        files += len(runs[0])
        same = same and len(runs[0]) > 0 and runs[0] == runs[1] == runs[2]
    report(13, same, f"{files} output files byte-identical across two runs and threads 1/2")
