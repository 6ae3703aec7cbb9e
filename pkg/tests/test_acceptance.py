"""End-to-end acceptance checks.

Each test prints a single verdict line (PASS/FAIL with the measured
numbers) before asserting, so a piped pytest run still shows the full
scorecard.  Reference values come from independent oracles: dense SVD,
pseudo-inverse least squares, central finite differences, and a long
accelerated proximal-gradient run on the same objective.
"""

import itertools
import json
import os
import time
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from slrm import apps, cli
from slrm.baseline import ApgConfig, solve_apg_homotopy
from slrm.gcg import GcgConfig, rank_estimate, recover_y, solve_homotopy
from slrm.linalg import as_operator, spmv, top_singular_pair, unvec, vec
from slrm.objective import (FactorPair, f_value, grad_f, line_search_inputs,
                            line_search_theta)
from slrm.structure import (RecoveryMode, apply_structure, block_hankel_spec,
                            build_B, build_C, hankel_spec, project_to_image,
                            two_fold_hankel_spec)

from conftest import random_hankel_problem

DESK_SSR = dict(n=2, r=2, j=6, k=8, T=2000, sigma=0.05, seed=7)
DESK_MU = 0.1


def _verdict(capsys, label, ok, detail):
    with capsys.disabled():
        print(f"[acceptance] {label}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{label}: {detail}"


def _note(capsys, label, text):
    with capsys.disabled():
        print(f"[acceptance] {label}: note: {text}")


# ---------------------------------------------------------------- structures


def _random_spec(rng, family):
    if family == "hankel":
        return hankel_spec(int(rng.integers(1, 13)), int(rng.integers(1, 13)))
    if family == "block":
        return block_hankel_spec(int(rng.integers(1, 4)), int(rng.integers(1, 4)),
                                 int(rng.integers(1, 7)), int(rng.integers(1, 7)))
    n1, n2 = int(rng.integers(1, 13)), int(rng.integers(1, 13))
    return two_fold_hankel_spec(n1, n2, int(rng.integers(1, n1 + 1)),
                                int(rng.integers(1, n2 + 1)))


def test_structure_roundtrip_property(capsys):
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    worst_b, worst_c = 0.0, 0.0
    for family in ("hankel", "block", "twofold"):
        for _ in range(200):
            spec = _random_spec(rng, family)
            y = rng.standard_normal(spec.n_params)
            q = vec(apply_structure(spec, y))
            bq = spmv(build_B(spec), q)
            if bq.size:
                worst_b = max(worst_b, float(np.abs(bq).max()))
            for mode in RecoveryMode:
                cy = spmv(build_C(spec, mode), q)
                worst_c = max(worst_c, float(np.abs(cy - y).max()))
    dt = time.perf_counter() - t0
    ok = worst_b == 0.0 and worst_c <= 1e-12 and dt < 5.0
    _verdict(capsys, "01 structure roundtrip", ok,
             f"600 draws, max|B q|={worst_b:.1e}, max|C q - y|={worst_c:.1e}, "
             f"{dt:.2f}s")


def test_recovery_matrices_small_hankel(capsys):
    spec = hankel_spec(2, 3)
    c_avg = build_C(spec, RecoveryMode.PROJECTION).to_dense()
    c_first = build_C(spec, RecoveryMode.SPARSE).to_dense()
    want_avg = np.array([
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.5, 0.5, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.5, 0.5, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
    ])
    want_first = np.array([
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
    ])
    ok = np.array_equal(c_avg, want_avg) and np.array_equal(c_first, want_first)
    _verdict(capsys, "02 recovery matrices", ok,
             "2x3 Hankel averaging and first-occurrence C match exactly")


def _structure_map(spec):
    g = np.zeros((spec.rows * spec.cols, spec.n_params))
    for i in range(spec.n_params):
        e = np.zeros(spec.n_params)
        e[i] = 1.0
        g[:, i] = vec(apply_structure(spec, e))
    return g


def test_projection_matches_pseudoinverse(capsys):
    specs = [hankel_spec(j, k)
             for j in range(1, 65) for k in range(1, 64 // j + 1)]
    for n1, n2 in itertools.product(range(1, 13), repeat=2):
        for k1, k2 in itertools.product(range(1, n1 + 1), range(1, n2 + 1)):
            sp = two_fold_hankel_spec(n1, n2, k1, k2)
            if sp.rows * sp.cols <= 64:
                specs.append(sp)
    rng = np.random.default_rng(5)
    worst = 0.0
    for spec in specs:
        x = rng.standard_normal((spec.rows, spec.cols))
        g = _structure_map(spec)
        y_ls, *_ = np.linalg.lstsq(g, vec(x), rcond=None)
        ref = unvec(g @ y_ls, spec.rows, spec.cols)
        worst = max(worst, float(np.linalg.norm(project_to_image(spec, x) - ref)))
    ok = worst <= 1e-10
    _verdict(capsys, "03 image projection", ok,
             f"{len(specs)} specs with M*N <= 64, max Frobenius gap {worst:.1e}")


def test_top_singular_pair_matches_dense_svd(capsys):
    rng = np.random.default_rng(17)
    worst_sigma, worst_res = 0.0, 0.0
    for trial in range(100):
        m = int(rng.integers(1, 81))
        n = int(rng.integers(1, 121))
        kind = trial % 3
        if kind == 0:
            a = rng.standard_normal((m, n))
        elif kind == 1:
            r = int(rng.integers(1, 1 + min(4, m, n)))
            a = (rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
                 + 1e-6 * rng.standard_normal((m, n)))
        else:
            a = rng.standard_normal((m, n)) * np.logspace(0.0, -5.0, n)[None, :]
        res = top_singular_pair(as_operator(a), tol=1e-10, max_iter=2000,
                                seed=int(rng.integers(2**31)))
        s_true = float(np.linalg.svd(a, compute_uv=False)[0])
        worst_sigma = max(worst_sigma, abs(res.sigma - s_true) / s_true)
        r1 = float(np.linalg.norm(a @ res.v - res.sigma * res.u))
        r2 = float(np.linalg.norm(a.T @ res.u - res.sigma * res.v))
        worst_res = max(worst_res, r1, r2)
    ok = worst_sigma <= 1e-8 and worst_res <= 1e-6
    _verdict(capsys, "04 top singular pair", ok,
             f"100 matrices up to 80x120, max rel sigma err {worst_sigma:.1e}, "
             f"max residual {worst_res:.1e}")


def test_gradient_matches_central_differences(capsys):
    rng = np.random.default_rng(23)
    step = 1e-5
    worst = 0.0
    for _ in range(50):
        j = int(rng.integers(2, 15))
        k = int(rng.integers(2, max(3, min(15, 200 // j + 1))))
        prob = random_hankel_problem(rng, j=j, k=k, lam=float(rng.uniform(0.1, 2)),
                                     mu=float(rng.uniform(0.05, 1)),
                                     frac=float(rng.uniform(0.4, 1)))
        r = int(rng.integers(1, 4))
        factors = FactorPair(rng.standard_normal((prob.rows, r)),
                             rng.standard_normal((r, prob.cols)))
        g = vec(grad_f(prob, factors))
        x = vec(factors.product())
        fd = np.empty_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = step
            fd[i] = (f_value(prob, x + e) - f_value(prob, x - e)) / (2 * step)
        worst = max(worst, float(np.linalg.norm(fd - g) / np.linalg.norm(g)))
    ok = worst <= 1e-5
    _verdict(capsys, "05 smooth gradient", ok,
             f"50 problems with M*N <= 200, max rel FD gap {worst:.1e}")


def test_line_search_bound_and_optimality(capsys):
    rng = np.random.default_rng(31)
    worst_gap, worst_opt = -np.inf, -np.inf
    for _ in range(50):
        prob = random_hankel_problem(rng, j=int(rng.integers(3, 9)),
                                     k=int(rng.integers(3, 9)))
        r = int(rng.integers(1, 4))
        factors = FactorPair(rng.standard_normal((prob.rows, r)),
                             rng.standard_normal((r, prob.cols)))
        eta = float(rng.uniform(0.05, 1.0))
        shrunk = factors.scaled(np.sqrt(1.0 - eta))
        gu, _, gvt = np.linalg.svd(-grad_f(prob, shrunk))
        z_u, z_v = gu[:, 0], gvt[0]
        inp = line_search_inputs(prob, shrunk, z_u, z_v, eta)
        theta_star, h_star = line_search_theta(prob, shrunk, z_u, z_v, eta)
        f0 = f_value(prob, vec(shrunk.product()))
        base = prob.mu * shrunk.surrogate()

        def h(theta):
            return (f0 + theta * (inp.slope + prob.mu)
                    + 0.5 * theta * theta * inp.curvature + base)

        assert abs(h(theta_star) - h_star) <= 1e-10 * max(1.0, abs(h_star))
        for theta in rng.uniform(0.0, 2.0 * theta_star + 1.0, size=20):
            x_cand = shrunk.product() + theta * np.outer(z_u, z_v)
            phi_cand = (f_value(prob, vec(x_cand))
                        + prob.mu * float(np.linalg.svd(x_cand, compute_uv=False).sum()))
            worst_gap = max(worst_gap, phi_cand - h(float(theta)))
        slack = 1e-12 * max(1.0, abs(h_star))
        worst_opt = max(worst_opt,
                        h_star - h(theta_star + 1e-4) - slack,
                        h_star - h(max(0.0, theta_star - 1e-4)) - slack)
    ok = worst_gap <= 1e-10 and worst_opt <= 0.0
    _verdict(capsys, "06 step line search", ok,
             f"50 iterates, max (phi - h) = {worst_gap:.1e}, "
             f"optimality slack used {worst_opt:.1e}")


# ------------------------------------------------------------- solver runs


@pytest.fixture(scope="module")
def desk():
    cfg = apps.SsrConfig(**DESK_SSR)
    data = apps.ssr_generate(cfg)
    prob = apps.ssr_problem(cfg, data, mu=DESK_MU, lam=1.0)
    t0 = time.perf_counter()
    factors, trace = solve_homotopy(prob, GcgConfig(seed=cfg.seed))
    wall = time.perf_counter() - t0
    return SimpleNamespace(cfg=cfg, prob=prob, factors=factors, trace=trace,
                           wall=wall)


@pytest.fixture(scope="module")
def reference_phi(desk):
    _, trace = solve_apg_homotopy(desk.prob, ApgConfig.oracle(5000))
    return float(trace.records[-1].phi)


def test_agrees_with_long_proximal_reference(capsys, desk, reference_phi):
    phi = float(desk.trace.records[-1].phi)
    rel = abs(phi - reference_phi) / abs(reference_phi)
    iters = len(desk.trace.records)
    ok = rel <= 1e-2 and desk.wall < 10.0 and iters <= 100
    _verdict(capsys, "07 reference agreement", ok,
             f"phi={phi:.8f} vs oracle {reference_phi:.8f}, rel gap {rel:.2e}, "
             f"{desk.wall:.2f}s, {iters} iterations")


def test_surrogate_objective_never_increases(capsys, desk):
    psi = desk.trace.column("psi")
    jumps = np.diff(psi)
    worst = float(jumps.max()) if jumps.size else 0.0
    ok = worst <= 1e-12
    _verdict(capsys, "08 surrogate descent", ok,
             f"max psi increase {worst:.1e} over {psi.size} iterations")


def test_suboptimality_rate_trend(capsys, desk, reference_phi):
    ks = desk.trace.column("iteration").astype(int)
    scaled = {int(k): (float(p) - reference_phi) * (k + 1)
              for k, p in zip(ks, desk.trace.column("phi"))}
    late = [v for k, v in scaled.items() if 10 <= k <= 100]
    early = [v for k, v in scaled.items() if 10 <= k <= 20]
    if not late:
        # Converged before iteration 10: nothing to bound, which is the
        # strongest form of the decay the check is after.
        _note(capsys, "09 rate trend",
              f"run stopped after {ks.size} iterations, windows empty")
        _verdict(capsys, "09 rate trend", True,
                 "vacuous, run converged before the measurement window")
        return
    ok = max(late) <= 3.0 * max(early)
    _verdict(capsys, "09 rate trend", ok,
             f"max scaled gap {max(late):.3e} vs early-window {max(early):.3e}")


def test_rank_trajectory_recovers_order(capsys, desk):
    y_hat = recover_y(desk.prob, desk.factors)
    h = apply_structure(desk.prob.spec, y_hat)
    final = rank_estimate(np.linalg.svd(h, compute_uv=False), 1e-3)
    ranks = desk.trace.column("rank").astype(int)
    full = min(desk.prob.rows, desk.prob.cols)
    ok = (2 <= final <= 4 and ranks[0] < full
          and bool(np.all(np.diff(ranks) >= 0))
          and (ranks.size < 2 or ranks[-1] == ranks[-2]))
    _verdict(capsys, "10 rank trajectory", ok,
             f"terminal rank {final} (true order 2), trace ranks "
             f"{ranks.tolist()} of full {full}")


def _scs_cli(capsys, out_dir, n1, n2, r, k1, k2, obs, seed):
    # run the shipped command end to end and read its printed summary
    argv = ["scs", "--n1", str(n1), "--n2", str(n2), "--r", str(r),
            "--k1", str(k1), "--k2", str(k2), "--obs", str(obs),
            "--snr", "10", "--mu", str(DESK_MU), "--lambda", "1",
            "--seed", str(seed), "--out", out_dir]
    t0 = time.perf_counter()
    assert cli.main(argv) == 0
    dt = time.perf_counter() - t0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    return float(summary["normalized_error"]), dt


def test_grid_recovery_small_and_large(capsys, tmp_path):
    err_s, dt_s = _scs_cli(capsys, str(tmp_path / "s"), 31, 31, 3, 6, 6,
                           obs=0.4, seed=3)
    err_l, dt_l = _scs_cli(capsys, str(tmp_path / "l"), 101, 101, 6, 8, 8,
                           obs=0.2, seed=0)
    ok = err_s <= 0.25 and dt_s < 60.0 and err_l < 0.5 and dt_l < 600.0
    _verdict(capsys, "11 grid recovery", ok,
             f"31x31 seed 3: err={err_s:.3f} in {dt_s:.1f}s; "
             f"101x101 seed 0: err={err_l:.3f} in {dt_l:.1f}s")


def test_per_iteration_cost_scaling(capsys):
    rows = cli.bench(reps=3, iters=10, seed=0)
    times = [row["time"] for row in rows]
    sizes = [row["MN"] for row in rows]
    ratios = [times[i + 1] / times[i] for i in range(len(times) - 1)]
    ok = all(r <= 6.0 for r in ratios)
    _verdict(capsys, "12 cost scaling", ok,
             f"MN {sizes}, per-iteration times "
             f"{[f'{t:.4f}' for t in times]}, ratios "
             f"{[f'{r:.2f}' for r in ratios]} (limit 6 per 4x)")


def _masked_trace(path):
    with open(path) as fh:
        header, *rows = fh.read().splitlines()
    cols = header.split(",")
    drop = cols.index("time_s")
    keep = lambda line: ",".join(p for i, p in enumerate(line.split(","))
                                 if i != drop)
    return "\n".join([keep(header)] + [keep(r) for r in rows])


def test_identical_seeds_identical_traces(capsys, tmp_path):
    argv = ["ssr", "--n", "2", "--r", "2", "--j", "6", "--k", "8",
            "--T", "2000", "--sigma", "0.05", "--mu", "0.1", "--lambda", "1",
            "--seed", "7", "--solver", "gcgls"]
    out_a, out_b = str(tmp_path / "a"), str(tmp_path / "b")
    assert cli.main(argv + ["--out", out_a]) == 0
    assert cli.main(argv + ["--out", out_b]) == 0
    capsys.readouterr()
    a = _masked_trace(os.path.join(out_a, "trace.csv"))
    b = _masked_trace(os.path.join(out_b, "trace.csv"))
    _note(capsys, "13 trace determinism",
          "wall-clock column excluded from the comparison")
    ok = a == b
    detail = (f"two identical-seed runs, {len(a.splitlines()) - 1} rows, "
              "remaining columns byte-identical" if ok else "traces differ")
    _verdict(capsys, "13 trace determinism", ok, detail)
