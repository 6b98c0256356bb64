"""Acceptance criteria, one test per criterion, each printing a pass/fail line.

Criteria 1-6 exercise the published scenario parameters end to end. Several of
them cannot pass with the constraint rows implemented as specified: at
k3 = alpha = 1 the filtered controller's safety row demands roughly ten times
more barrier boost than the rate rows allow (422.9 needed, 44.5 available at
t = 0), so its QP is infeasible immediately, and the direct benchmark's
sampled-data run lets b dip ~4e-4 below zero between enforcement instants.
Those tests assert the stated gates anyway and fail honestly with the measured
numbers in their printed lines.
"""

import math

import numpy as np

import fcbf.qp as qp
from fcbf.logio import render_csv
from fcbf.model import augmented_rhs, unicycle_rhs
from fcbf.sim import Controller, integrate, run
from fcbf.verify import deriv_check_suite, lipschitz_estimate

from conftest import make_config
from qp_oracle import enumerate_optimum, random_problem

_LOGS = {}


def cached_run(key, **kwargs):
    if key not in _LOGS:
        _LOGS[key] = run(make_config(**kwargs))
    return _LOGS[key]


def paper_runs():
    fcbf = cached_run("fcbf", controller=Controller.FCBF)
    hocbf = cached_run("hocbf", controller=Controller.HOCBF)
    return fcbf, hocbf


def report(criterion, ok, detail):
    print(f"[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")


def test_criterion_1_safety_invariance():
    fcbf, hocbf = paper_runs()
    u_min, u_max = make_config(controller=Controller.FCBF).input_bounds.as_arrays()
    uf_ok = all(
        u_min[0] - 1e-9 <= r.uf[0] <= u_max[0] + 1e-9
        and u_min[1] - 1e-9 <= r.uf[1] <= u_max[1] + 1e-9
        for r in fcbf.records if r.uf is not None
    )
    detail = (
        f"fcbf steps={fcbf.summary.n_steps}/50 status={fcbf.summary.status} "
        f"min_b={fcbf.summary.min_b:.6g} uf_in_bounds={uf_ok}; "
        f"hocbf steps={hocbf.summary.n_steps}/50 min_b={hocbf.summary.min_b:.6g}"
    )
    ok = (fcbf.summary.n_steps == 50 and fcbf.summary.min_b >= -1e-6 and uf_ok
          and hocbf.summary.min_b >= -1e-6)
    report(1, ok, detail)
    assert fcbf.summary.n_steps == 50, (
        "published filtered run stops infeasible at step 0 "
        "(rate-row budget 44.5 vs required 422.9 at t = 0)"
    )
    assert fcbf.summary.min_b >= -1e-6 and uf_ok
    assert hocbf.summary.min_b >= -1e-6, (
        f"sampled-data barrier leak: min_b={hocbf.summary.min_b:.6g}"
    )


def test_criterion_2_lipschitz_bound():
    fcbf, _ = paper_runs()
    cfg = fcbf.config
    alpha = cfg.gains.alpha.gain
    u_min, u_max = cfg.input_bounds.as_arrays()
    ufs = np.array([r.uf for r in fcbf.records if r.uf is not None])
    n_pairs = max(0, len(ufs) - 1)
    if n_pairs:
        rates = np.abs(np.diff(ufs, axis=0)) / cfg.dt
        starts = ufs[:-1]
        bound = np.maximum(alpha * (starts - u_min), alpha * (u_max - starts))
        ok = bool(np.all(rates <= bound + 1e-6))
        detail = f"{n_pairs} step pairs, max margin {(rates - bound).max():.3g}"
    else:
        ok = False
        detail = "no completed step pairs on the published filtered run"
    report(2, ok, detail)
    assert n_pairs > 0, detail
    assert ok


def test_criterion_3_goal_convergence():
    fcbf, _ = paper_runs()
    dist = fcbf.summary.terminal_goal_distance
    rd = fcbf.config.unicycle.goal_tol_rd
    ok = fcbf.summary.status == "completed" and dist <= 0.3
    report(3, ok, f"terminal distance {dist:.4g} m (gate 0.3 m, published target r_d={rd})")
    assert fcbf.summary.status == "completed", "run stops at step 0; no terminal motion"
    assert dist <= 0.3


def test_criterion_4_smoothness_ordering():
    fcbf, hocbf = paper_runs()
    r_f = lipschitz_estimate(fcbf).max_rate[0]
    r_h = lipschitz_estimate(hocbf).max_rate[0]
    comparable = fcbf.summary.n_steps > 0 and hocbf.summary.n_steps > 0
    ok = comparable and fcbf.summary.status == "completed" and r_f < r_h
    report(4, ok, f"max|du1|/dt filtered={r_f:.6g} direct={r_h:.6g} "
                  f"(filtered status={fcbf.summary.status})")
    assert fcbf.summary.status == "completed", (
        "no filtered-run input sequence to compare (run infeasible at step 0)"
    )
    assert r_f < r_h


def test_criterion_5_alpha_direction():
    log1 = cached_run("fcbf_a1", controller=Controller.FCBF, alpha=1.0)
    log5 = cached_run("fcbf_a5", controller=Controller.FCBF, alpha=5.0)
    r1 = lipschitz_estimate(log1).max_rate
    r5 = lipschitz_estimate(log5).max_rate
    both = log1.summary.status == "completed" and log5.summary.status == "completed"
    ok = both and r1[0] <= r5[0] and r1[1] <= r5[1]
    report(5, ok, f"alpha=1 rates={tuple(round(v, 6) for v in r1)} "
                  f"(status {log1.summary.status}), "
                  f"alpha=5 rates={tuple(round(v, 6) for v in r5)} "
                  f"(status {log5.summary.status})")
    assert both, "both published-parameter runs stop infeasible at step 0"
    assert r1[0] <= r5[0] and r1[1] <= r5[1]


def test_criterion_6_feasibility_contrast():
    sp_small = cached_run("sp_pi12", controller=Controller.SP_HOCBF)
    sp_big = cached_run("sp_pi6", controller=Controller.SP_HOCBF, theta0=math.pi / 6)
    fcbf, hocbf = paper_runs()
    # the small-heading sp outcome is recorded, not gated
    print(f"[criterion 6] recorded: sp-hocbf at pi/12 -> {sp_small.summary.status} "
          f"after {sp_small.summary.n_steps} steps (cost-only variant shares the "
          f"plain controller's feasible set)")
    ok = (sp_big.summary.status == "completed"
          and hocbf.summary.status == "completed"
          and fcbf.summary.status == "completed")
    report(6, ok, f"sp@pi/6={sp_big.summary.status}, hocbf@pi/12={hocbf.summary.status}, "
                  f"fcbf@pi/12={fcbf.summary.status}")
    assert sp_big.summary.status == "completed"
    assert hocbf.summary.status == "completed"
    assert fcbf.summary.status == "completed", (
        "published filtered run infeasible at step 0 (rate budget deficit)"
    )


def test_criterion_7_qp_certification():
    rng = np.random.default_rng(20250807)
    n_compared = n_infeasible = 0
    worst = 0.0
    for trial in range(1000):
        force_infeasible = trial % 5 == 0
        prob = random_problem(rng, force_infeasible=force_infeasible, use_box=False)
        sol = qp.solve(prob)
        if force_infeasible:
            assert sol.status is qp.QpStatus.INFEASIBLE
            n_infeasible += 1
            continue
        assert sol.status is qp.QpStatus.OPTIMAL
        stat, primal, comp = sol.kkt_residuals
        assert stat <= 1e-8 and primal <= 1e-8 and comp <= 1e-8
        z_oracle = enumerate_optimum(prob)
        assert z_oracle is not None
        err = float(np.max(np.abs(sol.z - z_oracle)))
        worst = max(worst, err)
        assert err <= 1e-7
        n_compared += 1
    report(7, True, f"{n_compared} optima matched the enumeration oracle "
                    f"(worst |dz|={worst:.3g}), {n_infeasible} infeasible detected")


def test_criterion_8_derivative_certification():
    cfg = make_config(controller=Controller.FCBF)
    reports = deriv_check_suite(cfg, n_samples=500)
    ok = all(r.passed for r in reports)
    detail = ", ".join(f"{r.operation}={r.max_rel_err:.2e}" for r in reports)
    report(8, ok, detail + " (threshold 1e-5, 500 samples each)")
    for r in reports:
        assert r.passed, r.format()


def test_criterion_9_integrator_accuracy():
    y = integrate(lambda t, y: -y, np.array([1.0]), 0.0, 1.0)
    err_exp = abs(y[0] - math.exp(-1))
    tau = 2e-3
    y2 = integrate(lambda t, y: (np.array([1.0, 0.0]) - y) / tau, np.zeros(2), 0.0, tau)
    err_filter = abs(y2[0] - (1 - math.exp(-1)))
    ok = err_exp <= 1e-8 and err_filter <= 1e-8
    report(9, ok, f"exp decay err={err_exp:.2e}, filter step err={err_filter:.2e}")
    assert ok


def test_criterion_10_replayability():
    _, hocbf = paper_runs()
    smooth = cached_run("smooth", controller=Controller.FCBF,
                        k1=4.0, k2=4.0, k3=2.0, alpha=5.0)
    worst = 0.0
    for log in (hocbf, smooth):
        cfg = log.config
        mass, tau = cfg.unicycle.mass_M, cfg.filter.tau
        for rec, nxt in zip(log.records[:-1], log.records[1:]):
            if cfg.controller is Controller.FCBF:
                y0 = np.array([rec.state.x, rec.state.y, rec.state.theta,
                               rec.state.v, *rec.uf])
                nu = np.array(rec.nu)
                y1 = integrate(lambda t, y: augmented_rhs(y, nu, mass, tau),
                               y0, 0.0, cfg.dt)
                target = np.array([nxt.state.x, nxt.state.y, nxt.state.theta,
                                   nxt.state.v, *nxt.uf])
            else:
                u = np.array(rec.u)
                y1 = integrate(lambda t, y: unicycle_rhs(y, u, mass),
                               rec.state.as_array(), 0.0, cfg.dt)
                target = nxt.state.as_array()
            worst = max(worst, float(np.max(np.abs(y1 - target))))
    replay_ok = worst <= 1e-9

    bytes_a = render_csv(run(smooth.config))
    bytes_b = render_csv(run(smooth.config))
    det_ok = bytes_a == bytes_b
    report(10, replay_ok and det_ok,
           f"max replay deviation {worst:.3g}, byte-identical CSV={det_ok}")
    assert replay_ok and det_ok
