"""Acceptance criteria, one test per criterion, each recording a PASS/FAIL line.

The case-study sweeps are run once per module and shared by the criterion
test and the per-run property tests that follow it.
"""

import time

import numpy as np
import pytest

from transfer_stab import cli, repro, sdp
from transfer_stab.data import discretize_zoh
from transfer_stab.linalg import spectral_radius
from transfer_stab.repro import REACTOR_G, REACTOR_H, RunSettings
from transfer_stab.verify import closed_loop_sweep, run_slemma_selftest

from test_sdp import _random_feasible, closed_form_problems
from test_sets import outer_ball_violations, random_compact

pytestmark = pytest.mark.slow

SEEDS = range(100)


def sweep(mode, noisy):
    case = repro.CASES[mode]()
    runs = []
    for seed in SEEDS:
        t0 = time.perf_counter()
        out = repro.run_case(case, RunSettings(seed=seed, noisy_source=noisy))
        runs.append((seed, out, time.perf_counter() - t0))
    return runs


@pytest.fixture(scope="module")
def fo_clean():
    return sweep("repro-first-order", False)


@pytest.fixture(scope="module")
def fo_noisy():
    return sweep("repro-first-order", True)


@pytest.fixture(scope="module")
def reactor():
    return {False: sweep("repro-reactor", False), True: sweep("repro-reactor", True)}


def feasible(runs):
    return [r for r in runs if r[1].result["status"] == "Feasible"]


def run_checks_ok(out, grid=True):
    """Certificate and closed-loop checks of one feasible run."""
    syn, ver = out.result["synthesis"], out.result["verification"]
    ok = syn["lmi_min_eig"] >= -1e-7 and syn["schur_min_eig"] <= 1e-6
    ok = ok and ver["target_radius"] < 1 and ver["all_stable"] and ver["lyapunov_oracle"]["holds"]
    if grid:
        ok = ok and ver["grid_points"] >= 1000 and ver["grid_max_radius"] < 1
    return ok


def bad_runs(runs, grid=True):
    return [s for s, out, _ in runs if out.result["status"] == "Feasible" and not run_checks_ok(out, grid)]


def uncertified(runs):
    """Seeds that neither succeeded nor returned a certified Infeasible/Inconclusive."""
    return [s for s, out, _ in runs if out.result["status"] not in ("Feasible", "Infeasible", "Inconclusive")]


# first-order, noiseless source


def test_first_order_noiseless(fo_clean, report):
    n_ok = len(feasible(fo_clean))
    bad = bad_runs(fo_clean)
    tmax = max(t for _, _, t in fo_clean)
    ok = n_ok >= 95 and not bad and tmax < 5.0
    detail = f"feasible {n_ok}/100 (need >= 95), failed checks {bad}, max runtime {tmax:.2f}s (< 5s)"
    assert report("first-order noiseless source", ok, detail), detail


# printed-gain arithmetic


def test_printed_gain_arithmetic(report):
    src = repro.first_order_case().source
    r1 = closed_loop_sweep([src], [[-17.76]]).radii[0]
    r2 = closed_loop_sweep([src], [[-24.63]]).radii[0]
    ok = abs(r1 - 0.29284) <= 1e-12 and abs(r2 - 0.01117) <= 1e-12 and r1 < 1 and r2 < 1
    detail = f"|1.021-0.041*17.76| = {r1:.12f}, |1.021-0.041*24.63| = {r2:.12f}"
    assert report("printed-gain arithmetic", ok, detail), detail


# first-order, noisy source


def test_first_order_noisy(fo_noisy, report):
    n_ok = len(feasible(fo_noisy))
    rank_ok = all(out.result["source"]["full_row_rank"] for _, out, _ in fo_noisy)
    r_ok = all(out.result["source"]["radius"] >= out.result["epsilon"] for _, out, _ in fo_noisy)
    bad = bad_runs(fo_noisy)
    tmax = max(t for _, _, t in fo_noisy)
    ok = n_ok >= 90 and rank_ok and r_ok and not bad and not uncertified(fo_noisy) and tmax < 10.0
    detail = (f"feasible {n_ok}/100 (need >= 90), rank check {rank_ok}, r >= eps {r_ok}, "
              f"failed checks {bad}, max runtime {tmax:.2f}s (< 10s)")
    assert report("first-order noisy source", ok, detail), detail


def test_first_order_noisy_runs_are_sound(fo_noisy):
    """Every seed is either a verified gain or a certified infeasibility."""
    assert not bad_runs(fo_noisy)
    assert not uncertified(fo_noisy)
    for _, out, _ in fo_noisy:
        assert out.result["source"]["full_row_rank"]
        assert out.result["source"]["radius"] >= out.result["epsilon"]


# batch reactor


def test_batch_reactor(reactor, report):
    rho = spectral_radius(discretize_zoh(REACTOR_G, REACTOR_H, 0.01).A)
    parts, ok = [f"open-loop radius {rho:.4f}"], rho > 1
    for noisy, runs in reactor.items():
        feas = feasible(runs)
        full = all(out.result["verification"]["samples_accepted"] == 100 for _, out, _ in feas)
        bad = bad_runs(runs, grid=False)
        unc = uncertified(runs)
        tmax = max(t for _, _, t in runs)
        ok = ok and len(feas) >= 80 and full and not bad and not unc and tmax < 60.0
        parts.append(f"{'noisy' if noisy else 'noiseless'}: feasible {len(feas)}/100 (need >= 80), "
                     f"101-system sweeps stable {not bad and full}, uncertified {unc}, max runtime {tmax:.2f}s")
    detail = "; ".join(parts)
    assert report("batch reactor", ok, detail), detail


def test_batch_reactor_never_returns_bad_gain(reactor):
    for runs in reactor.values():
        assert not uncertified(runs)
        assert not bad_runs(runs, grid=False)
        for _, out, t in runs:
            assert t < 60.0
            if out.result["status"] == "Feasible":
                radii = [float(ln.split(",")[1]) for ln in out.artifacts["sweep.csv"].splitlines()[1:]]
                assert len(radii) == 101 and max(radii) < 1


# outer-ball containment


def test_outer_ball_containment(report):
    rng = np.random.default_rng(2024)
    worst = -np.inf
    for k in range(20):
        _, q = random_compact(rng, 1 + k % 3, 1 + k % 2)
        worst = max(worst, outer_ball_violations(q, float(rng.uniform(0.01, 0.5)), rng))
    from transfer_stab import sets
    from transfer_stab.data import energy_bound_from_amplitude, make_random_inputs, simulate

    src = repro.first_order_case().source
    d = simulate(src, [0.0], make_random_inputs(1, 200, 10.0, 0))
    outer = sets.outer_ball(sets.qmi_from_data(d, energy_bound_from_amplitude(1, 200, 0.0)), 0.025)
    eps = sets.epsilon_ball(src, 0.025)
    collapse = max(np.max(np.abs(X - Y)) for X, Y in ((outer.A, eps.A), (outer.B, eps.B), (outer.C, eps.C)))
    ok = worst <= 1e-9 and collapse <= 1e-10
    detail = f"20 sets x 1e4 members, worst lambda_max {worst:.3g} (<= 1e-9); Q=0 collapse {collapse:.2g} (<= 1e-10)"
    assert report("outer-ball containment", ok, detail), detail


# S-procedure oracle


def test_s_procedure_oracle(report):
    rep = run_slemma_selftest(n_instances=100, samples=10**4, seed=0, converse_samples=10**5)
    s = rep["summary"]
    ok = s["passed"] and s["scalar_p3_instances"] > 0
    detail = (f"{s['instances']} instances, (III) found {s['III_found']}, (I) holds {s['I_holds']}, "
              f"(III)=>(I) failures {s['III_implies_I_failures']}, strict-filter mismatches "
              f"{s['strict_filter_mismatches']}, p=3 q=1 instances {s['scalar_p3_instances']}, "
              f"suspected sampling gaps (soft) {s['suspected_sampling_gaps']}")
    assert report("S-procedure oracle", ok, detail), detail


# SDP solver


def test_sdp_unit_suite(report):
    worst_obj, worst_res = 0.0, np.inf
    statuses = []
    for _, prob, opt in closed_form_problems():
        sol = sdp.solve(prob)
        statuses.append(sol.status)
        worst_obj = max(worst_obj, abs(sol.objective_value - opt))
        worst_res = min(worst_res, min(sdp.residuals(prob, sol.x)))
    rng = np.random.default_rng(2024)
    infeasible = 0
    for trial in range(100):
        k = int(rng.integers(1, 6))
        dims = [int(d) for d in rng.integers(1, 6, size=int(rng.integers(1, 4)))]
        xs, blocks = _random_feasible(rng, k, dims, trial % 2 == 0)
        if trial % 4 < 2:
            p = sdp.SdpProblem(np.zeros(k), blocks)
        else:
            p = sdp.SdpProblem(rng.standard_normal(k), blocks, lower=xs - 5, upper=xs + 5)
        infeasible += sdp.solve(p).status is sdp.Status.INFEASIBLE
    ok = (len(statuses) >= 10 and all(s is sdp.Status.OPTIMAL for s in statuses)
          and worst_obj <= 1e-6 and worst_res >= -1e-8 and infeasible == 0)
    detail = (f"{len(statuses)} closed-form problems, worst objective error {worst_obj:.2g} (<= 1e-6), "
              f"worst residual {worst_res:.2g} (>= -1e-8); random feasible reported Infeasible {infeasible}/100")
    assert report("SDP solver unit suite", ok, detail), detail


# determinism


def test_determinism(tmp_path, report):
    runs = [
        ["--mode", "repro-first-order", "--figures"],
        ["--mode", "repro-first-order", "--noisy-source", "--seed", "5"],
        ["--mode", "repro-reactor", "--seed", "1"],
        ["--mode", "repro-reactor", "--noisy-source"],
    ]
    diffs = []
    for i, args in enumerate(runs):
        a, b = tmp_path / f"{i}a", tmp_path / f"{i}b"
        cli.main(args + ["--out", str(a)])
        cli.main(args + ["--out", str(b)])
        fa = {p.name: p.read_bytes() for p in sorted(a.iterdir())}
        fb = {p.name: p.read_bytes() for p in sorted(b.iterdir())}
        if not fa or fa != fb:
            diffs.append(" ".join(args))
    ok = not diffs
    detail = f"{len(runs)} repro commands run twice, differing: {diffs or 'none'}"
    assert report("determinism", ok, detail), detail
