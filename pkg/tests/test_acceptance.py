"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary lines appear under
"acceptance criteria" at the end of the pytest output.
"""

from __future__ import annotations

import time
from dataclasses import replace

import numpy as np
import pytest

from boltplan.estimation import KalmanEstimate, kalman_update, ransac_plane
from boltplan.fixtures import load_shipped_problem, shipped_problem_names, solvable_fixtures, wide_fixtures
from boltplan.geometry import Pose6, log_so3
from boltplan.harness import OracleConfig, ScenarioConfig, bench_speculation, mate_trial, run_task
from boltplan.kinematics import DEFAULT_DH, ChassisPose, fk, jacobian
from boltplan.oracle import SymbolicOracle, noisy_wrap
from boltplan.pddl import format_domain, format_problem, ground, load_shipped_domain, parse_domain, parse_problem
from boltplan.planner import Plan, bfs_plan, heuristic_plan, reachable_states, relevant_actions, validate_plan
from boltplan.reach import reachability_penalty
from boltplan.rpsn import TrainConfig, bolt_sampler, init_params, random_bolt, random_bolts, rpsn_loss, rpsn_train
from boltplan.scene import FailureConfig, NoiseConfig

DOMAIN = load_shipped_domain()


def _actions(problem):
    return relevant_actions(problem.init, ground(DOMAIN, problem))


def _rel(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(b), 1e-12))


@pytest.fixture(scope="module")
def fixtures100():
    return solvable_fixtures(100, seed=2024)


# 1 ------------------------------------------------------------------ mate precision

def test_criterion_1_mate_precision(verdict):
    t0 = time.perf_counter()
    trials = [mate_trial(seed, NoiseConfig(sigma_pos=2.0)) for seed in range(100)]
    elapsed = time.perf_counter() - t0
    worst = max(t.position_error_mm for t in trials)
    iters = max(t.iterations for t in trials)
    ok = all(t.converged for t in trials) and worst < 0.5 and iters <= 20 and elapsed < 10.0
    assert verdict(1, ok, f"max error {worst:.3f} mm, max iterations {iters}, "
                          f"{sum(t.converged for t in trials)}/100 converged, {elapsed:.2f} s")


# 2 ------------------------------------------------------------------ speculation

@pytest.mark.slow
def test_criterion_2_speculation(verdict):
    t0 = time.perf_counter()
    params, _ = rpsn_train(init_params(0), bolt_sampler(0), TrainConfig(steps=2000, log_every=0))
    train_s = time.perf_counter() - t0
    rows = {r.method: r for r in bench_speculation(1000, seed=99, params=params)}
    rpsn, rand = rows["rpsn"], rows["random"]
    ok = (train_s <= 300.0 and rpsn.mean_attempts <= 1.5 and rpsn.single_attempt >= 0.90
          and rand.mean_attempts >= 5.0 * rpsn.mean_attempts)
    assert verdict(2, ok, f"training {train_s:.0f} s; rpsn mean {rpsn.mean_attempts:.3f}, single "
                          f"{rpsn.single_attempt:.3f}; random mean {rand.mean_attempts:.2f} "
                          f"({rand.mean_attempts / rpsn.mean_attempts:.1f}x)")


# 3 ------------------------------------------------------------------ planning robustness

def test_criterion_3_noisy_oracle(verdict, fixtures100):
    solved = valid = 0
    for i, p in enumerate(fixtures100):
        acts = _actions(p)
        oracle = noisy_wrap(SymbolicOracle(), 0.1, np.random.default_rng([7, i]))
        plan = heuristic_plan(p.init, p.goal, acts, oracle)
        if isinstance(plan, Plan):
            solved += 1
            valid += validate_plan(p.init, p.goal, plan.actions)[0]
    ok = solved >= 95 and valid == solved
    assert verdict(3, ok, f"{solved}/100 solved, {valid}/{solved} plans validate")


# 4 ------------------------------------------------------------------ heuristic efficiency

@pytest.mark.slow
def test_criterion_4_heuristic_efficiency(verdict):
    probs = wide_fixtures(100, seed=5)
    bfs_total = heur_total = 0
    same_len = 0
    under_half = 0
    for p in probs:
        acts = _actions(p)
        b = bfs_plan(p.init, p.goal, acts)
        h = heuristic_plan(p.init, p.goal, acts, SymbolicOracle())
        assert isinstance(b, Plan) and isinstance(h, Plan)
        bfs_total += b.expansions
        heur_total += h.expansions
        same_len += len(h.actions) == len(b.actions)
        under_half += h.expansions < 0.5 * b.expansions
    ratio = heur_total / bfs_total
    ok = ratio < 0.5 and same_len == 100
    assert verdict(4, ok, f"expansions {heur_total}/{bfs_total} = {ratio:.3f}; equal length {same_len}/100; "
                          f"per-fixture ratio < 0.5 on {under_half}/100")


# 5 ------------------------------------------------------------------ continuous disassembly

@pytest.mark.slow
def test_criterion_5_continuous(verdict):
    noisy = ScenarioConfig(task="continuous_15", seed=1, trials=200, noise=NoiseConfig(sigma_pos=2.0),
                           failures=FailureConfig(0.02), replan_budget=5)
    clean = replace(noisy, noise=NoiseConfig.zero(), failures=FailureConfig(0.0))
    r1 = run_task(noisy)
    r0 = run_task(clean)
    ok = r1.success_rate >= 0.95 and r0.success_rate == 1.0
    assert verdict(5, ok, f"noisy {r1.success_rate:.3f} causes {r1.cause_counts}; zero-noise {r0.success_rate:.3f}")


# 6 ------------------------------------------------------------------ task analogs

@pytest.mark.slow
def test_criterion_6_task_analogs(verdict):
    parts = []
    ok = True
    for task in ("sleeve_replace", "obstacle_clear", "designated_area"):
        cfg = ScenarioConfig(task=task, seed=1, trials=200, noise=NoiseConfig(sigma_pos=2.0),
                             failures=FailureConfig(0.02), replan_budget=5)
        rep = run_task(cfg)
        wins = [t for t in rep.trials if t.success]
        order = [t.order_ok for t in wins if t.order_ok is not None]
        order_ok = all(order)
        ok &= rep.success_rate >= 0.95 and order_ok
        parts.append(f"{task} {rep.success_rate:.3f}" + (f" order {sum(order)}/{len(order)}" if order else ""))
    assert verdict(6, ok, "; ".join(parts))


# 7 ------------------------------------------------------------------ numerical core

def _jacobian_errors(rng, n):
    dh = DEFAULT_DH
    errs = []
    for _ in range(n):
        q = rng.uniform(dh.lower, dh.upper) * 0.9
        fd = np.zeros((6, 6))
        h = 1e-6
        for i in range(6):
            e = np.zeros(6)
            e[i] = h
            Tp, Tm = fk(q + e), fk(q - e)
            fd[:3, i] = (Tp.p - Tm.p) / (2 * h)
            fd[3:, i] = log_so3(Tp.R @ Tm.R.T) / (2 * h)
        errs.append(_rel(jacobian(q), fd))
    return errs


def _penalty_errors(rng, n):
    errs = []
    steps = np.array([1e-3, 1e-3, 1e-6])
    while len(errs) < n:
        b = random_bolt(rng)
        c = np.array([b.p[0] + rng.uniform(-900, 900), b.p[1] + rng.uniform(-900, 900), rng.uniform(-np.pi, np.pi)])
        v, g = reachability_penalty(ChassisPose(*c), b)
        if v <= 1e-8:
            continue  # flat region: zero gradient on both sides
        fd = np.zeros(3)
        for i in range(3):
            e = np.zeros(3)
            e[i] = steps[i]
            fd[i] = (reachability_penalty(ChassisPose(*(c + e)), b)[0]
                     - reachability_penalty(ChassisPose(*(c - e)), b)[0]) / (2 * steps[i])
        errs.append(_rel(g, fd))
    return errs


def _loss_errors(rng, n):
    base = init_params(1)
    flat = base.flat()
    bolts = random_bolts(rng, 8)
    errs = []
    for _ in range(n):
        p = base.with_flat(flat + rng.normal(0, 0.05, flat.size))
        _, g = rpsn_loss(p, bolts)
        d = rng.normal(size=flat.size)
        d /= np.linalg.norm(d)
        h = 1e-5
        fd = (rpsn_loss(p.with_flat(p.flat() + h * d), bolts)[0] - rpsn_loss(p.with_flat(p.flat() - h * d), bolts)[0]) / (2 * h)
        errs.append(abs(fd - g.flat() @ d) / max(abs(fd), 1e-12))
    return errs


def _kalman_pd_failures(rng, sequences, length=5):
    bad = 0
    for _ in range(sequences):
        A = rng.normal(size=(6, 6))
        P = A @ A.T + 1e-3 * np.eye(6)
        B = rng.normal(size=(6, 6)) * rng.uniform(0, 1)
        Q = B @ B.T * 1e-2
        est = KalmanEstimate(rng.normal(size=6), P, Q, np.eye(6))
        for _ in range(length):
            C = rng.normal(size=(6, 6))
            R = C @ C.T + 10.0 ** rng.uniform(-6, 0) * np.eye(6)
            est = kalman_update(KalmanEstimate(est.mean, est.covariance, Q, R), rng.normal(size=6))
            if np.linalg.eigvalsh(est.covariance).min() <= 0:
                bad += 1
                break
    return bad


def _ransac_misses(rng, trials=100):
    misses = 0
    for _ in range(trials):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        u = np.cross(n, rng.normal(size=3))
        u /= np.linalg.norm(u)
        v = np.cross(n, u)
        total, k = 200, 40
        a, b = rng.uniform(-20, 20, (2, total - k))
        inl = a[:, None] * u + b[:, None] * v + rng.normal(0, 0.05, total - k)[:, None] * n + 5 * n
        pts = np.vstack([inl, rng.uniform(-20, 20, (k, 3)) + 5 * n])
        rng.shuffle(pts)
        m = ransac_plane(pts, 200, 0.2, rng)
        misses += np.degrees(np.arccos(min(1.0, abs(float(m.normal @ n))))) > 0.5
    return misses


def test_criterion_7_numerical_core(verdict):
    rng = np.random.default_rng(77)
    j = max(_jacobian_errors(rng, 50))
    p = max(_penalty_errors(rng, 50))
    lo = max(_loss_errors(rng, 50))
    pd_bad = _kalman_pd_failures(rng, 10_000)
    miss = _ransac_misses(rng)
    ok = j < 1e-4 and p < 1e-4 and lo < 1e-4 and pd_bad == 0 and miss <= 1
    assert verdict(7, ok, f"rel err jacobian {j:.1e}, penalty {p:.1e}, loss {lo:.1e}; "
                          f"non-PD sequences {pd_bad}/10000; RANSAC misses {miss}/100")


# 8 ------------------------------------------------------------------ symbolic core

def test_criterion_8_symbolic_core(verdict, fixtures100):
    optimal = checked = equal = 0
    for p in fixtures100:
        acts = _actions(p)
        b = bfs_plan(p.init, p.goal, acts)
        dist = reachable_states(p.init, acts, cap=100_000)
        if dist is not None:
            checked += 1
            best = min(d for s, d in dist.items() if p.goal.satisfied(s))
            optimal += len(b.actions) == best
        h = heuristic_plan(p.init, p.goal, acts, SymbolicOracle())
        equal += isinstance(h, Plan) and len(h.actions) == len(b.actions)
    dom_ok = parse_domain(format_domain(DOMAIN)) == DOMAIN
    probs_ok = all(parse_problem(format_problem(q), DOMAIN) == q
                   for q in map(load_shipped_problem, shipped_problem_names()))
    ok = optimal == checked and checked > 0 and dom_ok and probs_ok and equal == 100
    assert verdict(8, ok, f"bfs optimal {optimal}/{checked} enumerable fixtures; round-trip domain {dom_ok}, "
                          f"problems {probs_ok}; heuristic length-equal {equal}/100")
