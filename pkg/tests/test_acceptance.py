"""Acceptance suite: one test per primary criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s`` or
``python tests/test_acceptance.py``.
"""

import time

import numpy as np
import pytest

from helpers import SCENARIO_FILE, certify_trace, g2, invariance_game, random_game
from stackprice.game import others_aggregate
from stackprice.io import parse_game_file
from stackprice.leader import LeaderConfig, solve_stackelberg
from stackprice.nash import NashConfig, best_response_qp, solve_nash, verify_nash
from stackprice.oracle import dense_qp_reference, fd_jacobian
from stackprice.projection import project_box
from stackprice.scenario import grid_search
from stackprice.sensitivity import follower_jacobian, schur_blocks

EPS = 1e-8
CORPUS_SEED = 20240601

pytestmark = pytest.mark.slow


def report(capsys, name, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def corpus():
    """G2 plus 100 random validated games, each solved at a random price from two random starts."""
    rng = np.random.default_rng(CORPUS_SEED)
    games = [(g2(), np.array([1.0, 0.0]))]
    while len(games) < 101:
        g = random_game(rng)
        games.append((g, rng.uniform(g.price_lo, g.price_hi)))
    t0 = time.perf_counter()
    out = []
    for g, pi in games:
        shape = (g.N, g.m_F)
        a = solve_nash(g, pi, NashConfig(eps=EPS), x0=rng.uniform(-5, 5, shape))
        b = solve_nash(g, pi, NashConfig(eps=EPS), x0=rng.uniform(-5, 5, shape))
        out.append((g, pi, a, b, verify_nash(g, a.x, pi)))
    return out, time.perf_counter() - t0


def test_nash_certification(corpus, capsys):
    runs, elapsed = corpus
    worst = max(r[4].worst for r in runs)
    agree = max(np.linalg.norm(r[2].x - r[3].x) for r in runs)
    ok = worst <= 1e-6 and agree <= 2 * EPS and elapsed < 30
    report(capsys, "Nash fixed-point certification", ok,
           f"{len(runs)} games, worst best-response gap {worst:.2e} (<=1e-6), "
           f"start disagreement {agree:.2e} (<={2 * EPS:.0e}), {elapsed:.1f}s (<30s)")


def test_contraction(corpus, capsys):
    runs, _ = corpus
    excess = -np.inf
    for _, _, a, b, _ in runs:
        for res in (a, b):
            h = np.array(res.history)
            nz = h[:-1] > 0
            if nz.any():
                excess = max(excess, float(np.max(h[1:][nz] / h[:-1][nz] - res.q)))
    report(capsys, "Contraction", excess <= 1e-6,
           f"max (residual ratio - q) = {excess:.2e} (<=1e-6) over {2 * len(runs)} solves")


def test_g2_equilibrium_values(capsys):
    g = g2()
    x0 = solve_nash(g, np.zeros(2), NashConfig(eps=EPS)).x
    x1 = solve_nash(g, np.array([1.0, 0.0]), NashConfig(eps=EPS)).x
    f = g.followers[0]
    ref = dense_qp_reference(f.P, f.linear_term(x1[1], np.array([1.0, 0.0])), f.A, f.b, f.G, f.h)
    e0 = np.abs(x0 - 0.5).max()
    e1 = np.abs(x1 - [1 / 3, 2 / 3]).max()
    ok = e0 <= EPS and e1 <= 1e-6 and np.allclose(ref, [1 / 3, 2 / 3], atol=1e-6)
    report(capsys, "G2 equilibrium values", ok,
           f"|NE(0)-0.5| = {e0:.1e} (<=eps), |NE([1,0])-[1/3,2/3]| = {e1:.1e} (<=1e-6), oracle {ref.round(8)}")


@pytest.fixture(scope="module")
def stable_instances():
    """G2 followers at pi=[1,0] and 100 random followers with strict complementarity."""
    g = g2()
    x = solve_nash(g, np.array([1.0, 0.0]), NashConfig(eps=1e-12)).x
    items = [(g.followers[i], x[i], others_aggregate(x, i), np.array([1.0, 0.0])) for i in range(2)]
    rng = np.random.default_rng(CORPUS_SEED + 1)
    n_random = 0
    while n_random < 100:
        g = random_game(rng)
        pi = rng.uniform(g.price_lo, g.price_hi)
        x = solve_nash(g, pi, NashConfig(eps=1e-12)).x
        for i, f in enumerate(g.followers):
            so = others_aggregate(x, i)
            xb, lam, _ = best_response_qp(f, so, pi)
            margin = f.G @ xb - f.h
            act = np.abs(margin) <= 1e-6
            if np.any(lam[act] < 1e-4) or np.any(-margin[~act] < 1e-4) or n_random >= 100:
                continue
            items.append((f, x[i], so, pi))
            n_random += 1
    return items


def test_jacobian_correctness(stable_instances, capsys):
    f, x, so, pi = stable_instances[0]
    J_g2 = follower_jacobian(f, x, so, pi).jacobian
    g2_err = np.abs(J_g2 - [[-0.25, 0.25], [0.25, -0.25]]).max()
    worst = 0.0
    for f, x, so, pi in stable_instances:
        J = follower_jacobian(f, x, so, pi).jacobian
        worst = max(worst, float(np.abs(J - fd_jacobian(f, so, pi)).max()))
    ok = worst <= 1e-5 and g2_err <= 1e-5
    report(capsys, "Jacobian correctness", ok,
           f"G2 error vs [[-1/4,1/4],[1/4,-1/4]] {g2_err:.1e}; worst |IFT - FD|_inf {worst:.2e} (<=1e-5) "
           f"over {len(stable_instances)} followers")


def test_kkt_structure(stable_instances, capsys):
    s1 = s4 = -np.inf
    cond = 0.0
    for f, x, so, pi in stable_instances:
        sens = follower_jacobian(f, x, so, pi)
        S1, S4 = schur_blocks(f, sens.problem, x)
        if S1.size:
            s1 = max(s1, np.linalg.eigvalsh(S1).max())
        if S4.size:
            s4 = max(s4, np.linalg.eigvalsh(S4).max())
        cond = max(cond, sens.condition)
    ok = s1 < 0 and s4 < 0 and cond < 1e12
    report(capsys, "KKT Schur structure", ok,
           f"max eig Dg(G_in x - h_in) {s1:.2e} (<0), max eig -A P^-1 A' {s4:.2e} (<0), max cond {cond:.2e} (<1e12)")


@pytest.mark.filterwarnings("ignore:price outside")
def test_price_translation_invariance(capsys):
    rng = np.random.default_rng(CORPUS_SEED + 2)
    worst = 0.0
    for _ in range(20):
        g = invariance_game(rng)
        pi = rng.uniform(g.price_lo, g.price_hi)
        v = 1 / np.diag(g.followers[0].S)
        ref = solve_nash(g, pi, NashConfig(eps=EPS)).x
        for alpha in (-1.0, 0.7, 3.0):
            worst = max(worst, np.linalg.norm(solve_nash(g, pi + alpha * v, NashConfig(eps=EPS)).x - ref))
    report(capsys, "Price-translation invariance", worst <= 2 * EPS,
           f"max ||NE(pi) - NE(pi + a v)|| = {worst:.2e} (<= {2 * EPS:.0e}) over 20 games x 3 shifts")


G2_LEADER = LeaderConfig(beta=0.25, s_bar=1e-6 * 1e4, max_outer=20000)


@pytest.fixture(scope="module")
def g2_run():
    t0 = time.perf_counter()
    res = solve_stackelberg(g2(), np.zeros(2), NashConfig(eps=EPS), G2_LEADER)
    return res, time.perf_counter() - t0


def test_g2_leader_convergence(g2_run, capsys):
    res, elapsed = g2_run
    J = res.trace.JL
    mono = bool(np.all(np.diff(J) <= 0))
    tail = float(np.abs(np.diff(J[-6:])).max())
    ok = mono and tail < 1e-10 and res.JL <= 1e-8 and elapsed < 60 and res.converged
    report(capsys, "G2 leader convergence", ok,
           f"{len(J)} outer iterations ({res.trace.reason}), monotone={mono}, last-5 |dJ| {tail:.1e} (<1e-10), "
           f"final J {res.JL:.2e} (<=1e-8), {elapsed:.1f}s (<60s)")


@pytest.fixture(scope="module")
def scenario():
    return parse_game_file(SCENARIO_FILE)


@pytest.fixture(scope="module")
def scenario_grid_run(scenario):
    t0 = time.perf_counter()
    grid = grid_search(scenario.game, 11, NashConfig(eps=EPS))
    cfg = LeaderConfig(**scenario.leader_config, max_outer=200)
    res = solve_stackelberg(scenario.game, grid.best_pi, NashConfig(eps=EPS), cfg)
    return grid, res, cfg, time.perf_counter() - t0


def test_grid_then_descent(scenario_grid_run, capsys):
    grid, res, _, elapsed = scenario_grid_run
    ok = res.JL < grid.best_value and elapsed < 600
    report(capsys, "Grid winner improved by descent", ok,
           f"11^4 grid winner {grid.best_pi.tolist()} J={grid.best_value:.4f}; descent J={res.JL:.4f} "
           f"after {len(res.trace)} steps; {elapsed:.0f}s (<600s)")


# documented seeds use s_bar scaled x10 from the file default for desk speed
SEED_LEADER = dict(s_bar=1e-5, max_outer=5000)


@pytest.fixture(scope="module")
def seed_runs(scenario):
    cfg = LeaderConfig(**{**scenario.leader_config, **SEED_LEADER})
    runs = [solve_stackelberg(scenario.game, s, NashConfig(eps=EPS), cfg) for s in scenario.starts]
    return runs, cfg


def _stationarity(game, res, cfg):
    """Projected-gradient displacement at termination relative to the first gradient."""
    last = res.trace.rows[-1]
    disp = np.linalg.norm(last.pi - project_box(last.pi - cfg.s_bar * last.grad, game.price_lo, game.price_hi))
    return disp / (cfg.s_bar * res.trace.rows[0].grad_norm)


def test_initialization_dependence(scenario, seed_runs, capsys):
    runs, cfg = seed_runs
    J = [r.JL for r in runs]
    mono = [bool(np.all(np.diff(r.trace.JL) <= 0)) for r in runs]
    stat = [_stationarity(scenario.game, r, cfg) for r in runs]
    ratio = max(J) / max(min(J), np.finfo(float).tiny)
    ok = all(r.converged for r in runs) and all(mono) and ratio > 10 and max(stat) <= 1e-6
    detail = "; ".join(f"start {s.tolist()} -> J={r.JL:.3e} ({r.trace.reason}, {len(r.trace)} steps, "
                       f"rel. stationarity {st:.1e})" for s, r, st in zip(scenario.starts, runs, stat))
    report(capsys, "Initialization dependence", ok, f"{detail}; ratio {ratio:.1e} (>10); monotone={mono}")


def test_armijo_certificates(g2_run, scenario_grid_run, seed_runs, capsys):
    counts = {"G2": certify_trace(g2_run[0], G2_LEADER.delta),
              "scenario grid seed": certify_trace(scenario_grid_run[1], scenario_grid_run[2].delta)}
    for k, r in enumerate(seed_runs[0]):
        counts[f"scenario start {k}"] = certify_trace(r, seed_runs[1].delta)
    report(capsys, "Armijo certificates", True,
           ", ".join(f"{k}: {n} steps" for k, n in counts.items()) + " re-validated")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
