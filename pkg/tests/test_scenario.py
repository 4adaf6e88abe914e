import numpy as np
import pytest

from helpers import SCENARIO_FILE, g2
from stackprice.errors import BudgetError, ScenarioError
from stackprice.io import parse_game_file
from stackprice.leader import LeaderConfig, solve_stackelberg
from stackprice.nash import solve_nash
from stackprice.scenario import ChargingScenario, Company, build_game_from_scenario, grid_search, scenario_cost
from stackprice.sensitivity import equilibrium_jacobians


def four_station(q=np.ones(4), fleets=(50.0, 60.0)):
    M = np.array([100.0, 80.0, 90.0, 70.0])
    e = np.array([3.0, 1.0, 4.0, 1.0])
    comps = [Company(n, np.full(4, 10.0), e, e) for n in fleets]
    return ChargingScenario(M, q, np.ones(4), 5 * np.ones(4), np.full(4, 50.0), comps)


def test_mapping_example():
    g = build_game_from_scenario(four_station())
    f = g.followers[0]
    assert np.array_equal(f.r, [-100, -80, -90, -70])
    assert np.array_equal(f.P, 2 * np.eye(4)) and np.array_equal(f.Q, np.eye(4))
    assert np.array_equal(f.A, np.ones((1, 4))) and np.array_equal(f.b, [50])
    assert np.array_equal(f.G, -np.eye(4))


def test_nonpositive_queue_weight_rejected():
    with pytest.raises(ScenarioError, match="queue"):
        build_game_from_scenario(four_station(q=np.array([1.0, 0.0, 1.0, 1.0])))


def test_infeasible_fleet_split():
    s = four_station()
    c = s.companies[1]
    c.reach_G, c.reach_h = np.eye(4), np.full(4, 10.0)
    with pytest.raises(ScenarioError, match=r"companies\[1\]"):
        build_game_from_scenario(s)


def test_single_station_is_pinned():
    s = ChargingScenario(np.array([10.0]), np.array([0.5]), np.array([1.0]), np.array([2.0]), np.array([5.0]),
                         [Company(5.0, np.array([3.0]), np.zeros(1), np.zeros(1))])
    g = build_game_from_scenario(s)
    x = solve_nash(g, np.array([1.5])).x
    assert np.allclose(x, [[5.0]])
    assert np.allclose(equilibrium_jacobians(g, x, np.array([1.5]))[0].jacobian, 0)


def test_shipped_scenario_shape():
    gf = parse_game_file(SCENARIO_FILE)
    g = gf.game
    assert g.N == 3 and g.m_L == 4
    assert np.array_equal(g.price_lo, np.ones(4)) and np.array_equal(g.price_hi, 5 * np.ones(4))
    assert np.array_equal(g.leader.n_des, [198, 103, 144, 87])
    assert gf.leader_config == {"beta": 0.25, "s_bar": 1e-6, "delta": 1e-5}
    assert len(gf.starts) == 2 and "SYNTHETIC" in gf.description


def test_cost_semantics_by_sampling():
    rng = np.random.default_rng(0)
    for _ in range(50):
        m, n = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        fleets = rng.uniform(5, 20, n)
        comps = [Company(fleets[i], rng.uniform(1, 40, m), rng.uniform(0, 10, m), rng.uniform(0, 50, m))
                 for i in range(n)]
        s = ChargingScenario(rng.uniform(10, 100, m), rng.uniform(0.1, 1, m), np.ones(m), 5 * np.ones(m),
                             rng.uniform(5, 50, m), comps)
        g = build_game_from_scenario(s)
        for i, f in enumerate(g.followers):
            x, sig, pi = rng.uniform(0, 30, m), rng.uniform(0, 60, m), rng.uniform(1, 5, m)
            a, b = f.cost(x, sig, pi), scenario_cost(s, i, x, sig, pi)
            assert a == pytest.approx(b, rel=1e-10, abs=1e-10)


def test_grid_g2_finds_minimizer_and_solver_does_not_lose():
    g = g2()
    res = grid_search(g, 11)
    assert res.points.shape == (121, 2)
    k = np.flatnonzero((res.points == [1.0, 0.0]).all(axis=1))[0]
    assert res.values[k] <= 1e-15
    assert res.best_value <= 1e-15
    sol = solve_stackelberg(g, res.best_pi, leader_cfg=LeaderConfig(s_bar=1e-2, max_outer=50))
    assert sol.JL <= res.best_value + 1e-15


def test_grid_single_point_is_midpoint():
    res = grid_search(g2(), 1)
    assert np.array_equal(res.points, [[2.5, 2.5]])


def test_grid_budget_checked_first():
    calls = []
    with pytest.raises(BudgetError):
        grid_search(g2(), 1001, progress=lambda *a: calls.append(a))
    assert not calls


def test_grid_ranking_is_sorted():
    res = grid_search(g2(), 4)
    ranked = res.ranked()
    assert all(a[1] <= b[1] for a, b in zip(ranked, ranked[1:]))
    assert len(res.ranked(3)) == 3
