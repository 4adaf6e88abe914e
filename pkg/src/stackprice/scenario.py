"""EV-charging pricing scenarios and an exhaustive grid-search baseline.

A scenario describes charging stations (capacity, queue weight) and fleet
operators (fleet size, charging demand per vehicle, travel cost, expected
profit, reachability limits). Operator i pays

    x'S_i pi  +  x'Q(x + sigma_-i - M)  +  (e_arr - e_pro)'x,

which is the quadratic aggregative form with P = 2Q, Q = Dg(q) and
r_i = -QM + e_arr - e_pro.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, ConvergenceError, ScenarioError
from .game import FollowerSpec, PricingGame, TrackingObjective, validate_game
from .nash import NashConfig, make_projectors, solve_nash

MAX_GRID_EVALS = 10**6


def _vec(v, name, m=None):
    a = np.asarray(v, dtype=float).reshape(-1)
    if m is not None and a.size != m:
        raise ScenarioError(f"{name}: expected length {m}, got {a.size}")
    return a


@dataclass
class Company:
    fleet_size: float
    charging_demand: np.ndarray  # kWh per vehicle at each station (diagonal of S_i)
    travel_cost: np.ndarray
    expected_profit: np.ndarray
    reach_G: np.ndarray = None  # extra rows G x <= h (e.g. reachable vehicles per station)
    reach_h: np.ndarray = None
    name: str = ""


@dataclass
class ChargingScenario:
    capacity: np.ndarray
    queue_weight: np.ndarray
    price_lo: np.ndarray
    price_hi: np.ndarray
    n_des: np.ndarray
    companies: list = field(default_factory=list)

    @property
    def m(self):
        return np.asarray(self.capacity).size


def build_game_from_scenario(s):
    """Map a charging scenario to a validated PricingGame."""
    m = s.m
    M = _vec(s.capacity, "capacity", m)
    q = _vec(s.queue_weight, "queue_weight", m)
    if np.any(q <= 0):
        raise ScenarioError(f"queue weights must be positive (P - Q = Dg(q) must be positive definite); got {q.tolist()}")
    if not s.companies:
        raise ScenarioError("scenario has no companies")
    Qm = np.diag(q)
    followers = []
    for i, c in enumerate(s.companies):
        if not c.fleet_size > 0:
            raise ScenarioError(f"companies[{i}].fleet_size must be positive")
        S = np.diag(_vec(c.charging_demand, f"companies[{i}].charging_demand", m))
        r = -Qm @ M + _vec(c.travel_cost, f"companies[{i}].travel_cost", m) \
            - _vec(c.expected_profit, f"companies[{i}].expected_profit", m)
        G = -np.eye(m)
        h = np.zeros(m)
        if c.reach_G is not None and np.size(c.reach_G):
            RG = np.atleast_2d(np.asarray(c.reach_G, dtype=float))
            if RG.shape[1] != m:
                raise ScenarioError(f"companies[{i}].reachability.G: expected {m} columns")
            G = np.vstack([G, RG])
            h = np.concatenate([h, _vec(c.reach_h, f"companies[{i}].reachability.h", RG.shape[0])])
        followers.append(FollowerSpec(P=2 * Qm, Q=Qm, r=r, S=S,
                                      A=np.ones((1, m)), b=[c.fleet_size], G=G, h=h))
    game = PricingGame(followers, _vec(s.price_lo, "price_lo", m), _vec(s.price_hi, "price_hi", m),
                       TrackingObjective(_vec(s.n_des, "n_des", m)))
    rep = validate_game(game)
    for c in rep.failed():
        if c.name == "feasible":
            raise ScenarioError(f"{c.where.replace('followers', 'companies')}: fleet cannot be split "
                                f"within the reachable capacity ({c.detail})")
    if not rep.passed:
        raise ScenarioError("scenario maps to an invalid game:\n" + rep.summary())
    return game


def scenario_cost(s, i, x_i, sigma_others, pi):
    """Operator i's cost evaluated term by term from the scenario data."""
    c = s.companies[i]
    q = np.asarray(s.queue_weight, dtype=float)
    x_i = np.asarray(x_i, dtype=float)
    charging = x_i @ (np.asarray(c.charging_demand) * np.asarray(pi))
    queue = x_i @ (q * (x_i + sigma_others - np.asarray(s.capacity)))
    travel = (np.asarray(c.travel_cost) - np.asarray(c.expected_profit)) @ x_i
    return float(charging + queue + travel)


@dataclass
class GridResult:
    points: np.ndarray  # (K, m_L)
    values: np.ndarray  # (K,)
    order: np.ndarray  # indices sorted by value

    @property
    def best_pi(self):
        return self.points[self.order[0]]

    @property
    def best_value(self):
        return float(self.values[self.order[0]])

    def ranked(self, n=None):
        idx = self.order if n is None else self.order[:n]
        return [(self.points[k], float(self.values[k])) for k in idx]


def grid_axes(game, points_per_axis):
    lo, hi = game.price_lo, game.price_hi
    if points_per_axis == 1:
        return [np.array([0.5 * (a + b)]) for a, b in zip(lo, hi)]
    return [np.linspace(a, b, points_per_axis) for a, b in zip(lo, hi)]


def grid_search(game, points_per_axis, nash_cfg=None, budget=MAX_GRID_EVALS, progress=None):
    """Evaluate J^L at the equilibrium of every point of a uniform price grid.

    Points are visited in lexicographic order with the previous equilibrium
    as warm start. Raises BudgetError before any work if the grid is larger
    than ``budget``.
    """
    if points_per_axis < 1:
        raise ValueError("points_per_axis must be at least 1")
    total = points_per_axis ** game.m_L
    if total > budget:
        raise BudgetError(f"{total} grid points exceed the evaluation budget of {budget}")
    cfg = nash_cfg or NashConfig()
    projectors = make_projectors(game)
    axes = grid_axes(game, points_per_axis)
    pts = np.empty((total, game.m_L))
    vals = np.empty(total)
    x = None
    for k, pi in enumerate(itertools.product(*axes)):
        pi = np.array(pi)
        try:
            res = solve_nash(game, pi, cfg, x0=x, projectors=projectors)
        except ConvergenceError as exc:
            raise ConvergenceError(f"grid point {pi.tolist()}: {exc}", exc.residual, exc.history) from exc
        x = res.x
        pts[k] = pi
        vals[k] = game.leader.value(res.x, pi)
        if progress is not None:
            progress(k + 1, total)
    return GridResult(points=pts, values=vals, order=np.argsort(vals, kind="stable"))
