"""Shared fixtures: the two-follower reference game and random game generators."""

from pathlib import Path

import numpy as np

from stackprice.game import FollowerSpec, PricingGame, TrackingObjective, validate_game
from stackprice.leader import armijo_holds

DATA = Path(__file__).resolve().parents[1] / "src" / "stackprice" / "data"
SCENARIO_FILE = DATA / "ev_charging_synthetic.json"
G2_FILE = DATA / "g2.json"


def g2():
    """N=2, P=2I, Q=I, r=0, S=I on the unit simplex, box [0,5]^2, N_des=[2/3,4/3]."""
    f = FollowerSpec(P=2 * np.eye(2), Q=np.eye(2), r=np.zeros(2), S=np.eye(2),
                     A=np.ones((1, 2)), b=[1.0], G=-np.eye(2), h=np.zeros(2))
    return PricingGame((f, f), np.zeros(2), 5 * np.ones(2), TrackingObjective(np.array([2 / 3, 4 / 3])))


def random_spd(rng, n, lo=0.5):
    B = rng.normal(size=(n, n))
    return B @ B.T / n + lo * np.eye(n)


def random_polytope(rng, n, with_eq=None, max_ineq=6):
    """Bounded polytope with a strictly interior point: x >= lo, 1'x <= U, plus random cuts."""
    x0 = rng.uniform(0.5, 2.0, n)
    lo = x0 - rng.uniform(0.2, 1.5, n)
    G = [-np.eye(n)]
    h = [-lo]
    G.append(np.ones((1, n)))
    h.append([x0.sum() + rng.uniform(0.2, 2.0)])
    extra = rng.integers(0, max_ineq - n - 1 + 1)
    for _ in range(extra):
        g = rng.normal(size=n)
        G.append(g[None, :])
        h.append([g @ x0 + rng.uniform(0.05, 1.0)])
    G, h = np.vstack(G), np.concatenate(h)
    if with_eq is None:
        with_eq = n > 1 and rng.random() < 0.5
    if with_eq:
        A = rng.normal(size=(1, n))
        return A, A @ x0, G, h, x0
    return np.zeros((0, n)), np.zeros(0), G, h, x0


def random_game(rng, N=None, m_F=None, m_L=None, shared_S=False, simplex_eq=False, q_scale=1.0):
    """Random game satisfying the standing assumptions (N<=4, m_F<=4, m_ineq<=6)."""
    N = N or int(rng.integers(1, 5))
    m_F = m_F or int(rng.integers(1, 5))
    m_L = m_L or int(rng.integers(1, 4))
    C = rng.normal(size=(m_F, m_F))
    Q = q_scale * C @ C.T / m_F
    P = Q + random_spd(rng, m_F)
    S0 = np.diag(rng.uniform(0.5, 2.0, m_F))[:, :m_L] if m_L <= m_F else None
    followers = []
    for _ in range(N):
        if shared_S:
            S = S0
        else:
            S = np.abs(rng.normal(size=(m_F, m_L)))
            if m_F == m_L:
                S = np.diag(np.diag(S))
        if simplex_eq:
            _, _, G, h, x0 = random_polytope(rng, m_F, with_eq=False)
            A, b = np.ones((1, m_F)), np.array([x0.sum()])
        else:
            A, b, G, h, _ = random_polytope(rng, m_F)
        followers.append(FollowerSpec(P=P, Q=Q, r=rng.normal(size=m_F), S=S, A=A, b=b, G=G, h=h))
    lo = -rng.uniform(0, 2, m_L)
    hi = rng.uniform(0.5, 3, m_L)
    n_des = N * rng.uniform(0.3, 1.5, m_F)
    game = PricingGame(tuple(followers), lo, hi, TrackingObjective(n_des))
    assert validate_game(game).passed
    return game


def invariance_game(rng):
    """Shared diagonal S, square prices, and A_i = 1' for the price-translation test."""
    m = int(rng.integers(2, 5))
    return random_game(rng, m_F=m, m_L=m, shared_S=True, simplex_eq=True)


def certify_trace(result, delta):
    """Re-check the sufficient-decrease inequality for every accepted step.

    Returns the number of certified steps; raises AssertionError on the
    first violation.
    """
    rows = result.trace.rows
    pis = [r.pi for r in rows]
    Js = [r.JL for r in rows]
    if result.trace.reason == "max_outer":
        pis.append(result.pi)
        Js.append(result.JL)
    n = 0
    for t in range(len(pis) - 1):
        if np.array_equal(pis[t], pis[t + 1]):
            continue
        assert armijo_holds(Js[t], Js[t + 1], rows[t].grad, pis[t], pis[t + 1], delta), f"step {t}"
        n += 1
    return n
