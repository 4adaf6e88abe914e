"""Brute-force reference computations for cross-checking the solver path.

Nothing here is used by the solvers themselves. ``dense_qp_reference``
enumerates active sets (exponential, desk scale only); the finite-difference
helpers differentiate solution maps numerically.
"""

from __future__ import annotations

import itertools
import logging
import warnings

import numpy as np

from .errors import ConvergenceError, UnreliableStencilError
from .game import as_blocks
from .nash import NashConfig, best_response_qp, make_projectors, solve_nash
from .projection import ActiveSetQP

log = logging.getLogger(__name__)

MAX_ENUM_INEQ = 12


def dense_qp_reference(H, c, A=None, b=None, G=None, h=None, tol=1e-9):
    """min 1/2 x'Hx + c'x s.t. Ax = b, Gx <= h, by active-set enumeration.

    Every subset W of inequality rows is tried as an equality block; the
    first KKT-consistent candidate (feasible, multipliers >= 0) is optimal
    because the problem is strictly convex.
    """
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    c = np.asarray(c, dtype=float)
    A = np.zeros((0, n)) if A is None or np.size(A) == 0 else np.atleast_2d(np.asarray(A, dtype=float))
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float).reshape(-1)
    G = np.zeros((0, n)) if G is None or np.size(G) == 0 else np.atleast_2d(np.asarray(G, dtype=float))
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float).reshape(-1)
    m = G.shape[0]
    if m > MAX_ENUM_INEQ:
        raise ValueError(f"enumeration oracle limited to {MAX_ENUM_INEQ} inequalities, got {m}")
    scale = max(1.0, np.abs(c).max(initial=0.0), np.abs(h).max(initial=0.0), np.abs(b).max(initial=0.0))
    best = None
    for size in range(0, min(m, n) + 1):
        for W in itertools.combinations(range(m), size):
            C = np.vstack([A, G[list(W)]])
            d = np.concatenate([b, h[list(W)]])
            k = C.shape[0]
            if k and np.linalg.matrix_rank(C) < k:
                continue
            K = np.block([[H, C.T], [C, np.zeros((k, k))]])
            try:
                sol = np.linalg.solve(K, np.concatenate([-c, d]))
            except np.linalg.LinAlgError:
                continue
            x = sol[:n]
            lam = sol[n + A.shape[0]:]
            if m and np.max(G @ x - h) > tol * scale:
                continue
            if lam.size and lam.min() < -tol * scale:
                continue
            obj = 0.5 * x @ H @ x + c @ x
            if best is None or obj < best[0] - tol * scale:
                best = (obj, x)
    if best is None:
        raise ValueError("no KKT-consistent active set found (infeasible problem?)")
    return best[1]


def _working(follower, x, tol=1e-10):
    if follower.G.shape[0] == 0:
        return ()
    scale = max(1.0, float(np.abs(follower.h).max()))
    return tuple(np.flatnonzero(np.abs(follower.G @ x - follower.h) <= tol * scale).tolist())


def fd_jacobian(follower, sigma_others, pi, step=1e-6):
    """Central differences of the best response in each price coordinate.

    Retries one decade smaller and one larger when the stencil changes the
    active set; raises UnreliableStencilError if all three flip.
    """
    pi = np.asarray(pi, dtype=float)
    sigma_others = np.asarray(sigma_others, dtype=float)
    solver = ActiveSetQP(follower.polyhedron, H=follower.P)

    def br(p):
        return best_response_qp(follower, sigma_others, p, solver=solver)[0]

    x0 = br(pi)
    base = _working(follower, x0)
    for h in (step, step / 10.0, step * 10.0):
        J = np.zeros((follower.m_F, pi.size))
        stable = True
        for k in range(pi.size):
            e = np.zeros_like(pi)
            e[k] = h
            xp, xm = br(pi + e), br(pi - e)
            if _working(follower, xp) != base or _working(follower, xm) != base:
                stable = False
                break
            J[:, k] = (xp - xm) / (2.0 * h)
        if stable:
            return J
        log.debug("active set flipped with step %g; retrying", h)
    raise UnreliableStencilError("active set changes inside every finite-difference stencil")


def _equilibrium_value(game, pi, cfg, projectors, x0):
    # stencil points may sit just outside the price box
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        res = solve_nash(game, pi, cfg, x0=x0, projectors=projectors)
    return game.leader.value(res.x, pi), res.x


def fd_total_gradient(game, pi, step=1e-5, nash_cfg=None):
    """Central differences of J^L(x*(pi), pi) through full equilibrium re-solves.

    The equilibria are solved to 1e-12 by default so the stencil is not
    swamped by solver noise.
    """
    cfg = nash_cfg or NashConfig(eps=1e-12)
    pi = np.asarray(pi, dtype=float)
    projectors = make_projectors(game)
    try:
        _, x_c = _equilibrium_value(game, pi, cfg, projectors, None)
        g = np.zeros(pi.size)
        for k in range(pi.size):
            e = np.zeros_like(pi)
            e[k] = step
            jp, _ = _equilibrium_value(game, pi + e, cfg, projectors, x_c)
            jm, _ = _equilibrium_value(game, pi - e, cfg, projectors, x_c)
            g[k] = (jp - jm) / (2.0 * step)
    except ConvergenceError as exc:
        raise ConvergenceError(f"finite-difference stencil: {exc}", exc.residual, exc.history) from exc
    return g


def gradient_discrepancy(game, pi, nash_cfg=None, step=1e-5):
    """Chain-rule gradient next to its finite-difference counterpart.

    Returns a dict with both vectors and their difference. The two differ
    whenever follower coupling Q feeds back through sigma_-i, which the
    per-follower Jacobians hold fixed.
    """
    from .leader import total_gradient
    from .sensitivity import equilibrium_jacobians

    cfg = nash_cfg or NashConfig(eps=1e-12)
    res = solve_nash(game, pi, cfg)
    jac = equilibrium_jacobians(game, res.x, pi)
    g_chain = total_gradient(game, res.x, jac, pi)
    g_fd = fd_total_gradient(game, pi, step, cfg)
    diff = g_chain - g_fd
    log.info("gradient discrepancy at pi=%s: %s", np.asarray(pi).tolist(), diff.tolist())
    return {"chain_rule": g_chain, "finite_difference": g_fd, "difference": diff,
            "max_abs_difference": float(np.abs(diff).max())}


def jacobian_discrepancy(game, x, pi, step=1e-6):
    """Per-follower IFT Jacobian next to its finite-difference counterpart."""
    from .sensitivity import equilibrium_jacobians
    from .game import others_aggregate

    x = as_blocks(game, x)
    out = []
    for i, (f, sens) in enumerate(zip(game.followers, equilibrium_jacobians(game, x, pi))):
        fd = fd_jacobian(f, others_aggregate(x, i), pi, step)
        out.append({"follower": i, "ift": sens.jacobian, "finite_difference": fd,
                    "max_abs_difference": float(np.abs(sens.jacobian - fd).max())})
    return out
