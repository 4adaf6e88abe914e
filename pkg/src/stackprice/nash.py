"""Nash equilibrium of the follower game by projected Picard iteration.

    x_{k+1} = Proj_X[x_k - gamma F(x_k, pi)]

The pseudo-gradient F is affine with a symmetric positive definite linear
part F1, so ``gamma = 2 / (lmin + lmax)`` gives the contraction factor
``q = (lmax - lmin) / (lmax + lmin)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, MonotonicityError
from .game import as_blocks, assemble_F1, others_aggregate, pseudo_gradient
from .projection import ActiveSetQP, PolyhedronProjector


@dataclass
class NashConfig:
    gamma: float | None = None  # None: 2 / (lmin + lmax)
    eps: float = 1e-8
    max_iter: int | None = None

    def __post_init__(self):
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be positive")


@dataclass
class NashResult:
    x: np.ndarray  # (N, m_F)
    iterations: int
    residual: float
    duals: list  # per-follower QPSolution of the last projection
    history: list = field(default_factory=list)
    gamma: float = float("nan")
    q: float = float("nan")


def contraction_params(game):
    """(gamma*, q) for the optimal constant step on the affine pseudo-gradient."""
    _, lmin, lmax = assemble_F1(game)
    return 2.0 / (lmin + lmax), (lmax - lmin) / (lmax + lmin)


def contraction_factor(game, gamma):
    """||I - gamma F1||_2; raises MonotonicityError unless it is below one."""
    F1, _, _ = assemble_F1(game)
    q = float(np.linalg.norm(np.eye(F1.shape[0]) - gamma * F1, 2))
    if q >= 1.0:
        raise MonotonicityError(f"step size {gamma} is not contractive (||I - gamma F1|| = {q:.6g})")
    return q


def make_projectors(game, starts=None):
    """One warm-startable projector per follower."""
    out = []
    for i, f in enumerate(game.followers):
        s = None if starts is None else starts.get(i)
        out.append(PolyhedronProjector(f.polyhedron, start=s))
    return out


def solve_nash(game, pi, cfg=None, x0=None, projectors=None):
    """Unique Nash equilibrium of the follower game at price ``pi``.

    The iteration stops once the certified distance to the fixed point,
    q/(1-q) * ||x_{k+1} - x_k||, and the step ||x_{k+1} - x_k|| itself are
    both at most ``cfg.eps``.
    """
    cfg = cfg or NashConfig()
    pi = np.asarray(pi, dtype=float)
    if np.any(pi < game.price_lo) or np.any(pi > game.price_hi):
        warnings.warn("price outside the leader's box; solving anyway", stacklevel=2)
    if cfg.gamma is None:
        gamma, q = contraction_params(game)
    else:
        gamma = cfg.gamma
        q = contraction_factor(game, gamma)
    stop = cfg.eps if q <= 0.5 else cfg.eps * (1.0 - q) / q
    if projectors is None:
        projectors = make_projectors(game)

    if x0 is None:
        x = np.vstack([p.feasible_point() for p in projectors])
    else:
        x = as_blocks(game, x0).copy()
        x = np.vstack([p.project(x[i]).x for i, p in enumerate(projectors)])

    shared = all(np.array_equal(f.P, game.P) and np.array_equal(f.Q, game.Q) for f in game.followers)
    if shared:
        PmQt = (game.P - game.Q).T
        Qt = game.Q.T
        lin = np.vstack([f.r + f.S @ pi for f in game.followers])

    history = []
    max_iter = cfg.max_iter
    duals = [None] * game.N
    k = 0
    while True:
        if shared:
            F = x @ PmQt + x.sum(axis=0) @ Qt + lin
        else:
            F = pseudo_gradient(game, x, pi).reshape(x.shape)
        z = x - gamma * F
        x_new = np.empty_like(x)
        for i, p in enumerate(projectors):
            sol = p.project(z[i])
            x_new[i] = sol.x
            duals[i] = sol
        res = float(np.linalg.norm(x_new - x))
        history.append(res)
        k += 1
        x = x_new
        if res <= stop:
            return NashResult(x=x, iterations=k, residual=res, duals=duals,
                              history=history, gamma=gamma, q=q)
        if max_iter is None:
            if q > 0 and res > 0:
                max_iter = int(math.ceil(math.log(stop / res) / math.log(q))) + 1000
            else:
                max_iter = 1000
        if k >= max_iter:
            raise ConvergenceError(
                f"Picard iteration did not reach eps={cfg.eps:g} in {k} iterations",
                residual=res, history=history,
            )


def best_response_qp(follower, sigma_others, pi, solver=None):
    """Best response of one follower; returns ``(x, lam, nu)``.

    Multipliers follow P x + Q sigma + r + S pi + G'lam + A'nu = 0.
    """
    if solver is None:
        solver = ActiveSetQP(follower.polyhedron, H=follower.P)
    c = follower.linear_term(np.asarray(sigma_others, dtype=float), np.asarray(pi, dtype=float))
    sol = solver.solve(c)
    return sol.x, sol.lam, sol.nu


@dataclass
class NashReport:
    deviations: list
    worst: float
    worst_follower: int
    flagged: list
    tol: float

    @property
    def passed(self):
        return not self.flagged


def verify_nash(game, x, pi, tol=1e-6):
    """Compare every block of ``x`` with that follower's exact best response."""
    x = as_blocks(game, x)
    devs = []
    for i, f in enumerate(game.followers):
        br, _, _ = best_response_qp(f, others_aggregate(x, i), pi)
        devs.append(float(np.linalg.norm(x[i] - br)))
    worst = int(np.argmax(devs))
    return NashReport(deviations=devs, worst=devs[worst], worst_follower=worst,
                      flagged=[i for i, d in enumerate(devs) if d > tol], tol=tol)
