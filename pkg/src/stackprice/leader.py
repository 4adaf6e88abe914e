"""Leader price optimization: projected gradient with Armijo backtracking.

Each outer iteration solves the follower equilibrium, differentiates every
follower's KKT system, assembles the price gradient and then backtracks
along the projection arc

    pi+(s) = Proj_box[pi_t - s g],   s = beta^l * s_bar,

taking the smallest l with J(pi_t) - J(pi+(s)) >= delta * g'(pi_t - pi+(s)).
Every trial price is evaluated with a full (warm-started) equilibrium solve.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, RankError, SingularKKTError, StaleEquilibriumError, StalledStepError
from .game import leader_value_and_partials
from .nash import NashConfig, make_projectors, solve_nash
from .projection import project_box
from .sensitivity import TAU_ACT, equilibrium_jacobians

log = logging.getLogger(__name__)


@dataclass
class LeaderConfig:
    beta: float = 0.25
    s_bar: float = 1e-6
    delta: float = 1e-5
    max_outer: int = 1000
    tol_stat: float | None = None  # None: max(1e-9 * s_bar * ||g_0||, 1e-14)
    l_max: int = 60
    tau_act: float = TAU_ACT

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not self.s_bar > 0:
            raise ValueError("s_bar must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.max_outer < 0 or self.l_max < 0:
            raise ValueError("iteration caps must be nonnegative")


@dataclass
class TraceRow:
    t: int
    pi: np.ndarray
    JL: float
    grad: np.ndarray
    grad_norm: float
    armijo_l: int
    step: float
    nash_iters: int
    wall_ms: float


@dataclass
class LeaderTrace:
    rows: list = field(default_factory=list)
    reason: str = ""

    def __len__(self):
        return len(self.rows)

    @property
    def JL(self):
        return np.array([r.JL for r in self.rows])


@dataclass
class StackelbergResult:
    pi: np.ndarray
    x: np.ndarray
    JL: float
    trace: LeaderTrace
    converged: bool


def total_gradient(game, x, jacobians, pi):
    """dJ/dpi = dJ/dpi (partial) + sum_i D_pi x_i' dJ/dx_i."""
    _, g_pi, g_x = leader_value_and_partials(game, x, pi)
    g = np.array(g_pi, dtype=float)
    for gx, sens in zip(g_x, jacobians):
        J = sens.jacobian if hasattr(sens, "jacobian") else np.asarray(sens)
        g = g + J.T @ gx
    return g


@dataclass
class ArmijoResult:
    pi: np.ndarray
    l: int
    step: float
    JL: float
    stationary: bool = False


def armijo_step(pi_t, grad, J_t, evaluate, cfg, lo, hi):
    """Backtrack along the projection arc; ``evaluate(pi)`` returns J^L at the new equilibrium."""
    pi_t = np.asarray(pi_t, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if np.array_equal(project_box(pi_t - cfg.s_bar * grad, lo, hi), pi_t):
        return ArmijoResult(pi=pi_t, l=0, step=cfg.s_bar, JL=J_t, stationary=True)
    for l in range(cfg.l_max + 1):
        s = cfg.beta ** l * cfg.s_bar
        trial = project_box(pi_t - s * grad, lo, hi)
        if np.array_equal(trial, pi_t):
            # the step underflowed: no representable move decreases J
            raise StalledStepError(f"Armijo step underflowed at l={l}")
        J_new = evaluate(trial)
        if J_t - J_new >= cfg.delta * float(grad @ (pi_t - trial)):
            return ArmijoResult(pi=trial, l=l, step=s, JL=J_new)
    raise StalledStepError(f"no Armijo step found within l_max={cfg.l_max}")


def armijo_holds(J_t, J_next, grad, pi_t, pi_next, delta):
    """Independent re-check of the sufficient-decrease inequality."""
    return J_t - J_next >= delta * float(np.asarray(grad) @ (np.asarray(pi_t) - np.asarray(pi_next)))


class _Evaluator:
    """J^L(x*(pi), pi) with per-price caching and warm-started equilibria."""

    def __init__(self, game, nash_cfg):
        self.game = game
        self.cfg = nash_cfg
        self.projectors = make_projectors(game)
        self.x_warm = None
        self.cache = {}
        self.last_iters = 0

    def nash(self, pi):
        key = np.asarray(pi, dtype=float).tobytes()
        hit = self.cache.get(key)
        if hit is None:
            res = solve_nash(self.game, pi, self.cfg, x0=self.x_warm, projectors=self.projectors)
            J = self.game.leader.value(res.x, pi)
            hit = (res, J)
            if len(self.cache) > 64:
                self.cache.clear()
            self.cache[key] = hit
            self.last_iters += res.iterations
        self.x_warm = hit[0].x
        return hit

    def __call__(self, pi):
        return self.nash(pi)[1]


def solve_stackelberg(game, pi0=None, nash_cfg=None, leader_cfg=None):
    """Run the outer loop from ``pi0`` (box midpoint by default).

    Returns a StackelbergResult. Equilibrium or sensitivity failures are
    re-raised with the outer iteration index prepended to the message.
    """
    nash_cfg = nash_cfg or NashConfig()
    cfg = leader_cfg or LeaderConfig()
    if cfg.tau_act < 10 * nash_cfg.eps:
        raise ValueError("active-set tolerance must be at least 10x the Nash tolerance")
    lo, hi = game.price_lo, game.price_hi
    pi = game.box_midpoint() if pi0 is None else np.asarray(pi0, dtype=float)
    pi_in = project_box(pi, lo, hi)
    if not np.array_equal(pi_in, pi):
        warnings.warn("initial price outside the box; projected", stacklevel=2)
    pi = pi_in
    ev = _Evaluator(game, nash_cfg)
    trace = LeaderTrace()

    def annotate(t, exc):
        exc.args = (f"outer iteration {t}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
        return exc

    try:
        res, J = ev.nash(pi)
    except ConvergenceError as exc:
        raise annotate(0, exc)
    if cfg.max_outer == 0:
        trace.reason = "max_outer"
        return StackelbergResult(pi=pi, x=res.x, JL=J, trace=trace, converged=False)

    tol_stat = cfg.tol_stat
    converged = False
    for t in range(cfg.max_outer):
        t0 = time.perf_counter()
        ev.last_iters = 0
        try:
            jac = equilibrium_jacobians(game, res.x, pi, cfg.tau_act)
        except (RankError, SingularKKTError, StaleEquilibriumError) as exc:
            raise annotate(t, exc)
        grad = total_gradient(game, res.x, jac, pi)
        gnorm = float(np.linalg.norm(grad))
        if tol_stat is None:
            tol_stat = max(1e-9 * cfg.s_bar * gnorm, 1e-14)
        disp = float(np.linalg.norm(pi - project_box(pi - cfg.s_bar * grad, lo, hi)))
        nash_iters = res.iterations if t == 0 else 0
        if disp <= tol_stat:
            trace.rows.append(TraceRow(t, pi.copy(), J, grad, gnorm, 0, 0.0, nash_iters,
                                       1e3 * (time.perf_counter() - t0)))
            trace.reason = "stationary"
            converged = True
            break
        try:
            step = armijo_step(pi, grad, J, ev, cfg, lo, hi)
        except StalledStepError as exc:
            log.info("outer iteration %d: %s; treating as stationary", t, exc)
            trace.rows.append(TraceRow(t, pi.copy(), J, grad, gnorm, cfg.l_max, 0.0,
                                       nash_iters + ev.last_iters, 1e3 * (time.perf_counter() - t0)))
            trace.reason = f"stalled: {exc}"
            converged = True
            break
        except ConvergenceError as exc:
            raise annotate(t, exc)
        trace.rows.append(TraceRow(t, pi.copy(), J, grad, gnorm, step.l, step.step,
                                   nash_iters + ev.last_iters, 1e3 * (time.perf_counter() - t0)))
        res, J = ev.nash(step.pi)
        pi = step.pi
    else:
        trace.reason = "max_outer"
    return StackelbergResult(pi=pi, x=res.x, JL=J, trace=trace, converged=converged)
