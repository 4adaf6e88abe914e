"""Price sensitivity of each follower's equilibrium strategy.

At the Nash point every tight inequality of follower i is moved into the
equality block, giving an equivalent problem whose KKT system has no weakly
active constraints and whose inequality multipliers vanish. With
z = (x, lam_inactive, nu_bar) the KKT Jacobian is

    [ P   G_in'             A_bar' ]
    [ 0   Dg(G_in x - h_in)  0     ]
    [ A_bar  0               0     ]

and D_pi x is read off the first m_F rows of -K^{-1} [S; 0; 0]. The
aggregate of the other followers is held fixed throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import InfeasiblePointError, RankError, SingularKKTError, StaleEquilibriumError
from .game import as_blocks, others_aggregate
from .projection import _full_row_rank, dependent_rows, lu_solve_refined

TAU_ACT = 1e-6
COND_WARN = 1e12


@dataclass
class ActiveSetInfo:
    active: list
    inactive: list
    tol: float
    margins: np.ndarray  # g_j'x - h_j for every inequality

    @property
    def min_inactive_margin(self):
        m = -self.margins[self.inactive]
        return float(m.min()) if m.size else float("inf")


@dataclass
class EquivalentProblem:
    A_bar: np.ndarray
    b_bar: np.ndarray
    G_inact: np.ndarray
    h_inact: np.ndarray
    active: list
    inactive: list
    pruned: list  # active inequality rows dropped as exact duplicates
    rank: int


@dataclass
class SensitivityResult:
    jacobian: np.ndarray  # D_pi x_i, (m_F, m_L)
    nu_bar: np.ndarray
    lam_inactive: np.ndarray
    stationarity_residual: float
    rank: int
    condition: float
    weakly_active: list
    info: ActiveSetInfo
    problem: EquivalentProblem
    warnings: list = field(default_factory=list)


def detect_active_set(follower, x, tau_act=TAU_ACT):
    """Split inequality rows into tight (|g'x - h| <= tau) and slack ones."""
    x = np.asarray(x, dtype=float)
    g = follower.G @ x - follower.h
    bad = np.flatnonzero(g > tau_act)
    if bad.size:
        raise InfeasiblePointError(
            f"constraints {bad.tolist()} violated by up to {g[bad].max():.3g} (> {tau_act:g})"
        )
    active = np.flatnonzero(np.abs(g) <= tau_act).tolist()
    inactive = [j for j in range(g.size) if j not in set(active)]
    return ActiveSetInfo(active=active, inactive=inactive, tol=tau_act, margins=g)


def build_equivalent_problem(follower, info):
    """Stack A over the active rows of G; prune exact duplicates; require full row rank."""
    A, b = follower.A, follower.b
    rows = [A[k] for k in range(A.shape[0])]
    rhs = [b[k] for k in range(A.shape[0])]
    kept, pruned = [], []
    for j in info.active:
        g, hj = follower.G[j], follower.h[j]
        dup = any(np.array_equal(g, r) and hj == v for r, v in zip(rows, rhs))
        if dup:
            pruned.append(j)
            continue
        rows.append(g)
        rhs.append(hj)
        kept.append(j)
    m_f = follower.m_F
    A_bar = np.array(rows, dtype=float).reshape(-1, m_f)
    b_bar = np.array(rhs, dtype=float)
    if A_bar.shape[0]:
        R = scipy.linalg.qr(A_bar.T, mode="r", pivoting=True)[0]
        d = np.abs(np.diag(R))
        rank = int(np.sum(d > 1e-10 * max(1.0, d.max()))) if d.size else 0
    else:
        rank = 0
    if rank < A_bar.shape[0] or not _full_row_rank(A_bar):
        dep = dependent_rows(A_bar)
        names = [f"A[{k}]" if k < A.shape[0] else f"G[{kept[k - A.shape[0]]}]" for k in dep]
        raise RankError(f"stacked active constraints are rank deficient; dependent rows: {names}", dep)
    inactive = list(info.inactive)
    return EquivalentProblem(
        A_bar=A_bar, b_bar=b_bar,
        G_inact=follower.G[inactive], h_inact=follower.h[inactive],
        active=kept, inactive=inactive, pruned=pruned, rank=rank,
    )


def recover_duals(follower, eq, x, sigma_others, pi, tol=1e-6):
    """Least-squares multipliers of the stacked equalities from stationarity.

    Returns ``(nu_bar, residual)``; raises StaleEquilibriumError when the
    residual exceeds ``tol`` times the gradient scale.
    """
    x = np.asarray(x, dtype=float)
    grad = follower.P @ x + follower.linear_term(np.asarray(sigma_others, dtype=float), np.asarray(pi, dtype=float))
    if eq.A_bar.shape[0]:
        nu, *_ = np.linalg.lstsq(eq.A_bar.T, -grad, rcond=None)
        r = grad + eq.A_bar.T @ nu
    else:
        nu = np.zeros(0)
        r = grad
    res = float(np.linalg.norm(r))
    scale = max(1.0, float(np.linalg.norm(follower.P @ x)), float(np.linalg.norm(grad - follower.P @ x)))
    if res > tol * scale:
        raise StaleEquilibriumError(
            f"stationarity residual {res:.3g} exceeds {tol:g} x scale; tighten the Nash tolerance", res
        )
    return nu, res


def assemble_kkt_system(follower, eq, x):
    """(D_z l, D_pi l) for the equivalent problem at ``x`` (inactive multipliers are zero)."""
    x = np.asarray(x, dtype=float)
    n = follower.m_F
    mi = eq.G_inact.shape[0]
    me = eq.A_bar.shape[0]
    K = np.zeros((n + mi + me, n + mi + me))
    K[:n, :n] = follower.P
    K[:n, n:n + mi] = eq.G_inact.T
    K[:n, n + mi:] = eq.A_bar.T
    K[n:n + mi, n:n + mi] = np.diag(eq.G_inact @ x - eq.h_inact)
    K[n + mi:, :n] = eq.A_bar
    D_pi = np.zeros((n + mi + me, follower.m_L))
    D_pi[:n] = follower.S
    return K, D_pi


def schur_blocks(follower, eq, x):
    """Diagonal Schur-complement blocks (S1, S4) of the KKT Jacobian after eliminating P.

    S1 = Dg(G_in x - h_in) and S4 = -A_bar P^{-1} A_bar'; both are negative
    definite whenever the inactive margins are strict and A_bar has full row rank.
    """
    x = np.asarray(x, dtype=float)
    S1 = np.diag(eq.G_inact @ x - eq.h_inact)
    S4 = -eq.A_bar @ np.linalg.solve(follower.P, eq.A_bar.T)
    return S1, S4


def follower_jacobian(follower, x, sigma_others, pi, tau_act=TAU_ACT, stat_tol=1e-6):
    """D_pi x_i at the equilibrium block ``x`` with sigma_-i frozen."""
    info = detect_active_set(follower, x, tau_act)
    eq = build_equivalent_problem(follower, info)
    nu, res = recover_duals(follower, eq, x, sigma_others, pi, stat_tol)
    K, D_pi = assemble_kkt_system(follower, eq, x)
    notes = []
    cond = float(np.linalg.cond(K))
    if not np.isfinite(cond) or cond > 1.0 / np.finfo(float).eps:
        raise SingularKKTError(
            "KKT Jacobian of the equivalent problem is numerically singular",
            {"rank_A_bar": eq.rank, "condition": cond, "active": eq.active,
             "min_inactive_margin": info.min_inactive_margin},
        )
    if cond > COND_WARN:
        notes.append(f"ill-conditioned KKT Jacobian (cond {cond:.3g})")
    dz = lu_solve_refined(K, -D_pi)
    return SensitivityResult(
        jacobian=dz[:follower.m_F],
        nu_bar=nu,
        lam_inactive=np.zeros(eq.G_inact.shape[0]),
        stationarity_residual=res,
        rank=eq.rank,
        condition=cond,
        weakly_active=[],
        info=info,
        problem=eq,
        warnings=notes,
    )


def equilibrium_jacobians(game, x, pi, tau_act=TAU_ACT, stat_tol=1e-6):
    """Per-follower sensitivities at a joint equilibrium ``x``."""
    x = as_blocks(game, x)
    return [
        follower_jacobian(f, x[i], others_aggregate(x, i), pi, tau_act, stat_tol)
        for i, f in enumerate(game.followers)
    ]
