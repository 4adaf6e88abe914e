"""Stackelberg pricing games: follower costs, leader objective, validation.

Follower i minimizes

    J_i(x_i, sigma_-i, pi) = 1/2 x_i'P x_i + x_i'Q sigma_-i + r_i'x_i + x_i'S_i pi

over {x_i : A_i x_i = b_i, G_i x_i <= h_i}, where sigma_-i is the sum of the
other followers' strategies. Joint strategies are handled as ``(N, m_F)``
arrays, one row per follower; ``x.ravel()`` is the stacked vector.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import GameValidationError, InfeasibleError, MonotonicityError, StructuralError
from .projection import Polyhedron, _full_row_rank, dependent_rows, phase_one

TOL_SLATER = 1e-9


def _freeze(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FollowerSpec:
    P: np.ndarray
    Q: np.ndarray
    r: np.ndarray
    S: np.ndarray
    A: np.ndarray = None
    b: np.ndarray = None
    G: np.ndarray = None
    h: np.ndarray = None

    def __post_init__(self):
        P = _freeze(self.P)
        m_f = P.shape[0] if P.ndim == 2 else 0
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", _freeze(self.Q))
        object.__setattr__(self, "r", _freeze(self.r).reshape(-1))
        object.__setattr__(self, "S", _freeze(self.S))
        for mat, vec in (("A", "b"), ("G", "h")):
            M = getattr(self, mat)
            v = getattr(self, vec)
            M = np.zeros((0, m_f)) if M is None or np.size(M) == 0 else np.array(M, dtype=float)
            if M.ndim == 1:
                M = M.reshape(1, -1)
            v = np.zeros(0) if v is None else np.array(v, dtype=float).reshape(-1)
            object.__setattr__(self, mat, _freeze(M))
            object.__setattr__(self, vec, _freeze(v))

    @property
    def m_F(self):
        return self.P.shape[0]

    @property
    def m_L(self):
        return self.S.shape[1]

    @property
    def polyhedron(self):
        return Polyhedron(self.A, self.b, self.G, self.h, n=self.m_F)

    def linear_term(self, sigma_others, pi):
        """Q sigma_-i + r + S pi, the gradient of the cost at x_i = 0."""
        return self.Q @ sigma_others + self.r + self.S @ pi

    def cost(self, x_i, sigma_others, pi):
        x_i = np.asarray(x_i, dtype=float)
        return float(0.5 * x_i @ self.P @ x_i + x_i @ self.linear_term(sigma_others, pi))


class LeaderObjective:
    """Leader cost J^L(x, pi) and its partial derivatives.

    Subclasses implement ``value``, ``grad_pi`` and ``grad_x``; ``x`` is an
    ``(N, m_F)`` joint strategy and ``grad_x`` returns one row per follower.
    """

    kind = "abstract"

    def value(self, x, pi):
        raise NotImplementedError

    def grad_pi(self, x, pi):
        raise NotImplementedError

    def grad_x(self, x, pi):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class TrackingObjective(LeaderObjective):
    """1/2 ||sigma(x) - n_des||^2, independent of the price."""

    n_des: np.ndarray
    kind = "tracking"

    def __post_init__(self):
        object.__setattr__(self, "n_des", _freeze(self.n_des).reshape(-1))

    def value(self, x, pi):
        d = aggregate(x) - self.n_des
        return float(0.5 * d @ d)

    def grad_pi(self, x, pi):
        return np.zeros(np.asarray(pi).shape[0])

    def grad_x(self, x, pi):
        x = np.asarray(x)
        d = aggregate(x) - self.n_des
        return np.tile(d, (x.shape[0], 1))


@dataclass(frozen=True, eq=False)
class PricingGame:
    followers: tuple
    price_lo: np.ndarray
    price_hi: np.ndarray
    leader: LeaderObjective = None

    def __post_init__(self):
        object.__setattr__(self, "followers", tuple(self.followers))
        object.__setattr__(self, "price_lo", _freeze(self.price_lo).reshape(-1))
        object.__setattr__(self, "price_hi", _freeze(self.price_hi).reshape(-1))
        check_dimensions(self)

    @property
    def N(self):
        return len(self.followers)

    @property
    def m_F(self):
        return self.followers[0].m_F

    @property
    def m_L(self):
        return self.price_lo.shape[0]

    @property
    def P(self):
        return self.followers[0].P

    @property
    def Q(self):
        return self.followers[0].Q

    def box_midpoint(self):
        return 0.5 * (self.price_lo + self.price_hi)


# joint strategy helpers

def as_blocks(game, x):
    x = np.asarray(x, dtype=float)
    return x.reshape(game.N, game.m_F)


def aggregate(x):
    """sigma(x): sum of all followers' strategies."""
    return np.asarray(x, dtype=float).sum(axis=0)


def others_aggregate(x, i):
    """sigma(x_-i) = sigma(x) - x_i."""
    x = np.asarray(x, dtype=float)
    return x.sum(axis=0) - x[i]


def check_dimensions(game):
    if len(game.followers) == 0:
        raise StructuralError("followers", "at least one follower is required")
    m_l = game.price_lo.shape[0]
    if game.price_hi.shape[0] != m_l:
        raise StructuralError("price_hi", f"length {game.price_hi.shape[0]} != price_lo length {m_l}")
    m_f = game.followers[0].P.shape[0]
    for i, f in enumerate(game.followers):
        w = f"followers[{i}]"
        if f.P.shape != (m_f, m_f):
            raise StructuralError(f"{w}.P", f"expected {(m_f, m_f)}, got {f.P.shape}")
        if f.Q.shape != (m_f, m_f):
            raise StructuralError(f"{w}.Q", f"expected {(m_f, m_f)}, got {f.Q.shape}")
        if f.r.shape != (m_f,):
            raise StructuralError(f"{w}.r", f"expected length {m_f}, got {f.r.shape}")
        if f.S.shape != (m_f, m_l):
            raise StructuralError(f"{w}.S", f"expected {(m_f, m_l)}, got {f.S.shape}")
        if f.A.shape[1] != m_f:
            raise StructuralError(f"{w}.A", f"expected {m_f} columns, got {f.A.shape[1]}")
        if f.b.shape != (f.A.shape[0],):
            raise StructuralError(f"{w}.b", f"expected length {f.A.shape[0]}, got {f.b.shape}")
        if f.G.shape[1] != m_f:
            raise StructuralError(f"{w}.G", f"expected {m_f} columns, got {f.G.shape[1]}")
        if f.h.shape != (f.G.shape[0],):
            raise StructuralError(f"{w}.h", f"expected length {f.G.shape[0]}, got {f.h.shape}")
    if isinstance(game.leader, TrackingObjective) and game.leader.n_des.shape != (m_f,):
        raise StructuralError("leader.n_des", f"expected length {m_f}, got {game.leader.n_des.shape}")


# validation

@dataclass
class Check:
    name: str
    passed: bool
    where: str = ""
    detail: str = ""
    category: str = ""


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)
    strictly_feasible: dict = field(default_factory=dict)  # follower index -> point
    warnings: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failed(self):
        return [c for c in self.checks if not c.passed]

    def find(self, name, where=None):
        return [c for c in self.checks if c.name == name and (where is None or c.where == where)]

    def summary(self):
        lines = []
        for c in self.checks:
            mark = "PASS" if c.passed else "FAIL"
            lines.append(f"{mark} {c.name:<16} {c.where:<16} {c.detail}".rstrip())
        lines.extend(f"WARN {w}" for w in self.warnings)
        return "\n".join(lines)


def _psd_tol(M):
    return 1e-10 * max(1.0, np.linalg.norm(M, 2))


def _min_eig(M):
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


def _bounded(poly):
    n = poly.n
    kw = {"bounds": [(None, None)] * n, "method": "highs"}
    if poly.m_ineq:
        kw.update(A_ub=poly.G, b_ub=poly.h)
    if poly.m_eq:
        kw.update(A_eq=poly.A, b_eq=poly.b)
    for j in range(n):
        for sign in (1.0, -1.0):
            c = np.zeros(n)
            c[j] = -sign
            res = linprog(c, **kw)
            if res.status == 3:
                return False, j, sign
    return True, None, None


def validate_game(game):
    """Check convexity, feasible-set, price-box and constraint-rank conditions.

    Dimension errors raise StructuralError; everything else is reported as a
    pass/fail entry in the returned ValidationReport.
    """
    check_dimensions(game)
    rep = ValidationReport()
    add = rep.checks.append
    P0, Q0 = game.P, game.Q
    for i, f in enumerate(game.followers):
        w = f"followers[{i}]"
        for name, M in (("P", f.P), ("Q", f.Q)):
            asym = float(np.max(np.abs(M - M.T), initial=0.0))
            add(Check(f"{name}_symmetric", asym <= _psd_tol(M), f"{w}.{name}",
                      f"max asymmetry {asym:.3g}", "convexity"))
        ep = _min_eig(f.P)
        add(Check("P_pd", ep > _psd_tol(f.P), f"{w}.P", f"min eigenvalue {ep:.6g}", "convexity"))
        eq = _min_eig(f.Q)
        add(Check("Q_psd", eq >= -_psd_tol(f.Q), f"{w}.Q", f"min eigenvalue {eq:.6g}", "convexity"))
        D = f.P - f.Q
        ed = _min_eig(D)
        add(Check("P_minus_Q_pd", ed > _psd_tol(D), f"{w}.P-Q", f"min eigenvalue {ed:.6g}", "convexity"))
        if i > 0:
            same = np.array_equal(f.P, P0) and np.array_equal(f.Q, Q0)
            add(Check("shared_PQ", same, w, "P and Q must equal followers[0]'s", "convexity"))
        neg = np.argwhere(f.S < 0)
        add(Check("S_nonnegative", neg.size == 0, f"{w}.S",
                  f"negative entries at {neg.tolist()}" if neg.size else "", "pricing"))
        if f.S.shape[0] == f.S.shape[1]:
            off = f.S - np.diag(np.diag(f.S))
            add(Check("S_diagonal", not np.any(off), f"{w}.S", "", "pricing"))

        poly = f.polyhedron
        try:
            y, t = phase_one(poly)
        except InfeasibleError as exc:
            add(Check("feasible", False, w, str(exc), "feasible set"))
            add(Check("slater", False, w, "no feasible point", "feasible set"))
            continue
        add(Check("feasible", True, w, "", "feasible set"))
        # with no inequalities the relative interior is the affine set itself
        strict = t > TOL_SLATER
        add(Check("slater", strict, w, f"max slack margin {t:.6g}", "feasible set"))
        if strict:
            rep.strictly_feasible[i] = y
        ok, j, sign = _bounded(poly)
        add(Check("bounded", ok, w, "" if ok else f"unbounded along {'+' if sign > 0 else '-'}e_{j}", "feasible set"))
        if f.A.shape[0]:
            full = _full_row_rank(f.A)
            add(Check("A_full_rank", full, f"{w}.A",
                      "" if full else f"dependent rows {dependent_rows(f.A)}", "constraint rank"))

    lo, hi = game.price_lo, game.price_hi
    box_ok = bool(np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo <= hi))
    add(Check("price_box", box_ok, "price_lo/price_hi",
              "" if box_ok else "box must be finite with lo <= hi", "price box"))
    S0 = game.followers[0].S
    if any(not np.array_equal(f.S, S0) for f in game.followers[1:]):
        rep.warnings.append("followers have heterogeneous S_i; price-translation invariance does not apply")
    return rep


# pseudo-gradient and monotonicity

def pseudo_gradient(game, x, pi):
    """Stacked follower gradients F_i = P x_i + Q sigma_-i + r_i + S_i pi."""
    x = as_blocks(game, x)
    pi = np.asarray(pi, dtype=float)
    sigma = x.sum(axis=0)
    out = np.empty_like(x)
    for i, f in enumerate(game.followers):
        out[i] = f.P @ x[i] + f.Q @ (sigma - x[i]) + f.r + f.S @ pi
    return out.ravel()


def assemble_F1(game):
    """F1 = I_N (x) (P - Q) + 1 1' (x) Q, with its extreme eigenvalues."""
    P, Q, N = game.P, game.Q, game.N
    F1 = np.kron(np.eye(N), P - Q) + np.kron(np.ones((N, N)), Q)
    eig = np.linalg.eigvalsh(0.5 * (F1 + F1.T))
    lmin, lmax = float(eig[0]), float(eig[-1])
    if lmin <= 0:
        raise MonotonicityError(f"F1 is not positive definite (min eigenvalue {lmin:.6g})")
    return F1, lmin, lmax


def leader_value_and_partials(game, x, pi):
    """(J^L, dJ^L/dpi, [dJ^L/dx_i for each follower])."""
    x = as_blocks(game, x)
    pi = np.asarray(pi, dtype=float)
    obj = game.leader
    gx = obj.grad_x(x, pi)
    return obj.value(x, pi), obj.grad_pi(x, pi), [gx[i] for i in range(game.N)]


def require_valid(game):
    """Validate and raise GameValidationError on any failed check."""
    rep = validate_game(game)
    if not rep.passed:
        raise GameValidationError(rep)
    for w in rep.warnings:
        warnings.warn(w, stacklevel=2)
    return rep
