"""Euclidean projections onto follower polyhedra and the leader's price box.

The polyhedral projection is a small dense quadratic program,

    min  1/2 y'Hy + c'y   s.t.  Ay = b,  Gy <= h,

solved by a primal active-set method (H = I for projections). Solver
instances remember the last solution and working set, so a sequence of
nearby problems (consecutive Picard iterates) is usually solved with one
saddle-point solve each.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

from .errors import ConvergenceError, InfeasibleError, RankError

DEFAULT_TOL = 1e-9


def _as_matrix(M, ncols, name="matrix"):
    if M is None:
        return np.zeros((0, ncols))
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros((0, ncols))
    if M.ndim == 1:
        M = M.reshape(1, -1)
    return M


def _as_vector(v):
    if v is None:
        return np.zeros(0)
    return np.asarray(v, dtype=float).reshape(-1)


@dataclass(frozen=True, eq=False)
class Polyhedron:
    """{y : Ay = b, Gy <= h}; either block may be empty."""

    A: np.ndarray
    b: np.ndarray
    G: np.ndarray
    h: np.ndarray
    n: int = field(default=-1)

    def __post_init__(self):
        n = self.n
        if n < 0:
            for M in (self.A, self.G):
                M = np.asarray(M, dtype=float) if M is not None else np.zeros((0, 0))
                if M.size:
                    n = M.shape[-1]
                    break
        if n < 0:
            raise ValueError("cannot infer dimension of an unconstrained polyhedron; pass n")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "A", _as_matrix(self.A, n))
        object.__setattr__(self, "b", _as_vector(self.b))
        object.__setattr__(self, "G", _as_matrix(self.G, n))
        object.__setattr__(self, "h", _as_vector(self.h))
        if self.A.shape != (self.b.size, n) or self.G.shape != (self.h.size, n):
            raise ValueError(
                f"inconsistent polyhedron shapes A{self.A.shape} b{self.b.shape} "
                f"G{self.G.shape} h{self.h.shape} for n={n}"
            )

    @property
    def m_eq(self):
        return self.A.shape[0]

    @property
    def m_ineq(self):
        return self.G.shape[0]

    def contains(self, y, tol=1e-9):
        y = np.asarray(y, dtype=float)
        ok_eq = self.m_eq == 0 or np.max(np.abs(self.A @ y - self.b)) <= tol
        ok_in = self.m_ineq == 0 or np.max(self.G @ y - self.h) <= tol
        return bool(ok_eq and ok_in)


def unique_rows(G, h):
    """Indices of the first occurrence of every distinct row of [G | h], in order."""
    if G.shape[0] == 0:
        return np.zeros(0, dtype=int)
    _, first = np.unique(np.column_stack([G, h]), axis=0, return_index=True)
    return np.sort(first)


def lu_solve_refined(M, rhs, lu=None):
    """Dense LU solve with partial pivoting and one step of iterative refinement."""
    if lu is None:
        lu = scipy.linalg.lu_factor(M, check_finite=False)
    x = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
    x = x + scipy.linalg.lu_solve(lu, rhs - M @ x, check_finite=False)
    return x


def _full_row_rank(M, tol=None):
    if M.shape[0] == 0:
        return True
    if M.shape[0] > M.shape[1]:
        return False
    s = np.linalg.svd(M, compute_uv=False)
    if tol is None:
        tol = max(M.shape) * np.finfo(float).eps * max(s[0], 1.0) * 10
    return bool(s[-1] > tol)


def dependent_rows(M, tol=None):
    """Rows of ``M`` that are linear combinations of earlier rows (greedy scan)."""
    kept, dependent = [], []
    for j in range(M.shape[0]):
        if _full_row_rank(M[kept + [j]], tol):
            kept.append(j)
        else:
            dependent.append(j)
    return dependent


def solve_eq_qp(H, c, A, b):
    """Solve min 1/2 x'Hx + c'x s.t. Ax = b through its saddle-point system.

    Returns ``(x, nu)`` with ``Hx + c + A'nu = 0``. Raises RankError when A
    is not full row rank.
    """
    H = np.asarray(H, dtype=float)
    c = _as_vector(c)
    n = H.shape[0]
    A = _as_matrix(A, n)
    b = _as_vector(b)
    m = A.shape[0]
    if m and not _full_row_rank(A):
        raise RankError("equality matrix is not full row rank", dependent_rows(A))
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H
    K[:n, n:] = A.T
    K[n:, :n] = A
    rhs = np.concatenate([-c, b])
    sol = lu_solve_refined(K, rhs)
    scale = max(1.0, np.max(np.abs(rhs)), np.linalg.norm(K, np.inf))
    if np.max(np.abs(K @ sol - rhs), initial=0.0) > 1e-10 * scale:
        raise ConvergenceError("saddle-point residual above tolerance")
    return sol[:n], sol[n:]


def project_box(z, lo, hi):
    """Clamp ``z`` into the box [lo, hi]."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo > hi):
        bad = np.flatnonzero(lo > hi).tolist()
        raise ValueError(f"invalid box: lo > hi at coordinates {bad}")
    return np.minimum(np.maximum(np.asarray(z, dtype=float), lo), hi)


def phase_one(poly, t_max=1.0):
    """Maximize the slack margin t s.t. Gy <= h - t*1, Ay = b.

    Returns ``(y, t)``. ``t > 0`` certifies strict feasibility, ``t >= 0``
    plain feasibility. Raises InfeasibleError when no point satisfies the
    equalities together with Gy <= h.
    """
    n = poly.n
    c = np.zeros(n + 1)
    c[-1] = -1.0
    kw = {}
    if poly.m_ineq:
        kw["A_ub"] = np.column_stack([poly.G, np.ones(poly.m_ineq)])
        kw["b_ub"] = poly.h
    if poly.m_eq:
        kw["A_eq"] = np.column_stack([poly.A, np.zeros(poly.m_eq)])
        kw["b_eq"] = poly.b
    bounds = [(None, None)] * n + [(None, t_max)]
    res = linprog(c, bounds=bounds, method="highs", **kw)
    if res.status == 2:
        raise InfeasibleError("equality constraints are inconsistent")
    if res.status != 0:
        raise InfeasibleError(f"phase-1 LP failed: {res.message}")
    y, t = res.x[:n], res.x[-1]
    if t < -1e-9:
        raise InfeasibleError(f"polyhedron is empty (best slack margin {t:.3g})")
    return y, float(t)


@dataclass
class QPSolution:
    x: np.ndarray
    lam: np.ndarray  # inequality multipliers, original row indexing
    nu: np.ndarray  # equality multipliers
    working: tuple  # inequality rows held at equality (original indexing)
    iterations: int
    residual: float


class ActiveSetQP:
    """Primal active-set solver for a strictly convex QP over a fixed polyhedron.

    Exact duplicate inequality rows are dropped before solving; their
    multipliers are reported as zero. Not thread-safe: the warm-start state
    belongs to one caller.
    """

    def __init__(self, poly, H=None, tol=DEFAULT_TOL, max_iter=None, start=None):
        self.poly = poly
        n = poly.n
        self.H = np.eye(n) if H is None else np.asarray(H, dtype=float)
        self.tol = tol
        if poly.m_eq and not _full_row_rank(poly.A):
            raise RankError("equality matrix is not full row rank", dependent_rows(poly.A))
        self._keep = unique_rows(poly.G, poly.h)
        self._G = poly.G[self._keep]
        self._h = poly.h[self._keep]
        m = self._G.shape[0]
        self.max_iter = 50 * (poly.m_ineq + 1) if max_iter is None else max_iter
        self._start = None if start is None else np.asarray(start, dtype=float)
        self._x = None
        self._work = []
        self._lu = {}
        self._data_scale = None
        self._m = m

    def reset(self):
        self._x = None
        self._work = []

    def feasible_point(self):
        if self._start is None:
            self._start, _ = phase_one(self.poly)
        return self._start.copy()

    def _factor(self, work):
        key = tuple(work)
        hit = self._lu.get(key)
        if hit is None:
            n = self.poly.n
            C = np.vstack([self.poly.A, self._G[list(work)]]) if work else self.poly.A
            m = C.shape[0]
            K = np.zeros((n + m, n + m))
            K[:n, :n] = self.H
            K[:n, n:] = C.T
            K[n:, :n] = C
            # small dense systems: an explicit inverse plus one refinement
            # step is cheaper than repeated LU back-substitution
            Kinv = scipy.linalg.lu_solve(scipy.linalg.lu_factor(K, check_finite=False), np.eye(n + m))
            hit = (K, Kinv, np.concatenate([self.poly.b, self._h[list(work)]]))
            if len(self._lu) > 4096:
                self._lu.clear()
            self._lu[key] = hit
        return hit

    def _eqp(self, c, work):
        n = self.poly.n
        K, Kinv, tail = self._factor(work)
        rhs = np.concatenate([-c, tail])
        sol = Kinv @ rhs
        sol += Kinv @ (rhs - K @ sol)
        meq = self.poly.m_eq
        return sol[:n], sol[n:n + meq], sol[n + meq:]

    def _independent_active(self, x):
        G, h = self._G, self._h
        if self._m == 0:
            return []
        scale = max(1.0, float(np.abs(h).max()))
        active = np.flatnonzero(np.abs(G @ x - h) <= self.tol * scale)
        work = []
        for j in active:
            C = np.vstack([self.poly.A, G[work + [j]]])
            if _full_row_rank(C):
                work.append(int(j))
        return work

    def solve(self, c, x0=None):
        """Minimize over the polyhedron with linear term ``c``.

        ``x0``, when given, must be feasible; otherwise the previous solution
        (warm start) or the phase-1 point is used.
        """
        c = np.asarray(c, dtype=float)
        G, h = self._G, self._h
        if x0 is not None:
            x = np.asarray(x0, dtype=float).copy()
            work = self._independent_active(x)
        elif self._x is not None:
            x = self._x
            work = list(self._work)
        else:
            x = self.feasible_point()
            work = self._independent_active(x)
        scale = max(1.0, float(np.abs(c).max()), float(np.abs(x).max()))
        step_tol = self.tol * scale
        dual_tol = -self.tol * scale
        for it in range(1, self.max_iter + 1):
            y, nu, lam_w = self._eqp(c, work)
            p = y - x
            pmax = float(np.abs(p).max())
            alpha, block = 1.0, -1
            if pmax > step_tol and self._m:
                Gp = G @ p
                slack = h - G @ x
                slack[slack < 0.0] = 0.0
                mask = Gp > 1e-14 * max(1.0, pmax)
                if work:
                    mask[work] = False
                cand = np.flatnonzero(mask)
                if cand.size:
                    ratios = slack[cand] / Gp[cand]
                    k = int(np.argmin(ratios))  # argmin returns the lowest index on ties
                    if ratios[k] < 1.0:
                        alpha, block = float(ratios[k]), int(cand[k])
            if block < 0:
                # full step: y is the minimizer on the current working set
                x = y
                if lam_w.size == 0 or lam_w.min() >= dual_tol:
                    return self._finish(x, c, nu, lam_w, work, it)
                # drop the most negative multiplier; ties go to the lowest row
                jpos = int(np.argmin(lam_w))
                work = work[:jpos] + work[jpos + 1:]
                continue
            x = x + alpha * p
            work = sorted(work + [block])
        raise ConvergenceError(
            f"active-set method did not converge in {self.max_iter} iterations",
            residual=float(np.abs(p).max()),
        )

    def _finish(self, x, c, nu, lam_w, work, iterations):
        poly = self.poly
        lam_unique = np.zeros(self._m)
        if work:
            lam_unique[work] = np.maximum(lam_w, 0.0)
        r = self.H @ x + c
        resid = 0.0
        if poly.m_eq:
            r += poly.A.T @ nu
            resid = float(np.abs(poly.A @ x - poly.b).max())
        if self._m:
            r += self._G.T @ lam_unique
            viol = self._G @ x - self._h
            resid = max(resid, float(viol.max()), float(np.abs(lam_unique * viol).max()))
        resid = max(resid, float(np.abs(r).max()))
        if resid > self.tol * self._scale(c) * 10:
            raise ConvergenceError(f"KKT residual {resid:.3g} above tolerance", residual=resid)
        self._x = x
        self._work = list(work)
        lam = np.zeros(poly.m_ineq)
        lam[self._keep] = lam_unique
        working = tuple(int(self._keep[j]) for j in work)
        return QPSolution(x=x, lam=lam, nu=np.asarray(nu), working=working,
                          iterations=iterations, residual=resid)

    def _scale(self, c):
        if self._data_scale is None:
            self._data_scale = max(1.0, float(np.abs(self._h).max(initial=0.0)),
                                   float(np.abs(self.poly.b).max(initial=0.0)))
        return max(self._data_scale, float(np.abs(c).max()))


class PolyhedronProjector(ActiveSetQP):
    """Warm-started Euclidean projector onto one polyhedron."""

    def __init__(self, poly, tol=DEFAULT_TOL, max_iter=None, start=None):
        super().__init__(poly, H=None, tol=tol, max_iter=max_iter, start=start)

    def project(self, z):
        return self.solve(-np.asarray(z, dtype=float))


def project_polyhedron(z, X, tol=DEFAULT_TOL):
    """Project ``z`` onto ``X``; returns ``(y, duals)``.

    ``duals`` is a QPSolution whose ``lam``/``nu`` certify optimality of the
    projection QP.
    """
    sol = PolyhedronProjector(X, tol=tol).project(z)
    return sol.x, sol
