"""Dense bounded-variable simplex with duals, extreme rays and warm starts.

Every row gets a logical variable, ``A x + s = b``, whose bounds encode the
relation (``<=``: s >= 0, ``>=``: s <= 0, ``=``: s = 0).  The starting basis
is either the logicals or a caller-supplied :class:`Basis`; a composite
(sum-of-infeasibilities) phase 1 works from any basis, and a dual simplex is
used when a warm basis is dual feasible but primal infeasible, which is the
usual situation after a branch-and-bound bound change.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 100
# pivots since the last factorisation beyond which the final point is recomputed
POLISH_AFTER = 40

LE, EQ, GE = "<=", "=", ">="


class LpModelError(ValueError):
    pass


class LpIterationLimit(RuntimeError):
    pass


@dataclass
class LpModel:
    """min c.x  s.t.  A x (<=|=|>=) b,  lb <= x <= ub."""

    c: np.ndarray
    A: np.ndarray
    senses: list
    b: np.ndarray
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = np.zeros((0, n))
        elif A.ndim != 2 or A.shape[1] != n:
            raise LpModelError(f"dimension mismatch: c {n}, A {A.shape}")
        self.A = A
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.senses = list(self.senses)
        m = self.A.shape[0]
        if self.A.shape[1] != n or self.b.size != m or len(self.senses) != m:
            raise LpModelError(f"dimension mismatch: c {n}, A {self.A.shape}, b {self.b.size}, senses {len(self.senses)}")
        bad = [s for s in self.senses if s not in (LE, EQ, GE)]
        if bad:
            raise LpModelError(f"unknown row relations {bad}")
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).ravel().copy()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel().copy()
        if self.lb.size != n or self.ub.size != n:
            raise LpModelError("bound vectors must match the number of variables")
        if np.any(self.lb > self.ub) or np.any(self.lb == np.inf) or np.any(self.ub == -np.inf):
            raise LpModelError("inconsistent variable bounds")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape


@dataclass
class Basis:
    """Basic column indices (structurals first, then logicals) plus at-upper flags."""

    basic: np.ndarray
    at_upper: np.ndarray


@dataclass
class LpOutcome:
    status: str  # "optimal" | "unbounded" | "infeasible"
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    objective: float | None = None
    ray: np.ndarray | None = None
    basis: Basis | None = None
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def solve_lp(model: LpModel, warm_start: Basis | None = None, max_iter: int | None = None) -> LpOutcome:
    state = SimplexState(model, max_iter=max_iter)
    state.load(warm_start)
    return state.solve()


def dual_objective(model: LpModel, out: LpOutcome) -> float:
    """b.pi plus the bound terms carried by the reduced costs."""
    val = float(model.b @ out.duals)
    d = out.reduced_costs
    for j in np.flatnonzero(np.abs(d) > 0):
        val += d[j] * out.x[j]
    return val


class SimplexState:
    """Tableau ``T = B^-1 [A | I]`` with the current point; reusable across bound changes.

    Branch-and-bound keeps one of these per model, refactors once per node and
    solves children from cheap copies after :meth:`set_bounds`.
    """

    def __init__(self, model: LpModel, max_iter: int | None = None):
        self.model = model
        m, n = model.shape
        self.m, self.n = m, n
        self.N = n + m
        self.A = np.hstack([model.A, np.eye(m)])
        self.b = model.b
        lo_s = np.array([0.0 if s in (LE, EQ) else -np.inf for s in model.senses])
        hi_s = np.array([0.0 if s in (GE, EQ) else np.inf for s in model.senses])
        self.lo = np.concatenate([model.lb, lo_s])
        self.hi = np.concatenate([model.ub, hi_s])
        self.cost = np.concatenate([model.c, np.zeros(m)])
        self.max_iter = max_iter or 50 * (self.N + 10)
        self.iters = 0
        self.since_factor = 0
        self.T = None

    # -- setup ----------------------------------------------------------------
    def copy(self) -> SimplexState:
        c = object.__new__(SimplexState)
        c.__dict__.update(self.__dict__)
        for k in ("lo", "hi", "x", "basic", "is_basic"):
            setattr(c, k, getattr(self, k).copy())
        c.T = self.T.copy()
        c.iters = 0
        return c

    def _nonbasic_values(self, at_upper: np.ndarray) -> np.ndarray:
        lo, hi = self.lo, self.hi
        fin_lo, fin_hi = np.isfinite(lo), np.isfinite(hi)
        x = np.where(fin_lo, lo, np.where(fin_hi, hi, 0.0))
        up = at_upper & fin_hi
        x[up] = hi[up]
        return x

    def load(self, warm: Basis | None = None) -> SimplexState:
        """Install ``warm`` (or the all-logical basis) and factor it."""
        if warm is not None and self._install(warm):
            try:
                self._factor()
                return self
            except np.linalg.LinAlgError:
                pass
        self._install(Basis(np.arange(self.n, self.N), np.zeros(self.N, dtype=bool)))
        self._factor()
        return self

    def reset(self, lb: np.ndarray, ub: np.ndarray, warm: Basis | None) -> SimplexState:
        """Fresh start at structural bounds ``lb``/``ub`` from basis ``warm``."""
        self.lo[: self.n] = lb
        self.hi[: self.n] = ub
        self.iters = 0
        return self.load(warm)

    def _install(self, warm: Basis) -> bool:
        basic = np.asarray(warm.basic, dtype=int)
        at_up = np.asarray(warm.at_upper, dtype=bool)
        if basic.size != self.m or at_up.size != self.N or np.unique(basic).size != self.m:
            return False
        if basic.size and (basic.min() < 0 or basic.max() >= self.N):
            return False
        self.basic = basic.copy()
        self.is_basic = np.zeros(self.N, dtype=bool)
        self.is_basic[self.basic] = True
        self.x = self._nonbasic_values(at_up)
        return True

    def set_bounds(self, lb: np.ndarray, ub: np.ndarray) -> None:
        """Replace structural bounds; nonbasic values follow their bound, basics absorb the shift."""
        n = self.n
        changed = np.flatnonzero((self.lo[:n] != lb) | (self.hi[:n] != ub))
        if changed.size == 0:
            return
        old_x = self.x[changed].copy()
        was_up = np.isfinite(self.hi[changed]) & (old_x >= self.hi[changed] - FEAS_TOL)
        was_lo = np.isfinite(self.lo[changed]) & (old_x <= self.lo[changed] + FEAS_TOL)
        self.lo[changed] = lb[changed]
        self.hi[changed] = ub[changed]
        for k, j in enumerate(changed):
            if self.is_basic[j]:
                continue
            lo, hi = self.lo[j], self.hi[j]
            if was_up[k] and not was_lo[k] and np.isfinite(hi):
                v = hi
            elif np.isfinite(lo):
                v = lo
            elif np.isfinite(hi):
                v = hi
            else:
                v = 0.0
            dv = v - old_x[k]
            if dv != 0.0:
                self.x[j] = v
                self.x[self.basic] -= dv * self.T[:, j]

    def _factor(self):
        if self.m == 0:
            self.T = np.zeros((0, self.N))
            return
        B = self.A[:, self.basic]
        Binv = np.linalg.inv(B)
        T = np.empty((self.m, self.N))
        T[:, : self.n] = Binv @ self.A[:, : self.n]
        T[:, self.n :] = Binv
        self.T = T
        xn = self.x.copy()
        xn[self.basic] = 0.0
        self.x[self.basic] = Binv @ (self.b - self.A @ xn)
        self.since_factor = 0

    def _reduced_costs(self) -> np.ndarray:
        return _k.reduced_costs(self.T, self.cost, self.basic)

    def _infeasible(self) -> bool:
        return _k.max_infeasibility(self.x, self.basic, self.lo, self.hi) > FEAS_TOL

    def _counters(self, local: int = 0) -> np.ndarray:
        return np.array([self.iters, self.since_factor, local], dtype=np.int64)

    def _store(self, counters: np.ndarray):
        self.iters = int(counters[0])
        self.since_factor = int(counters[1])

    def _dual(self) -> str:
        """Dual simplex from a dual-feasible basis; 'optimal', 'infeasible' or 'stalled'."""
        d = self._reduced_costs()
        limit = 5 * (self.N + 10)
        while True:
            cnt = self._counters(limit)
            code = _k.dual_simplex(self.T, self.x, self.basic, self.is_basic, self.lo, self.hi, d, cnt,
                                   self.max_iter, REFACTOR_EVERY, FEAS_TOL, PIVOT_TOL)
            limit -= int(cnt[0]) - self.iters
            self._store(cnt)
            if code == _k.REFACTOR:
                self._factor()
                d = self._reduced_costs()
                continue
            if code == _k.ITER_LIMIT:
                raise LpIterationLimit(f"simplex exceeded {self.max_iter} iterations")
            return {_k.OPTIMAL: "optimal", _k.INFEASIBLE: "infeasible", _k.STALLED: "stalled"}[code]

    def _primal(self, phase: int) -> str:
        """Primal iterations; returns 'optimal', 'unbounded' or 'infeasible'."""
        d = self._reduced_costs() if phase == 2 else np.zeros(self.N)
        state = np.zeros(4, dtype=np.int64)
        while True:
            cnt = self._counters()
            code = _k.primal_simplex(self.T, self.x, self.basic, self.is_basic, self.lo, self.hi, self.cost, d,
                                     phase, cnt, state, self.max_iter, REFACTOR_EVERY, FEAS_TOL, OPT_TOL,
                                     PIVOT_TOL, 2 * (self.m + self.n))
            self._store(cnt)
            if code == _k.REFACTOR:
                self._factor()
                if phase == 2:
                    d = self._reduced_costs()
                continue
            if code == _k.ITER_LIMIT:
                raise LpIterationLimit(f"simplex exceeded {self.max_iter} iterations")
            if code == _k.UNBOUNDED:
                self._ray = (int(state[2]), int(state[3]))
                return "unbounded"
            return "optimal" if code == _k.OPTIMAL else "infeasible"

    # -- driver -------------------------------------------------------------
    def solve(self) -> LpOutcome:
        """Optimise from the installed basis and current bounds."""
        used_dual = False
        if self._infeasible():
            d = self._reduced_costs()
            if _k.dual_feasible(d, self.x, self.is_basic, self.lo, self.hi, FEAS_TOL, 1e-7):
                used_dual = True
                if self._dual() == "infeasible":
                    return LpOutcome("infeasible", iterations=self.iters, info={"dual_simplex": True})
            if self._infeasible():
                if self._primal(1) == "infeasible":
                    return LpOutcome("infeasible", iterations=self.iters)
        st = self._primal(2)
        if st == "unbounded":
            j, direction = self._ray
            ray = np.zeros(self.N)
            ray[j] = direction
            ray[self.basic] = -direction * self.T[:, j]
            r = ray[: self.n]
            r = r / np.abs(r).max()
            return LpOutcome("unbounded", ray=r, iterations=self.iters)
        if self.since_factor > POLISH_AFTER:
            self._factor()
            if self._infeasible():
                # drift after refactorisation: polish from the current basis
                if self._primal(1) == "infeasible":
                    return LpOutcome("infeasible", iterations=self.iters)
                self._primal(2)
                self._factor()
        cb = self.cost[self.basic]
        pi = cb @ self.T[:, self.n:] if self.m else np.zeros(0)
        d = self.cost - cb @ self.T
        d[self.basic] = 0.0
        x = self.x[: self.n].copy()
        at_upper = (~self.is_basic) & np.isfinite(self.hi) & (np.abs(self.x - self.hi) <= FEAS_TOL) & (self.lo != self.hi)
        return LpOutcome(
            "optimal",
            x=x,
            duals=pi,
            reduced_costs=d[: self.n],
            objective=float(self.model.c @ x),
            basis=Basis(self.basic.copy(), at_upper),
            iterations=self.iters,
            info={"dual_simplex": used_dual},
        )
