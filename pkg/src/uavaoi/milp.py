"""Best-bound branch-and-bound over :mod:`uavaoi.lp`.

Children are solved eagerly from the parent's basis (dual simplex), so the
heap is keyed by each node's own LP bound.  Branching is reliability
branching: pseudocosts, initialised by strong branching.  Reduced-cost
fixing is applied to binaries whenever an incumbent exists.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from .lp import LpModel, LpOutcome, SimplexState

INT_TOL = 1e-6
GAP_TOL = 1e-9
# reliability branching: observations per side before pseudocosts are trusted
RELIABLE = 1
SB_LOOKAHEAD = 4
SCORE_EPS = 1e-6
INFEASIBLE_GAIN = 1e6


class MilpUnbounded(RuntimeError):
    pass


@dataclass
class MilpModel:
    lp: LpModel
    integer: np.ndarray

    def __post_init__(self):
        self.integer = np.asarray(self.integer, dtype=int)
        n = self.lp.c.size
        if self.integer.size and (self.integer.min() < 0 or self.integer.max() >= n):
            raise ValueError("integer index out of range")


@dataclass
class MilpOutcome:
    status: str  # "optimal" | "infeasible"
    x: np.ndarray | None = None
    objective: float | None = None
    nodes: int = 0
    lp_iterations: int = 0
    # smallest LP bound among nodes discarded by bound (inf if none)
    pruned_bound: float = np.inf
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    lb: np.ndarray = field(compare=False)
    ub: np.ndarray = field(compare=False)
    out: LpOutcome = field(compare=False)


def _fractionality(x: np.ndarray) -> np.ndarray:
    return np.abs(x - np.round(x))


def solve_milp(
    model: MilpModel,
    incumbent: np.ndarray | None = None,
    cutoff: float | None = None,
    node_limit: int = 1_000_000,
    branching: str = "reliability",
) -> MilpOutcome:
    """Global optimum of ``model``.

    ``incumbent`` is an optional feasible start; ``cutoff`` discards every
    solution whose objective is not below it (status "infeasible" then means
    "nothing better than the cutoff", and ``pruned_bound`` is a valid bound).
    """
    lp = model.lp
    ints = model.integer
    best_x: np.ndarray | None = None
    best_obj = np.inf if cutoff is None else float(cutoff)
    if incumbent is not None:
        x0 = np.asarray(incumbent, dtype=float)
        if _feasible(lp, x0, ints):
            obj = float(lp.c @ x0)
            if obj < best_obj:
                best_x, best_obj = x0.copy(), obj
    stats = {"nodes": 0, "lp_iter": 0}
    pruned = [np.inf]
    seq = itertools.count()
    ws = SimplexState(lp)
    pc = _Pseudocosts(lp.c.size)

    def run(state: SimplexState) -> LpOutcome:
        out = state.solve()
        stats["nodes"] += 1
        stats["lp_iter"] += out.iterations
        # every LP optimum, strong-branching probes included, is offered as incumbent
        out.info["integral"] = out.optimal and consider(out)
        return out

    def consider(out: LpOutcome) -> bool:
        """Offer an integral LP solution as incumbent; True if it was integral."""
        nonlocal best_x, best_obj
        xi = out.x[ints]
        if np.any(_fractionality(xi) > INT_TOL):
            return False
        x = out.x.copy()
        x[ints] = np.round(xi)
        obj = float(lp.c @ x)
        if obj < best_obj - GAP_TOL:
            best_x, best_obj = x, obj
        elif abs(obj - best_obj) <= GAP_TOL and best_x is not None and _lex_less(x[ints], best_x[ints]):
            best_x = x
        return True

    lb0, ub0 = lp.lb.copy(), lp.ub.copy()
    root = run(ws.reset(lb0, ub0, None))
    if root.status == "unbounded":
        raise MilpUnbounded("LP relaxation is unbounded")
    heap: list[_Node] = []
    # (node, solved state) continued without a refactorisation while it is still the best bound
    pending: tuple[_Node, SimplexState] | None = None
    if root.optimal and not root.info["integral"]:
        pending = (_Node(root.objective, next(seq), lb0, ub0, root), ws.copy())
    while heap or pending is not None:
        if pending is not None:
            node, state = pending
            pending = None
        else:
            node, state = heapq.heappop(heap), None
        if node.bound >= best_obj - GAP_TOL:
            pruned[0] = min(pruned[0], node.bound)
            continue
        if stats["nodes"] >= node_limit:
            raise RuntimeError(f"branch-and-bound node limit {node_limit} reached")
        out = node.out
        lb, ub = node.lb, node.ub
        if state is None:
            state = ws.reset(lb, ub, out.basis)
        if np.isfinite(best_obj):
            lb, ub = _reduced_cost_fixing(out, lb, ub, ints, best_obj - node.bound)
            state.set_bounds(lb, ub)
        kids = []
        if branching == "reliability":
            kids_raw = _branch(out, lb, ub, state, ints, pc, run)
        else:
            xi = out.x[ints]
            frac = np.minimum(xi - np.floor(xi), np.ceil(xi) - xi)
            j = int(ints[int(np.argmax(np.round(frac, 9)))])
            kids_raw = _children(j, out.x[j], lb, ub, state, run)
        for clb, cub, cstate, child in kids_raw:
            if child is None or not child.optimal:
                continue
            if child.objective >= best_obj - GAP_TOL:
                pruned[0] = min(pruned[0], child.objective)
                continue
            if not child.info["integral"]:
                kids.append((_Node(child.objective, next(seq), clb, cub, child), cstate))
        kids.sort(key=lambda t: t[0])
        if kids and (not heap or kids[0][0] <= heap[0]):
            pending = kids.pop(0)
        for kid, _ in kids:
            heapq.heappush(heap, kid)
    info = {}
    if best_x is None:
        return MilpOutcome("infeasible", nodes=stats["nodes"], lp_iterations=stats["lp_iter"], pruned_bound=pruned[0], info=info)
    return MilpOutcome(
        "optimal", x=best_x, objective=best_obj, nodes=stats["nodes"], lp_iterations=stats["lp_iter"],
        pruned_bound=pruned[0], info=info,
    )


class _Pseudocosts:
    """Average objective gain per unit of bound change, for each side of each variable."""

    def __init__(self, n: int):
        self.sum = np.zeros((2, n))
        self.count = np.zeros((2, n), dtype=int)

    def update(self, side: int, j: int, gain: float, dist: float):
        if np.isfinite(gain) and dist > 0:
            self.sum[side, j] += max(gain, 0.0) / dist
            self.count[side, j] += 1

    def estimate(self, side: int, j: int) -> float:
        if self.count[side, j]:
            return self.sum[side, j] / self.count[side, j]
        seen = self.count[side] > 0
        return float(self.sum[side, seen].sum() / self.count[side, seen].sum()) if seen.any() else 1.0

    def reliable(self, j: int) -> bool:
        return min(self.count[0, j], self.count[1, j]) >= RELIABLE


def _score(down: float, up: float) -> float:
    return max(down, SCORE_EPS) * max(up, SCORE_EPS)


def _branch(out: LpOutcome, lb, ub, state: SimplexState, ints, pc: _Pseudocosts, run):
    """Reliability branching; returns the two children of the chosen variable, already solved.

    Candidates whose pseudocosts rest on too few observations are strong
    branched (both children solved in full), most fractional first, until
    ``SB_LOOKAHEAD`` of them in a row fail to improve the best score.
    """
    xi = out.x[ints]
    frac = np.minimum(xi - np.floor(xi), np.ceil(xi) - xi)
    order = [k for k in np.argsort(-np.round(frac, 9), kind="stable") if frac[k] > INT_TOL]
    best, best_j, best_kids = -1.0, -1, None
    stale = 0
    for k in order:
        j = int(ints[k])
        v = out.x[j]
        fd, fu = v - np.floor(v), np.ceil(v) - v
        kids = None
        if not pc.reliable(j) and stale < SB_LOOKAHEAD:
            kids = _children(j, v, lb, ub, state, run)
            gains = []
            for side, dist, kid in ((0, fd, kids[0]), (1, fu, kids[1])):
                child = kid[3]
                g = child.objective - out.objective if child is not None and child.optimal else np.inf
                pc.update(side, j, g, dist)
                gains.append(g)
            score = _score(min(gains[0], INFEASIBLE_GAIN), min(gains[1], INFEASIBLE_GAIN))
        else:
            score = _score(pc.estimate(0, j) * fd, pc.estimate(1, j) * fu)
        if score > best * (1 + 1e-9):
            best, best_j, best_kids = score, j, kids
            stale = 0
        else:
            stale += 1
    if best_kids is None:
        v = out.x[best_j]
        best_kids = _children(best_j, v, lb, ub, state, run)
        for side, dist, kid in ((0, v - np.floor(v), best_kids[0]), (1, np.ceil(v) - v, best_kids[1])):
            child = kid[3]
            if child is not None and child.optimal:
                pc.update(side, best_j, child.objective - out.objective, dist)
    return best_kids


def _children(j, v, lb, ub, state: SimplexState, run):
    kids = []
    for side in (0, 1):
        clb, cub = lb.copy(), ub.copy()
        if side == 0:
            cub[j] = np.floor(v)
        else:
            clb[j] = np.ceil(v)
        if clb[j] > cub[j]:
            kids.append((clb, cub, None, None))
            continue
        cstate = state.copy()
        cstate.set_bounds(clb, cub)
        kids.append((clb, cub, cstate, run(cstate)))
    return kids


def _reduced_cost_fixing(out: LpOutcome, lb, ub, ints, gap):
    d = out.reduced_costs[ints]
    x = out.x[ints]
    at0 = (np.abs(x - lb[ints]) <= INT_TOL) & (d > gap + GAP_TOL)
    at1 = (np.abs(x - ub[ints]) <= INT_TOL) & (-d > gap + GAP_TOL)
    if not (at0.any() or at1.any()):
        return lb, ub
    lb, ub = lb.copy(), ub.copy()
    ub[ints[at0]] = lb[ints[at0]]
    lb[ints[at1]] = ub[ints[at1]]
    return lb, ub


def _lex_less(a: np.ndarray, b: np.ndarray) -> bool:
    diff = np.flatnonzero(a != b)
    return bool(diff.size) and a[diff[0]] < b[diff[0]]


def _feasible(lp: LpModel, x: np.ndarray, ints: np.ndarray, tol: float = 1e-7) -> bool:
    if x.size != lp.c.size:
        return False
    if np.any(x < lp.lb - tol) or np.any(x > lp.ub + tol):
        return False
    if np.any(_fractionality(x[ints]) > INT_TOL):
        return False
    ax = lp.A @ x
    for i, s in enumerate(lp.senses):
        if s == "<=" and ax[i] > lp.b[i] + tol:
            return False
        if s == ">=" and ax[i] < lp.b[i] - tol:
            return False
        if s == "=" and abs(ax[i] - lp.b[i]) > tol:
            return False
    return True
