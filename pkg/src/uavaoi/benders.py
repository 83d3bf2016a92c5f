"""Benders decomposition of the scalarized flow model.

The master keeps the arc binaries and one epigraph variable ``theta`` for the
flow cost; the subproblem is the LP dual of the flow problem at fixed arcs.
A bounded dual gives an optimality cut, an unbounded one (arcs containing a
cycle that misses the depot) gives a feasibility cut from the extreme ray.
"""
from __future__ import annotations

import io
import time
from dataclasses import dataclass, field

import numpy as np

from .formulation import (
    Extremes,
    ParetoPoint,
    SolverFailure,
    _make_point,
    _structure,
    compute_extremes,
    edge_list,
    objective_coefficients,
)
from .lp import LE, LpModel, solve_lp
from .milp import MilpModel, solve_milp
from .model import Instance, WeightMatrix, build_edge_weights
from .tours import MultiTour, decode_arcs, flow_values

OPTIMALITY = "optimality"
FEASIBILITY = "feasibility"


@dataclass
class DualSolution:
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    kind: str  # "point" | "ray"
    objective: float | None = None
    # primal flow recovered from the LP row duals (points only)
    flow_y: np.ndarray | None = None


@dataclass
class Cut:
    kind: str
    alpha: np.ndarray
    gamma: np.ndarray

    def lhs(self, x: np.ndarray, K: int) -> float:
        """sum(alpha) - K * sum(x * gamma), to be compared with theta (or 0)."""
        return float(self.alpha.sum() - K * (np.asarray(x) @ self.gamma))

    def holds(self, x: np.ndarray, K: int, theta: float = 0.0, tol: float = 1e-9) -> bool:
        rhs = theta if self.kind == OPTIMALITY else 0.0
        return self.lhs(x, K) <= rhs + tol


@dataclass
class BendersTrace:
    records: list = field(default_factory=list)
    cuts: list = field(default_factory=list)

    def add(self, it, lb, ub, kind, master_obj, sub_obj):
        self.records.append(
            {"iter": it, "lb": lb, "ub": ub, "cut_kind": kind, "master_obj": master_obj, "subproblem_obj": sub_obj}
        )

    @property
    def lbs(self) -> np.ndarray:
        return np.array([r["lb"] for r in self.records])

    @property
    def ubs(self) -> np.ndarray:
        return np.array([r["ub"] for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("iter,lb,ub,cut_kind,master_obj,subproblem_obj\n")
        for r in self.records:
            sub = "inf" if r["subproblem_obj"] is None else repr(r["subproblem_obj"])
            buf.write(f"{r['iter']},{r['lb']!r},{r['ub']!r},{r['cut_kind']},{r['master_obj']!r},{sub}\n")
        return buf.getvalue()


class BendersIterationLimit(SolverFailure):
    pass


def _dual_lp(x: np.ndarray, cost_T: np.ndarray, edges: list, K: int) -> LpModel:
    """Dual of the flow subproblem as a minimisation over (alpha, beta, gamma)."""
    ne = len(edges)
    nv = 2 * K + ne
    A = np.zeros((ne, nv))
    for k, (i, j) in enumerate(edges):
        if i == 0:
            A[k, j - 1] = -1.0  # -alpha_j + beta_j - gamma_0j
            A[k, K + j - 1] = 1.0
        elif j == 0:
            A[k, i - 1] = 1.0
        else:
            A[k, i - 1] = 1.0
            A[k, j - 1] = -1.0
        A[k, 2 * K + k] = -1.0
    c = np.concatenate([-np.ones(K), np.zeros(K), K * np.asarray(x, dtype=float)])
    lb = np.concatenate([np.full(2 * K, -np.inf), np.zeros(ne)])
    return LpModel(c, A, [LE] * ne, np.asarray(cost_T, dtype=float), lb, None)


def _minimal_gamma(alpha: np.ndarray, cost: np.ndarray, edges: list) -> tuple[np.ndarray, np.ndarray]:
    """Smallest gamma (and matching beta) keeping ``alpha`` dual feasible.

    Lowering gamma never weakens the cut, and at the generating arcs the dual
    objective cannot rise above its optimum, so the value is unchanged.
    """
    a = np.concatenate([[0.0], alpha])
    ii = np.array([e[0] for e in edges])
    jj = np.array([e[1] for e in edges])
    out_of_depot = ii == 0
    gamma = np.maximum(0.0, a[ii] - a[jj] - cost)
    gamma[out_of_depot] = 0.0
    beta = np.zeros(alpha.size)
    beta[jj[out_of_depot] - 1] = alpha[jj[out_of_depot] - 1] + cost[out_of_depot]
    return gamma, beta


def dual_subproblem(x: np.ndarray, w: WeightMatrix, lam: float, ext: Extremes,
                    cost_T: np.ndarray | None = None) -> DualSolution:
    """Solve the dual flow subproblem at arc assignment ``x`` (edge order of :func:`edge_list`)."""
    K = w.K
    edges = edge_list(K)
    if cost_T is None:
        cost_T, _ = objective_coefficients(w, lam, ext, edges)
    x = np.asarray(x, dtype=float)
    if x.size != len(edges):
        raise ValueError(f"expected {len(edges)} arc values, got {x.size}")
    model = _dual_lp(x, cost_T, edges, K)
    out = solve_lp(model)
    if out.status == "infeasible":
        raise SolverFailure("dual subproblem infeasible (cannot happen for nonnegative costs)", lam)
    if out.status == "unbounded":
        r = out.ray
        alpha = r[:K]
        if alpha.sum() - K * (x @ np.maximum(r[2 * K:], 0.0)) <= 0:
            raise SolverFailure("subproblem ray does not improve the dual objective", lam)
        gamma, _ = _minimal_gamma(alpha, np.zeros(len(edges)), edges)
        beta = alpha.copy()
        scale = max(np.abs(alpha).max(), np.abs(beta).max(), np.abs(gamma).max())
        return DualSolution(alpha / scale, beta / scale, gamma / scale, "ray")
    alpha = out.x[:K].copy()
    gamma, beta = _minimal_gamma(alpha, cost_T, edges)
    g = float(alpha.sum() - K * (x @ gamma))
    # row duals of a minimisation with <= rows are <= 0; the flow is their negation
    y = -out.duals
    return DualSolution(alpha, beta, gamma, "point", g, y)


def theta_floor(cost_T: np.ndarray, edges: list) -> tuple[np.ndarray, float]:
    """Coefficients (q, q0) with g(X) >= q.x + q0 for every multi-tour X.

    Each sensor's age is at least the time to its successor plus the
    successor's direct return (the triangle inequality bounds the rest).
    """
    K = max(i for i, _ in edges)
    C = np.zeros((K + 1, K + 1))
    for k, (i, j) in enumerate(edges):
        C[i, j] = cost_T[k]
    q = np.zeros(len(edges))
    for k, (i, j) in enumerate(edges):
        if i != 0 and j != 0:
            q[k] = C[i, j] + C[j, 0] - C[i, 0]
    return q, float(C[1:, 0].sum())


def _master(K: int, cost_E: np.ndarray, cuts: list[Cut], floor=None, tighten: bool = True) -> MilpModel:
    """Arc degree rows (balance at the depot, one in/one out per sensor) plus the cut pool."""
    edges, A_full, senses, b, lb, ub = _structure(K, hamiltonian=False)
    ne = len(edges)
    n_deg = 1 + 2 * K
    rows = [np.concatenate([A_full[r, :ne], [0.0]]) for r in range(n_deg)]
    sn = list(senses[:n_deg])
    rhs = list(b[:n_deg])
    if floor is not None:
        q, q0 = floor
        rows.append(np.concatenate([q, [-1.0]]))
        sn.append(LE)
        rhs.append(-q0)
    for cut in cuts:
        a = cut.alpha.sum()
        coef = K * cut.gamma
        if tighten and a > 0:
            # x binary and theta >= 0: one arc with K*gamma >= a already
            # switches the cut off, so larger coefficients add nothing
            coef = np.minimum(coef, a)
        rows.append(np.concatenate([-coef, [-1.0 if cut.kind == OPTIMALITY else 0.0]]))
        sn.append(LE)
        rhs.append(-a)
    c = np.concatenate([cost_E, [1.0]])
    lo = np.zeros(ne + 1)  # theta >= 0: the flow cost is nonnegative
    hi = np.concatenate([np.ones(ne), [np.inf]])
    return MilpModel(LpModel(c, np.array(rows), sn, np.array(rhs), lo, hi), np.arange(ne))


def _master_start(x: np.ndarray, cuts: list[Cut], K: int, floor=None) -> np.ndarray | None:
    theta = 0.0 if floor is None else max(0.0, float(floor[0] @ x + floor[1]))
    for cut in cuts:
        v = cut.lhs(x, K)
        if cut.kind == FEASIBILITY and v > 1e-9:
            return None
        if cut.kind == OPTIMALITY:
            theta = max(theta, v)
    return np.concatenate([x, [theta]])


def _arc_vector(tour: MultiTour, edges: list) -> np.ndarray:
    idx = {e: k for k, e in enumerate(edges)}
    x = np.zeros(len(edges))
    for arc in tour.arcs():
        x[idx[arc]] = 1.0
    return x


def benders_solve(
    inst: Instance | WeightMatrix,
    lam: float,
    tol: float = 1e-6,
    ext: Extremes | None = None,
    starts=(),
    max_iter: int | None = None,
    look_ahead: bool = True,
) -> tuple[ParetoPoint, BendersTrace]:
    """Alternate master and dual subproblem until the bounds meet within ``tol``."""
    if not (0.0 <= lam <= 1.0):
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    t0 = time.perf_counter()
    w = inst if isinstance(inst, WeightMatrix) else build_edge_weights(inst)
    ext = ext or compute_extremes(w)
    K = w.K
    edges = edge_list(K)
    cost_T, cost_E = objective_coefficients(w, lam, ext, edges)
    cap = max_iter or 10 * K * K
    trace = BendersTrace()
    floor = theta_floor(cost_T, edges) if look_ahead else None
    cuts: list[Cut] = []
    seeds = [_arc_vector(t, edges) for t in (ext.star_tour, ext.tsp_tour, *starts)]
    lb = -np.inf
    best_ub, best_x, best_y = np.inf, None, None
    for it in range(1, cap + 1):
        master = _master(K, cost_E, cuts, floor)
        cands = [s for s in (_master_start(x, cuts, K, floor) for x in seeds + ([best_x] if best_x is not None else [])) if s is not None]
        start = min(cands, key=lambda v: float(master.lp.c @ v)) if cands else None
        mout = solve_milp(master, incumbent=start)
        if not mout.optimal:
            raise SolverFailure(f"master problem {mout.status} at iteration {it}", lam, trace)
        x = np.round(mout.x[:-1])
        theta = float(mout.x[-1])
        master_obj = float(mout.objective)
        lb = max(lb, master_obj)
        sub = dual_subproblem(x, w, lam, ext, cost_T)
        if sub.kind == "point":
            ub = float(cost_E @ x) + sub.objective
            cut = Cut(OPTIMALITY, sub.alpha, sub.gamma)
            if ub < best_ub - 1e-12:
                best_ub, best_x, best_y = ub, x, sub.flow_y
            trace.add(it, lb, ub, OPTIMALITY, master_obj, sub.objective)
        else:
            cut = Cut(FEASIBILITY, sub.alpha, sub.gamma)
            trace.add(it, lb, np.inf, FEASIBILITY, master_obj, None)
        trace.cuts.append(cut)
        if best_ub - lb <= tol:
            break
        if cut.holds(x, K, theta, tol=1e-12):
            # a cut that the master point already satisfies would repeat forever
            raise SolverFailure(f"{cut.kind} cut does not separate the master point at iteration {it}", lam, trace)
        cuts.append(cut)
    else:
        raise BendersIterationLimit(f"Benders stopped at the iteration cap {cap} with gap {best_ub - lb:.3e}", lam, trace)
    tour = decode_arcs([e for e, v in zip(edges, best_x) if v > 0.5], K)
    f = flow_values(tour)
    dev = max(abs(best_y[k] - f.get(e, 0.0)) for k, e in enumerate(edges))
    point = _make_point(w, lam, ext, tour, "benders", len(trace.records), t0, best_ub,
                        {"flow_dev": dev, "gap": best_ub - lb, "lb": lb})
    return point, trace
