"""Flow-based multi-return MILP, normalisation extremes, baselines and the lambda sweep."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .lp import EQ, LE, LpModel
from .milp import MilpModel, solve_milp
from .model import Instance, WeightMatrix, build_edge_weights
from .tours import (MultiTour, decode_arcs, dp_hamiltonian_optimum, evaluate, flow_values, normalization,
                    scalarized)

TSP_MAX_K = 20
HAM_MILP_MAX_K = 6


class SolverFailure(RuntimeError):
    """A solve did not produce an optimal, structurally valid tour."""

    def __init__(self, msg: str, lam: float | None = None, trace=None):
        super().__init__(msg if lam is None else f"lambda={lam}: {msg}")
        self.lam = lam
        self.trace = trace


@dataclass(frozen=True)
class Extremes:
    aoi_min: float
    aoi_max: float
    energy_min: float
    energy_max: float
    tsp_tour: MultiTour
    star_tour: MultiTour

    @property
    def degenerate(self) -> bool:
        return not (self.aoi_max > self.aoi_min and self.energy_max > self.energy_min)


@dataclass
class ScalarizedModel:
    milp: MilpModel
    edges: list
    cost_T: np.ndarray
    cost_E: np.ndarray
    lam: float | None
    K: int

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def x_slice(self) -> slice:
        return slice(0, self.n_edges)

    def y_slice(self) -> slice:
        return slice(self.n_edges, 2 * self.n_edges)

    def vector_for(self, tour: MultiTour) -> np.ndarray:
        """(x, y) assignment of a tour, with y the visit-count flow."""
        idx = {e: k for k, e in enumerate(self.edges)}
        v = np.zeros(2 * self.n_edges)
        for arc, f in flow_values(tour).items():
            v[idx[arc]] = 1.0
            v[self.n_edges + idx[arc]] = f
        return v


@dataclass
class ParetoPoint:
    lam: float
    avg_aoi: float
    energy: float
    tour: MultiTour
    solver: str
    iterations: int = 0
    runtime: float = 0.0
    objective: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def n_cycles(self) -> int:
        return len(self.tour.cycles)


def edge_list(K: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(K + 1) for j in range(K + 1) if i != j]


def held_karp(w: WeightMatrix) -> MultiTour:
    """Exact minimum-energy single cycle through all sensors.

    Ties in energy go to the lower average AoI, then to the lexicographically
    smallest visiting order.
    """
    K = w.K
    if K > TSP_MAX_K:
        raise ValueError(f"Held-Karp limited to K <= {TSP_MAX_K}, got K={K}")
    if K == 1:
        return MultiTour(((1,),))
    E = np.asarray(w.energy_E, dtype=float)
    T = np.asarray(w.time_T, dtype=float)
    E1, T1 = E[1:, 1:], T[1:, 1:]
    n = 1 << K
    gE = np.full((n, K), np.inf)
    gA = np.full((n, K), np.inf)
    nxt = np.full((n, K), -1, dtype=np.int8)
    popcount = np.array([bin(s).count("1") for s in range(n)])
    for i in range(K):
        gE[1 << i, i] = E[i + 1, 0]
        gA[1 << i, i] = K * T[i + 1, 0]
    tol = 1e-9 * max(1.0, float(E.max()) * K)
    tolA = 1e-9 * max(1.0, float(T.max()) * K * K)
    for s in range(2, K + 1):
        masks = np.flatnonzero(popcount == s)
        pos = K - s + 1  # visiting position of the state's first node
        for i in range(K):
            mi = masks[(masks >> i) & 1 == 1]
            sub = mi ^ (1 << i)
            vals = gE[sub] + E1[i]
            best = vals.min(axis=1)
            tie = vals <= best[:, None] + tol
            avals = np.where(tie, gA[sub] + pos * T1[i], np.inf)
            besta = avals.min(axis=1)
            j = np.argmax(avals <= besta[:, None] + tolA, axis=1)
            rows = np.arange(mi.size)
            gE[mi, i] = vals[rows, j]
            gA[mi, i] = avals[rows, j]
            nxt[mi, i] = j
    full = n - 1
    tot = gE[full] + E[0, 1:]
    best = tot.min()
    tie = tot <= best + tol
    atot = np.where(tie, gA[full], np.inf)
    first = int(np.argmax(atot <= atot.min() + tolA))
    order = [first]
    S = full
    while True:
        j = int(nxt[S, order[-1]])
        if j < 0:
            break
        S ^= 1 << order[-1]
        order.append(j)
    return MultiTour((tuple(k + 1 for k in order),))


def compute_extremes(w: WeightMatrix) -> Extremes:
    K = w.K
    if K < 1:
        raise ValueError("need at least one sensor")
    star = MultiTour.star(K)
    tsp = held_karp(w)
    ms, mt = evaluate(star, w), evaluate(tsp, w)
    return Extremes(ms.avg_aoi, mt.avg_aoi, mt.energy, ms.energy, tsp, star)


def _structure(K: int, hamiltonian: bool):
    """Constraint rows shared by the multi-return and Hamiltonian models."""
    edges = edge_list(K)
    ne = len(edges)
    nv = 2 * ne
    rows, senses, rhs = [], [], []

    def row():
        r = np.zeros(nv)
        rows.append(r)
        return r

    if hamiltonian:
        r = row()
        for k, (i, j) in enumerate(edges):
            if i == 0:
                r[k] = 1
        senses.append(EQ)
        rhs.append(1)
        r = row()
        for k, (i, j) in enumerate(edges):
            if j == 0:
                r[k] = 1
        senses.append(EQ)
        rhs.append(1)
    else:
        # depot out-degree equals in-degree
        r = row()
        for k, (i, j) in enumerate(edges):
            if i == 0:
                r[k] += 1
            if j == 0:
                r[k] -= 1
        senses.append(EQ)
        rhs.append(0)
    # one arc into each sensor, one arc out of it
    for s in range(1, K + 1):
        r = row()
        for k, (i, j) in enumerate(edges):
            if j == s:
                r[k] = 1
        senses.append(EQ)
        rhs.append(1)
    for s in range(1, K + 1):
        r = row()
        for k, (i, j) in enumerate(edges):
            if i == s:
                r[k] = 1
        senses.append(EQ)
        rhs.append(1)
    # each sensor adds one unit of flow
    for s in range(1, K + 1):
        r = row()
        for k, (i, j) in enumerate(edges):
            if i == s:
                r[ne + k] += 1
            if j == s:
                r[ne + k] -= 1
        senses.append(EQ)
        rhs.append(1)
    # no flow leaves the depot
    for s in range(1, K + 1):
        r = row()
        r[ne + edges.index((0, s))] = 1
        senses.append(EQ)
        rhs.append(0)
    # y_ij <= K x_ij
    for k in range(ne):
        r = row()
        r[ne + k] = 1
        r[k] = -K
        senses.append(LE)
        rhs.append(0)
    lb = np.zeros(nv)
    ub = np.concatenate([np.ones(ne), np.full(ne, np.inf)])
    return edges, np.array(rows), senses, np.array(rhs, dtype=float), lb, ub


def objective_coefficients(w: WeightMatrix, lam: float, ext: Extremes, edges=None):
    """C^T_ij and C^E_ij over ``edges``."""
    K = w.K
    edges = edges or edge_list(K)
    da, de = normalization(ext)
    ii = np.array([e[0] for e in edges])
    jj = np.array([e[1] for e in edges])
    cT = lam * np.asarray(w.time_T)[ii, jj] / (K * da)
    cE = (1.0 - lam) * np.asarray(w.energy_E)[ii, jj] / de
    return cT, cE


def build_flow_milp(w: WeightMatrix, lam: float, ext: Extremes) -> ScalarizedModel:
    if not (0.0 <= lam <= 1.0):
        raise ValueError(f"lambda must lie in [0, 1] for Pareto optimality, got {lam}")
    K = w.K
    edges, A, senses, b, lb, ub = _structure(K, hamiltonian=False)
    cT, cE = objective_coefficients(w, lam, ext, edges)
    c = np.concatenate([cE, cT])
    lp = LpModel(c, A, senses, b, lb, ub)
    return ScalarizedModel(MilpModel(lp, np.arange(len(edges))), edges, cT, cE, lam, K)


def strengthened(sm: ScalarizedModel) -> MilpModel:
    """Same integer solutions as ``sm`` with a tighter LP relaxation and fewer rows.

    On a valid tour the flow on arc (i, j) with i a sensor is the position of
    i in its cycle: at least 1, at least 2 unless i is entered from the depot,
    and at most K - 1 when j is another sensor; no two sensors close a cycle
    between themselves.  The depot-out flows are fixed to 0 through their
    bounds, which makes their rows redundant.
    """
    lp = sm.milp.lp
    ne, K = sm.n_edges, sm.K
    idx = {e: k for k, e in enumerate(sm.edges)}
    A = lp.A.copy()
    ub = lp.ub.copy()
    keep = np.ones(A.shape[0], dtype=bool)
    for k, (i, j) in enumerate(sm.edges):
        if i == 0:
            ub[ne + k] = 0.0
    for q in range(A.shape[0]):
        ycols = np.flatnonzero(A[q, ne:])
        xcols = np.flatnonzero(A[q, :ne])
        if ycols.size == 1 and xcols.size <= 1:
            i, j = sm.edges[ycols[0]]
            if i == 0:
                keep[q] = False  # y_0j = 0 or y_0j <= K x_0j, both implied by the bound
            elif j != 0 and xcols.size == 1:
                A[q, xcols[0]] = -(K - 1.0)
    rows = []
    for k, (i, j) in enumerate(sm.edges):
        if i == 0:
            continue
        r = np.zeros(2 * ne)
        r[k], r[ne + k] = 1.0, -1.0
        rows.append(r)
        r = np.zeros(2 * ne)
        r[k], r[idx[(0, i)]], r[ne + k] = 2.0, -1.0, -1.0
        rows.append(r)
    rhs = [0.0] * len(rows)
    for k, (i, j) in enumerate(sm.edges):
        if 0 < i < j:
            # two sensors cannot form a cycle of their own
            r = np.zeros(2 * ne)
            r[k] = r[idx[(j, i)]] = 1.0
            rows.append(r)
            rhs.append(1.0)
    senses = [s for s, kk in zip(lp.senses, keep) if kk] + [LE] * len(rows)
    A = np.vstack([A[keep], *rows])
    b = np.concatenate([lp.b[keep], rhs])
    return MilpModel(LpModel(lp.c, A, senses, b, lp.lb, ub), sm.milp.integer)


def hamiltonian_aoi_milp(w: WeightMatrix) -> ScalarizedModel:
    """Single-cycle mode: one depot departure and return, average AoI only."""
    K = w.K
    edges, A, senses, b, lb, ub = _structure(K, hamiltonian=True)
    ii = np.array([e[0] for e in edges])
    jj = np.array([e[1] for e in edges])
    cT = np.asarray(w.time_T)[ii, jj] / K
    cE = np.zeros(len(edges))
    lp = LpModel(np.concatenate([cE, cT]), A, senses, b, lb, ub)
    return ScalarizedModel(MilpModel(lp, np.arange(len(edges))), edges, cT, cE, None, K)


def decode_solution(sm: ScalarizedModel, x: np.ndarray) -> tuple[MultiTour, float]:
    """Decode the arc variables; also returns the largest |y - f| over all edges."""
    xs = x[sm.x_slice()]
    ys = x[sm.y_slice()]
    arcs = [e for e, v in zip(sm.edges, xs) if v > 0.5]
    tour = decode_arcs(arcs, sm.K)
    f = flow_values(tour)
    dev = max(abs(ys[k] - f.get(e, 0.0)) for k, e in enumerate(sm.edges))
    return tour, float(dev)


def _best_start(sm: ScalarizedModel, tours) -> np.ndarray | None:
    best, best_v = None, np.inf
    for t in tours:
        v = sm.vector_for(t)
        val = float(sm.milp.lp.c @ v)
        if val < best_v:
            best, best_v = v, val
    return best


def solve_monolithic(w: WeightMatrix, lam: float, ext: Extremes, starts=(), tighten: bool = True) -> ParetoPoint:
    """Solve the scalarized flow model directly by branch-and-bound."""
    t0 = time.perf_counter()
    K = w.K
    if K == 1:
        return _single_point(w, lam, ext, "monolithic", t0)
    sm = build_flow_milp(w, lam, ext)
    model = strengthened(sm) if tighten else sm.milp
    out = solve_milp(model, incumbent=_best_start(sm, [ext.star_tour, ext.tsp_tour, *starts]))
    if not out.optimal:
        raise SolverFailure(f"branch-and-bound returned {out.status}", lam)
    tour, dev = decode_solution(sm, out.x)
    return _make_point(w, lam, ext, tour, "monolithic", out.nodes, t0, out.objective, {"flow_dev": dev, "pruned_bound": out.pruned_bound})


def solve_hamiltonian(w: WeightMatrix, starts=(), method: str = "auto") -> ParetoPoint:
    """Hamiltonian-only baseline.

    ``milp`` runs branch-and-bound on :func:`hamiltonian_aoi_milp`; ``dp`` uses
    the exact subset recursion, which is far faster because the flow
    relaxation of a latency objective is weak.  ``auto`` picks the MILP up to
    ``HAM_MILP_MAX_K`` sensors.
    """
    t0 = time.perf_counter()
    if method == "auto":
        method = "milp" if w.K <= HAM_MILP_MAX_K else "dp"
    if method == "dp":
        tour, obj = dp_hamiltonian_optimum(w)
        nodes, dev = 0, 0.0
    elif method == "milp":
        sm = hamiltonian_aoi_milp(w)
        out = solve_milp(strengthened(sm), incumbent=_best_start(sm, [held_karp(w), *starts]))
        if not out.optimal:
            raise SolverFailure(f"branch-and-bound returned {out.status}")
        tour, dev = decode_solution(sm, out.x)
        nodes, obj = out.nodes, out.objective
    else:
        raise ValueError(f"unknown method {method!r}")
    m = evaluate(tour, w)
    if abs(m.avg_aoi - obj) > 1e-6 * max(1.0, m.avg_aoi):
        raise SolverFailure(f"solver AoI {obj} disagrees with evaluated {m.avg_aoi}")
    return ParetoPoint(np.nan, m.avg_aoi, m.energy, tour.canonical(), f"hamiltonian-{method}", nodes,
                       time.perf_counter() - t0, obj, {"flow_dev": dev})


def _single_point(w, lam, ext, solver, t0) -> ParetoPoint:
    tour = MultiTour(((1,),))
    m = evaluate(tour, w)
    return _make_point(w, lam, ext, tour, solver, 0, t0, float(scalarized(m.avg_aoi, m.energy, lam, ext)), {"flow_dev": 0.0})


def _make_point(w, lam, ext, tour, solver, iters, t0, objective, info) -> ParetoPoint:
    m = evaluate(tour, w)
    expect = float(scalarized(m.avg_aoi, m.energy, lam, ext))
    if abs(expect - objective) > 1e-6:
        raise SolverFailure(f"reported objective {objective} != re-evaluated {expect}", lam)
    return ParetoPoint(lam, m.avg_aoi, m.energy, tour.canonical(), solver, iters, time.perf_counter() - t0, objective, info)


def lambda_grid(text: str | None = None) -> list[float]:
    """'a:step:b' or comma list; default 0:0.01:1."""
    if not text:
        return [round(0.01 * k, 10) for k in range(101)]
    if ":" in text:
        a, step, b = (float(v) for v in text.split(":"))
        if step <= 0:
            raise ValueError("lambda step must be positive")
        n = int(np.floor((b - a) / step + 1e-9))
        return [round(a + k * step, 10) for k in range(n + 1)]
    return [float(v) for v in text.split(",") if v.strip()]


def pareto_sweep(inst: Instance | WeightMatrix, lam_grid=None, solver: str = "monolithic",
                 dedupe: bool = True, tol: float = 1e-6, jobs: int = 1, fill: bool = True) -> list[ParetoPoint]:
    """Scalarized optimum at every grid lambda, ordered by lambda.

    With ``fill`` the grid is solved in bisection order: a tour's scalarized
    value is affine in lambda, so the optimal value is concave and a tour
    optimal at both ends of a grid interval is optimal throughout it.  Such
    interiors are filled without solving (``info["inferred"]``).  Each level's
    midpoints are independent and go to a process pool when ``jobs > 1``.
    """
    w = inst if isinstance(inst, WeightMatrix) else build_edge_weights(inst)
    grid = sorted(lambda_grid() if lam_grid is None else list(lam_grid))
    if any(not (0.0 <= lam <= 1.0) for lam in grid):
        raise ValueError("lambda grid must lie in [0, 1]")
    if solver not in ("monolithic", "benders"):
        raise ValueError(f"unknown solver {solver!r}")
    if not grid:
        return []
    ext = compute_extremes(w)
    n = len(grid)
    res: dict[int, ParetoPoint] = {}
    todo = sorted({0, n - 1}) if fill else list(range(n))
    intervals = [(0, n - 1)] if fill and n > 2 else []
    pool = None
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        pool = ProcessPoolExecutor(max_workers=jobs)
    try:
        while todo:
            starts = tuple({p.tour: None for p in res.values()})
            args = [(w, grid[i], ext, solver, tol, starts) for i in todo]
            outs = pool.map(_solve_one, args) if pool else map(_solve_one, args)
            for i, p in zip(todo, outs):
                res[i] = p
            todo, nxt = [], []
            for a, b in intervals:
                if b - a < 2:
                    continue
                if res[a].tour == res[b].tour:
                    for i in range(a + 1, b):
                        res[i] = _inferred_point(w, grid[i], ext, res[a], (grid[a], grid[b]))
                    continue
                m = (a + b) // 2
                todo.append(m)
                nxt += [(a, m), (m, b)]
            intervals = nxt
    finally:
        if pool:
            pool.shutdown()
    points = [res[i] for i in range(n)]
    if dedupe:
        points = dedupe_points(points)
    return points


def _solve_one(args) -> ParetoPoint:
    w, lam, ext, solver, tol, starts = args
    try:
        if solver == "benders":
            from .benders import benders_solve

            return benders_solve(w, lam, tol=tol, ext=ext, starts=starts)[0]
        return solve_monolithic(w, lam, ext, starts=starts)
    except SolverFailure as exc:
        if exc.lam is None:
            exc.lam = lam
        raise


def _inferred_point(w, lam, ext, src: ParetoPoint, bracket) -> ParetoPoint:
    m = evaluate(src.tour, w)
    obj = float(scalarized(m.avg_aoi, m.energy, lam, ext))
    info = {"flow_dev": src.info.get("flow_dev", 0.0), "inferred": True, "bracket": bracket}
    return ParetoPoint(lam, m.avg_aoi, m.energy, src.tour, src.solver, 0, 0.0, obj, info)


def dedupe_points(points: list[ParetoPoint]) -> list[ParetoPoint]:
    out, keys = [], set()
    for p in points:
        if p.tour in keys:
            continue
        keys.add(p.tour)
        out.append(p)
    return out
