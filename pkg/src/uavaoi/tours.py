"""Multi-return tours: evaluation, arc decoding and the brute-force oracle."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .model import Instance, WeightMatrix, build_edge_weights

ORACLE_MAX_K = 8


class TourError(ValueError):
    """Structurally invalid tour or arc set."""


@dataclass(frozen=True)
class MultiTour:
    """Depot-anchored cycles; each cycle lists sensor indices (1..K) in visiting order."""

    cycles: tuple

    def __post_init__(self):
        object.__setattr__(self, "cycles", tuple(tuple(int(i) for i in c) for c in self.cycles))

    @classmethod
    def star(cls, K: int) -> MultiTour:
        return cls(tuple((i,) for i in range(1, K + 1)))

    def validate(self, K: int) -> None:
        seen: list[int] = []
        for c in self.cycles:
            if not c:
                raise TourError("empty cycle")
            seen.extend(c)
        if sorted(seen) != list(range(1, K + 1)):
            missing = sorted(set(range(1, K + 1)) - set(seen))
            dup = sorted({i for i in seen if seen.count(i) > 1})
            extra = sorted(set(seen) - set(range(1, K + 1)))
            raise TourError(f"invalid tour for K={K}: missing={missing} duplicated={dup} out_of_range={extra}")

    def canonical(self) -> MultiTour:
        """Cycles sorted by their smallest sensor index (metrics are order-free)."""
        return MultiTour(tuple(sorted(self.cycles, key=min)))

    def arcs(self) -> list[tuple[int, int]]:
        out = []
        for c in self.cycles:
            path = (0, *c, 0)
            out.extend(zip(path[:-1], path[1:]))
        return out

    def to_json(self) -> dict:
        return {"cycles": [list(c) for c in self.cycles]}

    @classmethod
    def from_json(cls, d: dict) -> MultiTour:
        return cls(tuple(tuple(c) for c in d["cycles"]))


@dataclass(frozen=True)
class TourMetrics:
    aoi_per_sn: np.ndarray
    avg_aoi: float
    energy: float
    flow_y: dict = field(default_factory=dict)


def flow_values(tour: MultiTour) -> dict:
    """Visit-count flow on traversed arcs: 0 out of the depot, r into it for an r-cycle."""
    y = {}
    for c in tour.cycles:
        path = (0, *c, 0)
        for pos, arc in enumerate(zip(path[:-1], path[1:])):
            y[arc] = pos
    return y


def evaluate(tour: MultiTour, w: WeightMatrix) -> TourMetrics:
    K = w.K
    tour.validate(K)
    T, E = w.time_T, w.energy_E
    aoi = np.zeros(K + 1)
    energy = 0.0
    for c in tour.cycles:
        path = (0, *c, 0)
        # backward recursion from the depot return
        acc = 0.0
        for k in range(len(path) - 2, 0, -1):
            acc += T[path[k], path[k + 1]]
            aoi[path[k]] = acc
        energy += sum(E[a, b] for a, b in zip(path[:-1], path[1:]))
    y = flow_values(tour)
    avg = float(aoi[1:].mean())
    avg_flow = sum(f * T[a, b] for (a, b), f in y.items()) / K
    if abs(avg - avg_flow) > 1e-9 * max(1.0, abs(avg)):
        raise AssertionError(f"recursion/flow AoI mismatch: {avg} vs {avg_flow}")
    return TourMetrics(aoi[1:].copy(), avg, float(energy), y)


def decode_arcs(arcs, K: int | None = None) -> MultiTour:
    """Turn a set of selected arcs (i, j) into cycles, following successors from the depot.

    ``arcs`` may be an iterable of pairs or a mapping pair -> 0/1.
    """
    if isinstance(arcs, dict):
        chosen = [a for a, v in arcs.items() if v > 0.5]
    else:
        chosen = list(arcs)
    succ: dict[int, int] = {}
    depot_out = []
    nodes = set()
    for i, j in chosen:
        nodes.update((i, j))
        if i == 0:
            depot_out.append(j)
            continue
        if i in succ:
            raise TourError(f"vertex {i} has more than one successor")
        succ[i] = j
    if K is None:
        K = max(nodes - {0}, default=0)
    cycles = []
    used: set[int] = set()
    for start in sorted(depot_out):
        cyc = []
        v = start
        while v != 0:
            if v in used or v not in succ:
                raise TourError(f"broken cycle at vertex {v}")
            used.add(v)
            cyc.append(v)
            v = succ[v]
        cycles.append(tuple(cyc))
    leftover = set(succ) - used
    if leftover:
        raise TourError(f"cycle without the depot on vertices {sorted(leftover)}")
    tour = MultiTour(tuple(cycles))
    tour.validate(K)
    return tour


def scalarized(avg_aoi, energy, lam: float, ext) -> np.ndarray:
    """lam * A / dA + (1 - lam) * E / dE: the scalarized objective with constants dropped."""
    da, de = normalization(ext)
    return lam * np.asarray(avg_aoi) / da + (1.0 - lam) * np.asarray(energy) / de


def normalization(ext) -> tuple[float, float]:
    da = ext.aoi_max - ext.aoi_min
    de = ext.energy_max - ext.energy_min
    # degenerate ranges (K = 1) fall back to unit scaling
    return (da if da > 0 else 1.0), (de if de > 0 else 1.0)


def _ordered_partitions(items: tuple):
    """Every set partition of ``items`` into ordered cycles, each cycle listed once."""
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for size in range(len(rest) + 1):
        for others in itertools.combinations(rest, size):
            remaining = tuple(i for i in rest if i not in others)
            members = (first, *others)
            cycles = list(itertools.permutations(members))
            for tail in _ordered_partitions(remaining):
                for cyc in cycles:
                    yield (cyc, *tail)


@dataclass
class OracleResult:
    tours: list
    avg_aoi: np.ndarray
    energy: np.ndarray
    pareto_idx: np.ndarray

    def pareto(self) -> list:
        return [(self.tours[i], (self.avg_aoi[i], self.energy[i])) for i in self.pareto_idx]

    def best(self, lam: float, ext) -> tuple[MultiTour, float]:
        """Exact minimiser of the scalarized objective over all enumerated tours."""
        vals = scalarized(self.avg_aoi, self.energy, lam, ext)
        i = int(np.argmin(vals))
        return self.tours[i], float(vals[i])


def _cycle_metrics(cyc: tuple, T: np.ndarray, E: np.ndarray) -> tuple[float, float]:
    path = (0, *cyc, 0)
    aoi_sum = 0.0
    acc = 0.0
    for k in range(len(path) - 2, 0, -1):
        acc += T[path[k], path[k + 1]]
        aoi_sum += acc
    return aoi_sum, sum(E[a, b] for a, b in zip(path[:-1], path[1:]))


def oracle_pareto(inst: Instance | WeightMatrix) -> OracleResult:
    """Enumerate every multi-tour (K <= 8) and keep the non-dominated ones."""
    w = inst if isinstance(inst, WeightMatrix) else build_edge_weights(inst)
    K = w.K
    if K > ORACLE_MAX_K:
        raise ValueError(f"oracle enumeration limited to K <= {ORACLE_MAX_K}, got K={K}")
    T, E = np.asarray(w.time_T), np.asarray(w.energy_E)
    cache: dict[tuple, tuple[float, float]] = {}
    tours, aoi, en = [], [], []
    for part in _ordered_partitions(tuple(range(1, K + 1))):
        a = e = 0.0
        for cyc in part:
            m = cache.get(cyc)
            if m is None:
                m = cache[cyc] = _cycle_metrics(cyc, T, E)
            a += m[0]
            e += m[1]
        tours.append(MultiTour(part))
        aoi.append(a / K)
        en.append(e)
    aoi_a, en_a = np.array(aoi), np.array(en)
    return OracleResult(tours, aoi_a, en_a, _nondominated(aoi_a, en_a))


def _nondominated(a: np.ndarray, e: np.ndarray) -> np.ndarray:
    order = np.lexsort((e, a))
    keep = []
    best_e = math.inf
    last = None
    for i in order:
        if e[i] < best_e:
            keep.append(i)
            best_e = e[i]
            last = (a[i], e[i])
        elif last is not None and a[i] == last[0] and e[i] == last[1]:
            keep.append(i)  # identical metric pair: both non-dominated
    return np.array(keep, dtype=int)


DP_MAX_K = 14


def dp_scalarized_optimum(w: WeightMatrix, lam: float, ext) -> tuple[MultiTour, float]:
    """Exact scalarized optimum by dynamic programming over sensor subsets.

    Independent of the MILP path: a forward Held-Karp table prices every
    single cycle (an arc leaving the r-th visited sensor carries r times its
    time), then a partition recursion combines cycles.  O(2^K K^2 + 3^K).
    """
    K = w.K
    if K > DP_MAX_K:
        raise ValueError(f"subset DP limited to K <= {DP_MAX_K}, got K={K}")
    da, de = normalization(ext)
    n = 1 << K
    cyc_cost, cyc_last, parent = _cycle_table(w, lam / (K * da), (1.0 - lam) / de)
    best = np.full(n, np.inf)
    choice = np.zeros(n, dtype=int)
    best[0] = 0.0
    for S in range(1, n):
        low = S & -S
        rest = S ^ low
        sub = rest
        while True:
            C = sub | low
            val = cyc_cost[C] + best[S ^ C]
            if val < best[S]:
                best[S], choice[S] = val, C
            if sub == 0:
                break
            sub = (sub - 1) & rest
    cycles = []
    S = n - 1
    while S:
        C = choice[S]
        cycles.append(_trace_cycle(C, cyc_last[C], parent))
        S ^= C
    return MultiTour(tuple(cycles)).canonical(), float(best[n - 1])


def dp_hamiltonian_optimum(w: WeightMatrix) -> tuple[MultiTour, float]:
    """Single cycle through every sensor minimising average AoI, by subset DP."""
    K = w.K
    if K > DP_MAX_K:
        raise ValueError(f"subset DP limited to K <= {DP_MAX_K}, got K={K}")
    cyc_cost, cyc_last, parent = _cycle_table(w, 1.0 / K, 0.0)
    full = (1 << K) - 1
    return MultiTour((_trace_cycle(full, cyc_last[full], parent),)).canonical(), float(cyc_cost[full])


def _cycle_table(w: WeightMatrix, ct: float, ce: float):
    """Cheapest depot cycle over each sensor subset under weights ct * r * T + ce * E.

    Forward Held-Karp: the arc leaving the r-th visited sensor carries r times
    its flight time.  Returns per-subset cost, last sensor and the parent table.
    """
    K = w.K
    T, E = np.asarray(w.time_T), np.asarray(w.energy_E)
    n = 1 << K
    D = np.full((n, K), np.inf)
    parent = np.full((n, K), -1, dtype=int)
    for v in range(K):
        D[1 << v, v] = ce * E[0, v + 1]
    popcount = np.array([bin(s).count("1") for s in range(n)])
    for S in range(1, n):
        r = popcount[S]
        for v in range(K):
            base = D[S, v]
            if not np.isfinite(base):
                continue
            for u in range(K):
                if S >> u & 1:
                    continue
                val = base + ct * r * T[v + 1, u + 1] + ce * E[v + 1, u + 1]
                S2 = S | 1 << u
                if val < D[S2, u]:
                    D[S2, u] = val
                    parent[S2, u] = v
    tot = D + ct * popcount[:, None] * T[1:, 0][None, :] + ce * E[1:, 0][None, :]
    return tot.min(axis=1), tot.argmin(axis=1), parent


def _trace_cycle(C: int, v: int, parent: np.ndarray) -> tuple[int, ...]:
    path, R = [], C
    while v >= 0:
        path.append(int(v) + 1)
        v, R = parent[R, v], R ^ (1 << v)
    return tuple(reversed(path))
