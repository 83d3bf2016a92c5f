import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uavaoi.lp import GE, LE, LpModel, solve_lp
from uavaoi.milp import MilpModel, solve_milp

RULES = ("reliability", "most_fractional")


@pytest.mark.parametrize("rule", RULES)
def test_forced_branch(rule):
    m = MilpModel(LpModel([-1.0], [[1.0]], [LE], [0.5], ub=[1.0]), [0])
    out = solve_milp(m, branching=rule)
    assert out.optimal and out.x[0] == 0.0 and out.objective == 0.0


def test_continuous_model_equals_lp():
    lp = LpModel([-1.0, -2.0], [[1.0, 1.0], [1.0, 3.0]], [LE, LE], [4.0, 6.0])
    out = solve_milp(MilpModel(lp, []))
    ref = solve_lp(lp)
    assert out.objective == pytest.approx(ref.objective, abs=1e-12)
    assert np.allclose(out.x, ref.x)


def test_infeasible_integer_program():
    # 2x = 1 with x binary
    lp = LpModel([1.0], [[2.0]], ["="], [1.0], ub=[1.0])
    assert solve_milp(MilpModel(lp, [0])).status == "infeasible"


def _knapsack(rng, n):
    v = rng.integers(1, 30, n).astype(float)
    wt = rng.integers(1, 20, n).astype(float)
    cap = float(np.floor(wt.sum() / 2))
    return v, wt, cap


@pytest.mark.parametrize("rule", RULES)
@given(seed=st.integers(0, 10_000))
def test_knapsack_matches_brute_force(rule, seed):
    rng = np.random.default_rng(seed)
    n = 7
    v, wt, cap = _knapsack(rng, n)
    lp = LpModel(-v, [wt], [LE], [cap], ub=np.ones(n))
    out = solve_milp(MilpModel(lp, range(n)), branching=rule)
    best = min(-v @ np.array(s) for s in itertools.product((0, 1), repeat=n) if wt @ np.array(s) <= cap)
    assert out.objective == pytest.approx(best, abs=1e-9)
    assert np.all(np.abs(out.x - np.round(out.x)) <= 1e-6)


def test_mixed_integer_with_general_bounds():
    # min -x - y, x integer in [0, 10], y continuous; 2x + 2y <= 7, x - y >= 0.5
    lp = LpModel([-1.0, -1.0], [[2.0, 2.0], [1.0, -1.0]], [LE, GE], [7.0, 0.5], ub=[10.0, np.inf])
    out = solve_milp(MilpModel(lp, [0]))
    assert out.objective == pytest.approx(-3.5, abs=1e-9)
    assert out.x[0] in (2.0, 3.0)


def test_lexicographic_tie_break_among_incumbents():
    # every single item is optimal; equal-objective incumbents are resolved toward the smaller x
    lp = LpModel([-1.0, -1.0, -1.0], [[1.0, 1.0, 1.0]], [LE], [1.0], ub=np.ones(3))
    model = MilpModel(lp, [0, 1, 2])
    for rule in RULES:
        first = solve_milp(model, branching=rule)
        assert first.objective == -1.0
        assert solve_milp(model, branching=rule).x.tolist() == first.x.tolist()
        start = np.array([0.0, 1.0, 0.0])
        assert solve_milp(model, incumbent=start, branching=rule).x.tolist() == min(start.tolist(), first.x.tolist())


def test_incumbent_and_cutoff():
    rng = np.random.default_rng(5)
    v, wt, cap = _knapsack(rng, 8)
    lp = LpModel(-v, [wt], [LE], [cap], ub=np.ones(8))
    model = MilpModel(lp, range(8))
    ref = solve_milp(model)
    warm = solve_milp(model, incumbent=np.zeros(8))
    assert warm.objective == pytest.approx(ref.objective, abs=1e-12)
    assert solve_milp(model, incumbent=ref.x).nodes <= ref.nodes
    # nothing strictly better than the optimum
    cut = solve_milp(model, cutoff=ref.objective)
    assert cut.status == "infeasible" and cut.pruned_bound >= ref.objective - 1e-9
    # an infeasible incumbent is ignored
    assert solve_milp(model, incumbent=np.ones(8)).objective == pytest.approx(ref.objective, abs=1e-12)


def test_rejects_bad_integer_index():
    with pytest.raises(ValueError):
        MilpModel(LpModel([1.0], [[1.0]], [LE], [1.0]), [3])
