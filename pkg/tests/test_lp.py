import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import brute_force_lp
from uavaoi.lp import EQ, GE, LE, LpModel, LpModelError, dual_objective, solve_lp


def _check_optimal(model, out):
    assert out.optimal
    x = out.x
    A, b = model.A, model.b
    r = A @ x
    for s, ri, bi in zip(model.senses, r, b):
        if s == LE:
            assert ri <= bi + 1e-7
        elif s == GE:
            assert ri >= bi - 1e-7
        else:
            assert abs(ri - bi) <= 1e-7
    assert np.all(x >= model.lb - 1e-7) and np.all(x <= model.ub + 1e-7)
    assert out.objective == pytest.approx(float(model.c @ x), abs=1e-9)
    # strong duality
    assert dual_objective(model, out) == pytest.approx(out.objective, abs=1e-6 * max(1.0, abs(out.objective)))
    # complementary slackness on rows
    slack = b - r
    assert np.all(np.abs(out.duals * slack) <= 1e-6)


def _check_ray(model, ray):
    assert float(model.c @ ray) < -1e-9
    Ar = model.A @ ray
    for s, v in zip(model.senses, Ar):
        if s == LE:
            assert v <= 1e-9
        elif s == GE:
            assert v >= -1e-9
        else:
            assert abs(v) <= 1e-9
    fin_lb, fin_ub = np.isfinite(model.lb), np.isfinite(model.ub)
    assert np.all(ray[fin_lb] >= -1e-9) and np.all(ray[fin_ub] <= 1e-9)


def test_textbook_vertex():
    m = LpModel([-1.0, -1.0], [[1.0, 1.0]], [LE], [1.0])
    out = solve_lp(m)
    assert out.objective == pytest.approx(-1.0, abs=1e-12)
    _check_optimal(m, out)


def test_unbounded_gives_ray():
    m = LpModel([-1.0], np.zeros((0, 1)), [], [])
    out = solve_lp(m)
    assert out.status == "unbounded"
    assert out.ray / np.abs(out.ray).max() == pytest.approx([1.0])
    _check_ray(m, out.ray)


def test_infeasible():
    m = LpModel([0.0], [[1.0]], [LE], [-1.0])
    assert solve_lp(m).status == "infeasible"


def test_dimension_mismatch():
    with pytest.raises(LpModelError):
        LpModel([1.0, 2.0], [[1.0]], [LE], [1.0])
    with pytest.raises(LpModelError):
        LpModel([1.0], [[1.0]], ["<"], [1.0])
    with pytest.raises(LpModelError):
        LpModel([1.0], [[1.0]], [LE], [1.0], lb=[2.0], ub=[1.0])


def test_equality_and_ge_rows_and_free_vars():
    # min x + 2y - z  s.t.  x + y = 3, y - z >= -1, z <= 2, z free, y in [0, 1]
    m = LpModel([1.0, 2.0, -1.0], [[1, 1, 0], [0, 1, -1], [0, 0, 1]], [EQ, GE, LE], [3.0, -1.0, 2.0],
                lb=[0.0, 0.0, -np.inf], ub=[np.inf, 1.0, np.inf])
    out = solve_lp(m)
    _check_optimal(m, out)
    assert out.objective == pytest.approx(2.0, abs=1e-9)  # 3 + y - z with z <= y + 1


def test_degenerate_cycling_example():
    # Beale's classic cycling instance
    c = np.array([-0.75, 150.0, -0.02, 6.0])
    A = np.array([[0.25, -60.0, -0.04, 9.0], [0.5, -90.0, -0.02, 3.0], [0.0, 0.0, 1.0, 0.0]])
    m = LpModel(c, A, [LE] * 3, [0.0, 0.0, 1.0])
    out = solve_lp(m)
    _check_optimal(m, out)
    assert out.objective == pytest.approx(-0.05, abs=1e-9)


def _random_lp(rng, m, n):
    A = rng.integers(-5, 6, size=(m, n)).astype(float)
    b = rng.integers(-3, 10, size=m).astype(float)
    c = rng.integers(-6, 7, size=n).astype(float)
    return c, A, b


def test_strong_duality_on_random_lps():
    """100 random LPs: classification matches HiGHS and optimal ones satisfy strong duality."""
    from scipy.optimize import linprog

    rng = np.random.default_rng(7)
    counts = {"optimal": 0, "unbounded": 0, "infeasible": 0}
    for _ in range(100):
        m, n = rng.integers(2, 9), rng.integers(2, 9)
        c, A, b = _random_lp(rng, m, n)
        senses = list(rng.choice([LE, GE, EQ], size=m, p=[0.6, 0.3, 0.1]))
        model = LpModel(c, A, senses, b)
        out = solve_lp(model)
        counts[out.status] += 1
        A_ub = np.vstack([A[i] if s == LE else -A[i] for i, s in enumerate(senses) if s != EQ] or [np.zeros(n)])
        b_ub = np.array([b[i] if s == LE else -b[i] for i, s in enumerate(senses) if s != EQ] or [0.0])
        eq = [i for i, s in enumerate(senses) if s == EQ]
        ref = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A[eq] if eq else None, b_eq=b[eq] if eq else None,
                      bounds=[(0, None)] * n, method="highs")
        expect = {0: "optimal", 2: "infeasible", 3: "unbounded"}[ref.status]
        assert out.status == expect
        if out.optimal:
            assert out.objective == pytest.approx(ref.fun, abs=1e-6 * max(1.0, abs(ref.fun)))
            _check_optimal(model, out)
        elif out.status == "unbounded":
            _check_ray(model, out.ray)
    assert all(v > 0 for v in counts.values())


@given(st.integers(0, 10_000))
def test_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    c, A, b = _random_lp(rng, 4, 3)
    A = np.vstack([A, np.ones((1, 3))])  # bounded feasible region whenever feasible
    b = np.append(np.abs(b), 10.0)
    out = solve_lp(LpModel(c, A, [LE] * 5, b))
    assert out.optimal
    assert out.objective == pytest.approx(brute_force_lp(c, A, b), abs=1e-7)


def test_warm_start_reuses_basis():
    rng = np.random.default_rng(3)
    c, A, b = _random_lp(rng, 6, 6)
    A = np.vstack([A, np.ones((1, 6))])
    b = np.append(np.abs(b), 20.0)
    m = LpModel(c, A, [LE] * 7, b)
    cold = solve_lp(m)
    warm = solve_lp(m, warm_start=cold.basis)
    assert warm.optimal and warm.objective == pytest.approx(cold.objective, abs=1e-9)
    assert warm.iterations <= 1
    m2 = LpModel(c, A, [LE] * 7, b, ub=np.full(6, 1.0))
    again = solve_lp(m2, warm_start=cold.basis)
    _check_optimal(m2, again)
    assert again.objective == pytest.approx(solve_lp(m2).objective, abs=1e-9)
