import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import line_instance
from uavaoi.model import (
    ROTARY_WING_CONSTANTS,
    Instance,
    ModelUnavailable,
    RadioParams,
    UavPowerModel,
    achievable_rate,
    build_edge_weights,
    hover_times,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    power_curve,
    propulsion_power,
    random_instance,
    rate_array,
)

# B log2(1 + 0.1 * 1e-6 / (1e-14 * 100^2)) = 2e6 log2(1001), evaluated by hand
RATE_AT_ZERO = 1.9934452517671987e7
HOVER_500MBIT = 25.08220376540302


def test_rate_at_zero_distance():
    r = achievable_rate(RadioParams(), 0.0)
    assert r == pytest.approx(2e6 * math.log2(1001.0), rel=1e-12)
    assert r == pytest.approx(RATE_AT_ZERO, abs=1e4)
    assert 500e6 / r == pytest.approx(HOVER_500MBIT, abs=0.01)


def test_rate_limits():
    assert achievable_rate(RadioParams(noise_power_sigma2=1e30), 0.0) < 1e-9
    H = 50.0
    radio = RadioParams(tx_power_Pt=1.0, ref_gain_rho0=2 * H * H * 1e-14, noise_power_sigma2=1e-14, altitude_H=H)
    assert achievable_rate(radio, H) == pytest.approx(radio.bandwidth_B, rel=1e-12)


def test_rate_rejects_bad_distance():
    for d in (-1.0, math.inf, math.nan):
        with pytest.raises(ValueError):
            achievable_rate(RadioParams(), d)


@given(st.floats(0, 1e4), st.floats(0.1, 1e3))
def test_rate_decreasing_in_distance(d, dd):
    r = RadioParams()
    assert achievable_rate(r, d + dd) < achievable_rate(r, d)


@given(st.floats(10, 1e3), st.floats(1, 500))
def test_rate_decreasing_in_altitude(h, dh):
    assert achievable_rate(RadioParams(altitude_H=h + dh), 30.0) < achievable_rate(RadioParams(altitude_H=h), 30.0)


def test_rate_array_matches_scalar():
    d = np.array([0.0, 10.0, 50.0, 400.0])
    assert np.allclose(rate_array(RadioParams(), d), [achievable_rate(RadioParams(), v) for v in d], rtol=1e-14)


def test_propulsion_power_needs_constants():
    with pytest.raises(ModelUnavailable):
        propulsion_power(UavPowerModel(), 10.0)


def test_propulsion_power_at_rest():
    c = ROTARY_WING_CONSTANTS
    u = UavPowerModel(eq2_constants=c)
    assert propulsion_power(u, 0.0) == pytest.approx(c["P0"] + c["Pi"], rel=1e-12)


def test_propulsion_power_against_table():
    # the tabulated powers are only approximately reproduced by the commonly used constants
    u = UavPowerModel(eq2_constants=ROTARY_WING_CONSTANTS)
    for v, p in ((10.0, 126.0), (18.0, 162.0), (30.0, 356.0)):
        assert propulsion_power(u, v) == pytest.approx(p, rel=0.02)
    assert propulsion_power(u, 18.0) == pytest.approx(158.968, abs=1e-3)


def test_propulsion_power_grows_at_high_speed():
    u = UavPowerModel(eq2_constants=ROTARY_WING_CONSTANTS, max_speed_Vmax=60.0)
    assert propulsion_power(u, 50.0) > propulsion_power(u, 40.0) > propulsion_power(u, 30.0)
    with pytest.raises(ValueError):
        propulsion_power(u, 61.0)


def test_power_curve_convex_and_anchored():
    for uav in (UavPowerModel(), UavPowerModel(eq2_constants=ROTARY_WING_CONSTANTS)):
        v, p = power_curve(uav)
        assert v[0] == 0.0 and v[-1] == uav.max_speed_Vmax
        slopes = np.diff(p) / np.diff(v)
        assert np.all(np.diff(slopes) >= -1e-9)
    v, p = power_curve(UavPowerModel())
    assert np.interp(18.0, v, p) == 162.0 and np.interp(0.0, v, p) == 165.0


def test_edge_weights_hand_example():
    w = build_edge_weights(line_instance([100.0]))
    hover = 500e6 / RATE_AT_ZERO
    assert w.time_T[0, 1] == pytest.approx(100 / 18, rel=1e-12)
    assert w.time_T[1, 0] == pytest.approx(hover + 100 / 18, rel=1e-9)
    assert w.time_T[1, 0] == pytest.approx(30.637, abs=1e-3)
    assert w.energy_E[0, 1] == pytest.approx(900.0, rel=1e-12)
    assert w.energy_E[1, 0] == pytest.approx(165 * hover + 900.0, rel=1e-12)


def test_edge_weights_without_data_are_symmetric_flight_times():
    inst = random_instance(4, seed=3)
    tiny = Instance(inst.depot_w0, inst.sensors_w, (1e-30,) * 4)
    T = build_edge_weights(tiny).time_T
    assert np.allclose(T, T.T, atol=1e-12)
    pos = tiny.positions()
    flight = np.linalg.norm(pos[:, None] - pos[None], axis=-1) / 18
    assert np.allclose(T, flight, atol=1e-12)


@given(st.integers(1, 8), st.integers(0, 10_000))
def test_edge_weight_invariants(K, seed):
    inst = random_instance(K, seed=seed)
    w = build_edge_weights(inst)
    T, E = w.time_T, w.energy_E
    off = ~np.eye(K + 1, dtype=bool)
    assert np.all(T[off] > 0) and np.all(E[off] > 0)
    ratio = E[off] / T[off]
    assert np.all(ratio <= 165 + 1e-9) and np.all(ratio >= 162 - 1e-9)
    th = hover_times(inst)
    assert th[0] == 0.0
    pos = inst.positions()
    dist = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
    flight = dist / 18
    assert np.allclose(T[off], (th[:, None] + flight)[off], rtol=1e-12)
    # flight component satisfies the triangle inequality
    via = flight[:, :, None] + flight[None, :, :]  # i -> k -> j
    assert np.all(flight[:, None, :] <= via + 1e-9)
    with pytest.raises(ValueError):
        T[0, 1] = 0.0


def test_instance_validation():
    with pytest.raises(ValueError):
        Instance((0, 0), (), ())
    with pytest.raises(ValueError):
        Instance((0, 0), ((1, 1), (1, 1)), (1.0, 1.0))
    with pytest.raises(ValueError):
        Instance((0, 0), ((0, 0),), (1.0,))
    with pytest.raises(ValueError):
        Instance((0, 0), ((1, 1),), (0.0,))
    with pytest.raises(ValueError):
        Instance((0, 0), ((1, 1),), (1.0, 2.0))
    with pytest.raises(ValueError):
        RadioParams(altitude_H=0.0)
    with pytest.raises(ValueError):
        UavPowerModel(speed_V=40.0)


def test_json_defaults_and_conversion():
    inst = instance_from_dict({"depot": [0, 0], "sensors": [[100, 0]]})
    assert inst.radio.ref_gain_rho0 == pytest.approx(1e-6)
    assert inst.radio.noise_power_sigma2 == pytest.approx(1e-14)
    assert inst.radio.bandwidth_B == 2e6
    assert inst.data_bits_D == (500e6,)
    assert inst.d_th == 50.0
    assert inst.uav.propulsion_power_Pf == 162.0


def test_json_roundtrip(tmp_path):
    inst = random_instance(6, seed=5)
    p = tmp_path / "i.json"
    p.write_text(json.dumps(instance_to_dict(inst)))
    back = load_instance(p)
    assert back.sensors_w == inst.sensors_w and back.depot_w0 == inst.depot_w0
    assert np.allclose(build_edge_weights(back).time_T, build_edge_weights(inst).time_T, rtol=1e-12)


def test_random_instance_determinism():
    a, b, c = random_instance(10, seed=1), random_instance(10, seed=1), random_instance(10, seed=2)
    assert a == b and a.sensors_w != c.sensors_w
    assert len(set(a.sensors_w)) == 10
    assert all(0 <= x <= 1000 and 0 <= y <= 1000 for x, y in a.sensors_w)
    assert a.depot_w0 == (500.0, 500.0)
