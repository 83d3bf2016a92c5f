"""Physical models: achievable rate, propulsion power and edge weights.

All quantities are SI and linear-scale.  dB/dBm values are converted once,
when an instance is read from JSON (see :func:`instance_from_dict`).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Tabulated speed/power pairs: maximum-endurance, maximum-range, maximum speed.
TABULATED_POWER = ((10.0, 126.0), (18.0, 162.0), (30.0, 356.0))

# Rotary-wing constants widely used with the blade/induced/parasite power model.  Not part of the
# instance defaults; the tabulated powers above are authoritative.
ROTARY_WING_CONSTANTS = {
    "P0": 79.8563,
    "Pi": 88.6279,
    "Utip": 120.0,
    "v0": 4.03,
    "d0": 0.6,
    "s": 0.05,
    "rho_air": 1.225,
    "rotor_area_A": 0.503,
}


class ModelUnavailable(RuntimeError):
    """Raised when the rotary-wing constants are missing; use the tabulated Pf instead."""


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class RadioParams:
    bandwidth_B: float = 2e6
    tx_power_Pt: float = 0.1
    ref_gain_rho0: float = 1e-6
    noise_power_sigma2: float = 1e-14
    altitude_H: float = 100.0

    def __post_init__(self):
        for name in ("bandwidth_B", "tx_power_Pt", "ref_gain_rho0", "noise_power_sigma2", "altitude_H"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v!r}")


@dataclass(frozen=True)
class UavPowerModel:
    speed_V: float = 18.0
    propulsion_power_Pf: float = 162.0
    hover_power_Ph: float = 165.0
    max_speed_Vmax: float = 30.0
    eq2_constants: dict | None = None
    # (speed, power) samples used when the speed varies (trajectory refinement)
    power_table: tuple = TABULATED_POWER

    def __post_init__(self):
        if not (0 < self.speed_V <= self.max_speed_Vmax):
            raise ValueError("require 0 < speed_V <= max_speed_Vmax")
        if self.propulsion_power_Pf <= 0 or self.hover_power_Ph <= 0:
            raise ValueError("powers must be strictly positive")
        if self.eq2_constants is not None:
            missing = set(ROTARY_WING_CONSTANTS) - set(self.eq2_constants)
            if missing:
                raise ValueError(f"eq2_constants missing {sorted(missing)}")


@dataclass(frozen=True)
class Instance:
    depot_w0: tuple
    sensors_w: tuple
    data_bits_D: tuple
    radio: RadioParams = field(default_factory=RadioParams)
    uav: UavPowerModel = field(default_factory=UavPowerModel)
    d_th: float = 50.0

    def __post_init__(self):
        object.__setattr__(self, "depot_w0", tuple(float(c) for c in self.depot_w0))
        object.__setattr__(self, "sensors_w", tuple(tuple(float(c) for c in p) for p in self.sensors_w))
        object.__setattr__(self, "data_bits_D", tuple(float(d) for d in self.data_bits_D))
        K = len(self.sensors_w)
        if K < 1:
            raise ValueError("an instance needs at least one sensor")
        if len(self.data_bits_D) != K:
            raise ValueError("data_bits_D must have one entry per sensor")
        pts = [self.depot_w0, *self.sensors_w]
        if len(set(pts)) != len(pts):
            raise ValueError("sensor positions must be distinct from each other and from the depot")
        if any(not (d > 0 and math.isfinite(d)) for d in self.data_bits_D):
            raise ValueError("data sizes must be finite and > 0")
        if not self.d_th > 0:
            raise ValueError("d_th must be > 0")

    @property
    def K(self) -> int:
        return len(self.sensors_w)

    def positions(self) -> np.ndarray:
        """(K+1, 2) array, row 0 is the depot."""
        return np.array([self.depot_w0, *self.sensors_w], dtype=float)


@dataclass(frozen=True)
class WeightMatrix:
    time_T: np.ndarray
    energy_E: np.ndarray

    @property
    def K(self) -> int:
        return self.time_T.shape[0] - 1


def achievable_rate(radio: RadioParams, horizontal_dist: float) -> float:
    """Free-space rate in bits/s with the UAV ``horizontal_dist`` metres off the sensor."""
    d = float(horizontal_dist)
    if not math.isfinite(d) or d < 0:
        raise ValueError(f"horizontal distance must be finite and >= 0, got {horizontal_dist!r}")
    snr = radio.tx_power_Pt * radio.ref_gain_rho0 / (radio.noise_power_sigma2 * (radio.altitude_H**2 + d * d))
    return radio.bandwidth_B * math.log2(1.0 + snr)


def rate_array(radio: RadioParams, dist) -> np.ndarray:
    d = np.asarray(dist, dtype=float)
    snr = radio.tx_power_Pt * radio.ref_gain_rho0 / (radio.noise_power_sigma2 * (radio.altitude_H**2 + d * d))
    return radio.bandwidth_B * np.log2(1.0 + snr)


def propulsion_power(uav: UavPowerModel, speed: float) -> float:
    """Rotary-wing propulsion power (blade profile + induced + parasite) at ``speed`` (m/s)."""
    c = uav.eq2_constants
    if c is None:
        raise ModelUnavailable("rotary-wing constants not provided: model unavailable, use tabulated Pf")
    v = float(speed)
    if not (0 <= v <= uav.max_speed_Vmax):
        raise ValueError(f"speed {v} outside [0, {uav.max_speed_Vmax}]")
    blade = c["P0"] * (1 + 3 * v**2 / c["Utip"] ** 2)
    induced = c["Pi"] * math.sqrt(math.sqrt(1 + v**4 / (4 * c["v0"] ** 4)) - v**2 / (2 * c["v0"] ** 2))
    parasite = 0.5 * c["d0"] * c["rho_air"] * c["s"] * c["rotor_area_A"] * v**3
    return blade + induced + parasite


def power_curve(uav: UavPowerModel) -> tuple[np.ndarray, np.ndarray]:
    """Convex piecewise-linear power-vs-speed samples spanning [0, Vmax].

    With rotary-wing constants the curve is sampled from the formula; otherwise it
    interpolates hover power at 0, the tabulated pairs and (V, Pf).  The lower
    convex hull is returned so that segment energy is convex in duration.
    """
    if uav.eq2_constants is not None:
        speeds = np.linspace(0.0, uav.max_speed_Vmax, int(math.ceil(uav.max_speed_Vmax)) + 1)
        speeds = np.union1d(speeds, [uav.speed_V])
        pts = {float(v): propulsion_power(uav, v) for v in speeds}
    else:
        pts = {0.0: uav.hover_power_Ph}
        pts.update({float(v): float(p) for v, p in uav.power_table if 0 < v <= uav.max_speed_Vmax})
        pts[float(uav.speed_V)] = uav.propulsion_power_Pf
        if uav.max_speed_Vmax not in pts:
            # extend the last slope out to Vmax
            vs = sorted(pts)
            if len(vs) >= 2:
                v1, v2 = vs[-2], vs[-1]
                slope = (pts[v2] - pts[v1]) / (v2 - v1)
            else:
                slope = 0.0
            pts[uav.max_speed_Vmax] = pts[vs[-1]] + slope * (uav.max_speed_Vmax - vs[-1])
    vs = np.array(sorted(pts))
    ps = np.array([pts[v] for v in vs])
    return _lower_hull(vs, ps)


def _lower_hull(xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    hull: list[int] = []
    for i in range(len(xs)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (xs[b] - xs[a]) * (ys[i] - ys[a]) - (ys[b] - ys[a]) * (xs[i] - xs[a])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return xs[hull], ys[hull]


def hover_times(inst: Instance) -> np.ndarray:
    """T^h_i for i = 0..K, with T^h_0 = 0."""
    r0 = achievable_rate(inst.radio, 0.0)
    return np.concatenate([[0.0], np.asarray(inst.data_bits_D) / r0])


def build_edge_weights(inst: Instance) -> WeightMatrix:
    """Per-edge time (hover at the tail plus flight) and energy on the depot-extended node set."""
    pos = inst.positions()
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    th = hover_times(inst)
    flight = dist / inst.uav.speed_V
    T = th[:, None] + flight
    E = inst.uav.hover_power_Ph * th[:, None] + inst.uav.propulsion_power_Pf * flight
    np.fill_diagonal(T, 0.0)
    np.fill_diagonal(E, 0.0)
    T.setflags(write=False)
    E.setflags(write=False)
    return WeightMatrix(T, E)


# --- JSON ingestion -------------------------------------------------------

DEFAULT_RADIO_JSON = {"bandwidth_mhz": 2, "tx_power_w": 0.1, "ref_gain_db": -60, "noise_dbm": -110, "altitude_m": 100}
DEFAULT_UAV_JSON = {"speed_ms": 18, "pf_w": 162, "ph_w": 165, "vmax_ms": 30}


def instance_from_dict(d: dict) -> Instance:
    radio_d = {**DEFAULT_RADIO_JSON, **d.get("radio", {})}
    uav_d = {**DEFAULT_UAV_JSON, **d.get("uav", {})}
    radio = RadioParams(
        bandwidth_B=float(radio_d["bandwidth_mhz"]) * 1e6,
        tx_power_Pt=float(radio_d["tx_power_w"]),
        ref_gain_rho0=db_to_linear(float(radio_d["ref_gain_db"])),
        noise_power_sigma2=dbm_to_watt(float(radio_d["noise_dbm"])),
        altitude_H=float(radio_d["altitude_m"]),
    )
    uav = UavPowerModel(
        speed_V=float(uav_d["speed_ms"]),
        propulsion_power_Pf=float(uav_d["pf_w"]),
        hover_power_Ph=float(uav_d["ph_w"]),
        max_speed_Vmax=float(uav_d["vmax_ms"]),
        eq2_constants=uav_d.get("eq2_constants"),
    )
    sensors = d["sensors"]
    data = d.get("data_mbits", [500] * len(sensors))
    return Instance(
        depot_w0=tuple(d["depot"]),
        sensors_w=tuple(tuple(p) for p in sensors),
        data_bits_D=tuple(float(m) * 1e6 for m in data),
        radio=radio,
        uav=uav,
        d_th=float(d.get("d_th_m", 50.0)),
    )


def instance_to_dict(inst: Instance) -> dict:
    r, u = inst.radio, inst.uav
    uav = {"speed_ms": u.speed_V, "pf_w": u.propulsion_power_Pf, "ph_w": u.hover_power_Ph, "vmax_ms": u.max_speed_Vmax}
    if u.eq2_constants is not None:
        uav["eq2_constants"] = dict(u.eq2_constants)
    return {
        "depot": list(inst.depot_w0),
        "sensors": [list(p) for p in inst.sensors_w],
        "data_mbits": [b / 1e6 for b in inst.data_bits_D],
        "radio": {
            "bandwidth_mhz": r.bandwidth_B / 1e6,
            "tx_power_w": r.tx_power_Pt,
            "ref_gain_db": round(10 * math.log10(r.ref_gain_rho0), 12),
            "noise_dbm": round(10 * math.log10(r.noise_power_sigma2) + 30, 12),
            "altitude_m": r.altitude_H,
        },
        "uav": uav,
        "d_th_m": inst.d_th,
    }


def load_instance(path) -> Instance:
    return instance_from_dict(json.loads(Path(path).read_text()))


def random_instance(K: int, area_m: float = 1000.0, seed: int = 0, data_mbits: float = 500.0, **kw) -> Instance:
    """Uniform sensors in a square of side ``area_m``, depot at the centre."""
    if K < 1:
        raise ValueError("K must be >= 1")
    rng = np.random.default_rng(seed)
    depot = (area_m / 2, area_m / 2)
    pts: list[tuple] = []
    tries = 0
    while len(pts) < K:
        tries += 1
        if tries > 100 * K + 100:
            raise RuntimeError("could not place distinct sensors")
        p = tuple(float(c) for c in np.round(rng.uniform(0, area_m, size=2), 3))
        if p != depot and p not in pts:
            pts.append(p)
    return Instance(depot, tuple(pts), tuple([data_mbits * 1e6] * K), **kw)
