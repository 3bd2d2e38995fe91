"""Synthetic drive-test generator.

Vehicles follow a waypoint route at piecewise-constant speed past a set of cell
sites. Received power follows a log-distance path-loss law with per-tick Gaussian
shadowing; SNR, CQI, RSRQ and the achievable data rate are derived from the
serving cell's RSRP. Regions close to a site become connectivity hotspots and
regions between sites become troughs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

import yaml

from .geo import GeoPosition, bearing_deg, haversine_m
from .rng import substream
from .trace import (
    RSRP_BOUNDS,
    RSRQ_BOUNDS,
    SNR_BOUNDS,
    ChannelIndicators,
    ContextSnapshot,
    MobilitySample,
    Trace,
)

DEFAULT_REF_LOSS_DB = 30.0
DEFAULT_PATH_LOSS_EXPONENT = 3.0
DEFAULT_NOISE_FLOOR_DBM = -100.0
DEFAULT_RATE_MAX_MBPS = 50.0
DEFAULT_SHADOWING_SIGMA_DB = 4.0
RATE_FLOOR_MBPS = 0.1

# RSRQ is synthesized as an affine image of SNR: [-10, 30] dB -> [-19.5, -3] dB.
RSRQ_SLOPE = (RSRQ_BOUNDS[1] - RSRQ_BOUNDS[0]) / (SNR_BOUNDS[1] - SNR_BOUNDS[0])


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class CellSite:
    position: GeoPosition
    tx_power: float = 46.0  # dBm
    path_loss_exponent: float = DEFAULT_PATH_LOSS_EXPONENT
    ref_loss_db: float = DEFAULT_REF_LOSS_DB  # at 1 m
    name: str = ""

    def __post_init__(self) -> None:
        if not (0.0 <= self.tx_power <= 60.0):
            raise ScenarioError(f"tx_power {self.tx_power} outside [0, 60] dBm")
        if not (1.5 <= self.path_loss_exponent <= 6.0):
            raise ScenarioError(f"path_loss_exponent {self.path_loss_exponent} outside [1.5, 6]")


@dataclass(frozen=True)
class Scenario:
    cells: tuple[CellSite, ...]
    waypoints: tuple[GeoPosition, ...]
    speed_profile: tuple[float, ...]  # m/s, one entry per leg
    tick_s: float = 1.0
    shadowing_sigma_db: float = DEFAULT_SHADOWING_SIGMA_DB
    noise_floor_dbm: float = DEFAULT_NOISE_FLOOR_DBM
    seed: int = 0
    rate_max_mbps: float = DEFAULT_RATE_MAX_MBPS
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "cells", tuple(self.cells))
        object.__setattr__(self, "waypoints", tuple(self.waypoints))
        speeds = tuple(float(v) for v in self.speed_profile)
        if len(speeds) == 1 and len(self.waypoints) > 2:
            speeds = speeds * (len(self.waypoints) - 1)
        object.__setattr__(self, "speed_profile", speeds)
        if len(self.cells) < 1:
            raise ScenarioError("scenario needs at least one cell")
        if len(self.waypoints) < 2:
            raise ScenarioError("scenario needs at least two waypoints")
        if len(speeds) != len(self.waypoints) - 1:
            raise ScenarioError(
                f"speed profile has {len(speeds)} entries for {len(self.waypoints) - 1} legs")
        if any(not v > 0 for v in speeds):
            raise ScenarioError("leg speeds must be > 0")
        if not self.tick_s > 0:
            raise ScenarioError("tick_s must be > 0")
        if not self.shadowing_sigma_db >= 0:
            raise ScenarioError("shadowing_sigma_db must be >= 0")
        if not self.rate_max_mbps > 0:
            raise ScenarioError("rate_max_mbps must be > 0")

    def with_seed(self, seed: int) -> "Scenario":
        from dataclasses import replace

        return replace(self, seed=seed)


def rsrp_at(pos: GeoPosition, cell: CellSite, shadowing_db: float = 0.0) -> float:
    """Received reference-signal power (dBm) at ``pos`` from ``cell``."""
    d = max(1.0, haversine_m(pos, cell.position))
    return rsrp_from_distance(d, cell, shadowing_db)


def rsrp_from_distance(d_m: float, cell: CellSite, shadowing_db: float = 0.0) -> float:
    d = max(1.0, d_m)
    loss = cell.ref_loss_db + 10.0 * cell.path_loss_exponent * math.log10(d)
    return min(max(cell.tx_power - loss + shadowing_db, RSRP_BOUNDS[0]), RSRP_BOUNDS[1])


def derive_link(rsrp: float, noise_floor: float = DEFAULT_NOISE_FLOOR_DBM,
                rate_max: float = DEFAULT_RATE_MAX_MBPS) -> tuple[float, int, float]:
    """Map RSRP to (SNR dB, CQI, achievable rate Mbit/s).

    CQI rounds half up; the rate curve is quadratic in CQI and never drops below
    ``RATE_FLOOR_MBPS``.
    """
    snr = min(max(rsrp - noise_floor, SNR_BOUNDS[0]), SNR_BOUNDS[1])
    cqi = int(math.floor(15.0 * (snr + 10.0) / 40.0 + 0.5))
    cqi = min(max(cqi, 0), 15)
    rate = max(rate_max * (cqi / 15.0) ** 2, RATE_FLOOR_MBPS)
    return snr, cqi, rate


def rsrq_from_snr(snr: float) -> float:
    v = RSRQ_BOUNDS[0] + (snr - SNR_BOUNDS[0]) * RSRQ_SLOPE
    return min(max(v, RSRQ_BOUNDS[0]), RSRQ_BOUNDS[1])


def _route_legs(scenario: Scenario) -> list[tuple[GeoPosition, GeoPosition, float, float]]:
    legs = []
    for a, b, v in zip(scenario.waypoints, scenario.waypoints[1:], scenario.speed_profile):
        legs.append((a, b, haversine_m(a, b), v))
    return legs


def generate_trace(scenario: Scenario) -> Trace:
    """Drive the route once, emitting one snapshot every ``scenario.tick_s`` seconds."""
    legs = [leg for leg in _route_legs(scenario) if leg[2] > 0]
    if not legs:
        raise ScenarioError("route has zero total length")
    durations = [length / v for _, _, length, v in legs]
    total_time = sum(durations)
    n_ticks = int(math.floor(total_time / scenario.tick_s + 1e-9)) + 1
    rng = substream(scenario.seed, "synth.shadowing")
    sigma = scenario.shadowing_sigma_db
    names = [c.name or f"cell{i}" for i, c in enumerate(scenario.cells)]

    snapshots = []
    leg_i, leg_start = 0, 0.0
    for k in range(n_ticks):
        t = k * scenario.tick_s
        while leg_i < len(legs) - 1 and t >= leg_start + durations[leg_i]:
            leg_start += durations[leg_i]
            leg_i += 1
        a, b, length, speed = legs[leg_i]
        frac = min(max((t - leg_start) / durations[leg_i], 0.0), 1.0)
        pos = GeoPosition(a.lat + (b.lat - a.lat) * frac, a.lon + (b.lon - a.lon) * frac)

        shadow = rng.standard_normal(len(scenario.cells)) * sigma
        best_i, best_rsrp = 0, -math.inf
        for i, cell in enumerate(scenario.cells):
            p = rsrp_at(pos, cell, float(shadow[i]))
            if p > best_rsrp:
                best_i, best_rsrp = i, p
        snr, cqi, rate = derive_link(best_rsrp, scenario.noise_floor_dbm, scenario.rate_max_mbps)
        snapshots.append(
            ContextSnapshot(
                t=t,
                channel=ChannelIndicators(best_rsrp, rsrq_from_snr(snr), snr, cqi),
                mobility=MobilitySample(pos, speed, bearing_deg(a, b)),
                cell_id=names[best_i],
                rate_mbps=rate,
            )
        )
    return Trace(tuple(snapshots), scenario.tick_s)


def scenario_from_dict(data: dict, seed: Optional[int] = None) -> Scenario:
    """Build a scenario from its YAML/dict form (see README for the schema)."""
    try:
        cells = [
            CellSite(
                position=GeoPosition(float(c["lat"]), float(c["lon"])),
                tx_power=float(c.get("tx_power_dbm", 46.0)),
                path_loss_exponent=float(c.get("path_loss_exponent", DEFAULT_PATH_LOSS_EXPONENT)),
                ref_loss_db=float(c.get("ref_loss_db", DEFAULT_REF_LOSS_DB)),
                name=str(c.get("name", "")),
            )
            for c in data["cells"]
        ]
        waypoints = [GeoPosition(float(lat), float(lon)) for lat, lon in data["waypoints"]]
        speeds = data["speed_mps"]
        if not isinstance(speeds, (list, tuple)):
            speeds = [speeds]
        return Scenario(
            cells=tuple(cells),
            waypoints=tuple(waypoints),
            speed_profile=tuple(float(v) for v in speeds),
            tick_s=float(data.get("tick_s", 1.0)),
            shadowing_sigma_db=float(data.get("shadowing_sigma_db", DEFAULT_SHADOWING_SIGMA_DB)),
            noise_floor_dbm=float(data.get("noise_floor_dbm", DEFAULT_NOISE_FLOOR_DBM)),
            seed=int(data.get("seed", 0) if seed is None else seed),
            rate_max_mbps=float(data.get("rate_max_mbps", DEFAULT_RATE_MAX_MBPS)),
            name=str(data.get("name", "")),
        )
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"malformed scenario: {exc!r}") from None
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None


def load_scenario(path, seed: Optional[int] = None) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: scenario file must be a mapping")
    return scenario_from_dict(data, seed)


def highway_scenario(seed: Optional[int] = None) -> Scenario:
    """The bundled highway scenario: two cells 4 km apart along a straight road."""
    text = resources.files("cattx").joinpath("data/highway.yaml").read_text(encoding="utf-8")
    return scenario_from_dict(yaml.safe_load(text), seed)


def route_length_m(waypoints: Sequence[GeoPosition]) -> float:
    return sum(haversine_m(a, b) for a, b in zip(waypoints, waypoints[1:]))
