"""Channel-aware transmission engine.

Sensor data accrues in a local buffer at a constant rate. Every tick a policy
decides whether to send the whole buffer: the periodic baseline sends on a fixed
interval, the context-aware policy sends with probability ``phi ** alpha`` once
``t_min`` has passed since the last transmission and unconditionally from
``t_max`` on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Union

import numpy as np

from .metrics import MetricSpec, PredictedRateMetric, evaluate_metric, metric_to_dict
from .trace import ContextSnapshot

if TYPE_CHECKING:
    from .geomap import GridMap
    from .predictor import RateModel

DEFAULT_SENSOR_RATE_BPS = 10_000.0


class PolicyError(ValueError):
    pass


@dataclass(frozen=True)
class CatParams:
    alpha: float = 2.0
    t_min: float = 10.0
    t_max: float = 120.0

    def __post_init__(self) -> None:
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise PolicyError("alpha must be finite and >= 0")
        if not self.t_min >= 0:
            raise PolicyError("t_min must be >= 0")
        if not self.t_max > self.t_min:
            raise PolicyError("t_max must exceed t_min")


@dataclass(frozen=True)
class PeriodicPolicy:
    interval_s: float

    def __post_init__(self) -> None:
        if not self.interval_s > 0:
            raise PolicyError("interval_s must be > 0")

    def describe(self) -> dict:
        return {"kind": "periodic", "interval_s": self.interval_s}


@dataclass(frozen=True)
class CatPolicy:
    metric: MetricSpec
    params: CatParams = CatParams()

    def describe(self) -> dict:
        return {"kind": "cat", "metric": metric_to_dict(self.metric),
                "alpha": self.params.alpha, "t_min": self.params.t_min, "t_max": self.params.t_max}


TransmissionPolicy = Union[PeriodicPolicy, CatPolicy]


@dataclass(frozen=True)
class BufferState:
    """Buffer contents and time since the last transmission, counted in whole ticks."""

    bytes: int = 0
    ticks_since_tx: int = 0
    tick_s: float = 1.0

    @property
    def elapsed_since_last_tx_s(self) -> float:
        # rounded so that e.g. 100 ticks of 0.1 s compare equal to 10 s
        return round(self.ticks_since_tx * self.tick_s, 9)

    @property
    def oldest_item_age_s(self) -> float:
        # Data accrues from the tick after a transmission on.
        return self.elapsed_since_last_tx_s if self.bytes > 0 else 0.0


@dataclass(frozen=True)
class Trigger:
    payload_bytes: int
    elapsed_s: float
    phi: Optional[float]


@dataclass(frozen=True)
class TransmissionRecord:
    t_start: float
    payload_bytes: int
    rate_mbps: float
    duration_s: float
    mean_buffer_age_s: float
    phi_at_decision: Optional[float]


def tx_probability(phi: float, elapsed_s: float, params: CatParams) -> float:
    if elapsed_s < params.t_min:
        return 0.0
    if elapsed_s >= params.t_max:
        return 1.0
    return min(max(phi, 0.0), 1.0) ** params.alpha


def accrued_bytes(tick_index: int, sensor_rate_Bps: float, tick_s: float) -> int:
    """Whole bytes produced during tick ``tick_index`` (0-based).

    Uses differences of the floored cumulative total so the per-tick amounts
    always add up to ``floor(n * rate * tick)`` exactly.
    """
    per_tick = sensor_rate_Bps * tick_s
    return math.floor((tick_index + 1) * per_tick) - math.floor(tick_index * per_tick)


def step(
    policy: TransmissionPolicy,
    state: BufferState,
    snapshot: ContextSnapshot,
    new_bytes: int,
    rng: Optional[np.random.Generator] = None,
    predictor: Optional["RateModel"] = None,
    geomap: Optional["GridMap"] = None,
) -> tuple[BufferState, Optional[Trigger]]:
    """Advance one tick: add ``new_bytes`` to the buffer, then decide.

    A trigger sends and empties the whole buffer and resets the interval clock.
    The context-aware policy draws one uniform number per tick from ``rng``.
    """
    state = BufferState(state.bytes + new_bytes, state.ticks_since_tx + 1, state.tick_s)
    elapsed = state.elapsed_since_last_tx_s

    if isinstance(policy, PeriodicPolicy):
        fire = elapsed >= policy.interval_s and state.bytes > 0
        phi = None
    elif isinstance(policy, CatPolicy):
        if rng is None:
            raise PolicyError("context-aware policy needs a random generator")
        if isinstance(policy.metric, PredictedRateMetric) and predictor is None:
            raise PolicyError("predicted-rate metric needs a trained model")
        phi = evaluate_metric(policy.metric, snapshot, state.bytes, predictor, geomap)
        p = tx_probability(phi, elapsed, policy.params)
        u = rng.random()
        fire = u < p and state.bytes > 0
    else:
        raise PolicyError(f"unknown policy {policy!r}")

    if not fire:
        return state, None
    trigger = Trigger(state.bytes, elapsed, phi)
    return BufferState(0, 0, state.tick_s), trigger


def execute_transmission(payload_bytes: int, snapshot: ContextSnapshot, elapsed_s: float,
                         phi: Optional[float] = None) -> TransmissionRecord:
    """Send ``payload_bytes`` at the snapshot's ground-truth rate.

    The buffered bytes accrued uniformly over ``elapsed_s``, so on average they
    waited ``elapsed_s / 2`` before the send started, plus the send itself.
    """
    if snapshot.rate_mbps is None:
        raise PolicyError(f"snapshot at t={snapshot.t} has no ground-truth rate")
    if payload_bytes <= 0:
        raise PolicyError("nothing to transmit")
    duration = payload_bytes * 8 / (snapshot.rate_mbps * 1e6)
    return TransmissionRecord(
        t_start=snapshot.t,
        payload_bytes=int(payload_bytes),
        rate_mbps=snapshot.rate_mbps,
        duration_s=duration,
        mean_buffer_age_s=elapsed_s / 2.0 + duration,
        phi_at_decision=phi,
    )
