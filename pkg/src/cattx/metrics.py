"""Transmission metrics: map a context snapshot to a favorability score in [0, 1]."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping, Optional, Union

from .trace import INDICATOR_BOUNDS, ContextSnapshot

if TYPE_CHECKING:
    from .geomap import GridMap
    from .predictor import RateModel

INDICATORS = ("rsrp", "rsrq", "snr", "cqi")


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class IndicatorBounds:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise MetricError(f"bounds need lo < hi, got [{self.lo}, {self.hi}]")


DEFAULT_BOUNDS: dict[str, IndicatorBounds] = {
    name: IndicatorBounds(*INDICATOR_BOUNDS[name]) for name in INDICATORS
}


@dataclass(frozen=True)
class SingleMetric:
    indicator: str
    bounds: Mapping[str, IndicatorBounds] = field(default_factory=lambda: dict(DEFAULT_BOUNDS))

    def __post_init__(self) -> None:
        if self.indicator not in INDICATORS:
            raise MetricError(f"unknown indicator {self.indicator!r}")


@dataclass(frozen=True)
class WeightedMetric:
    weights: Mapping[str, float]
    bounds: Mapping[str, IndicatorBounds] = field(default_factory=lambda: dict(DEFAULT_BOUNDS))

    def __post_init__(self) -> None:
        for name, w in self.weights.items():
            if name not in INDICATORS:
                raise MetricError(f"unknown indicator {name!r}")
            if not w >= 0:
                raise MetricError(f"weight for {name} must be >= 0")
        if not sum(self.weights.values()) > 0:
            raise MetricError("weights must sum to a positive value")


@dataclass(frozen=True)
class PredictedRateMetric:
    rate_max: float = 50.0  # Mbit/s

    def __post_init__(self) -> None:
        if not self.rate_max > 0:
            raise MetricError("rate_max must be > 0")


MetricSpec = Union[SingleMetric, WeightedMetric, PredictedRateMetric]


def normalize_indicator(value: float, bounds: IndicatorBounds) -> float:
    x = (value - bounds.lo) / (bounds.hi - bounds.lo)
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def _indicator(snapshot: ContextSnapshot, name: str) -> float:
    return float(getattr(snapshot.channel, name))


def evaluate_metric(
    spec: MetricSpec,
    snapshot: ContextSnapshot,
    buffer_bytes: float = 0.0,
    predictor: Optional["RateModel"] = None,
    geomap: Optional["GridMap"] = None,
) -> float:
    """Return the metric value phi in [0, 1] for ``snapshot``.

    The predicted-rate variant feeds the snapshot, the pending payload size and the
    optional map feature to ``predictor`` and scales the predicted rate by
    ``spec.rate_max``.
    """
    if isinstance(spec, SingleMetric):
        return normalize_indicator(_indicator(snapshot, spec.indicator), spec.bounds[spec.indicator])
    if isinstance(spec, WeightedMetric):
        total = sum(spec.weights.values())
        acc = sum(
            w * normalize_indicator(_indicator(snapshot, name), spec.bounds[name])
            for name, w in spec.weights.items()
        )
        return min(max(acc / total, 0.0), 1.0)
    if isinstance(spec, PredictedRateMetric):
        if predictor is None:
            raise MetricError("predicted-rate metric requires a trained predictor")
        rate = predictor.predict_snapshot(snapshot, buffer_bytes, geomap)
        return min(max(rate / spec.rate_max, 0.0), 1.0)
    raise MetricError(f"unsupported metric spec {spec!r}")


def metric_from_dict(data: Mapping) -> MetricSpec:
    """Build a metric spec from config, e.g. ``{kind: single, indicator: snr}``."""
    kind = data.get("kind")
    bounds = dict(DEFAULT_BOUNDS)
    for name, pair in (data.get("bounds") or {}).items():
        if name not in INDICATORS:
            raise MetricError(f"bounds given for unknown indicator {name!r}")
        bounds[name] = IndicatorBounds(float(pair[0]), float(pair[1]))
    if kind == "single":
        return SingleMetric(str(data["indicator"]), bounds)
    if kind == "weighted":
        return WeightedMetric({str(k): float(v) for k, v in data["weights"].items()}, bounds)
    if kind == "predicted_rate":
        return PredictedRateMetric(float(data.get("rate_max", 50.0)))
    raise MetricError(f"unknown metric kind {kind!r}")


def metric_to_dict(spec: MetricSpec) -> dict:
    if isinstance(spec, SingleMetric):
        return {"kind": "single", "indicator": spec.indicator}
    if isinstance(spec, WeightedMetric):
        return {"kind": "weighted", "weights": dict(spec.weights)}
    return {"kind": "predicted_rate", "rate_max": spec.rate_max}
