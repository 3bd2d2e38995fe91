"""Trace-driven replay of transmission policies and scheme comparison."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Optional

from .cat import (
    DEFAULT_SENSOR_RATE_BPS,
    BufferState,
    CatPolicy,
    PeriodicPolicy,
    TransmissionPolicy,
    TransmissionRecord,
    accrued_bytes,
    execute_transmission,
    step,
)
from .rng import substream
from .trace import Trace, is_uniform, resample

if TYPE_CHECKING:
    from .geomap import GridMap
    from .predictor import RateModel

TX_LOG_HEADER = ("t_start_s", "payload_bytes", "rate_mbps", "duration_s", "mean_buffer_age_s", "phi")


class SimError(ValueError):
    pass


@dataclass
class SimConfig:
    policy: TransmissionPolicy
    tick_s: float = 1.0
    sensor_rate_Bps: float = DEFAULT_SENSOR_RATE_BPS
    seed: int = 0
    model: Optional["RateModel"] = None
    geomap: Optional["GridMap"] = None

    def __post_init__(self) -> None:
        if not self.tick_s > 0:
            raise SimError("tick_s must be > 0")
        if not self.sensor_rate_Bps > 0:
            raise SimError("sensor_rate_Bps must be > 0")


@dataclass
class SimReport:
    policy: dict
    seed: int
    tick_s: float
    sensor_rate_Bps: float
    duration_s: float
    transmissions: list[TransmissionRecord]
    gaps_s: list[float]
    generated_bytes: int
    final_buffer_bytes: int
    max_buffer_age_s: Optional[float]

    def __post_init__(self) -> None:
        if self.transmitted_bytes + self.final_buffer_bytes != self.generated_bytes:
            raise SimError(
                f"byte conservation violated: {self.transmitted_bytes} sent + "
                f"{self.final_buffer_bytes} buffered != {self.generated_bytes} generated")
        if len(self.gaps_s) != len(self.transmissions):
            raise SimError("one gap per transmission expected")

    @property
    def tx_count(self) -> int:
        return len(self.transmissions)

    @property
    def transmitted_bytes(self) -> int:
        return sum(r.payload_bytes for r in self.transmissions)

    @property
    def mean_tx_rate_mbps(self) -> Optional[float]:
        if not self.transmissions:
            return None
        return sum(r.rate_mbps for r in self.transmissions) / len(self.transmissions)

    @property
    def time_avg_throughput_mbps(self) -> Optional[float]:
        busy = sum(r.duration_s for r in self.transmissions)
        return self.transmitted_bytes * 8 / 1e6 / busy if busy > 0 else None

    @property
    def mean_buffer_age_s(self) -> Optional[float]:
        if not self.transmissions:
            return None
        return sum(r.mean_buffer_age_s for r in self.transmissions) / len(self.transmissions)

    @property
    def mean_gap_s(self) -> Optional[float]:
        return sum(self.gaps_s) / len(self.gaps_s) if self.gaps_s else None

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "seed": self.seed,
            "tick_s": self.tick_s,
            "sensor_rate_Bps": self.sensor_rate_Bps,
            "duration_s": self.duration_s,
            "tx_count": self.tx_count,
            "mean_tx_rate_mbps": self.mean_tx_rate_mbps,
            "time_avg_throughput_mbps": self.time_avg_throughput_mbps,
            "mean_buffer_age_s": self.mean_buffer_age_s,
            "max_buffer_age_s": self.max_buffer_age_s,
            "mean_gap_s": self.mean_gap_s,
            "generated_bytes": self.generated_bytes,
            "transmitted_bytes": self.transmitted_bytes,
            "final_buffer_bytes": self.final_buffer_bytes,
            "gaps_s": list(self.gaps_s),
            "transmissions": [asdict(r) for r in self.transmissions],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "SimReport":
        try:
            return cls(
                policy=doc["policy"],
                seed=doc["seed"],
                tick_s=doc["tick_s"],
                sensor_rate_Bps=doc["sensor_rate_Bps"],
                duration_s=doc["duration_s"],
                transmissions=[TransmissionRecord(**r) for r in doc["transmissions"]],
                gaps_s=list(doc["gaps_s"]),
                generated_bytes=doc["generated_bytes"],
                final_buffer_bytes=doc["final_buffer_bytes"],
                max_buffer_age_s=doc["max_buffer_age_s"],
            )
        except (KeyError, TypeError) as exc:
            raise SimError(f"malformed report: {exc!r}") from None

    def tx_log_csv(self) -> bytes:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TX_LOG_HEADER)
        for r in self.transmissions:
            w.writerow([repr(r.t_start), r.payload_bytes, repr(r.rate_mbps), repr(r.duration_s),
                        repr(r.mean_buffer_age_s), "" if r.phi_at_decision is None else repr(r.phi_at_decision)])
        return buf.getvalue().encode("utf-8")


def run(trace: Trace, config: SimConfig) -> SimReport:
    """Replay ``trace`` tick by tick under ``config.policy``.

    The trace is resampled to ``config.tick_s`` unless it already lies on that
    grid. Every snapshot must carry a ground-truth rate.
    """
    if len(trace) == 0:
        raise SimError("empty trace")
    if not trace.has_rate:
        raise SimError("trace lacks ground-truth rate_mbps for some snapshots")
    if trace.tick_s != config.tick_s or not is_uniform(trace, config.tick_s):
        trace = resample(trace, config.tick_s)

    policy = config.policy
    rng = substream(config.seed, "cat.decisions") if isinstance(policy, CatPolicy) else None
    state = BufferState(tick_s=config.tick_s)
    records: list[TransmissionRecord] = []
    gaps: list[float] = []
    generated = 0
    max_age: Optional[float] = None
    for k, snap in enumerate(trace.snapshots):
        new_bytes = accrued_bytes(k, config.sensor_rate_Bps, config.tick_s)
        generated += new_bytes
        state, trig = step(policy, state, snap, new_bytes, rng, config.model, config.geomap)
        if trig is None:
            continue
        rec = execute_transmission(trig.payload_bytes, snap, trig.elapsed_s, trig.phi)
        records.append(rec)
        gaps.append(trig.elapsed_s)
        oldest = trig.elapsed_s + rec.duration_s
        max_age = oldest if max_age is None else max(max_age, oldest)

    return SimReport(
        policy=policy.describe(),
        seed=config.seed,
        tick_s=config.tick_s,
        sensor_rate_Bps=config.sensor_rate_Bps,
        duration_s=len(trace) * config.tick_s,
        transmissions=records,
        gaps_s=gaps,
        generated_bytes=generated,
        final_buffer_bytes=state.bytes,
        max_buffer_age_s=max_age,
    )


@dataclass
class GainReport:
    rate_gain_pct: float
    tx_count_ratio: float
    age_ratio: float
    baseline: dict = field(default_factory=dict)
    candidate: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"


def _summary(rep: SimReport) -> dict:
    return {"policy": rep.policy, "tx_count": rep.tx_count, "mean_tx_rate_mbps": rep.mean_tx_rate_mbps,
            "mean_buffer_age_s": rep.mean_buffer_age_s, "mean_gap_s": rep.mean_gap_s}


def compare(baseline: SimReport, candidate: SimReport) -> GainReport:
    """Relative gain of ``candidate`` over ``baseline``; negative gains are kept."""
    if not baseline.transmissions or not candidate.transmissions:
        raise SimError("both reports need at least one transmission")
    return GainReport(
        rate_gain_pct=100.0 * (candidate.mean_tx_rate_mbps / baseline.mean_tx_rate_mbps - 1.0),
        tx_count_ratio=candidate.tx_count / baseline.tx_count,
        age_ratio=candidate.mean_buffer_age_s / baseline.mean_buffer_age_s,
        baseline=_summary(baseline),
        candidate=_summary(candidate),
    )


def paired_baseline(cat_report: SimReport) -> PeriodicPolicy:
    """Periodic policy whose interval equals the CAT run's realized mean gap."""
    if cat_report.mean_gap_s is None:
        raise SimError("reference run has no transmissions to pair with")
    return PeriodicPolicy(cat_report.mean_gap_s)


def read_tx_log(raw: bytes) -> list[TransmissionRecord]:
    """Parse a transmissions log written by :meth:`SimReport.tx_log_csv`."""
    reader = csv.reader(io.StringIO(raw.decode("utf-8-sig"), newline=""))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != TX_LOG_HEADER:
        raise SimError(f"transmissions log header must be {','.join(TX_LOG_HEADER)}")
    out = []
    for row_no, row in enumerate(reader):
        if not row:
            continue
        try:
            t, payload, rate, dur, age, phi = row
            out.append(TransmissionRecord(float(t), int(payload), float(rate), float(dur), float(age),
                                          float(phi) if phi.strip() else None))
        except ValueError:
            raise SimError(f"transmissions log row {row_no}: malformed values {row!r}") from None
    return out
