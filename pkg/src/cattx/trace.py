"""Trace model: context snapshots, CSV ingestion/export and fixed-tick resampling.

A trace is an ordered list of :class:`ContextSnapshot` records, each holding the
LTE downlink indicators (RSRP, RSRQ, SNR, CQI), the vehicle's mobility state and
optionally the achievable data rate measured or modeled at that instant.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import IO, Mapping, Optional, Sequence, Union

from .geo import GeoPosition

# Standard LTE reporting ranges, inclusive.
RSRP_BOUNDS = (-140.0, -44.0)
RSRQ_BOUNDS = (-19.5, -3.0)
SNR_BOUNDS = (-10.0, 30.0)
CQI_BOUNDS = (0, 15)

INDICATOR_BOUNDS: dict[str, tuple[float, float]] = {
    "rsrp": RSRP_BOUNDS,
    "rsrq": RSRQ_BOUNDS,
    "snr": SNR_BOUNDS,
    "cqi": (float(CQI_BOUNDS[0]), float(CQI_BOUNDS[1])),
}

CANONICAL_HEADER = (
    "t_s", "lat_deg", "lon_deg", "speed_mps", "heading_deg",
    "rsrp_dbm", "rsrq_db", "snr_db", "cqi", "cell_id", "rate_mbps",
)

# canonical field name -> header of the canonical CSV
IDENTITY_COLUMN_MAP: dict[str, str] = {
    "t": "t_s",
    "lat": "lat_deg",
    "lon": "lon_deg",
    "speed": "speed_mps",
    "heading": "heading_deg",
    "rsrp": "rsrp_dbm",
    "rsrq": "rsrq_db",
    "snr": "snr_db",
    "cqi": "cqi",
    "cell_id": "cell_id",
    "rate": "rate_mbps",
}
REQUIRED_FIELDS = ("t", "rsrp", "rsrq", "snr", "cqi", "lat", "lon", "speed", "heading")
OPTIONAL_FIELDS = ("cell_id", "rate")


class TraceError(ValueError):
    """Raised for malformed or invalid trace input."""

    def __init__(self, message: str, row: Optional[int] = None, field: Optional[str] = None):
        self.row = row
        self.field = field
        where = []
        if row is not None:
            where.append(f"row {row}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class ChannelIndicators:
    rsrp: float
    rsrq: float
    snr: float
    cqi: int

    def __post_init__(self) -> None:
        for name in ("rsrp", "rsrq", "snr", "cqi"):
            lo, hi = INDICATOR_BOUNDS[name]
            v = getattr(self, name)
            if not (lo <= v <= hi):
                raise ValueError(f"{name}={v} outside [{lo}, {hi}]")
        if not isinstance(self.cqi, int):
            raise ValueError(f"cqi must be an integer, got {self.cqi!r}")


@dataclass(frozen=True)
class MobilitySample:
    position: GeoPosition
    speed: float  # m/s
    heading: float  # degrees clockwise from north

    def __post_init__(self) -> None:
        if not self.speed >= 0:
            raise ValueError(f"speed {self.speed} must be >= 0")
        if not (0.0 <= self.heading < 360.0):
            raise ValueError(f"heading {self.heading} outside [0, 360)")


@dataclass(frozen=True)
class ContextSnapshot:
    t: float
    channel: ChannelIndicators
    mobility: MobilitySample
    cell_id: str = ""
    rate_mbps: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.t >= 0:
            raise ValueError(f"t={self.t} must be >= 0")
        if self.rate_mbps is not None and not self.rate_mbps > 0:
            raise ValueError(f"rate_mbps={self.rate_mbps} must be > 0")


@dataclass(frozen=True)
class Trace:
    snapshots: tuple[ContextSnapshot, ...]
    # Grid hint only: not stored in the CSV, so it takes no part in equality.
    tick_s: Optional[float] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "snapshots", tuple(self.snapshots))
        ts = [s.t for s in self.snapshots]
        for i in range(1, len(ts)):
            if not ts[i] > ts[i - 1]:
                raise ValueError(f"timestamps not strictly increasing at index {i}")
        if self.tick_s is not None and not self.tick_s > 0:
            raise ValueError("tick_s must be > 0")

    def __len__(self) -> int:
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots)

    def __getitem__(self, i):
        return self.snapshots[i]

    @property
    def has_rate(self) -> bool:
        return all(s.rate_mbps is not None for s in self.snapshots)

    @property
    def times(self) -> list[float]:
        return [s.t for s in self.snapshots]


def _clamp(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


def _parse_time(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        pass
    # Absolute wall-clock time; only the offset to the first row matters.
    return datetime.fromisoformat(text.strip().replace("Z", "+00:00")).timestamp()


def _read_text(raw: Union[bytes, str, IO]) -> str:
    if isinstance(raw, bytes):
        return raw.decode("utf-8-sig")
    if isinstance(raw, str):
        return raw
    data = raw.read()
    return data.decode("utf-8-sig") if isinstance(data, bytes) else data


def parse_trace(
    raw_csv: Union[bytes, str, IO],
    column_map: Optional[Mapping[str, str]] = None,
    lenient: bool = False,
    tick_s: Optional[float] = None,
) -> Trace:
    """Parse a CSV trace.

    ``column_map`` maps canonical field names (``t``, ``rsrp``, ``rsrq``, ``snr``,
    ``cqi``, ``lat``, ``lon``, ``speed``, ``heading`` and optionally ``cell_id``,
    ``rate``) to header names in the source file. By default the canonical header
    is expected. Indicator values outside their reporting range are rejected, or
    clamped to the range when ``lenient`` is set. Timestamps are shifted so the
    first row is at ``t = 0``; when ``tick_s`` is not given it is inferred if the
    timestamps lie exactly on a uniform grid. Row indices in errors count data
    rows from 0.
    """
    cmap = dict(IDENTITY_COLUMN_MAP if column_map is None else column_map)
    reader = csv.reader(io.StringIO(_read_text(raw_csv), newline=""))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise TraceError("no header row") from None

    index: dict[str, int] = {}
    for name in REQUIRED_FIELDS:
        col = cmap.get(name)
        if col is None:
            raise TraceError(f"column map has no entry for required field {name!r}")
        if col not in header:
            raise TraceError(f"mapped column {col!r} (for {name!r}) missing from header")
        index[name] = header.index(col)
    for name in OPTIONAL_FIELDS:
        col = cmap.get(name)
        if col is not None and col in header:
            index[name] = header.index(col)

    snapshots: list[ContextSnapshot] = []
    t0: Optional[float] = None
    prev_raw_t: Optional[float] = None
    for row_no, row in enumerate(reader):
        if not row or all(not c.strip() for c in row):
            continue

        def cell(name: str) -> str:
            i = index[name]
            if i >= len(row):
                raise TraceError("row is shorter than header", row_no, name)
            return row[i].strip()

        def num(name: str) -> float:
            text = cell(name)
            try:
                v = float(text)
            except ValueError:
                raise TraceError(f"non-numeric value {text!r}", row_no, name) from None
            if not math.isfinite(v):
                raise TraceError(f"non-finite value {text!r}", row_no, name)
            return v

        t_text = cell("t")
        try:
            raw_t = _parse_time(t_text)
        except ValueError:
            raise TraceError(f"non-numeric timestamp {t_text!r}", row_no, "t") from None
        if prev_raw_t is not None and not raw_t > prev_raw_t:
            raise TraceError("timestamp not strictly increasing", row_no, "t")
        prev_raw_t = raw_t
        if t0 is None:
            t0 = raw_t

        values = {name: num(name) for name in ("rsrp", "rsrq", "snr", "cqi")}
        for name, v in values.items():
            lo, hi = INDICATOR_BOUNDS[name]
            if not (lo <= v <= hi):
                if not lenient:
                    raise TraceError(f"value {v} outside [{lo}, {hi}]", row_no, name)
                values[name] = _clamp(v, lo, hi)
        cqi_f = values["cqi"]
        if cqi_f != int(cqi_f):
            if not lenient:
                raise TraceError(f"cqi {cqi_f} is not an integer", row_no, "cqi")
            cqi_f = math.floor(cqi_f + 0.5)

        lat, lon = num("lat"), num("lon")
        if not (-90 <= lat <= 90):
            raise TraceError(f"latitude {lat} outside [-90, 90]", row_no, "lat")
        if not (-180 <= lon <= 180):
            raise TraceError(f"longitude {lon} outside [-180, 180]", row_no, "lon")
        speed = num("speed")
        if speed < 0:
            if not lenient:
                raise TraceError(f"negative speed {speed}", row_no, "speed")
            speed = 0.0
        heading = num("heading")
        if not (0 <= heading < 360):
            if not lenient:
                raise TraceError(f"heading {heading} outside [0, 360)", row_no, "heading")
            heading = heading % 360.0
            if heading >= 360.0:
                heading = 0.0

        rate: Optional[float] = None
        if "rate" in index and cell("rate") != "":
            rate = num("rate")
            if not rate > 0:
                if not lenient:
                    raise TraceError(f"rate {rate} must be > 0", row_no, "rate")
                rate = None
        cell_id = row[index["cell_id"]] if "cell_id" in index and index["cell_id"] < len(row) else ""

        snapshots.append(
            ContextSnapshot(
                t=raw_t - t0,
                channel=ChannelIndicators(values["rsrp"], values["rsrq"], values["snr"], int(cqi_f)),
                mobility=MobilitySample(GeoPosition(lat, lon), speed, heading),
                cell_id=cell_id,
                rate_mbps=rate,
            )
        )

    if not snapshots:
        raise TraceError("trace contains no data rows")
    if tick_s is None and len(snapshots) >= 2:
        tick_s = _infer_tick(snapshots)
    return Trace(tuple(snapshots), tick_s)


def _infer_tick(snapshots: Sequence[ContextSnapshot]) -> Optional[float]:
    # Only an exactly uniform grid k * dt counts as sampled at a nominal tick.
    dt = snapshots[1].t
    if snapshots[0].t != 0.0 or not dt > 0:
        return None
    if all(s.t == k * dt for k, s in enumerate(snapshots)):
        return dt
    return None


def write_trace(trace: Trace) -> bytes:
    """Serialize to canonical CSV; the rate column is present only if any snapshot has a rate."""
    with_rate = any(s.rate_mbps is not None for s in trace.snapshots)
    header = CANONICAL_HEADER if with_rate else CANONICAL_HEADER[:-1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for s in trace.snapshots:
        ch, mob = s.channel, s.mobility
        row = [
            repr(float(s.t)), repr(float(mob.position.lat)), repr(float(mob.position.lon)),
            repr(float(mob.speed)), repr(float(mob.heading)),
            repr(float(ch.rsrp)), repr(float(ch.rsrq)), repr(float(ch.snr)), str(ch.cqi),
            s.cell_id,
        ]
        if with_rate:
            row.append("" if s.rate_mbps is None else repr(float(s.rate_mbps)))
        w.writerow(row)
    return buf.getvalue().encode("utf-8")


def _lerp(a: float, b: float, w: float) -> float:
    return a + (b - a) * w


def lerp_heading(a: float, b: float, w: float) -> float:
    """Interpolate between two headings along the shorter arc."""
    delta = (b - a + 180.0) % 360.0 - 180.0
    h = (a + delta * w) % 360.0
    return 0.0 if h >= 360.0 else h


def _interpolate(s0: ContextSnapshot, s1: ContextSnapshot, t: float) -> ContextSnapshot:
    w = (t - s0.t) / (s1.t - s0.t)
    c0, c1 = s0.channel, s1.channel
    m0, m1 = s0.mobility, s1.mobility
    nearest = s0 if w <= 0.5 else s1
    if s0.rate_mbps is not None and s1.rate_mbps is not None:
        rate = _lerp(s0.rate_mbps, s1.rate_mbps, w)
    else:
        rate = nearest.rate_mbps
    return ContextSnapshot(
        t=t,
        channel=ChannelIndicators(
            rsrp=_lerp(c0.rsrp, c1.rsrp, w),
            rsrq=_lerp(c0.rsrq, c1.rsrq, w),
            snr=_lerp(c0.snr, c1.snr, w),
            cqi=int(math.floor(_lerp(c0.cqi, c1.cqi, w) + 0.5)),
        ),
        mobility=MobilitySample(
            GeoPosition(_lerp(m0.position.lat, m1.position.lat, w),
                        _lerp(m0.position.lon, m1.position.lon, w)),
            speed=_lerp(m0.speed, m1.speed, w),
            heading=lerp_heading(m0.heading, m1.heading, w),
        ),
        cell_id=nearest.cell_id,
        rate_mbps=rate,
    )


def resample(trace: Trace, tick_s: float) -> Trace:
    """Resample onto the uniform grid ``k * tick_s``, k = 0..floor(t_last / tick_s).

    Numeric fields are interpolated linearly, heading along the shorter arc, CQI is
    rounded to the nearest integer and categorical fields (cell id) come from the
    nearest source sample (the earlier one on a tie). Grid points outside the
    source time span take the value of the closest end sample.
    """
    if not tick_s > 0:
        raise TraceError(f"tick must be > 0, got {tick_s}")
    if len(trace.snapshots) == 0:
        raise TraceError("cannot resample an empty trace")
    snaps = trace.snapshots
    times = [s.t for s in snaps]
    n_out = int(math.floor(times[-1] / tick_s + 1e-9)) + 1
    out: list[ContextSnapshot] = []
    for k in range(n_out):
        t = k * tick_s
        j = bisect.bisect_right(times, t)
        if j == 0:
            out.append(replace(snaps[0], t=t))
        elif j == len(snaps):
            out.append(replace(snaps[-1], t=t))
        elif times[j - 1] == t:
            out.append(replace(snaps[j - 1], t=t))
        else:
            out.append(_interpolate(snaps[j - 1], snaps[j], t))
    return Trace(tuple(out), tick_s)


def is_uniform(trace: Trace, tick_s: float) -> bool:
    return all(s.t == k * tick_s for k, s in enumerate(trace.snapshots))


def load_column_map(path) -> dict[str, str]:
    """Read a YAML column-mapping file: canonical field name -> source header."""
    import yaml

    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise TraceError(f"{path}: column map must be a mapping")
    unknown = set(data) - set(IDENTITY_COLUMN_MAP)
    if unknown:
        raise TraceError(f"{path}: unknown canonical fields {sorted(unknown)}")
    return {str(k): str(v) for k, v in data.items()}


def read_trace_file(path, column_map: Optional[Mapping[str, str]] = None,
                    lenient: bool = False, tick_s: Optional[float] = None) -> Trace:
    with open(path, "rb") as fh:
        return parse_trace(fh.read(), column_map, lenient, tick_s)
