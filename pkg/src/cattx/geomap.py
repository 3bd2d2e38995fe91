"""Connectivity map: per-grid-cell means of observed indicators and data rates."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .geo import GeoPosition, from_local, to_local
from .trace import Trace

MAP_EXPORT_HEADER = (
    "i", "j", "center_lat", "center_lon", "count",
    "mean_rsrp", "mean_rsrq", "mean_snr", "mean_cqi", "mean_rate_mbps",
)
MAP_FORMAT_VERSION = 1


class MapError(ValueError):
    pass


@dataclass
class CellAggregate:
    count: int = 0
    mean_rsrp: float = 0.0
    mean_rsrq: float = 0.0
    mean_snr: float = 0.0
    mean_cqi: float = 0.0
    rate_count: int = 0
    mean_rate_mbps: Optional[float] = None

    def add(self, rsrp: float, rsrq: float, snr: float, cqi: float, rate: Optional[float]) -> None:
        self.count += 1
        n = self.count
        self.mean_rsrp += (rsrp - self.mean_rsrp) / n
        self.mean_rsrq += (rsrq - self.mean_rsrq) / n
        self.mean_snr += (snr - self.mean_snr) / n
        self.mean_cqi += (cqi - self.mean_cqi) / n
        if rate is not None:
            self.rate_count += 1
            prev = self.mean_rate_mbps or 0.0
            self.mean_rate_mbps = prev + (rate - prev) / self.rate_count


@dataclass
class GridMap:
    origin: GeoPosition
    cell_size_m: float
    cells: dict[tuple[int, int], CellAggregate] = field(default_factory=dict)

    def index_of(self, pos: GeoPosition) -> tuple[int, int]:
        x, y = to_local(self.origin, pos)
        return math.floor(x / self.cell_size_m), math.floor(y / self.cell_size_m)

    def center_of(self, i: int, j: int) -> GeoPosition:
        return from_local(self.origin, (i + 0.5) * self.cell_size_m, (j + 0.5) * self.cell_size_m)

    @property
    def total_count(self) -> int:
        return sum(c.count for c in self.cells.values())

    def global_mean_rate(self) -> Optional[float]:
        num = sum(c.mean_rate_mbps * c.rate_count for c in self.cells.values() if c.rate_count)
        den = sum(c.rate_count for c in self.cells.values())
        return num / den if den else None


def build_map(traces: Iterable[Trace], cell_size_m: float) -> GridMap:
    """Aggregate snapshots into a square grid about the first sample's position."""
    if not cell_size_m > 0:
        raise MapError(f"cell size must be > 0, got {cell_size_m}")
    grid: Optional[GridMap] = None
    for trace in traces:
        for s in trace.snapshots:
            if grid is None:
                grid = GridMap(s.mobility.position, float(cell_size_m))
            key = grid.index_of(s.mobility.position)
            agg = grid.cells.get(key)
            if agg is None:
                agg = grid.cells[key] = CellAggregate()
            ch = s.channel
            agg.add(ch.rsrp, ch.rsrq, ch.snr, ch.cqi, s.rate_mbps)
    if grid is None:
        raise MapError("no snapshots to build a map from")
    return grid


def lookup(grid: GridMap, pos: GeoPosition) -> Optional[CellAggregate]:
    return grid.cells.get(grid.index_of(pos))


def export_csv(grid: GridMap) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MAP_EXPORT_HEADER)
    for (i, j) in sorted(grid.cells):
        c = grid.cells[(i, j)]
        center = grid.center_of(i, j)
        w.writerow([
            i, j, repr(center.lat), repr(center.lon), c.count,
            repr(c.mean_rsrp), repr(c.mean_rsrq), repr(c.mean_snr), repr(c.mean_cqi),
            "" if c.mean_rate_mbps is None else repr(c.mean_rate_mbps),
        ])
    return buf.getvalue().encode("utf-8")


def to_json(grid: GridMap) -> str:
    doc = {
        "version": MAP_FORMAT_VERSION,
        "origin": [grid.origin.lat, grid.origin.lon],
        "cell_size_m": grid.cell_size_m,
        "cells": [
            {"i": i, "j": j, "count": c.count, "mean_rsrp": c.mean_rsrp, "mean_rsrq": c.mean_rsrq,
             "mean_snr": c.mean_snr, "mean_cqi": c.mean_cqi, "rate_count": c.rate_count,
             "mean_rate_mbps": c.mean_rate_mbps}
            for (i, j), c in sorted(grid.cells.items())
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def from_json(text: str) -> GridMap:
    try:
        doc = json.loads(text)
        if doc.get("version") != MAP_FORMAT_VERSION:
            raise MapError(f"unsupported map version {doc.get('version')!r}")
        grid = GridMap(GeoPosition(*doc["origin"]), float(doc["cell_size_m"]))
        for c in doc["cells"]:
            grid.cells[(int(c["i"]), int(c["j"]))] = CellAggregate(
                count=int(c["count"]), mean_rsrp=c["mean_rsrp"], mean_rsrq=c["mean_rsrq"],
                mean_snr=c["mean_snr"], mean_cqi=c["mean_cqi"], rate_count=int(c["rate_count"]),
                mean_rate_mbps=c["mean_rate_mbps"],
            )
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise MapError(f"malformed map document: {exc!r}") from None
    return grid
