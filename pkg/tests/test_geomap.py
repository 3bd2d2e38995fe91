import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cattx.geo import EARTH_RADIUS_M, GeoPosition
from cattx.geomap import MAP_EXPORT_HEADER, MapError, build_map, export_csv, from_json, lookup, to_json
from cattx.trace import Trace

from conftest import snap, traces_st


def test_singleton():
    s = snap(rsrp=-80.0, rsrq=-9.0, snr=12.0, cqi=9, rate=20.0)
    g = build_map([Trace((s,))], 100.0)
    assert list(g.cells) == [(0, 0)]
    c = g.cells[(0, 0)]
    assert (c.count, c.mean_rsrp, c.mean_rsrq, c.mean_snr, c.mean_cqi, c.mean_rate_mbps) == \
        (1, -80.0, -9.0, 12.0, 9.0, 20.0)


def test_two_in_same_cell_mean():
    tr = Trace((snap(t=0.0, snr=0.0, lat=51.5, lon=7.4), snap(t=1.0, snr=10.0, lat=51.50001, lon=7.40001)))
    g = build_map([tr], 100.0)
    assert len(g.cells) == 1
    assert g.cells[(0, 0)].mean_snr == 5.0


def test_far_apart_distinct_cells_projection_oracle():
    lat0, lon0 = 51.5, 7.4
    dlon = 0.145  # roughly 10 km east at this latitude
    tr = Trace((snap(t=0.0, lat=lat0, lon=lon0), snap(t=1.0, lat=lat0, lon=lon0 + dlon)))
    g = build_map([tr], 100.0)
    x = EARTH_RADIUS_M * math.radians(dlon) * math.cos(math.radians(lat0))
    assert 9000 < x < 11000
    assert sorted(g.cells) == [(0, 0), (math.floor(x / 100.0), 0)]


def test_lookup_membership_and_outside():
    tr = Trace((snap(t=0.0), snap(t=1.0, lat=51.51)))
    g = build_map([tr], 50.0)
    for s in tr:
        assert lookup(g, s.mobility.position) is not None
    assert lookup(g, GeoPosition(10.0, 10.0)) is None


def test_edge_goes_to_floor_cell():
    g = build_map([Trace((snap(lat=51.5, lon=7.4),))], 100.0)
    # The origin lies exactly on the corner of four cells.
    assert g.index_of(GeoPosition(51.5, 7.4)) == (0, 0)
    north_edge = GeoPosition(51.5 + math.degrees(100.0 / EARTH_RADIUS_M), 7.4)
    assert g.index_of(north_edge)[1] == math.floor(100.0 / 100.0 + 0.0)


def test_errors():
    with pytest.raises(MapError):
        build_map([Trace(())], 100.0)
    with pytest.raises(MapError):
        build_map([Trace((snap(),))], 0.0)


def test_export_and_json_roundtrip():
    tr = Trace((snap(t=0.0, rate=None), snap(t=1.0, lat=51.52)))
    g = build_map([tr], 100.0)
    text = export_csv(g).decode()
    lines = text.splitlines()
    assert lines[0] == ",".join(MAP_EXPORT_HEADER)
    assert len(lines) == 3
    assert lines[1].endswith(",")  # no observed rate in that cell
    g2 = from_json(to_json(g))
    assert g2.cells == g.cells and g2.origin == g.origin


@settings(max_examples=60, deadline=None)
@given(st.lists(traces_st(max_size=8), min_size=1, max_size=3), st.sampled_from([10.0, 1000.0, 1e6]))
def test_count_conservation_and_mean_bounds(traces, cell):
    g = build_map(traces, cell)
    assert g.total_count == sum(len(t) for t in traces)
    members = {}
    for t in traces:
        for s in t:
            members.setdefault(g.index_of(s.mobility.position), []).append(s)
    for key, ss in members.items():
        c = g.cells[key]
        for name in ("rsrp", "rsrq", "snr", "cqi"):
            vals = [getattr(s.channel, name) for s in ss]
            m = getattr(c, "mean_" + name)
            assert min(vals) - 1e-9 <= m <= max(vals) + 1e-9
