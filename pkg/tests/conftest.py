from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import strategies as st

from cattx.geo import GeoPosition
from cattx.trace import ChannelIndicators, ContextSnapshot, MobilitySample, Trace


def snap(t=0.0, rsrp=-90.0, rsrq=-10.0, snr=10.0, cqi=8, lat=51.5, lon=7.4,
         speed=20.0, heading=90.0, cell_id="c0", rate=10.0) -> ContextSnapshot:
    return ContextSnapshot(
        t=t,
        channel=ChannelIndicators(rsrp, rsrq, snr, cqi),
        mobility=MobilitySample(GeoPosition(lat, lon), speed, heading),
        cell_id=cell_id,
        rate_mbps=rate,
    )


def constant_trace(n, rate=8.0, tick=1.0, **kw) -> Trace:
    return Trace(tuple(snap(t=k * tick, rate=rate, **kw) for k in range(n)), tick)


@pytest.fixture
def make_snap():
    return snap


def _finite(lo, hi):
    return st.floats(lo, hi, allow_nan=False, allow_infinity=False)


@st.composite
def snapshots_st(draw, t=0.0, with_rate=True):
    rate = draw(st.none() | _finite(0.1, 100.0)) if with_rate else None
    heading = draw(_finite(0.0, 359.999))
    return ContextSnapshot(
        t=t,
        channel=ChannelIndicators(
            draw(_finite(-140, -44)), draw(_finite(-19.5, -3)), draw(_finite(-10, 30)),
            draw(st.integers(0, 15)),
        ),
        mobility=MobilitySample(
            GeoPosition(draw(_finite(-90, 90)), draw(_finite(-180, 180))),
            draw(_finite(0, 70)), heading,
        ),
        cell_id=draw(st.text(alphabet="abcXYZ019-_ ,\"", max_size=6)),
        rate_mbps=rate,
    )


@st.composite
def traces_st(draw, min_size=1, max_size=20):
    n = draw(st.integers(min_size, max_size))
    gaps = draw(st.lists(_finite(1e-3, 100.0), min_size=n - 1, max_size=n - 1))
    times = [0.0]
    for g in gaps:
        nxt = times[-1] + g
        if not nxt > times[-1]:
            nxt = math.nextafter(times[-1], math.inf)
        times.append(nxt)
    snaps = tuple(draw(snapshots_st(t=t)) for t in times)
    return Trace(snaps)


def brute_force_split(x, y, min_leaf):
    """Exhaustive SDR search over every midpoint, straight from the definition."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    n = len(y)
    sd_t = float(np.std(y))
    tol = 1e-12 * (1.0 + sd_t) + 1e-12
    best = None
    for thr in sorted({(a + b) / 2 for a, b in zip(sorted(set(x)), sorted(set(x))[1:])}):
        left, right = y[x <= thr], y[x > thr]
        if len(left) < min_leaf or len(right) < min_leaf:
            continue
        sdr = sd_t - len(left) / n * float(np.std(left)) - len(right) / n * float(np.std(right))
        if best is None or sdr > best[1] + tol:
            best = (thr, sdr)
    if best is None or not best[1] > tol:
        return None
    return best


# One line per acceptance criterion, printed at the end of the session.
ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split()[0][2:])):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")
