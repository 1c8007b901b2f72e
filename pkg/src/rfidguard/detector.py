"""Unauthorized-reader detector with blockage suppression.

The raw detector watches each tag's ASTI (adjacent signal time interval):
an unauthorized reader collides with the legitimate polls, so reads go
missing and the mean gap between reads grows.  A person walking through the
doorway also makes reads go missing, which the raw detector cannot tell
apart.  Blockage, unlike an unauthorized reader, also pulls RSSI down, so on
each raw alarm the windowed RSSI change is checked against a small gate:

* below the gate, the alarm is confirmed at once;
* above it, the walker's speed is estimated from the RSSI dip, the impact
  time ``T_in`` follows from the doorway geometry, and the decision window is
  lengthened to ``base_window + T_in``.  The ASTI criterion is evaluated
  again on the trailing ``base_window`` of that span, using only tags whose
  RSSI has settled.  An alarm that survives is confirmed, otherwise cleared.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, replace
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .geometry import MovingObject, Scene, impact_distance, impact_time, sight_angles
from .preprocess import FILTER_WINDOW, Series, preprocess, uniform_grid
from .simulator import TagRead, split_by_tag, tag_ids
from .velocity import NoMatch, VelocityError, VelocityProfileDB, match_velocity

__all__ = [
    "DetectorError",
    "NotReady",
    "DetectorConfig",
    "AlarmEvent",
    "TagStream",
    "STAGES",
    "prepare_streams",
    "asti_change_rate",
    "rssi_change_rate",
    "detect",
    "format_alarm_log",
    "parse_alarm_log",
    "write_alarm_log",
]

STAGES = ("raw_alarm", "gated_blocking", "window_extended", "ur_confirmed", "cleared")
ALARM_LOG_HEADER = "t,stage,v_hat,t_in,window_used,note"


class DetectorError(ValueError):
    pass


class NotReady(DetectorError):
    """Not enough history to evaluate a window; this is not an alarm."""


@dataclass(frozen=True)
class DetectorConfig:
    """Detector thresholds and windows (seconds unless noted).

    ``gate_scope`` selects whether the RSSI gate looks at the alarmed tag
    (``"tag"``) or at the mean change over all tags (``"aggregate"``).
    ``body_length``/``body_width`` are the walker footprint assumed when
    converting a speed estimate into an impact time.
    """

    base_window: float = 1.0
    asti_threshold: float = 0.3
    k_consecutive: int = 20
    rssi_gate: float = 0.05
    baseline_len: float = 3.0
    grid_rate: float = 100.0
    eliminate: bool = True
    gate_scope: str = "tag"
    min_score: float = 0.6
    body_length: float = 0.5
    body_width: float = 0.3

    def __post_init__(self):
        if not self.base_window > 0:
            raise DetectorError("base_window must be positive")
        if not self.asti_threshold > 0:
            raise DetectorError("asti_threshold must be positive")
        if int(self.k_consecutive) != self.k_consecutive or self.k_consecutive < 1:
            raise DetectorError("k_consecutive must be a positive integer")
        if not 0 < self.rssi_gate < 1:
            raise DetectorError("rssi_gate must be in (0, 1)")
        if not self.baseline_len > 0:
            raise DetectorError("baseline_len must be positive")
        if not self.grid_rate > 0:
            raise DetectorError("grid_rate must be positive")
        if self.gate_scope not in ("tag", "aggregate"):
            raise DetectorError("gate_scope must be 'tag' or 'aggregate'")

    def with_(self, **kw) -> "DetectorConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class AlarmEvent:
    t: float
    stage: str
    window_used: float
    v_hat: float | None = None
    t_in: float | None = None
    tag_id: str | None = None
    note: str = ""

    def __post_init__(self):
        if self.stage not in STAGES:
            raise DetectorError(f"unknown stage {self.stage!r}")


class TagStream(NamedTuple):
    """Per-tag detector input: raw ASTI samples and preprocessed RSSI."""

    asti: Series
    rssi: Series


def prepare_streams(
    reads: Sequence[TagRead], window: int = FILTER_WINDOW, grid_rate: float = 100.0
) -> dict[str, TagStream]:
    """Split a trace by tag and build the detector's per-tag inputs.

    ASTI stays at read timestamps; RSSI is filtered and PCHIP-resampled.
    Tags with fewer than three reads are skipped.
    """
    out = {}
    for tid, (t, r) in sorted(split_by_tag(reads).items()):
        if t.size < 3:
            continue
        out[tid] = TagStream(Series(t[1:], np.diff(t)), preprocess(Series(t, r), window, grid_rate))
    return out


def _window_mean(t: np.ndarray, y: np.ndarray, t_now, width):
    """Mean of samples with ``t_now - width < t <= t_now``; nan when empty."""
    t_now = np.asarray(t_now, dtype=float)
    width = np.asarray(width, dtype=float)
    # offset by the first sample so constant stretches average exactly
    y0 = y[0] if y.size else 0.0
    csum = np.concatenate(([0.0], np.cumsum(y - y0)))
    hi = np.searchsorted(t, t_now, side="right")
    lo = np.searchsorted(t, t_now - width, side="right")
    n = hi - lo
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n > 0, y0 + (csum[hi] - csum[lo]) / np.maximum(n, 1), np.nan)


def _baseline_mean(s: Series, cfg: DetectorConfig) -> float:
    t0 = s.t[0]
    m = s.t <= t0 + cfg.baseline_len
    if not np.any(m):
        raise NotReady("no baseline samples")
    y = s.y[m]
    return float(y[0] + np.mean(y - y[0]))


def _check_ready(s: Series, cfg: DetectorConfig, t_now: float) -> None:
    if len(s) == 0 or t_now - cfg.base_window < s.t[0] + cfg.baseline_len - 1e-9:
        raise NotReady("window overlaps the baseline period")


def asti_change_rate(asti: Series, cfg: DetectorConfig, t_now: float) -> float:
    """``|mean(window) - mean(baseline)| / mean(baseline)`` of ASTI samples.

    The window is ``(t_now - base_window, t_now]``; the baseline is the first
    ``baseline_len`` seconds of the series, assumed free of interference.
    """
    _check_ready(asti, cfg, t_now)
    base = _baseline_mean(asti, cfg)
    win = float(_window_mean(asti.t, asti.y, t_now, cfg.base_window))
    if np.isnan(win):
        raise NotReady("no samples in window")
    return abs(win - base) / base


def rssi_change_rate(rssi: Series, cfg: DetectorConfig, t_now: float) -> float:
    """Relative change of windowed mean RSSI against the baseline, in dBm."""
    _check_ready(rssi, cfg, t_now)
    base = _baseline_mean(rssi, cfg)
    if base == 0.0:
        raise DetectorError("baseline RSSI of exactly 0 dBm has no relative scale")
    win = float(_window_mean(rssi.t, rssi.y, t_now, cfg.base_window))
    if np.isnan(win):
        raise NotReady("no samples in window")
    return abs(win - base) / abs(base)


class _TagState:
    """Vectorised per-tag rates over the evaluation grid."""

    def __init__(self, tid: str, stream: TagStream, cfg: DetectorConfig, grid: np.ndarray):
        self.tid = tid
        self.stream = stream
        a, r = stream.asti, stream.rssi
        self.asti_base = _baseline_mean(a, cfg)
        self.rssi_base = _baseline_mean(r, cfg)
        if self.rssi_base == 0.0:
            raise DetectorError("baseline RSSI of exactly 0 dBm has no relative scale")
        self.asti_rate = np.abs(_window_mean(a.t, a.y, grid, cfg.base_window) - self.asti_base) / self.asti_base
        self.rssi_rate = self._rssi_rate(grid, cfg)
        ready = grid - cfg.base_window >= min(a.t[0], r.t[0]) + cfg.baseline_len - 1e-9
        self.alarm = ready & (self.asti_rate > cfg.asti_threshold)

    def _rssi_rate(self, t_now, cfg: DetectorConfig):
        """RSSI change over the time the window's ASTI samples describe.

        A gap sample is stamped at the read that ends it, so the window is
        stretched back to the read that started its earliest gap.
        """
        a, r = self.stream.asti, self.stream.rssi
        t_now = np.asarray(t_now, dtype=float)
        lo = np.searchsorted(a.t, t_now - cfg.base_window, side="right")
        lo = np.minimum(lo, a.t.size - 1)
        span = np.maximum(cfg.base_window, t_now - (a.t[lo] - a.y[lo]))
        return np.abs(_window_mean(r.t, r.y, t_now, span) - self.rssi_base) / abs(self.rssi_base)

    def rates_at(self, t_now: float, cfg: DetectorConfig) -> tuple[float, float]:
        a = self.stream.asti
        aw = float(_window_mean(a.t, a.y, t_now, cfg.base_window))
        return abs(aw - self.asti_base) / self.asti_base, float(self._rssi_rate(t_now, cfg))


def _recheck(s: _TagState, t_e: float, cfg: DetectorConfig) -> bool:
    """ASTI still alarming over the last ``k_consecutive`` steps with settled RSSI."""
    steps = t_e - np.arange(cfg.k_consecutive)[::-1] / cfg.grid_rate
    rates = [s.rates_at(float(tt), cfg) for tt in steps]
    return all(a > cfg.asti_threshold for a, _ in rates) and not rates[-1][1] > cfg.rssi_gate


def _first_run(mask: np.ndarray, start: int, k: int) -> int | None:
    """Index where the first run of ``k`` trues starting at/after ``start`` completes."""
    m = mask[start:]
    if m.size < k:
        return None
    run = np.convolve(m.astype(int), np.ones(k, dtype=int), mode="valid")
    hits = np.flatnonzero(run == k)
    return None if hits.size == 0 else start + int(hits[0]) + k - 1


def detect(
    streams: Mapping[str, TagStream],
    db: VelocityProfileDB | None,
    scene: Scene,
    cfg: DetectorConfig,
) -> list[AlarmEvent]:
    """Run the detector over a whole session and return its events.

    Events are produced in time order; the first ``ur_confirmed`` ends the
    session.  After ``cleared`` monitoring resumes and needs a fresh run of
    ``k_consecutive`` alarming grid steps.  ``db`` may be ``None`` only when
    ``cfg.eliminate`` is false.
    """
    if cfg.eliminate and db is None:
        raise DetectorError("elimination needs a velocity profile database")
    if db is not None and abs(db.meta.grid_rate - cfg.grid_rate) > 1e-9:
        raise DetectorError("database grid rate differs from detector grid rate")
    if not streams:
        return []
    tids = sorted(streams)
    t0 = min(min(s.asti.t[0], s.rssi.t[0]) for s in streams.values())
    t1 = max(s.rssi.t[-1] for s in streams.values())
    grid = uniform_grid(t0, t1, cfg.grid_rate)
    tags = [_TagState(tid, streams[tid], cfg, grid) for tid in tids]
    index = {tid: i for i, tid in enumerate(tag_ids(scene))}
    w = cfg.base_window

    events: list[AlarmEvent] = []
    pos = 0
    while pos < grid.size:
        hits = [(_first_run(s.alarm, pos, cfg.k_consecutive), i) for i, s in enumerate(tags)]
        hits = [(g, i) for g, i in hits if g is not None]
        if not hits:
            break
        g, i = min(hits)
        t_a = float(grid[g])
        st = tags[i]
        events.append(AlarmEvent(t_a, "raw_alarm", w, tag_id=st.tid))
        if not cfg.eliminate:
            events.append(AlarmEvent(t_a, "ur_confirmed", w, tag_id=st.tid))
            break

        if cfg.gate_scope == "tag":
            r_rate = st.rssi_rate[g]
        else:
            r_rate = float(np.nanmean([s.rssi_rate[g] for s in tags]))
        if not r_rate > cfg.rssi_gate:
            events.append(AlarmEvent(t_a, "ur_confirmed", w, tag_id=st.tid))
            break
        events.append(AlarmEvent(t_a, "gated_blocking", w, tag_id=st.tid))

        reach = db.max_template_duration
        try:
            est = match_velocity(db, st.stream.rssi.window(t_a - reach, t_a + reach), cfg.min_score)
        except VelocityError as exc:
            note = "no_match" if isinstance(exc, NoMatch) else "estimation_error"
            events.append(AlarmEvent(t_a, "ur_confirmed", w, tag_id=st.tid, note=note))
            break

        body = MovingObject(l_h=cfg.body_length, d_h=cfg.body_width, v=est.v_hat)
        t_ins = {}
        for s in tags:
            k = index.get(s.tid)
            if k is None:
                raise DetectorError(f"tag {s.tid!r} not in scene")
            t_ins[s.tid] = impact_time(impact_distance(scene, body, *sight_angles(scene, k)), est.v_hat)
        t_in = t_ins[st.tid]
        used = w + t_in
        events.append(AlarmEvent(t_a, "window_extended", used, est.v_hat, t_in, st.tid))

        # Each tag is re-checked once the walker has left its own line of sight.
        ends = {s.tid: min(t_a + w + t_ins[s.tid], float(grid[-1])) for s in tags}
        confirmed = [(ends[s.tid], s.tid) for s in tags if _recheck(s, ends[s.tid], cfg)]
        if confirmed:
            t_e, tid = min(confirmed)
            events.append(AlarmEvent(t_e, "ur_confirmed", w + t_ins[tid], est.v_hat, t_ins[tid], tid))
            break
        t_e = max(ends.values())
        events.append(AlarmEvent(t_e, "cleared", used, est.v_hat, t_in, st.tid))
        pos = int(np.searchsorted(grid, t_e, side="right"))
    return events


def verdict(events: Sequence[AlarmEvent]) -> bool:
    return any(e.stage == "ur_confirmed" for e in events)


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def format_alarm_log(events: Sequence[AlarmEvent]) -> str:
    buf = io.StringIO()
    buf.write(ALARM_LOG_HEADER + "\n")
    for e in events:
        buf.write(f"{e.t:.6f},{e.stage},{_fmt(e.v_hat)},{_fmt(e.t_in)},{e.window_used:.6f},{e.note}\n")
    return buf.getvalue()


def write_alarm_log(path, events: Sequence[AlarmEvent]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_alarm_log(events))


def parse_alarm_log(text: str) -> list[AlarmEvent]:
    lines = text.splitlines()
    if not lines or lines[0] != ALARM_LOG_HEADER:
        raise DetectorError("missing alarm log header")
    out = []
    for line in lines[1:]:
        if not line:
            continue
        t, stage, v_hat, t_in, used, note = line.split(",")
        out.append(
            AlarmEvent(
                float(t),
                stage,
                float(used),
                float(v_hat) if v_hat else None,
                float(t_in) if t_in else None,
                note=note,
            )
        )
    return out
