"""Seeded scenario runner and metrics for the three evaluation conditions.

``free``          no walker; the raw detector is enough.
``interference``  a walker crosses the doorway; raw detector only.
``eliminated``    a walker crosses; the RSSI gate and window extension run.

Each trial flips a fair coin for unauthorized-reader presence (unless a
schedule forces it), simulates a session, preprocesses it, runs the detector
and records the verdict.  Trials are seeded individually from the scenario
seed, so any subset can be replayed.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .detector import AlarmEvent, DetectorConfig, detect, prepare_streams, verdict
from .geometry import MovingObject, occlusion_windows
from .simulator import SimConfig, simulate, tag_ids
from .velocity import (
    CrossingSpec,
    VelocityError,
    VelocityProfileDB,
    digest,
    match_velocity,
    standard_crossing,
    trial_seed,
    _reference_series,
)

__all__ = [
    "HarnessError",
    "CONDITIONS",
    "ObjectSpec",
    "Scenario",
    "TrialOutcome",
    "MetricsReport",
    "run_trial",
    "run_scenario",
    "compute_metrics",
    "empirical_cdf",
    "velocity_accuracy_experiment",
    "format_outcomes",
    "parse_outcomes",
    "format_report",
    "format_cdf",
]

CONDITIONS = ("free", "interference", "eliminated")
UR_SCHEDULES = ("coin", "always", "never")


class HarnessError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectSpec:
    """Distribution of walker crossings: uniform speed and lateral offset."""

    v_min: float = 0.5
    v_max: float = 1.5
    offset_min: float = -0.15
    offset_max: float = 0.15
    l_h: float = 0.5
    d_h: float = 0.3


@dataclass(frozen=True)
class Scenario:
    """One evaluation group.

    Disturbances (unauthorized reader start and walker arrival) fall
    uniformly in ``[event_min, event_max]`` seconds of each session.
    """

    condition: str = "eliminated"
    trials: int = 500
    sim_cfg: SimConfig = field(default_factory=SimConfig)
    obj_spec: ObjectSpec | None = field(default_factory=ObjectSpec)
    ur_schedule: str = "coin"
    event_min: float = 5.0
    event_max: float = 12.0

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise HarnessError(f"unknown condition {self.condition!r}")
        if self.trials < 1:
            raise HarnessError("trials must be >= 1")
        if self.ur_schedule not in UR_SCHEDULES:
            raise HarnessError(f"unknown ur_schedule {self.ur_schedule!r}")
        if self.condition != "free" and self.obj_spec is None:
            raise HarnessError(f"{self.condition} condition needs a walker")
        if not self.event_min <= self.event_max < self.sim_cfg.duration:
            raise HarnessError("event window must lie inside the session")

    @property
    def has_object(self) -> bool:
        return self.condition != "free"

    def with_(self, **kw) -> "Scenario":
        return replace(self, **kw)


@dataclass
class TrialOutcome:
    trial_id: int
    ground_truth_ur: bool
    verdict_ur: bool
    events: list[AlarmEvent]
    v_true: float | None = None
    v_hat: float | None = None
    onset: float | None = None

    @property
    def fallback(self) -> bool:
        return any(e.note for e in self.events if e.stage == "ur_confirmed")

    @property
    def time_to_verdict(self) -> float | None:
        """Seconds from disturbance onset to the last event, if any."""
        if not self.events or self.onset is None:
            return None
        return self.events[-1].t - self.onset


@dataclass
class MetricsReport:
    accuracy: float
    fpr: float | None
    velocity_mae: float | None
    trials: int
    ur_present: int
    false_alarms: int
    missed: int
    fallbacks: int
    records: list[TrialOutcome]
    cdf_points: list[tuple[float, float]]

    def summary(self) -> dict:
        return {
            "trials": self.trials,
            "ur_present": self.ur_present,
            "accuracy": self.accuracy,
            "fpr": self.fpr,
            "false_alarms": self.false_alarms,
            "missed": self.missed,
            "fallbacks": self.fallbacks,
            "velocity_mae": self.velocity_mae,
        }


def _ur_present(sc: Scenario, rng: np.random.Generator) -> bool:
    coin = bool(rng.random() < 0.5)
    if sc.ur_schedule == "always":
        return True
    if sc.ur_schedule == "never":
        return False
    return coin


def run_trial(sc: Scenario, db: VelocityProfileDB | None, cfg: DetectorConfig, seed: int, trial_id: int) -> TrialOutcome:
    """Simulate, preprocess and detect one seeded trial."""
    rng = np.random.default_rng(trial_seed(seed, trial_id, 0))
    ur = _ur_present(sc, rng)
    t_ur = float(rng.uniform(sc.event_min, sc.event_max))
    t_obj = float(rng.uniform(sc.event_min, sc.event_max))
    sim = sc.sim_cfg.with_(seed=trial_seed(seed, trial_id, 1), ur_active_from=t_ur if ur else None)

    obj = None
    onsets = [t_ur] if ur else []
    if sc.has_object:
        spec = sc.obj_spec
        v = float(rng.uniform(spec.v_min, spec.v_max))
        off = float(rng.uniform(spec.offset_min, spec.offset_max))
        probe = MovingObject(l_h=spec.l_h, d_h=spec.d_h, v=v, path_offset=off)
        first = min(w.t_start for w in occlusion_windows(sim.scene, probe))
        obj = replace(probe, t_enter=t_obj - first)
        onsets.append(t_obj)

    reads = simulate(sim, obj)
    window = db.meta.window if db is not None else 5
    streams = prepare_streams(reads, window=window, grid_rate=cfg.grid_rate)
    det_cfg = cfg.with_(eliminate=sc.condition == "eliminated")
    events = detect(streams, db if det_cfg.eliminate else None, sim.scene, det_cfg)
    v_hat = next((e.v_hat for e in events if e.stage == "window_extended"), None)
    return TrialOutcome(
        trial_id=trial_id,
        ground_truth_ur=ur,
        verdict_ur=verdict(events),
        events=events,
        v_true=obj.v if obj is not None else None,
        v_hat=v_hat,
        onset=min(onsets) if onsets else None,
    )


def run_scenario(sc: Scenario, db: VelocityProfileDB | None, cfg: DetectorConfig, seed: int = 0) -> list[TrialOutcome]:
    if sc.condition == "eliminated":
        if db is None:
            raise HarnessError("eliminated condition needs a velocity database")
        if db.meta.scene_digest != digest(sc.sim_cfg.scene):
            raise HarnessError("velocity database was built for a different scene")
    return [run_trial(sc, db, cfg, seed, i) for i in range(sc.trials)]


def empirical_cdf(samples: Sequence[float]) -> list[tuple[float, float]]:
    """Right-continuous step points ``(x, F(x))`` at each distinct sample."""
    xs = np.sort(np.asarray(samples, dtype=float))
    if xs.size == 0:
        return []
    uniq, idx = np.unique(xs, return_index=True)
    counts = np.append(idx[1:], xs.size)
    return [(float(x), float(c) / xs.size) for x, c in zip(uniq, counts)]


def compute_metrics(outcomes: Sequence[TrialOutcome]) -> MetricsReport:
    if not outcomes:
        raise HarnessError("no outcomes")
    outs = sorted(outcomes, key=lambda o: o.trial_id)
    n = len(outs)
    correct = sum(o.verdict_ur == o.ground_truth_ur for o in outs)
    absent = [o for o in outs if not o.ground_truth_ur]
    false_alarms = sum(o.verdict_ur for o in absent)
    missed = sum(o.ground_truth_ur and not o.verdict_ur for o in outs)
    pairs = [(o.v_true, o.v_hat) for o in outs if o.v_true is not None and o.v_hat is not None]
    ttv = [o.time_to_verdict for o in outs if o.time_to_verdict is not None]
    return MetricsReport(
        accuracy=correct / n,
        fpr=false_alarms / len(absent) if absent else None,
        velocity_mae=float(np.mean([abs(a - b) for a, b in pairs])) if pairs else None,
        trials=n,
        ur_present=n - len(absent),
        false_alarms=false_alarms,
        missed=missed,
        fallbacks=sum(o.fallback for o in outs),
        records=outs,
        cdf_points=empirical_cdf(ttv),
    )


def velocity_accuracy_experiment(
    db: VelocityProfileDB,
    sim_cfg: SimConfig,
    velocities: Sequence[float],
    trials_per_v: int = 10,
    seed: int = 1,
    tolerance: float = 0.02,
    rig: CrossingSpec = CrossingSpec(),
) -> list[dict]:
    """Simulate rig crossings at each speed and match them against ``db``.

    Crossings follow the database's rig geometry and timing.  Returns one
    record per speed with the hit rate within ``tolerance`` and the mean
    absolute error over successful estimates.
    """
    if len(velocities) == 0:
        raise HarnessError("no velocities requested")
    scene = sim_cfg.scene
    if db.meta.scene_digest != digest(scene):
        raise HarnessError("velocity database was built for a different scene")
    ref = db.meta.reference_tag
    report = []
    for vi, v in enumerate(velocities):
        v = float(v)
        if not db.v_min - 1e-9 <= v <= db.v_max + 1e-9:
            raise HarnessError(f"velocity {v} outside database range")
        obj, duration = standard_crossing(scene, v, ref, rig)
        hits, errors, estimates = 0, [], []
        for j in range(trials_per_v):
            run = sim_cfg.with_(seed=trial_seed(seed, vi, j), duration=duration, ur_active_from=None)
            try:
                s = _reference_series(simulate(run, obj), scene, ref, db.meta.window, db.meta.grid_rate)
                est = match_velocity(db, s)
            except VelocityError:
                estimates.append(None)
                continue
            estimates.append(est.v_hat)
            errors.append(abs(est.v_hat - v))
            hits += abs(est.v_hat - v) <= tolerance + 1e-9
        report.append(
            {
                "v": v,
                "trials": trials_per_v,
                "hit_rate": hits / trials_per_v,
                "mae": float(np.mean(errors)) if errors else None,
                "estimates": estimates,
            }
        )
    return report


# -- persistence ---------------------------------------------------------------

def _f(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def _pf(s: str):
    return float(s) if s else None


def format_outcomes(outcomes: Sequence[TrialOutcome]) -> str:
    """Line records: ``trial,...`` followed by that trial's ``event,...`` lines."""
    buf = io.StringIO()
    buf.write("# record,trial_id,ground_truth_ur,verdict_ur,v_true,v_hat,onset\n")
    buf.write("# record,t,stage,window_used,v_hat,t_in,tag_id,note\n")
    for o in sorted(outcomes, key=lambda o: o.trial_id):
        buf.write(
            f"trial,{o.trial_id},{int(o.ground_truth_ur)},{int(o.verdict_ur)},"
            f"{_f(o.v_true)},{_f(o.v_hat)},{_f(o.onset)}\n"
        )
        for e in o.events:
            buf.write(
                f"event,{_f(e.t)},{e.stage},{_f(e.window_used)},{_f(e.v_hat)},{_f(e.t_in)},"
                f"{e.tag_id or ''},{e.note}\n"
            )
    return buf.getvalue()


def parse_outcomes(text: str) -> list[TrialOutcome]:
    outs: list[TrialOutcome] = []
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        f = line.split(",")
        if f[0] == "trial":
            outs.append(
                TrialOutcome(int(f[1]), f[2] == "1", f[3] == "1", [], _pf(f[4]), _pf(f[5]), _pf(f[6]))
            )
        elif f[0] == "event":
            if not outs:
                raise HarnessError("event record before any trial record")
            outs[-1].events.append(
                AlarmEvent(float(f[1]), f[2], float(f[3]), _pf(f[4]), _pf(f[5]), f[6] or None, f[7])
            )
        else:
            raise HarnessError(f"unknown record type {f[0]!r}")
    return outs


def format_report(condition: str, report: MetricsReport) -> str:
    """Human-readable line records followed by a JSON summary block."""
    s = report.summary()
    lines = [f"# rfidguard metrics report", f"condition = {condition}"]
    for k, v in s.items():
        lines.append(f"{k} = {'undefined' if v is None else v}")
    lines.append("# per-trial: trial_id,ground_truth_ur,verdict_ur,time_to_verdict")
    for o in report.records:
        ttv = o.time_to_verdict
        lines.append(f"trial,{o.trial_id},{int(o.ground_truth_ur)},{int(o.verdict_ur)},{_f(ttv)}")
    lines.append("# summary")
    lines.append(json.dumps({"condition": condition, **s}, sort_keys=True))
    return "\n".join(lines) + "\n"


def format_cdf(points: Sequence[tuple[float, float]]) -> str:
    return "".join(f"{x:.6f} {p:.6f}\n" for x, p in points)
