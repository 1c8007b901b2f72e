"""Walker speed estimation by Pearson matching against reference RSSI dips.

A :class:`VelocityProfileDB` holds one normalised RSSI dip template per
reference speed.  Templates come from simulated "dummy on a rail" crossings
of the doorway centreline, averaged over many seeded trials.  An observed
dip is matched against every template at every time alignment; the speed
whose best Pearson coefficient is closest to 1 is the estimate.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .geometry import MovingObject, Scene, occlusion_windows
from .preprocess import FILTER_WINDOW, Series, preprocess
from .simulator import SimConfig, simulate, split_by_tag, tag_ids

__all__ = [
    "VelocityError",
    "ZeroVarianceError",
    "NoDipError",
    "NoMatch",
    "DatabaseError",
    "pcc",
    "sliding_pcc",
    "Dip",
    "find_dip",
    "normalize",
    "VelocityProfile",
    "VelocityProfileDB",
    "VelocityEstimate",
    "velocity_grid",
    "standard_crossing",
    "trial_seed",
    "build_database",
    "match_velocity",
]

log = logging.getLogger(__name__)

DB_VERSION = 1


class VelocityError(ValueError):
    pass


class ZeroVarianceError(VelocityError):
    """An input sequence has zero variance, so the coefficient is undefined."""


class NoDipError(VelocityError):
    """No RSSI dip deep enough to be a blockage was found."""


class NoMatch(VelocityError):
    """Best template score fell below the acceptance floor."""

    def __init__(self, best_v: float, best_score: float, min_score: float):
        super().__init__(f"best score {best_score:.3f} (v={best_v:.2f}) below {min_score}")
        self.best_v = best_v
        self.best_score = best_score


class DatabaseError(VelocityError):
    pass


def pcc(x, y) -> float:
    """Pearson correlation coefficient of two equal-length sequences."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise VelocityError("pcc needs two 1-D sequences of equal length >= 2")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = np.dot(xc, xc)
    syy = np.dot(yc, yc)
    if sxx == 0.0 or syy == 0.0:
        raise ZeroVarianceError("constant input")
    # sqrt of the product keeps pcc(x, x) exactly 1
    r = float(np.dot(xc, yc) / np.sqrt(sxx * syy))
    return min(1.0, max(-1.0, r))


def sliding_pcc(a: np.ndarray, b: np.ndarray, min_overlap: int) -> np.ndarray:
    """Pearson coefficient of ``a`` against ``b`` at every integer lag.

    Lag ``k`` pairs ``a[i]`` with ``b[i - k]``; only lags whose overlap has at
    least ``min_overlap`` samples are scored.  Returns ``(lags, scores)``
    with ``nan`` where either overlapping part is constant.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = a.size, b.size
    min_overlap = max(2, min(min_overlap, na, nb))
    lags = np.arange(-(nb - min_overlap), na - min_overlap + 1)
    # overlap of a[lo:hi] with b[lo-k:hi-k]
    lo = np.maximum(0, lags)
    hi = np.minimum(na, nb + lags)
    n = hi - lo
    ca = np.concatenate(([0.0], np.cumsum(a)))
    ca2 = np.concatenate(([0.0], np.cumsum(a * a)))
    cb = np.concatenate(([0.0], np.cumsum(b)))
    cb2 = np.concatenate(([0.0], np.cumsum(b * b)))
    sa = ca[hi] - ca[lo]
    sa2 = ca2[hi] - ca2[lo]
    sb = cb[hi - lags] - cb[lo - lags]
    sb2 = cb2[hi - lags] - cb2[lo - lags]
    full = np.correlate(a, b, mode="full")  # index j <-> lag j - (nb - 1)
    sab = full[lags + nb - 1]
    cov = sab - sa * sb / n
    va = sa2 - sa * sa / n
    vb = sb2 - sb * sb / n
    tiny = 1e-12 * np.maximum(1.0, np.maximum(np.abs(sa2), np.abs(sb2)))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where((va > tiny) & (vb > tiny), cov / np.sqrt(va * vb), np.nan)
    return lags, np.clip(r, -1.0, 1.0)


class Dip(NamedTuple):
    """Half-depth extent of the deepest RSSI excursion in a series."""

    t_lo: float
    t_hi: float
    t_min: float
    depth: float
    baseline: float

    @property
    def width(self) -> float:
        return self.t_hi - self.t_lo


def find_dip(s: Series, min_depth: float = 3.0) -> Dip:
    """Locate the deepest dip below the series median.

    The dip spans the contiguous run around the minimum that lies below half
    depth.  Raises :class:`NoDipError` when the excursion is shallower than
    ``min_depth`` (dB).
    """
    if len(s) < 3:
        raise NoDipError("series too short")
    y = s.y
    base = float(np.median(y))
    i = int(np.argmin(y))
    depth = base - float(y[i])
    if depth < min_depth:
        raise NoDipError(f"deepest excursion {depth:.2f} dB < {min_depth} dB")
    half = base - depth / 2.0
    below = y < half
    lo = i
    while lo > 0 and below[lo - 1]:
        lo -= 1
    hi = i
    while hi < len(y) - 1 and below[hi + 1]:
        hi += 1
    return Dip(float(s.t[lo]), float(s.t[hi]), float(s.t[i]), depth, base)


def dip_segment(s: Series, dip: Dip, margin: float = 0.5) -> Series:
    """The dip plus ``margin`` times its width on either side."""
    pad = margin * max(dip.width, 1e-9)
    return s.window(dip.t_lo - pad, dip.t_hi + pad)


def normalize(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    sd = y.std()
    if sd == 0.0:
        raise ZeroVarianceError("cannot normalise a constant segment")
    return (y - y.mean()) / sd


@dataclass(frozen=True)
class VelocityProfile:
    v: float
    template: Series


@dataclass(frozen=True)
class DBMeta:
    grid_rate: float
    trials_per_velocity: int
    scene_digest: str
    config_digest: str
    reference_tag: int
    window: int = FILTER_WINDOW
    margin: float = 0.5
    min_depth: float = 3.0
    discarded: int = 0


@dataclass
class VelocityProfileDB:
    profiles: list[VelocityProfile]
    meta: DBMeta

    def __post_init__(self):
        vs = [p.v for p in self.profiles]
        if not vs:
            raise DatabaseError("empty database")
        if any(b <= a for a, b in zip(vs, vs[1:])):
            raise DatabaseError("profile speeds must be strictly increasing")

    def __len__(self):
        return len(self.profiles)

    @property
    def velocities(self) -> np.ndarray:
        return np.array([p.v for p in self.profiles])

    @property
    def v_min(self) -> float:
        return self.profiles[0].v

    @property
    def v_max(self) -> float:
        return self.profiles[-1].v

    @property
    def max_template_duration(self) -> float:
        return max(len(p.template) for p in self.profiles) / self.meta.grid_rate

    # -- persistence -------------------------------------------------------
    def dumps(self) -> str:
        m = self.meta
        lines = [
            "# rfidguard velocity profile database",
            f"version = {DB_VERSION}",
            f"grid_rate = {m.grid_rate!r}",
            f"trials_per_velocity = {m.trials_per_velocity}",
            f"reference_tag = {m.reference_tag}",
            f"window = {m.window}",
            f"margin = {m.margin!r}",
            f"min_depth = {m.min_depth!r}",
            f"discarded = {m.discarded}",
            f"scene_digest = {m.scene_digest}",
            f"config_digest = {m.config_digest}",
            "v_grid = " + ",".join(f"{p.v:.2f}" for p in self.profiles),
        ]
        for p in self.profiles:
            samples = ",".join(f"{x:.9f}" for x in p.template.y)
            lines.append(f"profile,{p.v:.2f},{len(p.template)},{samples}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "VelocityProfileDB":
        header: dict[str, str] = {}
        profiles = []
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            if line.startswith("profile,"):
                parts = line.split(",")
                v, n = float(parts[1]), int(parts[2])
                y = np.array([float(x) for x in parts[3:]])
                if y.size != n:
                    raise DatabaseError(f"profile {v}: expected {n} samples, got {y.size}")
                profiles.append((v, y))
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise DatabaseError(f"malformed header line: {line!r}")
            header[key.strip()] = value.strip()
        if int(header.get("version", -1)) != DB_VERSION:
            raise DatabaseError(f"unsupported database version {header.get('version')}")
        rate = float(header["grid_rate"])
        meta = DBMeta(
            grid_rate=rate,
            trials_per_velocity=int(header["trials_per_velocity"]),
            scene_digest=header["scene_digest"],
            config_digest=header["config_digest"],
            reference_tag=int(header["reference_tag"]),
            window=int(header.get("window", FILTER_WINDOW)),
            margin=float(header.get("margin", 0.5)),
            min_depth=float(header.get("min_depth", 3.0)),
            discarded=int(header.get("discarded", 0)),
        )
        grid = [float(v) for v in header.get("v_grid", "").split(",") if v]
        if grid and grid != [v for v, _ in profiles]:
            raise DatabaseError("v_grid header disagrees with profile records")
        return cls(
            [VelocityProfile(v, Series(np.arange(y.size) / rate, y)) for v, y in profiles], meta
        )

    @classmethod
    def load(cls, path) -> "VelocityProfileDB":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


class VelocityEstimate(NamedTuple):
    v_hat: float
    score: float


def velocity_grid(v_min: float = 0.10, v_max: float = 2.00, step: float = 0.02) -> np.ndarray:
    if not v_min <= v_max:
        raise VelocityError("v_min must not exceed v_max")
    if not step > 0:
        raise VelocityError("step must be positive")
    n = int(np.floor((v_max - v_min) / step + 1e-9)) + 1
    return np.round(v_min + step * np.arange(n), 10)


def digest(obj) -> str:
    """Short stable hash of a dataclass (or plain) value."""
    payload = asdict(obj) if hasattr(obj, "__dataclass_fields__") else obj
    text = json.dumps(payload, sort_keys=True, default=repr)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def trial_seed(base: int, *keys: int) -> int:
    """Independent 64-bit seed for a sub-trial of ``base``."""
    ss = np.random.SeedSequence(entropy=base, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class CrossingSpec:
    """The rig crossing used to build the database."""

    l_h: float = 0.5
    d_h: float = 0.3
    lead: float = 2.0


def standard_crossing(scene: Scene, v: float, ref: int, rig: CrossingSpec = CrossingSpec()):
    """Centreline rig crossing and a matching trace duration.

    The reference tag's blockage starts after ``max(rig.lead, T_in)`` seconds
    and the trace runs the same time past its end.  Returns ``(obj, duration)``.
    """
    probe = MovingObject(l_h=rig.l_h, d_h=rig.d_h, v=v, t_enter=0.0, path_offset=0.0)
    w = occlusion_windows(scene, probe)[ref]
    lead = max(rig.lead, w.duration)
    obj = MovingObject(l_h=rig.l_h, d_h=rig.d_h, v=v, t_enter=lead - w.t_start, path_offset=0.0)
    return obj, 2 * lead + w.duration


def _reference_series(reads, scene: Scene, ref: int, window: int, grid_rate: float) -> Series:
    tid = tag_ids(scene)[ref]
    per_tag = split_by_tag(reads)
    if tid not in per_tag or per_tag[tid][0].size < 2:
        raise NoDipError("reference tag has too few reads")
    t, r = per_tag[tid]
    return preprocess(Series(t, r), window=window, grid_rate=grid_rate)


def build_database(
    scene: Scene,
    sim_cfg: SimConfig,
    v_min: float = 0.10,
    v_max: float = 2.00,
    step: float = 0.02,
    trials: int = 20,
    window: int = FILTER_WINDOW,
    grid_rate: float = 100.0,
    margin: float = 0.5,
    min_depth: float = 3.0,
    rig: CrossingSpec = CrossingSpec(),
) -> VelocityProfileDB:
    """Simulate ``trials`` rig crossings per speed and store averaged dips.

    Trial ``j`` at every speed uses the same derived seed, so neighbouring
    templates differ only through the speed.  Trials without a detectable
    dip are discarded and counted in ``meta.discarded``.
    """
    if trials < 1:
        raise VelocityError("trials must be >= 1")
    cfg = sim_cfg.with_(scene=scene, ur_active_from=None)
    ref = scene.reference_tag()
    profiles = []
    discarded = 0
    for v in velocity_grid(v_min, v_max, step):
        obj, duration = standard_crossing(scene, float(v), ref, rig)
        kept = []
        for j in range(trials):
            run = cfg.with_(seed=trial_seed(cfg.seed, j), duration=duration)
            try:
                s = _reference_series(simulate(run, obj), scene, ref, window, grid_rate)
                find_dip(s, min_depth)
            except NoDipError:
                discarded += 1
                continue
            kept.append(s)
        if not kept:
            raise VelocityError(f"no usable trial at v={v:.2f}")
        grid = kept[0].t
        mean = np.mean([np.interp(grid, s.t, s.y) for s in kept], axis=0)
        avg = Series(grid, mean)
        seg = dip_segment(avg, find_dip(avg, min_depth), margin)
        y = normalize(seg.y)
        profiles.append(VelocityProfile(float(v), Series(np.arange(y.size) / grid_rate, y)))
    if discarded:
        log.info("discarded %d trial(s) without a detectable dip", discarded)
    meta = DBMeta(
        grid_rate=grid_rate,
        trials_per_velocity=trials,
        scene_digest=digest(scene),
        config_digest=digest(cfg),
        reference_tag=ref,
        window=window,
        margin=margin,
        min_depth=min_depth,
        discarded=discarded,
    )
    return VelocityProfileDB(profiles, meta)


def observed_segment(db: VelocityProfileDB, observed: Series) -> np.ndarray:
    """Normalised search segment around the deepest excursion of ``observed``.

    The segment reaches one longest-template length either side of the RSSI
    minimum, so every template can be aligned anywhere on the dip.
    """
    dip = find_dip(observed, db.meta.min_depth)
    reach = db.max_template_duration
    seg = observed.window(dip.t_min - reach, dip.t_min + reach)
    if len(seg) < 2:
        raise ZeroVarianceError("observed dip segment too short")
    return normalize(seg.y)


def match_velocity(
    db: VelocityProfileDB,
    observed: Series,
    min_score: float = 0.6,
    min_overlap: float = 0.5,
) -> VelocityEstimate:
    """Best-matching database speed for an observed RSSI dip.

    ``observed`` must already be preprocessed onto the database grid rate.
    Each template is slid across the observed segment; ``min_overlap`` is
    the smallest overlap scored, as a fraction of the template length.  The
    highest coefficient wins, ties going to the lower speed.  Raises
    :class:`NoMatch` when that coefficient is below ``min_score``.
    """
    if len(observed) > 1:
        rate = 1.0 / np.median(np.diff(observed.t))
        if abs(rate - db.meta.grid_rate) > 1e-6 * db.meta.grid_rate:
            raise VelocityError(f"observed grid rate {rate:g} != database {db.meta.grid_rate:g}")
    x = observed_segment(db, observed)
    best_v, best = db.profiles[0].v, -np.inf
    for p in db.profiles:
        tmpl = p.template.y
        need = int(np.ceil(min_overlap * tmpl.size))
        _, r = sliding_pcc(x, tmpl, need)
        score = np.nanmax(r) if np.any(np.isfinite(r)) else -np.inf
        if score > best:
            best_v, best = p.v, float(score)
    if best < min_score:
        raise NoMatch(best_v, best, min_score)
    return VelocityEstimate(best_v, best)
