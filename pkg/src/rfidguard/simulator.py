"""Seeded generator of reader observation streams.

A single reader antenna polls the tags round-robin at a fixed aggregate
rate.  Each successful poll reports the tag's RSSI, synthesised from a
line-of-sight path plus a few static reflections.  Two disturbances are
modelled:

* an unauthorized reader, whose collisions make each poll fail
  independently with probability ``p_ur_loss``;
* a walker, whose body attenuates a tag's line-of-sight path during that
  tag's occlusion window and makes polls inside the window fail with
  probability ``p_block_loss``.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .geometry import MovingObject, OcclusionWindow, Scene, occlusion_windows
from .preprocess import Series

__all__ = [
    "SimulationError",
    "TagRead",
    "PathComponent",
    "ChannelState",
    "SimConfig",
    "channel_response",
    "rssi_of",
    "blockage_profile",
    "simulate",
    "asti_series",
    "split_by_tag",
    "tag_ids",
    "write_trace",
    "read_trace",
    "format_trace",
]

C_LIGHT = 299_792_458.0
RSSI_FLOOR_DBM = -120.0
TRACE_HEADER = "tag_id,t,rssi"


class SimulationError(ValueError):
    pass


class TagRead(NamedTuple):
    tag_id: str
    t: float
    rssi: float


@dataclass(frozen=True)
class PathComponent:
    rho: float
    theta: float
    tau: float

    def __post_init__(self):
        if self.rho < 0 or self.tau < 0:
            raise SimulationError("path amplitude and delay must be non-negative")


@dataclass(frozen=True)
class ChannelState:
    """Path components, index 0 being the line-of-sight path."""

    components: tuple[PathComponent, ...]
    carrier_freq: float = 915e6

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise SimulationError("channel needs at least one path")

    def arrays(self):
        rho = np.array([c.rho for c in self.components])
        theta = np.array([c.theta for c in self.components])
        tau = np.array([c.tau for c in self.components])
        return rho, theta, tau


def channel_response(ch: ChannelState, f):
    """Complex multipath gain ``sum_n rho_n exp(j theta_n) exp(-j 2 pi f tau_n)``.

    ``f`` may be a scalar or an array of frequencies.
    """
    rho, theta, tau = ch.arrays()
    f = np.asarray(f, dtype=float)
    phase = theta - 2.0 * np.pi * np.multiply.outer(f, tau)
    h = np.sum(rho * np.exp(1j * phase), axis=-1)
    return complex(h) if h.ndim == 0 else h


def rssi_of(ch: ChannelState, f: float, tx_power_dbm: float = -45.0) -> float:
    """``tx_power_dbm + 20 log10 |H(f)|``, never below the -120 dBm floor."""
    mag = abs(channel_response(ch, f))
    if mag == 0.0:
        return RSSI_FLOOR_DBM
    return max(RSSI_FLOOR_DBM, tx_power_dbm + 20.0 * math.log10(mag))


@dataclass(frozen=True)
class SimConfig:
    """Simulation parameters.

    ``ur_active_from`` is ``None`` when no unauthorized reader is present.
    """

    scene: Scene = field(default_factory=Scene)
    agg_rate: float = 30.0
    noise_sigma: float = 0.5
    ur_active_from: float | None = None
    p_ur_loss: float = 0.3
    block_atten_db: float = 15.0
    p_block_loss: float = 0.6
    ramp: float = 0.1
    seed: int = 0
    duration: float = 20.0
    tx_power_dbm: float = -45.0
    carrier_freq: float = 915e6
    n_reflections: int = 3
    reflection_rel: tuple[float, float] = (0.05, 0.2)
    max_delay: float = 100e-9

    def __post_init__(self):
        if not self.agg_rate > 0:
            raise SimulationError("agg_rate must be positive")
        if self.noise_sigma < 0:
            raise SimulationError("noise_sigma must be non-negative")
        if not 0 <= self.p_ur_loss < 1:
            raise SimulationError("p_ur_loss must be in [0, 1)")
        if not 0 <= self.p_block_loss < 1:
            raise SimulationError("p_block_loss must be in [0, 1)")
        if self.block_atten_db < 0:
            raise SimulationError("block_atten_db must be non-negative")
        if self.ramp < 0:
            raise SimulationError("ramp must be non-negative")
        if not self.duration > 0:
            raise SimulationError("duration must be positive")
        if self.n_reflections < 0:
            raise SimulationError("n_reflections must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise SimulationError("seed must be a 64-bit unsigned integer")

    def with_(self, **kw) -> "SimConfig":
        return replace(self, **kw)


def tag_ids(scene: Scene) -> list[str]:
    return [f"T{i:02d}" for i in range(scene.tag_count)]


def blockage_profile(t, window: OcclusionWindow, ramp: float) -> np.ndarray:
    """Fraction of the blockage attenuation applied at times ``t``.

    Raised-cosine edges of length ``ramp`` are centred on the window
    boundaries, so the profile crosses 1/2 exactly at ``t_start`` and
    ``t_end``.  Overlapping ramps (windows shorter than ``ramp``) take the
    lower of the two edges.
    """
    t = np.asarray(t, dtype=float)
    if window.duration <= 0:
        return np.zeros_like(t)
    if ramp <= 0:
        return ((t >= window.t_start) & (t <= window.t_end)).astype(float)

    def edge(u):
        u = np.clip(u / ramp + 0.5, 0.0, 1.0)
        return 0.5 * (1.0 - np.cos(np.pi * u))

    return np.minimum(edge(t - window.t_start), edge(window.t_end - t))


def _draw_channels(cfg: SimConfig, rng: np.random.Generator) -> list[tuple[float, float, complex]]:
    """Per tag: LOS amplitude, LOS delay, and the static reflection sum."""
    scene = cfg.scene
    lo, hi = cfg.reflection_rel
    out = []
    for i in range(scene.tag_count):
        d = scene.tag_distance(i)
        rho0 = 1.0 / d
        tau0 = d / C_LIGHT
        n = cfg.n_reflections
        rho = rng.uniform(lo, hi, n) * rho0
        theta = rng.uniform(0.0, 2 * np.pi, n)
        tau = np.maximum(rng.uniform(0.0, cfg.max_delay, n), tau0)
        refl = ChannelState(
            tuple(PathComponent(r, th, ta) for r, th, ta in zip(rho, theta, tau)) or (PathComponent(0.0, 0.0, 0.0),),
            cfg.carrier_freq,
        )
        out.append((rho0, tau0, channel_response(refl, cfg.carrier_freq)))
    return out


def simulate(cfg: SimConfig, obj: MovingObject | None = None) -> list[TagRead]:
    """Simulate one reader session; identical inputs give identical output."""
    scene = cfg.scene
    windows = None
    if obj is not None:
        obj.check_fits(scene)
        windows = occlusion_windows(scene, obj)

    rng = np.random.default_rng(cfg.seed)
    channels = _draw_channels(cfg, rng)

    n_polls = int(math.ceil(cfg.duration * cfg.agg_rate - 1e-9))
    poll = np.arange(n_polls)
    t = poll / cfg.agg_rate
    tag = poll % scene.tag_count
    u_ur = rng.random(n_polls)
    u_block = rng.random(n_polls)
    noise = rng.standard_normal(n_polls)

    keep = np.ones(n_polls, dtype=bool)
    if cfg.ur_active_from is not None:
        keep &= ~((t >= cfg.ur_active_from) & (u_ur < cfg.p_ur_loss))

    atten_db = np.zeros(n_polls)
    if windows is not None:
        for w in windows:
            mine = tag == w.tag_index
            atten_db[mine] = cfg.block_atten_db * blockage_profile(t[mine], w, cfg.ramp)
            blocked = mine & (t >= w.t_start) & (t <= w.t_end)
            keep &= ~(blocked & (u_block < cfg.p_block_loss))

    rho0 = np.array([c[0] for c in channels])[tag]
    tau0 = np.array([c[1] for c in channels])[tag]
    refl = np.array([c[2] for c in channels])[tag]
    los = rho0 * 10.0 ** (-atten_db / 20.0) * np.exp(-2j * np.pi * cfg.carrier_freq * tau0)
    mag = np.abs(los + refl)
    with np.errstate(divide="ignore"):
        rssi = np.maximum(cfg.tx_power_dbm + 20.0 * np.log10(mag), RSSI_FLOOR_DBM)
    rssi = rssi + cfg.noise_sigma * noise

    ids = tag_ids(scene)
    return [TagRead(ids[k], float(tt), float(r)) for k, tt, r in zip(tag[keep], t[keep], rssi[keep])]


def split_by_tag(reads: Iterable[TagRead]) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per-tag ``(t, rssi)`` arrays, keys in first-seen order."""
    acc: dict[str, tuple[list, list]] = {}
    for r in reads:
        ts, rs = acc.setdefault(r.tag_id, ([], []))
        ts.append(r.t)
        rs.append(r.rssi)
    return {k: (np.array(ts), np.array(rs)) for k, (ts, rs) in acc.items()}


def asti_series(reads: Sequence[TagRead], tag_id: str) -> Series:
    """Gaps between consecutive reads of one tag, stamped at the later read."""
    t = np.array([r.t for r in reads if r.tag_id == tag_id])
    if t.size < 2:
        raise SimulationError(f"need at least two reads of {tag_id!r}")
    return Series(t[1:], np.diff(t))


def format_trace(reads: Iterable[TagRead]) -> str:
    buf = io.StringIO()
    buf.write(TRACE_HEADER + "\n")
    for r in reads:
        buf.write(f"{r.tag_id},{r.t:.6f},{r.rssi:.3f}\n")
    return buf.getvalue()


def write_trace(path, reads: Iterable[TagRead]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_trace(reads))


def read_trace(path) -> list[TagRead]:
    """Parse a ``tag_id,t,rssi`` trace file (real captures or simulated)."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != TRACE_HEADER:
        raise SimulationError(f"{path}: missing '{TRACE_HEADER}' header")
    reads = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise SimulationError(f"{path}:{lineno}: expected 3 fields")
        try:
            reads.append(TagRead(parts[0], float(parts[1]), float(parts[2])))
        except ValueError as exc:
            raise SimulationError(f"{path}:{lineno}: {exc}") from None
    return reads
