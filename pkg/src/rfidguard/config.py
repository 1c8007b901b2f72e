"""Flat ``key = value`` configuration shared by every CLI subcommand.

Each key maps onto one field of the scene, simulator, detector, scenario or
database builder.  Files may contain blank lines and ``#`` comments; later
sources (file, then CLI flags) override earlier ones.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Mapping

from .detector import DetectorConfig
from .geometry import ANTENNA_X, TAG_X0, MovingObject, Scene
from .harness import ObjectSpec, Scenario
from .preprocess import FILTER_WINDOW
from .simulator import SimConfig
from .velocity import CrossingSpec

__all__ = ["ConfigError", "KEYS", "defaults", "parse_config", "load_config", "Settings"]


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "none") else float(s)


def _choice(*opts) -> Callable[[str], str]:
    def conv(s: str) -> str:
        s = s.strip()
        if s not in opts:
            raise ValueError(f"expected one of {', '.join(opts)}")
        return s

    return conv


_sim, _det, _obj, _sc, _rig = SimConfig(), DetectorConfig(), ObjectSpec(), Scenario(trials=1), CrossingSpec()
_walker = MovingObject()

# key -> (parser, default, help)
KEYS: dict[str, tuple[Callable[[str], Any], Any, str]] = {
    # scene
    "d_door": (float, 1.0, "doorway width (m)"),
    "d_set": (float, 0.2, "tag spacing (m)"),
    "tag_count": (int, 5, "number of tags"),
    "antenna_x": (float, ANTENNA_X, "antenna x along the walking direction (m)"),
    "antenna_setback": (float, 0.0, "antenna distance behind its jamb (m)"),
    "tag_x0": (float, TAG_X0, "x of the first tag (m)"),
    "tag_setback": (float, 0.0, "tag row distance behind its jamb (m)"),
    "l_tag": (float, 0.0, "effective tag reception length (m)"),
    # simulator
    "agg_rate": (float, _sim.agg_rate, "aggregate poll rate (Hz)"),
    "noise_sigma": (float, _sim.noise_sigma, "RSSI noise std (dB)"),
    "ur_active_from": (_opt_float, _sim.ur_active_from, "unauthorized reader start (s) or none"),
    "p_ur_loss": (float, _sim.p_ur_loss, "per-poll loss probability under an unauthorized reader"),
    "block_atten_db": (float, _sim.block_atten_db, "line-of-sight attenuation while blocked (dB)"),
    "p_block_loss": (float, _sim.p_block_loss, "per-poll loss probability while blocked"),
    "ramp": (float, _sim.ramp, "blockage edge ramp (s)"),
    "seed": (int, _sim.seed, "base random seed"),
    "duration": (float, _sim.duration, "session length (s)"),
    "tx_power_dbm": (float, _sim.tx_power_dbm, "power scale of a unit channel (dBm)"),
    "carrier_freq": (float, _sim.carrier_freq, "carrier frequency (Hz)"),
    "n_reflections": (int, _sim.n_reflections, "static reflection paths per tag"),
    "reflection_rel_min": (float, _sim.reflection_rel[0], "reflection amplitude, low end (x LOS)"),
    "reflection_rel_max": (float, _sim.reflection_rel[1], "reflection amplitude, high end (x LOS)"),
    "max_delay": (float, _sim.max_delay, "largest reflection delay (s)"),
    # walker for `simulate`
    "walker": (_bool, False, "simulate a walker crossing"),
    "walker_v": (float, _walker.v, "walker speed (m/s)"),
    "walker_t_enter": (float, _walker.t_enter, "time the walker starts at walker_start_x (s)"),
    "walker_offset": (float, _walker.path_offset, "walker lateral offset (m)"),
    "walker_start_x": (float, _walker.start_x, "walker start x (m)"),
    "body_length": (float, _det.body_length, "walker extent across the lane (m)"),
    "body_width": (float, _det.body_width, "walker depth along the lane (m)"),
    # preprocessing
    "filter_window": (int, FILTER_WINDOW, "moving-average width in samples (odd)"),
    "grid_rate": (float, _det.grid_rate, "resampling grid rate (Hz)"),
    # detector
    "base_window": (float, _det.base_window, "decision window (s)"),
    "asti_threshold": (float, _det.asti_threshold, "ASTI change-rate alarm threshold"),
    "k_consecutive": (int, _det.k_consecutive, "grid steps above threshold to raise an alarm"),
    "rssi_gate": (float, _det.rssi_gate, "RSSI change-rate gate"),
    "baseline_len": (float, _det.baseline_len, "baseline length at session start (s)"),
    "eliminate": (_bool, _det.eliminate, "enable blockage elimination in `detect`"),
    "gate_scope": (_choice("tag", "aggregate"), _det.gate_scope, "RSSI gate scope"),
    "min_score": (float, _det.min_score, "velocity match floor"),
    # scenario
    "condition": (_choice("free", "interference", "eliminated"), _sc.condition, "evaluation condition"),
    "trials": (int, 500, "trials per evaluation"),
    "ur_schedule": (_choice("coin", "always", "never"), _sc.ur_schedule, "unauthorized reader presence policy"),
    "event_min": (float, _sc.event_min, "earliest disturbance onset (s)"),
    "event_max": (float, _sc.event_max, "latest disturbance onset (s)"),
    "obj_v_min": (float, _obj.v_min, "slowest walker (m/s)"),
    "obj_v_max": (float, _obj.v_max, "fastest walker (m/s)"),
    "offset_min": (float, _obj.offset_min, "lowest walker lateral offset (m)"),
    "offset_max": (float, _obj.offset_max, "highest walker lateral offset (m)"),
    # velocity database
    "db_v_min": (float, 0.10, "database lowest speed (m/s)"),
    "db_v_max": (float, 2.00, "database highest speed (m/s)"),
    "db_step": (float, 0.02, "database speed step (m/s)"),
    "db_trials": (int, 20, "simulated crossings averaged per speed"),
    "db_margin": (float, 0.5, "dip segment margin (fraction of dip width)"),
    "db_min_depth": (float, 3.0, "smallest usable dip (dB)"),
    "rig_lead": (float, _rig.lead, "rig lead-in before the reference blockage (s)"),
    # velocity test
    "vt_trials": (int, 1, "crossings per speed in velocity-test"),
    "vt_tolerance": (float, 0.02, "hit tolerance in velocity-test (m/s)"),
}


def defaults() -> dict[str, Any]:
    return {k: d for k, (_, d, _) in KEYS.items()}


def convert(key: str, raw: str):
    if key not in KEYS:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        return KEYS[key][0](raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def parse_config(text: str, source: str = "<config>") -> dict[str, Any]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (p.strip() for p in line.split("=", 1))
        try:
            out[key] = convert(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return out


def load_config(path) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))


@dataclass(frozen=True)
class Settings:
    """Fully resolved configuration with builders for the domain objects."""

    values: Mapping[str, Any]

    @classmethod
    def resolve(cls, *layers: Mapping[str, Any]) -> "Settings":
        vals = defaults()
        for layer in layers:
            for k, v in layer.items():
                if k not in KEYS:
                    raise ConfigError(f"unknown config key {k!r}")
                vals[k] = v
        return cls(vals)

    def __getitem__(self, key):
        return self.values[key]

    def scene(self) -> Scene:
        v = self.values
        return Scene.doorway(
            d_door=v["d_door"],
            d_set=v["d_set"],
            tag_count=v["tag_count"],
            antenna_x=v["antenna_x"],
            antenna_setback=v["antenna_setback"],
            tag_setback=v["tag_setback"],
            tag_x0=v["tag_x0"],
            l_tag=v["l_tag"],
        )

    def sim_config(self) -> SimConfig:
        v = self.values
        return SimConfig(
            scene=self.scene(),
            agg_rate=v["agg_rate"],
            noise_sigma=v["noise_sigma"],
            ur_active_from=v["ur_active_from"],
            p_ur_loss=v["p_ur_loss"],
            block_atten_db=v["block_atten_db"],
            p_block_loss=v["p_block_loss"],
            ramp=v["ramp"],
            seed=v["seed"],
            duration=v["duration"],
            tx_power_dbm=v["tx_power_dbm"],
            carrier_freq=v["carrier_freq"],
            n_reflections=v["n_reflections"],
            reflection_rel=(v["reflection_rel_min"], v["reflection_rel_max"]),
            max_delay=v["max_delay"],
        )

    def walker(self) -> MovingObject | None:
        v = self.values
        if not v["walker"]:
            return None
        return MovingObject(
            l_h=v["body_length"],
            d_h=v["body_width"],
            v=v["walker_v"],
            t_enter=v["walker_t_enter"],
            path_offset=v["walker_offset"],
            start_x=v["walker_start_x"],
        )

    def detector_config(self) -> DetectorConfig:
        v = self.values
        return DetectorConfig(
            base_window=v["base_window"],
            asti_threshold=v["asti_threshold"],
            k_consecutive=v["k_consecutive"],
            rssi_gate=v["rssi_gate"],
            baseline_len=v["baseline_len"],
            grid_rate=v["grid_rate"],
            eliminate=v["eliminate"],
            gate_scope=v["gate_scope"],
            min_score=v["min_score"],
            body_length=v["body_length"],
            body_width=v["body_width"],
        )

    def scenario(self) -> Scenario:
        v = self.values
        spec = ObjectSpec(
            v_min=v["obj_v_min"],
            v_max=v["obj_v_max"],
            offset_min=v["offset_min"],
            offset_max=v["offset_max"],
            l_h=v["body_length"],
            d_h=v["body_width"],
        )
        return Scenario(
            condition=v["condition"],
            trials=v["trials"],
            sim_cfg=self.sim_config(),
            obj_spec=spec,
            ur_schedule=v["ur_schedule"],
            event_min=v["event_min"],
            event_max=v["event_max"],
        )

    def rig(self) -> CrossingSpec:
        v = self.values
        return CrossingSpec(l_h=v["body_length"], d_h=v["body_width"], lead=v["rig_lead"])
