"""Command-line entry point: ``rfidguard <subcommand> [--config FILE] [--key VALUE ...]``.

Every configuration key is also a long flag of the same name.  Outputs go to
``--out`` (stdout when omitted) and are byte-identical for identical inputs.
"""
from __future__ import annotations

import argparse
import json
import sys
from contextlib import contextmanager

from .config import KEYS, ConfigError, Settings, convert, load_config
from .detector import DetectorError, detect, format_alarm_log, prepare_streams
from .geometry import GeometryError
from .harness import (
    HarnessError,
    compute_metrics,
    format_cdf,
    format_outcomes,
    format_report,
    run_scenario,
    velocity_accuracy_experiment,
)
from .preprocess import PreprocessError
from .simulator import SimulationError, format_trace, read_trace, simulate
from .velocity import VelocityError, VelocityProfileDB, build_database, digest

DOMAIN_ERRORS = (
    ConfigError,
    DetectorError,
    GeometryError,
    HarnessError,
    PreprocessError,
    SimulationError,
    VelocityError,
    OSError,
)


@contextmanager
def _sink(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            yield fh


def _write(path, text: str) -> None:
    with _sink(path) as fh:
        fh.write(text)


def _settings(args) -> Settings:
    layers = []
    if args.config:
        layers.append(load_config(args.config))
    layers.append({k: convert(k, getattr(args, k)) for k in KEYS if getattr(args, k, None) is not None})
    return Settings.resolve(*layers)


def _build_db(st: Settings) -> VelocityProfileDB:
    return build_database(
        st.scene(),
        st.sim_config(),
        st["db_v_min"],
        st["db_v_max"],
        st["db_step"],
        trials=st["db_trials"],
        window=st["filter_window"],
        grid_rate=st["grid_rate"],
        margin=st["db_margin"],
        min_depth=st["db_min_depth"],
        rig=st.rig(),
    )


def _load_or_build_db(args, st: Settings) -> VelocityProfileDB:
    return VelocityProfileDB.load(args.db) if args.db else _build_db(st)


def cmd_simulate(args, st: Settings) -> None:
    _write(args.out, format_trace(simulate(st.sim_config(), st.walker())))


def cmd_build_db(args, st: Settings) -> None:
    _write(args.out, _build_db(st).dumps())


def cmd_detect(args, st: Settings) -> None:
    cfg = st.detector_config()
    scene = st.scene()
    db = None
    window = st["filter_window"]
    if cfg.eliminate:
        if not args.db:
            raise ConfigError("detect with eliminate = true needs --db")
        db = VelocityProfileDB.load(args.db)
        if db.meta.scene_digest != digest(scene):
            raise ConfigError("velocity database was built for a different scene")
        window = db.meta.window
    streams = prepare_streams(read_trace(args.trace), window=window, grid_rate=cfg.grid_rate)
    _write(args.out, format_alarm_log(detect(streams, db, scene, cfg)))


def cmd_evaluate(args, st: Settings) -> None:
    sc = st.scenario()
    db = _load_or_build_db(args, st) if sc.condition == "eliminated" else None
    outcomes = run_scenario(sc, db, st.detector_config(), st["seed"])
    report = compute_metrics(outcomes)
    _write(args.out, format_report(sc.condition, report))
    if args.outcomes:
        _write(args.outcomes, format_outcomes(outcomes))
    if args.cdf:
        _write(args.cdf, format_cdf(report.cdf_points))


def cmd_velocity_test(args, st: Settings) -> None:
    db = _load_or_build_db(args, st)
    rep = velocity_accuracy_experiment(
        db,
        st.sim_config(),
        db.velocities,
        trials_per_v=st["vt_trials"],
        seed=st["seed"],
        tolerance=st["vt_tolerance"],
        rig=st.rig(),
    )
    lines = ["# v,hit_rate,mae,estimates"]
    for r in rep:
        mae = "" if r["mae"] is None else repr(r["mae"])
        est = " ".join("none" if e is None else repr(e) for e in r["estimates"])
        lines.append(f"{r['v']!r},{r['hit_rate']!r},{mae},{est}")
    hits = [r["hit_rate"] for r in rep]
    maes = [r["mae"] for r in rep if r["mae"] is not None]
    summary = {
        "velocities": len(rep),
        "tolerance": st["vt_tolerance"],
        "noise_sigma": st["noise_sigma"],
        "mean_hit_rate": sum(hits) / len(hits),
        "fraction_all_hit": sum(h == 1.0 for h in hits) / len(hits),
        "mean_mae": sum(maes) / len(maes) if maes else None,
    }
    lines.append("# summary")
    lines.append(json.dumps(summary, sort_keys=True))
    _write(args.out, "\n".join(lines) + "\n")


COMMANDS = {
    "simulate": (cmd_simulate, "simulate one session and write a trace"),
    "build-db": (cmd_build_db, "build the velocity profile database"),
    "detect": (cmd_detect, "run the detector on a trace and write an alarm log"),
    "evaluate": (cmd_evaluate, "run a scenario and write a metrics report"),
    "velocity-test": (cmd_velocity_test, "round-trip every database speed through the matcher"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rfidguard", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = subs.add_parser(name, help=help_)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--out", help="output file (default stdout)")
        if name in ("detect", "evaluate", "velocity-test"):
            p.add_argument("--db", help="velocity profile database file")
        if name == "detect":
            p.add_argument("--trace", required=True, help="trace file to analyse")
        if name == "evaluate":
            p.add_argument("--outcomes", help="write per-trial outcome records here")
            p.add_argument("--cdf", help="write time-to-verdict CDF here")
        group = p.add_argument_group("configuration keys")
        for key, (_, default, khelp) in KEYS.items():
            group.add_argument(f"--{key}", metavar="VALUE", help=f"{khelp} [default: {default}]")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        st = _settings(args)
        COMMANDS[args.command][0](args, st)
    except DOMAIN_ERRORS as exc:
        print(f"rfidguard {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
