"""One doorway session: a walker crosses, then an unauthorized reader switches on.

Runs the detector with and without blockage elimination and prints both alarm logs.
"""
from rfidguard import DetectorConfig, MovingObject, Scene, SimConfig, build_database, detect, prepare_streams, simulate
from rfidguard.detector import format_alarm_log
from rfidguard.geometry import occlusion_windows

scene = Scene()
walker = MovingObject(v=1.1, t_enter=5.0)
for i, w in enumerate(occlusion_windows(scene, walker)):
    print(f"tag {i}: blocked {w.t_start:6.2f} .. {w.t_end:6.2f} s")

reads = simulate(SimConfig(scene=scene, ur_active_from=14.0, seed=7), walker)
print(f"{len(reads)} reads answered out of {int(20.0 * 30)} polls")

db = build_database(scene, SimConfig(scene=scene))
streams = prepare_streams(reads, window=db.meta.window)

for eliminate in (False, True):
    events = detect(streams, db if eliminate else None, scene, DetectorConfig(eliminate=eliminate))
    print(f"\n--- eliminate = {eliminate}")
    print(format_alarm_log(events), end="")
