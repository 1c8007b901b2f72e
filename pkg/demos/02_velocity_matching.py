"""Velocity templates: how well a single crossing recovers its own speed."""
import numpy as np

from rfidguard import Scene, SimConfig, build_database
from rfidguard.harness import velocity_accuracy_experiment

db = build_database(Scene(), SimConfig())
print(f"{db.velocities.size} templates, {db.velocities[0]:.2f} .. {db.velocities[-1]:.2f} m/s")

speeds = np.array([0.5, 0.8, 1.0, 1.2, 1.5])
for noise in (0.0, 0.5):
    rep = velocity_accuracy_experiment(db, SimConfig(noise_sigma=noise), speeds, trials_per_v=10, seed=3, tolerance=0.04)
    print(f"\nnoise {noise} dB")
    for r in rep:
        est = [e for e in r["estimates"] if e is not None]
        spread = f"{np.min(est):.2f} .. {np.max(est):.2f}" if est else "-"
        print(f"  v={r['v']:.2f}  hit(+-0.04)={r['hit_rate']:.1f}  mae={r['mae']:.3f}  range {spread}")
