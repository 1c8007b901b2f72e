"""False-positive rate and accuracy under the three evaluation conditions."""
from rfidguard import DetectorConfig, Scenario, Scene, SimConfig, build_database, compute_metrics, run_scenario

TRIALS = 200
db = build_database(Scene(), SimConfig())
print(f"{'condition':<14}{'FPR':>8}{'accuracy':>10}{'fallbacks':>11}{'velocity MAE':>14}")
for cond in ("free", "interference", "eliminated"):
    m = compute_metrics(run_scenario(Scenario(condition=cond, trials=TRIALS), db, DetectorConfig(), seed=0))
    s = m.summary()
    fpr = "n/a" if m.fpr is None else f"{m.fpr:.3f}"
    mae = s["velocity_mae"]
    print(f"{cond:<14}{fpr:>8}{m.accuracy:>10.3f}{s['fallbacks']:>11}{'-' if mae is None else f'{mae:.3f}':>14}")
