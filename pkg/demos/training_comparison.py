"""MultiAirFed against HierFed on the non-i.i.d. synthetic task.

Each device holds samples of only two of ten classes. Both algorithms run
over the simulated analog channel and over an interference-free channel.

Run with ``python3 demos/training_comparison.py``. Takes about a minute.
"""

from multiairfed import ExperimentConfig
from multiairfed.experiments import final_accuracies, train_runs

cfg = ExperimentConfig(realizations=3)

for mode in ("ideal", "ota"):
    for algorithm in ("multiairfed", "hierfed"):
        results = train_runs(cfg, algorithm, mode)
        acc = final_accuracies(results)
        curve = results[0].accuracy_per_round
        print(f"{algorithm:12s} {mode:6s} final accuracy {acc.mean():.3f} "
              f"(round 1: {curve[0]:.3f}, round 10: {curve[9]:.3f})")

# collaboration: the same seeds with a single cluster
one = final_accuracies(train_runs(cfg.with_(C=1), "multiairfed", "ota"))
print(f"multiairfed  ota, C=1  final accuracy {one.mean():.3f}")
