"""Time-to-solution ratio between two training trajectories.

The target run converges; the baseline is still climbing when it stops, so its
crossing of the target's final DA is extrapolated linearly from its last points.
"""
import numpy as np

from hqmm import estimate_speedup

times = np.linspace(0, 10, 41)
target = np.column_stack([times, 0.1 + 0.06 * np.minimum(times, 5.0)])
baseline = np.column_stack([times[:21], 0.1 + 0.03 * times[:21]])

for fraction in (1.0, 0.9):
    est = estimate_speedup(baseline, target, solution_fraction=fraction)
    print(f"goal {est.goal_da:.3f}: target {est.target_time:.2f}s, baseline {est.baseline_time:.2f}s "
          f"({'extrapolated' if est.extrapolated else 'observed'}), speedup {est.speedup:.2f}")

flat = np.column_stack([times, np.full(times.size, 0.2)])
est = estimate_speedup(flat, target)
print(f"flat baseline: speedup {est.speedup} (infinite={est.infinite})")
