"""Online model selection over the four-conjecture benchmark family.

Runs the exponential-weights selection loop with exact (oracle) losses and
a fixed seed: the least misspecified conjecture wins almost every round,
the running-average loss approaches its long-run divergence, and regret
against the best fixed conjecture stays far below the standard envelope.
"""

import math

import numpy as np

from berknash import BanditConfig, SoftPlanConfig, benchmark3, run_exp3

m, cs = benchmark3()
cfg = BanditConfig()  # tuned oracle-loss defaults, horizon 1500, seed 11
record = run_exp3(m, cs, cfg, SoftPlanConfig(temperature=0.1))

print(f"T={cfg.horizon}, learning_rate={cfg.learning_rate}, "
      f"exploration={cfg.exploration}, seed={cfg.rng_seed}")
print(f"loss scale (largest per-entry KL cost): {record.loss_scale:.6f}\n")

print(f"{'arm':>3}  {'label':>9}  {'oracle loss':>11}  {'pulls':>6}  {'frequency':>9}")
counts = np.bincount(record.arms, minlength=len(cs))
for k, q in enumerate(cs):
    print(f"{k:3d}  {q.label:>9}  {record.oracle_losses[k]:11.5f}  "
          f"{counts[k]:6d}  {record.selection_frequencies[k]:9.4f}")

print("\nrunning-average loss over time:")
for t in (10, 50, 100, 500, 1000, 1500):
    print(f"  t={t:5d}: {record.running_mean[t - 1]:.5f}")
print(f"best arm's loss: {record.oracle_losses.min():.5f}")

T, K = record.arms.size, len(cs)
envelope = 2.0 * math.sqrt(math.e - 1.0) * math.sqrt(T * K * math.log(K))
print(f"\nfinal regret vs best fixed arm: {record.regret[-1]:.2f}")
print(f"standard EXP3 envelope 2*sqrt(e-1)*sqrt(T K ln K): {envelope:.2f}")
print(f"regret rate halves: {record.regret[T // 2 - 1] / (T // 2):.5f} -> "
      f"{record.regret[-1] / T:.5f}")
