# %% [markdown]
# # Gradient scale versus last-layer initialization
#
# Each replica draws features, ground truth and a unit kernel once and
# evaluates every (epsilon, sigma_w) point on the same draw. Small sigma_w
# starves the gradient; large sigma_w pushes logits past -89, giving NaN
# unless epsilon is large enough to survive the cast to binary32.
# Replica count is reduced here so the script finishes in about a minute.

# %%
from silogstab.stabbench import SweepConfig, emit_report, run_sweep

cfg = SweepConfig(sigma_grid=(0.01, 0.1, 0.5, 1.0, 2.0), eps_grid=(0.0, "7.0e-46", "1e-24", "1e-3"), replicas=10)
table = run_sweep(cfg, runner="sim-eps")
print(f"{'eps':>8} {'sigma':>6} {'mean var':>10} {'NaN frac':>8}")
for row in table.rows:
    r = dict(zip(table.columns, row))
    print(f"{r['epsilon']:>8} {r['sigma_w']:6.2f} {r['mean_grad_var']:10.3e} {r['nan_fraction']:8.2f}")
emit_report(table, "demo_output", ["csv", "svg"], stem="gradient_scale")
