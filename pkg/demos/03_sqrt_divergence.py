# %% [markdown]
# # Training the head with D versus sqrt(D)
#
# A single convolution plus sigmoid is fit with Adam to one fixed synthetic
# batch. Plain D keeps shrinking; sqrt(D) with a constant rate stalls, and
# with step decay it can hit D == 0 exactly, where its gradient is inf * 0.

# %%
from pathlib import Path

from silogstab.losskit import LossConfig
from silogstab.optimkit import LrSchedule
from silogstab.stabbench import SqrtDivergenceConfig, emit_report, run_sqrt_divergence

out = Path("demo_output")
runs = {
    "plain": SqrtDivergenceConfig(loss=LossConfig()),
    "sqrt-const": SqrtDivergenceConfig(loss=LossConfig(sqrt_wrap=True), schedule=LrSchedule.constant(2e-3)),
    "sqrt-step": SqrtDivergenceConfig(loss=LossConfig(sqrt_wrap=True), schedule=LrSchedule.step(1e-3, 0.1, 100)),
}
for name, cfg in runs.items():
    rep = run_sqrt_divergence(cfg)
    s = rep.summary
    print(f"{name:>10}: min loss {s['min_loss']:.3e}, first < 1e-7 at {s['first_below_1e-7']}, first NaN at {s['first_nan_iteration']}")
    emit_report(rep, out, ["csv", "svg"], stem=f"sqrt_{name}")
print("traces written to", out.resolve())
