# %% [markdown]
# # Two ways to write the scale-invariant log loss
#
# ``style="mean"`` subtracts a scaled squared mean from the mean square.
# ``style="var"`` adds a scaled squared mean to a variance. The two agree
# only when the variance divides by n.

# %%
import numpy as np

from silogstab import LogDiffs, LossConfig, estimator_gap, grad_silog, silog

d = LogDiffs.from_array([1.0, 3.0])
for style, est in (("mean", "biased"), ("var", "biased"), ("var", "unbiased")):
    print(f"{style:>4}/{est:<8} D = {silog(d, LossConfig(0.5, style, est)).value}")
print("gap (unbiased minus mean form):", estimator_gap(d, 0.5))

# %% [markdown]
# The gap shrinks like 1/n but never vanishes, and at n = 1 the unbiased
# form is 0/0.

# %%
rng = np.random.default_rng(0)
for n in (2, 10, 100, 1000):
    v = LogDiffs(rng.normal(size=n))
    print(f"n={n:5d} gap={estimator_gap(v, 0.85):.3e}")
print("n=1 unbiased:", silog(LogDiffs.from_array([0.7]), LossConfig(style="var", estimator="unbiased")).value)

# %% [markdown]
# The sqrt wrapper rescales the gradient by 1/(2 sqrt D), so shrinking every
# residual by 1000x leaves the gradient magnitude unchanged.

# %%
v = rng.normal(size=8)
cfg = LossConfig(0.85, sqrt_wrap=True)
print(np.abs(grad_silog(LogDiffs(v), cfg)).max(), np.abs(grad_silog(LogDiffs(1e-3 * v), cfg)).max())
