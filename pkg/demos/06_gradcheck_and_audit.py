# %% [markdown]
# # Verifying gradients and auditing a training setup

# %%
from silogstab.headnet import InitScheme
from silogstab.losskit import LossConfig
from silogstab.stabbench import audit_config, run_gradient_check

res = run_gradient_check(trials=20, seed=0)
print(f"worst relative error over {res.trials} random heads: {res.worst:.2e} (pass={res.passed})")

# %% [markdown]
# A setup that combines every risky choice, and one that avoids them.

# %%
risky = audit_config(LossConfig(style="var", estimator="unbiased", sqrt_wrap=True), InitScheme("xavier"), "late")
for f in risky:
    print(f"[{f.severity}] guideline {f.guideline}: {f.message}")
print("recommended:", audit_config(LossConfig(epsilon=1e-24), InitScheme("normal", 0.5)))
