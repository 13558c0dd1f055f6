# %% [markdown]
# # How often does the var-style loss return NaN on sparse ground truth?
#
# A 100x100 map is masked with Bernoulli(rate) validity. The unbiased
# estimator fails whenever fewer than two pixels remain, the biased one
# only when none remain. Counts are compared with Binomial predictions.

# %%
from silogstab.stabbench import VarianceNanConfig, run_variance_nan_table

table = run_variance_nan_table(VarianceNanConfig(trials=2000))
print(f"{'rate %':>7} {'unbiased':>8} {'expected':>9} {'biased':>6} {'expected':>9}")
for row in table.rows:
    r = dict(zip(table.columns, row))
    print(f"{100 * r['valid_rate']:7.2f} {r['nan_unbiased']:8d} {r['expected_unbiased']:9.1f} {r['nan_biased']:6d} {r['expected_biased']:9.1f}")
