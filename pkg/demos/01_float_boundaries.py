# %% [markdown]
# # Where binary32 runs out
#
# The depth head divides by and takes logs of numbers that can become
# arbitrarily small. This script shows which small numbers survive the
# trip into float32 and which silently collapse to zero.

# %%
import numpy as np

from silogstab import finfo, log32_shifted, parse_decimal_to_f32, sigmoid32

fi = finfo()
print(fi)
print("smallest subnormal:", fi.smallest_subnormal)

# %% [markdown]
# A literal just above half of the smallest subnormal rounds up to it;
# one just below rounds to zero. Adding such an epsilon buys nothing.

# %%
for text in ("7.1e-46", "7.0e-46", "1e-24", "1e-40"):
    v = parse_decimal_to_f32(text)
    print(f"{text:>8} -> {v!r}  (bits {v.view(np.uint32):#010x})")

# %% [markdown]
# The sigmoid reaches exactly zero a little past z = -88, so the log of the
# predicted depth becomes -inf unless a usable epsilon is added.

# %%
for z in (-80.0, -88.0, -88.7, -89.0):
    s = sigmoid32(np.float32(z))
    print(f"z={z:6}: s={s!r:>22}  log(s)={log32_shifted(s)!r:>12}  log(s+1e-24)={log32_shifted(s, np.float32(1e-24))!r}")
