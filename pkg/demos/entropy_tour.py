# %% [markdown]
# Entropy of a pair of circle maps and of its skew product.
# Counts grow like (5/2)^n on average over words, and the skew product
# adds log 2 for the choice of generator.

# %%
import math

import numpy as np

from semigroup_lab.entropy import bufetov_entropy, capacity_entropy, skew_entropy_check
from semigroup_lab.systems import CircleSystem, ShiftSystem

E23 = CircleSystem((2, 3))

# %%
est = bufetov_entropy(E23, [0.25, 0.2], (2, 7), resolution=2 ** 12)
for row in est.per_n_log_counts:
    if row["epsilon"] == 0.2:
        print(f"n={row['n']:2d}  mean count={row['mean_count']:8.1f}  (5/2)^n={2.5 ** row['n']:8.1f}")
print(f"estimate {est.value:.4f} vs log 5/2 = {math.log(2.5):.4f}")

# %% [markdown]
# The grid has 4096 points, so past n = 7 the counts hit the ceiling and the slope sags.

# %%
skew = skew_entropy_check(E23, [0.25], (2, 6))
print(f"h(F) ~ {skew['h_F_estimate']:.4f}, log 2 + h(G) ~ {skew['log_m'] + skew['h_G_estimate']:.4f}")

# %%
s = ShiftSystem(2)
full = capacity_entropy(s, s.grid(12), 1.0, (4, 10)).value
point = capacity_entropy(s, s.grid(12)[:1], 1.0, (4, 10)).value
print(f"capacity of the whole shift {full:.4f}, of one point {point:.4f}")
