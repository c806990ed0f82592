# %% [markdown]
# Glue several orbit segments of the (2, 3) circle pair into one orbit
# that follows each segment except for a sublinear number of steps.

# %%
from fractions import Fraction

import numpy as np

from semigroup_lab.covers import BlowupFunction
from semigroup_lab.systems import CircleSystem
from semigroup_lab.tracing import TraceRequest, g_almost_trace, min_length, skew_trace_lift, min_length_skew
from semigroup_lab.words import Word

E23 = CircleSystem((2, 3))
g = BlowupFunction.sqrt_ceil()
print("audit", g.audit())

# %%
rng = np.random.default_rng(0)
segs = []
for eps in (0.2, 0.1, 0.2):
    n = min_length(E23, g, eps) + 5
    segs.append((Fraction(int(rng.integers(0, 10 ** 6)), 10 ** 6), Word(tuple(rng.integers(0, 2, n).tolist()), 2), eps))
y, cert = g_almost_trace(E23, g, TraceRequest(segs))
for row in cert.csv_rows():
    print(row)

# %% [markdown]
# The skew lift also chooses the itinerary, so each segment brings its own word.

# %%
segs = []
for eps in (0.2, 0.1):
    n = min_length_skew(E23, g, eps)
    segs.append((rng.integers(0, 2, n + 64), Fraction(1, 7), n, eps))
(iota, y), cert = skew_trace_lift(E23, g, segs)
print(cert.passed, list(cert.csv_rows()))
