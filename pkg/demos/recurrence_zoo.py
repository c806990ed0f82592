# %% [markdown]
# Six ways the density-graded omega sets can nest, realised by explicit
# symbol sequences on full shifts, and a point that returns in
# bursts: Banach recurrent with zero upper density.

# %%
from semigroup_lab.recurrence import burst_witness, case_sequence, classify_recurrence, construct_case_point
from semigroup_lab.systems import ShiftSystem
from semigroup_lab.words import Itinerary

horizons = (10 ** 3, 10 ** 4, 10 ** 5)
for case in range(1, 7):
    _, x, sys, cert = construct_case_point(case, horizons)
    sets = cert.omega_sets[horizons[-1]]
    print(case, cert.passed, {k: sorted(v) for k, v in sets.items()})

# %%
print("".join(map(str, case_sequence(3, 80))))

# %%
s2 = ShiftSystem(2)
v = classify_recurrence(s2, Itinerary.constant(0, 1), burst_witness(10 ** 5 + 64), 1.0, 10 ** 5, 0.1)
print(v.level, v.densities)
