# %% [markdown]
# # Constellation search
# Projected gradient descent on M points in N dimensions under an average
# power constraint, starting from random points.

# %%
import numpy as np

from phylab import NoiseLevel, gradient_search, min_distance, optimize_constellation, pe_asymptotic
from phylab.constellation import default_n0, init_constellation

# %%
M, N = 8, 2
p_av = 1.0 / M
noise = NoiseLevel(default_n0(p_av))
c0 = init_constellation(M, N, p_av, rng=0)
c, trace = gradient_search(c0, noise, steps=1000)
print("dmin", min_distance(c0), "->", min_distance(c))
print("Pe", pe_asymptotic(c0, noise), "->", pe_asymptotic(c, noise))

# %% [markdown]
# Best of several restarts.  For M=8 the optimum is one point at the centre
# with seven on a ring.

# %%
best, _ = optimize_constellation(M, N, restarts=20, rng=0)
r = np.linalg.norm(best.points, axis=1)
print(np.sort(r).round(3))
