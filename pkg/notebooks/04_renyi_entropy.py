# %% [markdown]
# # Matrix-based Renyi entropy
# Entropies from eigenvalues of trace-normalised Gram matrices.

# %%
import numpy as np

from phylab import conditional_entropy, gen_channel_dataset, mutual_information, normalize_gram, renyi_entropy
from phylab.renyi import sample_gram

# %%
# identity Gram of size B has entropy log2 B
print([round(renyi_entropy(normalize_gram(np.eye(B))), 6) for B in (2, 4, 8)])

# %%
rng = np.random.default_rng(0)
x = rng.normal(size=(200, 3))
y = x + 0.3 * rng.normal(size=(200, 3))
print("I(x;y)", mutual_information(sample_gram(x), sample_gram(y)))
print("I(x;noise)", mutual_information(sample_gram(x), sample_gram(rng.normal(size=(200, 3)))))

# %% [markdown]
# Conditional entropy of the true response given its estimate, against
# training-set size.

# %%
ds = gen_channel_dataset(1000, snr_db=10.0, rng=0)
for B in (100, 300, 1000):
    print(B, conditional_entropy(ds.z[:B], ds.v[:B]))
