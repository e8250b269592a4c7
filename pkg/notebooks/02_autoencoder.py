# %% [markdown]
# # End-to-end autoencoder
# Encoder and decoder trained jointly over AWGN.  The learned constellation
# is compared with the gradient-search optimum.

# %%
from phylab import compare_constellations, evaluate_ser, extract_constellation, optimize_constellation, train_autoencoder
from phylab.autoencoder import decode_with_network

# %%
M, N = 8, 2
pair, history = train_autoencoder(M, N, snr_db=7.0, epochs=5000, rng=0)
print("final loss", history[-1][1])
learned = extract_constellation(pair)

# %%
opt, _ = optimize_constellation(M, N, restarts=10, rng=0)
rep = compare_constellations(learned, opt, rng=0)
print("spectrum gap", rep.spectrum_gap, "residual", rep.residual)

# %% [markdown]
# Symbol error rate with minimum-distance decisions and with the decoder.

# %%
print("min-distance", evaluate_ser(learned, 7.0, 200_000, rng=1))
print("decoder     ", decode_with_network(pair, learned, 7.0, 200_000, rng=1))
