# %% [markdown]
# # OFDM channel estimation data
# Pairs of interpolated LS estimate v and true frequency response z.

# %%
import numpy as np

from phylab import gen_channel_dataset

# %%
for snr in (0.0, 10.0, 20.0):
    ds = gen_channel_dataset(1000, n_sub=64, l_taps=4, snr_db=snr, rng=0)
    mse = np.mean((ds.v - ds.z) ** 2)
    print(f"{snr:4.0f} dB  LS+interp MSE {mse:.4f}  shapes {ds.v.shape} {ds.z.shape}")
