# %% [markdown]
# # Information plane of a linear estimator
# A 128-64-32-16-8-16-32-64-128 network maps v to z.  At checkpoints the
# mutual information between mirrored hidden layers and the input/output is
# recorded.

# %%
from phylab import build_estimator, emit_planes, gen_channel_dataset, train_with_capture

# %%
train = gen_channel_dataset(10_000, snr_db=20.0, rng=0)
held = gen_channel_dataset(100, snr_db=20.0, rng=1)
net, records = train_with_capture(build_estimator(rng=0), train, iters=200, checkpoint_every=50,
                                  rng=2, heldout=held)

# %%
planes = emit_planes(records)
for name, rows in planes.items():
    print(name, rows[-1])
print("mse by checkpoint", planes["loss"])
