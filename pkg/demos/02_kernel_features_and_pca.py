# %% [markdown]
# # Random convolutional kernel features
#
# Each kernel is a short random filter with a random dilation and bias,
# bound to one channel.  Sliding it over the (z-normalized) channel gives a
# response series, summarized by two numbers: the proportion of positive
# values (PPV) and the maximum.  Neither depends on where in the trace the
# pattern occurred, which is why these features shrug off misalignment.

# %%
import numpy as np

from leakscope.pca import fit_pca, project
from leakscope.rocket import Kernel, KernelBank, apply_kernels, generate_kernels, naive_convolve, transform_dataset
from leakscope.synth import generate_dataset, standard_scenario
from leakscope.traces import SplitSpec, Trace, split_dataset

# %% [markdown]
# One kernel by hand.  ``naive_convolve`` is the plain-Python reference the
# compiled path is tested against.

# %%
k = Kernel(np.array([1.0, 0.0, -1.0]), bias=0.0, dilation=1, padding=False)
print(naive_convolve(k, [0, 1, 2, 3]))

bank = KernelBank.from_kernels([k], n_channels=1, series_length=4, normalize_per_channel=False)
print("PPV, max:", apply_kernels(bank, Trace([[0.0, 1.0, 2.0, 3.0]], 1.0, "x")))

# %% [markdown]
# A full bank.  2L features per trace; generation is seeded, so the same
# (L, channels, length, seed) always gives the same bank.

# %%
ds = generate_dataset(standard_scenario(traces_per_class=20, seed=4))
bank = generate_kernels(2000, ds.n_channels, ds.n_samples, seed=4)
print("kernel lengths:", sorted(set(bank.lengths.tolist())), "max dilation:", int(bank.dilations.max()))

train, test = split_dataset(ds, SplitSpec(0.8, 4))
train_f = transform_dataset(bank, train)
print("train features:", train_f.rows.shape)

# %% [markdown]
# PCA is fitted on training rows only.  With 96 training traces the rank
# is at most 95, so a request for 250 dimensions is capped and a notice is
# recorded.

# %%
proj = fit_pca(train_f, 250)
print("r_effective:", proj.r_effective, "|", proj.notice)
share = proj.explained_variance / proj.explained_variance.sum()
print("variance in first 10 components: %.2f" % share[:10].sum())
test_r = project(proj, transform_dataset(bank, test))
print("projected test rows:", test_r.rows.shape)
