# %% [markdown]
# # Choosing channels, and what the new ones are worth
#
# Given a database of verified channels, selection greedily trades a
# channel's own calibration accuracy against its correlation with channels
# already picked.  The exclusion study then asks: if the previously known
# (seed) channels were patched, do the newly discovered ones still leak?

# %%
from leakscope.analysis import PipelineConfig, run_exclusion_study, select_channels
from leakscope.discovery import ChannelDatabase, ChannelDescriptor
from leakscope.synth import generate_dataset, redundant_scenario
from leakscope.traces import SplitSpec

# %% [markdown]
# The greedy rule on a three-channel toy: A and B are near copies, so after
# taking A the second pick is C despite its lower accuracy.

# %%
db = ChannelDatabase.from_seed([ChannelDescriptor(c, f"api_{c}") for c in "ABC"])
accs = {"A": 0.9, "B": 0.85, "C": 0.6}
corr = {"A": {"B": 0.99, "C": 0.05}, "B": {"C": 0.05}}
print(select_channels(None, db, 2, per_channel_acc=accs, correlation=corr))

# %% [markdown]
# A scenario where every seed channel has a discovered twin carrying the
# same signal with more noise.

# %%
ds = generate_dataset(redundant_scenario(seed=2))
db = ChannelDatabase()
for cid in ds.channel_ids:
    db.add(ChannelDescriptor(cid, f"api_{cid}").accepted(1.0), "seed" if cid.startswith("seed") else "discovered")

config = PipelineConfig(L=2000, split=SplitSpec(0.8, 2), seed=2)
full, filtered = run_exclusion_study(ds, db, config, exclude_origin="seed", k=4)
print("all channels:   %.3f  %s" % (full.overall_accuracy, full.selected_channels))
print("discovered only: %.3f  %s" % (filtered.overall_accuracy, filtered.selected_channels))
