# %% [markdown]
# # Countermeasures
#
# Two interface-level mitigations: capping how often a value refreshes
# (emulated by sample-and-hold at the original query rate) and adding
# Gaussian noise scaled by each channel's clean spread.  Both are applied
# to every trace before the unchanged pipeline runs.

# %%
import numpy as np

from leakscope.analysis import PipelineConfig, emit_plot_data
from leakscope.defenses import DefenseSpec, evaluate_defense, reduce_frequency
from leakscope.synth import generate_dataset, standard_scenario
from leakscope.traces import SplitSpec, Trace

# %% [markdown]
# Sample-and-hold on one row: at 4 Hz with a 2 Hz cap every value is held
# for two samples.

# %%
print(reduce_frequency(Trace([[1.0, 2.0, 3.0, 4.0]], 4.0, "x"), 2.0).values)

# %% [markdown]
# A scenario with two informative channels and moderate noise, so that
# there is headroom for the defenses to show an effect.

# %%
ds = generate_dataset(standard_scenario(n_informative=2, noise_std=0.7, seed=1))
config = PipelineConfig(L=2000, d=100, split=SplitSpec(0.8, 1), seed=1)
defenses = [DefenseSpec("gaussian_noise", sigma=s, seed=1) for s in (0.0, 0.1, 0.25, 0.5, 1.0)]
defenses += [DefenseSpec("frequency_cap", cap_hz=c) for c in (100, 50, 20, 5)]
rows = evaluate_defense(ds, defenses, config)
for name, acc in rows:
    print(f"{name:<28} {acc:.3f} {'#' * int(round(acc * 40))}")

# %% [markdown]
# ``emit_plot_data`` writes ``x y`` lines for any plotting tool.

# %%
import tempfile

with tempfile.NamedTemporaryFile("r", suffix=".dat") as fh:
    emit_plot_data([(c, a) for (name, a), c in zip(rows[-4:], (100, 50, 20, 5))], fh.name)
    print(fh.read())
print("chance level: %.3f" % (1 / 6))
