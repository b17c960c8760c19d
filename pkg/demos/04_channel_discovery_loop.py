# %% [markdown]
# # Propose and verify
#
# A proposer suggests candidate channels in batches.  Each candidate must
# pass, in order: a documentation check against the knowledge base, the
# threat model (background access, sandbox scope), a duplicate check, and
# a distinguishability check on calibration traces.  The loop stops once
# fewer than 20% of a batch survive.
#
# The proposer here is a scripted replay shipped with the package, so the
# run is deterministic.  A live model plugs in through ``HttpProposer``.

# %%
from leakscope.adapters import ScriptedProposer, load_script
from leakscope.discovery import ChannelDatabase, DiscoveryConfig, load_event, load_kb, run_discovery
from leakscope.replay import fixture_path
from leakscope.synth import generate_dataset, load_scenario

records = load_script(fixture_path("gemini80.jsonl"))
kb = load_kb(fixture_path("gemini80_kb.json"))
event = load_event(fixture_path("gemini80_event.json"))
calibration = generate_dataset(load_scenario(fixture_path("gemini80_calibration.scenario.json")))
print(len(records), "scripted proposals,", calibration.n_channels, "calibration channels")

# %%
proposer = ScriptedProposer(records)
result = run_discovery(event, kb, ChannelDatabase(), proposer, config=DiscoveryConfig(), calibration=calibration)
report = result.report()
print("tallies:", report["tallies"], "accepted:", report["accepted"])
for batch in report["batches"]:
    print(f"  batch {batch['batch']}: acceptance rate {batch['acceptance_rate']:.1f}")
print(report["stop_reason"])

# %% [markdown]
# The proposer sees a digest of the previous batch's rejections.  This is
# what the second request carried:

# %%
print(proposer.requests[1].feedback)

# %% [markdown]
# Accepted channels keep their measured calibration accuracy.

# %%
for desc in result.database.verified()[:5]:
    print(f"{desc.channel_id}  {desc.api_name:<8} acc={desc.measured_accuracy:.2f}")
