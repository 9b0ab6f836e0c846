"""The four evaluation scenarios on the synthetic six-branch preset.

1a trains on 2016 only, 1b on all history through 2016, 2 applies every
branch's model to every other branch unchanged, and 3 trains sources
through 2015 then adapts each on the target's 2016.  Everything is scored
on 2017 as the mean of monthly MAPEs.

Run:  python3 demos/03_scenarios_and_matrix.py
"""
from branchcast import ScenarioConfig, compare_scenarios, run_scenario
from branchcast.evaluation import transfer_matrix_summary
from branchcast.synthetic import six_branch_preset

data = six_branch_preset(seed=0)
results = {sid: run_scenario(data, ScenarioConfig.preset(sid)) for sid in ("1a", "1b", "2", "3")}
compare_scenarios(results)

print(f"{'branch':8s} {'1a':>7s} {'1b':>7s} {'2':>7s} {'3':>7s} {'naive':>7s}")
for eid in data:
    row = [results[s].reports[eid].mape_mean for s in ("1a", "1b", "2", "3")]
    naive = results["1b"].reports[eid].baseline_mape
    print(f"{eid:8s} " + " ".join(f"{v:7.2f}" for v in row) + f" {naive:7.2f}")

# Full source x target grid for the adapted scenario.
matrix = results["3"].matrix
print("\nscenario 3 transfer matrix (rows: targets, columns: sources)")
print(matrix.to_csv())

summary = transfer_matrix_summary(results["2"].matrix)
print("best zero-shot source per target:")
for tgt, src in zip(results["2"].matrix.targets, summary.best_per_target):
    print(f"  {tgt} <- {src}")

rep = results["3"].reports["beta-4"]
print("\nbeta-4, adapted vs other scenarios (percentage change in MAPE):")
for key, value in rep.comparisons.items():
    print(f"  vs {key:12s} {value:+7.2f}%")
