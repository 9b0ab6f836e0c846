"""Reuse one branch's model for another: zero-shot, then adapted on one year.

A source branch trained through 2015 is applied to a younger target branch.
The target sells at a different level and its growth breaks in spring 2016.
Adaptation on the 2016 data picks up both, and the new changepoints inside
2016 carry the largest trend-rate changes.

Run:  python3 demos/02_transfer_between_branches.py
"""
import numpy as np

from branchcast import AdaptConfig, adapt, fit, log2_transform, monthly_average_mape, predict
from branchcast.evaluation import seasonal_naive
from branchcast.synthetic import BranchSpec, generate_branch
from branchcast.transfer import changepoint_weight_profile, zero_shot_forecast

weekly = (0.85, 0.9, 0.95, 1.05, 1.3, 1.4, 0.7)
source = generate_branch(BranchSpec(
    "downtown", "2013-01-01", "2017-12-31", base_level=4000, growth_per_year=0.03,
    weekly_pattern=weekly, yearly_amplitude=0.12, yearly_phase=190, seed=1))
target = generate_branch(BranchSpec(
    "harbour", "2013-01-01", "2017-12-31", base_level=1800, growth_per_year=0.03,
    weekly_pattern=weekly, yearly_amplitude=0.12, yearly_phase=190,
    regime_breaks=(("2016-05-01", -0.35),), seed=2))

model, _ = fit(log2_transform(source.window(None, "2015-12-31")))
adapted, diag = adapt(model, log2_transform(target.window("2016-01-01", "2016-12-31")),
                      AdaptConfig(n_new_changepoints=5))
print("lineage of the adapted model:")
for entry in adapted.lineage:
    print("  ", entry)

window = ("2017-01-01", "2017-12-31")
test = target.window(*window)
scores = {
    "zero-shot": zero_shot_forecast(model, test.dates, "harbour"),
    "adapted": predict(adapted, test.dates),
    "seasonal naive": seasonal_naive(target.window(None, "2016-12-31"), window),
}
print("\n2017 monthly-average MAPE on the target:")
for name, fc in scores.items():
    print(f"  {name:15s} {monthly_average_mape(test, fc, window)[1]:7.2f}%")

print("\nlargest changepoint weights after adaptation:")
profile = sorted(changepoint_weight_profile(adapted), key=lambda p: -p[1])
for when, w in profile[:5]:
    inside = "inside 2016" if np.datetime64("2016-01-01") <= when else ""
    print(f"  {when}  |delta| = {w:.3f}  {inside}")
