"""From transactions to a fitted model and its components.

Run:  python3 demos/01_fit_and_decompose.py
"""
import io

import numpy as np

from branchcast import (
    CleaningConfig,
    aggregate_daily,
    clean_transactions,
    components,
    fit,
    log2_transform,
    parse_transactions,
    predict,
)
from branchcast.synthetic import six_branch_preset

# A handful of raw transactions.  The 01:30 sale belongs to the previous
# business day (cutoff 06:00) and the tip is not revenue.
raw = """timestamp,item_text,unit_price,quantity,is_tip
2017-06-02T12:05:00,Lunch menu,11.50,2,false
2017-06-02T19:40:00,Wine,6.00,3,false
2017-06-03T01:30:00,Beer,4.20,2,false
2017-06-03T01:35:00,Tip,2.00,1,true
2017-06-03T13:10:00,Lunch menu,11.50,1,false
"""
cfg = CleaningConfig()
parsed = parse_transactions(io.StringIO(raw))
kept, report = clean_transactions(parsed.records, cfg)
daily = aggregate_daily(kept, cfg, entity_id="demo", report=report)
print("daily totals:")
for d, v in zip(daily.dates, daily.values):
    print(f"  {d}  {v:8.2f}")
print("cleaning report:", report.to_dict())

# A realistic history comes from the synthetic preset: six branches, two chains.
series = six_branch_preset(seed=0)["alpha-1"]
train = log2_transform(series.window(None, "2016-12-31"))
model, diag = fit(train)
print(f"\nfitted alpha-1 on {diag.n_rows} days, objective {diag.objective_value:.2f}, "
      f"condition {diag.condition_estimate:.2g}")

# What the model says about a typical week and about the year.
week = np.arange(np.datetime64("2017-01-02"), np.datetime64("2017-01-09"))
comp = components(model, week)
print("\nweekly effect (multiplier):")
for d, w in zip(week, comp.seasonal["weekly"]):
    print(f"  {d.astype(object):%a}  x{2 ** w:.3f}")

mid_month = np.array([np.datetime64(f"2017-{m:02d}-15") for m in range(1, 13)])
yearly = components(model, mid_month).seasonal["yearly"]
print("\nyearly effect mid-month (multiplier):")
print("  " + "  ".join(f"{2 ** y:.2f}" for y in yearly))

test = series.window("2017-01-01", "2017-12-31")
fc = predict(model, test.dates)
err = np.abs(fc.yhat - test.values) / test.values
print(f"\n2017 forecast: mean absolute percentage error {100 * err.mean():.2f}%")
