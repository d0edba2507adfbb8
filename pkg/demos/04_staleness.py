"""
How stale SOC models degrade
============================

SOC models are trained on single cycles at 100, 95, 85 and 75 % SOH and
all scored on one held-out 75 % cycle.  The error grows with the SOH gap
between training and use, which is what the twin's retraining corrects.
"""

from pathlib import Path

from battwin.labeling import build_labeled_dataset
from battwin.synth import SynthParams, generate_lifetime, linear_schedule
from battwin.twin import evaluate_staleness

p = SynthParams(soh_schedule=linear_schedule(100, 70, 61), noise_sigma=0.005,
                sample_period=10.0, seed=11)
data = build_labeled_dataset(generate_lifetime(p))

res = evaluate_staleness(data, [100, 95, 85, 75], 75)
print(f"evaluated on cycle {res.eval_cycle_index} (SOH {res.eval_soh:.2f} %)")
print("trained at   RMSE %   MAE %  MaxErr %")
for row in res.rows:
    r = row.report
    print(f"{row.train_band:9g}  {r.rmse_pct:7.3f} {r.mae_pct:7.3f} {r.max_err_pct:8.3f}")

# Prediction curves for plotting elsewhere.
out = Path("staleness_curves.csv")
res.write_curves(out)
print(f"curves written to {out}")
