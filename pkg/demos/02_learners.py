"""
SOC and SOH regressors
======================

Random forest, histogram gradient boosting and a small MLP, all trained
on the same synthetic aging data and scored with 5-fold cross-validation.
The second half repeats the SOH task without ``relative_time``, which is
the feature that carries the capacity information.
"""

from battwin.labeling import build_labeled_dataset
from battwin.learners import NO_TIME, LearnerConfig, dumps_model, deserialize_model, kfold_cv, train
from battwin.synth import SynthParams, generate_lifetime, linear_schedule
from battwin.twin import default_soh_learner

p = SynthParams(soh_schedule=linear_schedule(100, 70, 16), noise_sigma=0.002,
                sample_period=30.0, seed=1)
data = build_labeled_dataset(generate_lifetime(p))
X, y = data.arrays("soc")
print(f"{len(y)} rows, features (voltage, current, temperature, relative_time)")

# SOC: all three learners, scaled features.
learners = {
    "rf": LearnerConfig("rf", {"n_trees": 30}, 0, scale=True),
    "gbt": LearnerConfig("gbt", {}, 0, scale=True),
    "mlp": LearnerConfig("mlp", {"hidden_layers": 2, "hidden_width": 32, "epochs": 60}, 0,
                         scale=True),
}
print("\nSOC, 5-fold CV")
for name, cfg in learners.items():
    r = kfold_cv(X, y, 5, cfg, seed=0).aggregate
    print(f"  {name:4s} RMSE {r.rmse_pct:6.3f} %  MAE {r.mae_pct:6.3f} %  "
          f"MaxErr {r.max_err_pct:7.3f} %  train {r.train_time_s:.2f} s")

# SOH: with and without the time feature.
print("\nSOH, 5-fold CV, random forest")
for label, cols in (("all features", None), ("no relative_time", list(NO_TIME))):
    Xs, ys = data.arrays("soh", cols)
    r = kfold_cv(Xs, ys, 5, default_soh_learner(), seed=0).aggregate
    print(f"  {label:17s} RMSE {r.rmse_pct:6.3f} %")

# Models round-trip through a checksummed JSON artifact.
m = train(learners["gbt"], X, y, trained_at_soh=85.0, version=3)
back = deserialize_model(dumps_model(m))
print("\nartifact round trip exact:", bool((back.predict(X) == m.predict(X)).all()))
