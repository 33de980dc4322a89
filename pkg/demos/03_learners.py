"""The nine regression families on one toy problem.

Every learner is written from scratch on numpy; this fits each with small
settings and reports held-out MSE, then shows two internals: boosting's
training curve and the SVR's KKT residuals.
"""
import numpy as np

from cem.learners import DISPLAY_NAMES, FAMILIES, fit_regressor
from cem.selection import compute_metrics

rng = np.random.default_rng(0)
X = rng.uniform(size=(600, 4))
y = np.exp(1.5 + X @ np.array([1.0, -0.8, 0.4, 0.0])) + rng.normal(scale=0.3, size=600)
y = np.maximum(y, 0)
tr, te = np.arange(500), np.arange(500, 600)

small = {"random_forest": {"n_trees": 50}, "gbdt": {"n_trees": 200}, "xgb": {"n_trees": 200},
         "nn": {"epochs": 200}}
for fam in FAMILIES:
    m = fit_regressor(fam, X[tr], y[tr], small.get(fam), seed=0)
    print(f"{DISPLAY_NAMES[fam]:>10}: test MSE {compute_metrics(y[te], m.predict(X[te])).mse:8.4f}")

gb = fit_regressor("gbdt", X[tr], y[tr], {"n_trees": 400, "learning_rate": 0.05, "max_depth": 5})
print("\nGBDT training MSE every 50 rounds:", np.round(gb.train_mse[::50], 4))
svr = fit_regressor("svr", X[tr], y[tr], {"C": 10000.0})
print("SVR support vectors:", svr.n_support, " max KKT residual:", float(np.max(svr.kkt_residuals())))
