"""
Regression leaves on a step
===========================

With real leaf outputs the same tree fits a step function.  For fixed cuts
the best leaf values are a least-squares solve, so only the cuts are
searched.
"""

import numpy as np

from orct.model import Dataset
from orct.regression import train_orrt
from orct.trainer import TrainConfig

rng = np.random.default_rng(0)
x = rng.uniform(size=(200, 1))
y = np.where(x[:, 0] > 0.5, 2.0, -1.0) + 0.1 * rng.normal(size=200)

model = train_orrt(Dataset(x, y), TrainConfig(depth=1, n_starts=5))
print("training MSE", round(model.objective_value, 4), "variance", round(float(y.var()), 4))
print("leaf values", model.phi.round(3))

# the cut sits where a . x / p - mu changes sign
print("cut at x =", round(float(model.params.mu[0] / model.params.a[0, 0]), 3))
print("predictions at 0.25 / 0.75:", model.predict([[0.25], [0.75]]).round(3))
