"""
How the logistic scale sharpens routing
=======================================

The same cuts evaluated with growing gamma: the class probability map
goes from a soft blend to the hard tree it approaches.
"""

import numpy as np

from orct.evaluation import deterministic_predict, heatmap_grid
from orct.model import LogisticCdf, SplitParameters, TrainedModel
from orct.topology import build_topology

topology = build_topology(1)
params = SplitParameters(np.array([[1.0], [-1.0]]), np.array([0.0]))

for gamma in (2.0, 32.0, 512.0, 1e6):
    model = TrainedModel(topology, params, np.eye(2), LogisticCdf(gamma), class_labels=[0, 1])
    grid = heatmap_grid(model, [(0.0, 1.0), (0.0, 1.0)], resolution=101)
    P = grid[:, 2]
    soft = np.mean((P > 0.05) & (P < 0.95))
    print(f"gamma {gamma:>9g}: share of the square with probability in (0.05, 0.95): {soft:.3f}")

# in the limit the randomized tree predicts what hard routing does
X = np.random.default_rng(1).uniform(size=(1000, 2))
agree = np.mean(model.predict(X) == deterministic_predict(model, X))
print("agreement with hard routing at gamma=1e6:", agree)
