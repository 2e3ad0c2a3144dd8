"""
A depth-2 randomized tree on Iris
=================================

Train on three quarters of the flowers, look at the oblique cuts and the
leaf labels, then score the held-out quarter.
"""

import numpy as np

from orct import datasets
from orct.data import class_labels_of, encode_and_scale, encode_labels, repeated_split
from orct.evaluation import evaluate, importance
from orct.trainer import TrainConfig, train

table = datasets.load_iris()
labels = class_labels_of(table)
train_idx, test_idx = repeated_split(encode_labels(table, labels), 0.75, 1, seed=0)[0]
d_train, d_test, scaling = encode_and_scale(table.take(train_idx), table.take(test_idx), labels)

model = train(d_train, TrainConfig(depth=2, n_starts=10), labels, scaling)
print("training objective", round(model.objective_value, 4))

# each column of a is one oblique cut: u = a . x / p - mu, left when u >= 0
np.set_printoptions(precision=3, suppress=True)
print("a =\n", model.params.a)
print("mu =", model.params.mu)
print("leaf labels:", model.labels_of(np.argmax(model.assignment, axis=0)))

# held-out quarter
print("test accuracy", round(evaluate(model, d_test).accuracy, 3))

# which measurements the cuts lean on
report = importance(model)
for name, sim, mim in zip(report.features, report.sim, report.mim):
    print(f"{name:>14s}  SIM {sim:.3f}  MIM {mim:.3f}")

# a single flower gets class probabilities, not just a label
k, proba = model.predict_one(d_test.X[0])
print("first test flower:", model.labels_of(k)[0], proba.round(3))
