"""
Trading specificity for sensitivity on Pima
===========================================

A lower bound on the expected true-positive rate of the diabetic class
moves the cuts so fewer diabetics are missed, at the price of more false
alarms among the healthy.
"""

from orct import datasets
from orct.data import class_labels_of, encode_and_scale, encode_labels, repeated_split
from orct.evaluation import evaluate
from orct.trainer import TrainConfig, train

table = datasets.load_pima()
labels = class_labels_of(table)
pos = labels.index(1)
train_idx, test_idx = repeated_split(encode_labels(table, labels), 0.75, 1, seed=0)[0]
d_train, d_test, scaling = encode_and_scale(table.take(train_idx), table.take(test_idx), labels)

for rho in (None, 0.70, 0.80):
    config = TrainConfig(depth=2, n_starts=5, rho_targets={pos: rho} if rho else None)
    model = train(d_train, config, labels, scaling)
    m_train = evaluate(model, d_train, positive=pos)
    m_test = evaluate(model, d_test, positive=pos)
    tag = "none" if rho is None else f"{rho:.2f}"
    print(f"target {tag}:  TPR train {m_train.tpr:.3f} test {m_test.tpr:.3f}"
          f"  TNR test {m_test.tnr:.3f}  accuracy test {m_test.accuracy:.3f}")
