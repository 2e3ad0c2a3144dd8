"""Command-line entry point: ``orct <subcommand> [options]``.

Exit status is 0 on success, 1 for usage errors, 2 for data errors and 3
for numerical failures during training.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import datasets
from .assignment import InfeasibleTopologyError
from .data import (
    DataError,
    RawTable,
    class_labels_of,
    encode_and_scale,
    encode_labels,
    ingest_csv,
    repeated_split,
    transform,
)
from .evaluation import (
    UnsupportedDimensionality,
    benchmark,
    evaluate,
    greedy_baseline,
    grid_to_csv,
    heatmap_grid,
    importance,
    rho_sweep,
)
from .model import Dataset, RegressionModel, load_model
from .regression import train_orrt
from .trainer import NumericalFailure, TrainConfig, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _percent_or_fraction(values: list[float]) -> list[float]:
    """Values above 1 anywhere in the list mean the whole list is in percent."""
    if any(v > 1.0 for v in values):
        return [v / 100.0 for v in values]
    return values


def parse_rho(text: str) -> dict[str, float]:
    """``"1=70,2=50"`` -> raw class label to target rate."""
    out = {}
    for part in text.split(","):
        if "=" not in part:
            raise UsageError(f"--rho entries look like class=value, got {part!r}")
        label, value = part.rsplit("=", 1)
        try:
            out[label.strip()] = float(value)
        except ValueError:
            raise UsageError(f"--rho value {value!r} is not a number") from None
    keys = list(out)
    return dict(zip(keys, _percent_or_fraction([out[k] for k in keys])))


def parse_grid(text: str) -> list[float]:
    """Comma list whose items are numbers or inclusive ``start:stop:step`` ranges."""
    values: list[float] = []
    try:
        for item in text.split(","):
            if ":" not in item:
                values.append(float(item))
                continue
            start, stop, step = (float(v) for v in item.split(":"))
            if step <= 0:
                raise UsageError("--rho-grid step must be positive")
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            values.extend(start + i * step for i in range(n))
    except ValueError:
        raise UsageError(f"cannot parse --rho-grid {text!r}") from None
    return _percent_or_fraction(values)


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", help="CSV file, or one of iris/wine/pima for a bundled table")
    common.add_argument("--target", help="name of the target column (bundled tables: preset)")
    common.add_argument("--categorical", default="",
                        help="comma-separated columns to treat as categorical")
    common.add_argument("--positive-class", help="target value of the positive class")
    common.add_argument("--depth", type=int, default=2)
    common.add_argument("--gamma", type=float, default=512.0)
    common.add_argument("--starts", type=int, default=20)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--rho", help="performance targets, class=value[,class=value]")
    common.add_argument("--no-coverage", action="store_true",
                        help="allow classes that label no leaf")
    common.add_argument("--no-continuation", action="store_true",
                        help="train directly at the final gamma")
    common.add_argument("--no-recentre", action="store_true",
                        help="keep random initial thresholds as drawn")
    common.add_argument("--reps", type=int, default=10, help="repeated splits")
    common.add_argument("--model", help="model JSON path")
    common.add_argument("--out", help="output path (default: standard output)")
    common.add_argument("--trace", help="write the per-iteration training trace CSV here")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = _Parser(prog="orct",
                     description="Oblique trees with logistic routing, trained by expected-cost descent.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)
    p = sub.add_parser("train", parents=[common], help="fit a tree on a whole file")
    p.add_argument("--regression", action="store_true", help="real-valued target")
    sub.add_parser("predict", parents=[common], help="predict with a saved model")
    sub.add_parser("evaluate", parents=[common], help="score a saved model on labeled data")
    sub.add_parser("benchmark", parents=[common], help="repeated 75/25 split protocol")
    p = sub.add_parser("sweep", parents=[common], help="positive-class target sweep")
    p.add_argument("--rho-grid", default="0,62.5:85:2.5",
                   help="start:stop:step or comma list, percent or fraction")
    sub.add_parser("importance", parents=[common], help="SIM/MIM of a saved model")
    p = sub.add_parser("heatmap", parents=[common], help="membership grid of a 2-feature model")
    p.add_argument("--resolution", type=int, default=200)
    p.add_argument("--class-index", type=int, default=0,
                   help="position of the class whose probability is exported")
    sub.add_parser("baseline", parents=[common], help="greedy axis-aligned tree on the protocol")
    return parser


def _need(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required for {args.command}")


def _read(args, need_target: bool = True) -> RawTable:
    _need(args, "data")
    if args.target is None and not Path(args.data).exists():
        args.target = datasets.TARGETS.get(args.data)
    if need_target:
        _need(args, "target")
    cats = [c for c in args.categorical.split(",") if c]
    path = Path(args.data)
    if not path.exists() and args.data in datasets.TARGETS:
        path = datasets.bundled_path(args.data)
    return ingest_csv(path, args.target, categorical=cats)


def _config(args, labels=None) -> TrainConfig:
    cfg = TrainConfig(depth=args.depth, gamma=args.gamma, n_starts=args.starts, seed=args.seed,
                      enforce_coverage=not args.no_coverage)
    if args.no_continuation:
        cfg = replace(cfg, gamma_schedule=None)
    if args.no_recentre:
        cfg = replace(cfg, recentre_initial=False)
    if args.rho:
        targets = {}
        for label, value in parse_rho(args.rho).items():
            probe = RawTable([], {}, None, [label])
            try:
                k = int(encode_labels(probe, labels)[0])
            except DataError:
                raise UsageError(f"--rho names unknown class {label!r}") from None
            targets[k] = value
        cfg = replace(cfg, rho_targets=targets)
    return cfg


def _emit(args, text: str):
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _write_trace(path, diagnostics):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["start", "iteration", "objective", "step", "max_violation"])
    for d in diagnostics:
        for row in d["trace"]:
            w.writerow([row[0], row[1]] + [repr(float(v)) for v in row[2:]])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _features(table: RawTable, model) -> np.ndarray:
    if model.scaling is not None:
        return transform(table, model.scaling)
    X = np.column_stack([np.asarray(table.columns[n], dtype=float) for n in table.names])
    return np.clip(X, 0.0, 1.0)


def cmd_train(args) -> int:
    table = _read(args)
    if args.regression:
        d_tr, _, spec = encode_and_scale(table, regression=True)
        model = train_orrt(d_tr, _config(args), scaling=spec)
    else:
        labels = class_labels_of(table)
        d_tr, _, spec = encode_and_scale(table, class_labels=labels)
        model = train(d_tr, _config(args, labels), labels, spec)
    if args.model:
        model.save(args.model)
    if args.trace:
        _write_trace(args.trace, model.diagnostics)
    print(f"training objective: {model.objective_value!r}")
    if getattr(model, "constraints_unmet", False):
        print(f"warning: performance targets not met, violations {model.violations}",
              file=sys.stderr)
    return EXIT_OK


def cmd_predict(args) -> int:
    _need(args, "model")
    model = load_model(args.model)
    table = _read(args, need_target=False)
    X = _features(table, model)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if isinstance(model, RegressionModel):
        w.writerow(["prediction"])
        for v in model.predict(X):
            w.writerow([repr(float(v))])
    else:
        proba = model.predict_proba(X)
        w.writerow(["prediction"] + [f"p_{lv}" for lv in model.class_labels])
        for lab, row in zip(model.labels_of(model.predict(X)), proba):
            w.writerow([lab] + [repr(float(v)) for v in row])
    _emit(args, buf.getvalue())
    return EXIT_OK


def _positive(args, labels) -> int | None:
    if args.positive_class is None:
        return None
    probe = RawTable([], {}, None, [args.positive_class])
    try:
        return int(encode_labels(probe, labels)[0])
    except DataError:
        raise UsageError(f"--positive-class {args.positive_class!r} is not a class") from None


def cmd_evaluate(args) -> int:
    _need(args, "model")
    model = load_model(args.model)
    if isinstance(model, RegressionModel):
        table = _read(args)
        y = np.array([float(v) for v in table.target])
        resid = model.predict(_features(table, model)) - y
        print(f"mse: {float(np.mean(resid ** 2))!r}")
        return EXIT_OK
    table = _read(args)
    data = Dataset(_features(table, model), encode_labels(table, model.class_labels),
                   model.n_classes)
    m = evaluate(model, data, _positive(args, model.class_labels))
    print(f"accuracy: {m.accuracy!r}")
    for lv, r in zip(model.class_labels, m.recall):
        print(f"recall[{lv}]: {'undefined' if np.isnan(r) else repr(float(r))}")
    if m.tpr is not None:
        print(f"TPR: {m.tpr!r}\nTNR: {m.tnr!r}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    table = _read(args)
    labels = class_labels_of(table)
    report = benchmark(table, _config(args, labels), args.reps,
                       positive=args.positive_class)
    _emit(args, report.to_csv())
    if args.out:
        for r, acc in enumerate(report.accuracies):
            print(f"repetition {r}: test accuracy {acc:.4f}")
    print(f"mean test accuracy: {report.mean_accuracy!r}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    _need(args, "positive_class")
    table = _read(args)
    labels = class_labels_of(table)
    cfg = _config(args, labels)
    report = rho_sweep(table, cfg, args.positive_class, parse_grid(args.rho_grid), args.reps)
    _emit(args, report.to_csv())
    print(report.fit_summary(), file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def cmd_importance(args) -> int:
    _need(args, "model")
    _emit(args, importance(load_model(args.model)).to_csv())
    return EXIT_OK


def cmd_heatmap(args) -> int:
    _need(args, "model")
    model = load_model(args.model)
    _emit(args, grid_to_csv(heatmap_grid(model, resolution=args.resolution,
                                         class_position=args.class_index)))
    return EXIT_OK


def cmd_baseline(args) -> int:
    table = _read(args)
    labels = class_labels_of(table)
    pos = _positive(args, labels)
    splits = repeated_split(encode_labels(table, labels), 0.75, args.reps, args.seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["repetition", "train_accuracy", "test_accuracy", "leaves"])
    accs = []
    for r, (tr, te) in enumerate(splits):
        d_tr, d_te, _ = encode_and_scale(table.take(tr), table.take(te), labels)
        rep = greedy_baseline(d_tr, d_te, args.depth, pos)
        accs.append(rep.test.accuracy)
        w.writerow([r, repr(rep.train.accuracy), repr(rep.test.accuracy), rep.tree.n_leaves])
    _emit(args, buf.getvalue())
    print(f"mean test accuracy: {sum(accs) / len(accs)!r}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "predict": cmd_predict, "evaluate": cmd_evaluate,
            "benchmark": cmd_benchmark, "sweep": cmd_sweep, "importance": cmd_importance,
            "heatmap": cmd_heatmap, "baseline": cmd_baseline}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (InfeasibleTopologyError, UnsupportedDimensionality) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, InfeasibleTopologyError) else EXIT_DATA
    except (DataError, KeyError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalFailure as exc:
        print(f"numerical failure: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
