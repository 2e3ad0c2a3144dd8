"""Bundled benchmark tables.

Iris and Wine come from the UCI repository copies shipped with
scikit-learn; Pima Indians Diabetes from the KEEL repository.  Seeds is not
bundled: point ``ORCT_SEEDS_CSV`` at a local copy (header row, target column
``variety``) to use :func:`load_seeds`.
"""
from __future__ import annotations

import os
from importlib import resources
from pathlib import Path

from .data import DataError, RawTable, ingest_csv

TARGETS = {"iris": "species", "wine": "cultivar", "pima": "outcome"}
SEEDS_ENV = "ORCT_SEEDS_CSV"


def bundled_path(name: str) -> Path:
    if name not in TARGETS:
        raise KeyError(f"no bundled table {name!r}; choose from {sorted(TARGETS)}")
    return Path(str(resources.files("orct") / "bundled" / f"{name}.csv"))


def load(name: str) -> RawTable:
    return ingest_csv(bundled_path(name), TARGETS[name])


def load_iris() -> RawTable:
    """150 flowers, 4 measurements, 3 species."""
    return load("iris")


def load_wine() -> RawTable:
    """178 wines, 13 chemical measurements, 3 cultivars."""
    return load("wine")


def load_pima() -> RawTable:
    """768 patients, 8 measurements; ``outcome`` is 1 for diabetics."""
    return load("pima")


def seeds_available() -> bool:
    path = os.environ.get(SEEDS_ENV)
    return bool(path) and Path(path).is_file()


def load_seeds() -> RawTable:
    """210 wheat kernels, 7 measurements, 3 varieties, from ``$ORCT_SEEDS_CSV``."""
    if not seeds_available():
        raise DataError(f"Seeds is not bundled; set {SEEDS_ENV} to a local CSV copy")
    return ingest_csv(os.environ[SEEDS_ENV], os.environ.get("ORCT_SEEDS_TARGET", "variety"))
