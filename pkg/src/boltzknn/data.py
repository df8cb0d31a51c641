"""Dataset ingestion, standardisation, splits and class coalescing.

Labels are remapped to contiguous 1..G in first-seen order at load time;
the mapping and every subsequent transform are recorded in the dataset's
provenance so outputs can state exactly how they were produced.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError

__all__ = [
    "Dataset",
    "SplitSpec",
    "StandardizeTransform",
    "load_csv",
    "load_ripley",
    "standardize",
    "split",
    "coalesce_classes",
    "GLASS_COALESCE_MAP",
]

# Four-class grouping of the forensic glass types: window glasses kept
# apart, the three non-window types merged.
GLASS_COALESCE_MAP = {"WinF": "WinF", "WinNF": "WinNF", "Veh": "Veh",
                      "Con": "Other", "Tabl": "Other", "Head": "Other"}


@dataclass
class Dataset:
    X: np.ndarray                 # (n, p) float covariates
    y: np.ndarray                 # (n,) int labels in 1..G
    class_names: list[str]        # class_names[g-1] is the original label of class g
    covariate_names: list[str]
    provenance: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def G(self) -> int:
        return len(self.class_names)

    def class_sizes(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.G + 1)[1:]

    def to_csv(self, path) -> None:
        path = Path(path)
        df = pd.DataFrame(self.X, columns=self.covariate_names)
        df["label"] = [self.class_names[g - 1] for g in self.y]
        df.to_csv(path, index=False)
        with open(path.with_suffix(path.suffix + ".provenance.json"), "w") as f:
            json.dump({"class_names": self.class_names,
                       "provenance": self.provenance}, f, indent=2)


@dataclass
class SplitSpec:
    train_size: int
    seed: int = 0
    stratified: bool = False


@dataclass
class StandardizeTransform:
    mean: np.ndarray
    scale: np.ndarray   # population (ddof=0) standard deviation

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale


def _from_frame(df: pd.DataFrame, label_column: str, source: str) -> Dataset:
    if label_column not in df.columns:
        raise DataError(f"label column {label_column!r} not found in {source}")
    if len(df) == 0:
        raise DataError(f"empty dataset: {source}")
    labels_raw = df[label_column]
    cov = df.drop(columns=[label_column])
    if cov.shape[1] < 1:
        raise DataError("no covariate columns")
    try:
        X = cov.to_numpy(dtype=float)
    except (ValueError, TypeError) as exc:
        raise DataError(f"non-numeric covariate in {source}: {exc}") from exc
    if np.any(pd.isna(labels_raw)) or not np.all(np.isfinite(X)):
        raise DataError(f"missing or non-finite values in {source}")

    class_names: list[str] = []
    index: dict[str, int] = {}
    y = np.empty(len(df), dtype=np.int64)
    for i, lab in enumerate(labels_raw.astype(str)):
        if lab not in index:
            index[lab] = len(class_names) + 1
            class_names.append(lab)
        y[i] = index[lab]
    return Dataset(X=X, y=y, class_names=class_names,
                   covariate_names=list(cov.columns),
                   provenance={"source": source,
                               "label_mapping": dict(index),
                               "transforms": []})


def load_csv(path, label_column: str = "label", sep: str = ",") -> Dataset:
    """Load a delimited file with a header; labels remapped to 1..G in
    first-seen order."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    try:
        df = pd.read_csv(path, sep=sep)
    except Exception as exc:
        raise DataError(f"failed to parse {path}: {exc}") from exc
    return _from_frame(df, label_column, str(path))


def load_ripley(path, label_column: str | None = None) -> Dataset:
    """Load a whitespace-separated ``xs ys yc`` style file; the label
    column defaults to the last one."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    try:
        df = pd.read_csv(path, sep=r"\s+")
    except Exception as exc:
        raise DataError(f"failed to parse {path}: {exc}") from exc
    if label_column is None:
        label_column = df.columns[-1]
    return _from_frame(df, label_column, str(path))


def standardize(ds: Dataset):
    """Zero-mean unit-variance rescaling per column (population sd).

    Returns (dataset, transform); the same transform must be applied to
    any test or query covariates.
    """
    mean = ds.X.mean(axis=0)
    scale = ds.X.std(axis=0)  # ddof=0
    bad = np.flatnonzero(scale == 0)
    if bad.size:
        raise DataError(f"constant covariate column(s): "
                        f"{[ds.covariate_names[j] for j in bad]}")
    t = StandardizeTransform(mean=mean, scale=scale)
    prov = dict(ds.provenance)
    prov["transforms"] = prov.get("transforms", []) + [
        {"standardize": {"mean": mean.tolist(), "scale": scale.tolist()}}]
    return replace(ds, X=t.apply(ds.X), provenance=prov), t


def split(ds: Dataset, spec: SplitSpec):
    """Deterministic random train/test split; the stratified option keeps
    per-class train counts within 1 of exact proportionality."""
    if not 0 < spec.train_size < ds.n:
        raise ConfigError(f"train_size must be in (0, {ds.n})")
    rng = np.random.default_rng(spec.seed)
    if spec.stratified:
        take: list[np.ndarray] = []
        targets = ds.class_sizes() * spec.train_size / ds.n
        counts = np.floor(targets).astype(int)
        # distribute the remainder by largest fractional part
        short = spec.train_size - counts.sum()
        for g in np.argsort(-(targets - counts))[:short]:
            counts[g] += 1
        for g in range(1, ds.G + 1):
            members = np.flatnonzero(ds.y == g)
            take.append(rng.permutation(members)[:counts[g - 1]])
        train_idx = np.sort(np.concatenate(take))
    else:
        train_idx = np.sort(rng.permutation(ds.n)[:spec.train_size])
    mask = np.zeros(ds.n, dtype=bool)
    mask[train_idx] = True

    def subset(m, role):
        prov = dict(ds.provenance)
        prov["transforms"] = prov.get("transforms", []) + [
            {"split": {"train_size": spec.train_size, "seed": spec.seed,
                       "stratified": spec.stratified, "role": role}}]
        return replace(ds, X=ds.X[m], y=ds.y[m], provenance=prov)

    return subset(mask, "train"), subset(~mask, "test")


def coalesce_classes(ds: Dataset, mapping: dict) -> Dataset:
    """Merge classes via a total mapping from old class names to new names."""
    missing = [c for c in ds.class_names if c not in mapping]
    if missing:
        raise ConfigError(f"mapping does not cover classes: {missing}")
    new_names: list[str] = []
    index: dict[str, int] = {}
    y = np.empty(ds.n, dtype=np.int64)
    for i in range(ds.n):
        new = str(mapping[ds.class_names[ds.y[i] - 1]])
        if new not in index:
            index[new] = len(new_names) + 1
            new_names.append(new)
        y[i] = index[new]
    prov = dict(ds.provenance)
    prov["transforms"] = prov.get("transforms", []) + [
        {"coalesce": {str(k): str(v) for k, v in mapping.items()}}]
    return replace(ds, y=y, class_names=new_names, provenance=prov)
