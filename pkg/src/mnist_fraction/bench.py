"""Repeated-shuffle benchmark of the classical classifiers.

Each repeat reorders the training set with its own seed, fits, and scores
the fixed test split. Results serialize to byte-stable JSON.
"""
from __future__ import annotations

import json
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .classifiers.spec import REFERENCE_ROWS, ModelSpec, find_row
from .dataset import LabeledDataset, SplitIndices, largest_remainder
from .fraction_gen import derive_seed

# desk-scale acceptance floors, keyed by the row's model spec
DESK_THRESHOLDS = [
    (ModelSpec("KNeighbors", {"weights": "uniform", "n_neighbors": 5, "p": 1}), 0.93),
    (ModelSpec("GaussianNB", {"priors": "uniform"}), 0.55),
    (ModelSpec("LogisticRegression", {"C": 1.0, "penalty": "l2"}), 0.85),
    (ModelSpec("DecisionTree", {"criterion": "entropy", "max_depth": 50, "splitter": "best"}), 0.80),
]
FULL_TOLERANCE = 0.03


def desk_specs() -> list[ModelSpec]:
    return [s for s, _ in DESK_THRESHOLDS]


def reference_specs() -> list[ModelSpec]:
    return [row.spec for row in REFERENCE_ROWS]


@dataclass
class BenchConfig:
    models: list[ModelSpec]
    repeats: int = 5
    master_seed: int = 0
    cap_train: int | None = None
    cap_test: int | None = None
    n_jobs: int = 1

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if not self.models:
            raise ValueError("no models to benchmark")

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        models = d.get("models", "desk")
        if models == "desk":
            specs = desk_specs()
        elif models == "reference":
            specs = reference_specs()
        else:
            specs = [ModelSpec.from_dict(m) for m in models]
        return cls(models=specs, repeats=int(d.get("repeats", 5)),
                   master_seed=int(d.get("seed", 0)), cap_train=d.get("cap_train"),
                   cap_test=d.get("cap_test"), n_jobs=int(d.get("jobs", 1)))


@dataclass
class BenchRow:
    spec: ModelSpec
    accuracies: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        # population standard deviation over repeats
        return float(np.std(self.accuracies))


@dataclass
class BenchResult:
    rows: list[BenchRow]
    fingerprint: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = []
        for r in self.rows:
            row_ref = find_row(r.spec)
            out.append({
                "spec": r.spec.to_dict(),
                "accuracies": r.accuracies,
                "mean": r.mean,
                "std": r.std,
                "reference_acc": row_ref.fraction_acc if row_ref else None,
            })
        return {"rows": out, "fingerprint": self.fingerprint}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def table(self) -> str:
        header = ("Classifier", "Parameters", "Ours (mean)", "Std", "Reference", "Delta")
        lines = []
        for r in self.rows:
            row_ref = find_row(r.spec)
            name = row_ref.classifier if row_ref else r.spec.kind
            params = row_ref.parameters if row_ref else ", ".join(
                f"{k}={v}" for k, v in sorted(r.spec.params.items()))
            ref = f"{row_ref.fraction_acc:.3f}" if row_ref else "-"
            delta = f"{r.mean - row_ref.fraction_acc:+.3f}" if row_ref else "-"
            lines.append((name, params, f"{r.mean:.3f}", f"{r.std:.3f}", ref, delta))
        widths = [max(len(str(x)) for x in col) for col in zip(header, *lines)]
        fmt = lambda cells: "  ".join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip()
        rule = "  ".join("-" * w for w in widths)
        return "\n".join([fmt(header), rule, *(fmt(l) for l in lines)]) + "\n"


def cap_indices(indices, labels, cap: int | None, seed: int) -> np.ndarray:
    """A class-stratified subset of at most ``cap`` indices (sorted)."""
    indices = np.asarray(indices, dtype=np.int64)
    if cap is None or indices.size <= cap:
        return indices
    sub = np.asarray(labels)[indices]
    classes, counts = np.unique(sub, return_counts=True)
    if cap < classes.size:
        raise ValueError(f"cap {cap} is smaller than the number of classes")
    quota = largest_remainder(cap, counts / counts.sum())
    rng = np.random.default_rng([seed, 0xCA9])
    keep = []
    for c, q in zip(classes, quota):
        members = indices[sub == c]
        keep.append(members[rng.permutation(members.size)[:q]])
    return np.sort(np.concatenate(keep))


def _run_cell(args):
    spec, seed, X_train, y_train, X_test, y_test = args
    order = np.random.default_rng(seed).permutation(len(y_train))
    est = spec.build().fit(X_train[order], y_train[order])
    return float(np.mean(est.predict(X_test) == y_test))


def run_benchmark(cfg: BenchConfig, data: LabeledDataset, split: SplitIndices) -> BenchResult:
    train = cap_indices(split.train, data.labels, cfg.cap_train, cfg.master_seed)
    test = cap_indices(split.test, data.labels, cfg.cap_test, cfg.master_seed + 1)
    X = data.features
    y = data.labels.astype(np.int64)
    X_train, y_train, X_test, y_test = X[train], y[train], X[test], y[test]
    seeds = [derive_seed(cfg.master_seed, r) for r in range(cfg.repeats)]
    cells = [(spec, s, X_train, y_train, X_test, y_test) for spec in cfg.models for s in seeds]
    if cfg.n_jobs > 1:
        with ProcessPoolExecutor(cfg.n_jobs) as pool:
            accs = list(pool.map(_run_cell, cells))
    else:
        accs = [_run_cell(c) for c in cells]
    rows = [BenchRow(spec, accs[i * cfg.repeats:(i + 1) * cfg.repeats])
            for i, spec in enumerate(cfg.models)]
    fingerprint = {
        "master_seed": cfg.master_seed,
        "repeat_seeds": seeds,
        "repeats": cfg.repeats,
        "cap_train": cfg.cap_train,
        "cap_test": cfg.cap_test,
        "n_train": int(train.size),
        "n_test": int(test.size),
        "split_seed": split.seed,
        "versions": {"mnist_fraction": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
    }
    return BenchResult(rows, fingerprint)


def check_result(result: BenchResult, mode: str = "desk") -> list[str]:
    """Failed acceptance checks; empty when everything passes.

    ``desk`` applies the fixed desk-scale floors to whichever of those rows
    were run. ``full`` requires every reference row to land within 0.03 of the
    published accuracy.
    """
    failures = []
    if mode == "desk":
        for spec, floor in DESK_THRESHOLDS:
            for r in result.rows:
                if r.spec.kind == spec.kind and r.spec.params == spec.params and r.mean < floor:
                    failures.append(f"{spec.label()}: {r.mean:.4f} < {floor}")
    elif mode == "full":
        for r in result.rows:
            row_ref = find_row(r.spec)
            if row_ref and abs(r.mean - row_ref.fraction_acc) > FULL_TOLERANCE:
                failures.append(f"{r.spec.label()}: {r.mean:.4f} vs {row_ref.fraction_acc}")
    else:
        raise ValueError(f"unknown check mode {mode!r}")
    return failures
