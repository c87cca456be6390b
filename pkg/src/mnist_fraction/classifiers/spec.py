"""Declarative model specs, the benchmark table rows, and model files."""
from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .linear import LogisticRegression, PassiveAggressiveClassifier, Perceptron, SGDClassifier
from .naive_bayes import GaussianNB
from .neighbors import KNeighborsClassifier
from .tree import DecisionTreeClassifier, RandomForestClassifier

MODEL_FORMAT = "mnist-fraction-model"
MODEL_VERSION = 1

ESTIMATORS = {
    "DecisionTree": DecisionTreeClassifier,
    "RandomForest": RandomForestClassifier,
    "KNeighbors": KNeighborsClassifier,
    "GaussianNB": GaussianNB,
    "SGDClassifier": SGDClassifier,
    "Perceptron": Perceptron,
    "PassiveAggressive": PassiveAggressiveClassifier,
    "LogisticRegression": LogisticRegression,
}
# estimators that take a seed
_SEEDED = {"DecisionTree", "RandomForest", "SGDClassifier", "Perceptron",
           "PassiveAggressive", "LogisticRegression"}


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ESTIMATORS:
            raise ValueError(f"unknown model kind {self.kind!r}")

    def build(self, seed: int | None = None):
        params = dict(self.params)
        if self.kind in _SEEDED:
            params["random_state"] = self.seed if seed is None else seed
        return ESTIMATORS[self.kind](**params)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(kind=d["kind"], params=dict(d.get("params", {})), seed=int(d.get("seed", 0)))

    def label(self) -> str:
        return f"{self.kind}({', '.join(f'{k}={v}' for k, v in sorted(self.params.items()))})"


def fit(spec: ModelSpec, X, y):
    """Build and fit the estimator a spec describes."""
    return spec.build().fit(X, y)


@dataclass(frozen=True)
class ReferenceRow:
    classifier: str
    parameters: str
    spec: ModelSpec
    fraction_acc: float
    mnist_acc: float | None


def _rows():
    dt = lambda c, d, s: ModelSpec("DecisionTree", {"criterion": c, "max_depth": d, "splitter": s})
    rf = lambda c, d: ModelSpec("RandomForest", {"criterion": c, "max_depth": d, "n_estimators": 100})
    kn = lambda w, k, p: ModelSpec("KNeighbors", {"weights": w, "n_neighbors": k, "p": p})
    sgd = lambda loss, pen: ModelSpec("SGDClassifier", {"loss": loss, "penalty": pen})
    return [
        ReferenceRow("DecisionTree", "crit.=entropy, m-d.=10, splt.=best", dt("entropy", 10, "best"), 0.859, 0.873),
        ReferenceRow("DecisionTree", "crit.=entropy, m-d.=10, splt.=random", dt("entropy", 10, "random"), 0.843, 0.861),
        ReferenceRow("DecisionTree", "crit.=entropy, m-d.=50, splt.=best", dt("entropy", 50, "best"), 0.876, 0.886),
        ReferenceRow("DecisionTree", "crit.=gini, m-d.=50, splt.=best", dt("gini", 50, "best"), 0.860, 0.877),
        ReferenceRow("DecisionTree", "crit.=gini, m-d.=10, splt.=random", dt("gini", 10, "random"), 0.827, 0.853),
        ReferenceRow("DecisionTree", "crit.=gini, m-d.=50, splt.=random", dt("gini", 50, "random"), 0.861, 0.873),
        ReferenceRow("RandomForest", "crit.=entropy, m-d.=10", rf("entropy", 10), 0.948, 0.950),
        ReferenceRow("RandomForest", "crit.=entropy, m-d.=50", rf("entropy", 50), 0.967, 0.969),
        ReferenceRow("RandomForest", "crit.=gini, m-d.=10", rf("gini", 10), 0.938, 0.949),
        ReferenceRow("RandomForest", "crit.=gini, m-d.=50", rf("gini", 50), 0.967, 0.968),
        # the MNIST cell of this row is illegible in the source table
        ReferenceRow("GaussianNB", "priors = 1 / 11", ModelSpec("GaussianNB", {"priors": "uniform"}), 0.641, None),
        ReferenceRow("KNeighbors", "wt.=uniform, n-neighbors=5, p=1", kn("uniform", 5, 1), 0.967, 0.957),
        ReferenceRow("KNeighbors", "wt.=uniform, n-neighbors=9, p=2", kn("uniform", 9, 2), 0.970, 0.943),
        ReferenceRow("KNeighbors", "wt.=distance, n-neighbors=5, p=1", kn("distance", 5, 1), 0.968, 0.959),
        ReferenceRow("KNeighbors", "wt.=distance, n-neighbors=9, p=2", kn("distance", 9, 2), 0.971, 0.944),
        ReferenceRow("Perceptron", "penalty=l1", ModelSpec("Perceptron", {"penalty": "l1"}), 0.850, 0.887),
        ReferenceRow("Perceptron", "penalty=l2", ModelSpec("Perceptron", {"penalty": "l2"}), 0.837, 0.845),
        ReferenceRow("Perceptron", "penalty=elasticnet", ModelSpec("Perceptron", {"penalty": "elasticnet"}), 0.836, 0.845),
        ReferenceRow("PassiveAggr.", "C=1", ModelSpec("PassiveAggressive", {"C": 1.0}), 0.867, 0.877),
        ReferenceRow("PassiveAggr.", "C=10", ModelSpec("PassiveAggressive", {"C": 10.0}), 0.867, 0.875),
        ReferenceRow("PassiveAggr.", "C=100", ModelSpec("PassiveAggressive", {"C": 100.0}), 0.867, 0.880),
        ReferenceRow("SGDClassifier", "loss=hinge, penalty=l2", sgd("hinge", "l2"), 0.922, 0.914),
        ReferenceRow("SGDClassifier", "loss=perceptron, penalty=l1", sgd("perceptron", "l1"), 0.886, 0.912),
        ReferenceRow("SGDClassifier", "loss=modified-huber, penalty=l1", sgd("modified_huber", "l1"), 0.899, 0.910),
        ReferenceRow("SGDClassifier", "loss=modified-huber, penalty=l2", sgd("modified_huber", "l2"), 0.917, 0.913),
        ReferenceRow("SGDClassifier", "loss=log-loss, penalty=elasticnet", sgd("log", "elasticnet"), 0.921, 0.912),
        ReferenceRow("SGDClassifier", "loss=hinge, penalty=elasticnet", sgd("hinge", "elasticnet"), 0.915, 0.913),
        ReferenceRow("LogisticReg.", "C=1, penalty=l2", ModelSpec("LogisticRegression", {"C": 1.0, "penalty": "l2"}), 0.929, 0.917),
        ReferenceRow("LogisticReg.", "C=10, penalty=l2", ModelSpec("LogisticRegression", {"C": 10.0, "penalty": "l2"}), 0.928, 0.916),
        ReferenceRow("LogisticReg.", "C=1, penalty=l1", ModelSpec("LogisticRegression", {"C": 1.0, "penalty": "l1"}), 0.929, 0.917),
        ReferenceRow("LogisticReg.", "C=10, penalty=l1", ModelSpec("LogisticRegression", {"C": 10.0, "penalty": "l1"}), 0.928, 0.909),
    ]


REFERENCE_ROWS: list[ReferenceRow] = _rows()


def find_row(spec: ModelSpec) -> ReferenceRow | None:
    for row in REFERENCE_ROWS:
        if row.spec.kind == spec.kind and row.spec.params == spec.params:
            return row
    return None


# -- persistence -----------------------------------------------------------

def _fitted_state(est) -> dict:
    state = {}
    for name, value in vars(est).items():
        if not name.endswith("_") or name.startswith("__"):
            continue
        if name == "estimators_":
            continue
        state[name] = value
    # kNN keeps its training store in private attributes
    for name in ("_X", "_y", "_n_classes"):
        if hasattr(est, name):
            state[name] = getattr(est, name)
    return state


def save_model(path, spec: ModelSpec, est) -> None:
    """Write an ``.npz`` container holding the spec, hyperparameters and fitted arrays."""
    arrays = {}
    scalars = {}
    members = [("", est)] + [(f"est{i}/", t) for i, t in enumerate(getattr(est, "estimators_", []))]
    for prefix, obj in members:
        for name, value in _fitted_state(obj).items():
            if isinstance(value, np.ndarray):
                arrays[prefix + name] = value
            elif isinstance(value, list) and value and isinstance(value[0], (int, float)):
                arrays[prefix + name] = np.asarray(value)
            else:
                scalars[prefix + name] = value if not isinstance(value, np.generic) else value.item()
    meta = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "spec": spec.to_dict(),
        "estimator_params": {k: v for k, v in est.get_params().items()},
        "n_estimators": len(getattr(est, "estimators_", [])),
        "scalars": scalars,
    }
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
             **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_model(path):
    """Inverse of :func:`save_model`; returns ``(spec, estimator)``."""
    with np.load(path, allow_pickle=False) as z:
        if "__meta__" not in z.files:
            raise ValueError(f"{path} is not a model file")
        meta = json.loads(bytes(z["__meta__"]).decode())
        if meta.get("format") != MODEL_FORMAT:
            raise ValueError(f"{path} is not a model file")
        if meta.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {meta.get('version')}")
        spec = ModelSpec.from_dict(meta["spec"])
        cls = ESTIMATORS[spec.kind]
        est = cls(**meta["estimator_params"])
        trees = [DecisionTreeClassifier() for _ in range(meta["n_estimators"])]
        for key in z.files:
            if key == "__meta__":
                continue
            _assign(est, trees, key, z[key])
        for key, value in meta["scalars"].items():
            _assign(est, trees, key, value)
        if trees:
            est.estimators_ = trees
    return spec, est


def _assign(est, trees, key, value):
    if key.startswith("est") and "/" in key:
        head, name = key.split("/", 1)
        setattr(trees[int(head[3:])], name, value)
    else:
        setattr(est, key, value)
