"""A small convolutional network with hand-written backpropagation.

Layout is NHWC throughout. The network is::

    input HxWx1
    -> [conv 3x3 same -> ReLU -> maxpool 2x2] x 3
    -> flatten -> dropout -> dense -> ReLU -> dense -> ReLU -> dense -> softmax

Loss is mean cross-entropy plus ``l2_lambda * sum(W**2)`` over conv and
dense weights (biases excluded). Parameters are plain dicts of arrays.
"""
from __future__ import annotations

import io
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .dataset import NO_AUGMENT, AugmentParams, augment_batch

CHECKPOINT_FORMAT = "mnist-fraction-cnn"
CHECKPOINT_VERSION = 1


class ShapeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class CnnArch:
    input_size: int = 56
    filters: tuple[int, ...] = (16, 32, 64)
    dense: tuple[int, ...] = (128, 64)
    n_classes: int = 11
    dropout: float = 0.5
    l2_lambda: float = 1e-4
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "filters", tuple(self.filters))
        object.__setattr__(self, "dense", tuple(self.dense))
        if self.input_size % (2 ** len(self.filters)):
            raise ValueError("input size must halve cleanly at every pooling stage")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.activation not in ("relu", "identity"):
            raise ValueError("activation must be 'relu' or 'identity'")

    @property
    def spatial_sizes(self) -> list[int]:
        return [self.input_size >> (i + 1) for i in range(len(self.filters))]

    @property
    def flat_size(self) -> int:
        return self.spatial_sizes[-1] ** 2 * self.filters[-1]

    def shapes(self) -> dict[str, tuple[int, ...]]:
        out = {}
        c_in = 1
        for i, c in enumerate(self.filters):
            out[f"conv{i}_W"] = (3, 3, c_in, c)
            out[f"conv{i}_b"] = (c,)
            c_in = c
        widths = [self.flat_size, *self.dense, self.n_classes]
        for i in range(len(widths) - 1):
            out[f"dense{i}_W"] = (widths[i], widths[i + 1])
            out[f"dense{i}_b"] = (widths[i + 1],)
        return out


REDUCED_ARCH = CnnArch(input_size=16, filters=(8, 8, 8), dense=(16, 16))


@dataclass(frozen=True)
class TrainHyper:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 15
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("invalid training hyperparameters")


def glorot_limit(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(arch: CnnArch, seed: int = 0, dtype=np.float64) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in arch.shapes().items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape, dtype=dtype)
            continue
        if len(shape) == 4:  # kh, kw, c_in, c_out
            receptive = shape[0] * shape[1]
            fan_in, fan_out = receptive * shape[2], receptive * shape[3]
        else:
            fan_in, fan_out = shape
        lim = glorot_limit(fan_in, fan_out)
        params[name] = rng.uniform(-lim, lim, size=shape).astype(dtype)
    return params


# -- layers ----------------------------------------------------------------

def _im2col(x):
    B, H, W, C = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # B,H,W,C,3,3
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(B * H * W, 9 * C)


def conv_forward(x, Wt, b):
    B, H, W, _ = x.shape
    cols = _im2col(x)
    out = cols @ Wt.reshape(-1, Wt.shape[-1]) + b
    return out.reshape(B, H, W, -1), cols


def conv_backward(dout, cols, x_shape, Wt, need_dx: bool = True):
    B, H, W, C = x_shape
    d2 = dout.reshape(-1, dout.shape[-1])
    dW = (cols.T @ d2).reshape(Wt.shape)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dW, db
    dcols = (d2 @ Wt.reshape(-1, Wt.shape[-1]).T).reshape(B, H, W, 3, 3, C)
    dxp = np.zeros((B, H + 2, W + 2, C), dtype=dout.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, i:i + H, j:j + W, :] += dcols[:, :, :, i, j, :]
    return dxp[:, 1:-1, 1:-1, :], dW, db


def _quadrants(x):
    return x[:, 0::2, 0::2], x[:, 0::2, 1::2], x[:, 1::2, 0::2], x[:, 1::2, 1::2]


def pool_forward(x):
    """2x2 max pooling; the cache holds one-hot masks of the first maximum."""
    q = _quadrants(x)
    out = np.maximum(np.maximum(q[0], q[1]), np.maximum(q[2], q[3]))
    taken = q[0] == out
    masks = [taken]
    for quad in q[1:3]:
        m = (quad == out) & ~taken
        masks.append(m)
        taken = taken | m
    masks.append(~taken)
    return out, masks


def pool_backward(dout, masks, x_shape):
    dx = np.zeros(x_shape, dtype=dout.dtype)
    for view, m in zip(_quadrants(dx), masks):
        np.multiply(dout, m, out=view)
    return dx


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _act(arch, z):
    return np.maximum(z, 0) if arch.activation == "relu" else z


def _act_grad(arch, z, d):
    return d * (z > 0) if arch.activation == "relu" else d


def _check_batch(arch, batch):
    batch = np.asarray(batch)
    if batch.ndim == 2 and batch.shape[1] == arch.input_size ** 2:
        batch = batch.reshape(-1, arch.input_size, arch.input_size, 1)
    elif batch.ndim == 3:
        batch = batch[..., None]
    if batch.ndim != 4 or batch.shape[1:] != (arch.input_size, arch.input_size, 1):
        raise ShapeMismatch(f"expected [B,{arch.input_size},{arch.input_size},1], got {batch.shape}")
    return batch


def forward(params, arch: CnnArch, batch, train_mode: bool = False, rng=None):
    """Return ``(logits, probabilities, cache)``.

    Dropout is applied only when ``train_mode`` is true (inverted scaling);
    evaluation never touches ``rng``.
    """
    x = _check_batch(arch, batch)
    dtype = params["conv0_W"].dtype
    x = x.astype(dtype, copy=False)
    cache = {"conv": [], "dense": []}
    h = x
    for i in range(len(arch.filters)):
        z, cols = conv_forward(h, params[f"conv{i}_W"], params[f"conv{i}_b"])
        a = _act(arch, z)
        p, arg = pool_forward(a)
        cache["conv"].append((h.shape, cols, z, arg))
        h = p
    flat_shape = h.shape
    h = h.reshape(len(h), -1)
    mask = None
    if train_mode and arch.dropout > 0:
        if rng is None:
            raise ValueError("train_mode dropout needs an rng")
        keep = 1.0 - arch.dropout
        mask = (rng.random(h.shape) < keep).astype(dtype) / keep
        h = h * mask
    cache["flat"] = (flat_shape, mask)
    n_dense = len(arch.dense) + 1
    for i in range(n_dense):
        z = h @ params[f"dense{i}_W"] + params[f"dense{i}_b"]
        cache["dense"].append((h, z))
        h = _act(arch, z) if i < n_dense - 1 else z
    logits = h
    return logits, softmax(logits), cache


def l2_term(params):
    return sum(np.sum(v * v) for k, v in params.items() if k.endswith("_W"))


def _loss_from_logits(params, arch, logits, labels):
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return -log_probs[np.arange(len(labels)), labels].mean() + arch.l2_lambda * l2_term(params)


def loss_only(params, arch: CnnArch, batch, labels, train_mode: bool = False, rng=None) -> float:
    """The loss of :func:`loss_and_grads` without the backward pass.

    Returned as a scalar of the parameter dtype (no rounding to float64).
    """
    labels = np.asarray(labels, dtype=np.int64)
    logits = forward(params, arch, batch, train_mode, rng)[0]
    return _loss_from_logits(params, arch, logits, labels)


def loss_and_grads(params, arch: CnnArch, batch, labels, train_mode: bool = False, rng=None):
    """Mean cross-entropy + L2 penalty, with exact gradients of that graph."""
    labels = np.asarray(labels, dtype=np.int64)
    logits, probs, cache = forward(params, arch, batch, train_mode, rng)
    if labels.shape != (len(logits),):
        raise ShapeMismatch("labels must be [B]")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= arch.n_classes:
        raise ValueError("labels out of range")
    B = len(labels)
    loss = _loss_from_logits(params, arch, logits, labels)

    grads = {}
    d = probs.copy()
    d[np.arange(B), labels] -= 1.0
    d /= B
    n_dense = len(arch.dense) + 1
    for i in reversed(range(n_dense)):
        h_in, z_i = cache["dense"][i]
        if i < n_dense - 1:
            d = _act_grad(arch, z_i, d)
        grads[f"dense{i}_W"] = h_in.T @ d
        grads[f"dense{i}_b"] = d.sum(axis=0)
        d = d @ params[f"dense{i}_W"].T
    flat_shape, mask = cache["flat"]
    if mask is not None:
        d = d * mask
    d = d.reshape(flat_shape)
    for i in reversed(range(len(arch.filters))):
        x_shape, cols, z_i, arg = cache["conv"][i]
        d = pool_backward(d, arg, z_i.shape)
        d = _act_grad(arch, z_i, d)
        d, grads[f"conv{i}_W"], grads[f"conv{i}_b"] = conv_backward(
            d, cols, x_shape, params[f"conv{i}_W"], need_dx=i > 0)
    if arch.l2_lambda:
        for k in grads:
            if k.endswith("_W"):
                grads[k] = grads[k] + 2.0 * arch.l2_lambda * params[k]
    return float(loss), grads


def relative_errors(arch: CnnArch = REDUCED_ARCH, eps: float = 1e-5, seed: int = 0,
                    batch_size: int = 2, dtype=np.float64, dropout_seed: int = 7) -> dict:
    """Per-entry relative error between backprop and central differences.

    Returns ``{name: (errors, analytic, numeric)}`` with flat float64 arrays.
    The error of one entry is ``|a - n| / max(|a|, |n|, 1e-12)``. Runs on a
    random batch with parameters, batch and arithmetic in ``dtype``. Dropout,
    if enabled, reuses one mask for every evaluation so the differentiated
    function is fixed.
    """
    dtype = np.dtype(dtype)
    rng = np.random.default_rng(seed)
    params = init_params(arch, seed, dtype)
    # nonzero biases keep pre-activations away from the ReLU kink at zero
    for k in params:
        if k.endswith("_b"):
            params[k] = rng.uniform(0.01, 0.1, size=params[k].shape).astype(dtype)
    batch = rng.random((batch_size, arch.input_size, arch.input_size, 1)).astype(dtype)
    labels = rng.integers(arch.n_classes, size=batch_size)
    train = arch.dropout > 0
    mask_rng = lambda: np.random.default_rng(dropout_seed)
    _, analytic = loss_and_grads(params, arch, batch, labels, train, mask_rng())
    step = dtype.type(eps)
    out = {}
    for name, value in params.items():
        flat = value.reshape(-1)
        ga = analytic[name].reshape(-1)
        num = np.empty(flat.size, dtype=dtype)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + step
            up = loss_only(params, arch, batch, labels, train, mask_rng())
            flat[j] = old - step
            down = loss_only(params, arch, batch, labels, train, mask_rng())
            flat[j] = old
            num[j] = (up - down) / (2 * step)
        denom = np.maximum(np.maximum(np.abs(ga), np.abs(num)), 1e-12)
        err = np.abs(ga - num) / denom
        out[name] = (err.astype(np.float64), ga.astype(np.float64), num.astype(np.float64))
    return out


def grad_check(arch: CnnArch = REDUCED_ARCH, eps: float = 1e-5, seed: int = 0,
               batch_size: int = 2, dtype=np.float64) -> float:
    """Max over all parameters of :func:`relative_errors`."""
    errs = relative_errors(arch, eps, seed, batch_size, dtype)
    return float(max(e.max() for e, _, _ in errs.values()))


# -- training --------------------------------------------------------------

def _to_unit(images, dtype):
    return (np.asarray(images, dtype=dtype) / 255.0)[..., None]


def predict_proba_images(params, arch: CnnArch, images, batch_size: int = 256) -> np.ndarray:
    images = np.asarray(images)
    dtype = params["conv0_W"].dtype
    out = np.empty((len(images), arch.n_classes))
    for s in range(0, len(images), batch_size):
        out[s:s + batch_size] = forward(params, arch, _to_unit(images[s:s + batch_size], dtype))[1]
    return out


def train(params, arch: CnnArch, images, labels, train_idx, val_idx=None,
          hyper: TrainHyper = TrainHyper(), aug: AugmentParams = NO_AUGMENT, log=None):
    """Momentum SGD over shuffled mini-batches of uint8 images.

    Returns ``(params, history)``; history holds one dict per epoch with the
    mean training loss and validation accuracy (``None`` without a val set).
    The input ``params`` are not modified.
    """
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.int64)
    train_idx = np.asarray(train_idx, dtype=np.int64)
    params = {k: v.copy() for k, v in params.items()}
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    dtype = params["conv0_W"].dtype
    rng = np.random.default_rng(hyper.seed)
    history = []
    for epoch in range(1, hyper.epochs + 1):
        t0 = time.perf_counter()
        order = train_idx[rng.permutation(train_idx.size)]
        total, seen = 0.0, 0
        for s in range(0, order.size, hyper.batch_size):
            idx = order[s:s + hyper.batch_size]
            batch = _to_unit(augment_batch(images[idx], aug, rng), dtype)
            loss, grads = loss_and_grads(params, arch, batch, labels[idx], True, rng)
            for k in params:
                velocity[k] *= hyper.momentum
                velocity[k] -= (hyper.learning_rate * grads[k]).astype(dtype, copy=False)
                params[k] += velocity[k]
            total += loss * len(idx)
            seen += len(idx)
        val_acc = None
        if val_idx is not None and len(val_idx):
            pred = predict_proba_images(params, arch, images[val_idx]).argmax(axis=1)
            val_acc = float((pred == labels[val_idx]).mean())
        rec = {"epoch": epoch, "loss": total / max(seen, 1), "val_accuracy": val_acc,
               "seconds": round(time.perf_counter() - t0, 3)}
        history.append(rec)
        if log is not None:
            log(rec)
    return params, history


def save_checkpoint(path, params, arch: CnnArch, hyper: TrainHyper | None = None,
                    history=None, aug: AugmentParams | None = None, classes=None) -> None:
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "arch": asdict(arch),
        "hyper": asdict(hyper) if hyper else None,
        "augment": asdict(aug) if aug else None,
        "history": history or [],
        "classes": None if classes is None else [c.item() if hasattr(c, "item") else c
                                                 for c in classes],
    }
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
             **params)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path):
    """Return ``(params, arch, meta)``."""
    with np.load(path, allow_pickle=False) as z:
        if "__meta__" not in z.files:
            raise ValueError(f"{path} is not a CNN checkpoint")
        meta = json.loads(bytes(z["__meta__"]).decode())
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path} is not a CNN checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        params = {k: z[k].copy() for k in z.files if k != "__meta__"}
    arch = CnnArch(**meta["arch"])
    expected = arch.shapes()
    if set(expected) != set(params) or any(params[k].shape != s for k, s in expected.items()):
        raise ShapeMismatch("checkpoint tensors do not match the stored architecture")
    return params, arch, meta


class CnnClassifier(ClassifierMixin, BaseEstimator):
    """Estimator wrapper: ``X`` is ``[n, 56*56]`` (or ``[n,56,56]``) in [0, 1]."""

    def __init__(self, filters=(16, 32, 64), dense=(128, 64), dropout=0.5, l2_lambda=1e-4,
                 learning_rate=0.01, momentum=0.9, batch_size=64, epochs=15,
                 augment: AugmentParams | None = None, input_size=56, random_state=0,
                 dtype="float32", verbose=False):
        self.filters = filters
        self.dense = dense
        self.dropout = dropout
        self.l2_lambda = l2_lambda
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.epochs = epochs
        self.augment = augment
        self.input_size = input_size
        self.random_state = random_state
        self.dtype = dtype
        self.verbose = verbose

    def _images(self, X):
        X = np.asarray(X, dtype=np.float64)
        X = X.reshape(len(X), self.input_size, self.input_size)
        if not np.isfinite(X).all():
            raise ValueError("features contain NaN or infinity")
        return np.floor(np.clip(X, 0, 1) * 255 + 0.5).astype(np.uint8)

    def fit(self, X, y, X_val=None, y_val=None):
        y = np.asarray(y)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        images = self._images(X)
        self.arch_ = CnnArch(input_size=self.input_size, filters=tuple(self.filters),
                             dense=tuple(self.dense), n_classes=len(self.classes_),
                             dropout=self.dropout, l2_lambda=self.l2_lambda)
        hyper = TrainHyper(self.learning_rate, self.momentum, self.batch_size, self.epochs,
                           self.random_state)
        train_idx = np.arange(len(images))
        val_idx = None
        if X_val is not None:
            val_images = self._images(X_val)
            val_labels = np.searchsorted(self.classes_, np.asarray(y_val))
            images = np.concatenate([images, val_images])
            y_idx = np.concatenate([y_idx, val_labels])
            val_idx = np.arange(len(train_idx), len(images))
        params = init_params(self.arch_, self.random_state, np.dtype(self.dtype))
        log = (lambda rec: print(json.dumps(rec), flush=True)) if self.verbose else None
        self.params_, self.history_ = train(params, self.arch_, images, y_idx, train_idx, val_idx,
                                            hyper, self.augment or NO_AUGMENT, log)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        return predict_proba_images(self.params_, self.arch_, self._images(X))

    def predict(self, X):
        return self.classes_[self.predict_proba(X).argmax(axis=1)]

    @classmethod
    def from_checkpoint(cls, path) -> "CnnClassifier":
        params, arch, meta = load_checkpoint(path)
        est = cls(filters=arch.filters, dense=arch.dense, dropout=arch.dropout,
                  l2_lambda=arch.l2_lambda, input_size=arch.input_size)
        est.params_, est.arch_ = params, arch
        classes = meta.get("classes")
        est.classes_ = np.arange(arch.n_classes) if classes is None else np.asarray(classes)
        est.history_ = meta.get("history", [])
        return est

    def save(self, path) -> None:
        check_is_fitted(self, "params_")
        hyper = TrainHyper(self.learning_rate, self.momentum, self.batch_size, self.epochs,
                           self.random_state)
        save_checkpoint(path, self.params_, self.arch_, hyper, self.history_, self.augment,
                        self.classes_)
