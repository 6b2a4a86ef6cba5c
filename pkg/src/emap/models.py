"""Black-box models: desk-scale linear/logistic models and an external-process model."""

from __future__ import annotations

import json
import os
import selectors
import subprocess
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .geometry import PointCloud, Seed

ZERO_THRESHOLD = 1e-8


class ModelError(RuntimeError):
    pass


class TrainingError(ModelError):
    pass


class ModelProcessExited(ModelError):
    pass


class ModelProtocolError(ModelError):
    pass


class ModelTimeout(ModelError):
    pass


def _check_batch(batch, dim: int) -> np.ndarray:
    arr = np.asarray(batch, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, dim)
    arr = np.atleast_2d(arr)
    if arr.shape[1] != dim:
        raise ModelError(f"batch has {arr.shape[1]} columns, model expects {dim}")
    return arr


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Affine scores ``x @ weights + bias`` (one column per class), not normalized.

    Used as a target whose local behaviour is known exactly.
    """

    weights: np.ndarray
    bias: np.ndarray

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights.shape[1]

    def predict(self, batch) -> np.ndarray:
        x = _check_batch(batch, self.n_features)
        return x @ self.weights + self.bias

    def to_json(self) -> str:
        return json.dumps({"type": "linear", "weights": self.weights.tolist(),
                           "bias": self.bias.tolist(), "n_classes": self.n_classes})


@dataclass(frozen=True, eq=False)
class LogisticModel:
    """Multinomial logistic regression; ``predict`` returns softmax probabilities."""

    weights: np.ndarray
    bias: np.ndarray
    ground_truth: Optional[np.ndarray] = None

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights.shape[1]

    def logits(self, batch) -> np.ndarray:
        x = _check_batch(batch, self.n_features)
        return x @ self.weights + self.bias

    def predict(self, batch) -> np.ndarray:
        z = self.logits(batch)
        if len(z) == 0:
            return z
        return softmax(z)

    def to_json(self) -> str:
        return json.dumps({"type": "logistic", "weights": self.weights.tolist(),
                           "bias": self.bias.tolist(), "n_classes": self.n_classes})


def load_model(path: Union[str, Path]):
    doc = json.loads(Path(path).read_text())
    w, b = np.array(doc["weights"], dtype=float), np.array(doc["bias"], dtype=float)
    if w.shape[1] != doc["n_classes"] or b.shape != (doc["n_classes"],):
        raise ModelError(f"{path}: weights/bias shape does not match n_classes")
    if doc["type"] == "logistic":
        return LogisticModel(w, b, nonzero_features(w))
    if doc["type"] == "linear":
        return LinearModel(w, b)
    raise ModelError(f"{path}: unknown model type {doc['type']!r}")


def nonzero_features(weights: np.ndarray, threshold: float = ZERO_THRESHOLD) -> np.ndarray:
    return np.flatnonzero(np.any(np.abs(weights) > threshold, axis=1))


def _loss(x, onehot, w, b, l1):
    z = x @ w + b
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return -np.mean(np.sum(onehot * logp, axis=1)) + l1 * np.abs(w).sum()


def train_l1_logistic(
    train: PointCloud,
    l1_strength: float = 0.01,
    epochs: int = 500,
    lr: Optional[float] = None,
    seed: Union[Seed, int, None] = 0,
    return_history: bool = False,
):
    """Full-batch proximal gradient (ISTA) on mean cross-entropy + l1 * |W|_1.

    The bias is not penalized.  Without ``lr`` the step is 1 / L with L an
    upper bound on the gradient's Lipschitz constant, which makes the
    objective non-increasing.  Weights start at zero, so ``seed`` only
    matters for API symmetry with the stochastic parts of the package.
    """
    if train.labels is None:
        raise TrainingError("training data needs labels")
    if l1_strength < 0:
        raise TrainingError("l1_strength must be >= 0")
    classes = np.unique(train.labels)
    if len(classes) < 2:
        raise TrainingError("training data has a single class")
    x = train.points
    n, dim = x.shape
    y = np.searchsorted(classes, train.labels)
    onehot = np.eye(len(classes))[y]
    if lr is None:
        # Hessian of softmax CE is bounded by 1/2 (X^T X / n) per class block; the
        # augmented column of ones covers the bias.
        xa = np.hstack([x, np.ones((n, 1))])
        lr = 1.0 / (0.5 * np.linalg.norm(xa, 2) ** 2 / n)

    w = np.zeros((dim, len(classes)))
    b = np.zeros(len(classes))
    history = [_loss(x, onehot, w, b, l1_strength)]
    for _ in range(epochs):
        p = softmax(x @ w + b)
        g = (p - onehot) / n
        w = w - lr * (x.T @ g)
        b = b - lr * g.sum(axis=0)
        w = np.sign(w) * np.maximum(np.abs(w) - lr * l1_strength, 0.0)
        loss = _loss(x, onehot, w, b, l1_strength)
        if not np.isfinite(loss) or not np.all(np.isfinite(w)):
            raise TrainingError(f"loss became non-finite (lr={lr} too high?)")
        history.append(loss)
    model = LogisticModel(w, b, nonzero_features(w))
    return (model, np.array(history)) if return_history else model


class SubprocessModel:
    """A model served by an external process over newline-delimited JSON.

    Request ``{"id": n, "points": [[...], ...]}``, response
    ``{"id": n, "probs": [[...], ...]}``; one object per line.  Calls from
    several threads are serialized through a lock.
    """

    def __init__(self, command: Union[str, Sequence[str]], timeout: float = 30.0,
                 n_classes: Optional[int] = None, env: Optional[dict] = None):
        self.command = command
        self.timeout = timeout
        self.n_classes = n_classes
        self._next_id = 0
        self._lock = threading.Lock()
        self._buffer = b""
        self._proc = subprocess.Popen(
            command, shell=isinstance(command, str), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            env=env, bufsize=0,
        )
        self._sel = selectors.DefaultSelector()
        self._sel.register(self._proc.stdout, selectors.EVENT_READ)

    def _read_line(self, deadline: float) -> bytes:
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0 or not self._sel.select(remaining):
                raise ModelTimeout(f"no response within {self.timeout} s")
            chunk = os.read(self._proc.stdout.fileno(), 1 << 16)
            if not chunk:
                raise ModelProcessExited(f"model process exited with code {self._proc.wait()}")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line

    def predict(self, batch) -> np.ndarray:
        arr = np.asarray(batch, dtype=float)
        if arr.size == 0:
            return np.zeros((0, self.n_classes or 0))
        arr = np.atleast_2d(arr)
        with self._lock:
            if self._proc.poll() is not None:
                raise ModelProcessExited(f"model process exited with code {self._proc.returncode}")
            req_id = self._next_id
            self._next_id += 1
            msg = json.dumps({"id": req_id, "points": arr.tolist()}) + "\n"
            try:
                self._proc.stdin.write(msg.encode())
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError):
                raise ModelProcessExited(f"model process exited with code {self._proc.wait()}") from None
            try:
                line = self._read_line(time.monotonic() + self.timeout)
            except ModelTimeout:
                # a late reply would desynchronize every later request
                self._proc.kill()
                self._proc.wait()
                raise
        try:
            doc = json.loads(line)
            probs = np.array(doc["probs"], dtype=float)
            got_id = doc["id"]
        except (ValueError, KeyError, TypeError):
            raise ModelProtocolError(f"malformed response: {line[:200]!r}") from None
        if got_id != req_id:
            raise ModelProtocolError(f"response id {got_id} does not match request id {req_id}")
        if probs.ndim != 2 or probs.shape[0] != arr.shape[0]:
            raise ModelProtocolError(f"expected {arr.shape[0]} probability rows, got shape {probs.shape}")
        if self.n_classes is None:
            self.n_classes = probs.shape[1]
        return probs

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        self._sel.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def subprocess_model(command, timeout: float = 30.0, n_classes: Optional[int] = None) -> SubprocessModel:
    return SubprocessModel(command, timeout=timeout, n_classes=n_classes)


@dataclass(frozen=True, eq=False)
class Testbed:
    data: PointCloud
    model: LogisticModel
    generating_features: np.ndarray  # features the labels were drawn from
    l1_strength: float

    @property
    def ground_truth(self) -> np.ndarray:
        return self.model.ground_truth


def sparse_testbed(
    n_features: int = 20,
    n_true: int = 4,
    n_samples: int = 600,
    low_dim: int = 2,
    seed: Union[Seed, int, None] = 0,
    epochs: int = 1000,
    search_steps: int = 40,
) -> Testbed:
    """Binary bag-of-words style data with a sparse L1-logistic model on top.

    Features are Bernoulli with log-odds driven by a ``low_dim`` latent
    factor, so the data concentrates near a low-dimensional structure.
    Labels follow a logistic link on ``n_true`` random features.  The L1
    strength is bisected (in log scale) until the trained model uses
    ``n_true`` features, or as close as the search gets; the ground truth
    is whatever the trained model uses.
    """
    if not 1 <= n_true <= n_features:
        raise TrainingError("need 1 <= n_true <= n_features")
    rng = (seed if isinstance(seed, Seed) else Seed(int(seed or 0))).rng(0)
    z = rng.normal(size=(n_samples, low_dim))
    mix = rng.normal(size=(n_features, low_dim))
    offset = rng.normal(-0.5, 0.5, n_features)
    x = (rng.uniform(size=(n_samples, n_features)) < 1.0 / (1.0 + np.exp(-(z @ mix.T + offset)))).astype(float)
    true = np.sort(rng.choice(n_features, n_true, replace=False))
    w = np.zeros(n_features)
    w[true] = rng.choice([-1.0, 1.0], n_true) * rng.uniform(1.0, 2.0, n_true)
    score = x @ w
    score -= np.median(score)
    y = (rng.uniform(size=n_samples) < 1.0 / (1.0 + np.exp(-3.0 * score))).astype(np.int64)
    data = PointCloud(x, labels=y, name="sparse_testbed")

    lo, hi = -6.0, 1.0
    best, best_l1 = None, None
    for _ in range(search_steps):
        mid = 0.5 * (lo + hi)
        model = train_l1_logistic(data, l1_strength=10.0**mid, epochs=epochs)
        used = len(model.ground_truth)
        if best is None or abs(used - n_true) < abs(len(best.ground_truth) - n_true):
            best, best_l1 = model, 10.0**mid
        if used == n_true:
            break
        if used > n_true:
            lo = mid
        else:
            hi = mid
    return Testbed(data, best, true, best_l1)
