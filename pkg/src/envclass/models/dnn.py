"""Feed-forward network with softmax output, trained by mini-batch Adam."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .tree import ModelError

logger = logging.getLogger(__name__)

HIDDEN_WIDTHS = (64, 32, 16, 8)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    hidden: tuple[int, ...] = HIDDEN_WIDTHS

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ModelError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ModelError("batch_size must be >= 1")


def relu(x):
    return np.maximum(x, 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class DnnModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"
    history: dict = field(default_factory=dict, compare=False)

    @classmethod
    def create(cls, input_dim: int, n_classes: int, hidden=HIDDEN_WIDTHS, seed=0) -> "DnnModel":
        """He-uniform weights (limit sqrt(6 / fan_in)), zero biases."""
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        widths = [input_dim, *hidden, n_classes]
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            limit = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def widths(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_features(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[1]

    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def copy(self) -> "DnnModel":
        return DnnModel([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                        self.activation, dict(self.history))

    def predict_proba(self, X) -> np.ndarray:
        return dnn_forward(self, X)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


def _forward(model: DnnModel, X: np.ndarray, check: bool = True):
    if model.activation != "relu":
        raise ModelError(f"unsupported hidden activation {model.activation!r}")
    acts = [X]
    h = X
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ W + b
        if check and not np.all(np.isfinite(z)):
            raise ModelError(f"non-finite values after layer {i + 1} (width {W.shape[1]})")
        if i < last:
            h = relu(z)
            acts.append(h)
        else:
            return acts, z


def dnn_forward(model: DnnModel, X) -> np.ndarray:
    """Class probabilities for a vector or a batch of vectors."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    if X2.shape[1] != model.n_features:
        raise ModelError(f"expected {model.n_features} features, got {X2.shape[1]}")
    if not np.all(np.isfinite(X2)):
        raise ModelError("non-finite input")
    _, logits = _forward(model, X2)
    p = softmax(logits)
    return p[0] if single else p


def loss_and_grads(model: DnnModel, X: np.ndarray, y: np.ndarray):
    """Mean categorical cross-entropy and its gradients.

    Returns ``(loss, weight_grads, bias_grads)``.
    """
    acts, logits = _forward(model, X)
    n = X.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -float(np.mean(log_p[np.arange(n), y]))
    delta = np.exp(log_p)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    gw = [None] * len(model.weights)
    gb = [None] * len(model.biases)
    for i in range(len(model.weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (acts[i] > 0)
    return loss, gw, gb


def cross_entropy(model: DnnModel, X: np.ndarray, y: np.ndarray) -> float:
    return loss_and_grads(model, X, y)[0] if X.shape[0] else float("nan")


class Adam:
    def __init__(self, params: list[np.ndarray], lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        """In-place update of ``params``."""
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def dnn_train(
    X,
    y,
    X_val=None,
    y_val=None,
    n_classes: int | None = None,
    config: TrainConfig = TrainConfig(),
) -> DnnModel:
    """Train with mini-batch Adam and keep the best-validation-loss weights.

    Without a validation set the training loss drives model selection and
    early stopping.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if X_val is None or len(X_val) == 0:
        X_val, y_val = X, y
    X_val = np.asarray(X_val, dtype=np.float64)
    y_val = np.asarray(y_val, dtype=np.intp)

    rng = np.random.default_rng(config.seed)
    model = DnnModel.create(X.shape[1], n_classes, config.hidden, rng)
    params = model.params()
    opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.epsilon)

    best = model.copy()
    best_loss = cross_entropy(model, X_val, y_val)
    best_epoch = 0
    stale = 0
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(X.shape[0])
        for b, start in enumerate(range(0, X.shape[0], config.batch_size)):
            idx = order[start:start + config.batch_size]
            try:
                loss, gw, gb = loss_and_grads(model, X[idx], y[idx])
            except ModelError as exc:
                raise TrainingError(
                    f"{exc} (epoch {epoch}, batch {b}, learning rate {config.learning_rate})") from exc
            if not np.isfinite(loss):
                raise TrainingError(
                    f"loss became {loss} at epoch {epoch}, batch {b} (learning rate {config.learning_rate})")
            opt.step([*gw, *gb])
            if not all(np.all(np.isfinite(p)) for p in params):
                raise TrainingError(
                    f"non-finite weights after update at epoch {epoch}, batch {b} "
                    f"(learning rate {config.learning_rate})")
        val_loss = cross_entropy(model, X_val, y_val)
        if val_loss < best_loss:
            best_loss, best_epoch, stale = val_loss, epoch, 0
            best = model.copy()
        else:
            stale += 1
            if stale >= config.patience:
                break

    best.history = {"epochs": epoch, "best_epoch": best_epoch, "best_val_loss": best_loss}
    logger.debug("dnn: %d epochs, best val loss %.5f at epoch %d", epoch, best_loss, best_epoch)
    return best
