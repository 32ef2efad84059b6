"""SGD training, evaluation and finite-difference gradient checks."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..transform import TransformGraph, apply_transform
from .autodiff import LOSSES, Gradients, class_scores, forward, loss_and_grad, objective_and_grad
from .params import TRAINABLE, ParamSet, param_class

log = logging.getLogger(__name__)

# per-sample work is split into fixed chunks so sums never depend on threads
GRAD_CHUNK = 16


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    loss: str = "logistic"
    momentum: float = 0.0
    mirror: bool = False
    train_transform: bool = True
    train_classifier: bool = True
    threads: int = 1

    def __post_init__(self):
        if not self.learning_rate >= 0 or not math.isfinite(self.learning_rate):
            raise ValueError("learning rate must be finite and >= 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")


@dataclass
class History:
    epochs: list
    loss: list
    accuracy: list

    def to_csv(self, path) -> None:
        lines = ["epoch,loss,accuracy"]
        lines += [f"{e},{l!r},{a!r}" for e, l, a in zip(self.epochs, self.loss, self.accuracy)]
        Path(path).write_text("\n".join(lines) + "\n")


def _check_dataset(X, y, n_classes):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("dataset must be a nonempty (samples, length) array")
    if y.shape != (X.shape[0],):
        raise ValueError("need one label per sample")
    if np.any(y < 0) or np.any(y >= n_classes):
        raise ValueError(f"labels must lie in 0..{n_classes - 1}")
    return X, y


def _map_chunks(fn, n: int, threads: int) -> list:
    bounds = [(s, min(s + GRAD_CHUNK, n)) for s in range(0, n, GRAD_CHUNK)]
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda b: fn(*b), bounds))
    return [fn(*b) for b in bounds]


def _reduce(parts) -> tuple:
    total = 0.0
    grads = Gradients()
    scores = []
    for loss, g, s in parts:
        total += loss
        for k, v in g.arrays.items():
            grads.add(k, v)
        scores.append(s)
    return total, grads, np.concatenate(scores, axis=0)


def train(X, y, graph: TransformGraph, params: ParamSet, cfg: TrainConfig) -> tuple:
    """Minibatch SGD on the summed-loss / batch-size objective.

    Returns ``(params, history)``; ``params`` is a new :class:`ParamSet`.
    Shuffling for epoch ``e`` uses ``default_rng([seed, e])``. With
    ``train_transform`` off, features are computed once and only the
    classifier moves.
    """
    n_classes = params.meta["n_classes"]
    X, y = _check_dataset(X, y, n_classes)
    if cfg.mirror:
        X = np.concatenate([X, X[:, ::-1]])
        y = np.concatenate([y, y])
    params = params.copy()
    classes = [c for c in ("taps", "scales", "downweights", "mixing") if cfg.train_transform] + (
        ["classifier"] if cfg.train_classifier else []
    )
    names = params.trainable_names([c for c in classes if c in TRAINABLE[params.mode]])
    velocity = {n: np.zeros_like(params.arrays[n]) for n in names}
    cached = None if cfg.train_transform else apply_transform(X, graph, params).values
    hist = History([], [], [])
    S = X.shape[0]
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(S)
        ep_loss, ep_correct = 0.0, 0
        for start in range(0, S, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if cached is None:
                def chunk(a, b, idx=idx):
                    return objective_and_grad(X[idx[a:b]], y[idx[a:b]], graph, params, cfg.loss)

                total, grads, scores = _reduce(_map_chunks(chunk, idx.size, cfg.threads))
            else:
                total, grads, scores = _classifier_step(cached[idx], y[idx], params, cfg.loss)
            if not math.isfinite(total):
                raise TrainingDiverged(f"loss became {total} at epoch {epoch}, batch starting {start}")
            ep_loss += total
            ep_correct += int(np.sum(np.argmax(scores, axis=1) == y[idx]))
            _sgd_step(params, grads, names, velocity, cfg, idx.size)
        hist.epochs.append(epoch)
        hist.loss.append(ep_loss / S)
        hist.accuracy.append(ep_correct / S)
        log.debug("epoch %d loss %.6g accuracy %.4f", epoch, ep_loss / S, ep_correct / S)
    return params, hist


def _classifier_step(feats, labels, params, loss):
    a = params.arrays
    std = (feats - a["classifier/mean"]) / a["classifier/scale"]
    scores = std @ a["classifier/W"].T + a["classifier/b"]
    total, g_scores = loss_and_grad(scores, labels, loss)
    grads = Gradients({"classifier/W": g_scores.T @ std, "classifier/b": g_scores.sum(axis=0)})
    return total, grads, scores


def _sgd_step(params: ParamSet, grads: Gradients, names, velocity, cfg: TrainConfig, batch: int) -> None:
    if cfg.learning_rate == 0:
        return
    for n in names:
        g = grads.arrays.get(n)
        if g is None:
            continue
        g = g / batch
        if cfg.momentum:
            velocity[n] = cfg.momentum * velocity[n] + g
            g = velocity[n]
        new = params.arrays[n] - cfg.learning_rate * g
        if param_class(n) in ("scales", "downweights"):
            # nonnegative multipliers keep every leaf nonnegative
            new = np.maximum(new, 0.0)
        params.arrays[n] = new
    params.bump()


def objective(X, y, graph: TransformGraph, params: ParamSet, loss: str = "logistic") -> float:
    """Summed loss through the same general-path forward used for gradients."""
    fv, _ = forward(X, graph, params)
    return loss_and_grad(class_scores(fv.values, params), y, loss)[0]


def predict(X, graph: TransformGraph, params: ParamSet) -> np.ndarray:
    feats = apply_transform(np.asarray(X, dtype=np.float64), graph, params).values
    return np.argmax(class_scores(np.atleast_2d(feats), params), axis=1)


def evaluate(X, y, graph: TransformGraph, params: ParamSet) -> tuple:
    """Accuracy and confusion matrix (rows true class, columns predicted).

    Ties in the class scores go to the lowest class index.
    """
    n_classes = params.meta["n_classes"]
    X, y = _check_dataset(X, y, n_classes)
    pred = predict(X, graph, params)
    return confusion_accuracy(y, pred, n_classes)


def confusion_accuracy(y, pred, n_classes: int) -> tuple:
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (np.asarray(y), np.asarray(pred)), 1)
    return float(np.trace(conf) / max(1, conf.sum())), conf


# ---------------------------------------------------------------------------
# gradient check


@dataclass
class GradCheckReport:
    errors: dict  # parameter name -> relative error
    tolerance: float

    def by_class(self) -> dict:
        out = {}
        for n, e in self.errors.items():
            out[param_class(n)] = max(out.get(param_class(n), 0.0), e)
        return out

    @property
    def worst(self) -> tuple:
        name = max(self.errors, key=self.errors.get)
        return name, self.errors[name]

    @property
    def passed(self) -> bool:
        return all(e < self.tolerance for e in self.errors.values())

    def lines(self) -> list:
        out = [f"{c}: max relative error {e:.3e}" for c, e in sorted(self.by_class().items())]
        name, err = self.worst
        out.append(f"worst parameter: {name} ({err:.3e})")
        out.append("PASS" if self.passed else "FAIL")
        return out


def gradcheck(
    X,
    y,
    graph: TransformGraph,
    params: ParamSet,
    *,
    loss: str = "logistic",
    step: float = 1e-6,
    tolerance: float = 1e-5,
    seed: int = 0,
    names=None,
    inject_bug: bool = False,
) -> GradCheckReport:
    """Compare backprop against central differences along random directions.

    Every parameter array (all classes unless ``names`` is given) gets its
    own random unit direction ``d``; the analytic directional derivative
    ``<grad, d>`` is compared with ``(L(p + h d) - L(p - h d)) / 2h``.
    """
    X = np.asarray(X, dtype=np.float64)
    rng = np.random.default_rng(seed)
    _, grads, _ = objective_and_grad(X, y, graph, params, loss, _flip_modulus=inject_bug)
    names = [n for n in params.arrays if not n.startswith(("classifier/mean", "classifier/scale"))] if names is None else names
    errors = {}
    for n in names:
        base = params.arrays[n]
        if np.iscomplexobj(base):
            d = rng.standard_normal(base.shape) + 1j * rng.standard_normal(base.shape)
        else:
            d = rng.standard_normal(base.shape)
        d = d / np.linalg.norm(d)
        g = grads.arrays.get(n, np.zeros_like(base))
        analytic = float(np.real(np.sum(np.conj(g) * d)))

        def at(sign):
            trial = params.copy()
            trial.arrays[n] = base + sign * step * d
            return objective(X, y, graph, trial, loss)

        numeric = (at(1) - at(-1)) / (2 * step)
        denom = max(abs(analytic), abs(numeric), 1e-12)
        errors[n] = abs(analytic - numeric) / denom
    return GradCheckReport(errors, tolerance)
