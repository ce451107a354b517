"""Born-rule probabilities, losses, gradients, Adam, and the train/evaluate loops."""

from __future__ import annotations

import functools
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from ._jax import jax, jnp
from .dataset import ImageSet
from .embedding import embed_images
from .errors import ConfigurationError, InputError, NumericalError
from .models import SumStateModel, TensorNetworkModel, classify

log = logging.getLogger(__name__)

LOSS_KINDS = ("nll", "quadratic")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 100
    epochs: int = 10
    alpha: float = 1.0
    seed: int = 0
    loss_kind: str = "nll"
    lr_decay: float = 1.0  # learning rate is multiplied by this after every epoch

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConfigurationError("learning_rate must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError("beta1 and beta2 must lie in [0, 1)")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.alpha < 0:
            raise ConfigurationError("alpha must be >= 0")
        if not 0 < self.lr_decay <= 1:
            raise ConfigurationError("lr_decay must lie in (0, 1]")
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigurationError(f"loss_kind must be one of {LOSS_KINDS}")

    def to_dict(self) -> dict:
        return asdict(self)

    def learning_rate_at(self, epoch: int) -> float:
        """Learning rate used during ``epoch`` (1-based)."""
        return self.learning_rate * self.lr_decay ** (epoch - 1)


@dataclass
class EvalReport:
    accuracy: float
    loss: float
    per_class_accuracy: list[float]
    class_counts: list[int]
    sample_count: int


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float | None = None
    train_report: EvalReport | None = field(default=None, repr=False)
    test_report: EvalReport | None = field(default=None, repr=False)
    stop: bool = field(default=False, repr=False)


# --- probabilities and losses on score arrays ---------------------------------------


def _logsumexp(x: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    return np.squeeze(m, axis) + np.log(np.sum(np.exp(x - m), axis=axis))


def born_probabilities(scores: np.ndarray) -> np.ndarray:
    """Normalised squared overlaps from their logs (softmax over the class axis)."""
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise InputError("scores must be finite")
    shifted = scores - scores.max(axis=-1, keepdims=True)
    p = np.exp(shifted)
    return p / p.sum(axis=-1, keepdims=True)


def nll_from_scores(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-sample ``-log p(y)``."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    return _logsumexp(scores, axis=-1) - scores[np.arange(len(labels)), labels]


def quadratic_from_scores(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-sample ``1/2 sum_l (|<T_l|x>| - delta_{l,y})^2`` from log-squared overlaps."""
    amp = np.exp(0.5 * np.asarray(scores, dtype=np.float64))
    target = np.zeros_like(amp)
    target[np.arange(len(labels)), labels] = 1.0
    return 0.5 * np.sum((amp - target) ** 2, axis=-1)


def regularizer(model, alpha: float) -> float:
    return float(alpha * np.sum(np.abs(model.log_norms())))


def _scores(model, images: ImageSet | np.ndarray, chunk: int = 500) -> np.ndarray:
    if isinstance(images, ImageSet):
        out = [model.log_sq_overlaps(embed_images(images.pixels[s : s + chunk])) for s in range(0, len(images), chunk)]
        return np.concatenate(out) if out else np.zeros((0, model.n_classes))
    return model.log_sq_overlaps(images)


def nll_loss(model, states, labels, alpha: float = 1.0) -> float:
    """Summed negative log-likelihood over the batch plus ``alpha * sum_l |log Z_l|`` once."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise InputError("empty batch")
    data = float(np.sum(nll_from_scores(_scores(model, states), labels)))
    return data + (regularizer(model, alpha) if alpha else 0.0)


def quadratic_loss(model, states, labels) -> float:
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise InputError("empty batch")
    return float(np.sum(quadratic_from_scores(_scores(model, states), labels)))


# --- differentiable objective -------------------------------------------------------------


def _objective(params, xb, y, alpha, *, terms_fn, norm_fn, static, loss_kind):
    scores = terms_fn(params, xb, **static).sum(axis=1)
    if loss_kind == "nll":
        lse = jax.scipy.special.logsumexp(scores, axis=1)
        picked = jnp.take_along_axis(scores, y[:, None], axis=1)[:, 0]
        data = jnp.sum(lse - picked)
        log_z = norm_fn(params, **static).sum(axis=0)
        return data + alpha * jnp.sum(jnp.abs(log_z))
    amp = jnp.exp(0.5 * scores)
    target = jax.nn.one_hot(y, scores.shape[1], dtype=scores.dtype)
    return 0.5 * jnp.sum((amp - target) ** 2)


@functools.lru_cache(maxsize=None)
def _value_and_grad(model_type, static_items, loss_kind):
    fn = functools.partial(
        _objective,
        terms_fn=model_type.block_terms_fn,
        norm_fn=model_type.block_log_norm_fn,
        static=dict(static_items),
        loss_kind=loss_kind,
    )
    return jax.jit(jax.value_and_grad(fn))


def loss_and_gradient(
    model: TensorNetworkModel, states: np.ndarray, labels: np.ndarray, config: TrainConfig
) -> tuple[float, dict[str, np.ndarray]]:
    """Objective value and its gradient with respect to every parameter array.

    The objective is :func:`nll_loss` (regulariser included) or
    :func:`quadratic_loss`, depending on ``config.loss_kind``.

    Raises:
        NumericalError: non-finite loss or gradient; the message names the
            parameter array and index.
    """
    if not isinstance(model, TensorNetworkModel):
        raise ConfigurationError(f"{type(model).__name__} has no trainable parameters")
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise InputError("empty batch")
    xb = model.blocked_states(states)
    vg = _value_and_grad(type(model), tuple(sorted(model.static_config().items())), config.loss_kind)
    value, grads = vg(model.jax_params(), jnp.asarray(xb), jnp.asarray(labels), jnp.float64(config.alpha))
    value = float(value)
    if not np.isfinite(value):
        raise NumericalError(f"loss is not finite ({value})")
    out = {}
    for key, g in grads.items():
        g = np.asarray(g)
        bad = np.argwhere(~np.isfinite(g))
        if bad.size:
            raise NumericalError(f"non-finite gradient in {key} at index {tuple(bad[0])}")
        out[key] = g
    return value, out


def gradient(model, states, labels, config: TrainConfig) -> dict[str, np.ndarray]:
    return loss_and_gradient(model, states, labels, config)[1]


# --- Adam ---------------------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update. Inputs are left untouched."""
    t = state.step + 1
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    new_params, m_new, v_new = {}, {}, {}
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise InputError(f"gradient shape {g.shape} does not match parameter {key} {p.shape}")
        m = b1 * state.m[key] + (1.0 - b1) * g
        v = b2 * state.v[key] + (1.0 - b2) * (g * g)
        m_new[key], v_new[key] = m, v
        new_params[key] = p - config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + config.epsilon)
    return new_params, AdamState(m=m_new, v=v_new, step=t)


# --- loops ----------------------------------------------------------------------------------


def evaluate(model, images: ImageSet, chunk: int = 500) -> EvalReport:
    """Accuracy (arg-max of the overlaps) and mean per-sample NLL on a labelled set."""
    n_classes = model.n_classes
    labels = np.asarray(images.labels)
    if len(labels) == 0:
        return EvalReport(0.0, 0.0, [float("nan")] * n_classes, [0] * n_classes, 0)
    scores = _scores(model, images, chunk=chunk)
    pred = classify(scores)
    correct = pred == labels
    counts = np.bincount(labels, minlength=n_classes)
    hits = np.bincount(labels[correct], minlength=n_classes)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(counts > 0, hits / np.maximum(counts, 1), np.nan)
    return EvalReport(
        accuracy=float(correct.mean()),
        loss=float(np.mean(nll_from_scores(scores, labels))),
        per_class_accuracy=[float(a) for a in per_class],
        class_counts=[int(c) for c in counts],
        sample_count=int(len(labels)),
    )


class TrainingDiverged(NumericalError):
    """Loss or gradient went non-finite; carries the last good model and history."""

    def __init__(self, message: str, model, history: list[EpochRecord]):
        super().__init__(message)
        self.model = model
        self.history = history


def train(
    model,
    train_set: ImageSet,
    config: TrainConfig,
    test_set: ImageSet | None = None,
    on_epoch: Callable[[EpochRecord], bool | None] | None = None,
):
    """Shuffled minibatch Adam on the configured loss.

    The returned history starts with an epoch-0 record for the initial model.
    Shuffling draws from its own stream seeded by ``config.seed``, separate
    from the stream used to initialise the model. ``on_epoch`` sees every
    record as it is made; returning True from it ends training early.

    Returns:
        ``(model, history)``; the input model is not modified.

    Raises:
        TrainingDiverged: the loss or gradient became non-finite.
    """
    history: list[EpochRecord] = []

    def record(m, epoch: int) -> EpochRecord:
        tr = evaluate(m, train_set)
        te = evaluate(m, test_set) if test_set is not None else None
        rec = EpochRecord(
            epoch=epoch,
            train_loss=tr.loss,
            train_acc=tr.accuracy,
            test_acc=te.accuracy if te is not None else None,
            train_report=tr,
            test_report=te,
        )
        history.append(rec)
        rec.stop = bool(on_epoch(rec)) if on_epoch is not None else False
        log.info("epoch %d  loss %.6f  train %.5f  test %s", epoch, rec.train_loss, rec.train_acc, rec.test_acc)
        return rec

    if isinstance(model, SumStateModel):
        record(model, 0)
        return model, history

    model = model.copy()
    record(model, 0)
    rng = np.random.default_rng([config.seed, 1])
    opt = AdamState.zeros_like(model.params)
    n = len(train_set)
    for epoch in range(1, config.epochs + 1):
        step_config = replace(config, learning_rate=config.learning_rate_at(epoch))
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = np.sort(order[start : start + config.batch_size])
            states = embed_images(train_set.pixels[idx])
            try:
                _, grads = loss_and_gradient(model, states, train_set.labels[idx], config)
            except NumericalError as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}", model, history) from exc
            params, opt = adam_step(model.params, grads, opt, step_config)
            if not all(np.all(np.isfinite(p)) for p in params.values()):
                raise TrainingDiverged(f"epoch {epoch}: parameters became non-finite", model, history)
            model.params = params
        rec = record(model, epoch)
        if not np.isfinite(rec.train_loss):
            raise TrainingDiverged(f"epoch {epoch}: training loss is not finite", model, history)
        if rec.stop:
            break
    return model, history
