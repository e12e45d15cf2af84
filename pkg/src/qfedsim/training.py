"""Local optimization: losses, parameter-shift gradients, SGD, proximal steps.

Two training modes share the machinery:

  - vqe: minimize the expectation <H> of an observable over the circuit run
    from |0...0>. The loss is linear in the measured expectation, so the
    two-point shift rule differentiates it exactly.
  - classify: softmax cross-entropy on top of the linear head. The loss is
    nonlinear in the probability readout, so the angle gradient shifts the
    readout itself: the cotangent c = W^T (softmax(y) - onehot), frozen at the
    base parameters, turns each shifted evaluation into the linear functional
    sum(c * p(angles)) whose shift-rule derivative equals the exact
    chain-rule gradient. Head gradients are analytic.

`evals_used` counts gradient-rule circuit executions only (2 per angle per
probability readout): in exact VQE mode a T-step training consumes exactly
2 * D * T evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import core
from .core import NoiseSpec, Observable, QuantumState, ShotSpec
from .encoding import FeatureVector, encode_batch
from .exceptions import ConfigError, DataError, LabelError, NumericError, ShapeError
from .model import (
    CircuitSpec,
    ModelParams,
    check_params,
    class_probabilities,
    head_scores,
    probability_batch,
    run_ansatz_kernel,
)

MODE_VQE = "vqe"
MODE_CLASSIFY = "classify"

PARAMETER_SHIFT = np.pi / 2


@dataclass(frozen=True)
class TrainConfig:
    """Local-training hyperparameters.

    `lam` is the proximal weight pulling local parameters toward the round's
    broadcast anchor (0 disables personalization and reduces every update to
    plain SGD, bit for bit).
    """

    eta: float = 0.01
    lam: float = 0.1
    local_epochs: int = 20
    batch_size: int = 16
    mode: str = MODE_CLASSIFY

    def __post_init__(self):
        if self.eta < 0:
            raise ConfigError(f"eta must be >= 0, got {self.eta}")
        if self.lam < 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")
        if self.local_epochs < 1:
            raise ConfigError(f"local_epochs must be >= 1, got {self.local_epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.mode not in (MODE_VQE, MODE_CLASSIFY):
            raise ConfigError(f"mode must be '{MODE_VQE}' or '{MODE_CLASSIFY}', got {self.mode!r}")


@dataclass(frozen=True)
class GradientEstimate:
    """Gradient of a loss w.r.t. every model parameter, plus work accounting."""

    angle_grads: np.ndarray
    head_weight_grads: np.ndarray
    head_bias_grads: np.ndarray
    evals_used: int

    def __post_init__(self):
        for name in ("angle_grads", "head_weight_grads", "head_bias_grads"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class LocalTrainResult:
    params: ModelParams
    loss_trace: np.ndarray  # per-epoch mean loss, length = local_epochs
    evals_used: int


def _zero_state_batch(spec: CircuitSpec) -> np.ndarray:
    amps = np.zeros((1, spec.dim), dtype=np.complex128)
    amps[0, 0] = 1.0
    return amps


def loss_vqe(spec: CircuitSpec, params: ModelParams, observable: Observable,
             noise: NoiseSpec = NoiseSpec.off(), shots: ShotSpec = ShotSpec.exact(),
             rng: np.random.Generator | None = None) -> float:
    """<H> (or its shot estimate) on the ansatz output from |0...0>."""
    check_params(spec, params)
    if observable.n_qubits != spec.n_qubits:
        raise ShapeError(
            f"observable on {observable.n_qubits} qubits does not match "
            f"circuit on {spec.n_qubits}"
        )
    amps = _zero_state_batch(spec)
    run_ansatz_kernel(amps, spec, params.angles, noise, rng)
    state = QuantumState(spec.n_qubits, amps[0])
    if shots.is_exact:
        return core.expectation(state, observable)
    return core.estimate_expectation(state, observable, shots, rng)


def _batch_arrays(batch) -> tuple:
    if len(batch) == 0:
        raise DataError("empty batch")
    features = np.stack([fv.values for fv in batch])
    labels = np.array([fv.label for fv in batch], dtype=np.int64)
    return features, labels


def _check_labels(labels: np.ndarray, n_classes: int) -> None:
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        bad = labels[(labels < 0) | (labels >= n_classes)][0]
        raise LabelError(f"label {bad} outside [0, {n_classes})")


def cross_entropy(params: ModelParams, readout: np.ndarray, labels: np.ndarray) -> float:
    y = head_scores(params, readout)
    shifted = y - y.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=-1))
    log_p = shifted[np.arange(len(labels)), labels] - log_norm
    return float(-log_p.mean())


def loss_classify(spec: CircuitSpec, params: ModelParams, batch,
                  shots: ShotSpec = ShotSpec.exact(), noise: NoiseSpec = NoiseSpec.off(),
                  rng: np.random.Generator | None = None) -> float:
    """Mean cross-entropy of true labels under softmax head scores."""
    check_params(spec, params)
    features, labels = _batch_arrays(batch)
    _check_labels(labels, params.n_classes)
    encoded = encode_batch(features, spec.n_qubits)
    readout = probability_batch(spec, params.angles, encoded, shots, noise, rng)
    return cross_entropy(params, readout, labels)


def grad_parameter_shift(spec: CircuitSpec, params: ModelParams, loss_closure,
                         shift: float = PARAMETER_SHIFT,
                         evals_per_call: int = 1) -> GradientEstimate:
    """Angle gradients by the two-point rule: [f(t + s) - f(t - s)] / 2.

    `loss_closure` maps an angle matrix to a scalar loss and must be linear in
    the circuit readout (an expectation value, or a fixed linear functional of
    the probability vector); for such losses the rule at the default shift
    pi/2 is exact. Head gradients are not the closure's business and are
    returned as zeros; `evals_per_call` is the number of circuit executions
    one closure call performs (batch size for batched readouts).
    """
    base = params.angles
    grads = np.zeros_like(base)
    evals = 0
    for idx in np.ndindex(*base.shape):
        plus = base.copy()
        plus[idx] += shift
        minus = base.copy()
        minus[idx] -= shift
        up, down = loss_closure(plus), loss_closure(minus)
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericError(f"non-finite loss at shifted angle {idx}")
        grads[idx] = 0.5 * (up - down)
        evals += 2 * evals_per_call
    return GradientEstimate(
        grads,
        np.zeros_like(params.head_weights),
        np.zeros_like(params.head_bias),
        evals,
    )


def classify_loss_and_grad(spec: CircuitSpec, params: ModelParams, encoded: np.ndarray,
                           labels: np.ndarray, shots: ShotSpec, noise: NoiseSpec,
                           rng: np.random.Generator | None) -> tuple:
    """One batch's cross-entropy and full gradient (pre-encoded inputs).

    Returns (loss, GradientEstimate). The angle gradient shifts the
    probability readout against cotangents frozen at the base parameters; the
    head gradient is analytic from the base readout.
    """
    rows = encoded.shape[0]
    readout = probability_batch(spec, params.angles, encoded, shots, noise, rng)
    loss = cross_entropy(params, readout, labels)
    delta = class_probabilities(head_scores(params, readout))
    delta[np.arange(rows), labels] -= 1.0
    delta /= rows
    head_w = delta.T @ readout
    head_b = delta.sum(axis=0)
    cotangent = delta @ params.head_weights

    def shifted_functional(angles):
        shifted = probability_batch(spec, angles, encoded, shots, noise, rng)
        return float((cotangent * shifted).sum())

    est = grad_parameter_shift(spec, params, shifted_functional, evals_per_call=rows)
    return loss, GradientEstimate(est.angle_grads, head_w, head_b, est.evals_used)


def sgd_step(params: ModelParams, grad: GradientEstimate, eta: float) -> ModelParams:
    """Plain gradient descent: every parameter decremented by eta * gradient."""
    return ModelParams(
        params.angles - eta * grad.angle_grads,
        params.head_weights - eta * grad.head_weight_grads,
        params.head_bias - eta * grad.head_bias_grads,
    )


def personalized_step(params: ModelParams, grad: GradientEstimate, eta: float,
                      lam: float, global_params: ModelParams | None) -> ModelParams:
    """Proximal update w <- w - eta * (g + lam * (w - w_global)).

    The pull applies to the whole parameter vector, angles and head alike.
    lam = 0 takes the plain SGD path, so zero-weight trajectories are
    bit-identical to sgd_step trajectories.
    """
    if lam == 0.0:
        return sgd_step(params, grad, eta)
    if global_params is None:
        raise ConfigError("personalized step with lam > 0 needs anchor parameters")
    if params.angles.shape != global_params.angles.shape or \
            params.head_weights.shape != global_params.head_weights.shape:
        raise ShapeError("local and global parameter shapes differ")
    return ModelParams(
        params.angles - eta * (grad.angle_grads + lam * (params.angles - global_params.angles)),
        params.head_weights
        - eta * (grad.head_weight_grads + lam * (params.head_weights - global_params.head_weights)),
        params.head_bias
        - eta * (grad.head_bias_grads + lam * (params.head_bias - global_params.head_bias)),
    )


def _train_classify_loop(spec, params, encoded, labels, config, global_params,
                         shots, noise, rng):
    trace = np.zeros(config.local_epochs)
    evals = 0
    count = encoded.shape[0]
    for epoch in range(config.local_epochs):
        order = rng.permutation(count)
        loss_sum = 0.0
        for start in range(0, count, config.batch_size):
            sel = order[start : start + config.batch_size]
            loss, grad = classify_loss_and_grad(
                spec, params, encoded[sel], labels[sel], shots, noise, rng
            )
            params = personalized_step(params, grad, config.eta, config.lam, global_params)
            loss_sum += loss * sel.size
            evals += grad.evals_used
        trace[epoch] = loss_sum / count
    return LocalTrainResult(params, trace, evals)


def _train_vqe_loop(spec, params, observable, config, global_params, shots, noise, rng):
    trace = np.zeros(config.local_epochs)
    evals = 0
    for epoch in range(config.local_epochs):
        trace[epoch] = loss_vqe(spec, params, observable, noise, shots, rng)

        def shifted_loss(angles):
            return loss_vqe(spec, params.with_angles(angles), observable, noise, shots, rng)

        grad = grad_parameter_shift(spec, params, shifted_loss)
        params = personalized_step(params, grad, config.eta, config.lam, global_params)
        evals += grad.evals_used
    return LocalTrainResult(params, trace, evals)


def local_train(spec: CircuitSpec, start_params: ModelParams, dataset_shard,
                config: TrainConfig, global_params: ModelParams | None = None,
                shots: ShotSpec = ShotSpec.exact(), noise: NoiseSpec = NoiseSpec.off(),
                rng: np.random.Generator | None = None,
                observable: Observable | None = None) -> LocalTrainResult:
    """T local epochs of proximal mini-batch training.

    classify mode: `dataset_shard` is a non-empty list of FeatureVector;
    each epoch shuffles the shard (from `rng`) and steps over mini-batches.
    The trace holds each epoch's sample-weighted mean batch loss, evaluated at
    the parameters the batch was seen with.

    vqe mode: Algorithm-style observable minimization; `dataset_shard` is
    ignored (the loss consumes no data), one gradient step per epoch, and the
    trace holds the loss at the start of each step. `observable` is required.
    """
    check_params(spec, start_params)
    if rng is None:
        rng = np.random.default_rng()
    if config.mode == MODE_VQE:
        if observable is None:
            raise ConfigError("vqe mode needs an observable")
        return _train_vqe_loop(
            spec, start_params, observable, config, global_params, shots, noise, rng
        )
    if dataset_shard is None or len(dataset_shard) == 0:
        raise DataError("classify training needs a non-empty shard")
    features, labels = _batch_arrays(dataset_shard)
    _check_labels(labels, start_params.n_classes)
    encoded = encode_batch(features, spec.n_qubits)
    return _train_classify_loop(
        spec, start_params, encoded, labels, config, global_params, shots, noise, rng
    )


def train_on_encoded(spec: CircuitSpec, start_params: ModelParams, encoded: np.ndarray,
                     labels: np.ndarray, config: TrainConfig,
                     global_params: ModelParams | None, shots: ShotSpec,
                     noise: NoiseSpec, rng: np.random.Generator) -> LocalTrainResult:
    """classify-mode local_train over pre-encoded inputs (federation hot path;
    same loop, so trajectories match local_train bit for bit)."""
    check_params(spec, start_params)
    if encoded.shape[0] == 0:
        raise DataError("classify training needs a non-empty shard")
    _check_labels(labels, start_params.n_classes)
    return _train_classify_loop(
        spec, start_params, encoded, labels, config, global_params, shots, noise, rng
    )
