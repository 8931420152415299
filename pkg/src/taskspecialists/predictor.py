"""Task predictor: routes a raw sample to the specialist that owns its task.

The predictor is an MLP with a softmax head one unit wide per task seen. It is
trained purely on generator output (captions replayed through the generator
oracle), never on stored task data, with pseudo labels equal to task ids. When
a new task arrives the head is widened, old output rows are carried over, and
stage 2 is re-run from the full caption buffer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DimensionError, TrainingError
from .nn import Adam, DenseLayer, Mlp, glorot_uniform, mlp_from_dict, mlp_to_dict
from .oracles import CaptionBuffer, GeneratorOracle

log = logging.getLogger(__name__)

LOG_CLAMP = 1e-12


@dataclass
class TaskPredictor:
    """MLP over raw features whose softmax width equals the tasks seen so far."""

    network: Mlp

    @property
    def n_tasks(self) -> int:
        return self.network.out_dim

    @property
    def input_dim(self) -> int:
        return self.network.in_dim


def create_predictor(
    input_dim: int,
    n_tasks: int = 1,
    hidden: tuple[int, ...] = (256, 128),
    seed=0,
) -> TaskPredictor:
    rng = np.random.default_rng(seed)
    return TaskPredictor(Mlp.create("tp", [input_dim, *hidden, n_tasks], "relu", "softmax", rng))


def predict_probs(tp: TaskPredictor, x: np.ndarray) -> np.ndarray:
    """Probability vector over pseudo labels (sums to 1)."""
    return tp.network.forward(np.asarray(x, dtype=np.float64))


def predict_task(tp: TaskPredictor, x: np.ndarray) -> int:
    """Most probable pseudo label (1-based task id); ties break to the lowest id."""
    return int(np.argmax(predict_probs(tp, x))) + 1


def predict_task_batch(tp: TaskPredictor, features: np.ndarray) -> np.ndarray:
    probs = tp.network.forward(np.atleast_2d(np.asarray(features, dtype=np.float64)))
    return probs.argmax(axis=1) + 1


def tp_loss(predicted: np.ndarray, pseudo_label: int) -> float:
    """Cross entropy -log p[pseudo] of one predicted distribution."""
    predicted = np.asarray(predicted, dtype=np.float64)
    if not 1 <= pseudo_label <= predicted.size:
        raise DimensionError(f"pseudo label {pseudo_label} outside 1..{predicted.size}")
    if abs(float(predicted.sum()) - 1.0) > 1e-6:
        raise DimensionError("predicted vector is not a probability distribution")
    p = float(predicted[pseudo_label - 1])
    if p < LOG_CLAMP:
        log.warning("clamping probability %.3e at pseudo label %d before log", p, pseudo_label)
        p = LOG_CLAMP
    return float(-np.log(p))


def build_tp_training_set(
    buffer: CaptionBuffer,
    generator: GeneratorOracle,
    generations_per_caption: int = 4,
    noise_scale: float = 0.05,
    seed: int = 0,
) -> list[tuple[np.ndarray, int]]:
    """Generate ``generations_per_caption`` samples per buffered caption.

    Every pair is (generated features, record's task id); no stored task data
    is consulted because none exists.
    """
    if len(buffer) == 0:
        raise TrainingError("caption buffer is empty; nothing to generate from")
    pairs: list[tuple[np.ndarray, int]] = []
    for i, record in enumerate(buffer.records):
        for g in range(generations_per_caption):
            features = generator.generate(record.caption, (seed, i, g), noise_scale)
            pairs.append((features, record.task_id))
    return pairs


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def tp_loss_and_grads(
    tp: TaskPredictor, features: np.ndarray, pseudo_labels: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross entropy over a batch plus analytic gradients.

    The softmax head and the log are fused (gradient at the logits is
    softmax - onehot), which keeps saturated heads finite.
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(pseudo_labels, dtype=int) - 1
    n = x.shape[0]
    trunk = Mlp(tp.network.layers[:-1])
    head = tp.network.layers[-1]

    h = trunk.forward(x) if trunk.layers else x
    z = h @ head.weights.T + head.bias
    logp = _log_softmax(z)
    loss = float(-logp[np.arange(n), labels].mean())

    d_z = np.exp(logp)
    d_z[np.arange(n), labels] -= 1.0
    d_z /= n
    grads = {f"{head.name}.weights": d_z.T @ h, f"{head.name}.bias": d_z.sum(axis=0)}
    if trunk.layers:
        trunk_grads, _ = trunk.backward(x, d_z @ head.weights)
        grads.update(trunk_grads)
    return loss, grads


@dataclass(frozen=True)
class TpTrainConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int | tuple = 0


def train_tp(
    tp: TaskPredictor,
    training_set: list[tuple[np.ndarray, int]],
    config: TpTrainConfig,
) -> tuple[TaskPredictor, list[float]]:
    """Mini-batch training of the routing cross entropy; returns per-epoch means."""
    labels = np.array([pseudo for _, pseudo in training_set], dtype=int)
    missing = set(range(1, tp.n_tasks + 1)) - set(labels.tolist())
    if missing:
        raise TrainingError(f"training set never shows pseudo labels {sorted(missing)}")
    features = np.array([f for f, _ in training_set])

    rng = np.random.default_rng(config.seed)
    adam = Adam(learning_rate=config.learning_rate)
    params = tp.network.params()
    n = features.shape[0]
    trace: list[float] = []
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            loss, grads = tp_loss_and_grads(tp, features[idx], labels[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"divergence at epoch {epoch}")
            adam.step(params, grads)
            epoch_loss += loss * len(idx)
        trace.append(epoch_loss / n)
    return tp, trace


def expand_head(tp: TaskPredictor, new_task_count: int, seed=0) -> TaskPredictor:
    """Widen the softmax head; earlier layers and old output rows carry over.

    The returned predictor still needs a full stage-2 retrain from the caption
    buffer before it can route the new task.
    """
    if new_task_count <= tp.n_tasks:
        raise ContractViolation(
            f"head can only grow: current width {tp.n_tasks}, requested {new_task_count}"
        )
    rng = np.random.default_rng(seed)
    old_head = tp.network.layers[-1]
    weights = glorot_uniform(new_task_count, old_head.in_dim, rng)
    bias = np.zeros(new_task_count)
    weights[: tp.n_tasks] = old_head.weights
    bias[: tp.n_tasks] = old_head.bias
    new_head = DenseLayer(old_head.name, weights, bias, "softmax")
    carried = [
        DenseLayer(layer.name, layer.weights.copy(), layer.bias.copy(), layer.activation)
        for layer in tp.network.layers[:-1]
    ]
    return TaskPredictor(Mlp([*carried, new_head]))


def predictor_to_dict(tp: TaskPredictor) -> dict:
    return {"network": mlp_to_dict(tp.network)}


def predictor_from_dict(d: dict) -> TaskPredictor:
    return TaskPredictor(mlp_from_dict(d["network"]))
