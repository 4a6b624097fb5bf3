"""
ADAM training of GCNNs with manual backpropagation.

Mini-batches are drawn from a per-epoch permutation of the training set,
the permutation coming from the stream (seed, SHUFFLE, epoch), so a run
is fully determined by its seed.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from tqdm import tqdm

from gcnnstab.config.settings import (
    ADAM_EPSILON,
    DEFAULT_BATCH_SIZE,
    DEFAULT_BETAS,
    DEFAULT_EPOCHS,
    DEFAULT_LEARNING_RATE,
)
from gcnnstab.core.filters import ShiftLike
from gcnnstab.core.gcnn import (
    GCNN,
    Gradients,
    Loss,
    Readout,
    gcnn_backward,
    gcnn_forward,
    readout_classify,
)
from gcnnstab.errors import ConfigurationError, InputError, TrainingDivergedError
from gcnnstab.tools.datasets import SignalSet
from gcnnstab.util.rng import Purpose, counter_stream

logger = logging.getLogger(__name__)

TRACE_HEADER = ("epoch", "train_loss", "val_loss", "val_acc")


@dataclass
class LossTrace:
    """Per-epoch losses; validation entries are nan without a validation set."""

    epochs: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)

    def append(self, epoch: int, train: float, val: float, acc: float) -> None:
        self.epochs.append(epoch)
        self.train_loss.append(train)
        self.val_loss.append(val)
        self.val_acc.append(acc)

    def rows(self) -> list[tuple]:
        return list(zip(self.epochs, self.train_loss, self.val_loss, self.val_acc))

    def __len__(self) -> int:
        return len(self.epochs)


class AdamOptimizer:
    """
    ADAM over a tuple of weight arrays.

    Args:
        lr: Learning rate
        betas: Exponential decay rates of the first and second moments
        eps: Denominator offset
    """

    def __init__(
        self,
        lr: float = DEFAULT_LEARNING_RATE,
        betas: tuple[float, float] = DEFAULT_BETAS,
        eps: float = ADAM_EPSILON,
    ):
        if lr < 0:
            raise ConfigurationError(f"Learning rate must be >= 0, got {lr}")
        if not all(0.0 <= b < 1.0 for b in betas):
            raise ConfigurationError(f"ADAM betas must lie in [0, 1), got {betas}")
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self._m: Optional[list[np.ndarray]] = None
        self._v: Optional[list[np.ndarray]] = None

    def step(self, weights: Sequence[np.ndarray], grads: Gradients) -> tuple[np.ndarray, ...]:
        """Return updated copies of weights."""
        if self._m is None or self._v is None:
            self._m = [np.zeros_like(w) for w in weights]
            self._v = [np.zeros_like(w) for w in weights]
        self.step_count += 1
        correction1 = 1.0 - self.beta1**self.step_count
        correction2 = 1.0 - self.beta2**self.step_count

        updated = []
        for i, (w, g) in enumerate(zip(weights, grads)):
            self._m[i] = self.beta1 * self._m[i] + (1.0 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1.0 - self.beta2) * g * g
            m_hat = self._m[i] / correction1
            v_hat = self._v[i] / correction2
            updated.append(w - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return tuple(updated)


def _batch_targets(data: SignalSet, index: np.ndarray) -> np.ndarray:
    return data.targets[..., index]


def evaluate(
    net: GCNN,
    s: ShiftLike,
    data: SignalSet,
    loss: Union[str, Loss],
    readout: Union[str, Readout] = Readout.MAX_NODE_POOLING,
    sources: Optional[Sequence[int]] = None,
) -> tuple[float, float]:
    """
    Loss and accuracy of a network on a whole signal set.

    Accuracy is nan for squared-error targets.
    """
    loss = Loss.parse(loss)
    if len(data) == 0:
        return float("nan"), float("nan")
    output, _ = gcnn_forward(net, s, data.x)
    value, _ = loss.value_and_grad(output, data.targets, readout, sources)
    if loss is Loss.SQUARED_ERROR:
        return value, float("nan")
    predicted = readout_classify(output, readout, sources)
    return value, float(np.mean(predicted == data.targets))


def train_adam(
    net: GCNN,
    s: ShiftLike,
    train: SignalSet,
    loss: Union[str, Loss],
    lr: float = DEFAULT_LEARNING_RATE,
    betas: tuple[float, float] = DEFAULT_BETAS,
    epochs: int = DEFAULT_EPOCHS,
    batch_size: int = DEFAULT_BATCH_SIZE,
    seed: int = 0,
    val: Optional[SignalSet] = None,
    readout: Union[str, Readout] = Readout.MAX_NODE_POOLING,
    sources: Optional[Sequence[int]] = None,
    show_progress: bool = False,
) -> tuple[GCNN, LossTrace]:
    """
    Train a GCNN with ADAM.

    Args:
        net: Initial network (left untouched)
        s: Nominal shift operator
        train: Training signals and targets
        loss: softmax_cross_entropy (integer labels) or squared_error
        lr: Learning rate
        betas: ADAM decay rates
        epochs: Passes over the training set
        batch_size: Mini-batch size
        seed: Shuffling seed
        val: Optional validation set evaluated after every epoch
        readout: Class readout for cross-entropy
        sources: Source nodes for the source-node readout
        show_progress: Whether to show a tqdm progress bar

    Returns:
        (trained network, per-epoch loss trace)

    Raises:
        InputError: Empty training set
        TrainingDivergedError: A batch loss became nan or infinite
    """
    loss = Loss.parse(loss)
    if len(train) == 0:
        raise InputError("Training set is empty")
    if epochs < 0 or batch_size < 1:
        raise ConfigurationError(f"Invalid epochs={epochs} or batch_size={batch_size}")

    optimizer = AdamOptimizer(lr, betas)
    trace = LossTrace()
    weights = net.weights
    current = net

    for epoch in tqdm(range(epochs), desc="Training", disable=not show_progress):
        order = counter_stream(seed, Purpose.SHUFFLE, epoch).permutation(len(train))
        total = 0.0
        for start in range(0, len(train), batch_size):
            index = order[start : start + batch_size]
            output, cache = gcnn_forward(current, s, train.x[:, index])
            value, grad = loss.value_and_grad(
                output, _batch_targets(train, index), readout, sources
            )
            if not np.isfinite(value):
                raise TrainingDivergedError(epoch, value)
            total += value * index.size
            grads = gcnn_backward(current, cache, grad)
            weights = optimizer.step(weights, grads)
            if not all(np.all(np.isfinite(w)) for w in weights):
                raise TrainingDivergedError(epoch, float("nan"))
            current = current.with_weights(weights)

        val_loss, val_acc = float("nan"), float("nan")
        if val is not None and len(val):
            val_loss, val_acc = evaluate(current, s, val, loss, readout, sources)
        trace.append(epoch, total / len(train), val_loss, val_acc)
        logger.debug(
            "epoch %d: train %.5g, val %.5g, acc %.3f", epoch, total / len(train), val_loss, val_acc
        )

    return current, trace
