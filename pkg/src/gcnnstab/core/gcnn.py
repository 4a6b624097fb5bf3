"""
Graph convolutional neural networks built from polynomial filter banks.

Layer l maps F_in input features to F_out output features:

    u_l^{fg} = H_l^{fg}(S) x_{l-1}^g,   x_l^f = sigma_l(sum_g u_l^{fg})

Weights are stored per layer as an (F_out, F_in, K+1) array, so the
filter H_l^{fg} has coefficients weights[l][f, g]. There are no bias
terms. Features travel through the network as (F, n, B) arrays, B being
the batch size.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np

from gcnnstab.config.settings import COEFFICIENT_INIT_SCALE
from gcnnstab.core.filters import GraphFilter, ShiftLike, _matrix
from gcnnstab.core.perturbation import ChainSampler, RESModel
from gcnnstab.errors import ConfigurationError, InputError
from gcnnstab.util.rng import Purpose, counter_stream

logger = logging.getLogger(__name__)

Gradients = tuple[np.ndarray, ...]


class Nonlinearity(str, Enum):
    """Pointwise activations; all satisfy sigma(0) = 0 with C_sigma = 1."""

    RELU = "relu"
    ABS = "abs"
    TANH = "tanh"
    IDENTITY = "identity"

    @classmethod
    def parse(cls, value: Union[str, "Nonlinearity"]) -> "Nonlinearity":
        try:
            return cls(str(getattr(value, "value", value)).lower())
        except ValueError:
            choices = ", ".join(member.value for member in cls)
            raise ConfigurationError(
                f"Unknown nonlinearity '{value}' (choose from {choices})"
            ) from None

    @property
    def lipschitz_constant(self) -> float:
        return 1.0

    def __call__(self, a: np.ndarray) -> np.ndarray:
        if self is Nonlinearity.RELU:
            return np.maximum(a, 0.0)
        if self is Nonlinearity.ABS:
            return np.abs(a)
        if self is Nonlinearity.TANH:
            return np.tanh(a)
        return np.array(a, dtype=float, copy=True)

    def derivative(self, a: np.ndarray) -> np.ndarray:
        """Pointwise (sub)derivative; 0 at the kinks of ReLU and abs."""
        if self is Nonlinearity.RELU:
            return (a > 0.0).astype(float)
        if self is Nonlinearity.ABS:
            return np.sign(a)
        if self is Nonlinearity.TANH:
            return 1.0 - np.tanh(a) ** 2
        return np.ones_like(a, dtype=float)


class StochasticRealizationPolicy(str, Enum):
    """How random shift chains are assigned to the filters of a network."""

    INDEPENDENT_PER_FILTER = "independent_per_filter"
    SHARED_PER_LAYER_SHIFT = "shared_per_layer_shift"

    @classmethod
    def parse(
        cls, value: Union[str, "StochasticRealizationPolicy"]
    ) -> "StochasticRealizationPolicy":
        try:
            return cls(str(getattr(value, "value", value)).lower())
        except ValueError:
            choices = ", ".join(member.value for member in cls)
            raise ConfigurationError(f"Unknown policy '{value}' (choose from {choices})") from None


@dataclass(frozen=True, eq=False)
class GCNN:
    """
    Immutable GCNN description.

    Attributes:
        weights: One (F_out, F_in, K+1) coefficient array per layer
        nonlinearities: Activation of each layer
    """

    weights: tuple[np.ndarray, ...]
    nonlinearities: tuple[Nonlinearity, ...]

    def __post_init__(self):
        weights = tuple(np.array(w, dtype=float) for w in self.weights)
        nonlinearities = tuple(Nonlinearity.parse(s) for s in self.nonlinearities)
        if not weights:
            raise InputError("A GCNN needs at least one layer")
        if len(nonlinearities) != len(weights):
            raise InputError(
                f"{len(weights)} layers but {len(nonlinearities)} nonlinearities"
            )
        order = weights[0].shape[-1] - 1 if weights[0].ndim == 3 else -1
        for layer, w in enumerate(weights):
            if w.ndim != 3 or w.shape[-1] != order + 1 or order < 0:
                raise InputError(f"Layer {layer} weights have invalid shape {w.shape}")
            if layer and w.shape[1] != weights[layer - 1].shape[0]:
                raise InputError(
                    f"Layer {layer} expects {w.shape[1]} input features but layer "
                    f"{layer - 1} produces {weights[layer - 1].shape[0]}"
                )
            if not np.all(np.isfinite(w)):
                raise InputError(f"Layer {layer} has non-finite coefficients")
            w.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "nonlinearities", nonlinearities)

    @classmethod
    def random(
        cls,
        layers: int,
        features: int,
        order: int,
        out_features: int = 1,
        nonlinearity: Union[str, Nonlinearity] = Nonlinearity.RELU,
        seed: int = 0,
        in_features: int = 1,
        scale: float = COEFFICIENT_INIT_SCALE,
    ) -> "GCNN":
        """
        Randomly initialised network with widths in -> F -> ... -> F -> out.

        Coefficients of layer l are N(0, scale^2 / F_in), drawn from the
        stream (seed, INIT, l).
        """
        if layers < 1 or features < 1 or order < 0 or out_features < 1:
            raise ConfigurationError(
                f"Invalid architecture L={layers}, F={features}, K={order}, out={out_features}"
            )
        widths = [in_features] + [features] * (layers - 1) + [out_features]
        weights = []
        for layer in range(layers):
            rng = counter_stream(seed, Purpose.INIT, layer)
            shape = (widths[layer + 1], widths[layer], order + 1)
            weights.append(scale * rng.standard_normal(shape) / np.sqrt(widths[layer]))
        sigma = Nonlinearity.parse(nonlinearity)
        return cls(tuple(weights), (sigma,) * layers)

    @classmethod
    def filter_bank(
        cls, order: int, out_features: int = 1, seed: int = 0, in_features: int = 1
    ) -> "GCNN":
        """Linear filter bank: a single layer with identity activation."""
        return cls.random(
            1, out_features, order, out_features, Nonlinearity.IDENTITY, seed, in_features
        )

    @classmethod
    def from_filters(
        cls,
        banks: Sequence[Sequence[Sequence[GraphFilter]]],
        nonlinearities: Sequence[Union[str, Nonlinearity]],
    ) -> "GCNN":
        """Build from nested filters: banks[l][f][g] is H_l^{fg}."""
        weights = tuple(
            np.array([[flt.coeffs for flt in row] for row in bank]) for bank in banks
        )
        return cls(weights, tuple(nonlinearities))

    @property
    def layers(self) -> int:
        return len(self.weights)

    @property
    def order(self) -> int:
        return self.weights[0].shape[-1] - 1

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def features(self) -> int:
        """Hidden width F (the output width for single-layer nets)."""
        return self.weights[0].shape[0]

    @property
    def num_filters(self) -> int:
        return sum(w.shape[0] * w.shape[1] for w in self.weights)

    @property
    def num_parameters(self) -> int:
        return sum(w.size for w in self.weights)

    def filter(self, layer: int, out_index: int, in_index: int) -> GraphFilter:
        return GraphFilter(self.weights[layer][out_index, in_index])

    def filters(self) -> list[GraphFilter]:
        """Every filter, layer by layer in (f, g) order."""
        return [
            GraphFilter(w[f, g])
            for w in self.weights
            for f in range(w.shape[0])
            for g in range(w.shape[1])
        ]

    def with_weights(self, weights: Sequence[np.ndarray]) -> "GCNN":
        return GCNN(tuple(weights), self.nonlinearities)


@dataclass
class ForwardCache:
    """
    Intermediates of a nominal forward pass.

    Attributes:
        net: Network the pass ran on
        shift: Shift matrix used
        powers: Per layer, (K+1, F_in, n, B) array of S^k x_{l-1}
        pre_activations: Per layer, (F_out, n, B) array of sum_g u^{fg}
        features: Per layer output x_l, (F_out, n, B)
        batched: Whether the input was an n x B matrix
    """

    net: GCNN
    shift: np.ndarray
    powers: list[np.ndarray]
    pre_activations: list[np.ndarray]
    features: list[np.ndarray]
    batched: bool

    @property
    def output(self) -> np.ndarray:
        return _to_output(self.features[-1], self.batched)


def _to_features(net: GCNN, n: int, x: np.ndarray) -> tuple[np.ndarray, bool]:
    """Lift an input signal to the (F_in, n, B) feature layout."""
    x = np.asarray(x, dtype=float)
    in_width = net.widths[0]
    if x.ndim == 0 or x.shape[0] != n:
        raise InputError(f"Input has leading dimension {x.shape[:1]}, expected {n}")
    if x.ndim == 1:
        if in_width != 1:
            raise InputError(f"Network expects {in_width} input features, got a vector")
        return x[None, :, None], False
    if x.ndim == 2:
        if in_width != 1:
            raise InputError(f"Network expects {in_width} input features")
        return x[None, :, :], True
    if x.ndim == 3 and x.shape[1] == in_width:
        return np.transpose(x, (1, 0, 2)), True
    raise InputError(f"Unsupported input shape {x.shape}")


def _to_output(features: np.ndarray, batched: bool) -> np.ndarray:
    """(F, n, B) -> (n, F) for a single signal, (n, F, B) for a batch."""
    if batched:
        return np.transpose(features, (1, 0, 2))
    return features[:, :, 0].T


def _from_output(grad: np.ndarray, batched: bool) -> np.ndarray:
    if batched:
        return np.transpose(grad, (1, 0, 2))
    return grad.T[:, :, None]


def _shift_powers(matrix: np.ndarray, features: np.ndarray, order: int) -> np.ndarray:
    powers = [features]
    for _ in range(order):
        powers.append(np.einsum("ij,gjb->gib", matrix, powers[-1]))
    return np.stack(powers)


def gcnn_forward(net: GCNN, s: ShiftLike, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """
    Nominal forward pass.

    Args:
        net: Network
        s: Shift operator (or its matrix)
        x: Length-n signal, n x B batch, or n x F_in x B feature batch

    Returns:
        (output, cache); output is n x F_out (n x F_out x B for batches)

    Raises:
        InputError: Dimension mismatch
    """
    matrix = _matrix(s)
    current, batched = _to_features(net, matrix.shape[0], x)
    powers, pre_activations, features = [], [], []
    for w, sigma in zip(net.weights, net.nonlinearities):
        z = _shift_powers(matrix, current, net.order)
        u = np.einsum("fgk,kgnb->fnb", w, z)
        current = sigma(u)
        powers.append(z)
        pre_activations.append(u)
        features.append(current)
    cache = ForwardCache(net, matrix, powers, pre_activations, features, batched)
    return cache.output, cache


def _chain_powers(chain: Sequence[np.ndarray], features: np.ndarray) -> np.ndarray:
    powers = [features]
    for matrix in chain:
        powers.append(np.einsum("ij,gjb->gib", matrix, powers[-1]))
    return np.stack(powers)


def gcnn_forward_stochastic(
    net: GCNN,
    m: RESModel,
    policy: Union[str, StochasticRealizationPolicy],
    x: np.ndarray,
    draw_index: int,
    sampler: Optional[ChainSampler] = None,
) -> np.ndarray:
    """
    Forward pass over RES(G, p) realizations.

    Independent-per-filter draws a fresh K-chain for every (layer, f, g),
    visited layer by layer in (f, g) order; shared-per-layer draws one
    K-chain per layer and uses it for the whole bank. The result depends
    only on (m.rng_seed, draw_index).

    Args:
        sampler: Chain source; pass one to inspect how many chains were used
    """
    policy = StochasticRealizationPolicy.parse(policy)
    sampler = sampler or ChainSampler(m, draw_index)
    order = net.order
    current, batched = _to_features(net, m.nominal.n, x)

    for w, sigma in zip(net.weights, net.nonlinearities):
        if policy is StochasticRealizationPolicy.SHARED_PER_LAYER_SHIFT:
            chain = [op.matrix for op in sampler.next_chain(order)]
            u = np.einsum("fgk,kgnb->fnb", w, _chain_powers(chain, current))
        else:
            u = np.zeros((w.shape[0],) + current.shape[1:])
            for f in range(w.shape[0]):
                for g in range(w.shape[1]):
                    chain = [op.matrix for op in sampler.next_chain(order)]
                    z = _chain_powers(chain, current[g : g + 1])[:, 0]
                    u[f] += np.einsum("k,knb->nb", w[f, g], z)
        current = sigma(u)

    return _to_output(current, batched)


def gcnn_backward(net: GCNN, cache: ForwardCache, loss_grad: np.ndarray) -> Gradients:
    """
    Reverse-mode gradients of a scalar loss with respect to every coefficient.

    Args:
        net: Network the cache was produced by
        cache: Result of gcnn_forward(net, ...)
        loss_grad: dLoss/dOutput, same shape as the forward output

    Returns:
        Tuple of arrays shaped like net.weights

    Raises:
        InputError: Cache from another network, or gradient shape mismatch
    """
    if cache.net is not net:
        raise InputError("Forward cache was produced by a different network")
    loss_grad = np.asarray(loss_grad, dtype=float)
    if loss_grad.shape != cache.output.shape:
        raise InputError(
            f"Loss gradient has shape {loss_grad.shape}, expected {cache.output.shape}"
        )

    matrix = cache.shift
    d_features = _from_output(loss_grad, cache.batched)
    grads: list[np.ndarray] = [np.empty(0)] * net.layers
    for layer in range(net.layers - 1, -1, -1):
        w = net.weights[layer]
        sigma = net.nonlinearities[layer]
        d_u = d_features * sigma.derivative(cache.pre_activations[layer])
        grads[layer] = np.einsum("fnb,kgnb->fgk", d_u, cache.powers[layer])
        if layer == 0:
            break
        # sum_k S^k M_k by Horner, M_k = sum_f w[f, :, k] d_u[f]; S is symmetric
        mixed = np.einsum("fgk,fnb->kgnb", w, d_u)
        acc = mixed[-1]
        for k in range(net.order - 1, -1, -1):
            acc = np.einsum("ij,gjb->gib", matrix, acc) + mixed[k]
        d_features = acc
    return tuple(grads)


class Readout(str, Enum):
    """Class-score extraction from the n x F_out network output."""

    MAX_NODE_POOLING = "max_node_pooling"
    SOURCE_NODES = "source_nodes"

    @classmethod
    def parse(cls, value: Union[str, "Readout"]) -> "Readout":
        try:
            return cls(str(getattr(value, "value", value)).lower())
        except ValueError:
            choices = ", ".join(member.value for member in cls)
            raise ConfigurationError(f"Unknown readout '{value}' (choose from {choices})") from None


def _as_batch(output: np.ndarray) -> tuple[np.ndarray, bool]:
    output = np.asarray(output, dtype=float)
    if output.ndim == 2:
        return output[:, :, None], False
    if output.ndim == 3:
        return output, True
    raise InputError(f"Output must be n x F or n x F x B, got shape {output.shape}")


def _class_scores(
    output: np.ndarray, readout: Readout, sources: Optional[Sequence[int]]
) -> tuple[np.ndarray, np.ndarray]:
    """
    Scores (C, B) and the node each score was read from (C, B).

    Max pooling reads feature c at its arg-max node; source-node readout
    reads feature 0 at node sources[c].
    """
    if readout is Readout.MAX_NODE_POOLING:
        nodes = np.argmax(output, axis=0)
        scores = np.take_along_axis(output, nodes[None], axis=0)[0]
        return scores, nodes
    if sources is None or len(sources) == 0:
        raise InputError("Source-node readout needs the candidate source nodes")
    nodes = np.asarray(sources, dtype=np.intp)
    if nodes.min() < 0 or nodes.max() >= output.shape[0]:
        raise InputError(f"Source nodes {list(nodes)} out of range for n={output.shape[0]}")
    scores = output[nodes, 0, :]
    return scores, np.broadcast_to(nodes[:, None], scores.shape)


def readout_classify(
    output: np.ndarray,
    mode: Union[str, Readout] = Readout.MAX_NODE_POOLING,
    sources: Optional[Sequence[int]] = None,
) -> Union[int, np.ndarray]:
    """
    Class label from a network output.

    Max pooling takes the max over nodes per feature, then the argmax over
    features. Ties go to the lowest class index.

    Returns:
        int for an n x F output, an array of B labels for n x F x B
    """
    batch, batched = _as_batch(output)
    scores, _ = _class_scores(batch, Readout.parse(mode), sources)
    labels = np.argmax(scores, axis=0)
    return labels if batched else int(labels[0])


class Loss(str, Enum):
    SOFTMAX_CROSS_ENTROPY = "softmax_cross_entropy"
    SQUARED_ERROR = "squared_error"

    @classmethod
    def parse(cls, value: Union[str, "Loss"]) -> "Loss":
        try:
            return cls(str(getattr(value, "value", value)).lower())
        except ValueError:
            choices = ", ".join(member.value for member in cls)
            raise ConfigurationError(f"Unknown loss '{value}' (choose from {choices})") from None

    def value_and_grad(
        self,
        output: np.ndarray,
        targets: np.ndarray,
        readout: Union[str, Readout] = Readout.MAX_NODE_POOLING,
        sources: Optional[Sequence[int]] = None,
    ) -> tuple[float, np.ndarray]:
        """
        Batch-mean loss and its gradient with respect to the output.

        Squared error compares the output with same-shaped targets:
        mean_b sum (out - t)^2. Cross-entropy takes integer labels and
        applies softmax to the readout scores.
        """
        batch, batched = _as_batch(output)
        size = batch.shape[-1]

        if self is Loss.SQUARED_ERROR:
            targets = np.asarray(targets, dtype=float)
            if targets.shape != np.shape(output):
                raise InputError(
                    f"Targets have shape {targets.shape}, expected {np.shape(output)}"
                )
            residual = np.asarray(output, dtype=float) - targets
            return float(np.sum(residual**2) / size), 2.0 * residual / size

        labels = np.atleast_1d(np.asarray(targets, dtype=np.intp))
        if labels.shape != (size,):
            raise InputError(f"Expected {size} labels, got shape {labels.shape}")
        mode = Readout.parse(readout)
        scores, nodes = _class_scores(batch, mode, sources)
        if labels.min() < 0 or labels.max() >= scores.shape[0]:
            raise InputError(f"Labels must lie in [0, {scores.shape[0]})")

        shifted = scores - scores.max(axis=0, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=0))
        columns = np.arange(size)
        value = float(np.mean(log_norm - shifted[labels, columns]))

        d_scores = np.exp(shifted - log_norm)
        d_scores[labels, columns] -= 1.0
        d_scores /= size

        grad = np.zeros_like(batch)
        classes = np.arange(scores.shape[0])[:, None]
        feature = classes if mode is Readout.MAX_NODE_POOLING else np.zeros_like(classes)
        np.add.at(grad, (nodes, np.broadcast_to(feature, nodes.shape), columns[None, :]), d_scores)
        return value, grad if batched else grad[:, :, 0]
