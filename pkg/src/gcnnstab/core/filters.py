"""
Polynomial graph filters and their spectral machinery.

A filter H(S) = sum_k h_k S^k is defined by its coefficients alone. Over a
chain of random shifts it becomes sum_k h_k S_k ... S_1, whose analytic
counterpart is the generalized frequency response

    h(lambda) = sum_k h_k prod_{kappa <= k} lambda_kappa,   lambda in R^K.

The Lipschitz gradient gives the exact difference identity
h(l1) - h(l2) = grad_L(l1, l2)^T (l1 - l2), and the generalized integral
Lipschitz constant C_L bounds both ||grad_L|| and ||l1 * grad_L|| over a
frequency interval.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.polynomial import polynomial as P

from gcnnstab.config.settings import (
    DEFAULT_REFINE_ROUNDS,
    LIPSCHITZ_CHUNK_SIZE,
)
from gcnnstab.core.graph import ShiftOperator, SpectralDecomposition
from gcnnstab.errors import ConfigurationError, InputError
from gcnnstab.util.parallel import chunk_ranges, parallel_map
from gcnnstab.util.rng import Purpose, counter_stream

logger = logging.getLogger(__name__)

# A point of the frequency space Lambda^K; lambda_0 = 1 is implicit.
FrequencyVector = np.ndarray

ShiftLike = Union[ShiftOperator, np.ndarray]


def _matrix(s: ShiftLike) -> np.ndarray:
    return s.matrix if isinstance(s, ShiftOperator) else np.asarray(s, dtype=float)


@dataclass(frozen=True, eq=False)
class GraphFilter:
    """Coefficients [h_0, ..., h_K] of a polynomial graph filter."""

    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float).reshape(-1)
        if coeffs.size == 0:
            raise InputError("A graph filter needs at least one coefficient")
        if not np.all(np.isfinite(coeffs)):
            raise InputError("Filter coefficients must be finite")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def order(self) -> int:
        return self.coeffs.size - 1

    def to_text(self) -> str:
        """Plain text line of decimal values."""
        return " ".join(repr(float(c)) for c in self.coeffs)

    @classmethod
    def from_text(cls, line: str) -> "GraphFilter":
        try:
            values = [float(tok) for tok in line.replace(",", " ").split()]
        except ValueError as e:
            raise InputError(f"Invalid filter coefficient line: {line!r}") from e
        return cls(np.array(values))

    def __repr__(self) -> str:
        return f"GraphFilter(order={self.order}, coeffs=[{self.to_text()}])"


@dataclass(frozen=True)
class FrequencySpace:
    """Closed interval [lo, hi] that every frequency variable lives in."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.lo >= self.hi:
            raise ConfigurationError(
                f"Invalid frequency interval [{self.lo}, {self.hi}]"
            )

    @classmethod
    def from_shift(cls, s: ShiftOperator) -> "FrequencySpace":
        """[-rho(S), rho(S)] for the nominal shift operator."""
        radius = s.spectral_radius()
        if radius <= 0.0:
            raise ConfigurationError("Shift operator has zero spectrum; give an interval")
        return cls(-radius, radius)

    @classmethod
    def parse(cls, value) -> "FrequencySpace":
        if isinstance(value, cls):
            return value
        try:
            lo, hi = value
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"Frequency interval must be [lo, hi], got {value!r}") from e
        return cls(float(lo), float(hi))

    def covers(self, eigenvalues: np.ndarray, atol: float = 1e-9) -> bool:
        eigenvalues = np.asarray(eigenvalues)
        return bool(np.all(eigenvalues >= self.lo - atol) and np.all(eigenvalues <= self.hi + atol))

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=shape)


def _check_signal(n: int, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[0] != n:
        raise InputError(f"Signal has leading dimension {x.shape[:1]}, expected {n}")
    return x


def filter_apply(f: GraphFilter, s: ShiftLike, x: np.ndarray) -> np.ndarray:
    """
    Apply H(S) x = sum_k h_k S^k x by iterated shifts.

    x may be a vector of length n or an n x B matrix of B signals.
    """
    matrix = _matrix(s)
    z = _check_signal(matrix.shape[0], x)
    y = f.coeffs[0] * z
    for h_k in f.coeffs[1:]:
        z = matrix @ z
        y = y + h_k * z
    return y


def filter_apply_chain(
    f: GraphFilter, chain: Sequence[ShiftLike], x: np.ndarray
) -> np.ndarray:
    """
    Apply the random-chain filter h_0 x + sum_k h_k S_k ... S_1 x.

    Args:
        f: Filter of order K
        chain: K shift operators; chain[k-1] is S_k
        x: Signal vector (or n x B matrix)

    Raises:
        InputError: chain length differs from K, or sizes mismatch
    """
    if len(chain) != f.order:
        raise InputError(f"Chain has {len(chain)} shifts but filter order is {f.order}")
    matrices = [_matrix(s) for s in chain]
    n = matrices[0].shape[0] if matrices else np.asarray(x).shape[0]
    if any(m.shape != (n, n) for m in matrices):
        raise InputError("All chain members must be n x n")

    z = _check_signal(n, x)
    y = f.coeffs[0] * z
    for h_k, matrix in zip(f.coeffs[1:], matrices):
        z = matrix @ z
        y = y + h_k * z
    return y


def spectral_filter_apply(
    f: GraphFilter, decomposition: SpectralDecomposition, x: np.ndarray
) -> np.ndarray:
    """Apply the filter in the graph spectral domain: V diag(h(lambda_i)) V^T x."""
    x_hat = decomposition.gft(_check_signal(decomposition.eigenvalues.size, x))
    response = frequency_response(f, decomposition.eigenvalues)
    if x_hat.ndim > 1:
        response = response[:, None]
    return decomposition.igft(response * x_hat)


def frequency_response(f: GraphFilter, lam):
    """Univariate frequency response h(lambda) = sum_k h_k lambda^k (Horner)."""
    return P.polyval(lam, f.coeffs)


def _check_frequency_vector(f: GraphFilter, lv) -> np.ndarray:
    lv = np.asarray(lv, dtype=float)
    if lv.ndim == 0 or lv.shape[-1] != f.order:
        raise InputError(
            f"Frequency vector has shape {lv.shape}, expected last axis {f.order}"
        )
    return lv


def generalized_frequency_response(f: GraphFilter, lv) -> Union[float, np.ndarray]:
    """
    h(lambda) = sum_k h_k prod_{kappa=1..k} lambda_kappa.

    lv has shape (..., K); leading axes are evaluated in batch.
    """
    if f.order == 0:
        lv = np.asarray(lv, dtype=float)
        shape = lv.shape[:-1] if lv.ndim else ()
        value = np.full(shape, f.coeffs[0])
        return float(value) if value.ndim == 0 else value

    lv = _check_frequency_vector(f, lv)
    prefix = np.cumprod(lv, axis=-1)
    value = f.coeffs[0] + prefix @ f.coeffs[1:]
    return float(value) if np.ndim(value) == 0 else value


def lipschitz_gradient(f: GraphFilter, l1, l2) -> np.ndarray:
    """
    Lipschitz gradient of the generalized frequency response.

    Entry k is dh/dlambda_k evaluated at the mixed point whose first k
    entries come from l1 and the rest from l2. Since h is affine in each
    coordinate, this equals

        prod_{kappa<k} l1_kappa * sum_{j>=k} h_j prod_{k<kappa<=j} l2_kappa.

    l1 and l2 have shape (..., K); the result has the same shape.
    """
    l1 = _check_frequency_vector(f, l1)
    l2 = _check_frequency_vector(f, l2)
    if l1.shape != l2.shape:
        raise InputError(f"Frequency vectors differ in shape: {l1.shape} vs {l2.shape}")

    order = f.order
    h = f.coeffs
    if order == 0:
        return np.zeros_like(l1)
    tail = np.empty_like(l2)
    tail[..., order - 1] = h[order]
    for k in range(order - 2, -1, -1):
        tail[..., k] = h[k + 1] + l2[..., k + 1] * tail[..., k + 1]

    head = np.ones_like(l1)
    head[..., 1:] = np.cumprod(l1[..., :-1], axis=-1)
    return head * tail


@dataclass(frozen=True)
class LipschitzEstimate:
    """
    Sampled generalized integral Lipschitz constant.

    c_plain and c_scaled are the observed maxima of ||grad_L h|| and
    ||l1 * grad_L h||; c_l is their max. All are lower bounds on the
    true supremum over the interval.
    """

    c_plain: float
    c_scaled: float
    c_l: float
    samples_used: int
    lambda_interval: tuple[float, float]
    max_response: float = float("nan")

    @classmethod
    def combine(cls, estimates: Sequence["LipschitzEstimate"]) -> "LipschitzEstimate":
        """Worst case over a bank of filters sharing one interval."""
        if not estimates:
            raise InputError("No estimates to combine")
        return cls(
            c_plain=max(e.c_plain for e in estimates),
            c_scaled=max(e.c_scaled for e in estimates),
            c_l=max(e.c_l for e in estimates),
            samples_used=sum(e.samples_used for e in estimates),
            lambda_interval=estimates[0].lambda_interval,
            max_response=max(e.max_response for e in estimates),
        )

    def inflated(self, fraction: float) -> "LipschitzEstimate":
        factor = 1.0 + fraction
        return LipschitzEstimate(
            c_plain=self.c_plain * factor,
            c_scaled=self.c_scaled * factor,
            c_l=self.c_l * factor,
            samples_used=self.samples_used,
            lambda_interval=self.lambda_interval,
            max_response=self.max_response,
        )


def _chunk_maxima(f: GraphFilter, space: FrequencySpace, seed: int, index: int, size: int):
    rng = counter_stream(seed, Purpose.LIPSCHITZ, index)
    pairs = space.sample(rng, (size, 2, f.order))
    l1, l2 = pairs[:, 0, :], pairs[:, 1, :]
    grad = lipschitz_gradient(f, l1, l2)
    plain = np.linalg.norm(grad, axis=-1)
    scaled = np.linalg.norm(l1 * grad, axis=-1)
    response = np.abs(generalized_frequency_response(f, np.concatenate([l1, l2])))
    best = int(np.argmax(np.maximum(plain, scaled)))
    return float(plain.max()), float(scaled.max()), float(response.max()), pairs[best]


def _refine(
    f: GraphFilter, space: FrequencySpace, start: np.ndarray, rounds: int
) -> tuple[float, float]:
    """Coordinate-wise grid search around the best sampled pair."""

    def norms(pair):
        grad = lipschitz_gradient(f, pair[0], pair[1])
        return float(np.linalg.norm(grad)), float(np.linalg.norm(pair[0] * grad))

    point = start.copy()
    best_plain, best_scaled = norms(point)
    score = max(best_plain, best_scaled)
    radius = (space.hi - space.lo) / 4.0
    for _ in range(rounds):
        for side in range(2):
            for k in range(f.order):
                center = point[side, k]
                grid = np.clip(
                    np.linspace(center - radius, center + radius, 9), space.lo, space.hi
                )
                for value in grid:
                    trial = point.copy()
                    trial[side, k] = value
                    plain, scaled = norms(trial)
                    best_plain = max(best_plain, plain)
                    best_scaled = max(best_scaled, scaled)
                    if max(plain, scaled) > score:
                        point, score = trial, max(plain, scaled)
        radius /= 2.0
    return best_plain, best_scaled


def estimate_integral_lipschitz(
    f: GraphFilter,
    interval,
    n_samples: int,
    seed: int,
    refine_rounds: int = DEFAULT_REFINE_ROUNDS,
    threads: int = 1,
) -> LipschitzEstimate:
    """
    Estimate the generalized integral Lipschitz constant by sampling.

    Draws n_samples uniform pairs (l1, l2) from interval^K in fixed-size
    chunks, each chunk from its own counter stream, so the sample set for
    n samples is a prefix of the set for any larger n and the result does
    not depend on the thread count.

    Args:
        f: Filter
        interval: (lo, hi) or FrequencySpace
        n_samples: Number of sampled pairs (>= 1)
        seed: Random seed
        refine_rounds: Grid-refinement rounds around the best sample
        threads: Worker threads for the chunk map

    Raises:
        ConfigurationError: Invalid interval or sample count
    """
    space = FrequencySpace.parse(interval)
    if n_samples < 1:
        raise ConfigurationError(f"n_samples must be >= 1, got {n_samples}")

    bounds = (space.lo, space.hi)
    if f.order == 0:
        return LipschitzEstimate(0.0, 0.0, 0.0, n_samples, bounds, abs(float(f.coeffs[0])))

    chunks = chunk_ranges(n_samples, LIPSCHITZ_CHUNK_SIZE)
    results = parallel_map(
        lambda item: _chunk_maxima(f, space, seed, item[0], len(item[1])),
        list(enumerate(chunks)),
        threads=threads,
    )
    c_plain = max(r[0] for r in results)
    c_scaled = max(r[1] for r in results)
    response = max(r[2] for r in results)

    if refine_rounds > 0:
        best = max(results, key=lambda r: max(r[0], r[1]))[3]
        plain, scaled = _refine(f, space, best, refine_rounds)
        c_plain, c_scaled = max(c_plain, plain), max(c_scaled, scaled)

    return LipschitzEstimate(
        c_plain=c_plain,
        c_scaled=c_scaled,
        c_l=max(c_plain, c_scaled),
        samples_used=n_samples,
        lambda_interval=bounds,
        max_response=response,
    )


def max_response(f: GraphFilter, interval, n_samples: int, seed: int) -> float:
    """Largest |h(lambda)| over n_samples uniform points of interval^K."""
    space = FrequencySpace.parse(interval)
    if f.order == 0:
        return abs(float(f.coeffs[0]))
    rng = counter_stream(seed, Purpose.RESPONSE)
    points = space.sample(rng, (n_samples, f.order))
    return float(np.max(np.abs(generalized_frequency_response(f, points))))


def univariate_integral_lipschitz(
    f: GraphFilter, interval, grid: int = 2001
) -> tuple[float, float]:
    """
    Deterministic integral Lipschitz constants on a dense grid.

    Returns:
        (max |h'(lambda)|, max |lambda h'(lambda)|) over the interval
    """
    space = FrequencySpace.parse(interval)
    lam = np.linspace(space.lo, space.hi, grid)
    derivative = P.polyval(lam, P.polyder(f.coeffs)) if f.order else np.zeros_like(lam)
    return float(np.max(np.abs(derivative))), float(np.max(np.abs(lam * derivative)))


def response_gap(f: GraphFilter, lv, p: float) -> float:
    """|h(lambda) - h(p lambda)|: response change on the expected RES graph."""
    lv = _check_frequency_vector(f, lv)
    return abs(
        generalized_frequency_response(f, lv) - generalized_frequency_response(f, p * lv)
    )
