"""
Monte Carlo deviation estimates and closed-form stability bounds.

For a filter, E||H~(S)x - H(S)x||^2 <= n alpha C_L^2 (1-p) ||x||^2 plus a
second-order remainder; for an L-layer GCNN of width F the constant
gains the factor L^2 C_sigma^{2L} F^{2L-2}. Verdicts compare the
empirical mean with the first-order bound under a multiplicative slack.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

import numpy as np

from gcnnstab.config.settings import (
    BOUND_SLACK,
    DEFAULT_LIPSCHITZ_SAMPLES,
    DEFAULT_POLICY,
    LIPSCHITZ_INFLATION,
    SLACK_MIN_P,
)
from gcnnstab.core.filters import (
    FrequencySpace,
    GraphFilter,
    LipschitzEstimate,
    ShiftLike,
    _matrix,
    estimate_integral_lipschitz,
    filter_apply,
    filter_apply_chain,
)
from gcnnstab.core.gcnn import (
    GCNN,
    StochasticRealizationPolicy,
    gcnn_forward,
    gcnn_forward_stochastic,
)
from gcnnstab.core.graph import ShiftOperator, ShiftVariant, max_degree
from gcnnstab.core.perturbation import RESModel, sample_chain
from gcnnstab.errors import ConfigurationError, InputError
from gcnnstab.util.parallel import parallel_map

logger = logging.getLogger(__name__)

REPORT_HEADER = ("p", "trials", "emp_mean", "emp_std", "bound", "C", "cL", "alpha", "verdict")


class Verdict(str, Enum):
    WITHIN_BOUND = "within_bound"
    EXCEEDS_BOUND = "exceeds_bound"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class DeviationStats:
    """Per-trial squared deviations and their summary."""

    mean: float
    std: float
    trials: int
    samples: np.ndarray = field(repr=False)

    @classmethod
    def from_samples(cls, samples: Sequence[float]) -> "DeviationStats":
        values = np.asarray(samples, dtype=float)
        values.setflags(write=False)
        return cls(
            mean=float(np.mean(values)),
            std=float(np.std(values, ddof=1)),
            trials=values.size,
            samples=values,
        )

    @property
    def std_error(self) -> float:
        return self.std / np.sqrt(self.trials)


@dataclass(frozen=True)
class StabilityConstant:
    """
    C = n alpha C_L^2 L^2 C_sigma^{2L} F^{2L-2}, kept as its three factors.

    Filters are the L = F = C_sigma = 1 case.
    """

    n: int
    alpha: float
    c_l: float
    layers: int = 1
    features: int = 1
    c_sigma: float = 1.0

    @property
    def graph_factor(self) -> float:
        return self.n * self.alpha

    @property
    def filter_factor(self) -> float:
        return self.c_l**2

    @property
    def architecture_factor(self) -> float:
        return (
            self.layers**2
            * self.c_sigma ** (2 * self.layers)
            * self.features ** (2 * self.layers - 2)
        )

    @property
    def value(self) -> float:
        return self.graph_factor * self.filter_factor * self.architecture_factor

    def bound(self, p: float, x_norm_sq: float) -> float:
        """First-order bound C (1-p) ||x||^2."""
        return self.value * (1.0 - p) * x_norm_sq


@dataclass(frozen=True)
class StabilityReport:
    """Empirical deviation next to its theoretical bound."""

    empirical_mean_sq_dev: float
    empirical_std: float
    trials: int
    bound_first_order: float
    stability_constant_C: float
    p: float
    alpha: float
    c_L: float
    verdict: Verdict
    constant: Optional[StabilityConstant] = None
    bound_second_order: Optional[float] = None
    x_norm_sq: float = 1.0
    samples: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return self.verdict is not Verdict.EXCEEDS_BOUND


def alpha_for(s: ShiftOperator) -> float:
    """Max degree for adjacency-type operators, 2 for the Laplacian."""
    if s.variant is ShiftVariant.LAPLACIAN:
        return 2.0
    return float(max_degree(s.source))


def _squared_norm(x: np.ndarray) -> float:
    return float(np.sum(np.asarray(x, dtype=float) ** 2))


def _check_trials(trials: int) -> None:
    if trials < 2:
        raise ConfigurationError(f"At least two trials are needed, got {trials}")


def mc_filter_deviation(
    f: GraphFilter,
    s: ShiftLike,
    m: RESModel,
    x: np.ndarray,
    trials: int,
    threads: int = 1,
    show_progress: bool = False,
) -> DeviationStats:
    """
    Monte Carlo estimate of E||H~(S)x - H(S)x||^2.

    Trial t runs the filter over sample_chain(m, K, t), so the estimate
    is the same for any thread count.
    """
    _check_trials(trials)
    nominal = filter_apply(f, s, x)

    def _trial(draw_index: int) -> float:
        chain = [op.matrix for op in sample_chain(m, f.order, draw_index)]
        return _squared_norm(filter_apply_chain(f, chain, x) - nominal)

    samples = parallel_map(
        _trial, range(trials), threads=threads, desc="Filter trials", show_progress=show_progress
    )
    return DeviationStats.from_samples(samples)


def mc_gcnn_deviation(
    net: GCNN,
    s: ShiftLike,
    m: RESModel,
    policy: Union[str, StochasticRealizationPolicy],
    x: np.ndarray,
    trials: int,
    threads: int = 1,
    show_progress: bool = False,
) -> DeviationStats:
    """Monte Carlo estimate of E||Phi~(x) - Phi(x)||_F^2 over the output matrix."""
    _check_trials(trials)
    policy = StochasticRealizationPolicy.parse(policy)
    nominal, _ = gcnn_forward(net, s, x)

    def _trial(draw_index: int) -> float:
        perturbed = gcnn_forward_stochastic(net, m, policy, x, draw_index)
        return _squared_norm(perturbed - nominal)

    samples = parallel_map(
        _trial, range(trials), threads=threads, desc="GCNN trials", show_progress=show_progress
    )
    return DeviationStats.from_samples(samples)


def first_order_bound(
    n: int,
    alpha: float,
    c_l: float,
    p: float,
    x_norm_sq: float,
    layers: int = 1,
    features: int = 1,
    c_sigma: float = 1.0,
) -> float:
    """n alpha c_L^2 L^2 c_sigma^{2L} F^{2L-2} (1-p) ||x||^2 from raw numbers."""
    if not 0.0 < p <= 1.0:
        raise ConfigurationError(f"Sampling probability p={p} must lie in (0, 1]")
    constant = StabilityConstant(n, alpha, c_l, layers, features, c_sigma)
    return constant.bound(p, x_norm_sq)


def _warn_if_uncovered(s: ShiftLike, cl: LipschitzEstimate) -> None:
    space = FrequencySpace.parse(cl.lambda_interval)
    eigenvalues = np.linalg.eigvalsh(_matrix(s))
    if not space.covers(eigenvalues):
        logger.warning(
            "Spectrum [%.4g, %.4g] is not covered by the Lipschitz interval [%.4g, %.4g]",
            eigenvalues[0],
            eigenvalues[-1],
            space.lo,
            space.hi,
        )


@dataclass(frozen=True)
class BoundTerms:
    """Bound side of a stability report."""

    bound_first_order: float
    constant: StabilityConstant
    p: float
    x_norm_sq: float
    bound_second_order: Optional[float] = None


def filter_bound(
    f: GraphFilter,
    s: ShiftOperator,
    m: RESModel,
    x: np.ndarray,
    cl: LipschitzEstimate,
) -> BoundTerms:
    """
    Filter bound n alpha c_L^2 (1-p) ||x||^2.

    Also reports n c_L^2 ||x||^2 (alpha (1-p) + (1-p)^2), the bound with
    its second-order term written out. Warns when the spectrum of S leaves the
    interval c_L was estimated on.
    """
    _warn_if_uncovered(s, cl)
    x_norm_sq = _squared_norm(x)
    constant = StabilityConstant(n=s.n, alpha=alpha_for(s), c_l=cl.c_l)
    q = 1.0 - m.p
    second = s.n * cl.c_l**2 * x_norm_sq * (constant.alpha * q + q * q)
    return BoundTerms(constant.bound(m.p, x_norm_sq), constant, m.p, x_norm_sq, second)


def gcnn_constant(net: GCNN, s: ShiftOperator, cl: LipschitzEstimate) -> StabilityConstant:
    c_sigma = max(sigma.lipschitz_constant for sigma in net.nonlinearities)
    return StabilityConstant(
        n=s.n,
        alpha=alpha_for(s),
        c_l=cl.c_l,
        layers=net.layers,
        features=net.features,
        c_sigma=c_sigma,
    )


def gcnn_bound(
    net: GCNN, s: ShiftOperator, m: RESModel, x: np.ndarray, cl: LipschitzEstimate
) -> float:
    """n alpha c_L^2 L^2 C_sigma^{2L} F^{2L-2} (1-p) ||x||^2, c_L taken over the whole bank."""
    _warn_if_uncovered(s, cl)
    return gcnn_constant(net, s, cl).bound(m.p, _squared_norm(x))


def evaluate_verdict(
    empirical: float,
    bound: float,
    p: float,
    inflated_bound: Optional[float] = None,
    slack: float = BOUND_SLACK,
    min_p: float = SLACK_MIN_P,
) -> Verdict:
    """
    Compare an empirical mean deviation with its first-order bound.

    Anything within bound * (1 + slack) passes. Beyond that the result is
    inconclusive when p is below min_p (the remainder term is not
    negligible there) or when the bound recomputed with an inflated c_L
    still covers it; otherwise the bound is exceeded.

    The slack is only enforced for p >= min_p: below it the same
    tolerance still decides a pass, but no p < min_p ever yields
    EXCEEDS_BOUND, and an excess is never compared with the bare
    first-order bound there.
    """
    limit = bound * (1.0 + slack)
    if empirical <= limit:
        return Verdict.WITHIN_BOUND
    if p < min_p:
        return Verdict.INCONCLUSIVE
    if inflated_bound is not None and empirical <= inflated_bound * (1.0 + slack):
        return Verdict.INCONCLUSIVE
    return Verdict.EXCEEDS_BOUND


def probability_bound(report: StabilityReport, epsilon: float) -> tuple[float, float]:
    """
    Lower bound on Pr[dev^2 <= epsilon] and the observed trial fraction.

    Returns:
        (max(0, 1 - bound / epsilon), fraction of trials with dev^2 <= epsilon);
        the fraction is nan when the report carries no samples
    """
    if not epsilon > 0:
        raise ConfigurationError(f"epsilon must be positive, got {epsilon}")
    lower = max(0.0, 1.0 - report.bound_first_order / epsilon)
    if report.samples is None:
        return lower, float("nan")
    return lower, float(np.mean(report.samples <= epsilon))


def linearity_fit(
    p_grid: Sequence[float], deviations: Sequence[float]
) -> tuple[float, float, float]:
    """
    Least-squares line of deviation against (1 - p).

    Returns:
        (slope, intercept, r^2)

    Raises:
        InputError: Fewer than three points, p < 0.9, constant (1 - p)
            or constant deviations
    """
    p = np.asarray(p_grid, dtype=float)
    y = np.asarray(deviations, dtype=float)
    if p.size < 3 or p.size != y.size:
        raise InputError("linearity_fit needs at least three (p, deviation) pairs")
    if np.any(p < 0.9) or np.any(p > 1.0):
        raise InputError("linearity_fit is only meaningful for 0.9 <= p <= 1")
    loss = 1.0 - p
    if np.ptp(loss) == 0.0 or np.ptp(y) == 0.0:
        raise InputError("Degenerate grid: no variation to fit")

    slope, intercept = np.polyfit(loss, y, 1)
    residual = y - (slope * loss + intercept)
    r2 = 1.0 - float(np.sum(residual**2)) / float(np.sum((y - y.mean()) ** 2))
    return float(slope), float(intercept), r2


def _report(
    stats: DeviationStats,
    constant: StabilityConstant,
    inflated: StabilityConstant,
    p: float,
    x_norm_sq: float,
    slack: float,
    second_order: Optional[float] = None,
) -> StabilityReport:
    bound = constant.bound(p, x_norm_sq)
    verdict = evaluate_verdict(
        stats.mean, bound, p, inflated_bound=inflated.bound(p, x_norm_sq), slack=slack
    )
    if verdict is not Verdict.WITHIN_BOUND:
        logger.warning(
            "Deviation %.4g vs bound %.4g at p=%s: %s", stats.mean, bound, p, verdict.value
        )
    return StabilityReport(
        empirical_mean_sq_dev=stats.mean,
        empirical_std=stats.std,
        trials=stats.trials,
        bound_first_order=bound,
        stability_constant_C=constant.value,
        p=p,
        alpha=constant.alpha,
        c_L=constant.c_l,
        verdict=verdict,
        constant=constant,
        bound_second_order=second_order,
        x_norm_sq=x_norm_sq,
        samples=stats.samples,
    )


def _check_response(cl: LipschitzEstimate) -> None:
    if cl.max_response > 1.0:
        logger.warning(
            "Filter response reaches %.4g > 1 on the sampled frequency space", cl.max_response
        )


def verify_filter_stability(
    f: GraphFilter,
    m: RESModel,
    x: np.ndarray,
    trials: int,
    cl: Optional[LipschitzEstimate] = None,
    lipschitz_samples: int = DEFAULT_LIPSCHITZ_SAMPLES,
    slack: float = BOUND_SLACK,
    threads: int = 1,
    show_progress: bool = False,
) -> StabilityReport:
    """
    Monte Carlo deviation, bound and verdict for one filter.

    c_L is estimated over [-rho(S), rho(S)] with the model seed unless given.
    """
    s = m.nominal
    if cl is None:
        cl = estimate_integral_lipschitz(
            f, FrequencySpace.from_shift(s), lipschitz_samples, m.rng_seed, threads=threads
        )
    _check_response(cl)
    stats = mc_filter_deviation(f, s, m, x, trials, threads, show_progress)
    terms = filter_bound(f, s, m, x, cl)
    inflated = StabilityConstant(s.n, terms.constant.alpha, cl.inflated(LIPSCHITZ_INFLATION).c_l)
    return _report(
        stats, terms.constant, inflated, m.p, terms.x_norm_sq, slack, terms.bound_second_order
    )


def estimate_network_lipschitz(
    net: GCNN, s: ShiftOperator, n_samples: int, seed: int, threads: int = 1
) -> LipschitzEstimate:
    """Worst-case c_L over every filter of the network."""
    space = FrequencySpace.from_shift(s)
    return LipschitzEstimate.combine(
        [
            estimate_integral_lipschitz(flt, space, n_samples, seed, threads=threads)
            for flt in net.filters()
        ]
    )


def verify_gcnn_stability(
    net: GCNN,
    m: RESModel,
    x: np.ndarray,
    trials: int,
    policy: Union[str, StochasticRealizationPolicy] = DEFAULT_POLICY,
    cl: Optional[LipschitzEstimate] = None,
    lipschitz_samples: int = DEFAULT_LIPSCHITZ_SAMPLES,
    slack: float = BOUND_SLACK,
    threads: int = 1,
    show_progress: bool = False,
) -> StabilityReport:
    """Monte Carlo deviation, bound and verdict for a GCNN."""
    s = m.nominal
    if cl is None:
        cl = estimate_network_lipschitz(net, s, lipschitz_samples, m.rng_seed, threads)
    _check_response(cl)
    _warn_if_uncovered(s, cl)
    stats = mc_gcnn_deviation(net, s, m, policy, x, trials, threads, show_progress)
    constant = gcnn_constant(net, s, cl)
    inflated = gcnn_constant(net, s, cl.inflated(LIPSCHITZ_INFLATION))
    return _report(stats, constant, inflated, m.p, _squared_norm(x), slack)


def report_row(report: StabilityReport) -> tuple:
    """CSV row matching REPORT_HEADER."""
    return (
        report.p,
        report.trials,
        report.empirical_mean_sq_dev,
        report.empirical_std,
        report.bound_first_order,
        report.stability_constant_C,
        report.c_L,
        report.alpha,
        report.verdict.value,
    )
