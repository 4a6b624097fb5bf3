"""
Invariant suite behind ``gcnnstab selftest``.

Each check is a small seeded experiment with a known answer: algebraic
identities, the p = 1 degeneracy, the two-node closed form, moment
identities, gradient correctness and the bounds themselves.
"""

import logging
import time
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from tqdm import tqdm

from gcnnstab.core.filters import (
    GraphFilter,
    filter_apply,
    generalized_frequency_response,
    lipschitz_gradient,
    spectral_filter_apply,
)
from gcnnstab.core.gcnn import GCNN, Loss, gcnn_backward, gcnn_forward, gcnn_forward_stochastic
from gcnnstab.core.graph import (
    Graph,
    ShiftVariant,
    eigendecompose,
    max_degree,
    sbm_generate,
    shift_from_graph,
)
from gcnnstab.core.perturbation import RESModel, check_moments
from gcnnstab.core.stability import (
    Verdict,
    first_order_bound,
    mc_filter_deviation,
    mc_gcnn_deviation,
    verify_filter_stability,
)
from gcnnstab.util.rng import Purpose, counter_stream

logger = logging.getLogger(__name__)

# Random (filter, lambda1, lambda2) triples, orders 1..6.
LIPSCHITZ_CASES = 1000


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _lipschitz_identity(seed: int) -> tuple[bool, str]:
    rng = counter_stream(seed, Purpose.RESPONSE, 0)
    worst = 0.0
    for _ in range(LIPSCHITZ_CASES):
        order = int(rng.integers(1, 7))
        f = GraphFilter(rng.standard_normal(order + 1))
        l1, l2 = rng.uniform(-1, 1, (2, order))
        lhs = generalized_frequency_response(f, l1) - generalized_frequency_response(f, l2)
        rhs = float(lipschitz_gradient(f, l1, l2) @ (l1 - l2))
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
    return worst <= 1e-10, f"{LIPSCHITZ_CASES} cases, max relative error {worst:.2e}"


def _spectral_consistency(seed: int) -> tuple[bool, str]:
    rng = counter_stream(seed, Purpose.RESPONSE, 1)
    worst = 0.0
    for i in range(100):
        s = shift_from_graph(sbm_generate(12, 3, 0.8, 0.2, seed + i), "normalized_adjacency")
        f = GraphFilter(rng.standard_normal(int(rng.integers(1, 6))))
        x = rng.standard_normal(s.n)
        diff = filter_apply(f, s, x) - spectral_filter_apply(f, eigendecompose(s), x)
        worst = max(worst, float(np.max(np.abs(diff))))
    return worst <= 1e-8, f"max abs difference {worst:.2e}"


def _p_one_degeneracy(seed: int) -> tuple[bool, str]:
    s = shift_from_graph(sbm_generate(12, 3, 0.8, 0.2, seed), "normalized_adjacency")
    m = RESModel.from_shift(s, 1.0, seed)
    net = GCNN.random(2, 3, 3, 1, "tanh", seed=seed)
    x = counter_stream(seed, Purpose.SIGNAL).standard_normal(s.n)
    nominal, _ = gcnn_forward(net, s, x)
    perturbed = gcnn_forward_stochastic(net, m, "independent_per_filter", x, 0)
    gap = float(np.max(np.abs(perturbed - nominal)))
    f_dev = mc_filter_deviation(GraphFilter(np.array([0.1, 0.5, 0.2])), s, m, x, 5).mean
    g_dev = mc_gcnn_deviation(net, s, m, "shared_per_layer_shift", x, 5).mean
    e_max = float(np.max(np.abs(m.error(0).matrix)))
    ok = gap <= 1e-12 and e_max == 0.0 and f_dev == 0.0 and g_dev == 0.0
    return ok, f"forward gap {gap:.1e}, |E| {e_max}, deviations {f_dev}, {g_dev}"


def _error_support(seed: int) -> tuple[bool, str]:
    g = sbm_generate(10, 2, 0.8, 0.2, seed)
    bad = []
    for variant in ShiftVariant:
        m = RESModel.from_shift(shift_from_graph(g, variant), 0.7, seed)
        for draw in range(50):
            if not m.error(draw, position=draw % 3).removes_edges_only(m.nominal):
                bad.append(f"{variant.value}#{draw}")
    return not bad, "all deviations remove edges" if not bad else f"invalid: {', '.join(bad[:5])}"


def _two_node_oracle(seed: int) -> tuple[bool, str]:
    s = shift_from_graph(Graph.from_edges(2, [(0, 1)]), "adjacency")
    f = GraphFilter(np.array([0.0, 1.0]))
    x = np.array([1.0, 0.0])
    details = []
    ok = True
    for p in (0.5, 0.9):
        stats = mc_filter_deviation(f, s, RESModel.from_shift(s, p, seed), x, 20000)
        expected = 1.0 - p
        ok &= abs(stats.mean - expected) <= 3.0 * stats.std_error
        details.append(f"p={p}: {stats.mean:.4f} vs {expected:.4f}")
    return bool(ok), "; ".join(details)


def _moment_identities(seed: int) -> tuple[bool, str]:
    g = sbm_generate(8, 2, 0.8, 0.2, seed)
    draws = 20000
    p = 0.8
    # Laplacian diagonal entries sum up to max_degree edge indicators
    first_tol = 5.0 * np.sqrt(p * (1 - p) * max(1, max_degree(g)) / draws)
    details = []
    ok = True
    for variant in (ShiftVariant.ADJACENCY, ShiftVariant.LAPLACIAN):
        m = RESModel.from_shift(shift_from_graph(g, variant), p, seed)
        first, second = check_moments(m, draws)
        ok &= first <= first_tol and second is not None and second <= 0.15
        details.append(f"{variant.value}: {first:.4f}/{second:.4f}")
    return bool(ok), "; ".join(details)


def _gradient_check(seed: int) -> tuple[bool, str]:
    s = shift_from_graph(sbm_generate(6, 2, 0.8, 0.3, seed), "normalized_adjacency")
    net = GCNN.random(2, 2, 2, 2, "tanh", seed=seed)
    rng = counter_stream(seed, Purpose.SIGNAL, 1)
    x = rng.standard_normal((s.n, 3))
    targets = rng.standard_normal((s.n, 2, 3))

    def loss_at(candidate: GCNN) -> float:
        out, _ = gcnn_forward(candidate, s, x)
        return Loss.SQUARED_ERROR.value_and_grad(out, targets)[0]

    out, cache = gcnn_forward(net, s, x)
    _, d_out = Loss.SQUARED_ERROR.value_and_grad(out, targets)
    grads = gcnn_backward(net, cache, d_out)
    worst = 0.0
    step = 1e-6
    for layer, w in enumerate(net.weights):
        for index in np.ndindex(w.shape):
            plus, minus = [np.array(v) for v in net.weights], [np.array(v) for v in net.weights]
            plus[layer][index] += step
            minus[layer][index] -= step
            fd = (loss_at(net.with_weights(plus)) - loss_at(net.with_weights(minus))) / (2 * step)
            worst = max(worst, abs(fd - grads[layer][index]) / max(1.0, abs(fd)))
    return worst <= 1e-5, f"max relative error {worst:.2e}"


def _bound_arithmetic(seed: int) -> tuple[bool, str]:
    value = first_order_bound(10, 2.0, 0.5, 0.99, 1.0)
    return abs(value - 0.05) <= 1e-12, f"bound {value!r}"


def _filter_bound(seed: int) -> tuple[bool, str]:
    s = shift_from_graph(sbm_generate(12, 3, 0.8, 0.2, seed), "adjacency")
    m = RESModel.from_shift(s, 0.99, seed)
    f = GraphFilter(np.array([0.2, 0.3, 0.2]))
    x = counter_stream(seed, Purpose.SIGNAL).standard_normal(s.n)
    report = verify_filter_stability(f, m, x, 200, lipschitz_samples=4000)
    detail = f"{report.empirical_mean_sq_dev:.4g} vs bound {report.bound_first_order:.4g}"
    return report.verdict is not Verdict.EXCEEDS_BOUND, detail


CHECKS: dict[str, Callable[[int], tuple[bool, str]]] = {
    "lipschitz_identity": _lipschitz_identity,
    "spectral_consistency": _spectral_consistency,
    "p_one_degeneracy": _p_one_degeneracy,
    "error_support": _error_support,
    "two_node_oracle": _two_node_oracle,
    "moment_identities": _moment_identities,
    "gradient_check": _gradient_check,
    "bound_arithmetic": _bound_arithmetic,
    "filter_bound": _filter_bound,
}


def run_selftest(seed: int = 0, show_progress: bool = False) -> list[CheckResult]:
    """
    Run every check.

    A check that raises counts as failed, with the exception as detail.

    Returns:
        One CheckResult per check, in CHECKS order
    """
    results = []
    for name, check in tqdm(CHECKS.items(), desc="Self-test", disable=not show_progress):
        start = time.perf_counter()
        try:
            passed, detail = check(seed)
        except Exception as e:
            logger.exception("Check %s raised", name)
            passed, detail = False, f"{type(e).__name__}: {e}"
        results.append(CheckResult(name, bool(passed), detail, time.perf_counter() - start))
        logger.debug("%s: %s (%s)", name, "ok" if passed else "FAILED", detail)
    return results
