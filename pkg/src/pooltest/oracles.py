"""Brute-force reference implementations.

Everything in this module trades speed for obviousness: plain Python
loops over the full joint table, exhaustive policy enumeration, and the
closed-form two-stage pooling cost.  The fast paths in :mod:`model` are
tested against these, so nothing here may import their internals beyond
the shared scalar pieces (:func:`model.positive_prob` and the data types).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator

from .model import (
    CapExceeded,
    Prior,
    SecretDistribution,
    TestSpec,
    positive_prob,
)

__all__ = [
    "ORACLE_MAX_TOTAL",
    "PolicyNode",
    "DorfmanPlan",
    "naive_joint_scores",
    "enumerate_policies",
    "policy_expected_mi",
    "optimal_adaptive_policy",
    "dorfman_expected_tests",
]

ORACLE_MAX_TOTAL = 20  # n + m beyond this makes the 2^(n+m) table unreasonable

POLICY_MAX_N = 3
POLICY_MAX_BUDGET = 2


def _likelihood(outcomes, secret, designs, spec) -> float:
    like = 1.0
    for bit, design in zip(outcomes, designs):
        q = positive_prob(design, secret, spec)
        like *= q if bit else 1.0 - q
    return like


def naive_joint_scores(
    dist: SecretDistribution,
    designs: tuple[int, ...],
    spec: TestSpec,
) -> tuple[float, float]:
    """(conditional entropy, expected confidence) from the full joint table.

    Builds Pr[S=s, T=t] for every one of the 2^(n+m) pairs and sums the
    definitions directly.
    """
    n, m = dist.n, len(designs)
    if n + m > ORACLE_MAX_TOTAL:
        raise CapExceeded(f"naive oracle limited to n+m <= {ORACLE_MAX_TOTAL}, got {n + m}")

    prior = [float(p) for p in dist.mass]
    cond_entropy = 0.0
    confidence = 0.0
    for outcomes in itertools.product((0, 1), repeat=m):
        joint = [prior[s] * _likelihood(outcomes, s, designs, spec) for s in range(1 << n)]
        p_t = sum(joint)
        if p_t <= 0.0:
            continue
        confidence += max(joint)
        for p_st in joint:
            if p_st > 0.0:
                cond_entropy -= p_st * math.log2(p_st / p_t)
    return cond_entropy, confidence


@dataclass(frozen=True)
class PolicyNode:
    """One test of an adaptive decision tree; children keyed by the result."""

    design: int
    on_negative: "PolicyNode | None" = None
    on_positive: "PolicyNode | None" = None


def enumerate_policies(n: int, depth: int) -> Iterator[PolicyNode | None]:
    """All complete policy trees of uniform ``depth`` over n-patient designs."""
    if depth == 0:
        yield None
        return
    subtrees = list(enumerate_policies(n, depth - 1))
    for design in range(1 << n):
        for neg in subtrees:
            for pos in subtrees:
                yield PolicyNode(design, neg, pos)


def _entropy(weights) -> float:
    return -sum(w * math.log2(w) for w in weights if w > 0.0)


def policy_expected_mi(
    dist: SecretDistribution,
    spec: TestSpec,
    tree: PolicyNode | None,
) -> float:
    """Expected terminal mutual information of running ``tree`` to its leaves.

    H(S) minus the expectation, over reachable outcome paths, of the
    terminal posterior entropy; zero-probability paths are skipped.
    """
    n = dist.n
    prior = [float(p) for p in dist.mass]

    def expected_leaf_entropy(weights, node) -> float:
        total = sum(weights)
        if total <= 0.0:
            return 0.0
        if node is None:
            return total * _entropy([w / total for w in weights])
        pos_profile = [positive_prob(node.design, s, spec) for s in range(1 << n)]
        neg = [w * (1.0 - q) for w, q in zip(weights, pos_profile)]
        pos = [w * q for w, q in zip(weights, pos_profile)]
        return expected_leaf_entropy(neg, node.on_negative) + expected_leaf_entropy(
            pos, node.on_positive
        )

    return _entropy(prior) - expected_leaf_entropy(prior, tree)


def optimal_adaptive_policy(
    dist: SecretDistribution,
    spec: TestSpec,
    budget: int,
) -> tuple[PolicyNode | None, float]:
    """Exhaustively best adaptive policy of uniform depth ``budget``.

    The search space is (2^n)^(2^budget - 1) trees, so this is a toy-scale
    comparator only.
    """
    if dist.n > POLICY_MAX_N or budget > POLICY_MAX_BUDGET:
        raise CapExceeded(
            f"policy search limited to n <= {POLICY_MAX_N}, budget <= {POLICY_MAX_BUDGET}"
        )
    if budget < 0:
        raise ValueError("budget must be >= 0")
    best_tree: PolicyNode | None = None
    best_value = 0.0
    for tree in enumerate_policies(dist.n, budget):
        value = policy_expected_mi(dist, spec, tree)
        if best_tree is None or value > best_value + 1e-15:
            best_tree, best_value = tree, value
    return best_tree, best_value


@dataclass(frozen=True)
class DorfmanPlan:
    """Two-stage plan: pool each group, then retest members of positive pools.

    Groups hold 0-based patient indices and must partition range(n).
    """

    n: int
    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        groups = tuple(tuple(int(i) for i in g) for g in self.groups)
        seen = [i for g in groups for i in g]
        if sorted(seen) != list(range(self.n)):
            raise ValueError(f"groups must partition the {self.n} patients, got {groups!r}")
        object.__setattr__(self, "groups", groups)

    def group_mask(self, index: int) -> int:
        mask = 0
        for i in self.groups[index]:
            mask |= 1 << i
        return mask


def dorfman_expected_tests(plan: DorfmanPlan, prior: Prior, spec: TestSpec) -> float:
    """Expected total tests of the two-stage scheme under independent priors."""
    if prior.n != plan.n:
        raise ValueError(f"plan is for n={plan.n}, prior has n={prior.n}")
    expected = float(len(plan.groups))
    for group in plan.groups:
        tpr, tnr = spec.rates_for_pool(len(group))
        p_all_healthy = math.prod(1.0 - prior.probs[i] for i in group)
        p_positive = tpr * (1.0 - p_all_healthy) + (1.0 - tnr) * p_all_healthy
        expected += len(group) * p_positive
    return expected
