"""Greedy-adaptive test selection and the session state machine.

One round of the adaptive loop: score every candidate design by the
information its outcome is expected to reveal, run the best one in the
lab, fold the observed result into the posterior, repeat while budget
remains.  Sessions are immutable values; ``observe``/``undo`` return new
sessions and the recorded history is always the source of truth for the
current posterior.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .model import (
    CapExceeded,
    DEFAULT_CAPS,
    EnumerationCaps,
    PoolTestError,
    Prior,
    SecretDistribution,
    TestSpec,
    _entropy_bits,
    _hit_profile,
    entropy,
    mutual_information,
    posterior,
    prior_to_distribution,
)
from .optimizer import ESConfig, es_run
from .oracles import PolicyNode

__all__ = [
    "DESIGN_ENUMERATION_CAP",
    "BudgetExhausted",
    "EmptyHistory",
    "Recommendation",
    "Session",
    "TraceStep",
    "new_session",
    "single_design_gains",
    "greedy_next_design",
    "observe",
    "undo",
    "k_greedy_batch",
    "run_greedy_policy",
    "greedy_policy_tree",
]

DESIGN_ENUMERATION_CAP = 12  # 2^n candidate designs are scored exhaustively up to here


class BudgetExhausted(PoolTestError):
    """No tests remain in the session budget."""


class EmptyHistory(PoolTestError):
    """Undo requested on a session with no observations."""


@dataclass(frozen=True)
class Recommendation:
    """Designs to run next and what they are expected to teach us."""

    designs: tuple[int, ...]
    expected_gain_bits: float
    alternatives: tuple[tuple[int, float], ...] = ()
    exhaustive: bool = True  # False when the ES fallback picked the design


@dataclass(frozen=True)
class Session:
    """Adaptive-loop state: priors, what was run, what came back."""

    prior: Prior
    spec: TestSpec
    budget: int
    history: tuple[tuple[int, int], ...]
    current: SecretDistribution

    @property
    def n(self) -> int:
        return self.prior.n

    @property
    def remaining_budget(self) -> int:
        return self.budget - len(self.history)


def new_session(
    prior: Prior,
    spec: TestSpec,
    budget: int,
    caps: EnumerationCaps = DEFAULT_CAPS,
) -> Session:
    if budget < 0:
        raise ValueError("budget must be >= 0")
    return Session(
        prior=prior,
        spec=spec,
        budget=budget,
        history=(),
        current=prior_to_distribution(prior, caps),
    )


def _recomputed(session: Session, history: tuple[tuple[int, int], ...]) -> SecretDistribution:
    """One-shot posterior of the whole history; the empty history is the
    prior itself, bypassing a no-op renormalization so that undoing back to
    any earlier state reproduces it bit for bit."""
    base = prior_to_distribution(session.prior)
    if not history:
        return base
    designs = tuple(d for d, _ in history)
    results = tuple(r for _, r in history)
    return posterior(base, designs, results, session.spec)


def single_design_gains(dist: SecretDistribution, spec: TestSpec) -> np.ndarray:
    """Mutual information of every single design, indexed by mask.

    Specialized two-outcome form of the general scorer: splitting the mass
    on one test costs O(2^n) per candidate instead of a full outcome tree.
    """
    h_prior = entropy(dist)
    gains = np.empty(1 << dist.n)
    for mask in range(1 << dist.n):
        profile = _hit_profile(mask, dist.n, spec)
        w_pos = dist.mass * profile
        w_neg = dist.mass - w_pos
        h_after = 0.0
        for w in (w_neg, w_pos):
            p = float(w.sum())
            if p > 0.0:
                h_after += p * _entropy_bits(w / p)
        gains[mask] = max(0.0, h_prior - h_after)
    return gains


def greedy_next_design(
    dist: SecretDistribution,
    spec: TestSpec,
    top_alternatives: int = 3,
    design_cap: int = DESIGN_ENUMERATION_CAP,
    fallback: ESConfig | None = None,
) -> Recommendation:
    """Single design with maximal expected information gain.

    Up to ``design_cap`` patients all 2^n designs are scored and ties break
    toward the smallest mask.  Beyond the cap a short single-design ES run
    picks the design instead, flagged with ``exhaustive=False``.
    """
    if dist.n > design_cap:
        cfg = fallback or ESConfig(
            budget=64 * dist.n, lambda_=2, base=dist.n, seed=0,
            objective="mutual_information",
        )
        result = es_run(dist, 1, spec, cfg)
        return Recommendation(
            designs=result.best,
            expected_gain_bits=result.score,
            exhaustive=False,
        )
    gains = single_design_gains(dist, spec)
    best = int(np.argmax(gains))  # argmax returns the first = smallest mask
    order = sorted(range(len(gains)), key=lambda mask: (-gains[mask], mask))
    runners = [mask for mask in order if mask != best][:top_alternatives]
    return Recommendation(
        designs=(best,),
        expected_gain_bits=float(gains[best]),
        alternatives=tuple((mask, float(gains[mask])) for mask in runners),
    )


def observe(session: Session, design: int, result: int) -> Session:
    """Fold one lab result into the session; any design may be observed.

    The update commutes and composes, so the stored posterior is always
    recomputed from the full history: observe-then-undo round-trips
    exactly, not just within tolerance.
    """
    if session.remaining_budget <= 0:
        raise BudgetExhausted(f"all {session.budget} tests already used")
    if result not in (0, 1):
        raise ValueError(f"result must be 0 or 1, got {result!r}")
    if not 0 <= design < (1 << session.n):
        raise ValueError(f"design {design} out of range for n={session.n}")
    # Validate the new observation against the current posterior first so a
    # zero-probability result is reported for this step, not the whole chain.
    posterior(session.current, (design,), (result,), session.spec)
    history = session.history + ((design, result),)
    return replace(session, history=history, current=_recomputed(session, history))


def undo(session: Session) -> Session:
    """Remove the last observation; the posterior is recomputed from scratch."""
    if not session.history:
        raise EmptyHistory("no observations to undo")
    history = session.history[:-1]
    return replace(session, history=history, current=_recomputed(session, history))


def k_greedy_batch(
    dist: SecretDistribution,
    spec: TestSpec,
    batch_size: int,
    caps: EnumerationCaps = DEFAULT_CAPS,
    design_cap: int = DESIGN_ENUMERATION_CAP,
) -> Recommendation:
    """Batch of designs chosen by sequential greedy augmentation.

    Starts empty and repeatedly adds the single design that maximizes the
    joint information of the partial batch; the reported gain is the joint
    value of the full batch.  Exact batch argmax is combinatorial, so this
    is the one-design-at-a-time relaxation.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if dist.n > design_cap:
        raise CapExceeded(
            f"k-greedy enumerates 2^n designs; n={dist.n} exceeds cap {design_cap}"
        )
    caps.check(dist.n, batch_size)
    batch: tuple[int, ...] = ()
    joint_gain = 0.0
    for _ in range(batch_size):
        best_mask, best_gain = 0, -1.0
        for mask in range(1 << dist.n):
            gain = mutual_information(dist, batch + (mask,), spec, caps)
            if gain > best_gain + 1e-15:
                best_mask, best_gain = mask, gain
        batch += (best_mask,)
        joint_gain = best_gain
    return Recommendation(designs=batch, expected_gain_bits=joint_gain)


@dataclass(frozen=True)
class TraceStep:
    design: int
    result: int
    expected_gain_bits: float
    entropy_before: float
    entropy_after: float


def run_greedy_policy(
    prior: Prior,
    spec: TestSpec,
    m: int,
    result_source: Callable[[int], int],
    caps: EnumerationCaps = DEFAULT_CAPS,
) -> tuple[Session, tuple[TraceStep, ...]]:
    """Drive m rounds of recommend-observe; results come from ``result_source``."""
    session = new_session(prior, spec, m, caps)
    trace: list[TraceStep] = []
    for _ in range(m):
        recommendation = greedy_next_design(session.current, spec)
        design = recommendation.designs[0]
        before = entropy(session.current)
        result = int(result_source(design))
        session = observe(session, design, result)
        trace.append(
            TraceStep(
                design=design,
                result=result,
                expected_gain_bits=recommendation.expected_gain_bits,
                entropy_before=before,
                entropy_after=entropy(session.current),
            )
        )
    return session, tuple(trace)


def greedy_policy_tree(
    dist: SecretDistribution,
    spec: TestSpec,
    depth: int,
) -> PolicyNode | None:
    """Decision tree the greedy rule would follow for every outcome path.

    Branches whose outcome has probability zero get no subtree; evaluating
    the tree skips them anyway.
    """
    if depth == 0:
        return None
    design = greedy_next_design(dist, spec, top_alternatives=0).designs[0]
    profile = _hit_profile(design, dist.n, spec)
    children: list[PolicyNode | None] = []
    for weights in (dist.mass * (1.0 - profile), dist.mass * profile):
        total = float(weights.sum())
        if total <= 0.0:
            children.append(None)
        else:
            child_dist = SecretDistribution(dist.n, weights / total)
            children.append(greedy_policy_tree(child_dist, spec, depth - 1))
    return PolicyNode(design, children[0], children[1])
