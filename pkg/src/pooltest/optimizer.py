"""(1+lambda) evolution strategy over design multisets, with Luby restarts.

The search state is a single parent multiset.  Each generation mutates a
chain of lambda offspring (each offspring mutated from the previous one,
not from the parent), then keeps the best of parent and chain.  The
population resets to the all-zero multiset on a Luby schedule while the
best multiset ever evaluated is retained.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import (
    CapExceeded,
    DEFAULT_CAPS,
    EnumerationCaps,
    SecretDistribution,
    TestSpec,
    expected_confidence,
    mutual_information,
)

__all__ = [
    "OBJECTIVES",
    "ESConfig",
    "ESResult",
    "luby",
    "mutate",
    "es_run",
    "exhaustive_best",
]

EXHAUSTIVE_LIMIT = 10**6

OBJECTIVES: dict[str, Callable[..., float]] = {
    "mutual_information": mutual_information,
    "expected_confidence": expected_confidence,
}


def luby(i: int) -> int:
    """i-th term of the Luby restart sequence 1,1,2,1,1,2,4,1,1,2,..."""
    if i < 1:
        raise ValueError(f"luby index must be >= 1, got {i}")
    # Block k ends at index 2^k - 1 with value 2^(k-1); interior indices
    # repeat the sequence from the top.
    while (i + 1) & i:
        i -= (1 << (i.bit_length() - 1)) - 1
    return (i + 1) >> 1


@dataclass(frozen=True)
class ESConfig:
    """Knobs of one optimizer run; ``budget`` counts score evaluations."""

    budget: int
    lambda_: int = 2
    base: int = 100
    seed: int = 0
    objective: str = "expected_confidence"

    def __post_init__(self) -> None:
        if self.lambda_ < 1:
            raise ValueError("lambda_ must be >= 1")
        if self.base < 1:
            raise ValueError("base must be >= 1")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.objective not in OBJECTIVES:
            raise ValueError(
                f"objective must be one of {sorted(OBJECTIVES)}, got {self.objective!r}"
            )


@dataclass(frozen=True)
class ESResult:
    best: tuple[int, ...]
    score: float
    evaluations_used: int
    restarts_performed: int


def mutate(designs: tuple[int, ...], n: int, rng: np.random.Generator) -> tuple[int, ...]:
    """Flip exactly one of the n*m design bits, chosen uniformly."""
    m = len(designs)
    if m < 1 or n < 1:
        raise ValueError("mutate needs at least one design and one patient")
    flat = int(rng.integers(n * m))
    which, bit = divmod(flat, n)
    out = list(designs)
    out[which] ^= 1 << bit
    return tuple(out)


def es_run(
    dist: SecretDistribution,
    m: int,
    spec: TestSpec,
    cfg: ESConfig,
    caps: EnumerationCaps = DEFAULT_CAPS,
    on_evaluation: Callable[[int, float, float], None] | None = None,
    on_restart: Callable[[int], None] | None = None,
) -> ESResult:
    """Run the ES until the evaluation budget is spent.

    Deterministic for a fixed config.  ``on_evaluation(evals, score, best)``
    fires after every scored multiset; ``on_restart(generations)`` fires when
    an interval of ``base * luby(r)`` generations completes and the
    population resets to the zero individual.
    """
    caps.check(dist.n, m)
    score_fn = OBJECTIVES[cfg.objective]
    rng = np.random.default_rng(cfg.seed)

    evaluations = 0
    best: tuple[int, ...] | None = None
    best_score = -math.inf

    def evaluate(designs: tuple[int, ...]) -> float:
        nonlocal evaluations, best, best_score
        score = score_fn(dist, designs, spec, caps)
        evaluations += 1
        if best is None or score > best_score:
            best, best_score = designs, score
        if on_evaluation is not None:
            on_evaluation(evaluations, score, best_score)
        return score

    zero = (0,) * m
    restarts = 0
    interval = 1
    parent, parent_score = zero, evaluate(zero)
    generations_in_interval = 0

    while evaluations < cfg.budget:
        # One generation: a chain of lambda mutations, then selection.
        chain_best: tuple[int, ...] | None = None
        chain_best_score = -math.inf
        current = parent
        for _ in range(cfg.lambda_):
            if evaluations >= cfg.budget:
                break
            current = mutate(current, dist.n, rng)
            score = evaluate(current)
            if score > chain_best_score:
                chain_best, chain_best_score = current, score
        if chain_best is not None and chain_best_score > parent_score:
            parent, parent_score = chain_best, chain_best_score
        generations_in_interval += 1

        if generations_in_interval >= cfg.base * luby(interval):
            if on_restart is not None:
                on_restart(generations_in_interval)
            interval += 1
            generations_in_interval = 0
            if evaluations < cfg.budget:
                restarts += 1
                parent, parent_score = zero, evaluate(zero)

    assert best is not None
    return ESResult(
        best=best,
        score=best_score,
        evaluations_used=evaluations,
        restarts_performed=restarts,
    )


def exhaustive_best(
    dist: SecretDistribution,
    m: int,
    spec: TestSpec,
    objective: str,
    caps: EnumerationCaps = DEFAULT_CAPS,
) -> tuple[tuple[int, ...], float]:
    """Global optimum by enumerating multisets as nondecreasing mask tuples."""
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {sorted(OBJECTIVES)}, got {objective!r}")
    caps.check(dist.n, m)
    count = math.comb((1 << dist.n) + m - 1, m)
    if count > EXHAUSTIVE_LIMIT:
        raise CapExceeded(
            f"{count} multisets exceed the exhaustive-search limit of {EXHAUSTIVE_LIMIT}"
        )
    score_fn = OBJECTIVES[objective]
    best: tuple[int, ...] = ()
    best_score = -math.inf
    for combo in itertools.combinations_with_replacement(range(1 << dist.n), m):
        score = score_fn(dist, combo, spec, caps)
        if score > best_score:
            best, best_score = combo, score
    return best, best_score
