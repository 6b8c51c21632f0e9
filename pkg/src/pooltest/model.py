"""Exact Bayesian model for pooled testing over n patients.

The unknown infection state (the *secret*) and every pool design are
n-bit masks stored as plain ints: bit ``i - 1`` holds patient ``i``.
The string form used everywhere at the boundaries puts patient 1 in the
leftmost character, so ``"100"`` means "patient 1 infected, 2 and 3
healthy" and converts to mask ``0b001``.

All distributions over secrets are dense float64 tables of length 2^n.
Everything here is a pure function of immutable values; entropies are in
bits (log base 2, with 0·log 0 = 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping

import numpy as np

__all__ = [
    "PoolTestError",
    "ZeroProbabilityOutcome",
    "CapExceeded",
    "EnumerationCaps",
    "DEFAULT_CAPS",
    "TestSpec",
    "Prior",
    "SecretDistribution",
    "DiagnosisReport",
    "mask_to_string",
    "mask_from_string",
    "prior_to_distribution",
    "positive_prob",
    "outcome_likelihood",
    "posterior",
    "entropy",
    "conditional_entropy",
    "mutual_information",
    "ml_diagnosis",
    "expected_confidence",
    "marginals",
    "diagnose",
    "outcome_table",
]


class PoolTestError(Exception):
    """Base class for domain errors raised by this package."""


class ZeroProbabilityOutcome(PoolTestError):
    """The observed outcome has probability zero under the current model."""


class CapExceeded(PoolTestError):
    """A requested computation is larger than the configured exact-enumeration cap."""


def _check_probability(value: float, name: str) -> None:
    if not (0.0 <= value <= 1.0):
        raise ValueError(f"{name} must be in [0, 1], got {value!r}")


@dataclass(frozen=True)
class EnumerationCaps:
    """Limits on exact enumeration: 2^(n+m) work doubles per unit of either."""

    max_n: int = 16
    max_m: int = 16
    max_total: int = 28

    def check(self, n: int, m: int = 0) -> None:
        if n > self.max_n or m > self.max_m or n + m > self.max_total:
            raise CapExceeded(
                f"n={n}, m={m} exceeds enumeration caps "
                f"(max_n={self.max_n}, max_m={self.max_m}, max_total={self.max_total})"
            )


DEFAULT_CAPS = EnumerationCaps()


@dataclass(frozen=True)
class TestSpec:
    """Error model of the lab test.

    ``tpr`` is the probability of a positive result when the pool contains
    at least one infected sample; ``tnr`` the probability of a negative
    result when it contains none.  ``by_pool_size`` optionally overrides
    both rates for pools of an exact size (dilution effects).
    """

    __test__ = False  # keep pytest from collecting the Test* name

    tpr: float
    tnr: float
    by_pool_size: Mapping[int, tuple[float, float]] | None = None

    def __post_init__(self) -> None:
        _check_probability(self.tpr, "tpr")
        _check_probability(self.tnr, "tnr")
        if self.by_pool_size is not None:
            norm: dict[int, tuple[float, float]] = {}
            for k, (tpr_k, tnr_k) in self.by_pool_size.items():
                if int(k) < 1:
                    raise ValueError(f"pool size keys must be >= 1, got {k!r}")
                _check_probability(tpr_k, f"tpr for pool size {k}")
                _check_probability(tnr_k, f"tnr for pool size {k}")
                norm[int(k)] = (float(tpr_k), float(tnr_k))
            object.__setattr__(self, "by_pool_size", norm)

    def rates_for_pool(self, size: int) -> tuple[float, float]:
        """(tpr, tnr) effective for a pool of ``size`` samples."""
        if self.by_pool_size is not None and size in self.by_pool_size:
            return self.by_pool_size[size]
        return self.tpr, self.tnr


@dataclass(frozen=True)
class Prior:
    """Independent per-patient infection probabilities; index i-1 is patient i."""

    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.probs) < 1:
            raise ValueError("prior needs at least one patient")
        probs = tuple(float(p) for p in self.probs)
        for i, p in enumerate(probs):
            _check_probability(p, f"prior for patient {i + 1}")
        object.__setattr__(self, "probs", probs)

    @property
    def n(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class SecretDistribution:
    """Dense probability table over all 2^n secrets."""

    n: int
    mass: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        mass = np.asarray(self.mass, dtype=np.float64)
        if mass.shape != (1 << self.n,):
            raise ValueError(f"mass must have length 2^{self.n}, got shape {mass.shape}")
        if np.any(mass < 0):
            raise ValueError("mass entries must be non-negative")
        total = float(mass.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mass must sum to 1 within 1e-9, got {total!r}")
        mass = mass.copy()
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)


@dataclass(frozen=True)
class DiagnosisReport:
    """Maximum-posterior readout of a distribution."""

    ml_secret: int
    confidence: float
    marginals: tuple[float, ...]
    entropy_bits: float

    def ml_secret_string(self, n: int | None = None) -> str:
        return mask_to_string(self.ml_secret, n or len(self.marginals))


def mask_to_string(mask: int, n: int) -> str:
    """Render a mask as n chars, patient 1 leftmost."""
    if not 0 <= mask < (1 << n):
        raise ValueError(f"mask {mask} out of range for n={n}")
    return "".join("1" if (mask >> i) & 1 else "0" for i in range(n))


def mask_from_string(text: str) -> int:
    """Parse the string form back into a mask; n is implied by the length."""
    if not text or any(c not in "01" for c in text):
        raise ValueError(f"design/secret string must be non-empty over {{0,1}}, got {text!r}")
    mask = 0
    for i, c in enumerate(text):
        if c == "1":
            mask |= 1 << i
    return mask


def prior_to_distribution(prior: Prior, caps: EnumerationCaps = DEFAULT_CAPS) -> SecretDistribution:
    """Product law of independent Bernoulli(p_i) infections."""
    caps.check(prior.n)
    n = prior.n
    states = np.arange(1 << n, dtype=np.uint32)
    mass = np.ones(1 << n, dtype=np.float64)
    for i, p in enumerate(prior.probs):
        infected = (states >> i) & 1
        mass *= np.where(infected, p, 1.0 - p)
    return SecretDistribution(n, mass)


def positive_prob(design: int, secret: int, spec: TestSpec) -> float:
    """P[test positive] for one design against one fixed secret."""
    tpr, tnr = spec.rates_for_pool(design.bit_count())
    return tpr if design & secret else 1.0 - tnr


def _hit_profile(design: int, n: int, spec: TestSpec) -> np.ndarray:
    """P[test positive | S=s] for all 2^n secrets at once."""
    tpr, tnr = spec.rates_for_pool(design.bit_count())
    hits = (np.arange(1 << n, dtype=np.uint32) & np.uint32(design)) != 0
    return np.where(hits, tpr, 1.0 - tnr)


def outcome_likelihood(
    outcomes: tuple[int, ...],
    secret: int,
    designs: tuple[int, ...],
    spec: TestSpec,
) -> float:
    """P[T=t | S=s]: tests are conditionally independent given the secret."""
    if len(outcomes) != len(designs):
        raise ValueError(f"{len(outcomes)} outcomes for {len(designs)} designs")
    like = 1.0
    for bit, design in zip(outcomes, designs):
        q = positive_prob(design, secret, spec)
        like *= q if bit else 1.0 - q
    return like


def posterior(
    dist: SecretDistribution,
    designs: tuple[int, ...],
    outcomes: tuple[int, ...],
    spec: TestSpec,
) -> SecretDistribution:
    """Bayes update of ``dist`` on observed results; the input is unmodified."""
    if len(outcomes) != len(designs):
        raise ValueError(f"{len(outcomes)} outcomes for {len(designs)} designs")
    w = dist.mass.copy()
    for bit, design in zip(outcomes, designs):
        profile = _hit_profile(design, dist.n, spec)
        w *= profile if bit else 1.0 - profile
    total = float(w.sum())
    if total <= 0.0:
        raise ZeroProbabilityOutcome(
            "observed outcome has probability 0 under this prior and test model"
        )
    return SecretDistribution(dist.n, w / total)


def _entropy_bits(weights: np.ndarray) -> float:
    nz = weights[weights > 0]
    return float(-(nz * np.log2(nz)).sum())


def entropy(dist: SecretDistribution) -> float:
    """Shannon entropy of the secret in bits; in [0, n]."""
    return _entropy_bits(dist.mass)


def outcome_table(
    dist: SecretDistribution,
    designs: tuple[int, ...],
    spec: TestSpec,
    caps: EnumerationCaps = DEFAULT_CAPS,
) -> Iterator[tuple[tuple[int, ...], float, np.ndarray]]:
    """Yield (outcome bits, P[T=t], unnormalized joint mass over secrets).

    Zero-probability outcomes are skipped.  Work is O(2^(n+m)) via a
    branching pass that reuses partial products, so callers must respect
    the enumeration caps.
    """
    caps.check(dist.n, len(designs))
    profiles = [_hit_profile(d, dist.n, spec) for d in designs]

    def walk(w: np.ndarray, j: int, bits: tuple[int, ...]):
        if not w.any():
            return
        if j == len(designs):
            yield bits, float(w.sum()), w
            return
        yield from walk(w * (1.0 - profiles[j]), j + 1, bits + (0,))
        yield from walk(w * profiles[j], j + 1, bits + (1,))

    yield from walk(dist.mass.copy(), 0, ())


def conditional_entropy(
    dist: SecretDistribution,
    designs: tuple[int, ...],
    spec: TestSpec,
    caps: EnumerationCaps = DEFAULT_CAPS,
) -> float:
    """Expected posterior entropy over all 2^m outcomes, in bits."""
    total = 0.0
    for _bits, prob, w in outcome_table(dist, designs, spec, caps):
        total += prob * _entropy_bits(w / prob)
    return total


def mutual_information(
    dist: SecretDistribution,
    designs: tuple[int, ...],
    spec: TestSpec,
    caps: EnumerationCaps = DEFAULT_CAPS,
) -> float:
    """Expected entropy reduction from observing the whole multiset, in bits."""
    return max(0.0, entropy(dist) - conditional_entropy(dist, designs, spec, caps))


def ml_diagnosis(dist: SecretDistribution) -> tuple[int, float]:
    """Most probable secret and its mass; ties go to the smallest index."""
    idx = int(np.argmax(dist.mass))
    return idx, float(dist.mass[idx])


def expected_confidence(
    dist: SecretDistribution,
    designs: tuple[int, ...],
    spec: TestSpec,
    caps: EnumerationCaps = DEFAULT_CAPS,
) -> float:
    """E over outcomes of the top posterior mass.

    Each outcome contributes P[t] * max_s posterior(s), which telescopes to
    the max of the unnormalized joint column.
    """
    total = 0.0
    for _bits, _prob, w in outcome_table(dist, designs, spec, caps):
        total += float(w.max())
    return total


def marginals(dist: SecretDistribution) -> tuple[float, ...]:
    """Per-patient infection probabilities P[s_i = 1] under ``dist``."""
    states = np.arange(1 << dist.n, dtype=np.uint32)
    return tuple(
        float(dist.mass[((states >> i) & 1) == 1].sum()) for i in range(dist.n)
    )


def diagnose(dist: SecretDistribution) -> DiagnosisReport:
    """Bundle the ML readout, marginals and residual entropy."""
    ml, conf = ml_diagnosis(dist)
    return DiagnosisReport(
        ml_secret=ml,
        confidence=conf,
        marginals=marginals(dist),
        entropy_bits=entropy(dist),
    )
