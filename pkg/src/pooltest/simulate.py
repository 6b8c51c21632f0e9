"""Monte-Carlo harness comparing pooling strategies on sampled ground truth.

Each trial draws a secret from the prior, executes one strategy against
noisy simulated lab results, then diagnoses with the exact posterior over
everything that was observed.  Reproducibility contract: trial ``t`` of a
scenario with seed ``s`` always uses the substream seeded by ``(s, t)``,
so results are identical no matter how trials are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, TextIO, Union

import numpy as np

from . import adaptive
from .model import (
    DEFAULT_CAPS,
    EnumerationCaps,
    Prior,
    SecretDistribution,
    TestSpec,
    diagnose,
    mask_from_string,
    positive_prob,
    posterior,
    prior_to_distribution,
)
from .oracles import DorfmanPlan

__all__ = [
    "NonAdaptive",
    "GreedyAdaptive",
    "KGreedy",
    "Dorfman",
    "Strategy",
    "Scenario",
    "TrialRecord",
    "Report",
    "sample_secret",
    "sample_outcome",
    "run_scenario",
    "compare",
    "trial_csv_header",
    "trial_csv_row",
    "write_compare_csv",
    "parse_scenario_text",
]


@dataclass(frozen=True)
class NonAdaptive:
    designs: tuple[int, ...]


@dataclass(frozen=True)
class GreedyAdaptive:
    budget: int


@dataclass(frozen=True)
class KGreedy:
    batch_size: int
    budget: int


@dataclass(frozen=True)
class Dorfman:
    groups: tuple[tuple[int, ...], ...]


Strategy = Union[NonAdaptive, GreedyAdaptive, KGreedy, Dorfman]


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    prior: Prior
    spec: TestSpec
    strategy: Strategy
    trials: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass(frozen=True)
class TrialRecord:
    secret: int
    designs: tuple[int, ...]
    outcomes: tuple[int, ...]
    ml_secret: int
    confidence: float
    correct: bool
    predicted: tuple[int, ...]
    true_bits: tuple[int, ...]
    marginals: tuple[float, ...]
    tests_used: int
    entropy_bits: float


@dataclass(frozen=True)
class Report:
    scenario_id: str
    trials: int
    accuracy: float
    accuracy_se: float
    mean_confidence: float
    confidence_se: float
    mean_tests: float
    tests_se: float
    mean_entropy_bits: float
    entropy_se: float
    sensitivity: tuple[float | None, ...]
    specificity: tuple[float | None, ...]


def sample_secret(prior: Prior, rng: np.random.Generator) -> int:
    """Draw each patient's bit independently from the prior."""
    bits = rng.random(prior.n) < np.asarray(prior.probs)
    return int(sum(1 << i for i, b in enumerate(bits) if b))


def sample_outcome(design: int, secret: int, spec: TestSpec, rng: np.random.Generator) -> int:
    """One noisy lab result for a pool against the true secret."""
    return int(rng.random() < positive_prob(design, secret, spec))


def _execute(
    strategy: Strategy,
    prior: Prior,
    spec: TestSpec,
    secret: int,
    rng: np.random.Generator,
    caps: EnumerationCaps,
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Run one strategy against the secret; returns (designs, outcomes)."""
    lab = lambda d: sample_outcome(d, secret, spec, rng)

    if isinstance(strategy, NonAdaptive):
        designs = strategy.designs
        return designs, tuple(lab(d) for d in designs)

    if isinstance(strategy, GreedyAdaptive):
        _, trace = adaptive.run_greedy_policy(prior, spec, strategy.budget, lab, caps)
        return tuple(s.design for s in trace), tuple(s.result for s in trace)

    if isinstance(strategy, KGreedy):
        dist = prior_to_distribution(prior, caps)
        designs: tuple[int, ...] = ()
        outcomes: tuple[int, ...] = ()
        remaining = strategy.budget
        while remaining > 0:
            batch = adaptive.k_greedy_batch(
                dist, spec, min(strategy.batch_size, remaining), caps
            ).designs
            results = tuple(lab(d) for d in batch)
            dist = posterior(dist, batch, results, spec)
            designs += batch
            outcomes += results
            remaining -= len(batch)
        return designs, outcomes

    if isinstance(strategy, Dorfman):
        plan = DorfmanPlan(prior.n, strategy.groups)
        designs = tuple(plan.group_mask(i) for i in range(len(plan.groups)))
        outcomes = tuple(lab(d) for d in designs)
        for group, pooled in zip(plan.groups, outcomes):
            if pooled:
                for patient in group:
                    singleton = 1 << patient
                    designs += (singleton,)
                    outcomes += (lab(singleton),)
        return designs, outcomes

    raise TypeError(f"unknown strategy {strategy!r}")


def _run_trial(sc: Scenario, trial: int, caps: EnumerationCaps) -> TrialRecord:
    rng = np.random.default_rng([sc.seed, trial])
    secret = sample_secret(sc.prior, rng)
    designs, outcomes = _execute(sc.strategy, sc.prior, sc.spec, secret, rng, caps)
    dist = posterior(prior_to_distribution(sc.prior, caps), designs, outcomes, sc.spec)
    report = diagnose(dist)
    n = sc.prior.n
    return TrialRecord(
        secret=secret,
        designs=designs,
        outcomes=outcomes,
        ml_secret=report.ml_secret,
        confidence=report.confidence,
        correct=report.ml_secret == secret,
        predicted=tuple((report.ml_secret >> i) & 1 for i in range(n)),
        true_bits=tuple((secret >> i) & 1 for i in range(n)),
        marginals=report.marginals,
        tests_used=len(designs),
        entropy_bits=report.entropy_bits,
    )


def _mean_se(values: list[float]) -> tuple[float, float]:
    k = len(values)
    mean = sum(values) / k
    if k < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (k - 1)
    return mean, math.sqrt(var / k)


def run_scenario(
    sc: Scenario,
    caps: EnumerationCaps = DEFAULT_CAPS,
    on_trial: Callable[[int, TrialRecord], None] | None = None,
) -> Report:
    """Run all trials and aggregate; ``on_trial`` can stream records out."""
    n = sc.prior.n
    correct: list[float] = []
    confidence: list[float] = []
    tests: list[float] = []
    entropies: list[float] = []
    true_pos = [0] * n
    pred_pos_given_true = [0] * n
    true_neg = [0] * n
    pred_neg_given_false = [0] * n

    for trial in range(sc.trials):
        record = _run_trial(sc, trial, caps)
        if on_trial is not None:
            on_trial(trial, record)
        correct.append(1.0 if record.correct else 0.0)
        confidence.append(record.confidence)
        tests.append(float(record.tests_used))
        entropies.append(record.entropy_bits)
        for i in range(n):
            if record.true_bits[i]:
                true_pos[i] += 1
                pred_pos_given_true[i] += record.predicted[i]
            else:
                true_neg[i] += 1
                pred_neg_given_false[i] += 1 - record.predicted[i]

    accuracy, accuracy_se = _mean_se(correct)
    mean_conf, conf_se = _mean_se(confidence)
    mean_tests, tests_se = _mean_se(tests)
    mean_entropy, entropy_se = _mean_se(entropies)
    sensitivity = tuple(
        pred_pos_given_true[i] / true_pos[i] if true_pos[i] else None for i in range(n)
    )
    specificity = tuple(
        pred_neg_given_false[i] / true_neg[i] if true_neg[i] else None for i in range(n)
    )
    return Report(
        scenario_id=sc.scenario_id,
        trials=sc.trials,
        accuracy=accuracy,
        accuracy_se=accuracy_se,
        mean_confidence=mean_conf,
        confidence_se=conf_se,
        mean_tests=mean_tests,
        tests_se=tests_se,
        mean_entropy_bits=mean_entropy,
        entropy_se=entropy_se,
        sensitivity=sensitivity,
        specificity=specificity,
    )


def compare(
    scenarios: Iterable[Scenario],
    caps: EnumerationCaps = DEFAULT_CAPS,
) -> list[Report]:
    """Run each scenario; rows align for side-by-side comparison."""
    return [run_scenario(sc, caps) for sc in scenarios]


def _g6(x: float) -> str:
    return format(x, ".6g")


def trial_csv_header(n: int) -> str:
    marginal_cols = ",".join(f"marginal_pred_{i + 1}" for i in range(n))
    true_cols = ",".join(f"true_{i + 1}" for i in range(n))
    return f"scenario_id,trial,tests_used,correct,entropy_bits,confidence,{marginal_cols},{true_cols}"


def trial_csv_row(scenario_id: str, trial: int, record: TrialRecord) -> str:
    cells = [
        scenario_id,
        str(trial),
        str(record.tests_used),
        "1" if record.correct else "0",
        _g6(record.entropy_bits),
        _g6(record.confidence),
        *(_g6(x) for x in record.marginals),
        *(str(b) for b in record.true_bits),
    ]
    return ",".join(cells)


COMPARE_CSV_HEADER = (
    "scenario_id,trials,accuracy,accuracy_se,mean_tests,tests_se,"
    "mean_entropy_bits,entropy_se,mean_confidence,confidence_se"
)


def write_compare_csv(reports: Iterable[Report], out: TextIO) -> None:
    out.write(COMPARE_CSV_HEADER + "\n")
    for r in reports:
        out.write(
            ",".join(
                [
                    r.scenario_id,
                    str(r.trials),
                    _g6(r.accuracy),
                    _g6(r.accuracy_se),
                    _g6(r.mean_tests),
                    _g6(r.tests_se),
                    _g6(r.mean_entropy_bits),
                    _g6(r.entropy_se),
                    _g6(r.mean_confidence),
                    _g6(r.confidence_se),
                ]
            )
            + "\n"
        )


def parse_scenario_text(text: str) -> Scenario:
    """Build a Scenario from ``key = value`` lines.

    Keys: id, n, priors (n values or one value broadcast), tpr, tnr,
    strategy (nonadaptive|greedy|kgreedy|dorfman), designs (bit strings,
    nonadaptive), budget, batch (kgreedy), groups (1-based patient lists
    separated by '|'), trials, seed, pool_rates ("k: tpr tnr; ...").
    """
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, val = line.partition("=")
        values[key.strip().lower()] = val.strip()

    def require(key: str) -> str:
        if key not in values:
            raise ValueError(f"missing required key {key!r}")
        return values[key]

    n = int(require("n"))
    prior_tokens = require("priors").split()
    if len(prior_tokens) == 1:
        prior = Prior((float(prior_tokens[0]),) * n)
    elif len(prior_tokens) == n:
        prior = Prior(tuple(float(t) for t in prior_tokens))
    else:
        raise ValueError(f"priors needs 1 or {n} values, got {len(prior_tokens)}")

    by_pool_size = None
    if "pool_rates" in values:
        by_pool_size = {}
        for chunk in values["pool_rates"].split(";"):
            size, _, rates = chunk.partition(":")
            tpr_k, tnr_k = rates.split()
            by_pool_size[int(size)] = (float(tpr_k), float(tnr_k))
    spec = TestSpec(float(require("tpr")), float(require("tnr")), by_pool_size)

    kind = require("strategy").lower()
    strategy: Strategy
    if kind == "nonadaptive":
        design_tokens = require("designs").split()
        for t in design_tokens:
            if len(t) != n:
                raise ValueError(f"design {t!r} must have length n={n}")
        strategy = NonAdaptive(tuple(mask_from_string(t) for t in design_tokens))
    elif kind == "greedy":
        strategy = GreedyAdaptive(int(require("budget")))
    elif kind == "kgreedy":
        strategy = KGreedy(int(require("batch")), int(require("budget")))
    elif kind == "dorfman":
        groups = tuple(
            tuple(int(i) - 1 for i in part.split())
            for part in require("groups").split("|")
        )
        strategy = Dorfman(groups)
    else:
        raise ValueError(f"unknown strategy {kind!r}")

    return Scenario(
        scenario_id=values.get("id", "scenario"),
        prior=prior,
        spec=spec,
        strategy=strategy,
        trials=int(require("trials")),
        seed=int(values.get("seed", "0")),
    )
