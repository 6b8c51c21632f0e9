"""Acceptance gate: every release criterion at its stated tolerance.

Each test prints one PASS/FAIL line (run with ``pytest -s`` to see them
all); tolerances are pinned here, not configurable.
"""

import math
import time

import numpy as np
import pytest

from pooltest.adaptive import greedy_policy_tree, k_greedy_batch
from pooltest.model import (
    Prior,
    TestSpec,
    conditional_entropy,
    entropy,
    expected_confidence,
    mask_from_string,
    mutual_information,
    posterior,
    prior_to_distribution,
)
from pooltest.optimizer import ESConfig, es_run, exhaustive_best, luby, mutate
from pooltest.oracles import (
    DorfmanPlan,
    dorfman_expected_tests,
    naive_joint_scores,
    optimal_adaptive_policy,
    policy_expected_mi,
)
from pooltest.protocol import parse_job, run_eval
from pooltest.simulate import Dorfman, NonAdaptive, Scenario, run_scenario

from conftest import random_instance

REF_SPEC = TestSpec(tpr=0.99, tnr=0.95)
REF_PRIOR = Prior((0.1, 0.1, 0.1))
EVAL_JOB = """3 3
0.99 0.95
0.1 0.1 0.1
eval
011
101
110
{results}
"""


def check(name: str, ok: bool, detail: str = "") -> None:
    print(f"{'PASS' if ok else 'FAIL'} {name}" + (f"  [{detail}]" if detail else ""))
    assert ok, f"{name}: {detail}"


def golden_eval(results: str) -> tuple[str, float, list[float], float]:
    job = parse_job(EVAL_JOB.format(results=results))
    start = time.perf_counter()
    text = run_eval(job)
    elapsed = time.perf_counter() - start
    lines = text.splitlines()
    diagnosis = lines[0].split(": ")[1]
    confidence = float(lines[1].split(": ")[1])
    marginals = [float(tok) for tok in lines[3].split(": ")[1].split()]
    return diagnosis, confidence, marginals, elapsed


def test_golden_eval_all_negative():
    run_eval(parse_job(EVAL_JOB.format(results="000")))  # warm caches off the clock
    diagnosis, confidence, marginals, elapsed = golden_eval("000")
    ok = (
        diagnosis == "000"
        and abs(confidence - 0.999963) <= 1e-5
        and all(abs(m - 1.23414e-05) <= 1e-5 for m in marginals)
        and elapsed < 0.010
    )
    check(
        "golden eval 000 (confidence 0.999963, marginals 1.23414e-05, <10ms)",
        ok,
        f"conf={confidence} elapsed={elapsed * 1e3:.2f}ms",
    )


def test_golden_eval_single_infection():
    diagnosis, confidence, marginals, _ = golden_eval("011")
    ok = (
        diagnosis == "100"
        and abs(confidence - 0.973086) <= 1e-5
        and abs(marginals[0] - 0.975488) <= 1e-5
        and abs(marginals[1] - 0.00292) <= 1e-5
        and abs(marginals[2] - 0.00292) <= 1e-5
    )
    check("golden eval 011 (diagnosis 100, confidence 0.973086)", ok, f"conf={confidence}")


def test_golden_eval_error_correction():
    diagnosis, confidence, marginals, _ = golden_eval("001")
    ok = (
        diagnosis == "000"
        and abs(confidence - 0.955646) <= 1e-5
        and abs(marginals[0] - 0.0221854) <= 1e-5
        and abs(marginals[1] - 0.0221854) <= 1e-5
        and abs(marginals[2] - 6.64093e-05) <= 1e-5
    )
    check("golden eval 001 (error correction to 000)", ok, f"conf={confidence}")


def test_optimum_design_triple_and_es():
    start = time.perf_counter()
    dist = prior_to_distribution(REF_PRIOR)
    triple = tuple(mask_from_string(s) for s in ("110", "101", "011"))
    value = expected_confidence(dist, triple, REF_SPEC)
    best, best_value = exhaustive_best(dist, 3, REF_SPEC, "expected_confidence")
    # 0.958704 is the 6-digit print of the optimum, so the ES bound is
    # anchored to the exhaustively verified value.
    seeds_ok = all(
        es_run(dist, 3, REF_SPEC, ESConfig(budget=1000, lambda_=2, base=100, seed=s)).score
        >= best_value - 1e-9
        for s in range(10)
    )
    elapsed = time.perf_counter() - start
    ok = (
        abs(value - 0.958704) <= 1e-5
        and sorted(best) == sorted(triple)
        and abs(best_value - value) <= 1e-12
        and seeds_ok
        and elapsed < 5.0
    )
    check(
        "3x3 optimum 0.958704: exhaustive confirms, ES hits it 10/10 seeds, <5s",
        ok,
        f"value={value:.9f} elapsed={elapsed:.2f}s",
    )


def test_six_patient_pooling_beats_two_blocks():
    dist = prior_to_distribution(Prior((0.1,) * 6))
    designs = tuple(
        mask_from_string(s)
        for s in ("110100", "100010", "001110", "101001", "000101", "010011")
    )
    value = expected_confidence(dist, designs, REF_SPEC)
    squared = 0.958704**2
    ok = (
        abs(value - 0.937214) <= 1e-5
        and abs(squared - 0.919113) <= 1e-6
        and squared < value
    )
    check(
        "6x6 multiset scores 0.937214 and beats two 3-blocks (0.919113)",
        ok,
        f"value={value:.9f}",
    )


def test_oracle_equivalence_two_hundred_instances():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(200):
        dist, designs, spec = random_instance(rng, max_n=4, max_m=4)
        naive_ce, naive_conf = naive_joint_scores(dist, designs, spec)
        ce = conditional_entropy(dist, designs, spec)
        mi = mutual_information(dist, designs, spec)
        conf = expected_confidence(dist, designs, spec)
        worst = max(
            worst,
            abs(ce - naive_ce),
            abs(mi - max(0.0, entropy(dist) - naive_ce)),
            abs(conf - naive_conf),
        )
    check(
        "fast scores match naive full-joint oracle on 200 instances (1e-12)",
        worst <= 1e-12,
        f"worst |delta|={worst:.2e}",
    )


def test_greedy_policy_near_optimality_bound():
    start = time.perf_counter()
    rng = np.random.default_rng(77)
    factor = 1 - 1 / math.e
    violations = 0
    worst_ratio = math.inf
    for _ in range(20):
        dist, _, spec = random_instance(rng, max_n=3, max_m=0)
        greedy_value = policy_expected_mi(dist, spec, greedy_policy_tree(dist, spec, 2))
        _, optimal_value = optimal_adaptive_policy(dist, spec, 2)
        if greedy_value < factor * optimal_value - 1e-9:
            violations += 1
        if optimal_value > 0:
            worst_ratio = min(worst_ratio, greedy_value / optimal_value)
    elapsed = time.perf_counter() - start
    ok = violations == 0 and elapsed < 60.0
    check(
        "greedy adaptive >= (1-1/e) optimal on 20 instances, <60s",
        ok,
        f"worst ratio={worst_ratio:.4f} elapsed={elapsed:.1f}s",
    )


def test_luby_restart_schedule():
    base = 5
    intervals: list[int] = []
    dist = prior_to_distribution(REF_PRIOR)
    es_run(
        dist,
        2,
        REF_SPEC,
        # enough budget for 15 completed intervals: sum(luby(1..15)) = 32 generations/base unit
        ESConfig(budget=2 * 5 * 32 + 40, lambda_=2, base=base, seed=0),
        on_restart=intervals.append,
    )
    expected = [base * luby(i) for i in range(1, 16)]
    ok = intervals[:15] == expected
    check(
        "first 15 restart intervals equal b*(1,1,2,1,1,2,4,1,1,2,1,1,2,4,8)",
        ok,
        f"got {intervals[:15]}",
    )


def test_property_suite():
    rng = np.random.default_rng(31337)

    # Information never hurts + normalization + bounds.
    worst_drift = 0.0
    info_ok = bounds_ok = True
    for _ in range(50):
        dist, designs, spec = random_instance(rng, max_n=4, max_m=3)
        info_ok &= conditional_entropy(dist, designs, spec) <= entropy(dist) + 1e-12
        mi = mutual_information(dist, designs, spec)
        conf = expected_confidence(dist, designs, spec)
        bounds_ok &= 0.0 <= mi <= min(entropy(dist), len(designs)) + 1e-12
        bounds_ok &= float(dist.mass.max()) - 1e-12 <= conf <= 1.0 + 1e-12
        outcomes = tuple(int(rng.integers(0, 2)) for _ in designs)
        post = posterior(dist, designs, outcomes, spec)
        worst_drift = max(worst_drift, abs(float(post.mass.sum()) - 1.0))
    check("information never hurts (50 instances)", bool(info_ok))
    check("entropy/MI/confidence bounds (50 instances)", bool(bounds_ok))
    check("posterior normalization within 1e-9", worst_drift <= 1e-9, f"{worst_drift:.2e}")

    # Commutativity / order invariance.
    commute_ok = True
    for _ in range(25):
        dist, _, spec = random_instance(rng, max_n=3, max_m=0)
        d1, d2 = (int(rng.integers(0, 1 << dist.n)) for _ in range(2))
        t1, t2 = (int(rng.integers(0, 2)) for _ in range(2))
        joint = posterior(dist, (d1, d2), (t1, t2), spec)
        ab = posterior(posterior(dist, (d1,), (t1,), spec), (d2,), (t2,), spec)
        ba = posterior(posterior(dist, (d2,), (t2,), spec), (d1,), (t1,), spec)
        commute_ok &= bool(np.max(np.abs(joint.mass - ab.mass)) <= 1e-12)
        commute_ok &= bool(np.max(np.abs(joint.mass - ba.mass)) <= 1e-12)
    check("posterior commutes and composes (25 instances)", bool(commute_ok))

    # Mutation: Hamming distance one, uniform positions (chi-square-style 5 sigma).
    designs = (0b0101, 0b0011)
    n, draws = 4, 100_000
    counts = np.zeros(n * 2, dtype=int)
    hamming_ok = True
    mrng = np.random.default_rng(9)
    for _ in range(draws):
        out = mutate(designs, n, mrng)
        diff = (out[0] ^ designs[0]) | ((out[1] ^ designs[1]) << n)
        hamming_ok &= diff.bit_count() == 1
        counts[diff.bit_length() - 1] += 1
    p = 1.0 / (n * 2)
    sigma = math.sqrt(draws * p * (1 - p))
    uniform_ok = bool(np.all(np.abs(counts - draws * p) <= 5 * sigma))
    check("mutate flips exactly one bit", hamming_ok)
    check("mutate position frequencies within 5 sigma", uniform_ok)

    # Seed determinism: optimizer and simulator.
    dist = prior_to_distribution(REF_PRIOR)
    cfg = ESConfig(budget=400, seed=123)
    es_same = es_run(dist, 3, REF_SPEC, cfg) == es_run(dist, 3, REF_SPEC, cfg)
    sc = Scenario(
        "det",
        REF_PRIOR,
        REF_SPEC,
        NonAdaptive(tuple(mask_from_string(s) for s in ("110", "101", "011"))),
        trials=500,
        seed=99,
    )
    sim_same = run_scenario(sc) == run_scenario(sc)
    check("es_run seed determinism", es_same)
    check("simulator seed determinism", sim_same)


def test_simulator_convergence_hundred_thousand_trials():
    designs = tuple(mask_from_string(s) for s in ("110", "101", "011"))
    sc = Scenario("mc", REF_PRIOR, REF_SPEC, NonAdaptive(designs), trials=100_000, seed=1)
    report = run_scenario(sc)
    target = 0.958704
    delta = abs(report.mean_confidence - target)
    ok_conf = delta <= 3 * report.confidence_se

    prior6 = Prior((0.1,) * 6)
    spec6 = TestSpec(0.95, 0.99)
    groups = ((0, 1, 2), (3, 4, 5))
    dorf = Scenario("dorf", prior6, spec6, Dorfman(groups), trials=100_000, seed=2)
    dorf_report = run_scenario(dorf)
    exact = dorfman_expected_tests(DorfmanPlan(6, groups), prior6, spec6)
    ok_dorf = abs(dorf_report.mean_tests - exact) <= 3 * dorf_report.tests_se
    check(
        "Monte-Carlo confidence at 1e5 trials within 3 sigma of 0.958704",
        ok_conf,
        f"mean={report.mean_confidence:.6f} se={report.confidence_se:.2e}",
    )
    check(
        "Dorfman mean tests at 1e5 trials within 3 sigma of analytic",
        ok_dorf,
        f"mean={dorf_report.mean_tests:.4f} exact={exact:.4f}",
    )
