"""The line-oriented job format the CLI reads and its fixed output shapes.

Input stanzas, in order, with blank lines between them ignored:

    n m
    tpr tnr
    p_1 ... p_n
    eval                      |  optim <confidence|information>
    <m design lines>          |  ga-luby <lambda> <base>
    <m-bit results line>      |  <evaluation budget>

All reported numbers are printed with 6 significant digits.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import (
    PoolTestError,
    Prior,
    TestSpec,
    diagnose,
    mask_from_string,
    mask_to_string,
    posterior,
    prior_to_distribution,
)
from .optimizer import ESConfig, ESResult, es_run

__all__ = [
    "ProtocolError",
    "JobInput",
    "g6",
    "parse_job",
    "format_job",
    "run_eval",
    "run_optim",
    "eval_result",
    "optim_result",
    "format_eval",
    "format_optim",
]

OBJECTIVE_TOKENS = {
    "confidence": "expected_confidence",
    "information": "mutual_information",
    "mutual_information": "mutual_information",
}

SCORE_LABELS = {
    "expected_confidence": "expected confidence",
    "mutual_information": "expected mutual information",
}


class ProtocolError(PoolTestError):
    """Malformed job text; the message names the offending line."""


@dataclass(frozen=True)
class JobInput:
    n: int
    m: int
    spec: TestSpec
    prior: Prior
    mode: str  # "eval" | "optim"
    designs: tuple[int, ...] | None = None
    results: tuple[int, ...] | None = None
    objective: str | None = None
    lambda_: int | None = None
    base: int | None = None
    budget: int | None = None


def g6(x: float) -> str:
    """Shortest 6-significant-digit rendering (fixed or scientific)."""
    return format(x, ".6g")


def _numbered_lines(text: str) -> list[tuple[int, str]]:
    return [
        (i, line.strip())
        for i, line in enumerate(text.splitlines(), start=1)
        if line.strip()
    ]


def parse_job(text: str) -> JobInput:
    lines = _numbered_lines(text)
    cursor = 0

    def next_line(what: str) -> tuple[int, str]:
        nonlocal cursor
        if cursor >= len(lines):
            raise ProtocolError(f"unexpected end of input: expected {what}")
        item = lines[cursor]
        cursor += 1
        return item

    def fail(lineno: int, message: str) -> ProtocolError:
        return ProtocolError(f"line {lineno}: {message}")

    lineno, head = next_line("'n m'")
    try:
        n_str, m_str = head.split()
        n, m = int(n_str), int(m_str)
    except ValueError:
        raise fail(lineno, f"expected two integers 'n m', got {head!r}") from None
    if n < 1 or m < 0:
        raise fail(lineno, f"need n >= 1 and m >= 0, got n={n}, m={m}")

    lineno, rates = next_line("'tpr tnr'")
    try:
        tpr_str, tnr_str = rates.split()
        spec = TestSpec(float(tpr_str), float(tnr_str))
    except ValueError as exc:
        raise fail(lineno, f"bad test rates {rates!r}: {exc}") from None

    lineno, priors_line = next_line(f"{n} prior probabilities")
    tokens = priors_line.split()
    if len(tokens) != n:
        raise fail(lineno, f"expected {n} prior probabilities, got {len(tokens)}")
    try:
        prior = Prior(tuple(float(t) for t in tokens))
    except ValueError as exc:
        raise fail(lineno, str(exc)) from None

    lineno, mode_line = next_line("'eval' or 'optim <objective>'")
    mode_tokens = mode_line.split()

    if mode_tokens[0] == "eval":
        if len(mode_tokens) != 1:
            raise fail(lineno, f"'eval' takes no arguments, got {mode_line!r}")
        designs = []
        for _ in range(m):
            lineno, design_line = next_line(f"a design string of length {n}")
            if len(design_line) != n or any(c not in "01" for c in design_line):
                raise fail(lineno, f"design must be {n} chars over 0/1, got {design_line!r}")
            designs.append(mask_from_string(design_line))
        lineno, results_line = next_line(f"a results string of length {m}")
        if len(results_line) != m or any(c not in "01" for c in results_line):
            raise fail(lineno, f"results must be {m} chars over 0/1, got {results_line!r}")
        return JobInput(
            n=n,
            m=m,
            spec=spec,
            prior=prior,
            mode="eval",
            designs=tuple(designs),
            results=tuple(int(c) for c in results_line),
        )

    if mode_tokens[0] == "optim":
        if len(mode_tokens) != 2 or mode_tokens[1] not in OBJECTIVE_TOKENS:
            raise fail(
                lineno,
                f"expected 'optim <{'|'.join(sorted(set(OBJECTIVE_TOKENS) - {'mutual_information'}))}>', "
                f"got {mode_line!r}",
            )
        objective = OBJECTIVE_TOKENS[mode_tokens[1]]
        lineno, optimizer_line = next_line("an optimizer line like 'ga-luby 2 100'")
        opt_tokens = optimizer_line.split()
        if len(opt_tokens) != 3 or opt_tokens[0] != "ga-luby":
            raise fail(lineno, f"unknown optimizer line {optimizer_line!r}")
        try:
            lambda_, base = int(opt_tokens[1]), int(opt_tokens[2])
        except ValueError:
            raise fail(lineno, f"optimizer arguments must be integers, got {optimizer_line!r}") from None
        lineno, budget_line = next_line("an evaluation budget")
        try:
            budget = int(budget_line)
        except ValueError:
            raise fail(lineno, f"budget must be an integer, got {budget_line!r}") from None
        return JobInput(
            n=n,
            m=m,
            spec=spec,
            prior=prior,
            mode="optim",
            objective=objective,
            lambda_=lambda_,
            base=base,
            budget=budget,
        )

    raise fail(lineno, f"mode must be 'eval' or 'optim', got {mode_tokens[0]!r}")


def format_job(job: JobInput) -> str:
    """Canonical text for a job; ``parse_job`` round-trips it."""
    head = [
        f"{job.n} {job.m}",
        "",
        f"{job.spec.tpr:g} {job.spec.tnr:g}",
        "",
        " ".join(format(p, "g") for p in job.prior.probs),
        "",
    ]
    if job.mode == "eval":
        body = [
            "eval",
            "",
            *(mask_to_string(d, job.n) for d in job.designs),
            "",
            "".join(str(b) for b in job.results),
        ]
    else:
        token = "confidence" if job.objective == "expected_confidence" else "information"
        body = [
            f"optim {token}",
            f"ga-luby {job.lambda_} {job.base}",
            f"{job.budget}",
        ]
    return "\n".join(head + body) + "\n"


def eval_result(job: JobInput) -> dict:
    """Posterior diagnosis for an eval job, full precision."""
    dist = posterior(
        prior_to_distribution(job.prior), job.designs, job.results, job.spec
    )
    report = diagnose(dist)
    return {
        "diagnosis": mask_to_string(report.ml_secret, job.n),
        "confidence": report.confidence,
        "marginals": list(report.marginals),
        "entropy_bits": report.entropy_bits,
    }


def format_eval(result: dict) -> str:
    marginals = "".join(g6(x) + " " for x in result["marginals"])
    return (
        f"most probable diagnosis: {result['diagnosis']}\n"
        f"confidence: {g6(result['confidence'])}\n"
        f"\n"
        f"marginals: {marginals}\n"
    )


def run_eval(job: JobInput) -> str:
    return format_eval(eval_result(job))


def optim_result(job: JobInput, seed: int = 0) -> dict:
    """Optimize a design multiset for an optim job, full precision."""
    cfg = ESConfig(
        budget=job.budget,
        lambda_=job.lambda_,
        base=job.base,
        seed=seed,
        objective=job.objective,
    )
    dist = prior_to_distribution(job.prior)
    result: ESResult = es_run(dist, job.m, job.spec, cfg)
    return {
        "objective": job.objective,
        "score": result.score,
        "designs": [mask_to_string(d, job.n) for d in result.best],
        "evaluations_used": result.evaluations_used,
        "restarts_performed": result.restarts_performed,
    }


def format_optim(result: dict) -> str:
    designs = "\n".join(result["designs"])
    return (
        f"{SCORE_LABELS[result['objective']]}:\n"
        f"{g6(result['score'])}\n"
        f"\n"
        f"tests (one per line):\n"
        f"{designs}\n"
    )


def run_optim(job: JobInput, seed: int = 0) -> str:
    return format_optim(optim_result(job, seed))
