"""Command-line front end.

``pooltest run`` executes the line-oriented eval/optim job format on a
file or stdin; the other subcommands expose the adaptive loop, the
Monte-Carlo simulator, the brute-force oracles and the HTTP service.

Exit codes: 0 success, 1 usage, 2 domain error, 3 enumeration cap
exceeded.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import os
import sys
from pathlib import Path

from . import adaptive, oracles, protocol, simulate
from .model import (
    CapExceeded,
    DEFAULT_CAPS,
    EnumerationCaps,
    PoolTestError,
    Prior,
    TestSpec,
    diagnose,
    entropy,
    mask_from_string,
    mask_to_string,
    prior_to_distribution,
)
from .protocol import g6

__all__ = ["main"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DOMAIN = 2
EXIT_CAPS = 3


class _Parser(argparse.ArgumentParser):
    """argparse's default usage-error exit code is 2; this CLI reserves 2
    for domain errors, so usage problems exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    return int(raw) if raw else default


def _caps_from_args(args: argparse.Namespace) -> EnumerationCaps:
    return EnumerationCaps(
        max_n=args.max_n, max_m=args.max_m, max_total=args.max_total
    )


def _parse_priors(raw: str, n: int) -> Prior:
    tokens = raw.replace(",", " ").split()
    if len(tokens) == 1:
        return Prior((float(tokens[0]),) * n)
    if len(tokens) != n:
        raise ValueError(f"--priors needs 1 or {n} values, got {len(tokens)}")
    return Prior(tuple(float(t) for t in tokens))


def _parse_designs(raw: str, n: int) -> tuple[int, ...]:
    tokens = raw.replace(",", " ").split()
    for t in tokens:
        if len(t) != n:
            raise ValueError(f"design {t!r} must have length n={n}")
    return tuple(mask_from_string(t) for t in tokens)


def _write_output(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="RNG seed")
    parser.add_argument(
        "--format", choices=("text", "json"), default="text", help="output format"
    )
    parser.add_argument("--output", help="write output to this path instead of stdout")
    parser.add_argument(
        "--max-n", type=int, default=_env_int("POOLTEST_MAX_N", DEFAULT_CAPS.max_n)
    )
    parser.add_argument(
        "--max-m", type=int, default=_env_int("POOLTEST_MAX_M", DEFAULT_CAPS.max_m)
    )
    parser.add_argument(
        "--max-total",
        type=int,
        default=_env_int("POOLTEST_MAX_TOTAL", DEFAULT_CAPS.max_total),
    )


def _add_model_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n", type=int, required=True, help="number of patients")
    parser.add_argument("--tpr", type=float, required=True, help="test sensitivity")
    parser.add_argument("--tnr", type=float, required=True, help="test specificity")
    parser.add_argument(
        "--priors", required=True, help="per-patient infection probabilities (or one value for all)"
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="pooltest", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="execute an eval/optim job file (default stdin)")
    run.add_argument("job", nargs="?", help="job file; omit to read stdin")
    _add_common(run)

    ada = sub.add_parser("adaptive", help="interactive adaptive testing loop")
    _add_model_args(ada)
    ada.add_argument("--budget", type=int, required=True, help="number of tests")
    ada.add_argument("--batch", type=int, default=1, help="designs per lab round")
    ada.add_argument(
        "--results", help="scripted results file (one command per line) instead of stdin"
    )
    _add_common(ada)

    sim = sub.add_parser("simulate", help="run Monte-Carlo scenario files")
    sim.add_argument("scenarios", nargs="+", help="scenario config files (key = value lines)")
    sim.add_argument("--trials-csv", help="stream per-trial rows to this CSV path")
    _add_common(sim)

    orc = sub.add_parser("oracle", help="brute-force reference computations")
    orc_sub = orc.add_subparsers(dest="oracle_command", required=True, parser_class=_Parser)

    naive = orc_sub.add_parser("naive", help="full-joint conditional entropy and confidence")
    _add_model_args(naive)
    naive.add_argument("--designs", required=True, help="design bit strings")
    _add_common(naive)

    pol = orc_sub.add_parser("policy", help="exhaustively optimal adaptive policy")
    _add_model_args(pol)
    pol.add_argument("--budget", type=int, required=True)
    _add_common(pol)

    dorf = orc_sub.add_parser("dorfman", help="expected tests of two-stage group testing")
    _add_model_args(dorf)
    dorf.add_argument(
        "--groups", required=True, help="1-based patient groups, e.g. '1 2 3 | 4 5 6'"
    )
    _add_common(dorf)

    srv = sub.add_parser("serve", help="start the HTTP session service")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8000)
    srv.add_argument("--data-dir", default="pooltest-sessions", help="session log directory")
    _add_common(srv)

    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    text = Path(args.job).read_text() if args.job else sys.stdin.read()
    job = protocol.parse_job(text)
    if job.mode == "eval":
        result = protocol.eval_result(job)
        out = json.dumps(result) + "\n" if args.format == "json" else protocol.format_eval(result)
    else:
        result = protocol.optim_result(job, seed=args.seed if args.seed is not None else 0)
        out = json.dumps(result) + "\n" if args.format == "json" else protocol.format_optim(result)
    _write_output(out, args.output)
    return EXIT_OK


def _final_report_text(session: adaptive.Session) -> str:
    report = diagnose(session.current)
    marginals = "".join(g6(x) + " " for x in report.marginals)
    return (
        "final report:\n"
        f"most probable diagnosis: {mask_to_string(report.ml_secret, session.n)}\n"
        f"confidence: {g6(report.confidence)}\n"
        f"\n"
        f"marginals: {marginals}\n"
        f"entropy: {g6(report.entropy_bits)} bits\n"
    )


def _cmd_adaptive(args: argparse.Namespace) -> int:
    caps = _caps_from_args(args)
    prior = _parse_priors(args.priors, args.n)
    spec = TestSpec(args.tpr, args.tnr)
    session = adaptive.new_session(prior, spec, args.budget, caps)
    out = sys.stdout

    if args.results:
        commands = iter(Path(args.results).read_text().split())
        prompt = False
    else:
        commands = None
        prompt = sys.stdin.isatty()

    def read_command() -> str:
        if commands is not None:
            try:
                return next(commands)
            except StopIteration:
                return "stop"
        if prompt:
            out.write("result? ")
            out.flush()
        line = sys.stdin.readline()
        return line.strip() if line else "stop"

    round_no = 0
    stopped = False
    while session.remaining_budget > 0 and not stopped:
        round_no += 1
        take = min(args.batch, session.remaining_budget)
        if take == 1:
            rec = adaptive.greedy_next_design(session.current, spec)
        else:
            rec = adaptive.k_greedy_batch(session.current, spec, take, caps)
        shown = " ".join(mask_to_string(d, args.n) for d in rec.designs)
        label = "design" if take == 1 else "batch"
        out.write(
            f"round {round_no}: recommended {label} {shown} "
            f"(expected gain {g6(rec.expected_gain_bits)} bits)\n"
        )
        for design in rec.designs:
            pending = design
            while True:
                token = read_command()
                if token == "stop":
                    stopped = True
                    break
                if token == "undo":
                    try:
                        session = adaptive.undo(session)
                        out.write("undid last observation\n")
                    except adaptive.EmptyHistory:
                        out.write("nothing to undo\n")
                    continue
                if token in ("0", "1"):
                    session = adaptive.observe(session, pending, int(token))
                    out.write(f"observed {mask_to_string(pending, args.n)} -> {token}\n")
                    break
                # deviation: a design string, result follows as the next token
                try:
                    pending = mask_from_string(token)
                    if len(token) != args.n:
                        raise ValueError
                except ValueError:
                    out.write(f"unrecognized input {token!r}\n")
                    continue
            if stopped:
                break

    out.write(_final_report_text(session))
    return EXIT_OK


def _cmd_simulate(args: argparse.Namespace) -> int:
    caps = _caps_from_args(args)
    scenarios = []
    for path in args.scenarios:
        sc = simulate.parse_scenario_text(Path(path).read_text())
        if args.seed is not None:
            sc = simulate.Scenario(
                sc.scenario_id, sc.prior, sc.spec, sc.strategy, sc.trials, args.seed
            )
        scenarios.append(sc)

    trial_sink = None
    trial_file = None
    if args.trials_csv:
        widths = {sc.prior.n for sc in scenarios}
        if len(widths) > 1:
            raise ValueError("per-trial CSV needs all scenarios to share one n")
        trial_file = open(args.trials_csv, "w")
        trial_file.write(simulate.trial_csv_header(widths.pop()) + "\n")

    reports = []
    try:
        for sc in scenarios:
            if trial_file is not None:
                trial_sink = lambda t, rec, sid=sc.scenario_id: trial_file.write(
                    simulate.trial_csv_row(sid, t, rec) + "\n"
                )
            reports.append(simulate.run_scenario(sc, caps, trial_sink))
    finally:
        if trial_file is not None:
            trial_file.close()

    if args.format == "json":
        payload = [dataclasses.asdict(report) for report in reports]
        _write_output(json.dumps(payload, indent=2) + "\n", args.output)
    else:
        buf = io.StringIO()
        simulate.write_compare_csv(reports, buf)
        _write_output(buf.getvalue(), args.output)
    return EXIT_OK


def _cmd_oracle(args: argparse.Namespace) -> int:
    prior = _parse_priors(args.priors, args.n)
    spec = TestSpec(args.tpr, args.tnr)

    if args.oracle_command == "naive":
        designs = _parse_designs(args.designs, args.n)
        dist = prior_to_distribution(prior)
        cond, conf = oracles.naive_joint_scores(dist, designs, spec)
        payload = {
            "conditional_entropy_bits": cond,
            "mutual_information_bits": entropy(dist) - cond,
            "expected_confidence": conf,
        }
        text = (
            f"conditional entropy: {g6(cond)} bits\n"
            f"mutual information: {g6(payload['mutual_information_bits'])} bits\n"
            f"expected confidence: {g6(conf)}\n"
        )
    elif args.oracle_command == "policy":
        dist = prior_to_distribution(prior)
        tree, value = oracles.optimal_adaptive_policy(dist, spec, args.budget)
        root = mask_to_string(tree.design, args.n) if tree else None
        payload = {"expected_information_bits": value, "root_design": root}
        text = (
            f"optimal expected information: {g6(value)} bits\n"
            f"root design: {root if root is not None else '(none)'}\n"
        )
    else:
        groups = tuple(
            tuple(int(i) - 1 for i in part.split())
            for part in args.groups.split("|")
        )
        plan = oracles.DorfmanPlan(args.n, groups)
        expected = oracles.dorfman_expected_tests(plan, prior, spec)
        payload = {"expected_tests": expected}
        text = f"expected tests: {g6(expected)}\n"

    out = json.dumps(payload) + "\n" if args.format == "json" else text
    _write_output(out, args.output)
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(Path(args.data_dir), caps=_caps_from_args(args))
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "adaptive": _cmd_adaptive,
        "simulate": _cmd_simulate,
        "oracle": _cmd_oracle,
        "serve": _cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except CapExceeded as exc:
        print(f"pooltest: cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAPS
    except (PoolTestError, ValueError, OSError) as exc:
        print(f"pooltest: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
