"""Command-line front end.

Graph sources use a small spec language::

    cycle:N  complete:N  counterexample:P:NC  random-regular:N:D[:SEED]  file:PATH

Exit codes: 0 success, 2 configuration error, 3 tie exhaustion,
4 numerical failure, 5 a checked property was violated.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

from . import dynamics as dyn
from . import experiments as ex
from . import voting
from .errors import InvalidArgument, NumericalFailure, ParseError, TieError, Unsupported
from .graph import (
    as_fraction,
    load_graph,
    make_complete,
    make_counterexample,
    make_cycle,
    make_random_regular,
    perturb_weights,
    save_graph,
    spectral_certificate,
)
from .seeding import DEFAULT_SEED

EXIT_OK, EXIT_CONFIG, EXIT_TIE, EXIT_NUMERIC, EXIT_VIOLATION = 0, 2, 3, 4, 5

# options that never change results and so are left out of the echoed config
UNECHOED = {"func", "workers", "out", "format"}


def default_seed() -> int:
    raw = os.environ.get("OPDYN_SEED")
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw, 0)
    except ValueError:
        raise InvalidArgument(f"OPDYN_SEED={raw!r} is not an integer") from None


def parse_graph_spec(spec: str, seed: int):
    kind, _, rest = spec.partition(":")
    parts = rest.split(":") if rest else []
    try:
        if kind == "cycle" and len(parts) == 1:
            return make_cycle(int(parts[0]))
        if kind == "complete" and len(parts) == 1:
            return make_complete(int(parts[0]))
        if kind == "counterexample" and len(parts) == 2:
            return make_counterexample(as_fraction(parts[0]), int(parts[1]))
        if kind == "random-regular" and len(parts) in (2, 3):
            gseed = int(parts[2], 0) if len(parts) == 3 else seed
            return make_random_regular(int(parts[0]), int(parts[1]), gseed)
        if kind == "file" and rest:
            return load_graph(rest)
    except ValueError as exc:
        if isinstance(exc, InvalidArgument):
            raise
        raise InvalidArgument(f"bad graph spec {spec!r}: {exc}") from None
    raise InvalidArgument(f"bad graph spec {spec!r}")


def probability(text: str) -> float:
    try:
        return float(as_fraction(text))
    except InvalidArgument as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def float_list(text: str) -> list[float]:
    try:
        return [probability(x) for x in text.split(",") if x]
    except argparse.ArgumentTypeError:
        raise argparse.ArgumentTypeError(f"bad list {text!r}") from None


def _echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in UNECHOED}


def _emit(args, text: str):
    if getattr(args, "out", None):
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _emit_json(args, payload: dict):
    payload = dict(payload)
    payload["cli_config"] = _echo(args)
    _emit(args, json.dumps(ex._jsonable(payload), sort_keys=True, indent=2) + "\n")


def _distribution(args) -> dyn.InitialDistribution:
    if getattr(args, "probs", None):
        return dyn.InitialDistribution(tuple(args.probs))
    if args.p is not None and args.delta is not None:
        raise InvalidArgument("give --p or --delta, not both")
    if args.p is not None:
        if args.q != 2:
            raise InvalidArgument("--p is for q = 2; use --delta or --probs")
        return dyn.InitialDistribution.binary(args.p)
    return dyn.InitialDistribution.biased(args.q, args.delta if args.delta is not None else 0.0)


def _election(spec: str, q: int, n: int) -> voting.ElectionSystem:
    kind, _, arg = spec.partition(":")
    if kind == "plurality":
        return voting.ElectionSystem.plurality(q)
    if kind == "prime":
        return voting.ElectionSystem.prime_transitive(q, n)
    if kind == "threshold":
        return voting.ElectionSystem.threshold(probability(arg))
    if kind == "dictator":
        return voting.ElectionSystem.dictator(int(arg or 0), q)
    raise InvalidArgument(f"unknown election {spec!r}")


# ---------------------------------------------------------------- commands


def cmd_build_graph(args):
    g = parse_graph_spec(args.graph, args.seed)
    if args.tie_proof:
        g = dyn.tie_proof(g)
    if args.perturb is not None:
        g = perturb_weights(g, args.perturb, args.seed)
    if not args.out:
        raise InvalidArgument("--out is required")
    save_graph(g, args.out)
    print(f"wrote n={g.n} m={g.num_edges} weighted={int(g.weighted)} to {args.out}")
    return EXIT_OK


def cmd_simulate(args):
    g = parse_graph_spec(args.graph, args.seed)
    rule = dyn.rule_by_name(args.rule)
    dist = _distribution(args)
    if rule.kind == dyn.MAJORITY:
        g = dyn.tie_proof(g)
    s0 = dyn.sample_initial(g, dist, args.seed)
    t_max = args.rounds if args.rounds is not None else 10 * g.n
    rec = None
    for attempt in range(ex.MAX_REPERTURB + 1):
        prepared = ex.prepare_graph(g, rule.kind, args.seed, attempt)
        try:
            rec = dyn.run(prepared, rule, s0, t_max=t_max)
            break
        except TieError:
            if rule.kind != dyn.WEIGHTED_PLURALITY or attempt == ex.MAX_REPERTURB:
                raise
    text = rec.to_csv()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if rec.period is None:
        print(f"no period <= 2 within {rec.length} steps", file=sys.stderr)
    else:
        print(f"period {rec.period} entered at t={rec.entry_time}; final counts {rec.counts[-1].tolist()}",
              file=sys.stderr)
    return EXIT_OK


def cmd_efficiency(args):
    g = parse_graph_spec(args.graph, args.seed)
    rule = dyn.rule_by_name(args.rule).kind
    n = dyn.tie_proof(g).n
    cfg = ex.ExperimentConfig(
        graph=g, rule=rule, election=_election(args.election, args.q, n), q=args.q,
        delta=args.delta if args.p is None else None, p=args.p, rounds=args.rounds,
        trials=args.trials, seed=args.seed, workers=args.workers, graph_label=args.graph,
    )
    if cfg.delta is None and cfg.p is None:
        raise InvalidArgument("give --delta or --p")
    res = ex.estimate_efficiency(cfg)
    _emit_json(args, res.to_dict())
    return EXIT_OK


def cmd_counterexample(args):
    res = ex.counterexample_failure(args.p, args.cliques, args.trials, args.rounds, args.seed,
                                    args.workers, args.condition_a)
    _emit_json(args, res.to_dict())
    return EXIT_OK


def cmd_unanimity(args):
    g = parse_graph_spec(args.graph, args.seed)
    dist = _distribution(args)
    if dist.q == 2:
        g = dyn.tie_proof(g)
    else:
        g = ex.prepare_graph(g, dyn.WEIGHTED_PLURALITY, args.seed)
    cert = spectral_certificate(g)
    rep = ex.unanimity_experiment(g, cert, dist, args.t_max, args.trials, args.seed, args.workers)
    _emit_json(args, rep)
    bad = rep["trigger_violations"] + rep["unstable_violations"] + rep["almost_consensus_violations"]
    return EXIT_VIOLATION if bad else EXIT_OK


def cmd_cycle_limit(args):
    rep = ex.cycle_closed_form_check(args.n, args.p, args.rounds, args.trials, args.seed, args.vertex, args.workers)
    _emit_json(args, rep)
    return EXIT_VIOLATION if rep["oracle_mismatches"] else EXIT_OK


def cmd_threshold_sweep(args):
    g = parse_graph_spec(args.graph, args.seed)
    rep = ex.threshold_sweep(g, args.p, args.alphas, args.rounds, args.trials, args.seed, args.workers)
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "estimate", "half_width", "successes"])
        for row in rep["rows"]:
            w.writerow([repr(row["alpha"]), repr(row["estimate"]), repr(row["half_width"]), row["successes"]])
        _emit(args, buf.getvalue())
    else:
        _emit_json(args, rep)
    return EXIT_OK


def _boolean_function(name: str, n: int, q: int):
    if name == "majority":
        if q != 2 or n % 2 == 0:
            raise InvalidArgument("majority needs q = 2 and odd n")
        return lambda x: int(2 * sum(x) > n)
    if name.startswith("dictator"):
        idx = int(name.partition(":")[2] or 0)
        return lambda x: int(x[idx] == 1) if q == 2 else int(x[idx] != 0)
    if name == "prime":
        return lambda x: int(voting.elect_prime_transitive(x, q, n) != 0)
    raise InvalidArgument(f"unknown function {name!r}")


def cmd_influence(args):
    f = _boolean_function(args.function, args.n, args.q)
    probs = args.probs or dyn.InitialDistribution.biased(args.q, args.delta or 0.0).probs
    voters = [args.voter] if args.voter is not None else range(args.n)
    values = {}
    for i in voters:
        val = ex.estimate_influence(f, probs, args.n, i, args.mode, budget=args.budget,
                                    samples=args.samples, seed=args.seed)
        values[str(i)] = str(val) if args.mode == "exact" else val
    _emit_json(args, {"influence": values, "mode": args.mode})
    return EXIT_OK


CHECK_CASES = ((2, 3), (2, 5), (2, 7), (3, 5), (3, 7))


def cmd_check_properties(args):
    cases = CHECK_CASES if args.all else ((args.q, args.n),)
    reports = {}
    bad = 0
    for q, n in cases:
        f = voting.ElectionSystem.prime_transitive(q, n)
        rs = {
            "plurality_respecting": voting.check_plurality_respecting(f, q, n),
            "fair": voting.check_fair(f, q, n, args.budget, args.seed),
            "monotone": voting.check_monotone(f, q, n, args.budget, args.seed),
            "cyclic_shift": voting.check_transitive_shift(f, q, n, args.budget, args.seed),
        }
        bad += sum(r.violation_count for r in rs.values())
        reports[f"prime_transitive_q{q}_n{n}"] = {k: r.to_dict() for k, r in rs.items()}
    _emit_json(args, {"reports": reports, "violations": bad})
    return EXIT_VIOLATION if bad else EXIT_OK


def cmd_spectrum(args):
    g = parse_graph_spec(args.graph, args.seed)
    if args.tie_proof:
        g = dyn.tie_proof(g)
    cert = spectral_certificate(g)
    ok = cert.is_expander(3 / 16)
    if args.format == "json":
        _emit_json(args, {"certificate": cert.to_dict(), "expander": ok})
    else:
        _emit(args, f"d={cert.d:.6g} lambda={cert.lam:.6g} ratio={cert.ratio:.3f} "
                    f"expander: {'yes' if ok else 'no'} (threshold 3/16)\n")
    return EXIT_OK


def cmd_expectation(args):
    g = parse_graph_spec(args.graph, args.seed)
    rep = ex.expectation_bound_check(g, args.p, args.rounds, args.trials, args.seed, args.workers)
    _emit_json(args, rep)
    return EXIT_OK if rep["ok"] else EXIT_VIOLATION


def cmd_periodicity(args):
    rep = ex.periodicity_check(args.pairs, args.seed)
    _emit_json(args, rep)
    return EXIT_OK if rep["ok"] else EXIT_VIOLATION


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opdyn", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=lambda s: int(s, 0), default=None,
                       help="master seed (default: $OPDYN_SEED or 0xD1CE)")
        p.add_argument("--out", help="output file (default: stdout)")
        return p

    def graph_opt(p, default=None):
        p.add_argument("--graph", required=default is None, default=default, help="graph spec")

    def trials_opt(p, default):
        p.add_argument("--trials", type=int, default=default)
        p.add_argument("--workers", type=int, default=1)

    def dist_opts(p):
        p.add_argument("--q", type=int, default=2)
        p.add_argument("--p", type=probability, help="P(0) for q = 2")
        p.add_argument("--delta", type=probability, help="bias of alternative 0")
        p.add_argument("--probs", type=float_list, help="explicit distribution, comma separated")

    p = add("build-graph", cmd_build_graph, "build a graph and save it as an edge list")
    graph_opt(p)
    p.add_argument("--tie-proof", action="store_true")
    p.add_argument("--perturb", type=float, help="perturb weights by this relative amount")

    p = add("simulate", cmd_simulate, "run one trajectory and write its tallies as CSV")
    graph_opt(p)
    dist_opts(p)
    p.add_argument("--rule", default="majority", choices=["majority", "plurality", "weighted_plurality",
                                                         "unanimity_switch"])
    p.add_argument("--rounds", type=int, help="step limit (default 10 n)")

    p = add("efficiency", cmd_efficiency, "estimate the probability that alternative 0 is elected")
    graph_opt(p)
    dist_opts(p)
    trials_opt(p, 1000)
    p.add_argument("--rule", default="majority")
    p.add_argument("--rounds", type=int, required=True)
    p.add_argument("--election", default="plurality", help="plurality | prime | threshold:A | dictator:I")

    p = add("counterexample", cmd_counterexample, "failure probability on the non-aggregating family")
    p.add_argument("--p", type=as_fraction, required=True)
    p.add_argument("--cliques", type=int, required=True)
    p.add_argument("--rounds", type=int, default=2)
    p.add_argument("--condition-a", action="store_true", help="start every A vertex at 1")
    trials_opt(p, 10000)

    p = add("unanimity", cmd_unanimity, "unanimity audit on a certified expander")
    graph_opt(p, "random-regular:2000:128")
    dist_opts(p)
    trials_opt(p, 200)
    p.add_argument("--t-max", type=int, default=200)

    p = add("cycle-limit", cmd_cycle_limit, "eventual-0 probability on a self-looped cycle")
    p.add_argument("--n", type=int, default=2001)
    p.add_argument("--p", type=probability, default=0.75)
    p.add_argument("--rounds", type=int, default=200)
    p.add_argument("--vertex", type=int, default=0)
    trials_opt(p, 20000)

    p = add("threshold-sweep", cmd_threshold_sweep, "success of g_alpha over a grid of alpha")
    graph_opt(p)
    p.add_argument("--p", type=probability, required=True)
    p.add_argument("--alphas", type=float_list, required=True)
    p.add_argument("--rounds", type=int, required=True)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    trials_opt(p, 2000)

    p = add("influence", cmd_influence, "influence of voters on a 0/1 function")
    p.add_argument("--function", default="majority", help="majority | dictator:I | prime")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--voter", type=int)
    p.add_argument("--delta", type=probability)
    p.add_argument("--probs", type=lambda s: [as_fraction(x) for x in s.split(",")])
    p.add_argument("--mode", choices=["exact", "sampled"], default="exact")
    p.add_argument("--budget", type=int, default=2**16)
    p.add_argument("--samples", type=int, default=10000)

    p = add("check-properties", cmd_check_properties, "fairness/monotonicity/transitivity checks")
    p.add_argument("--all", action="store_true", help="every (q, n) in the standard set")
    p.add_argument("--q", type=int, default=3)
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--budget", type=int, default=10**6)

    p = add("spectrum", cmd_spectrum, "largest and second-largest absolute eigenvalues")
    graph_opt(p)
    p.add_argument("--tie-proof", action="store_true")
    p.add_argument("--format", choices=["text", "json"], default="text")

    p = add("expectation", cmd_expectation, "mean number of 1-votes over time versus (1-p) n")
    graph_opt(p)
    p.add_argument("--p", type=probability, required=True)
    p.add_argument("--rounds", type=int, default=50)
    trials_opt(p, 10000)

    p = add("periodicity", cmd_periodicity, "period <= 2 and potential audit on random instances")
    p.add_argument("--pairs", type=int, default=1000)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.seed is None:
            args.seed = default_seed()
        return args.func(args)
    except (InvalidArgument, ParseError, Unsupported) as exc:
        print(f"opdyn: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TieError as exc:
        print(f"opdyn: unresolved tie: {exc}", file=sys.stderr)
        return EXIT_TIE
    except NumericalFailure as exc:
        print(f"opdyn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
