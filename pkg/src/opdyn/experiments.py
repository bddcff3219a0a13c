"""Monte Carlo experiments over opinion dynamics.

Trials are processed in fixed-size chunks.  Trial ``i`` always draws its
initial opinions from ``seeding.trial_rng(seed, i)`` and chunk results are
combined with integer sums, so every estimate is identical for any number
of worker processes.
"""

from __future__ import annotations

import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import dynamics as dyn
from .errors import BudgetExceeded, InvalidArgument, TieError
from .graph import (
    Graph,
    SpectralCertificate,
    as_fraction,
    make_counterexample,
    make_cycle,
    make_random_regular,
    perturb_weights,
)
from .seeding import DEFAULT_SEED, derived_rng, trial_rng
from .voting import ElectionSystem

Z95 = 1.96
CHUNK = 500
MAX_REPERTURB = 3


def half_width(estimate: float, trials: int) -> float:
    return Z95 * math.sqrt(max(estimate * (1 - estimate), 0.0) / trials)


def cycle_limit(p: float) -> float:
    """Limiting probability that a vertex of a long self-looped cycle settles on 0."""
    return (2 * p**2 - p**3) / (1 - p + p**2)


def cycle_threshold(delta: float) -> float:
    """The same limit written in terms of the bias ``delta = 2p - 1``."""
    return 0.5 + (5 * delta - delta**3) / (6 + 2 * delta**2)


@dataclass
class ExperimentConfig:
    graph: Graph
    rule: str = dyn.MAJORITY
    election: ElectionSystem | None = None
    q: int = 2
    delta: float | None = None
    p: float | None = None
    rounds: int = 0
    trials: int = 1000
    seed: int = DEFAULT_SEED
    workers: int = 1
    graph_label: str | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidArgument("trials must be at least 1")
        if self.rounds < 0:
            raise InvalidArgument("rounds must be nonnegative")
        if (self.delta is None) == (self.p is None):
            raise InvalidArgument("give exactly one of delta or p")
        if self.delta is not None and not 0 <= self.delta <= 1:
            raise InvalidArgument("delta must lie in [0, 1]")
        if self.p is not None:
            if self.q != 2:
                raise InvalidArgument("p parametrises the two-alternative case only")
            if not 0.5 <= self.p <= 1:
                raise InvalidArgument("p must lie in [1/2, 1]")
        if self.election is None:
            self.election = ElectionSystem.plurality(self.q)

    def distribution(self) -> dyn.InitialDistribution:
        if self.p is not None:
            return dyn.InitialDistribution.binary(self.p)
        return dyn.InitialDistribution.biased(self.q, self.delta)

    def echo(self) -> dict:
        return {
            "graph": self.graph_label or _describe_graph(self.graph),
            "n": self.graph.n,
            "rule": self.rule,
            "election": self.election.describe(),
            "q": self.q,
            "delta": self.delta,
            "p": self.p,
            "rounds": self.rounds,
            "trials": self.trials,
            "seed": self.seed,
        }


def _describe_graph(g: Graph) -> str:
    if g.family:
        return ":".join(str(x) for x in g.family)
    return f"graph(n={g.n}, m={g.num_edges})"


@dataclass
class ExperimentResult:
    estimate: float
    half_width: float
    trials: int
    successes: int
    config_echo: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    wall_ms: float = 0.0

    def to_dict(self) -> dict:
        return {
            "config_echo": self.config_echo,
            "estimate": self.estimate,
            "half_width": self.half_width,
            "trials": self.trials,
            "successes": self.successes,
            **self.metadata,
            "wall_ms": self.wall_ms,
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True, indent=2)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    return obj


def _result(successes, trials, echo, meta, started) -> ExperimentResult:
    est = successes / trials
    return ExperimentResult(est, half_width(est, trials), trials, int(successes), echo, meta,
                            round((time.perf_counter() - started) * 1000, 3))


# ---------------------------------------------------------------- chunking


def initial_states(n: int, dist: dyn.InitialDistribution, seed: int, lo: int, hi: int) -> np.ndarray:
    return np.stack([dist.sample(n, trial_rng(seed, i)) for i in range(lo, hi)])


def _chunks(trials: int, size: int = CHUNK):
    return [(lo, min(lo + size, trials)) for lo in range(0, trials, size)]


def run_chunks(task: Callable, args: tuple, trials: int, workers: int = 1, size: int = CHUNK) -> list:
    """Apply ``task(*args, lo, hi)`` to every chunk, in chunk order."""
    spans = _chunks(trials, size)
    if workers <= 1 or len(spans) == 1:
        return [task(*args, lo, hi) for lo, hi in spans]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(task, *args, lo, hi) for lo, hi in spans]
        return [f.result() for f in futures]


def prepare_graph(g: Graph, rule: str, seed: int, attempt: int = 0) -> Graph:
    """Make ``g`` tie-free for ``rule``: odd degrees for majority, generic weights for plurality."""
    if rule == dyn.MAJORITY:
        return dyn.tie_proof(g)
    if rule == dyn.WEIGHTED_PLURALITY and (not g.weighted or attempt > 0):
        eps = float(g.n) ** -3
        sub_seed = int(derived_rng(seed, 7, attempt).integers(0, 2**63))
        return perturb_weights(g, eps, sub_seed)
    return g


def _with_reperturbation(fn, g: Graph, rule: str, seed: int):
    """Call ``fn(prepared_graph)``; on an exact tie re-perturb with a fresh seed (3 times at most)."""
    for attempt in range(MAX_REPERTURB + 1):
        prepared = prepare_graph(g, rule, seed, attempt)
        try:
            return fn(prepared), attempt
        except TieError:
            if rule != dyn.WEIGHTED_PLURALITY or attempt == MAX_REPERTURB:
                raise


# ---------------------------------------------------------------- efficiency


def _efficiency_chunk(g, rule, q, dist, election, rounds, seed, lo, hi):
    x0 = initial_states(g.n, dist, seed, lo, hi)
    out = dyn.simulate_batch(g, dyn.rule_by_name(rule), x0, q, rounds)
    final = out.state_at(rounds)
    winners = election.batch(final)
    conv = np.where(out.period > 0, out.entry, -1)
    return {
        "wins": np.bincount(winners, minlength=q),
        "conv_sum": int(conv[conv >= 0].sum()),
        "conv_n": int((conv >= 0).sum()),
        "conv_max": int(conv.max(initial=-1)),
    }


def estimate_efficiency(cfg: ExperimentConfig) -> ExperimentResult:
    """Frequency with which the election after ``cfg.rounds`` rounds picks alternative 0."""
    started = time.perf_counter()
    dist = cfg.distribution()

    def go(g):
        return run_chunks(_efficiency_chunk, (g, cfg.rule, cfg.q, dist, cfg.election, cfg.rounds, cfg.seed),
                          cfg.trials, cfg.workers)

    parts, attempts = _with_reperturbation(go, cfg.graph, cfg.rule, cfg.seed)
    wins = sum(p["wins"] for p in parts)
    conv_n = sum(p["conv_n"] for p in parts)
    meta = {
        "winner_counts": wins,
        "reperturbations": attempts,
        "mean_convergence_time": (sum(p["conv_sum"] for p in parts) / conv_n) if conv_n else None,
        "max_convergence_time": max(p["conv_max"] for p in parts),
        "converged_trials": conv_n,
    }
    return _result(int(wins[0]), cfg.trials, cfg.echo(), meta, started)


# ---------------------------------------------------------------- counterexample


def counterexample_bound(p, n_cliques: int) -> float:
    """Analytic floor on the failure probability: ``(1-p)^(1/(1-p)) (1 - exp(-0.02 n))``."""
    pf = as_fraction(p)
    k = 1 / (1 - pf)
    return float((1 - pf) ** int(k)) * (1 - math.exp(-0.02 * n_cliques))


def _counterexample_chunk(g, p, rounds, seed, condition, lo, hi):
    dist = dyn.InitialDistribution.binary(p)
    x0 = initial_states(g.n, dist, seed, lo, hi)
    if condition:
        x0[:, list(g.roles["A"])] = 1
    out = dyn.simulate_batch(g, dyn.MAJORITY_RULE, x0, 2, rounds)
    final = out.state_at(rounds)
    ones = final.sum(axis=1, dtype=np.int64)
    return int((2 * ones > g.n).sum())


def counterexample_failure(p, n_cliques: int, trials: int, rounds: int = 2, seed: int = DEFAULT_SEED,
                           workers: int = 1, condition_on_a: bool = False) -> ExperimentResult:
    """Probability that majority dynamics on the counterexample family elects 1.

    With ``condition_on_a`` every vertex of ``A`` starts at 1; the analytic
    floor is then ``1 - exp(-0.02 n_cliques)``.
    """
    if rounds < 2:
        raise InvalidArgument("failure is only claimed for T >= 2")
    started = time.perf_counter()
    g = make_counterexample(p, n_cliques)
    pf = float(as_fraction(p))
    fails = sum(run_chunks(_counterexample_chunk, (g, pf, rounds, seed, condition_on_a), trials, workers))
    bound = (1 - math.exp(-0.02 * n_cliques)) if condition_on_a else counterexample_bound(p, n_cliques)
    echo = {"graph": f"counterexample:{as_fraction(p)}:{n_cliques}", "n": g.n, "p": str(as_fraction(p)),
            "n_cliques": n_cliques, "rounds": rounds, "trials": trials, "seed": seed,
            "condition_on_a": condition_on_a}
    return _result(fails, trials, echo, {"analytic_lower_bound": bound}, started)


# ---------------------------------------------------------------- influence


def _product_prob(x, probs) -> Fraction:
    out = Fraction(1)
    for a in x:
        out *= probs[a]
    return out


def estimate_influence(f: Callable, probs: Sequence, n: int, i: int, mode: str = "exact",
                       budget: int = 2**16, samples: int = 10_000, seed: int = DEFAULT_SEED):
    """Influence of voter ``i``: expected conditional variance of ``f`` given the other votes.

    ``f`` maps a vote vector in ``[q]^n`` to 0 or 1.  Exact mode enumerates
    ``[q]^n`` in rational arithmetic and returns a Fraction; sampled mode
    averages the exact conditional variance over random ``X_{-i}``.
    """
    q = len(probs)
    if not 0 <= i < n:
        raise InvalidArgument("voter index out of range")
    if mode == "exact":
        if q**n > budget:
            raise BudgetExceeded(f"q^n = {q**n} exceeds budget {budget}")
        fp = [as_fraction(x) for x in probs]
        total = Fraction(0)
        for rest in itertools.product(range(q), repeat=n - 1):
            w = _product_prob(rest, fp)
            if w == 0:
                continue
            vals = [Fraction(int(f(rest[:i] + (b,) + rest[i:]))) for b in range(q)]
            mean = sum(fp[b] * vals[b] for b in range(q))
            total += w * sum(fp[b] * (vals[b] - mean) ** 2 for b in range(q))
        return total
    if mode != "sampled":
        raise InvalidArgument("mode must be 'exact' or 'sampled'")
    fprob = np.asarray([float(x) for x in probs])
    rng = np.random.default_rng(seed)
    acc = 0.0
    for _ in range(samples):
        x = list(rng.choice(q, size=n, p=fprob))
        vals = []
        for b in range(q):
            x[i] = b
            vals.append(float(f(tuple(x))))
        vals = np.array(vals)
        mean = fprob @ vals
        acc += fprob @ (vals - mean) ** 2
    return acc / samples


def prob_zero(f: Callable, p, n: int) -> Fraction:
    """Exact ``P_p(f = 0)`` for ``f`` on ``{0,1}^n`` with i.i.d. ``P(0) = p``."""
    pf = as_fraction(p)
    probs = (pf, 1 - pf)
    return sum((_product_prob(x, probs) for x in itertools.product((0, 1), repeat=n) if f(x) == 0),
               Fraction(0))


def dictator_equality_check(p_grid, n: int = 3, index: int = 0) -> dict:
    """``P_p(x_index = 0)`` by enumeration, compared with ``p`` exactly."""
    rows = []
    for p in p_grid:
        pf = as_fraction(p)
        val = prob_zero(lambda x: x[index], pf, n)
        rows.append({"p": str(pf), "prob_zero": str(val), "equal": val == pf})
    return {"rows": rows, "all_equal": all(r["equal"] for r in rows)}


# ---------------------------------------------------------------- expectation bound


def _ones_by_time(out: dyn.BatchRun, horizon: int) -> np.ndarray:
    """``N_1(t)`` for t = 0..horizon per trial, extending cycles past the stop time."""
    ones = out.counts[:, :, 1].astype(np.int64)
    if horizon < len(ones):
        return ones[: horizon + 1]
    extra = []
    last, prev = ones[-1], ones[-2] if len(ones) > 1 else ones[-1]
    for t in range(len(ones), horizon + 1):
        odd = (t - out.t_stop) % 2 == 1
        extra.append(np.where((out.period == 2) & odd, prev, last))
    return np.concatenate([ones, np.array(extra).reshape(-1, ones.shape[1])])


def _expectation_chunk(g, p, rounds, seed, lo, hi):
    x0 = initial_states(g.n, dyn.InitialDistribution.binary(p), seed, lo, hi)
    out = dyn.simulate_batch(g, dyn.MAJORITY_RULE, x0, 2, rounds, record_counts=True)
    ones = _ones_by_time(out, rounds)
    return ones.sum(axis=1), (ones**2).sum(axis=1)


def expectation_bound_check(g: Graph, p: float, rounds: int, trials: int, seed: int = DEFAULT_SEED,
                            workers: int = 1) -> dict:
    """Estimate ``E sum_v X_v(t)`` for t <= rounds and compare with ``(1-p) n``."""
    started = time.perf_counter()
    if not 0.5 <= p <= 1:
        raise InvalidArgument("p must lie in [1/2, 1]")
    g = dyn.tie_proof(g)
    parts = run_chunks(_expectation_chunk, (g, p, rounds, seed), trials, workers)
    s1 = sum(a for a, _ in parts)
    s2 = sum(b for _, b in parts)
    means = s1 / trials
    var = np.maximum(s2 / trials - means**2, 0.0) * trials / max(trials - 1, 1)
    se = np.sqrt(var / trials)
    bound = (1 - p) * g.n
    bad = [int(t) for t in np.flatnonzero(means > bound + 3 * se)]
    return {
        "config_echo": {"graph": _describe_graph(g), "n": g.n, "p": p, "rounds": rounds,
                        "trials": trials, "seed": seed},
        "bound": bound,
        "per_t_means": means.tolist(),
        "per_t_se": se.tolist(),
        "violations": bad,
        "ok": not bad,
        "wall_ms": round((time.perf_counter() - started) * 1000, 3),
    }


# ---------------------------------------------------------------- unanimity


def _unanimity_chunk(g, rule, q, dist, t_max, lam, d, seed, lo, hi):
    x0 = initial_states(g.n, dist, seed, lo, hi)
    out = dyn.simulate_batch(g, dyn.rule_by_name(rule), x0, q, t_max, record_counts=True)
    counts = out.counts.astype(np.int64)          # (T+1, B, q)
    n = g.n
    stats = dict(all0=0, cycled=0, firings=0, trigger_violations=0, unstable_checks=0,
                 unstable_violations=0, almost_violations=0, first_time_sum=0, first_time_n=0)
    witnesses = []
    unanimous_final = (out.period == 1) & np.all(out.last == out.last[:, :1], axis=1)
    final_alt = out.last[:, 0].astype(np.int64)
    stats["cycled"] = int((out.period > 0).sum())
    stats["all0"] = int((unanimous_final & (final_alt == 0)).sum())
    all0 = counts[:, :, 0] == n
    hit = all0.any(axis=0)
    stats["first_time_n"] = int(hit.sum())
    stats["first_time_sum"] = int(all0.argmax(axis=0)[hit].sum())

    if q == 2:
        gap = counts[:, :, 0] - counts[:, :, 1]
        trig = {0: gap >= 4 * lam * n / d, 1: -gap >= 4 * lam * n / d}
        # N_a(t) - N_b(t) >= alpha n with alpha = 4 lam / d forces N_b(t+1) <= 2 lam^2 n / (alpha d)^2
        alpha = 4 * lam / d
        cap = 2 * lam**2 * n / (alpha**2 * d**2)
        for a in (0, 1):
            b = 1 - a
            fired = trig[a][:-1]
            stats["unstable_checks"] += int(fired.sum())
            over = fired & (counts[1:, :, b] > cap)
            stats["unstable_violations"] += int(over.sum())
    else:
        level = n * (0.5 + 2 * lam / d)
        trig = {a: counts[:, :, a] >= level for a in range(q)}
        cap = n * (1 - 2 * lam**2 / ((4 * lam / d) ** 2 * d**2))
        for a in range(q):
            fired = trig[a][:-1]
            stats["unstable_checks"] += int(fired.sum())
            stats["unstable_violations"] += int((fired & (counts[1:, :, a] < cap)).sum())

    for a, fired in trig.items():
        ever = fired.any(axis=0)
        stats["firings"] += int(ever.sum())
        bad = ever & ~(unanimous_final & (final_alt == a))
        stats["trigger_violations"] += int(bad.sum())
        for b in np.flatnonzero(bad)[:3]:
            witnesses.append({"trial": lo + int(b), "alternative": a, "final_counts": counts[-1, b].tolist()})
        first = np.where(ever, fired.argmax(axis=0), counts.shape[0])
        later = np.arange(counts.shape[0])[:, None] > first[None, :]
        others = g.n - counts[:, :, a]
        stats["almost_violations"] += int((later & (others > n / 8)).any(axis=0).sum())
    return stats, witnesses


def unanimity_experiment(g: Graph, cert: SpectralCertificate | None, dist: dyn.InitialDistribution,
                         t_max: int, trials: int, seed: int = DEFAULT_SEED, workers: int = 1) -> dict:
    """Run to periodicity on a certified expander and audit the unanimity guarantees.

    ``g`` must already be the graph the dynamics run on: odd-degree for
    two alternatives (majority), tie-free weighted for more (plurality),
    and ``cert`` its spectral certificate.
    """
    if cert is None:
        raise InvalidArgument("a spectral certificate is required")
    if not cert.is_expander(3 / 16):
        raise InvalidArgument(f"lambda/d = {cert.ratio:.4f} exceeds 3/16")
    started = time.perf_counter()
    q = dist.q
    rule = dyn.MAJORITY if q == 2 else dyn.WEIGHTED_PLURALITY
    lam = cert.lam + cert.tol
    parts = run_chunks(_unanimity_chunk, (g, rule, q, dist, t_max, lam, cert.d, seed), trials, workers)
    total = {k: sum(p[0][k] for p in parts) for k in parts[0][0]}
    witnesses = [w for p in parts for w in p[1]][:10]
    frac = total["all0"] / trials
    return {
        "config_echo": {"graph": _describe_graph(g), "n": g.n, "q": q, "probs": list(dist.probs),
                        "t_max": t_max, "trials": trials, "seed": seed, "rule": rule},
        "certificate": cert.to_dict(),
        "estimate": frac,
        "half_width": half_width(frac, trials),
        "trials": trials,
        "unanimous_zero": total["all0"],
        "cycled": total["cycled"],
        "mean_first_unanimity_time": (total["first_time_sum"] / total["first_time_n"]) if total["first_time_n"] else None,
        "trigger_firings": total["firings"],
        "trigger_violations": total["trigger_violations"],
        "unstable_checks": total["unstable_checks"],
        "unstable_violations": total["unstable_violations"],
        "almost_consensus_violations": total["almost_violations"],
        "witnesses": witnesses,
        "wall_ms": round((time.perf_counter() - started) * 1000, 3),
    }


# ---------------------------------------------------------------- thresholds and cycles


def _threshold_chunk(g, p, rounds, alphas, seed, lo, hi):
    x0 = initial_states(g.n, dyn.InitialDistribution.binary(p), seed, lo, hi)
    out = dyn.simulate_batch(g, dyn.MAJORITY_RULE, x0, 2, rounds)
    ones = out.state_at(rounds).sum(axis=1, dtype=np.int64)
    # g_alpha = 0 iff fewer than (1 - alpha) n ones
    return np.array([int((ones < (1 - a) * g.n).sum()) for a in alphas])


def threshold_sweep(g: Graph, p: float, alphas: Sequence[float], rounds: int, trials: int,
                    seed: int = DEFAULT_SEED, workers: int = 1) -> dict:
    """``P_p(g_alpha(X(T)) = 0)`` for each alpha, from one set of trajectories."""
    started = time.perf_counter()
    alphas = [float(a) for a in alphas]
    if any(not 0.5 <= a < 1 for a in alphas):
        raise InvalidArgument("alpha must lie in [1/2, 1)")
    g = dyn.tie_proof(g)
    wins = sum(run_chunks(_threshold_chunk, (g, p, rounds, alphas, seed), trials, workers))
    rows = []
    for a, w in zip(alphas, wins):
        est = w / trials
        rows.append({"alpha": a, "estimate": est, "half_width": half_width(est, trials), "successes": int(w)})
    delta = 2 * p - 1
    return {
        "config_echo": {"graph": _describe_graph(g), "n": g.n, "p": p, "rounds": rounds,
                        "trials": trials, "seed": seed},
        "rows": rows,
        "cycle_reference_alpha": cycle_threshold(delta),
        "wall_ms": round((time.perf_counter() - started) * 1000, 3),
    }


def _cycle_chunk(n, p, rounds, vertex, seed, lo, hi):
    g = make_cycle(n, with_self_loops=True)
    x0 = initial_states(n, dyn.InitialDistribution.binary(p), seed, lo, hi)
    window = [x0]
    track = [x0[:, vertex].copy()]
    period = np.zeros(len(x0), dtype=np.int8)
    t = 0
    while not np.all(period > 0) and t < 4 * n:
        nxt = dyn.majority_batch(g, window[-1])
        t += 1
        fresh = period == 0
        period[fresh & np.all(nxt == window[-1], axis=1)] = 1
        if len(window) > 1:
            period[fresh & (period == 0) & np.all(nxt == window[-2], axis=1)] = 2
        window = window[-1:] + [nxt]
        track.append(nxt[:, vertex].copy())
    track = np.array(track)                      # (t+1, B)
    final = track[-1]
    moved = track != final[None, :]
    # first time from which the vertex never changes again
    settle = np.where(moved.any(axis=0), len(track) - np.argmax(moved[::-1], axis=0), 0)
    stable = period == 1
    zero_after_t = int((stable & (final == 0) & (settle <= rounds)).sum())
    zero_limit = int((stable & (final == 0)).sum())
    mismatches = 0
    for b in range(len(x0)):
        ev = dyn.cycle_eventual_opinion(x0[b].tolist(), vertex)
        if not stable[b] or ev.opinion != final[b] or ev.settle_time != settle[b]:
            mismatches += 1
    return np.array([zero_after_t, zero_limit, mismatches, int((~stable).sum())])


def cycle_closed_form_check(n: int, p: float, rounds: int, trials: int, seed: int = DEFAULT_SEED,
                            vertex: int = 0, workers: int = 1) -> dict:
    """Estimate ``P(X_v(t) = 0 for all t >= T)`` on the self-looped n-cycle.

    Each trajectory is followed until it cycles; the eventual opinion and
    settle time of ``vertex`` are compared with :func:`cycle_eventual_opinion`.
    """
    if n % 2 == 0:
        raise InvalidArgument("n must be odd")
    if n <= 2 * rounds:
        raise InvalidArgument("need n > 2T")
    started = time.perf_counter()
    tot = sum(run_chunks(_cycle_chunk, (n, p, rounds, vertex, seed), trials, workers))
    est = tot[0] / trials
    limit = cycle_limit(p)
    return {
        "config_echo": {"graph": f"cycle:{n}", "n": n, "p": p, "rounds": rounds, "trials": trials,
                        "seed": seed, "vertex": vertex},
        "estimate": est,
        "half_width": half_width(est, trials),
        "limit_estimate": tot[1] / trials,
        "closed_form": limit,
        "oracle_mismatches": int(tot[2]),
        "non_fixed_trials": int(tot[3]),
        "trials": trials,
        "wall_ms": round((time.perf_counter() - started) * 1000, 3),
    }


def _oracle_chunk(n, seed, lo, hi):
    g = make_cycle(n, with_self_loops=True)
    x0 = initial_states(n, dyn.InitialDistribution.binary(0.5), seed, lo, hi)
    history = [x0]
    while len(history) < 2 or not np.array_equal(history[-1], history[-2]):
        history.append(dyn.majority_batch(g, history[-1]))
        if len(history) > 2 * n + 2:
            break
    traj = np.array(history)                      # (T+1, B, n)
    final = traj[-1]
    moved = traj != final[None]
    settle = np.where(moved.any(axis=0), len(traj) - np.argmax(moved[::-1], axis=0), 0)
    mismatches = 0
    for b in range(len(x0)):
        row = x0[b].tolist()
        for v in range(n):
            ev = dyn.cycle_eventual_opinion(row, v)
            if ev.opinion != final[b, v] or ev.settle_time != settle[b, v]:
                mismatches += 1
    return mismatches


def cycle_oracle_equivalence(n: int, trials: int, seed: int = DEFAULT_SEED, workers: int = 1) -> dict:
    """Compare the eventual-opinion rule with simulation at every vertex of C_n."""
    if n % 2 == 0:
        raise InvalidArgument("n must be odd so that a stable pair always exists")
    started = time.perf_counter()
    bad = sum(run_chunks(_oracle_chunk, (n, seed), trials, workers))
    return {"n": n, "trials": trials, "vertices_checked": n * trials, "mismatches": int(bad),
            "wall_ms": round((time.perf_counter() - started) * 1000, 3)}


# ---------------------------------------------------------------- periodicity


def _random_instance(rng: np.random.Generator, kind: str):
    if kind == "cycle":
        n = int(rng.integers(3, 300))
        g = dyn.tie_proof(make_cycle(n))
        return g, dyn.MAJORITY_RULE, dyn.InitialDistribution.binary(float(rng.uniform(0.5, 1.0)))
    n = int(rng.integers(10, 501))
    d = int(rng.integers(3, min(12, n - 1)))
    if (n * d) % 2:
        n += 1 if n < 500 else -1
    base = make_random_regular(n, d, int(rng.integers(0, 2**63)))
    if kind == "regular":
        return dyn.tie_proof(base), dyn.MAJORITY_RULE, dyn.InitialDistribution.binary(float(rng.uniform(0.5, 1.0)))
    q = int(rng.integers(2, 5))
    g = perturb_weights(base, float(n) ** -3, int(rng.integers(0, 2**63)))
    return g, dyn.PLURALITY_RULE, dyn.InitialDistribution.biased(q, float(rng.uniform(0, 0.5)))


def periodicity_check(pairs: int, seed: int = DEFAULT_SEED) -> dict:
    """Random (graph, start) pairs: every run must cycle with period <= 2 while ``L`` never drops.

    The pairs are spread over self-looped cycles, tie-proofed random regular
    graphs under majority, and weight-perturbed random regular graphs under
    plurality with 2 to 4 alternatives.
    """
    started = time.perf_counter()
    kinds = ("cycle", "regular", "plurality")
    report = {"pairs": 0, "by_kind": {k: 0 for k in kinds}, "period_violations": 0,
              "potential_violations": 0, "increment_violations": 0, "ties": 0, "max_entry_time": 0,
              "witnesses": []}
    for i in range(pairs):
        kind = kinds[i % 3]
        rng = trial_rng(seed, i)
        g, rule, dist = _random_instance(rng, kind)
        s0 = dyn.OpinionState(dist.sample(g.n, rng), dist.q)
        try:
            rec = dyn.run(g, rule, s0, t_max=4 * g.n * int(g.degrees.max()))
        except TieError:
            report["ties"] += 1
            continue
        report["pairs"] += 1
        report["by_kind"][kind] += 1
        if rec.period not in (1, 2):
            report["period_violations"] += 1
            report["witnesses"].append({"pair": i, "kind": kind, "issue": "no period <= 2"})
            continue
        report["max_entry_time"] = max(report["max_entry_time"], rec.entry_time)
        tol = dyn.potential_tolerance(g)
        if np.any(np.diff(rec.potential) < -tol):
            report["potential_violations"] += 1
            report["witnesses"].append({"pair": i, "kind": kind, "issue": "L decreased"})
        states = rec.states
        for t, jump in enumerate(rec.increments, start=1):
            same = np.array_equal(states[t + 1], states[t - 1])
            if jump < 0 or (jump == 0) != same:
                report["increment_violations"] += 1
                report["witnesses"].append({"pair": i, "kind": kind, "issue": f"J({t}) = {jump}"})
                break
    report["ok"] = report["period_violations"] == report["potential_violations"] == report["increment_violations"] == 0
    report["wall_ms"] = round((time.perf_counter() - started) * 1000, 3)
    return report


def expander_for_unanimity(n: int = 2000, d: int = 128, seed: int = DEFAULT_SEED, q: int = 2):
    """Random regular graph prepared for the unanimity experiment, with its certificate."""
    from .graph import spectral_certificate

    base = make_random_regular(n, d, seed)
    g = dyn.tie_proof(base) if q == 2 else perturb_weights(base, float(n) ** -3, int(derived_rng(seed, 11).integers(0, 2**63)))
    return g, spectral_certificate(g)
