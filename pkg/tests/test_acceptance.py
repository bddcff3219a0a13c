"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the summary lines are
printed at the end of the session (and immediately with ``-s``).
"""

import json
import math
import time
from fractions import Fraction

import pytest

from conftest import ACCEPTANCE_LINES
from opdyn import cli
from opdyn import dynamics as dyn
from opdyn import experiments as ex
from opdyn import voting as vt
from opdyn.graph import make_cycle, mixing_check

SEED = 0xD1CE

pytestmark = pytest.mark.slow


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def expander2():
    return ex.expander_for_unanimity(n=2000, d=128, seed=SEED, q=2)


@pytest.fixture(scope="module")
def unanimity_runs(expander2):
    g2, cert2 = expander2
    t0 = time.perf_counter()
    binary = ex.unanimity_experiment(g2, cert2, dyn.InitialDistribution.binary(0.9), 200, 200, seed=SEED)
    g3, cert3 = ex.expander_for_unanimity(n=2000, d=128, seed=SEED, q=3)
    ternary = ex.unanimity_experiment(g3, cert3, dyn.InitialDistribution((0.9, 0.05, 0.05)), 200, 200, seed=SEED)
    return binary, ternary, time.perf_counter() - t0


@pytest.mark.parametrize("p, target", [(0.75, 0.86538), (0.6, 0.504 / 0.76)])
def test_c01_cycle_closed_form(p, target):
    t0 = time.perf_counter()
    rep = ex.cycle_closed_form_check(2001, p, 200, 20_000, seed=SEED)
    secs = time.perf_counter() - t0
    assert rep["closed_form"] == pytest.approx(target, abs=5e-6)
    ok = abs(rep["estimate"] - rep["closed_form"]) <= 0.01 and secs <= 120
    record(1, f"cycle closed form p={p}", ok,
           f"estimate {rep['estimate']:.5f} vs {rep['closed_form']:.5f} (tol 0.01), {secs:.1f}s")


def test_c02_oracle_equivalence():
    t0 = time.perf_counter()
    rep = ex.cycle_oracle_equivalence(101, 10_000, seed=SEED)
    secs = time.perf_counter() - t0
    ok = rep["mismatches"] == 0 and rep["vertices_checked"] == 101 * 10_000 and secs <= 30
    record(2, "eventual-state oracle", ok, f"{rep['mismatches']} mismatches over {rep['vertices_checked']} vertices, {secs:.1f}s")


def test_c03_counterexample():
    t0 = time.perf_counter()
    rows = []
    for nc in (50, 200, 800):
        res = ex.counterexample_failure("2/3", nc, 100_000, seed=SEED)
        rows.append((nc, res.estimate, res.metadata["analytic_lower_bound"]))
    secs = time.perf_counter() - t0
    assert rows[0][2] == pytest.approx(0.0234, abs=5e-5)
    ok = all(est >= 0.02 for _, est, _ in rows) and secs <= 600
    detail = ", ".join(f"n_c={nc}: {est:.4f} (floor {b:.4f})" for nc, est, b in rows)
    record(3, "counterexample failure", ok, f"{detail}, {secs:.1f}s")


def test_c04_periodicity():
    t0 = time.perf_counter()
    rep = ex.periodicity_check(1000, seed=SEED)
    secs = time.perf_counter() - t0
    ok = rep["ok"] and rep["ties"] == 0 and rep["pairs"] == 1000 and secs <= 300
    record(4, "period <= 2 and potential", ok,
           f"{rep['pairs']} pairs {rep['by_kind']}, period/L/J violations "
           f"{rep['period_violations']}/{rep['potential_violations']}/{rep['increment_violations']}, {secs:.1f}s")


def test_c05_expander_unanimity(expander2, unanimity_runs):
    _, cert = expander2
    binary, ternary, secs = unanimity_runs
    ok = (cert.ratio <= 3 / 16 and binary["estimate"] >= 0.99 and binary["trigger_violations"] == 0
          and ternary["trigger_violations"] == 0 and ternary["trigger_firings"] > 0 and secs <= 600)
    record(5, "expander unanimity", ok,
           f"lambda/d={cert.ratio:.4f}, q=2 all-0 {binary['estimate']:.3f} "
           f"({binary['trigger_firings']} firings, {binary['trigger_violations']} violations); "
           f"q=3 {ternary['trigger_firings']} firings, {ternary['trigger_violations']} violations, {secs:.1f}s")


def test_c06_unstable_bound(unanimity_runs):
    binary, ternary, _ = unanimity_runs
    checks = binary["unstable_checks"] + ternary["unstable_checks"]
    bad = binary["unstable_violations"] + ternary["unstable_violations"]
    ok = bad == 0 and checks > 0
    record(6, "unstable-state bound", ok, f"{checks} qualifying steps, {bad} violations")


def test_c07_expectation_bound():
    t0 = time.perf_counter()
    rep = ex.expectation_bound_check(make_cycle(1001), 0.75, 50, 10_000, seed=SEED)
    secs = time.perf_counter() - t0
    worst = max(m - (0.25 * 1001 + 3 * se) for m, se in zip(rep["per_t_means"], rep["per_t_se"]))
    ok = worst <= 0 and len(rep["per_t_means"]) == 51 and secs <= 120
    record(7, "expectation bound", ok, f"max(mean - (n/4 + 3 SE)) = {worst:.3f}, {secs:.1f}s")


def test_c08_prime_transitive():
    t0 = time.perf_counter()
    bad, modes = 0, set()
    for q, n in ((2, 3), (2, 5), (2, 7), (3, 5), (3, 7)):
        f = vt.ElectionSystem.prime_transitive(q, n)
        for r in (vt.check_plurality_respecting(f, q, n), vt.check_fair(f, q, n),
                  vt.check_monotone(f, q, n), vt.check_transitive_shift(f, q, n)):
            bad += r.violation_count
            modes.add(r.mode)
    secs = time.perf_counter() - t0
    ok = bad == 0 and modes == {"exhaustive"} and secs <= 60
    record(8, "prime transitive function", ok, f"{bad} violations, modes {sorted(modes)}, {secs:.1f}s")


def test_c09_influence():
    half = ("1/2", "1/2")
    maj = [ex.estimate_influence(lambda x: int(sum(x) >= 2), half, 3, i) for i in range(3)]
    dic = [ex.estimate_influence(lambda x: x[0], half, 3, i) for i in range(3)]
    ok = maj == [Fraction(1, 8)] * 3 and dic == [Fraction(1, 4), 0, 0]
    record(9, "influence", ok, f"majority {[str(v) for v in maj]}, dictator {[str(v) for v in dic]}")


def test_c10_dictator_equality():
    rep = ex.dictator_equality_check([Fraction(1, 2), Fraction(2, 3), Fraction(9, 10)])
    ok = rep["all_equal"]
    record(10, "dictator equality", ok, ", ".join(f"P(f=0)={r['prob_zero']} at p={r['p']}" for r in rep["rows"]))


def test_c11_efficiency_trend():
    rows = []
    for n in (11, 101, 1001):
        cfg = ex.ExperimentConfig(make_cycle(n), delta=0.3, rounds=n, trials=5000, seed=SEED)
        res = ex.estimate_efficiency(cfg)
        rows.append((n, res.estimate, res.half_width))
    ok = all(b[1] >= a[1] - 3 * math.hypot(a[2], b[2]) for a, b in zip(rows, rows[1:]))
    record(11, "efficiency trend", ok, ", ".join(f"C_{n}: {e:.4f}+-{h:.4f}" for n, e, h in rows))


def test_c12_mixing(expander2):
    g, cert = expander2
    rep = mixing_check(g, cert, 1000, seed=SEED)
    ok = rep.trials == 1000 and rep.violations == 0
    record(12, "mixing lemma", ok, f"{rep.violations} violations in {rep.trials} pairs, "
                                   f"worst |E - |A||B|d/n| - lambda sqrt(|A||B|) = {rep.max_violation:.1f}")


CLI_RUNS = [
    ["efficiency", "--graph", "cycle:101", "--delta", "0.3", "--rounds", "101", "--trials", "1200"],
    ["counterexample", "--p", "2/3", "--cliques", "50", "--trials", "1200"],
    ["cycle-limit", "--n", "501", "--p", "0.75", "--rounds", "100", "--trials", "1200"],
    ["threshold-sweep", "--graph", "cycle:201", "--p", "0.7", "--alphas", "0.5,0.6,0.8", "--rounds", "50",
     "--trials", "1200"],
    ["unanimity", "--graph", "random-regular:2000:128", "--p", "0.9", "--trials", "600", "--t-max", "50"],
]


def _strip_timing(text: str) -> str:
    return "\n".join(line for line in text.splitlines() if '"wall_ms"' not in line)


def test_c13_cli_determinism(tmp_path, capsys):
    mismatched = []
    for argv in CLI_RUNS:
        outputs = []
        for tag, workers in (("a", 1), ("b", 2), ("c", 1)):
            out = tmp_path / f"{argv[0]}-{tag}.out"
            code = cli.main(argv + ["--seed", "7", "--workers", str(workers), "--out", str(out)])
            assert code == 0
            outputs.append(_strip_timing(out.read_text(encoding="utf-8")))
        if len(set(outputs)) != 1:
            mismatched.append(argv[0])
        if argv[0] != "threshold-sweep":
            assert json.loads(out.read_text(encoding="utf-8"))["cli_config"]["seed"] == 7
    capsys.readouterr()
    ok = not mismatched
    record(13, "CLI determinism", ok, f"{len(CLI_RUNS)} subcommands x workers 1/2/1, mismatches: {mismatched or 'none'}")
