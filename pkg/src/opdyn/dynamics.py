"""Synchronous opinion dynamics on graphs.

All built-in rules look one step back.  The batch engine
(:func:`simulate_batch`) advances many independent trials at once as rows
of a 2-D array; single-trajectory helpers are thin wrappers around it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import InvalidArgument, NoAnchorError, TieError
from .graph import Graph

MAJORITY = "majority"
WEIGHTED_PLURALITY = "weighted_plurality"
UNANIMITY_SWITCH = "unanimity_switch"
CUSTOM = "custom"


@dataclass(frozen=True)
class OpinionState:
    opinions: np.ndarray
    q: int = 2
    t: int = 0

    def __post_init__(self):
        x = np.asarray(self.opinions, dtype=np.int64).copy()
        if x.ndim != 1:
            raise InvalidArgument("opinions must be a 1-D sequence")
        if self.q < 1:
            raise InvalidArgument("q must be positive")
        if x.size and (x.min() < 0 or x.max() >= self.q):
            raise InvalidArgument(f"opinions must lie in [0, {self.q})")
        x.flags.writeable = False
        object.__setattr__(self, "opinions", x)

    def __len__(self):
        return len(self.opinions)

    def counts(self) -> np.ndarray:
        return np.bincount(self.opinions, minlength=self.q)

    def __eq__(self, other):
        if not isinstance(other, OpinionState):
            return NotImplemented
        return self.q == other.q and np.array_equal(self.opinions, other.opinions)

    __hash__ = None


@dataclass(frozen=True)
class InitialDistribution:
    probs: tuple

    def __post_init__(self):
        probs = tuple(float(x) for x in self.probs)
        if not probs:
            raise InvalidArgument("empty distribution")
        if any(x < 0 for x in probs) or abs(sum(probs) - 1.0) > 1e-12:
            raise InvalidArgument("probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "probs", probs)

    @property
    def q(self) -> int:
        return len(self.probs)

    @classmethod
    def biased(cls, q: int, delta: float) -> "InitialDistribution":
        """Symmetric member of P_delta: alternative 0 ahead of every other by delta."""
        if q < 2:
            raise InvalidArgument("need q >= 2")
        if not 0 <= delta <= 1:
            raise InvalidArgument("delta must lie in [0, 1]")
        rest = (1.0 - delta) / q
        return cls((1.0 - (q - 1) * rest,) + (rest,) * (q - 1))

    @classmethod
    def binary(cls, p: float) -> "InitialDistribution":
        """P(0) = p, P(1) = 1 - p."""
        p = float(p)
        if not 0 <= p <= 1:
            raise InvalidArgument("p must lie in [0, 1]")
        return cls((p, 1.0 - p))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        # an atom of zero mass must never be drawn, so compare with 'right'
        x = np.searchsorted(cum, rng.random(n), side="right")
        return np.minimum(x, self.q - 1).astype(np.int8)


@dataclass(frozen=True)
class InteractionRule:
    """A synchronous update rule.

    ``func`` is only used by custom rules: ``func(v, history) -> opinion``
    where ``history`` has shape ``(k, |N_v|)`` holding the opinions of
    ``N_v`` (in increasing vertex order) at the last ``k <= lookback``
    times, most recent last.
    """

    kind: str
    lookback: int = 1
    fair: bool = True
    monotone: bool = True
    func: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in (MAJORITY, WEIGHTED_PLURALITY, UNANIMITY_SWITCH, CUSTOM):
            raise InvalidArgument(f"unknown rule kind {self.kind!r}")
        if self.kind == CUSTOM and self.func is None:
            raise InvalidArgument("custom rules need a func")
        if self.lookback < 1:
            raise InvalidArgument("lookback must be at least 1")


MAJORITY_RULE = InteractionRule(MAJORITY)
PLURALITY_RULE = InteractionRule(WEIGHTED_PLURALITY)
UNANIMITY_RULE = InteractionRule(UNANIMITY_SWITCH)


def rule_by_name(name: str) -> InteractionRule:
    rules = {r.kind: r for r in (MAJORITY_RULE, PLURALITY_RULE, UNANIMITY_RULE)}
    rules["plurality"] = PLURALITY_RULE
    try:
        return rules[name]
    except KeyError:
        raise InvalidArgument(f"unknown rule {name!r}") from None


def custom_rule(func, lookback=1, fair=False, monotone=False) -> InteractionRule:
    return InteractionRule(CUSTOM, lookback, fair, monotone, func)


# ---------------------------------------------------------------- steps


def tie_proof(g: Graph) -> Graph:
    """Add a self-loop to every even-degree vertex lacking one, remove it otherwise."""
    return g.tie_proofed()


def sample_initial(g: Graph, dist: InitialDistribution, seed: int) -> OpinionState:
    from .seeding import trial_rng

    return OpinionState(dist.sample(g.n, trial_rng(seed, 0)), dist.q, 0)


def _check_odd(g: Graph):
    even = np.flatnonzero(g.degrees % 2 == 0)
    if even.size:
        v = int(even[0])
        raise TieError(f"vertex {v} has even degree {g.degree(v)}; tie-proof the graph first", vertex=v)


def _tally(m, x: np.ndarray) -> np.ndarray:
    # rows of x are trials; M is symmetric so x @ M gives per-vertex neighbourhood sums
    return np.asarray((m @ x.T).T)


def majority_batch(g: Graph, x: np.ndarray) -> np.ndarray:
    _check_odd(g)
    ones = _tally(g.unit_adjacency, x.astype(np.float64))
    return (2 * ones > g.degrees).astype(np.int8)


def plurality_batch(g: Graph, x: np.ndarray, q: int) -> np.ndarray:
    tallies = np.stack([_tally(g.adjacency, (x == a).astype(np.float64)) for a in range(q)])
    best = tallies.argmax(axis=0)
    top = np.take_along_axis(tallies, best[None], axis=0)[0]
    ties = (tallies == top[None]).sum(axis=0) > 1
    # a vertex with empty neighbourhood ties at zero; it cannot be tie-free
    if ties.any():
        trial, v = np.argwhere(ties)[0]
        raise TieError(f"exact tie at vertex {v} (trial row {trial})", vertex=int(v))
    return best.astype(np.int8)


def unanimity_batch(g: Graph, x: np.ndarray, q: int) -> np.ndarray:
    loops = g.self_loops
    others = g.unit_adjacency - _diag(loops, g.n)
    deg = g.degrees - loops
    out = x.copy()
    for a in range(q):
        agree = _tally(others, (x == a).astype(np.float64))
        out[(agree == deg) & (deg > 0)] = a
    return out


def _diag(flags, n):
    import scipy.sparse as sp

    return sp.diags(flags.astype(np.float64), shape=(n, n), format="csr")


def _custom_batch(g: Graph, rule: InteractionRule, window: list[np.ndarray]) -> np.ndarray:
    nbrs = [g.neighbors(v) for v in range(g.n)]
    hist = np.stack(window[-rule.lookback:], axis=1)  # (B, k, n)
    out = np.empty_like(window[-1])
    for b in range(out.shape[0]):
        for v in range(g.n):
            out[b, v] = rule.func(v, hist[b][:, nbrs[v]])
    return out


def step_batch(g: Graph, rule: InteractionRule, window: list[np.ndarray], q: int) -> np.ndarray:
    x = window[-1]
    if rule.kind == MAJORITY:
        if q != 2:
            raise InvalidArgument("majority dynamics needs q = 2")
        return majority_batch(g, x)
    if rule.kind == WEIGHTED_PLURALITY:
        return plurality_batch(g, x, q)
    if rule.kind == UNANIMITY_SWITCH:
        return unanimity_batch(g, x, q)
    return _custom_batch(g, rule, window)


def _single(fn, g, s: OpinionState, *args) -> OpinionState:
    if len(s) != g.n:
        raise InvalidArgument("state size does not match graph")
    x = fn(g, s.opinions[None, :].astype(np.int8), *args)[0]
    return OpinionState(x, s.q, s.t + 1)


def step_majority(g: Graph, s: OpinionState) -> OpinionState:
    if s.q != 2:
        raise InvalidArgument("majority dynamics needs q = 2")
    return _single(majority_batch, g, s)


def step_plurality(g: Graph, s: OpinionState) -> OpinionState:
    return _single(plurality_batch, g, s, s.q)


def step_unanimity_switch(g: Graph, s: OpinionState) -> OpinionState:
    return _single(unanimity_batch, g, s, s.q)


def step(g: Graph, rule: InteractionRule, history: list[OpinionState]) -> OpinionState:
    """Apply ``rule`` to the most recent state(s) in ``history``."""
    last = history[-1]
    window = [h.opinions[None, :].astype(np.int8) for h in history[-rule.lookback:]]
    return OpinionState(step_batch(g, rule, window, last.q)[0], last.q, last.t + 1)


# ---------------------------------------------------------------- potential


def potential(g: Graph, s_prev, s_next) -> float:
    """Agreement functional ``L`` on a (t, t+1) pair.

    ``sum_v sum_{w in N_v} e_wv [X_v(t+1) == X_w(t)]``.
    """
    x_prev = np.asarray(getattr(s_prev, "opinions", s_prev))
    x_next = np.asarray(getattr(s_next, "opinions", s_next))
    if len(x_prev) != g.n or len(x_next) != g.n:
        raise InvalidArgument("state size does not match graph")
    m = g.adjacency.tocoo()
    return float(np.sum(m.data[x_next[m.row] == x_prev[m.col]]))


def potential_increment(g: Graph, s_prev, s_cur, s_next) -> float:
    """``J(t) = L(t) - L(t-1)`` summed vertex by vertex from the tallies at ``t``.

    Each vertex term compares the tally of its new opinion with that of its
    opinion two steps back, using the same floating-point tallies the
    plurality step maximises, so every term is exactly nonnegative.
    """
    xs = [np.asarray(getattr(s, "opinions", s)) for s in (s_prev, s_cur, s_next)]
    if any(len(x) != g.n for x in xs):
        raise InvalidArgument("state size does not match graph")
    x_prev, x_cur, x_next = xs
    q = int(max(x.max(initial=0) for x in xs)) + 1
    tallies = np.stack([_tally(g.adjacency, (x_cur == a).astype(np.float64)[None])[0] for a in range(q)])
    idx = np.arange(g.n)
    return float(np.sum(tallies[x_next, idx] - tallies[x_prev, idx]))


def potential_tolerance(g: Graph) -> float:
    """Slack for comparing successive potentials in floating point."""
    return 64 * np.finfo(float).eps * float(2 * g.edge_weights().sum())


# ---------------------------------------------------------------- runs


@dataclass
class TrajectoryRecord:
    states: np.ndarray                # (T+1, n)
    q: int
    counts: np.ndarray                # (T+1, q)
    potential: np.ndarray             # (T,), L on (t, t+1)
    weighted: bool
    increments: np.ndarray | None = None  # (T-1,), J(t) for t = 1..T-1
    period: int | None = None
    entry_time: int | None = None

    @property
    def length(self) -> int:
        return len(self.states) - 1

    def state(self, t: int) -> OpinionState:
        return OpinionState(self.states[t], self.q, t)

    def to_csv(self) -> str:
        head = ["t"] + [f"N_{a}" for a in range(self.q)] + ["L"]
        rows = [",".join(head)]
        for t, c in enumerate(self.counts):
            ell = ""
            if self.weighted and t < len(self.potential):
                ell = repr(float(self.potential[t]))
            rows.append(",".join([str(t), *map(str, c), ell]))
        return "\n".join(rows) + "\n"


def _check_rule_graph(g: Graph, rule: InteractionRule, q: int):
    if rule.kind == MAJORITY:
        if q != 2:
            raise InvalidArgument("majority dynamics needs q = 2")
        _check_odd(g)


def run(g: Graph, rule: InteractionRule, s0: OpinionState, t_max: int | None = None,
        detect_period: bool = True) -> TrajectoryRecord:
    """Iterate ``rule`` from ``s0`` up to ``t_max`` steps (default ``10 n``).

    With ``detect_period`` the run stops as soon as the newest state equals
    the one 1 or 2 steps earlier and records ``(period, entry_time)``.
    """
    if len(s0) != g.n:
        raise InvalidArgument("state size does not match graph")
    q = s0.q
    _check_rule_graph(g, rule, q)
    if t_max is None:
        t_max = 10 * max(g.n, 1)
    states = [s0.opinions.astype(np.int8)]
    ells, jumps = [], []
    period = entry = None
    for t in range(1, t_max + 1):
        window = [x[None, :] for x in states[-rule.lookback:]]
        nxt = step_batch(g, rule, window, q)[0]
        ells.append(potential(g, states[-1], nxt))
        if len(states) >= 2:
            jumps.append(potential_increment(g, states[-2], states[-1], nxt))
        states.append(nxt)
        if detect_period:
            if np.array_equal(nxt, states[-2]):
                period, entry = 1, t - 1
                break
            if t >= 2 and np.array_equal(nxt, states[-3]):
                period, entry = 2, t - 2
                break
    arr = np.array(states, dtype=np.int8)
    counts = np.stack([np.bincount(x, minlength=q) for x in arr.astype(np.int64)])
    return TrajectoryRecord(arr, q, counts, np.array(ells), g.weighted, increments=np.array(jumps),
                            period=period, entry_time=entry)


@dataclass
class BatchRun:
    """Outcome of advancing a batch of trials.

    ``last`` and ``prev`` are the states at ``t_stop`` and ``t_stop - 1``.
    ``period[b]`` is 1 or 2 once trial ``b`` was seen to cycle (0 if not),
    with the cycle entered at ``entry[b]``.  ``counts[t, b, a]`` is
    ``N_a(t)`` for ``t <= t_stop`` when recorded.
    """

    q: int
    t_stop: int
    last: np.ndarray
    prev: np.ndarray
    period: np.ndarray
    entry: np.ndarray
    counts: np.ndarray | None = None

    def state_at(self, t: int) -> np.ndarray:
        """States at time ``t >= t_stop`` (requires every trial to have cycled if ``t > t_stop``)."""
        if t == self.t_stop:
            return self.last
        if t < self.t_stop:
            raise InvalidArgument(f"state at t={t} was not retained")
        if np.any(self.period == 0):
            raise InvalidArgument("cannot extrapolate trials that have not cycled")
        odd = (t - self.t_stop) % 2 == 1
        out = self.last.copy()
        if odd:
            two = self.period == 2
            out[two] = self.prev[two]
        return out


def simulate_batch(g: Graph, rule: InteractionRule, x0: np.ndarray, q: int, t_max: int,
                   stop_when_periodic: bool = True, record_counts: bool = False) -> BatchRun:
    """Advance every row of ``x0`` synchronously for up to ``t_max`` steps.

    Stops early once every trial has entered a cycle of period 1 or 2 (when
    ``stop_when_periodic``).
    """
    x0 = np.asarray(x0, dtype=np.int8)
    if x0.ndim != 2 or x0.shape[1] != g.n:
        raise InvalidArgument("x0 must have shape (trials, n)")
    _check_rule_graph(g, rule, q)
    bsz = x0.shape[0]
    period = np.zeros(bsz, dtype=np.int8)
    entry = np.full(bsz, -1, dtype=np.int64)
    window = [x0]
    counts = [_counts(x0, q)] if record_counts else None
    t = 0
    while t < t_max:
        if stop_when_periodic and np.all(period > 0):
            break
        nxt = step_batch(g, rule, window, q)
        t += 1
        fresh = period == 0
        same1 = fresh & np.all(nxt == window[-1], axis=1)
        period[same1] = 1
        entry[same1] = t - 1
        if len(window) >= 2:
            same2 = fresh & ~same1 & np.all(nxt == window[-2], axis=1)
            period[same2] = 2
            entry[same2] = t - 2
        window.append(nxt)
        del window[:-max(3, rule.lookback)]
        if record_counts:
            counts.append(_counts(nxt, q))
    prev = window[-2] if len(window) >= 2 else window[-1]
    return BatchRun(q, t, window[-1], prev, period, entry,
                    np.stack(counts) if record_counts else None)


def _counts(x: np.ndarray, q: int) -> np.ndarray:
    return np.stack([(x == a).sum(axis=1) for a in range(q)], axis=1)


# ---------------------------------------------------------------- cycles


class EventualOpinion(NamedTuple):
    opinion: int
    settle_time: int


def cycle_eventual_opinion(initial, v: int) -> EventualOpinion:
    """Limit opinion of ``v`` under majority dynamics on a self-looped cycle.

    ``V`` is the distance back to the nearest adjacent equal pair on the
    left, ``W`` the distance forward to the nearest one on the right.  The
    closer front wins: ``X_{v-V}(0)`` from time ``V`` on if ``V <= W``,
    otherwise ``X_{v+W}(0)`` from time ``W`` on.
    """
    x = np.asarray(getattr(initial, "opinions", initial))
    n = len(x)
    if n < 3:
        raise InvalidArgument("cycle needs at least 3 vertices")
    if not 0 <= v < n:
        raise InvalidArgument(f"vertex {v} out of range")
    left = right = None
    for k in range(n):
        if left is None and x[(v - k) % n] == x[(v - k - 1) % n]:
            left = k
        if right is None and x[(v + k) % n] == x[(v + k + 1) % n]:
            right = k
        if left is not None and right is not None:
            break
    if left is None:
        raise NoAnchorError("cycle alternates everywhere; no vertex ever settles")
    if left <= right:
        return EventualOpinion(int(x[(v - left) % n]), left)
    return EventualOpinion(int(x[(v + right) % n]), right)
