"""Election systems, property checkers and social types.

Checkers work on anything callable on one opinion vector.  Objects that
also expose ``batch(X)`` (one input per row) are evaluated in bulk, which
is what makes exhaustive checks over ``[q]^n`` cheap.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, TieError, Unsupported
from .graph import Graph

PLURALITY = "plurality"
THRESHOLD = "threshold_alpha"
DICTATOR = "dictator"
PRIME_TRANSITIVE = "prime_transitive"


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    return all(n % k for k in range(2, math.isqrt(n) + 1))


def _votes(x) -> np.ndarray:
    return np.asarray(x, dtype=np.int64).ravel()


def elect_plurality(x, q: int = 2) -> int:
    x = _votes(x)
    counts = np.bincount(x, minlength=q)
    top = counts.max()
    if (counts == top).sum() > 1:
        raise TieError(f"plurality tie between {np.flatnonzero(counts == top).tolist()}")
    return int(counts.argmax())


def elect_threshold(x, alpha: float) -> int:
    """``1`` iff at least ``(1 - alpha) n`` voters hold opinion 1."""
    x = _votes(x)
    if not 0.5 <= alpha < 1:
        raise InvalidArgument("alpha must lie in [1/2, 1)")
    return int(x.sum() >= (1 - alpha) * len(x))


def elect_dictator(x, index: int = 0) -> int:
    return int(_votes(x)[index])


def elect_prime_transitive(x, q: int, n: int | None = None) -> int:
    """Plurality with a tie-break that is invariant under cyclic shifts of voters.

    On a tie, take the voters ``M`` backing any tied alternative, their
    mean position ``k`` in the field Z_n, and return the vote of the first
    voter of ``M`` at or after ``k`` (cyclically).
    """
    x = _votes(x)
    n = len(x) if n is None else n
    if len(x) != n:
        raise InvalidArgument("input length must equal n")
    if not is_prime(n) or n <= q:
        raise InvalidArgument("need n prime and n > q")
    counts = np.bincount(x, minlength=q)
    winners = np.flatnonzero(counts == counts.max())
    if len(winners) == 1:
        return int(winners[0])
    members = np.flatnonzero(np.isin(x, winners))
    # 0 < |M| < n, so |M| is invertible mod the prime n
    k = int(members.sum()) * pow(len(members), -1, n) % n
    in_m = np.zeros(n, dtype=bool)
    in_m[members] = True
    offset = next(i for i in range(n) if in_m[(k + i) % n])
    return int(x[(k + offset) % n])


@dataclass(frozen=True)
class ElectionSystem:
    kind: str
    q: int = 2
    alpha: float | None = None
    index: int | None = None
    n: int | None = None

    def __post_init__(self):
        if self.kind == THRESHOLD:
            if self.q != 2:
                raise InvalidArgument("threshold elections need q = 2")
            if self.alpha is None or not 0.5 <= self.alpha < 1:
                raise InvalidArgument("alpha must lie in [1/2, 1)")
        elif self.kind == DICTATOR:
            if self.index is None or self.index < 0:
                raise InvalidArgument("dictator needs a voter index")
        elif self.kind == PRIME_TRANSITIVE:
            if self.n is None or not is_prime(self.n) or self.n <= self.q:
                raise InvalidArgument("need n prime and n > q")
        elif self.kind != PLURALITY:
            raise InvalidArgument(f"unknown election {self.kind!r}")

    @classmethod
    def plurality(cls, q=2):
        return cls(PLURALITY, q)

    @classmethod
    def threshold(cls, alpha):
        return cls(THRESHOLD, 2, alpha=float(alpha))

    @classmethod
    def dictator(cls, index=0, q=2):
        return cls(DICTATOR, q, index=index)

    @classmethod
    def prime_transitive(cls, q, n):
        return cls(PRIME_TRANSITIVE, q, n=n)

    def __call__(self, x) -> int:
        if self.kind == PLURALITY:
            return elect_plurality(x, self.q)
        if self.kind == THRESHOLD:
            return elect_threshold(x, self.alpha)
        if self.kind == DICTATOR:
            return elect_dictator(x, self.index)
        return elect_prime_transitive(x, self.q, self.n)

    def batch(self, xs) -> np.ndarray:
        xs = np.asarray(xs)
        if self.kind == THRESHOLD:
            return (xs.sum(axis=1) >= (1 - self.alpha) * xs.shape[1]).astype(np.int64)
        if self.kind == DICTATOR:
            return xs[:, self.index].astype(np.int64)
        if self.kind == PLURALITY:
            counts = np.stack([(xs == a).sum(axis=1) for a in range(self.q)], axis=1)
            top = counts.max(axis=1, keepdims=True)
            tied = (counts == top).sum(axis=1) > 1
            if tied.any():
                raise TieError(f"plurality tie in row {int(np.flatnonzero(tied)[0])}")
            return counts.argmax(axis=1)
        return np.array([self(row) for row in xs], dtype=np.int64)

    def describe(self) -> dict:
        d = {"kind": self.kind, "q": self.q}
        for key in ("alpha", "index", "n"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        return d


class RuleMap:
    """A one-step update rule on a fixed graph viewed as a map ``[q]^n -> [q]^n``."""

    def __init__(self, g: Graph, rule, q: int = 2):
        from . import dynamics

        self.g, self.rule, self.q = g, rule, q
        self._step = dynamics.step_batch

    def batch(self, xs):
        return self._step(self.g, self.rule, [np.asarray(xs, dtype=np.int8)], self.q)

    def __call__(self, x):
        return self.batch(np.asarray(x)[None, :])[0]


# ---------------------------------------------------------------- checkers


@dataclass
class CheckReport:
    checked: int
    mode: str
    violations: list = field(default_factory=list)
    violation_count: int = 0

    @property
    def ok(self) -> bool:
        return self.violation_count == 0

    def to_dict(self) -> dict:
        return {"checked": self.checked, "mode": self.mode, "violations": self.violations,
                "violation_count": self.violation_count}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


MAX_WITNESSES = 10


def _evaluate(f, xs: np.ndarray) -> np.ndarray:
    if hasattr(f, "batch"):
        return np.asarray(f.batch(xs))
    return np.array([f(row) for row in xs])


def all_inputs(q: int, n: int) -> np.ndarray:
    """Every vector of ``[q]^n`` in base-``q`` order (row ``i`` has index ``i``)."""
    return np.array(list(itertools.product(range(q), repeat=n)), dtype=np.int8).reshape(-1, n)


def _index(xs: np.ndarray, q: int) -> np.ndarray:
    place = q ** np.arange(xs.shape[1] - 1, -1, -1, dtype=np.int64)
    return xs.astype(np.int64) @ place


def _record(report: CheckReport, witness: dict):
    report.violation_count += 1
    if len(report.violations) < MAX_WITNESSES:
        report.violations.append(witness)


def _listify(v):
    return np.asarray(v).tolist()


def check_fair(f, q: int, n: int, budget: int = 10**6, seed: int = 0) -> CheckReport:
    """Check ``sigma(f(x)) == f(sigma(x))`` for every relabelling ``sigma`` of ``[q]``.

    Exhaustive over all inputs and permutations when ``q^n * q!`` fits the
    budget, otherwise on random inputs (still with every permutation).
    """
    perms = [np.array(p, dtype=np.int8) for p in itertools.permutations(range(q))]
    exhaustive = q**n * len(perms) <= budget
    if exhaustive:
        xs = all_inputs(q, n)
    else:
        rng = np.random.default_rng(seed)
        xs = rng.integers(0, q, size=(max(1, budget // len(perms)), n)).astype(np.int8)
    out = _evaluate(f, xs)
    report = CheckReport(0, "exhaustive" if exhaustive else "sampled")
    for sigma in perms:
        lhs = sigma[out]
        rhs = _evaluate(f, sigma[xs])
        report.checked += len(xs)
        bad = lhs != rhs
        if bad.ndim > 1:
            bad = bad.any(axis=tuple(range(1, bad.ndim)))
        for i in np.flatnonzero(bad):
            _record(report, {"x": _listify(xs[i]), "sigma": _listify(sigma),
                             "sigma_of_f": _listify(lhs[i]), "f_of_sigma": _listify(rhs[i])})
    return report


def _raise_to(x: np.ndarray, a: int, subset_mask: np.ndarray, positions: np.ndarray) -> np.ndarray:
    out = np.repeat(x[None, :], len(subset_mask), axis=0)
    for j, pos in enumerate(positions):
        out[subset_mask[:, j], pos] = a
    return out


def check_monotone(f, q: int, n: int, budget: int = 10**6, seed: int = 0) -> CheckReport:
    """Check that moving votes toward the winner ``a`` never changes the outcome.

    For vector-valued ``f`` (a one-step rule) every coordinate with output
    ``a`` must keep output ``a``.  Exhaustive (all inputs, all ``>=_a``
    successors) when ``q^n 2^n`` fits the budget; otherwise random inputs
    with random subsets pushed to ``a``.
    """
    exhaustive = q**n * 2**n <= budget
    report = CheckReport(0, "exhaustive" if exhaustive else "sampled")
    rng = np.random.default_rng(seed)
    if exhaustive:
        xs = all_inputs(q, n)
        table = _evaluate(f, xs)
        masks = ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(bool)
        for i, x in enumerate(xs):
            out = table[i]
            for a in np.unique(out):
                positions = np.flatnonzero(x != a)
                sub = masks[: 2 ** len(positions), : len(positions)]
                succ = _raise_to(x, a, sub, positions)
                after = table[_index(succ, q)]
                _check_kept(report, x, out, a, succ, after)
        return report
    xs = rng.integers(0, q, size=(max(1, budget // 4), n)).astype(np.int8)
    outs = _evaluate(f, xs)
    for x, out in zip(xs, outs):
        vals = np.unique(out)
        a = vals[rng.integers(len(vals))]
        positions = np.flatnonzero(x != a)
        sub = rng.random((3, len(positions))) < rng.random()
        succ = _raise_to(x, a, sub, positions)
        _check_kept(report, x, out, a, succ, _evaluate(f, succ))
    return report


def _check_kept(report, x, out, a, succ, after):
    held = np.asarray(out) == a
    for s, res in zip(succ, after):
        report.checked += 1
        if np.any(np.asarray(res)[held] != a):
            _record(report, {"x": _listify(x), "a": int(a), "x_prime": _listify(s),
                             "f_x": _listify(out), "f_x_prime": _listify(res)})


def check_transitive_shift(f, q: int, n: int, budget: int = 10**6, seed: int = 0) -> CheckReport:
    """Check ``f(tau(x)) == f(x)`` for every cyclic relabelling ``tau`` of the voters."""
    exhaustive = q**n * n <= budget
    if exhaustive:
        xs = all_inputs(q, n)
    else:
        xs = np.random.default_rng(seed).integers(0, q, size=(max(1, budget // n), n)).astype(np.int8)
    base = _evaluate(f, xs)
    report = CheckReport(0, "exhaustive" if exhaustive else "sampled")
    for shift in range(n):
        shifted = np.roll(xs, -shift, axis=1)  # row becomes (x_s, x_{s+1}, ...)
        res = _evaluate(f, shifted)
        report.checked += len(xs)
        for i in np.flatnonzero(res != base):
            _record(report, {"x": _listify(xs[i]), "shift": shift,
                             "f_x": int(base[i]), "f_shifted": int(res[i])})
    return report


def check_plurality_respecting(f, q: int, n: int) -> CheckReport:
    """Exhaustively check that ``f(x)`` always has the most votes."""
    xs = all_inputs(q, n)
    out = _evaluate(f, xs)
    counts = np.stack([(xs == a).sum(axis=1) for a in range(q)], axis=1)
    report = CheckReport(len(xs), "exhaustive")
    ok = counts[np.arange(len(xs)), out] == counts.max(axis=1)
    for i in np.flatnonzero(~ok):
        _record(report, {"x": _listify(xs[i]), "f_x": int(out[i])})
    return report


# ---------------------------------------------------------------- social types


@dataclass(frozen=True)
class SocialTypePartition:
    orbits: tuple

    @property
    def m(self) -> int:
        return min(len(o) for o in self.orbits)

    @classmethod
    def of(cls, classes):
        orbits = sorted(tuple(sorted(int(v) for v in c)) for c in classes if len(c))
        return cls(tuple(orbits))


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)

    def classes(self):
        groups = {}
        for v in range(len(self.parent)):
            groups.setdefault(self.find(v), []).append(v)
        return list(groups.values())


BRUTE_FORCE_LIMIT = 10


def graph_social_types(g: Graph) -> SocialTypePartition:
    """Orbits of the vertices under graph automorphisms.

    Graphs with at most 10 vertices are searched exhaustively; larger ones
    are only supported for families whose orbits are known in closed form.
    """
    if g.n <= BRUTE_FORCE_LIMIT:
        return _automorphism_orbits(g)
    orbits = _analytic_orbits(g)
    if orbits is None:
        raise Unsupported(f"n = {g.n} is too large for exhaustive search and the family is unknown")
    return SocialTypePartition.of(orbits)


def _analytic_orbits(g: Graph):
    if g.family is None or g.weighted:
        return None
    name = g.family[0]
    if name in ("cycle", "complete"):
        return [range(g.n)]
    if name == "path":
        return [{i, g.n - 1 - i} for i in range(g.n)]
    if name == "star":
        return [[0], range(1, g.n)]
    if name == "counterexample":
        r = g.roles
        classes = [r["A"], [v for c in r["B"] for v in c], [r["hub"]]]
        if r["isolated"] is not None:
            classes.append([r["isolated"]])
        return classes
    return None


def _automorphism_orbits(g: Graph) -> SocialTypePartition:
    n = g.n
    adj = g.adjacency.toarray()
    # vertex invariants: degree, loop weight, sorted incident weights
    colour = [(int(g.degrees[v]), float(adj[v, v]), tuple(sorted(adj[v]))) for v in range(n)]
    uf = _UnionFind(n)

    def search(u, v):
        """Some automorphism sending u to v, as a list ``perm[w] = image``, or None."""
        if colour[u] != colour[v]:
            return None
        order = [u] + [w for w in range(n) if w != u]
        image = [v]
        used = [False] * n
        used[v] = True

        def extend():
            if len(image) == n:
                return True
            x = order[len(image)]
            for y in range(n):
                if used[y] or colour[y] != colour[x]:
                    continue
                if all(adj[x, order[i]] == adj[y, image[i]] for i in range(len(image))):
                    image.append(y)
                    used[y] = True
                    if extend():
                        return True
                    image.pop()
                    used[y] = False
            return False

        if not extend():
            return None
        perm = [0] * n
        for w, y in zip(order, image):
            perm[w] = y
        return perm

    for u in range(n):
        for v in range(u + 1, n):
            if uf.find(u) == uf.find(v):
                continue
            perm = search(u, v)
            if perm is not None:
                for w in range(n):
                    uf.union(w, perm[w])
    return SocialTypePartition.of(uf.classes())


def function_social_types(f, q: int, n: int, claimed=None) -> SocialTypePartition:
    """Orbits of the voters under the symmetry group of an aggregation function.

    Computed by testing every voter permutation against every input, so
    only for ``n <= 6`` and ``q <= 3``; beyond that a ``claimed`` partition
    must be supplied and is returned as-is.
    """
    if n > 6 or q > 3:
        if claimed is None:
            raise Unsupported("symmetry group only computed for n <= 6, q <= 3")
        return SocialTypePartition.of(claimed)
    xs = all_inputs(q, n)
    table = _evaluate(f, xs)
    uf = _UnionFind(n)
    for tau in itertools.permutations(range(n)):
        tau = np.array(tau)
        if np.array_equal(table[_index(xs[:, tau], q)], table):
            for v in range(n):
                uf.union(v, int(tau[v]))
    return SocialTypePartition.of(uf.classes())
