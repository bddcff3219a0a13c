"""Social-network graphs: construction, tie-proofing, spectra and file IO.

Vertices are ``0..n-1``.  Edges are stored once as ``(u, v)`` with
``u <= v``; a self-loop is the edge ``(v, v)`` and contributes the vertex's
own opinion once to its tally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConstructionFailure, InvalidArgument, NumericalFailure, ParseError
from .seeding import MASK64

DENSE_EIGEN_LIMIT = 5000
EIGEN_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected, optionally weighted graph with self-loops.

    ``edges`` is an ``(m, 2)`` integer array of unique pairs with ``u <= v``
    in lexicographic order; ``weights`` is ``None`` for unit weights.
    ``family`` and ``roles`` carry construction metadata (used for analytic
    social types); they are not part of graph equality.
    """

    n: int
    edges: np.ndarray
    weights: np.ndarray | None = None
    family: tuple | None = None
    roles: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.n < 0:
            raise InvalidArgument("vertex count must be nonnegative")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= self.n):
            raise InvalidArgument("edge endpoint out of range")
        edges = np.sort(edges, axis=1)
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        edges = edges[order]
        if len(edges) > 1 and np.any(np.all(edges[1:] == edges[:-1], axis=1)):
            raise InvalidArgument("duplicate edge")
        edges.flags.writeable = False
        object.__setattr__(self, "edges", edges)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)[order]
            if w.shape != (len(edges),):
                raise InvalidArgument("need exactly one weight per edge")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise InvalidArgument("edge weights must be finite and strictly positive")
            w.flags.writeable = False
            object.__setattr__(self, "weights", w)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        if self.n != other.n or not np.array_equal(self.edges, other.edges):
            return False
        if (self.weights is None) != (other.weights is None):
            return False
        return self.weights is None or np.array_equal(self.weights, other.weights)

    __hash__ = None

    @property
    def weighted(self) -> bool:
        return self.weights is not None

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def self_loops(self) -> np.ndarray:
        flags = np.zeros(self.n, dtype=bool)
        loops = self.edges[:, 0] == self.edges[:, 1]
        flags[self.edges[loops, 0]] = True
        flags.flags.writeable = False
        return flags

    @cached_property
    def degrees(self) -> np.ndarray:
        u, v = self.edges[:, 0], self.edges[:, 1]
        loop = u == v
        deg = np.bincount(u[~loop], minlength=self.n) + np.bincount(v[~loop], minlength=self.n)
        deg += np.bincount(u[loop], minlength=self.n)
        deg.flags.writeable = False
        return deg

    def degree(self, v: int) -> int:
        return int(self.degrees[v])

    def edge_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(len(self.edges))
        return self.weights

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Weighted adjacency ``M`` with the self-loop weight on the diagonal."""
        return self._matrix(self.edge_weights())

    @cached_property
    def unit_adjacency(self) -> sp.csr_matrix:
        return self._matrix(np.ones(len(self.edges)))

    def _matrix(self, w: np.ndarray) -> sp.csr_matrix:
        u, v = self.edges[:, 0], self.edges[:, 1]
        off = u != v
        rows = np.concatenate([u, v[off]])
        cols = np.concatenate([v, u[off]])
        vals = np.concatenate([w, w[off]])
        m = sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))
        m.sort_indices()
        return m

    def neighbors(self, v: int) -> np.ndarray:
        """``N_v`` in increasing order (contains ``v`` iff it has a self-loop)."""
        if not 0 <= v < self.n:
            raise InvalidArgument(f"vertex {v} out of range")
        a = self.unit_adjacency
        return a.indices[a.indptr[v]:a.indptr[v + 1]].copy()

    def is_regular(self) -> bool:
        return self.n > 0 and bool(np.all(self.degrees == self.degrees[0]))

    def with_self_loops(self, add: Iterable[int] = (), remove: Iterable[int] = ()) -> "Graph":
        """Copy with self-loops added/removed; new loops get unit weight."""
        add = sorted(set(int(v) for v in add))
        remove = set(int(v) for v in remove)
        keep = np.array(
            [not (u == v and u in remove) for u, v in self.edges], dtype=bool
        ) if remove else np.ones(len(self.edges), dtype=bool)
        edges = np.concatenate([self.edges[keep], np.array([[v, v] for v in add], dtype=np.int64).reshape(-1, 2)])
        weights = None
        if self.weights is not None:
            weights = np.concatenate([self.weights[keep], np.ones(len(add))])
        return Graph(self.n, edges, weights, self.family, self.roles)

    def tie_proofed(self) -> "Graph":
        """Toggle the self-loop of every even-degree vertex so all degrees are odd."""
        even = np.flatnonzero(self.degrees % 2 == 0)
        if even.size == 0:
            return self
        loops = self.self_loops
        return self.with_self_loops(
            add=[v for v in even if not loops[v]],
            remove=[v for v in even if loops[v]],
        )


def as_fraction(value) -> Fraction:
    """Exact rational from ``"2/3"``, ``"0.75"``, a Fraction, int or float.

    Floats are snapped to the nearest fraction with denominator at most 1e9,
    so ``2/3`` typed as a float still yields ``Fraction(2, 3)``.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise InvalidArgument(f"not a rational number: {value!r}") from exc
    if isinstance(value, int):
        return Fraction(value)
    return Fraction(float(value)).limit_denominator(10**9)


# ---------------------------------------------------------------- families


def from_edges(n: int, edges, weights=None) -> Graph:
    return Graph(n, np.asarray(list(edges), dtype=np.int64).reshape(-1, 2), weights)


def make_cycle(n: int, with_self_loops: bool = False) -> Graph:
    if n < 3:
        raise InvalidArgument("a cycle needs at least 3 vertices")
    idx = np.arange(n)
    edges = np.stack([idx, (idx + 1) % n], axis=1)
    if with_self_loops:
        edges = np.concatenate([edges, np.stack([idx, idx], axis=1)])
    return Graph(n, edges, family=("cycle", n, bool(with_self_loops)))


def make_path(n: int) -> Graph:
    if n < 1:
        raise InvalidArgument("a path needs at least one vertex")
    idx = np.arange(n - 1)
    return Graph(n, np.stack([idx, idx + 1], axis=1), family=("path", n))


def make_star(leaves: int) -> Graph:
    if leaves < 1:
        raise InvalidArgument("a star needs at least one leaf")
    idx = np.arange(1, leaves + 1)
    return Graph(leaves + 1, np.stack([np.zeros_like(idx), idx], axis=1), family=("star", leaves))


def make_complete(n: int, with_self_loops: bool = False) -> Graph:
    if n < 1:
        raise InvalidArgument("need at least one vertex")
    u, v = np.triu_indices(n, k=0 if with_self_loops else 1)
    return Graph(n, np.stack([u, v], axis=1), family=("complete", n, bool(with_self_loops)))


def make_counterexample(p, n_cliques: int) -> Graph:
    """Graph on which majority dynamics fails to aggregate.

    With ``k = 1/(1-p)``: an independent set ``A`` of ``k`` vertices joined
    to every vertex of ``B``, where ``B`` is ``n_cliques`` disjoint
    ``(k+1)``-cliques with self-loops; a hub joined to all of ``A``; and an
    isolated vertex when needed to make the vertex count odd.  Every vertex
    is then tie-proofed, which gives the hub a self-loop iff ``k`` is even,
    the isolated vertex a self-loop, and ``A`` self-loops iff
    ``n_cliques*(k+1)`` is odd.

    Vertex layout: ``A`` first, then the cliques one after another, then
    the hub, then the isolated vertex.  ``roles`` records all of this.
    """
    pf = as_fraction(p)
    if not Fraction(1, 2) < pf < 1:
        raise InvalidArgument("p must lie strictly between 1/2 and 1")
    k = 1 / (1 - pf)
    if k.denominator != 1:
        raise InvalidArgument(f"1/(1-p) = {float(k)} is not an integer")
    k = int(k)
    if n_cliques < 1:
        raise InvalidArgument("need at least one clique")

    a_set = list(range(k))
    cliques = []
    edges = []
    nxt = k
    for _ in range(n_cliques):
        members = list(range(nxt, nxt + k + 1))
        nxt += k + 1
        cliques.append(members)
        for i, u in enumerate(members):
            edges.append((u, u))
            for w in members[i + 1:]:
                edges.append((u, w))
            for a in a_set:
                edges.append((a, u))
    hub = nxt
    nxt += 1
    edges.extend((a, hub) for a in a_set)
    isolated = None
    if nxt % 2 == 0:
        isolated = nxt
        nxt += 1
    roles = {
        "A": tuple(a_set),
        "B": tuple(tuple(c) for c in cliques),
        "hub": hub,
        "isolated": isolated,
    }
    g = Graph(nxt, np.array(edges, dtype=np.int64), family=("counterexample", str(pf), n_cliques), roles=roles)
    return g.tie_proofed()


def make_random_regular(n: int, d: int, seed: int, max_restarts: int = 1000) -> Graph:
    """Random simple ``d``-regular graph from the pairing (configuration) model.

    Stubs are shuffled and paired; pairs forming loops or repeated edges are
    returned to the pool and re-paired.  If the leftover stubs cannot form
    any admissible pair the attempt is discarded and the pairing restarts.
    """
    if n < 1 or d < 1:
        raise InvalidArgument("n and d must be positive")
    if d >= n:
        raise InvalidArgument("need d < n")
    if (n * d) % 2:
        raise InvalidArgument("n*d must be even")
    rng = np.random.Generator(np.random.PCG64(int(seed) & MASK64))
    for _ in range(max_restarts + 1):
        codes = _try_pairing(n, d, rng)
        if codes is not None:
            edges = np.stack([codes // n, codes % n], axis=1)
            return Graph(n, edges, family=("random-regular", n, d, int(seed)))
    raise ConstructionFailure(f"pairing failed after {max_restarts} restarts")


def _try_pairing(n, d, rng):
    accepted = np.empty(0, dtype=np.int64)
    stubs = np.repeat(np.arange(n, dtype=np.int64), d)
    stalls = 0
    while stubs.size:
        rng.shuffle(stubs)
        pairs = np.sort(stubs.reshape(-1, 2), axis=1)
        codes = pairs[:, 0] * n + pairs[:, 1]
        ok = (pairs[:, 0] != pairs[:, 1]) & ~np.isin(codes, accepted)
        _, first = np.unique(codes, return_index=True)
        is_first = np.zeros(len(codes), dtype=bool)
        is_first[first] = True
        ok &= is_first
        if ok.any():
            accepted = np.union1d(accepted, codes[ok])
            stubs = pairs[~ok].ravel()
            stalls = 0
            continue
        stalls += 1
        if stalls > 50 or not _can_pair(stubs, accepted, n):
            return None
    return accepted


def _can_pair(stubs, accepted, n):
    verts = np.unique(stubs)
    existing = set(accepted.tolist())
    for i, u in enumerate(verts):
        for v in verts[i + 1:]:
            if u * n + v not in existing:
                return True
    return False


def perturb_weights(g: Graph, epsilon: float, seed: int) -> Graph:
    """Multiply each undirected edge weight by ``1 + u``, ``u ~ U(-eps, eps)``."""
    if not epsilon > 0:
        raise InvalidArgument("epsilon must be positive")
    if epsilon >= 1:
        raise InvalidArgument("epsilon must be below 1 to keep weights positive")
    rng = np.random.Generator(np.random.PCG64(int(seed) & MASK64))
    u = rng.uniform(-epsilon, epsilon, size=g.num_edges)
    # uniform() is half-open; keep the interval open at both ends
    u[u == -epsilon] = 0.0
    return Graph(g.n, g.edges, g.edge_weights() * (1.0 + u), g.family, g.roles)


# ---------------------------------------------------------------- spectra


def _indicator(g: Graph, vertices) -> np.ndarray:
    idx = np.asarray(list(vertices), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= g.n):
        raise InvalidArgument("vertex id out of range")
    ind = np.zeros(g.n)
    ind[idx] = 1.0
    return ind


def edge_mass(g: Graph, a, b) -> float:
    """The quadratic form ``1_A^T M 1_B`` (edge-ends from ``A`` to ``B``)."""
    ia, ib = _indicator(g, a), _indicator(g, b)
    return float(ia @ (g.adjacency @ ib))


@dataclass(frozen=True)
class SpectralCertificate:
    d: float
    lam: float
    tol: float
    method: str = "dense"

    @property
    def ratio(self) -> float:
        return self.lam / self.d if self.d else math.inf

    def is_expander(self, bound: float = 3 / 16) -> bool:
        return self.ratio <= bound

    def to_dict(self) -> dict:
        return {"d": self.d, "lambda": self.lam, "ratio": self.ratio, "tol": self.tol, "method": self.method}


def spectral_certificate(g: Graph) -> SpectralCertificate:
    """Largest and second-largest absolute adjacency eigenvalues.

    Dense symmetric decomposition up to 5000 vertices, ARPACK beyond.
    """
    if g.n < 2:
        raise InvalidArgument("need at least two vertices")
    if g.n <= DENSE_EIGEN_LIMIT:
        ev = np.linalg.eigvalsh(g.adjacency.toarray())
        mags = np.sort(np.abs(ev))[::-1]
        return SpectralCertificate(float(mags[0]), float(mags[1]), EIGEN_TOL, "dense")
    m = g.adjacency.astype(np.float64)
    try:
        vals, vecs = spla.eigsh(m, k=3, which="LM", tol=EIGEN_TOL * 1e-2, maxiter=10 * g.n)
    except spla.ArpackNoConvergence as exc:
        raise NumericalFailure("eigensolver did not converge", residual=None) from exc
    residual = float(np.max(np.linalg.norm(m @ vecs - vecs * vals, axis=0)))
    if residual > EIGEN_TOL * max(1.0, float(np.max(np.abs(vals)))):
        raise NumericalFailure(f"eigen residual {residual:.3g} above tolerance", residual=residual)
    mags = np.sort(np.abs(vals))[::-1]
    return SpectralCertificate(float(mags[0]), float(mags[1]), max(EIGEN_TOL, residual), "arpack")


@dataclass
class MixingReport:
    trials: int
    violations: int
    max_violation: float
    worst_pair: tuple | None

    def to_dict(self) -> dict:
        worst = None
        if self.worst_pair is not None:
            worst = [sorted(int(v) for v in s) for s in self.worst_pair]
        return {"trials": self.trials, "violations": self.violations,
                "max_violation": self.max_violation, "worst_pair": worst}


def mixing_check(g: Graph, cert: SpectralCertificate, trials: int, seed: int) -> MixingReport:
    """Sample vertex-set pairs and test the expander mixing inequality.

    ``max_violation`` is the largest value of
    ``|E(A,B) - |A||B|d/n| - lam*sqrt(|A||B|)`` seen (negative when the
    inequality holds with room to spare); a pair counts as a violation only
    when it exceeds ``cert.tol * sqrt(|A||B|)``.
    """
    rowsum = np.asarray(g.adjacency.sum(axis=1)).ravel()
    if not np.allclose(rowsum, rowsum[0], rtol=0, atol=1e-6 * max(1.0, rowsum[0])):
        raise InvalidArgument("mixing check needs a regular graph")
    rng = np.random.Generator(np.random.PCG64(int(seed) & MASK64))
    m = g.adjacency
    n = g.n
    worst, worst_pair, bad = -math.inf, None, 0
    for _ in range(trials):
        sets = []
        for _ in range(2):
            size = int(rng.integers(0, n + 1))
            sets.append(rng.choice(n, size=size, replace=False))
        a, b = sets
        ia = np.zeros(n)
        ia[a] = 1.0
        ib = np.zeros(n)
        ib[b] = 1.0
        mass = float(ia @ (m @ ib))
        root = math.sqrt(len(a) * len(b))
        excess = abs(mass - len(a) * len(b) * cert.d / n) - cert.lam * root
        if excess > cert.tol * root:
            bad += 1
        if excess > worst:
            worst, worst_pair = excess, (a, b)
    return MixingReport(trials, bad, worst, worst_pair)


# ---------------------------------------------------------------- file IO


def save_graph(g: Graph, path) -> None:
    lines = [f"n {g.n} weighted {int(g.weighted)}"]
    w = g.weights
    for i, (u, v) in enumerate(g.edges):
        lines.append(f"{u} {v} {float(w[i])!r}" if w is not None else f"{u} {v}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_graph(path) -> Graph:
    return parse_graph(Path(path).read_text(encoding="utf-8"))


def parse_graph(text: str) -> Graph:
    header = None
    edges, weights, seen = [], [], set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if header is None:
            if len(tok) != 4 or tok[0] != "n" or tok[2] != "weighted" or tok[3] not in ("0", "1"):
                raise ParseError("expected header 'n <n> weighted <0|1>'", lineno)
            try:
                n = int(tok[1])
            except ValueError:
                raise ParseError(f"bad vertex count {tok[1]!r}", lineno) from None
            if n < 0:
                raise ParseError("negative vertex count", lineno)
            header = (n, tok[3] == "1")
            continue
        n, weighted = header
        if len(tok) != (3 if weighted else 2):
            raise ParseError(f"expected {'u v w' if weighted else 'u v'}", lineno)
        try:
            u, v = int(tok[0]), int(tok[1])
        except ValueError:
            raise ParseError("vertex ids must be integers", lineno) from None
        if not (0 <= u < n and 0 <= v < n):
            raise ParseError(f"vertex out of range for n={n}", lineno)
        u, v = min(u, v), max(u, v)
        if (u, v) in seen:
            raise ParseError(f"edge ({u}, {v}) listed twice", lineno)
        seen.add((u, v))
        edges.append((u, v))
        if weighted:
            try:
                w = float(tok[2])
            except ValueError:
                raise ParseError(f"bad weight {tok[2]!r}", lineno) from None
            if not (w > 0 and math.isfinite(w)):
                raise ParseError("weights must be positive and finite", lineno)
            weights.append(w)
    if header is None:
        raise ParseError("missing header", 1)
    n, weighted = header
    return Graph(n, np.array(edges, dtype=np.int64).reshape(-1, 2), np.array(weights) if weighted else None)
