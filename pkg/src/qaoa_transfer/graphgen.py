"""Random graph families and exact MaxCut by enumeration.

Six families are supported: unweighted and Gaussian-weighted versions of
3-regular (``u3r``/``w3r``), Barabasi-Albert (``uba``/``wba``) and
Erdos-Renyi (``uer``/``wer``) graphs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numba
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

FAMILIES = ("u3r", "uba", "uer", "w3r", "wba", "wer")

MAX_ENUM_NODES = 30
REGULAR_RETRIES = 10_000
CONNECT_RETRIES = 100

# salt mixed into the seed for the weight stream so topology and weights
# come from independent generators
_WEIGHT_SALT = 0x57E1


class GenerationError(RuntimeError):
    """Raised when a generator exhausts its retry budget."""


class GraphFormatError(ValueError):
    """Raised when graph text cannot be parsed."""


@dataclass(frozen=True)
class GraphFamily:
    tag: str
    p_edge: float = 0.5
    ba_m: int = 6
    mu: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        tag = self.tag.lower()
        if tag not in FAMILIES:
            raise ValueError(f"unknown graph family {self.tag!r}")
        object.__setattr__(self, "tag", tag)
        if not 0.0 < self.p_edge < 1.0:
            raise ValueError("p_edge must lie in (0, 1)")
        if self.ba_m < 1:
            raise ValueError("ba_m must be >= 1")
        if self.weighted:
            if self.mu is None:
                object.__setattr__(self, "mu", 1.0)
            if self.sigma is None:
                object.__setattr__(self, "sigma", 0.5)
            if self.sigma < 0:
                raise ValueError("sigma must be >= 0")
        elif self.mu is not None or self.sigma is not None:
            raise ValueError(f"unweighted family {tag} takes no weight distribution")

    @property
    def weighted(self) -> bool:
        return self.tag.startswith("w")

    @property
    def topology(self) -> str:
        return self.tag[1:]


def as_family(family: GraphFamily | str) -> GraphFamily:
    if isinstance(family, GraphFamily):
        return family
    return GraphFamily(family)


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph with edges stored as ``(u, v, w)``, ``u < v``."""

    n: int
    edges: tuple[tuple[int, int, float], ...]
    family: str = "custom"
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("a graph needs at least 2 vertices")
        edges = tuple((int(u), int(v), float(w)) for u, v, w in self.edges)
        seen = set()
        for u, v, w in edges:
            if not 0 <= u < v < self.n:
                raise ValueError(f"edge ({u}, {v}) is not canonical for n={self.n}")
            if (u, v) in seen:
                raise ValueError(f"duplicate edge ({u}, {v})")
            if not np.isfinite(w):
                raise ValueError(f"edge ({u}, {v}) has non-finite weight")
            seen.add((u, v))
        object.__setattr__(self, "edges", edges)

    @cached_property
    def edge_array(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self.edges:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty.copy(), np.zeros(0)
        u, v, w = zip(*self.edges)
        return np.array(u, dtype=np.int64), np.array(v, dtype=np.int64), np.array(w, dtype=np.float64)

    @property
    def total_weight(self) -> float:
        return float(sum(w for _, _, w in self.edges))

    def degrees(self) -> np.ndarray:
        u, v, _ = self.edge_array
        return np.bincount(np.concatenate([u, v]), minlength=self.n)

    def is_connected(self) -> bool:
        u, v, _ = self.edge_array
        adj = coo_matrix((np.ones(len(u)), (u, v)), shape=(self.n, self.n))
        ncomp, _ = connected_components(adj, directed=False)
        return ncomp == 1


# -- generators -------------------------------------------------------------

def _random_regular(n: int, rng: np.random.Generator, degree: int = 3) -> list[tuple[int, int]]:
    stubs = np.repeat(np.arange(n), degree)
    for _ in range(REGULAR_RETRIES):
        pairs = rng.permutation(stubs).reshape(-1, 2)
        lo = pairs.min(axis=1)
        hi = pairs.max(axis=1)
        if np.any(lo == hi):
            continue
        keys = lo * n + hi
        if len(np.unique(keys)) != len(keys):
            continue
        order = np.argsort(keys)
        return [(int(lo[i]), int(hi[i])) for i in order]
    raise GenerationError(f"no simple {degree}-regular graph on {n} vertices after {REGULAR_RETRIES} tries")


def _erdos_renyi(n: int, p_edge: float, rng: np.random.Generator) -> list[tuple[int, int]]:
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p_edge
    return [(int(a), int(b)) for a, b in zip(iu[keep], ju[keep])]


def _barabasi_albert(n: int, m: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    # m isolated seed vertices; vertex m joins all of them, later vertices
    # pick m distinct targets with probability proportional to degree
    degree = np.zeros(n)
    edges = []
    for new in range(m, n):
        if new == m:
            targets = np.arange(m)
        else:
            prob = degree[:new] / degree[:new].sum()
            targets = rng.choice(new, size=m, replace=False, p=prob)
        for t in targets:
            edges.append((int(t), new))
            degree[t] += 1
        degree[new] += m
    return sorted(edges)


def generate_graph(family: GraphFamily | str, n: int, seed: int) -> Graph:
    """Draw one graph of ``family`` on ``n`` vertices, deterministically from ``seed``."""
    fam = as_family(family)
    if n < 2:
        raise ValueError("n must be >= 2")
    topo = fam.topology
    if topo == "3r":
        if n % 2 or n < 4:
            raise ValueError(f"3-regular graphs need even n >= 4, got {n}")
        pairs = _random_regular(n, np.random.default_rng(seed))
    else:
        if topo == "ba" and n <= fam.ba_m:
            raise ValueError(f"BA graphs need n > m (n={n}, m={fam.ba_m})")
        for attempt in range(CONNECT_RETRIES):
            rng = np.random.default_rng([seed, attempt])
            if topo == "er":
                pairs = _erdos_renyi(n, fam.p_edge, rng)
            else:
                pairs = _barabasi_albert(n, fam.ba_m, rng)
            if Graph(n, tuple((u, v, 1.0) for u, v in pairs)).is_connected():
                break
        else:
            raise GenerationError(
                f"no connected {fam.tag} graph on {n} vertices after {CONNECT_RETRIES} retries"
            )
    g = Graph(n, tuple((u, v, 1.0) for u, v in pairs), family=fam.tag, seed=seed)
    if fam.weighted:
        g = assign_gaussian_weights(g, fam.mu, fam.sigma, seed=[seed, _WEIGHT_SALT])
    return g


def assign_gaussian_weights(g: Graph, mu: float, sigma: float, seed: int | Sequence[int]) -> Graph:
    """Return a copy of ``g`` with i.i.d. Normal(mu, sigma) edge weights.

    Negative draws are kept as they are.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if any(w != 1.0 for _, _, w in g.edges):
        raise ValueError("graph is already weighted")
    rng = np.random.default_rng(seed)
    w = rng.normal(mu, sigma, size=len(g.edges)) if sigma > 0 else np.full(len(g.edges), float(mu))
    edges = tuple((u, v, float(x)) for (u, v, _), x in zip(g.edges, w))
    return Graph(g.n, edges, family=g.family, seed=g.seed)


# -- cuts -------------------------------------------------------------------

def cut_value(g: Graph, assignment: Sequence[int]) -> float:
    x = np.asarray(assignment, dtype=np.int64)
    if x.shape != (g.n,):
        raise ValueError(f"assignment has length {x.size}, graph has {g.n} vertices")
    u, v, w = g.edge_array
    return float(np.sum(w[x[u] != x[v]]))


@dataclass(frozen=True)
class CutResult:
    c_max: float
    witness: tuple[int, ...] = field(default=())


@numba.njit(cache=True)
def _gray_maxcut(n, nbr_ptr, nbr_idx, nbr_w):
    side = np.zeros(n, dtype=np.int8)
    best = 0.0
    best_code = 0
    cur = 0.0
    code = 0
    # vertex 0 stays on side 0; Gray code runs over vertices 1..n-1
    for step in range(1, 1 << (n - 1)):
        bit = 0
        s = step
        while (s & 1) == 0:
            s >>= 1
            bit += 1
        v = bit + 1
        delta = 0.0
        for k in range(nbr_ptr[v], nbr_ptr[v + 1]):
            if side[nbr_idx[k]] == side[v]:
                delta += nbr_w[k]
            else:
                delta -= nbr_w[k]
        side[v] ^= 1
        code ^= 1 << bit
        cur += delta
        if cur > best:
            best = cur
            best_code = code
    return best, best_code


def exact_maxcut(g: Graph) -> CutResult:
    """Exhaustive MaxCut over all 2**(n-1) bipartitions (vertex 0 pinned)."""
    if g.n > MAX_ENUM_NODES:
        raise ValueError(f"exact MaxCut refused for n={g.n} > {MAX_ENUM_NODES}")
    u, v, w = g.edge_array
    src = np.concatenate([u, v])
    dst = np.concatenate([v, u])
    ww = np.concatenate([w, w])
    order = np.argsort(src, kind="stable")
    ptr = np.zeros(g.n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=g.n), out=ptr[1:])
    best, code = _gray_maxcut(g.n, ptr, dst[order].astype(np.int64), ww[order].astype(np.float64))
    witness = (0,) + tuple((int(code) >> b) & 1 for b in range(g.n - 1))
    return CutResult(float(best), witness)


# -- text format ------------------------------------------------------------

def serialize_graph(g: Graph) -> str:
    lines = [f"n {g.n} family {g.family} seed {g.seed}"]
    lines += [f"{u} {v} {w:.17g}" for u, v, w in g.edges]
    return "\n".join(lines) + "\n"


def deserialize_graph(text: str) -> Graph:
    lines = [(i, ln.strip()) for i, ln in enumerate(text.splitlines(), start=1) if ln.strip()]
    if not lines:
        raise GraphFormatError("empty graph text")
    lineno, header = lines[0]
    tok = header.split()
    if len(tok) != 6 or tok[0] != "n" or tok[2] != "family" or tok[4] != "seed":
        raise GraphFormatError(f"line {lineno}: bad header {header!r}")
    try:
        n, family, seed = int(tok[1]), tok[3], int(tok[5])
    except ValueError:
        raise GraphFormatError(f"line {lineno}: bad header {header!r}") from None
    edges = []
    seen = set()
    for lineno, ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 3:
            raise GraphFormatError(f"line {lineno}: expected 'u v w', got {ln!r}")
        try:
            u, v, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise GraphFormatError(f"line {lineno}: unparsable edge {ln!r}") from None
        if u == v:
            raise GraphFormatError(f"line {lineno}: self-loop on vertex {u}")
        if not (0 <= u < n and 0 <= v < n):
            raise GraphFormatError(f"line {lineno}: vertex out of range in {ln!r}")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise GraphFormatError(f"line {lineno}: duplicate edge {key}")
        seen.add(key)
        edges.append((key[0], key[1], w))
    try:
        return Graph(n, tuple(edges), family=family, seed=seed)
    except ValueError as exc:
        raise GraphFormatError(str(exc)) from None
