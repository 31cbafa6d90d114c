"""Cross-immunoreactivity networks: graphs, immune matrices, topology catalog.

Nodes are 0-based everywhere.  A directed edge (i, j) means antibodies raised
against variant j cross-react with variant i: variant i stimulates the
response r_j (strength alpha) and is neutralized by it (strength beta).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import SplitMix64

CATALOG_NAMES = ("symmetric3", "branch_cycle3", "star", "two_node")
TAIL_NAMES = ("branch_cycle3", "symmetric3")


class NetworkError(ValueError):
    """Invalid graph construction or catalog request."""


@dataclass(frozen=True)
class CrnGraph:
    """Directed simple graph of antigenic variants.

    Edges are stored sorted lexicographically; the adjacency matrix is the
    0/1 matrix with a[i, j] = 1 iff (i, j) is an edge, zero diagonal.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    adjacency: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise NetworkError(f"node count must be >= 1, got {self.n}")
        seen = set()
        for i, j in self.edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise NetworkError(f"edge ({i}, {j}) out of range for n={self.n}")
            if i == j:
                raise NetworkError(f"self-loop ({i}, {i}) not allowed")
            if (i, j) in seen:
                raise NetworkError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
        ordered = tuple(sorted((int(i), int(j)) for i, j in self.edges))
        object.__setattr__(self, "edges", ordered)
        a = np.zeros((self.n, self.n))
        for i, j in ordered:
            a[i, j] = 1.0
        a.flags.writeable = False
        object.__setattr__(self, "adjacency", a)


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Replication rates and interaction constants of the evolution model.

    f: per-variant replication rates (all > 0)
    p: neutralization rate constant (> 0)
    c: stimulation rate constant (> 0)
    b: antibody decay rate (> 0)
    alpha: cross-reactive stimulation strength, in (0, 1)
    beta: cross-reactive neutralization strength, 0 < beta < alpha
    """

    f: np.ndarray
    p: float
    c: float
    b: float
    alpha: float
    beta: float

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (np.array_equal(self.f, other.f)
                and (self.p, self.c, self.b, self.alpha, self.beta)
                == (other.p, other.c, other.b, other.alpha, other.beta))

    def __post_init__(self) -> None:
        f = np.array(self.f, dtype=float)
        f.flags.writeable = False
        object.__setattr__(self, "f", f)
        if f.ndim != 1 or f.size < 1:
            raise ValueError("f must be a non-empty vector")
        if not np.all(np.isfinite(f)) or np.any(f <= 0.0):
            raise ValueError("replication rates f must be finite and > 0")
        for name in ("p", "c", "b"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0.0:
                raise ValueError(f"rate constant {name} must be finite and > 0, got {v}")
        if not 0.0 < self.beta < self.alpha < 1.0:
            raise ValueError(
                f"need 0 < beta < alpha < 1, got beta={self.beta}, alpha={self.alpha}"
            )

    @property
    def n(self) -> int:
        return self.f.size

    @classmethod
    def from_exponent(
        cls, f, p: float, c: float, b: float, alpha: float, k: int = 2
    ) -> "ModelParams":
        """Build params with beta = alpha**k (multi-antibody neutralization)."""
        if int(k) != k or k < 2:
            raise ValueError(f"exponent k must be an integer >= 2, got {k}")
        return cls(f=np.asarray(f, dtype=float), p=p, c=c, b=b, alpha=alpha, beta=alpha ** k)


@dataclass(frozen=True)
class ImmuneMatrices:
    """Neutralization matrix U = Id + beta*A^T and stimulation matrix V = Id + alpha*A."""

    U: np.ndarray
    V: np.ndarray

    @property
    def n(self) -> int:
        return self.U.shape[0]


def build_matrices(graph: CrnGraph, params: ModelParams) -> ImmuneMatrices:
    """Derive the immune matrices of a network from its adjacency structure."""
    if params.n != graph.n:
        raise ValueError(
            f"params carry {params.n} replication rates but graph has {graph.n} nodes"
        )
    eye = np.eye(graph.n)
    u = eye + params.beta * graph.adjacency.T
    v = eye + params.alpha * graph.adjacency
    u.flags.writeable = False
    v.flags.writeable = False
    return ImmuneMatrices(U=u, V=v)


def catalog(name: str, n: int | None = None) -> CrnGraph:
    """Named topologies: symmetric3, branch_cycle3, two_node, star (needs n >= 2)."""
    if name == "symmetric3":
        fixed = CrnGraph(3, ((0, 1), (2, 1)))
    elif name == "branch_cycle3":
        fixed = CrnGraph(3, ((0, 1), (1, 2), (2, 1)))
    elif name == "two_node":
        fixed = CrnGraph(2, ((0, 1),))
    elif name == "star":
        if n is None or n < 2:
            raise NetworkError(f"star topology needs a node count n >= 2, got {n}")
        return CrnGraph(n, tuple((0, j) for j in range(1, n)))
    else:
        raise NetworkError(f"unknown topology {name!r}; known: {CATALOG_NAMES}")
    if n is not None and n != fixed.n:
        raise NetworkError(f"topology {name!r} has fixed size {fixed.n}, got n={n}")
    return fixed


def random_dandelion(
    seed: int,
    ball_size: int = 98,
    edge_prob: float = 0.5,
    tail: str = "branch_cycle3",
) -> CrnGraph:
    """Random ball with a minimal 3-node network attached as a tail.

    Nodes 0 .. ball_size-1 form the ball; every ordered pair (i, j), i != j,
    receives an edge independently with probability edge_prob (pairs visited
    in row-major order, one uniform draw each).  Two extra nodes are
    appended and the tail topology is laid over nodes
    (ball_size-1, ball_size, ball_size+1), so the tail shares its first node
    with the ball.  Total node count is ball_size + 2.
    """
    if ball_size < 1:
        raise NetworkError(f"ball_size must be >= 1, got {ball_size}")
    if not 0.0 < edge_prob < 1.0:
        raise NetworkError(f"edge_prob must lie in (0, 1), got {edge_prob}")
    if tail not in TAIL_NAMES:
        raise NetworkError(f"tail must be one of {TAIL_NAMES}, got {tail!r}")

    rng = SplitMix64(seed)
    edges: set[tuple[int, int]] = set()
    for i in range(ball_size):
        for j in range(ball_size):
            if i == j:
                continue
            if rng.next_float() < edge_prob:
                edges.add((i, j))

    anchor = ball_size - 1
    for u, v in catalog(tail).edges:
        edges.add((anchor + u, anchor + v))
    return CrnGraph(ball_size + 2, tuple(sorted(edges)))
