"""Contextual stochastic block model graphs and hop-distance geometry.

Everything downstream (labels, attention bias, distance profiles) consumes
the two artifacts built here: a sampled ``Graph`` and its all-pairs
shortest-path ``DistanceMatrix``. Sampling is a pure function of the seed;
both structures are immutable after construction and safe to share across
worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO

import numpy as np

from .errors import EmptyGraphError, FormatError, ParameterError

#: Sentinel for node pairs with no connecting path. Kept as an explicit
#: marker (not a large number) so consumers must choose their own surrogate.
UNREACHABLE = -1

GRAPH_MAGIC = "distgap-graph 1"


@dataclass(frozen=True)
class CsbmParams:
    """Generative knobs for one contextual SBM instance.

    ``signal_strength`` scales the community component of the latent node
    signal z; ``feature_noise_sigma`` is the isotropic noise added on top of
    the rank-one feature signal.
    """

    n_nodes: int
    n_communities: int = 2
    p_in: float = 0.08
    p_out: float = 0.02
    signal_strength: float = 1.0
    feature_dim: int = 16
    feature_noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_nodes == 0:
            raise EmptyGraphError("n_nodes must be positive, got 0")
        if self.n_nodes < 0:
            raise ParameterError(f"n_nodes must be positive, got {self.n_nodes}")
        if self.n_communities < 1:
            raise ParameterError(
                f"n_communities must be positive, got {self.n_communities}"
            )
        if self.n_nodes < self.n_communities:
            raise ParameterError(
                f"need n_nodes >= n_communities, got {self.n_nodes} < {self.n_communities}"
            )
        if not (0.0 <= self.p_out <= self.p_in <= 1.0):
            raise ParameterError(
                f"need 0 <= p_out <= p_in <= 1, got p_in={self.p_in}, p_out={self.p_out}"
            )
        if self.signal_strength < 0:
            raise ParameterError("signal_strength must be >= 0")
        if self.feature_dim < 1:
            raise ParameterError("feature_dim must be positive")
        if self.feature_noise_sigma <= 0:
            raise ParameterError("feature_noise_sigma must be > 0")
        if self.seed < 0:
            raise ParameterError("seed must be a nonnegative integer")


@dataclass(frozen=True)
class Graph:
    """One sampled CSBM instance.

    adjacency is a symmetric boolean matrix with a zero diagonal; ``z`` is
    the per-node latent scalar signal that the classification task reads out.
    """

    n: int
    adjacency: np.ndarray  # (n, n) bool
    community: np.ndarray  # (n,) int64
    z: np.ndarray  # (n,) float64
    features: np.ndarray  # (n, feature_dim) float64
    n_communities: int
    seed: int

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)


@dataclass(frozen=True)
class DistanceMatrix:
    """All-pairs hop distances with an explicit UNREACHABLE sentinel.

    ``diameter`` is the largest finite entry (0 for an edgeless graph).
    """

    n: int
    d: np.ndarray  # (n, n) int64, UNREACHABLE for disconnected pairs
    diameter: int

    def finite_mask(self) -> np.ndarray:
        return self.d != UNREACHABLE


def community_signs(n_communities: int) -> np.ndarray:
    """Latent signal sign per community: +1 for community 0, -1 for the
    last community, evenly spaced in between for k > 2."""
    if n_communities == 1:
        return np.array([1.0])
    return np.linspace(1.0, -1.0, n_communities)


def sample_csbm(params: CsbmParams) -> Graph:
    """Sample one graph; bit-identical for identical params.

    Draw order (fixed contract, do not reorder): community shuffle,
    upper-triangular edge uniforms, latent noise, feature direction,
    feature noise.
    """
    n, k = params.n_nodes, params.n_communities
    rng = np.random.default_rng(params.seed)

    community = rng.permutation(np.arange(n, dtype=np.int64) % k)

    same = community[:, None] == community[None, :]
    prob = np.where(same, params.p_in, params.p_out)
    u = rng.random((n, n))
    upper = np.triu(u < prob, k=1)
    adjacency = upper | upper.T

    signs = community_signs(k)
    z = params.signal_strength * signs[community] + rng.standard_normal(n)

    v = rng.standard_normal(params.feature_dim)
    v = v / np.linalg.norm(v)
    noise = rng.normal(0.0, params.feature_noise_sigma, (n, params.feature_dim))
    features = z[:, None] * v[None, :] + noise

    return Graph(
        n=n,
        adjacency=adjacency,
        community=community,
        z=z,
        features=features,
        n_communities=k,
        seed=params.seed,
    )


def all_pairs_spd(g: Graph) -> DistanceMatrix:
    """Hop distances via simultaneous level-synchronous BFS from every node.

    Each iteration advances every frontier by one hop with a single
    matrix product; unreachable pairs keep the UNREACHABLE sentinel.
    """
    n = g.n
    adj = g.adjacency.astype(np.float64)
    d = np.full((n, n), UNREACHABLE, dtype=np.int64)
    np.fill_diagonal(d, 0)

    reached = np.eye(n, dtype=bool)
    frontier = np.eye(n, dtype=bool)
    r = 0
    while frontier.any():
        nxt = (frontier.astype(np.float64) @ adj > 0.0) & ~reached
        r += 1
        d[nxt] = r
        reached |= nxt
        frontier = nxt

    diameter = int(d.max()) if n > 0 else 0
    return DistanceMatrix(n=n, d=d, diameter=max(diameter, 0))


def shell(dm: DistanceMatrix, i: int, r: int) -> np.ndarray:
    """Nodes at exact hop distance r from node i (sorted indices).

    shell(dm, i, 0) == [i]; an empty array is a valid result.
    """
    if r < 0:
        raise ParameterError(f"shell radius must be >= 0, got {r}")
    return np.flatnonzero(dm.d[i] == r)


def mean_shell_sizes(dm: DistanceMatrix) -> np.ndarray:
    """Mean shell size across query nodes, for r = 0..diameter.

    Entry 0 is exactly 1 (every node is its own shell-0). Summing the
    vector and adding the mean unreachable count per node recovers n.
    """
    finite = dm.d[dm.d != UNREACHABLE]
    counts = np.bincount(finite, minlength=dm.diameter + 1)
    return counts.astype(np.float64) / dm.n


def mean_unreachable_count(dm: DistanceMatrix) -> float:
    """Mean number of unreachable partners per query node."""
    return float((dm.d == UNREACHABLE).sum()) / dm.n


# ---------------------------------------------------------------------------
# Line-oriented text serialization (lossless; floats via repr round-trip)
# ---------------------------------------------------------------------------

def write_graph(f: IO[str], g: Graph) -> None:
    """Write the documented text layout: magic, n/k/seed header, sorted
    edge list (i < j), then one node line ``community z f_0 .. f_{D-1}``."""
    f.write(GRAPH_MAGIC + "\n")
    f.write(f"n {g.n}\n")
    f.write(f"k {g.n_communities}\n")
    f.write(f"seed {g.seed}\n")
    ii, jj = np.nonzero(np.triu(g.adjacency, k=1))
    f.write(f"edges {len(ii)}\n")
    for i, j in zip(ii, jj):
        f.write(f"{i} {j}\n")
    f.write("nodes\n")
    for i in range(g.n):
        feats = " ".join(repr(float(x)) for x in g.features[i])
        f.write(f"{g.community[i]} {repr(float(g.z[i]))} {feats}\n")


def _parse(cast, text: str, what: str):
    try:
        return cast(text)
    except ValueError:
        raise FormatError(f"bad {what}: {text!r}") from None


def read_graph(f: IO[str]) -> Graph:
    """Inverse of write_graph; raises FormatError on any layout violation."""
    def next_line() -> str:
        line = f.readline()
        if not line:
            raise FormatError("unexpected end of graph file")
        return line.rstrip("\n")

    if next_line() != GRAPH_MAGIC:
        raise FormatError("not a distgap graph file")
    header = {}
    for key in ("n", "k", "seed"):
        name, _, value = next_line().partition(" ")
        if name != key:
            raise FormatError(f"expected header line '{key}', got '{name}'")
        header[key] = _parse(int, value, f"header field {key}")
    n = header["n"]

    name, _, value = next_line().partition(" ")
    if name != "edges":
        raise FormatError("missing edge count")
    n_edges = _parse(int, value, "edge count")
    adjacency = np.zeros((n, n), dtype=bool)
    for _ in range(n_edges):
        parts = next_line().split()
        if len(parts) != 2:
            raise FormatError(f"bad edge line: {parts}")
        i = _parse(int, parts[0], "edge endpoint")
        j = _parse(int, parts[1], "edge endpoint")
        adjacency[i, j] = adjacency[j, i] = True

    if next_line() != "nodes":
        raise FormatError("missing node section")
    community = np.empty(n, dtype=np.int64)
    z = np.empty(n, dtype=np.float64)
    features = None
    for i in range(n):
        parts = next_line().split()
        if len(parts) < 2:
            raise FormatError(f"bad node line at node {i}")
        community[i] = _parse(int, parts[0], "community id")
        z[i] = _parse(float, parts[1], "z value")
        row = np.array([_parse(float, x, "feature value") for x in parts[2:]],
                       dtype=np.float64)
        if features is None:
            features = np.empty((n, len(row)), dtype=np.float64)
        if len(row) != features.shape[1]:
            raise FormatError(f"inconsistent feature width at node {i}")
        features[i] = row

    return Graph(
        n=n,
        adjacency=adjacency,
        community=community,
        z=z,
        features=features if features is not None else np.zeros((n, 0)),
        n_communities=header["k"],
        seed=header["seed"],
    )


def save_graph(path, g: Graph) -> None:
    with open(path, "w") as f:
        write_graph(f, g)


def load_graph(path) -> Graph:
    with open(path) as f:
        return read_graph(f)
