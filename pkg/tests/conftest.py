import numpy as np
import pytest

from distgap.graphgen import CsbmParams, Graph, all_pairs_spd, sample_csbm


def graph_from_edges(n, edges, z=None, features=None, community=None,
                     n_communities=2, seed=0):
    """Hand-built Graph for fixtures; defaults keep every field well formed."""
    adjacency = np.zeros((n, n), dtype=bool)
    for i, j in edges:
        adjacency[i, j] = adjacency[j, i] = True
    if z is None:
        z = np.zeros(n)
    z = np.asarray(z, dtype=np.float64)
    if features is None:
        features = np.stack([z, np.arange(n, dtype=np.float64)], axis=1)
    features = np.asarray(features, dtype=np.float64)
    if community is None:
        community = np.zeros(n, dtype=np.int64)
    community = np.asarray(community, dtype=np.int64)
    return Graph(n=n, adjacency=adjacency, community=community, z=z,
                 features=features, n_communities=n_communities, seed=seed)


def path_graph(n, **kwargs):
    return graph_from_edges(n, [(i, i + 1) for i in range(n - 1)], **kwargs)


def random_graph(n, seed, p=0.25):
    """Plain G(n, p) wrapped in a Graph, for geometry cross-checks."""
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < p, k=1)
    edges = list(zip(*np.nonzero(upper)))
    return graph_from_edges(n, edges, z=rng.standard_normal(n), seed=seed)


@pytest.fixture(scope="session")
def csbm_small():
    """One dense-ish sampled instance shared by read-only tests."""
    g = sample_csbm(CsbmParams(n_nodes=60, p_in=0.3, p_out=0.1, seed=7))
    return g, all_pairs_spd(g)


# One line per acceptance check, echoed after the run so the whole gate can
# be read off the terminal without scrolling through pytest output.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance():
    def check(tag: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {tag}: {detail}"
        ACCEPTANCE_LINES.append(line)
        assert ok, line
    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance checks")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
