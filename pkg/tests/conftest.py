from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from gntk.data import Graph, LabeledDataset, featurize, parse_dataset

DATA_DIR = Path(__file__).resolve().parents[1] / "data"
MUTAG = DATA_DIR / "MUTAG.txt"

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def mutag():
    if not MUTAG.exists():
        pytest.skip("data/MUTAG.txt not present")
    return featurize(parse_dataset(MUTAG), "tags")


@st.composite
def graphs(draw, min_nodes=1, max_nodes=6, feature_dim=3, positive=False):
    """Random undirected graph with Gaussian (or positive) node features."""
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    feats = rng.standard_normal((n, feature_dim))
    if positive:
        feats = np.abs(feats) + 0.1
    return Graph.from_edges(n, [p for p, keep in zip(pairs, mask) if keep], feats)


def random_dataset(rng, n_graphs, max_nodes=5, feature_dim=3, positive=False):
    gs = []
    for _ in range(n_graphs):
        g = Graph.random(rng, int(rng.integers(1, max_nodes + 1)), feature_dim)
        if positive:
            g = g.with_features(np.abs(g.features) + 0.1)
        gs.append(g)
    labels = rng.integers(0, 2, size=n_graphs)
    return LabeledDataset(gs, labels, 2, name="random")


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, title: str, passed: bool, detail: str) -> str:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} -- {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
