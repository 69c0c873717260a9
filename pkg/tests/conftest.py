import numpy as np
import pytest

from coadnet.graph import build_from_edges


def random_spd(rng, scale=1.0):
    a = rng.normal(size=(3, 3))
    return scale * (a @ a.T / 3.0 + np.eye(3))


def random_network(rng, n=10, extra_edges=8, diagonal=False):
    """Connected random graph: a random spanning tree plus extra edges."""
    perm = rng.permutation(n)
    edges = {(min(a, b), max(a, b)) for a, b in
             ((perm[k], perm[rng.integers(0, k)]) for k in range(1, n))}
    target = min(n - 1 + extra_edges, n * (n - 1) // 2)
    while len(edges) < target:
        i, j = rng.choice(n, 2, replace=False)
        edges.add((min(i, j), max(i, j)))
    edges = sorted(edges)
    if diagonal:
        node_inertia = {i: rng.uniform(0.5, 2.0, 3) for i in range(n)}
        edge_coupling = {e: rng.uniform(0.1, 1.0, 3) for e in edges}
    else:
        node_inertia = {i: random_spd(rng) for i in range(n)}
        edge_coupling = {e: random_spd(rng, 0.3) for e in edges}
    return build_from_edges(n, edges, node_inertia=node_inertia, edge_coupling=edge_coupling)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = {}


def record_acceptance(number, title, passed, detail):
    """Store one acceptance outcome for the end-of-run summary."""
    prev = ACCEPTANCE.get(number)
    if prev is not None:
        passed = passed and prev[1]
        detail = prev[2] + "; " + detail
    ACCEPTANCE[number] = (title, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}: {detail}")
