import numpy as np
import pytest

from netrate.data import CovariateSet, Dataset, EventLog, NodeSet

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def static_dataset(labels, horizon, events, covariates, names=()):
    nodes = NodeSet(tuple(labels))
    log = EventLog(horizon, {k: np.asarray(v, float) for k, v in events.items()})
    return Dataset(nodes, log, CovariateSet.static(covariates, names))


def two_pair_dataset(n_a=3, n_b=1):
    """Pairs A=(a,b) with z=1 and B=(b,a) with z=0."""
    events = {}
    if n_a:
        events[("a", "b")] = np.linspace(0.1, 0.9, n_a)
    if n_b:
        events[("b", "a")] = np.linspace(0.15, 0.85, n_b)
    return static_dataset(["a", "b"], 1.0, events, {("a", "b"): [1.0], ("b", "a"): [0.0]})


def random_dataset(rng, n=None, p=None, max_events=20, piecewise=False, distinct_values=None,
                   horizon=1.0):
    """Small random dataset; optionally with piecewise-constant covariates."""
    n = n or int(rng.integers(2, 7))
    p = p or int(rng.integers(1, 4))
    labels = [f"v{k}" for k in range(n)]
    pairs = [(i, j) for i in labels for j in labels if i != j]
    paths = {}
    for pair in pairs:
        if piecewise and rng.random() < 0.5:
            m = int(rng.integers(2, 4))
            starts = np.concatenate([[0.0], np.sort(rng.uniform(0.05, 0.95, m - 1))])
        else:
            starts = np.zeros(1)
        if distinct_values is not None:
            vals = rng.choice(distinct_values, size=(len(starts), p))
        else:
            vals = rng.normal(0, 1, size=(len(starts), p))
        paths[pair] = (starts, vals)
    n_events = int(rng.integers(1, max_events + 1))
    chosen = rng.integers(0, len(pairs), size=n_events)
    events = {}
    for q in chosen:
        events.setdefault(pairs[q], []).append(float(rng.uniform(0.01, horizon)))
    events = {k: np.unique(v) for k, v in events.items()}
    return Dataset(NodeSet(tuple(labels)), EventLog(horizon, events), CovariateSet(p, paths))


def jackknife_toy(n, seed):
    """Every pair has events and a distinct scalar covariate, so every refit is well posed."""
    rng = np.random.default_rng(seed)
    labels = [f"n{k}" for k in range(n)]
    pairs = [(i, j) for i in labels for j in labels if i != j]
    z = rng.normal(0, 1, size=len(pairs))
    cov = {pair: [z[q]] for q, pair in enumerate(pairs)}
    events = {pair: np.sort(rng.uniform(0.01, 1.0, size=int(rng.integers(1, 4)))) for pair in pairs}
    return static_dataset(labels, 1.0, events, cov)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
