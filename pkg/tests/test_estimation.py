import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netrate.data import CovariateSet, Dataset, EventLog, NodeSet
from netrate.errors import CovariateOverflowError, InputError, SeparationError
from netrate.estimation import (aggregates, breslow_baseline, fit, log_pseudo_partial_likelihood,
                                neg_hessian, residual_process, score)

import oracles
from conftest import random_dataset, static_dataset, two_pair_dataset


def fd_grad(f, x, h=1e-6):
    x = np.asarray(x, float)
    g = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g.append((f(x + e) - f(x - e)) / (2 * h))
    return np.array(g).T


def rel_err(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(b), 1.0)


# ---- aggregates -----------------------------------------------------------

def test_aggregates_equal_weights():
    agg = aggregates(two_pair_dataset(), [0.0], 0.5)
    assert agg.s0 == 2.0 and agg.s1[0] == 1.0 and agg.zbar[0] == 0.5


def test_aggregates_log3():
    agg = aggregates(two_pair_dataset(), [math.log(3)], 0.5)
    assert agg.zbar[0] == pytest.approx((0 * 1 + 1 * 3) / (1 + 3), rel=1e-14)


def test_aggregates_softmax_limit():
    assert aggregates(two_pair_dataset(), [40.0], 0.5).zbar[0] == pytest.approx(1.0, abs=1e-15)


def test_aggregates_psd_and_overflow(rng):
    ds = random_dataset(rng, n=5, p=3)
    agg = aggregates(ds, rng.normal(size=3), 0.5)
    cov = agg.s2 - np.outer(agg.s1, agg.s1) / agg.s0
    assert np.linalg.eigvalsh(cov).min() >= -1e-10 * np.trace(agg.s2)
    with pytest.raises(CovariateOverflowError, match="rescale"):
        aggregates(two_pair_dataset(), [800.0], 0.5)


def test_aggregates_time_outside_window():
    with pytest.raises(InputError):
        aggregates(two_pair_dataset(), [0.0], 2.0)


# ---- log pseudo partial likelihood ---------------------------------------

def test_loglik_identical_covariates_is_constant():
    cov = {p: [0.3, -1.0] for p in NodeSet(("a", "b", "c")).ordered_pairs()}
    ds = static_dataset(["a", "b", "c"], 1.0, {("a", "b"): [0.1, 0.5], ("c", "b"): [0.7]}, cov)
    for beta in ([0.0, 0.0], [2.0, -1.0]):
        assert log_pseudo_partial_likelihood(ds, beta) == pytest.approx(-3 * math.log(6), rel=1e-13)


def test_loglik_two_pair():
    ds = two_pair_dataset(n_a=1, n_b=0)
    assert log_pseudo_partial_likelihood(ds, [0.0]) == pytest.approx(math.log(0.5), rel=1e-15)


def test_loglik_requires_events():
    ds = static_dataset(["a", "b"], 1.0, {}, {("a", "b"): [1.0], ("b", "a"): [0.0]})
    with pytest.raises(InputError):
        log_pseudo_partial_likelihood(ds, [0.0])


@pytest.mark.parametrize("seed", range(8))
def test_loglik_matches_extended_precision_sum(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, piecewise=seed % 2 == 0)
    beta = rng.normal(size=ds.dim)
    paths, events = oracles.raw(ds)
    expect = float(oracles.loglik_mp(paths, events, beta))
    assert log_pseudo_partial_likelihood(ds, beta) == pytest.approx(expect, rel=1e-12, abs=1e-12)


# ---- score and curvature --------------------------------------------------

def test_score_identical_covariates_is_zero():
    cov = {p: [1.5] for p in NodeSet(("a", "b", "c")).ordered_pairs()}
    ds = static_dataset(["a", "b", "c"], 1.0, {("a", "b"): [0.1, 0.5]}, cov)
    for b in (-3.0, 0.0, 4.0):
        assert score(ds, [b])[0] == 0.0


def test_score_two_pair():
    assert score(two_pair_dataset(1, 0), [0.0])[0] == pytest.approx(0.5)


def test_neg_hessian_two_pair_and_degenerate():
    assert neg_hessian(two_pair_dataset(1, 0), [0.0])[0, 0] == pytest.approx(0.25)
    cov = {p: [1.0, 2.0] for p in NodeSet(("a", "b", "c")).ordered_pairs()}
    ds = static_dataset(["a", "b", "c"], 1.0, {("a", "b"): [0.1]}, cov)
    np.testing.assert_array_equal(neg_hessian(ds, [0.3, 0.1]), np.zeros((2, 2)))


@pytest.mark.parametrize("seed", range(6))
def test_score_and_hessian_match_extended_precision(seed):
    rng = np.random.default_rng(100 + seed)
    ds = random_dataset(rng, piecewise=True)
    beta = rng.normal(size=ds.dim)
    paths, events = oracles.raw(ds)
    U, H = oracles.score_info_mp(paths, events, beta)
    np.testing.assert_allclose(score(ds, beta), [float(u) for u in U], rtol=1e-11, atol=1e-11)
    np.testing.assert_allclose(neg_hessian(ds, beta), [[float(x) for x in r] for r in H],
                               rtol=1e-11, atol=1e-11)


@pytest.mark.parametrize("seed", range(10))
def test_gradient_consistency(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, piecewise=seed % 3 == 0)
    beta = rng.normal(size=ds.dim)
    g = fd_grad(lambda b: log_pseudo_partial_likelihood(ds, b), beta)
    assert rel_err(score(ds, beta), g) <= 1e-5
    J = fd_grad(lambda b: score(ds, b), beta)
    assert rel_err(neg_hessian(ds, beta), -J) <= 1e-5


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_concavity(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, piecewise=True)
    H = neg_hessian(ds, rng.normal(0, 2, size=ds.dim))
    assert np.linalg.eigvalsh(H).min() >= -1e-10 * max(np.trace(H), 1e-300)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_zbar_in_convex_hull(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, piecewise=True)
    t = float(rng.uniform(0, ds.horizon))
    agg = aggregates(ds, rng.normal(0, 3, size=ds.dim), t)
    Z = np.array([ds.covariates.value(p, t, left=True) for p in ds.pairs])
    tol = 1e-12 * (1 + np.abs(Z).max())
    assert np.all(agg.zbar >= Z.min(axis=0) - tol) and np.all(agg.zbar <= Z.max(axis=0) + tol)


# ---- fitting --------------------------------------------------------------

def test_fit_closed_form_log3():
    res = fit(two_pair_dataset(3, 1))
    assert res.converged
    assert res.beta_hat[0] == pytest.approx(math.log(3), abs=1e-10)
    assert res.score_norm <= 1e-8
    assert res.log_pl == pytest.approx(log_pseudo_partial_likelihood(two_pair_dataset(3, 1),
                                                                     res.beta_hat))


def test_fit_identical_covariates_converges_at_init():
    cov = {p: [1.0] for p in NodeSet(("a", "b", "c")).ordered_pairs()}
    ds = static_dataset(["a", "b", "c"], 1.0, {("a", "b"): [0.1, 0.5]}, cov)
    res = fit(ds, init=[0.7])
    assert res.converged and res.iterations == 0 and res.score_norm == 0.0
    assert res.beta_hat[0] == 0.7


def test_fit_separation():
    with pytest.raises(SeparationError):
        fit(two_pair_dataset(3, 0))


def test_fit_max_iter_exceeded():
    res = fit(two_pair_dataset(3, 1), max_iter=1, tol=1e-14)
    assert not res.converged and res.iterations == 1


def test_fit_monotone_trace_and_determinism(rng):
    ds = random_dataset(rng, n=6, p=3, max_events=20)
    try:
        a = fit(ds)
    except SeparationError:
        pytest.skip("drawn dataset is separated")
    lls = [ll for _, ll, _ in a.trace]
    assert all(y >= x - 1e-12 * abs(x) for x, y in zip(lls, lls[1:]))
    b = fit(ds)
    assert a.beta_hat.tobytes() == b.beta_hat.tobytes()


def test_fit_rejects_bad_tol():
    with pytest.raises(InputError):
        fit(two_pair_dataset(), tol=0.0)


def _interior_dataset(seed, distinct=(0.0, 1.0, 2.5)):
    rng = np.random.default_rng(seed)
    while True:
        ds = random_dataset(rng, p=1, max_events=20, distinct_values=np.array(distinct))
        # a single covariate value leaves the likelihood flat (beta not identified)
        if len({ds.covariates.paths[p][1][0, 0] for p in ds.pairs}) < 2:
            continue
        try:
            res = fit(ds)
        except SeparationError:
            continue
        if res.converged and abs(res.beta_hat[0]) < 9:
            return ds, res


def grid_argmax(ds, lo=-10.0, hi=10.0, step=1e-4):
    """Independent vectorised evaluation of the log-likelihood on a grid."""
    from scipy.special import logsumexp

    grid = np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)
    z_all = np.array([ds.covariates.paths[p][1][0, 0] for p in ds.pairs])
    z_ev = np.array([ds.covariates.paths[p][1][0, 0] for p, t in ds.log.events.items() for _ in t])
    ll = grid * z_ev.sum() - z_ev.size * logsumexp(np.outer(grid, z_all), axis=1)
    return grid[int(np.argmax(ll))]


@pytest.mark.parametrize("seed", range(4))
def test_fit_matches_grid_argmax(seed):
    ds, res = _interior_dataset(seed)
    assert abs(res.beta_hat[0] - grid_argmax(ds)) <= 1e-3


# ---- invariances ----------------------------------------------------------

def _shift(ds, c):
    paths = {k: (s, v + c) for k, (s, v) in ds.covariates.paths.items()}
    return Dataset(ds.nodes, ds.log, CovariateSet(ds.dim, paths))


def _retime(ds, f, horizon):
    return Dataset(ds.nodes, EventLog(horizon, {k: f(v) for k, v in ds.log.events.items()}),
                   ds.covariates)


def _fitted(seed, n=5, p=2):
    rng = np.random.default_rng(seed)
    while True:
        ds = random_dataset(rng, n=n, p=p, max_events=20)
        try:
            res = fit(ds, tol=1e-12)
        except SeparationError:
            continue
        if res.converged and ds.n_events >= 8:
            return ds, res


def test_location_invariance():
    ds, res = _fitted(1)
    c = np.array([3.0, -7.5])
    shifted = _shift(ds, c)
    beta = np.array([0.3, -0.2])
    np.testing.assert_allclose(score(shifted, beta), score(ds, beta), atol=1e-10)
    np.testing.assert_allclose(fit(shifted, tol=1e-12).beta_hat, res.beta_hat, atol=1e-10)
    za = aggregates(ds, beta, 0.5).zbar
    zb = aggregates(shifted, beta, 0.5).zbar
    np.testing.assert_allclose(zb - za, c, atol=1e-10)


def test_time_relabel_invariance():
    ds, res = _fitted(2)
    moved = _retime(ds, lambda t: np.exp(3 * t) + t ** 3, math.exp(3) + 1)
    np.testing.assert_allclose(fit(moved, tol=1e-12).beta_hat, res.beta_hat, atol=1e-10)


def test_node_permutation_invariance():
    ds, res = _fitted(3)
    labels = list(ds.nodes.labels)
    perm = dict(zip(labels, labels[::-1]))
    rl = ds.relabel(perm)
    res2 = fit(rl, tol=1e-12)
    np.testing.assert_allclose(res2.beta_hat, res.beta_hat, atol=1e-10)
    a, b = breslow_baseline(ds, res.beta_hat), breslow_baseline(rl, res2.beta_hat)
    np.testing.assert_array_equal(a.jump_times, b.jump_times)
    np.testing.assert_allclose(a.cumulative, b.cumulative, rtol=1e-10)


# ---- baseline and residuals ----------------------------------------------

def test_breslow_null_beta():
    ds = random_dataset(np.random.default_rng(5), n=4, p=2)
    base = breslow_baseline(ds, [0.0, 0.0])
    assert base.cumulative[-1] == pytest.approx(ds.n_events / len(ds.pairs), rel=1e-14)
    assert np.all(np.diff(base.cumulative) > 0) and np.all(np.diff(base.jump_times) > 0)
    assert set(base.jump_times) <= set(np.concatenate(list(ds.log.events.values())))


def test_breslow_no_events():
    ds = static_dataset(["a", "b"], 1.0, {}, {("a", "b"): [1.0], ("b", "a"): [0.0]})
    base = breslow_baseline(ds, [0.0])
    assert base(0.5) == 0.0 and base.jump_times.size == 0


def test_breslow_unit_rate_simulation():
    rng = np.random.default_rng(77)
    n = 30
    labels = [str(k) for k in range(n)]
    pairs = NodeSet(tuple(labels)).ordered_pairs()
    events = {}
    for pair in pairs:
        k = rng.poisson(1.0)
        if k:
            events[pair] = np.sort(rng.uniform(0, 1, k))
    cov = {pair: [rng.normal()] for pair in pairs}
    ds = static_dataset(labels, 1.0, events, cov)
    base = breslow_baseline(ds, [0.0])
    assert abs(base(1.0) - 1.0) <= 3 / math.sqrt(len(pairs))


def test_breslow_tied_times_across_pairs():
    cov = {("a", "b"): [1.0], ("b", "a"): [0.0]}
    ds = static_dataset(["a", "b"], 1.0, {("a", "b"): [0.5], ("b", "a"): [0.5]}, cov)
    base = breslow_baseline(ds, [math.log(3)])
    np.testing.assert_allclose(base.cumulative, [2 / 4])


def test_residual_zero_event_pair():
    ds = static_dataset(["a", "b", "c"], 1.0, {("a", "b"): [0.2, 0.6]},
                        {p: [0.0] for p in NodeSet(("a", "b", "c")).ordered_pairs()})
    base = breslow_baseline(ds, [0.0])
    M = residual_process(ds, [0.0], base, ("c", "a"))
    t = np.array([0.1, 0.2, 0.5, 0.6, 1.0])
    np.testing.assert_allclose(M(t), -base(t))


def test_residuals_sum_to_zero():
    ds, res = _fitted(4)
    base = breslow_baseline(ds, res.beta_hat)
    total = sum(residual_process(ds, res.beta_hat, base, p)(ds.horizon) for p in ds.pairs)
    assert abs(total) <= 1e-8 * ds.n_events


def test_residual_single_event_direct():
    cov = {("a", "b"): [1.0], ("b", "a"): [0.0], ("a", "c"): [2.0], ("c", "a"): [0.5],
           ("b", "c"): [-1.0], ("c", "b"): [0.0]}
    ds = static_dataset(["a", "b", "c"], 1.0, {("a", "b"): [0.4], ("c", "b"): [0.7]}, cov)
    beta = [0.8]
    base = breslow_baseline(ds, beta)
    M = residual_process(ds, beta, base, ("a", "b"))
    s0 = sum(math.exp(0.8 * v[0]) for v in cov.values())
    dl = 1 / s0
    w = math.exp(0.8)
    assert M(0.39) == 0.0
    assert M(0.4) == pytest.approx(1 - w * dl, rel=1e-14)
    assert M(0.69) == pytest.approx(1 - w * dl, rel=1e-14)
    assert M(1.0) == pytest.approx(1 - 2 * w * dl, rel=1e-14)


def test_residual_unknown_pair():
    ds = two_pair_dataset()
    with pytest.raises(InputError):
        residual_process(ds, [0.0], breslow_baseline(ds, [0.0]), ("a", "z"))


def test_piecewise_covariates_use_left_limit():
    # covariate of (a,b) switches from 0 to 1 exactly at the event time 0.5
    cov = CovariateSet(1, {("a", "b"): ([0.0, 0.5], [[0.0], [1.0]]), ("b", "a"): ([0.0], [[0.0]])})
    ds = Dataset(NodeSet(("a", "b")), EventLog(1.0, {("a", "b"): [0.5]}), cov)
    # left limit: both pairs have z = 0 at the event -> score zero
    assert score(ds, [0.3])[0] == 0.0
