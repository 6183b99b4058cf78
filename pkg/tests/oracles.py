"""Independent reference computations used by the test-suite.

Nothing here touches ``netrate.estimation`` or ``netrate.variance``; the
routines work directly on plain dictionaries, loop over events and pairs
literally, and use mpmath for extended precision where it matters.
"""

import itertools

import mpmath as mp
import numpy as np

mp.mp.dps = 40


def cov_at(path, t):
    """Left-limit covariate of a ``(starts, values)`` path at time ``t``."""
    starts, values = path
    k = 0
    for idx, s in enumerate(starts):
        if s < t:
            k = idx
    return [mp.mpf(float(v)) for v in values[k]]


def raw(ds):
    """``(pairs -> path, pairs -> times)`` as plain dictionaries."""
    return dict(ds.covariates.paths), {k: list(v) for k, v in ds.log.events.items()}


def loglik_mp(paths, events, beta):
    beta = [mp.mpf(float(b)) for b in beta]
    total = mp.mpf(0)
    for pair, times in events.items():
        for t in times:
            z = cov_at(paths[pair], t)
            denom = mp.mpf(0)
            for q in paths:
                zq = cov_at(paths[q], t)
                denom += mp.exp(mp.fsum(b * x for b, x in zip(beta, zq)))
            total += mp.fsum(b * x for b, x in zip(beta, z)) - mp.log(denom)
    return total


def zbar_mp(paths, beta, t):
    beta = [mp.mpf(float(b)) for b in beta]
    p = len(beta)
    s0 = mp.mpf(0)
    s1 = [mp.mpf(0)] * p
    s2 = [[mp.mpf(0)] * p for _ in range(p)]
    for q in paths:
        zq = cov_at(paths[q], t)
        w = mp.exp(mp.fsum(b * x for b, x in zip(beta, zq)))
        s0 += w
        for a in range(p):
            s1[a] += w * zq[a]
            for b in range(p):
                s2[a][b] += w * zq[a] * zq[b]
    zb = [x / s0 for x in s1]
    var = [[s2[a][b] / s0 - zb[a] * zb[b] for b in range(p)] for a in range(p)]
    return zb, var


def score_info_mp(paths, events, beta):
    """Score vector and sum of weighted covariances (negative Hessian)."""
    p = len(beta)
    U = [mp.mpf(0)] * p
    H = [[mp.mpf(0)] * p for _ in range(p)]
    for pair, times in events.items():
        for t in times:
            z = cov_at(paths[pair], t)
            zb, var = zbar_mp(paths, beta, t)
            for a in range(p):
                U[a] += z[a] - zb[a]
                for b in range(p):
                    H[a][b] += var[a][b]
    return U, H


def sigma1_mp(paths, events, beta):
    p = len(beta)
    S = [[mp.mpf(0)] * p for _ in range(p)]
    for pair, times in events.items():
        for t in times:
            z = cov_at(paths[pair], t)
            zb, _ = zbar_mp(paths, beta, t)
            d = [z[a] - zb[a] for a in range(p)]
            for a in range(p):
                for b in range(p):
                    S[a][b] += d[a] * d[b]
    return np.array([[float(x) for x in row] for row in S])


def solve_mp(paths, events, p, start=None, iters=60):
    """Plain Newton iteration in extended precision."""
    beta = mp.matrix([0] * p) if start is None else mp.matrix([mp.mpf(float(b)) for b in start])
    for _ in range(iters):
        U, H = score_info_mp(paths, events, [beta[k] for k in range(p)])
        step = mp.lu_solve(mp.matrix(H), mp.matrix(U))
        beta = beta + step
        if mp.norm(step) < mp.mpf(10) ** -30:
            break
    return [beta[k] for k in range(p)]


def score_at_mp(paths, events, beta):
    return score_info_mp(paths, events, beta)[0]


def jackknife_meat(paths, events, labels, deletions, scale):
    """``scale * mean over deletions of U_full(beta^(-S))^{(x)2}``.

    ``U_full`` is the full-sample score: all events, weighted mean over the
    full risk set. ``beta^(-S)`` solves the estimating equation on the pairs
    avoiding every node in ``S``.
    """
    p = len(next(iter(paths.values()))[1][0])
    acc = np.zeros((p, p))
    for S in deletions:
        keep = lambda pair: pair[0] not in S and pair[1] not in S
        sub_paths = {k: v for k, v in paths.items() if keep(k)}
        sub_events = {k: v for k, v in events.items() if keep(k)}
        b = solve_mp(sub_paths, sub_events, p)
        u = np.array([float(x) for x in score_at_mp(paths, events, b)])
        acc += np.outer(u, u)
    return scale * acc / len(deletions)


def jackknife1_meat(paths, events, labels):
    n = len(labels)
    return jackknife_meat(paths, events, labels, [(s,) for s in labels], (n - 1) / 2.0)


def jackknife2_meat(paths, events, labels, node_pairs):
    n = len(labels)
    return jackknife_meat(paths, events, labels, node_pairs, (n - 2) / 4.0)


def all_node_pairs(labels):
    return list(itertools.combinations(labels, 2))
