"""Pseudo partial likelihood for proportional-rate models on pair event data.

Every ordered pair is observed on the whole window, so the risk set never
changes and the weighted covariate mean ``Zbar(beta, t)`` only changes at
covariate breakpoints. All quantities are therefore sums over covariate
segments, with each segment's events contributing through its event count
and the summed covariates of the pairs that fired (the Breslow convention
for ties falls out automatically).

Exponentials are evaluated relative to the pair with the largest linear
predictor in each segment, and covariates are centred at that pair. This
keeps the score and curvature accurate even when the fitted probabilities
are extremely skewed, which matters for separation detection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Design
from .errors import CovariateOverflowError, InputError, SeparationError

#: largest linear predictor accepted when raw (unshifted) sums are requested
MAX_LINEAR_PREDICTOR = 700.0


@dataclass(frozen=True)
class RiskSetAggregates:
    """``S0, S1, S2`` at a given ``(beta, t)``."""

    s0: float
    s1: np.ndarray
    s2: np.ndarray

    @property
    def zbar(self) -> np.ndarray:
        return self.s1 / self.s0


@dataclass(frozen=True)
class FitResult:
    beta_hat: np.ndarray
    score_norm: float
    iterations: int
    converged: bool
    log_pl: float
    trace: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {"beta_hat": [float(b) for b in self.beta_hat], "score_norm": float(self.score_norm),
                "iterations": int(self.iterations), "converged": bool(self.converged),
                "log_pl": float(self.log_pl)}


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function, 0 before ``times[0]``."""

    times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.times, t, side="right")
        vals = np.concatenate([[0.0], self.values])
        return vals[k]


@dataclass(frozen=True)
class BaselineCurve(StepFunction):
    """Breslow estimate of the cumulative baseline rate."""

    @property
    def jump_times(self) -> np.ndarray:
        return self.times

    @property
    def cumulative(self) -> np.ndarray:
        return self.values


def _as_beta(beta, p: int) -> np.ndarray:
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if beta.shape != (p,):
        raise InputError(f"beta must have length {p}, got shape {beta.shape}")
    return beta


def _segment_moments(Zg: np.ndarray, beta: np.ndarray):
    """Log normaliser and centred first/second weighted moments for one segment.

    Returns ``(ref, log_s0, m1, m2)`` where ``ref`` is the centring vector,
    ``log_s0 = log sum exp(beta'Z)``, ``m1 = Zbar - ref`` and
    ``m2 = sum w (Z-ref)(Z-ref)' / S0``.
    """
    eta = Zg @ beta
    top = int(np.argmax(eta))
    ref = Zg[top]
    w = np.exp(eta - eta[top])
    s0 = w.sum()
    D = Zg - ref
    wD = w[:, None] * D
    m1 = wD.sum(axis=0) / s0
    m2 = D.T @ wD / s0
    return ref, eta[top] + np.log(s0), m1, m2


def evaluate(Z: np.ndarray, counts: np.ndarray, beta: np.ndarray, order: int = 2):
    """``(loglik, score, neg_hessian)`` from design arrays.

    ``Z`` has shape ``(m, P, p)``, ``counts`` shape ``(m, P)``. With
    ``order < 2`` the Hessian is returned as ``None``; with ``order < 1`` the
    score too.
    """
    p = Z.shape[2]
    loglik = 0.0
    U = np.zeros(p)
    H = np.zeros((p, p)) if order >= 2 else None
    for g in range(Z.shape[0]):
        c = counts[g]
        E = c.sum()
        if E == 0:
            continue
        Zg = Z[g]
        ref, log_s0, m1, m2 = _segment_moments(Zg, beta)
        sumD = c @ (Zg - ref)
        loglik += beta @ sumD + E * (beta @ ref) - E * log_s0
        if order >= 1:
            U += sumD - E * m1
        if order >= 2:
            H += E * (m2 - np.outer(m1, m1))
    if H is not None:
        H = 0.5 * (H + H.T)
    return loglik, (U if order >= 1 else None), H


def _check_events(dataset: Dataset):
    if dataset.n_events == 0:
        raise InputError("the pseudo partial likelihood is undefined without events")


def aggregates(dataset: Dataset, beta, t: float) -> RiskSetAggregates:
    """Raw risk-set sums ``S^(k)(beta, t)``, ``k = 0, 1, 2``, in one pass.

    The covariate of each pair is taken as its left limit at ``t`` (the value
    used for events occurring at ``t``).
    """
    des = dataset.design
    beta = _as_beta(beta, des.dim)
    if not 0 <= t <= dataset.horizon:
        raise InputError(f"t={t} outside [0, {dataset.horizon}]")
    Zg = des.Z[int(des.segment_of(t))]
    eta = Zg @ beta
    if eta.max() > MAX_LINEAR_PREDICTOR:
        raise CovariateOverflowError(
            f"linear predictor reaches {eta.max():.1f} (> {MAX_LINEAR_PREDICTOR}); "
            "rescale the covariates")
    w = np.exp(eta)
    s1 = w @ Zg
    s2 = Zg.T @ (w[:, None] * Zg)
    return RiskSetAggregates(float(w.sum()), s1, 0.5 * (s2 + s2.T))


def log_pseudo_partial_likelihood(dataset: Dataset, beta) -> float:
    _check_events(dataset)
    des = dataset.design
    return float(evaluate(des.Z, des.counts, _as_beta(beta, des.dim), order=0)[0])


def score(dataset: Dataset, beta) -> np.ndarray:
    """Score ``U_n(beta) = sum over events of Z - Zbar``."""
    _check_events(dataset)
    des = dataset.design
    return evaluate(des.Z, des.counts, _as_beta(beta, des.dim), order=1)[1]


def neg_hessian(dataset: Dataset, beta) -> np.ndarray:
    """``-dU/dbeta'``: sum over events of the weighted covariate covariance."""
    _check_events(dataset)
    des = dataset.design
    return evaluate(des.Z, des.counts, _as_beta(beta, des.dim), order=2)[2]


def _newton_step(H: np.ndarray, U: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(H)
        return np.linalg.solve(L.T, np.linalg.solve(L, U))
    except np.linalg.LinAlgError:
        return np.linalg.pinv(H, rcond=1e-12, hermitian=True) @ U


def fit_arrays(Z: np.ndarray, counts: np.ndarray, init=None, tol: float = 1e-8,
               max_iter: int = 100, bound: float = 50.0, step_tol: float = 1e-4) -> FitResult:
    """Damped Newton solve of ``U(beta) = 0`` on design arrays.

    A Newton step is accepted only if it does not decrease the log pseudo
    partial likelihood; otherwise it is halved. Convergence requires
    ``||U||_2 <= tol`` and a Newton step below ``step_tol`` in sup norm (the
    second condition keeps a monotone likelihood from being reported as
    converged while the iterates drift off to infinity).

    Raises
    ------
    SeparationError
        An iterate leaves the box ``|beta_r| <= bound`` before convergence.
    """
    if tol <= 0:
        raise InputError("tol must be positive")
    p = Z.shape[2]
    if counts.sum() == 0:
        raise InputError("the pseudo partial likelihood is undefined without events")
    beta = np.zeros(p) if init is None else _as_beta(init, p).copy()
    ll, U, H = evaluate(Z, counts, beta)
    trace = [(0, float(ll), float(np.linalg.norm(U)))]
    converged = False
    iterations = 0
    while True:
        unorm = float(np.linalg.norm(U))
        step = _newton_step(H, U)
        if unorm <= tol and np.max(np.abs(step), initial=0.0) <= step_tol:
            converged = True
            break
        if iterations >= max_iter:
            break
        t, accepted = 1.0, False
        for _ in range(60):
            cand = beta + t * step
            if np.max(np.abs(cand)) > bound:
                raise SeparationError(
                    f"coefficient estimate exceeds {bound} in magnitude with score norm "
                    f"{unorm:.3g}: the pseudo-likelihood appears monotone (separation)")
            ll_c, U_c, H_c = evaluate(Z, counts, cand)
            if ll_c >= ll or (ll_c >= ll - 1e-13 * (1.0 + abs(ll))
                              and np.linalg.norm(U_c) < unorm):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            converged = unorm <= tol
            break
        beta, ll, U, H = cand, ll_c, U_c, H_c
        iterations += 1
        trace.append((iterations, float(ll), float(np.linalg.norm(U))))
    return FitResult(beta, float(np.linalg.norm(U)), iterations, converged, float(ll), tuple(trace))


def fit(dataset: Dataset, init=None, tol: float = 1e-8, max_iter: int = 100,
        bound: float = 50.0) -> FitResult:
    """Solve the estimating equation ``U_n(beta) = 0``.

    Parameters
    ----------
    dataset : Dataset
    init : array-like, optional
        Starting value, zero by default.
    tol : float
        Convergence tolerance on the Euclidean norm of the score.
    max_iter : int
        Maximum number of accepted Newton steps; exceeding it returns a
        result with ``converged=False``.
    bound : float
        Separation threshold on ``max |beta_r|``.
    """
    _check_events(dataset)
    des = dataset.design
    return fit_arrays(des.Z, des.counts, init, tol, max_iter, bound)


def _event_time_table(des: Design):
    """Distinct event times, their multiplicities and covariate segments."""
    times, d = np.unique(des.event_time, return_counts=True)
    return times, d.astype(float), des.segment_of(times)


def breslow_baseline(dataset: Dataset, beta) -> BaselineCurve:
    """Aalen-Breslow cumulative baseline: jumps ``d(s) / S0(beta, s)``."""
    des = dataset.design
    beta = _as_beta(beta, des.dim)
    times, d, seg = _event_time_table(des)
    if times.size == 0:
        return BaselineCurve(np.empty(0), np.empty(0))
    log_s0 = np.array([_segment_moments(des.Z[g], beta)[1] for g in range(des.Z.shape[0])])
    jumps = d * np.exp(-log_s0[seg])
    return BaselineCurve(times, np.cumsum(jumps))


def residual_process(dataset: Dataset, beta, baseline: BaselineCurve, pair) -> StepFunction:
    """``M_ij(t) = N_ij(t) - int_0^t exp(beta'Z_ij(s)) dLambda0(s)``.

    Returned as a right-continuous step function jumping at the baseline
    jump times and at the pair's own event times.
    """
    des = dataset.design
    beta = _as_beta(beta, des.dim)
    pair = (str(pair[0]), str(pair[1]))
    if pair not in dataset.covariates.paths:
        raise InputError(f"pair {pair} not in the dataset")
    q = dataset.pairs.index(pair)
    own = np.asarray(dataset.log.events.get(pair, np.empty(0)))
    bt = np.asarray(baseline.jump_times)
    times = np.union1d(bt, own)
    if times.size == 0:
        return StepFunction(times, np.empty(0))
    dlam = np.diff(np.concatenate([[0.0], np.asarray(baseline.cumulative)]))
    seg = des.segment_of(bt)
    comp_jumps = np.exp(des.Z[seg, q, :] @ beta) * dlam
    compensator = np.cumsum(comp_jumps)
    comp_at = np.concatenate([[0.0], compensator])[np.searchsorted(bt, times, side="right")]
    counts = np.searchsorted(own, times, side="right")
    return StepFunction(times, counts - comp_at)
