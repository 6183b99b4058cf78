"""Sandwich covariance for the pseudo partial likelihood estimator.

The bread is the empirical score outer-product ``Sigma1``. The meat
``Sigma2`` is estimated by node-deletion jackknife: for each deleted node
set ``S`` the model is refitted on the remaining pairs, and the full-sample
score evaluated at the refitted coefficients,

    b_S = sum over all events of {Z_ij(T) - Zbar(beta_hat^(-S), T)},

linearises ``Sigma1 (beta_hat^(-S) - beta_hat)``. With ``d = |S|`` nodes
deleted the meat is

    Sigma2 = (n - d) / (2 d) * mean_S b_S b_S'

i.e. the delete-``d`` jackknife scaling, halved because every pair is
removed together with either of its two endpoints. ``d = 1`` enumerates all
nodes; ``d = 2`` uses random node pairs.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .data import Dataset
from .errors import InputError, NumericalError, ReplicateFailureError, SingularMatrixError
from .estimation import FitResult, _as_beta, _segment_moments, evaluate, fit_arrays

METHODS = ("naive", "jackknife1", "jackknife2")
MAX_CONDITION = 1e12
MAX_REPLICATE_FAILURE = 0.20


@dataclass(frozen=True)
class VarianceEstimates:
    sigma1: np.ndarray
    sigma2: np.ndarray
    method: str
    sandwich: np.ndarray
    replicate_fits: int = 0
    failed_replicates: int = 0
    seed: int | None = None

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.sandwich))

    def to_dict(self, alpha: float | None = None, beta_hat=None) -> dict:
        d = {"method": self.method, "sigma1": self.sigma1.tolist(), "sigma2": self.sigma2.tolist(),
             "sandwich": self.sandwich.tolist(), "se": self.se.tolist(),
             "replicates": {"total": self.replicate_fits, "failed": self.failed_replicates},
             "seed": self.seed}
        if alpha is not None and beta_hat is not None:
            z = stats.norm.ppf(1 - alpha / 2)
            d["ci"] = [[float(b - z * s), float(b + z * s)] for b, s in zip(beta_hat, self.se)]
            d["alpha"] = alpha
        return d


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def sigma1_hat(dataset: Dataset, beta_hat) -> np.ndarray:
    """Sum over events of ``{Z_ij(T) - Zbar(beta_hat, T)}^{(x)2}``."""
    des = dataset.design
    beta = _as_beta(beta_hat, des.dim)
    return _sigma1_arrays(des.Z, des.counts, beta)


def _sigma1_arrays(Z, counts, beta) -> np.ndarray:
    p = Z.shape[2]
    out = np.zeros((p, p))
    for g in range(Z.shape[0]):
        c = counts[g]
        if not c.any():
            continue
        ref, _, m1, _ = _segment_moments(Z[g], beta)
        dev = (Z[g] - ref - m1)[c > 0]
        out += dev.T @ (c[c > 0][:, None] * dev)
    return _symmetrize(out)


def is_rank_deficient(sigma1: np.ndarray) -> bool:
    ev = np.linalg.eigvalsh(sigma1)
    return bool(ev[0] <= ev[-1] / MAX_CONDITION or ev[-1] <= 0)


def _check_invertible(sigma1: np.ndarray):
    ev, vec = np.linalg.eigh(sigma1)
    top = ev[-1]
    bad = ev <= top / MAX_CONDITION if top > 0 else np.ones_like(ev, dtype=bool)
    if bad.any():
        raise SingularMatrixError(
            f"Sigma1 is singular or ill-conditioned (eigenvalues {ev.tolist()}); "
            "the covariates are not identifiable along the reported directions",
            directions=vec[:, bad].T)


def sandwich(sigma1, sigma2) -> np.ndarray:
    """``Sigma1^{-1} Sigma2 Sigma1^{-1}``, symmetrised."""
    sigma1 = np.atleast_2d(np.asarray(sigma1, dtype=float))
    sigma2 = np.atleast_2d(np.asarray(sigma2, dtype=float))
    _check_invertible(sigma1)
    left = np.linalg.solve(sigma1, sigma2)
    return _symmetrize(np.linalg.solve(sigma1, left.T).T)


def _replicate_bracket(Z, counts, mask, beta_hat, fit_options):
    """Full-sample score at the estimate refitted without the masked-out pairs."""
    sub_counts = counts[:, mask]
    if sub_counts.sum() == 0:
        raise NumericalError("no events left after deletion")
    res = fit_arrays(Z[:, mask], sub_counts, init=beta_hat, **fit_options)
    if not res.converged:
        raise NumericalError("replicate fit did not converge")
    return evaluate(Z, counts, res.beta_hat, order=1)[1]


def _jackknife(dataset: Dataset, beta_hat, deletions, n_deleted: int, fit_options, threads: int):
    des = dataset.design
    beta_hat = _as_beta(beta_hat, des.dim)
    opts = {"tol": 1e-8, "max_iter": 100, **(fit_options or {})}
    Z, counts = des.Z, des.counts

    def work(nodes):
        try:
            return _replicate_bracket(Z, counts, des.pair_mask(nodes), beta_hat, opts)
        except NumericalError:
            return None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            brackets = list(pool.map(work, deletions))
    else:
        brackets = [work(nodes) for nodes in deletions]
    ok = [b for b in brackets if b is not None]
    failed = len(brackets) - len(ok)
    if failed > MAX_REPLICATE_FAILURE * len(brackets):
        raise ReplicateFailureError(
            f"{failed} of {len(brackets)} jackknife refits failed (limit "
            f"{MAX_REPLICATE_FAILURE:.0%})")
    n = dataset.nodes.node_count
    B = np.array(ok)
    # fixed-order accumulation keeps results independent of the thread count
    acc = np.zeros((des.dim, des.dim))
    for b in B:
        acc += np.outer(b, b)
    sigma2 = (n - n_deleted) / (2.0 * n_deleted) * acc / len(ok)
    return _symmetrize(sigma2), len(brackets), failed


def sigma2_jackknife1(dataset: Dataset, beta_hat, fit_options=None, threads: int = 1,
                      return_counts: bool = False):
    """Odd-one-out jackknife estimate of the score variability matrix.

    Every node is deleted in turn (with all pairs it sends or receives);
    refits warm-start at ``beta_hat``. Failed refits are skipped, up to 20%.
    """
    n = dataset.nodes.node_count
    if n < 3:
        raise InputError("the odd-one-out jackknife needs at least 3 nodes")
    deletions = [(s,) for s in range(n)]
    out = _jackknife(dataset, beta_hat, deletions, 1, fit_options, threads)
    return out if return_counts else out[0]


def draw_node_pairs(n: int, draws: int, seed) -> list[tuple[int, int]]:
    """``draws`` independent uniformly random pairs of distinct node indices."""
    from .simulation import substream

    rng = substream(seed, "jk2-draws")
    out = []
    for _ in range(draws):
        s, t = rng.choice(n, size=2, replace=False)
        out.append((int(min(s, t)), int(max(s, t))))
    return out


def sigma2_jackknife2(dataset: Dataset, beta_hat, draws: int = 150, seed=0, fit_options=None,
                      threads: int = 1, pairs=None, return_counts: bool = False):
    """Odd-two-out jackknife estimate of the score variability matrix.

    ``draws`` random node pairs are deleted (one pair per draw, pairs drawn
    independently under ``seed``). An explicit list of node-index pairs may
    be passed as ``pairs`` instead, e.g. all ``C(n, 2)`` of them.
    """
    n = dataset.nodes.node_count
    if n < 4:
        raise InputError("the odd-two-out jackknife needs at least 4 nodes")
    if pairs is None:
        if draws < 1:
            raise InputError("draws must be at least 1")
        pairs = draw_node_pairs(n, draws, seed)
    out = _jackknife(dataset, beta_hat, list(pairs), 2, fit_options, threads)
    return out if return_counts else out[0]


def estimate_variance(dataset: Dataset, fit: FitResult, method: str = "jackknife1",
                      draws: int = 150, seed=0, fit_options=None, threads: int = 1) -> VarianceEstimates:
    """``Sigma1``, ``Sigma2`` and the sandwich covariance for a fitted model.

    ``method="naive"`` sets ``Sigma2 = Sigma1`` so the covariance is
    ``Sigma1^{-1}`` (edges treated as independent).
    """
    if method not in METHODS:
        raise InputError(f"method must be one of {METHODS}, got {method!r}")
    beta = fit.beta_hat
    s1 = sigma1_hat(dataset, beta)
    _check_invertible(s1)
    total = failed = 0
    if method == "naive":
        s2 = s1.copy()
        cov = _symmetrize(np.linalg.inv(s1))
    else:
        if method == "jackknife1":
            s2, total, failed = sigma2_jackknife1(dataset, beta, fit_options, threads, return_counts=True)
        else:
            s2, total, failed = sigma2_jackknife2(dataset, beta, draws, seed, fit_options, threads,
                                                  return_counts=True)
        cov = sandwich(s1, s2)
    return VarianceEstimates(s1, s2, method, cov, total, failed,
                             seed if method == "jackknife2" else None)


@dataclass(frozen=True)
class InferenceReport:
    names: tuple
    estimate: np.ndarray
    se: np.ndarray
    z: np.ndarray
    p_value: np.ndarray
    ci: np.ndarray
    alpha: float
    null: np.ndarray
    chi2: float
    dof: int
    chi2_critical: float
    chi2_p_value: float

    @property
    def reject_joint(self) -> bool:
        return self.chi2 > self.chi2_critical

    def to_dict(self) -> dict:
        coefs = []
        for r, name in enumerate(self.names):
            coefs.append({"name": name, "estimate": float(self.estimate[r]), "se": float(self.se[r]),
                          "z": float(self.z[r]), "p_value": float(self.p_value[r]),
                          "ci": [float(self.ci[r, 0]), float(self.ci[r, 1])]})
        return {"alpha": self.alpha, "coefficients": coefs,
                "joint": {"null": self.null.tolist(), "chi2": self.chi2, "dof": self.dof,
                          "critical_value": self.chi2_critical, "p_value": self.chi2_p_value,
                          "reject": self.reject_joint,
                          "region": "{b : (beta_hat - b)' V^-1 (beta_hat - b) <= critical_value}"}}


def inference(fit: FitResult, var: VarianceEstimates, alpha: float = 0.05, null=None,
              names=None) -> InferenceReport:
    """Wald intervals, per-coefficient tests and the joint chi-square test."""
    if not 0 < alpha < 1:
        raise InputError("alpha must lie in (0, 1)")
    beta = np.asarray(fit.beta_hat, dtype=float)
    p = beta.size
    V = np.asarray(var.sandwich, dtype=float)
    diag = np.diag(V)
    if np.any(diag <= 0):
        raise NumericalError("covariance matrix has a nonpositive diagonal entry")
    se = np.sqrt(diag)
    null = np.zeros(p) if null is None else _as_beta(null, p)
    zq = stats.norm.ppf(1 - alpha / 2)
    z = (beta - null) / se
    pval = 2 * stats.norm.sf(np.abs(z))
    ci = np.column_stack([beta - zq * se, beta + zq * se])
    d = beta - null
    chi2 = float(max(d @ np.linalg.solve(V, d), 0.0))
    names = tuple(names) if names is not None else tuple(f"beta{k + 1}" for k in range(p))
    return InferenceReport(names, beta, se, z, pval, ci, alpha, null, chi2, p,
                           float(stats.chi2.ppf(1 - alpha, p)), float(stats.chi2.sf(chi2, p)))
