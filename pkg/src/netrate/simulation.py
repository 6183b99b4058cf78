"""Synthetic pair event data from a gamma-frailty proportional-rate model.

Pair ``(i, j)`` fires as a homogeneous Poisson process with rate
``eta_i * lambda0_i * exp(beta0' Z_ij)`` on ``(0, T]``, where ``eta_i`` is a
sender frailty drawn from a gamma distribution and ``lambda0_i`` is 1 for the
first half of the senders and 1.2 for the rest. Covariates are static:

* ``Z1`` thresholded Gaussians with compound-symmetric correlation ``rho``,
* ``Z2`` iid uniform on (0, 1),
* ``Z3`` Gaussians with tridiagonal correlation (``rho`` on the first
  off-diagonal).

In the ``independent_senders`` regime the correlated vectors run over the
recipients of each sender separately; in ``dependent_senders`` a single
vector runs over all ``N = n(n-1)`` pairs in lexicographic order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import linalg

from .data import CovariateSet, Dataset, EventLog, NodeSet
from .errors import ConfigError, McFailureError, NumericalError

REGIMES = ("independent_senders", "dependent_senders")
BANDED_RHO_MAX = 0.5

#: named random sub-streams; every draw in the package goes through one
STREAMS = {"covariates": 0, "frailty": 1, "event-times": 2, "jk2-draws": 3}


def substream(seed: int, name: str, *prefix: int) -> np.random.Generator:
    """Independent generator for a named stream (optionally per replication)."""
    key = (*prefix, STREAMS[name])
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def replication_seed(seed: int, rep: int) -> int:
    """Deterministic 63-bit seed for replication ``rep`` of a study."""
    state = np.random.SeedSequence(int(seed), spawn_key=(1_000_003, rep)).generate_state(2, np.uint32)
    return int(state[0]) << 31 | int(state[1]) >> 1


@dataclass(frozen=True)
class SimulationConfig:
    """Parameters of one simulated network.

    ``frailty_shape=None`` switches the frailty off (``eta == 1``).
    """

    n: int = 40
    rho: float = 0.0
    beta0: tuple = (0.5, -0.5, 0.5)
    frailty_shape: float | None = 16.0
    frailty_rate: float | None = 16.0
    horizon: float = 1.0
    regime: str = "independent_senders"
    seed: int = 0
    max_events: int = 10_000_000

    def __post_init__(self):
        object.__setattr__(self, "beta0", tuple(float(b) for b in np.atleast_1d(self.beta0)))
        if int(self.n) != self.n or self.n < 4:
            raise ConfigError(f"n must be an integer >= 4, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        if len(self.beta0) != 3:
            raise ConfigError("beta0 must have length 3 (one entry per simulated covariate)")
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError(f"rho={self.rho}: compound-symmetric correlation needs 0 <= rho < 1")
        if self.rho > BANDED_RHO_MAX:
            raise ConfigError(
                f"rho={self.rho}: tridiagonal (banded) correlation is only admissible for "
                f"rho <= {BANDED_RHO_MAX}")
        if (self.frailty_shape is None) != (self.frailty_rate is None):
            raise ConfigError("frailty shape and rate must both be given or both be null")
        if self.frailty_shape is not None and not (self.frailty_shape > 0 and self.frailty_rate > 0):
            raise ConfigError("frailty shape and rate must be positive")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        if self.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {REGIMES}, got {self.regime!r}")

    @property
    def frailty_mean(self) -> float:
        return 1.0 if self.frailty_shape is None else self.frailty_shape / self.frailty_rate

    @property
    def frailty_var(self) -> float:
        return 0.0 if self.frailty_shape is None else self.frailty_shape / self.frailty_rate ** 2

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationConfig":
        known = {"n", "rho", "beta0", "frailty", "horizon", "regime", "seed", "max_events"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        kw = {k: v for k, v in d.items() if k != "frailty"}
        if "frailty" in d:
            fr = d["frailty"]
            if fr is None:
                kw["frailty_shape"] = kw["frailty_rate"] = None
            elif isinstance(fr, dict) and set(fr) == {"shape", "rate"}:
                kw["frailty_shape"], kw["frailty_rate"] = float(fr["shape"]), float(fr["rate"])
            else:
                raise ConfigError("frailty must be null or {shape, rate}")
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["beta0"] = list(self.beta0)
        shape, rate = d.pop("frailty_shape"), d.pop("frailty_rate")
        d["frailty"] = None if shape is None else {"shape": shape, "rate": rate}
        return d

    def labels(self) -> tuple[str, ...]:
        return tuple(str(k) for k in range(1, self.n + 1))

    def baseline_rates(self) -> np.ndarray:
        """Per-sender baseline: 1 for senders ``i <= n/2``, 1.2 otherwise."""
        i = np.arange(1, self.n + 1)
        return np.where(i <= self.n / 2, 1.0, 1.2)


def compound_symmetric_normal(rng, size: int, rho: float, reps: int = 1) -> np.ndarray:
    """``reps`` draws of a ``size``-vector with unit variances and equal correlation ``rho``."""
    if not 0.0 <= rho < 1.0:
        raise ConfigError(f"compound symmetry: rho={rho} is not positive definite")
    common = rng.standard_normal((reps, 1))
    own = rng.standard_normal((reps, size))
    return math.sqrt(rho) * common + math.sqrt(1.0 - rho) * own


def banded_normal(rng, size: int, rho: float, reps: int = 1) -> np.ndarray:
    """Draws with tridiagonal correlation (1 on the diagonal, ``rho`` next to it)."""
    if rho == 0.0 or size == 1:
        return rng.standard_normal((reps, size))
    if abs(rho) > BANDED_RHO_MAX:
        raise ConfigError(f"banded correlation: rho={rho} exceeds {BANDED_RHO_MAX}")
    ab = np.zeros((2, size))
    ab[0] = 1.0
    ab[1, :-1] = rho
    try:
        cb = linalg.cholesky_banded(ab, lower=True)
    except linalg.LinAlgError:
        raise ConfigError(f"banded correlation with rho={rho} is not positive definite") from None
    eps = rng.standard_normal((reps, size))
    x = cb[0] * eps
    x[:, 1:] += cb[1, :-1] * eps[:, :-1]
    return x


def gen_covariates(config: SimulationConfig, rng=None) -> CovariateSet:
    """Static three-dimensional covariates for every ordered pair."""
    rng = substream(config.seed, "covariates") if rng is None else rng
    n = config.n
    if config.regime == "independent_senders":
        z1 = (compound_symmetric_normal(rng, n - 1, config.rho, reps=n) >= 0).astype(float).ravel()
        z2 = rng.uniform(0.0, 1.0, size=n * (n - 1))
        z3 = banded_normal(rng, n - 1, config.rho, reps=n).ravel()
    else:
        N = n * (n - 1)
        z1 = (compound_symmetric_normal(rng, N, config.rho)[0] >= 0).astype(float)
        z2 = rng.uniform(0.0, 1.0, size=N)
        z3 = banded_normal(rng, N, config.rho)[0]
    Z = np.column_stack([z1, z2, z3])
    labels = config.labels()
    pairs = [(i, j) for i in labels for j in labels if i != j]
    zero = np.zeros(1)
    paths = {pair: (zero, Z[q:q + 1]) for q, pair in enumerate(pairs)}
    return CovariateSet(3, paths, ("z1", "z2", "z3"))


@dataclass(frozen=True)
class SimulatedTruth:
    beta0: tuple
    eta: np.ndarray
    rates: dict = field(repr=False)

    def to_dict(self) -> dict:
        return {"beta0": list(self.beta0), "eta": [float(x) for x in self.eta],
                "rates": [{"sender": i, "recipient": j, "rate": float(r)}
                          for (i, j), r in self.rates.items()]}


def gen_events(config: SimulationConfig, covariates: CovariateSet, return_truth: bool = False):
    """Conditional Poisson event times for every pair of ``covariates``.

    Returns the :class:`EventLog`, plus a :class:`SimulatedTruth` with the
    frailties and per-pair conditional rates when ``return_truth`` is set.
    """
    labels = config.labels()
    index = {x: k for k, x in enumerate(labels)}
    pairs = sorted(covariates.paths, key=lambda p: (index.get(p[0], -1), index.get(p[1], -1)))
    for a, b in pairs:
        if a not in index or b not in index:
            raise ConfigError(f"covariate pair ({a}, {b}) is not a pair of simulated nodes")
    if not covariates.is_static:
        raise ConfigError("simulation supports static covariates only")
    beta0 = np.asarray(config.beta0)
    if covariates.dim != beta0.size:
        raise ConfigError(f"beta0 has length {beta0.size} but covariates have dimension {covariates.dim}")
    Z = np.array([covariates.paths[p][1][0] for p in pairs]).reshape(len(pairs), -1)
    sender = np.array([index[a] for a, _ in pairs])
    base = config.baseline_rates()[sender] * np.exp(Z @ beta0)
    expected = config.frailty_mean * base.sum() * config.horizon
    if expected > config.max_events:
        raise ConfigError(
            f"expected {expected:.3g} events exceeds the cap {config.max_events}; "
            "use a shorter horizon or smaller beta0")
    if config.frailty_shape is None:
        eta = np.ones(config.n)
    else:
        eta = substream(config.seed, "frailty").gamma(config.frailty_shape, 1.0 / config.frailty_rate,
                                                      size=config.n)
    rate = eta[sender] * base
    rng = substream(config.seed, "event-times")
    counts = rng.poisson(rate * config.horizon)
    u = rng.random(int(counts.sum()))
    times = config.horizon * (1.0 - u)
    events = {}
    pos = 0
    for q, k in enumerate(counts):
        if k:
            events[pairs[q]] = np.sort(times[pos:pos + k])
            pos += k
    # continuous draws: within-pair ties occur with probability zero
    for pair, t in events.items():
        if np.any(np.diff(t) <= 0):
            events[pair] = np.unique(t)
    log = EventLog(config.horizon, events)
    if not return_truth:
        return log
    return log, SimulatedTruth(config.beta0, eta, dict(zip(pairs, rate)))


def simulate_dataset(config: SimulationConfig, return_truth: bool = False):
    """Covariates and events in one call."""
    cov = gen_covariates(config)
    log, truth = gen_events(config, cov, return_truth=True)
    ds = Dataset(NodeSet(config.labels()), log, cov)
    return (ds, truth) if return_truth else ds


# --------------------------------------------------------------------------
# Monte Carlo study
# --------------------------------------------------------------------------

SUMMARY_COLUMNS = ("Bias", "SE", "SEE(JK)", "SEE(JK2)", "SEE", "ECP(JK)", "ECP(JK2)", "ECP")


@dataclass(frozen=True)
class ReplicationRecord:
    rep: int
    seed: int
    ok: bool
    estimate: np.ndarray | None = None
    se_naive: np.ndarray | None = None
    se_jk: np.ndarray | None = None
    se_jk2: np.ndarray | None = None
    error: str | None = None


@dataclass(frozen=True)
class McSummary:
    """Table-style summary of a Monte Carlo study (one row per coefficient)."""

    names: tuple
    bias: np.ndarray
    se: np.ndarray
    see: np.ndarray
    see_jk: np.ndarray
    see_jk2: np.ndarray
    ecp: np.ndarray
    ecp_jk: np.ndarray
    ecp_jk2: np.ndarray
    replications: int
    failures: int
    records: tuple = field(default=(), repr=False)

    def rows(self) -> list[dict]:
        out = []
        for r, name in enumerate(self.names):
            out.append({"parameter": name, "Bias": self.bias[r], "SE": self.se[r],
                        "SEE(JK)": self.see_jk[r], "SEE(JK2)": self.see_jk2[r], "SEE": self.see[r],
                        "ECP(JK)": self.ecp_jk[r], "ECP(JK2)": self.ecp_jk2[r], "ECP": self.ecp[r]})
        return out

    def to_csv(self, path=None) -> str:
        lines = [",".join(("parameter", *SUMMARY_COLUMNS, "replications", "failures"))]
        for row in self.rows():
            vals = [f"{row[c]:.6f}" for c in SUMMARY_COLUMNS]
            lines.append(",".join((row["parameter"], *vals, str(self.replications), str(self.failures))))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def _one_replication(config: SimulationConfig, rep: int, jk2_draws: int, fit_options: dict) -> ReplicationRecord:
    from .estimation import fit
    from .variance import estimate_variance

    seed = replication_seed(config.seed, rep)
    cfg = replace(config, seed=seed)
    try:
        ds = simulate_dataset(cfg)
        res = fit(ds, **fit_options)
        if not res.converged:
            return ReplicationRecord(rep, seed, False, error="fit did not converge")
        ses = {}
        for method in ("naive", "jackknife1", "jackknife2"):
            v = estimate_variance(ds, res, method=method, draws=jk2_draws, seed=seed,
                                  fit_options=fit_options)
            ses[method] = np.sqrt(np.diag(v.sandwich))
    except NumericalError as exc:
        return ReplicationRecord(rep, seed, False, error=f"{type(exc).__name__}: {exc}")
    return ReplicationRecord(rep, seed, True, res.beta_hat, ses["naive"], ses["jackknife1"],
                             ses["jackknife2"])


def summarize(records, beta0, alpha: float = 0.05, names=("beta1", "beta2", "beta3")) -> McSummary:
    from scipy.stats import norm

    beta0 = np.asarray(beta0, dtype=float)
    good = [r for r in records if r.ok]
    p = beta0.size
    if not good:
        nan = np.full(p, np.nan)
        return McSummary(tuple(names), nan, nan, nan, nan, nan, nan, nan, nan,
                         len(records), len(records), tuple(records))
    est = np.array([r.estimate for r in good])
    z = norm.ppf(1 - alpha / 2)

    def coverage(se):
        return np.mean(np.abs(est - beta0) <= z * se, axis=0)

    se_n = np.array([r.se_naive for r in good])
    se_1 = np.array([r.se_jk for r in good])
    se_2 = np.array([r.se_jk2 for r in good])
    sd = est.std(axis=0, ddof=1) if len(good) > 1 else np.zeros(p)
    return McSummary(tuple(names), est.mean(axis=0) - beta0, sd, se_n.mean(axis=0),
                     se_1.mean(axis=0), se_2.mean(axis=0), coverage(se_n), coverage(se_1),
                     coverage(se_2), len(records), len(records) - len(good), tuple(records))


def mc_study(config: SimulationConfig, replications: int, jk2_draws: int = 150, alpha: float = 0.05,
             threads: int = 1, fit_options: dict | None = None, max_failure_rate: float = 0.10,
             progress=None) -> McSummary:
    """Repeat simulate / fit / variance estimation and summarise.

    Each replication derives its own seed from ``config.seed``, so the result
    does not depend on ``threads``. ``progress`` is called with each finished
    :class:`ReplicationRecord` in replication order.

    Raises
    ------
    McFailureError
        More than ``max_failure_rate`` of the replications failed; the
        partial summary is attached as ``exc.partial``.
    """
    if replications < 2:
        raise ConfigError("at least two replications are required")
    if not 0 < alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    fit_options = dict(fit_options or {})
    work = lambda rep: _one_replication(config, rep, jk2_draws, fit_options)
    records = []
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for rec in pool.map(work, range(replications)):
                records.append(rec)
                if progress:
                    progress(rec)
    else:
        for rep in range(replications):
            rec = work(rep)
            records.append(rec)
            if progress:
                progress(rec)
    summary = summarize(records, config.beta0, alpha)
    if summary.failures > max_failure_rate * replications:
        raise McFailureError(
            f"{summary.failures} of {replications} replications failed", partial=summary)
    return summary
