"""Mixture-of-finite-mixtures core: prior on k, V_n(t) table, Gamma-Poisson marginal.

Everything here works in log space.  Cell counts can reach the hundreds, so raw
products of rising factorials or Poisson terms underflow long before anything
interesting happens.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import poisson


class NumericalError(ArithmeticError):
    """A series or sampler quantity could not be evaluated to the requested accuracy."""


# ----------------------------------------------------------------------------
# Priors on the number of components
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class TruncatedPoisson:
    """Poisson(mean) conditioned on k >= 1."""

    mean: float = 1.0

    def __post_init__(self):
        if not self.mean > 0:
            raise ValueError("TruncatedPoisson mean must be positive")

    def log_pmf(self, k):
        k = np.asarray(k, dtype=np.float64)
        mu = self.mean
        # log(1 - e^-mu) computed stably
        log_norm = math.log(-math.expm1(-mu))
        return k * math.log(mu) - mu - gammaln(k + 1.0) - log_norm

    def tail_mass(self, K: int) -> float:
        """P(k > K)."""
        return float(poisson.sf(K, self.mean) / -math.expm1(-self.mean))

    def to_dict(self):
        return {"kind": "truncated_poisson", "mean": self.mean}


@dataclass(frozen=True)
class Geometric:
    """P(k) = p (1-p)^(k-1) on k >= 1."""

    p: float = 0.1

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError("Geometric p must lie in (0, 1)")

    def log_pmf(self, k):
        k = np.asarray(k, dtype=np.float64)
        return math.log(self.p) + (k - 1.0) * math.log1p(-self.p)

    def tail_mass(self, K: int) -> float:
        return float(math.exp(K * math.log1p(-self.p)))

    def to_dict(self):
        return {"kind": "geometric", "p": self.p}


@dataclass(frozen=True)
class FinitePmf:
    """Explicit pmf on {1, ..., len(probs)}."""

    probs: tuple

    @property
    def support_max(self):
        return len(self.probs)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0 or np.any(probs < 0):
            raise ValueError("FinitePmf needs a nonempty vector of nonnegative weights")
        if abs(probs.sum() - 1.0) > 1e-10:
            raise ValueError(f"FinitePmf weights sum to {probs.sum()!r}, not 1")

    def log_pmf(self, k):
        k = np.asarray(k, dtype=np.int64)
        probs = np.asarray(self.probs, dtype=np.float64)
        inside = (k >= 1) & (k <= probs.size)
        out = np.full(k.shape, -np.inf)
        with np.errstate(divide="ignore"):
            out[inside] = np.log(probs[k[inside] - 1])
        return out if out.ndim else float(out)

    def to_dict(self):
        return {"kind": "finite", "probs": list(self.probs)}


def k_prior_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "truncated_poisson":
        return TruncatedPoisson(float(d.get("mean", 1.0)))
    if kind == "geometric":
        return Geometric(float(d["p"]))
    if kind == "finite":
        return FinitePmf(tuple(float(p) for p in d["probs"]))
    raise ValueError(f"unknown k prior kind {kind!r}")


# ----------------------------------------------------------------------------
# Configuration
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class MfmConfig:
    """Hyperparameters of the MFM-Poisson model and the V_n series settings.

    ``gamma`` is the symmetric Dirichlet concentration, ``a``/``b`` the shape and
    rate of the Gamma prior on cluster intensities.
    """

    gamma: float = 1.0
    a: float = 1.0
    b: float = 1.0
    k_prior: object = field(default_factory=TruncatedPoisson)
    vn_tol: float = 1e-12
    vn_kmax: int = 500

    def __post_init__(self):
        for name in ("gamma", "a", "b", "vn_tol"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
        if int(self.vn_kmax) < 1:
            raise ValueError("vn_kmax must be >= 1")
        check_k_prior(self.k_prior)

    def to_dict(self):
        return {
            "gamma": self.gamma,
            "a": self.a,
            "b": self.b,
            "k_prior": self.k_prior.to_dict(),
            "vn_tol": self.vn_tol,
            "vn_kmax": self.vn_kmax,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MfmConfig":
        kw = {k: d[k] for k in ("gamma", "a", "b", "vn_tol", "vn_kmax") if k in d}
        if "k_prior" in d:
            kw["k_prior"] = k_prior_from_dict(d["k_prior"])
        return cls(**kw)


def check_k_prior(prior, n_terms: int = 2000, tol: float = 1e-10) -> float:
    """Return the total mass of the prior's pmf, raising if it is not 1 within ``tol``.

    Infinite supports are summed over the first ``n_terms`` values plus the
    prior's analytic ``tail_mass`` bound when it has one.
    """
    ks = np.arange(1, n_terms + 1)
    total = float(np.exp(logsumexp(prior.log_pmf(ks))))
    if hasattr(prior, "tail_mass"):
        total += prior.tail_mass(n_terms)
    if abs(total - 1.0) > tol:
        raise ValueError(f"k prior is not normalized: partial sum {total!r}")
    return total


def k_prior_log_pmf(k: int, cfg: MfmConfig | None = None) -> float:
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    prior = (cfg or MfmConfig()).k_prior
    return float(prior.log_pmf(int(k)))


# ----------------------------------------------------------------------------
# V_n(t)
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class LogVnTable:
    """log V_n(t) for t = 0 .. t_max (index t)."""

    n: int
    values: np.ndarray
    cfg: MfmConfig

    @property
    def t_max(self) -> int:
        return self.values.size - 1

    def __getitem__(self, t):
        return self.values[t]

    def log_ratio(self, t: int) -> float:
        """log V_n(t+1) - log V_n(t)."""
        if t + 1 > self.t_max:
            raise IndexError(f"V_n table covers t <= {self.t_max}, need {t + 1}")
        return float(self.values[t + 1] - self.values[t])

    def extended(self, t_max: int) -> "LogVnTable":
        if t_max <= self.t_max:
            return self
        return build_log_vn(self.n, t_max, self.cfg)


def _log_vn_single(n: int, t: int, cfg: MfmConfig) -> float:
    gamma = cfg.gamma
    log_sum = -np.inf
    prev = np.inf
    k = max(t, 1)
    k_stop = getattr(cfg.k_prior, "support_max", None)
    while True:
        if k_stop is not None and k > k_stop:
            return float(log_sum)
        # log k_(t) - log (gamma k)^(n) + log p(k)
        term = (
            gammaln(k + 1.0)
            - gammaln(k - t + 1.0)
            - (gammaln(gamma * k + n) - gammaln(gamma * k))
            + float(cfg.k_prior.log_pmf(k))
        )
        log_sum = np.logaddexp(log_sum, term)
        if np.isfinite(log_sum) and term - log_sum < math.log(cfg.vn_tol) and term < prev:
            return float(log_sum)
        if k >= cfg.vn_kmax:
            bound = math.exp(term - log_sum) if np.isfinite(log_sum) else math.inf
            raise NumericalError(
                f"V_{n}({t}) series not converged after {k} terms; "
                f"last relative term {bound:.3e} > tol {cfg.vn_tol:.1e}"
            )
        prev = term
        k += 1


def build_log_vn(n: int, t_max: int | None = None, cfg: MfmConfig | None = None) -> LogVnTable:
    """Precompute log V_n(t) for t = 0..t_max.

    Terms with k < t vanish (the falling factorial is zero), so each series
    starts at k = max(t, 1) and stops once the next term drops below
    ``vn_tol`` relative to the running sum.
    """
    cfg = cfg or MfmConfig()
    if n < 1:
        raise ValueError("n must be >= 1")
    if t_max is None:
        t_max = min(n, 64)
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    values = np.array([_log_vn_single(n, t, cfg) for t in range(t_max + 1)])
    # -inf is legitimate (V_n(t) = 0 when t exceeds a finite prior's support)
    if np.any(np.isnan(values)) or np.any(values == np.inf) or not np.isfinite(values[1]):
        raise NumericalError(f"invalid log V_{n}(t) entries")
    values.setflags(write=False)
    return LogVnTable(n=n, values=values, cfg=cfg)


# ----------------------------------------------------------------------------
# Likelihood pieces
# ----------------------------------------------------------------------------


def log_marginal_count(N, a: float, b: float):
    """log of the Gamma(a, b)-mixed Poisson pmf at N (a negative binomial)."""
    N = np.asarray(N, dtype=np.float64)
    out = (
        a * np.log(b)
        + gammaln(N + a)
        - gammaln(a)
        - (N + a) * np.log(b + 1.0)
        - gammaln(N + 1.0)
    )
    return out if out.ndim else float(out)


def poisson_log_pmf(N, lam):
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(~(lam > 0)):
        raise ValueError("Poisson rate must be positive")
    N = np.asarray(N, dtype=np.float64)
    out = N * np.log(lam) - lam - gammaln(N + 1.0)
    return out if out.ndim else float(out)
