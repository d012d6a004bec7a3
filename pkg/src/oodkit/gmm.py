"""Gaussian mixture density estimation with EM, full covariances, and
log-density scoring.

Responsibilities are computed in log space and all solves go through
Cholesky factors; no covariance is ever explicitly inverted. Fitted
mixtures are immutable and safe to share.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .core import FeatureMatrix, LabelVector
from .errors import ConfigError, DimensionError, NotFittedError, SingularModelError

__all__ = ["GaussianMixture", "EmConfig", "fit_em", "default_config"]

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class EmConfig:
    max_iter: int = 200
    rel_tol: float = 1e-6
    reg: float = 1e-5
    seed: int = 0
    init: str = "labels"  # "labels" or "kmeans_pp"
    log_transform: bool = False

    def __post_init__(self):
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if self.rel_tol <= 0:
            raise ConfigError("rel_tol must be > 0")
        if self.reg < 0:
            raise ConfigError("reg must be >= 0")
        if self.init not in ("labels", "kmeans_pp"):
            raise ConfigError(f"unknown init {self.init!r}")


def default_config(**overrides) -> EmConfig:
    return EmConfig(**overrides)


class GaussianMixture:
    """Fitted mixture: weights pi_i, means mu_i, full covariances Sigma_i."""

    FORMAT_VERSION = 1

    def __init__(self, weights, means, covariances, reg=0.0, log_transform=False):
        weights = np.asarray(weights, dtype=np.float64)
        means = np.asarray(means, dtype=np.float64)
        covariances = np.asarray(covariances, dtype=np.float64)
        if means.ndim != 2 or covariances.ndim != 3:
            raise DimensionError("means must be K'xH, covariances K'xHxH")
        k, h = means.shape
        if weights.shape != (k,) or covariances.shape != (k, h, h):
            raise DimensionError("mixture parameter shapes disagree")
        if abs(weights.sum() - 1.0) > 1e-12 or np.any(weights <= 0):
            raise ConfigError("weights must be a strictly positive simplex vector")
        if np.max(np.abs(covariances - covariances.transpose(0, 2, 1))) > 1e-10:
            raise SingularModelError("covariance not symmetric")
        self.weights = weights
        self.means = means
        self.covariances = covariances
        self.reg = float(reg)
        self.log_transform = bool(log_transform)
        self._chols = []
        self._log_norms = np.empty(k)
        for i in range(k):
            try:
                L = cholesky(covariances[i], lower=True)
            except np.linalg.LinAlgError as e:
                raise SingularModelError(f"component {i} covariance not PD") from e
            self._chols.append(L)
            self._log_norms[i] = -0.5 * h * _LOG_2PI - np.log(np.diag(L)).sum()

    @property
    def k_components(self) -> int:
        return self.means.shape[0]

    @property
    def h(self) -> int:
        return self.means.shape[1]

    def _maybe_log(self, x: np.ndarray) -> np.ndarray:
        return np.log(x) if self.log_transform else x

    def component_log_densities(self, x: np.ndarray) -> np.ndarray:
        """Per-component log N(x; mu_i, Sigma_i) for an N x H batch."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.h:
            raise DimensionError(f"expected H={self.h} columns, got {x.shape[1]}")
        x = self._maybe_log(x)
        out = np.empty((x.shape[0], self.k_components))
        for i, L in enumerate(self._chols):
            d = x - self.means[i]
            y = solve_triangular(L, d.T, lower=True)
            out[:, i] = self._log_norms[i] - 0.5 * (y * y).sum(axis=0)
        return out

    def log_density_batch(self, x: np.ndarray) -> np.ndarray:
        comp = self.component_log_densities(x) + np.log(self.weights)
        m = comp.max(axis=1, keepdims=True)
        return (m + np.log(np.exp(comp - m).sum(axis=1, keepdims=True))).ravel()

    def log_density(self, z) -> float:
        return float(self.log_density_batch(np.asarray(z, dtype=np.float64)[None, :])[0])

    def mahalanobis_sq(self, x: np.ndarray) -> np.ndarray:
        """Squared Mahalanobis distance of each row to every component."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        x = self._maybe_log(x)
        out = np.empty((x.shape[0], self.k_components))
        for i, L in enumerate(self._chols):
            y = solve_triangular(L, (x - self.means[i]).T, lower=True)
            out[:, i] = (y * y).sum(axis=0)
        return out

    def neg_log_density_grad(self, z) -> np.ndarray:
        """Gradient of -log density at a single point."""
        z = np.asarray(z, dtype=np.float64)
        comp = self.component_log_densities(z[None, :])[0] + np.log(self.weights)
        total = comp.max() + np.log(np.exp(comp - comp.max()).sum())
        resp = np.exp(comp - total)
        zz = self._maybe_log(z[None, :])[0]
        grad = np.zeros(self.h)
        for i, L in enumerate(self._chols):
            grad += resp[i] * cho_solve((L, True), zz - self.means[i])
        if self.log_transform:
            grad = grad / z  # chain rule through the log transform
        return grad

    # -- persistence --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": self.FORMAT_VERSION,
            "k": self.k_components,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.reshape(self.k_components, -1).tolist(),
            "reg": self.reg,
            "log_transform": self.log_transform,
        }

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianMixture":
        if d.get("format_version") != cls.FORMAT_VERSION:
            raise ConfigError("unsupported mixture format version")
        k = d["k"]
        covs = np.asarray(d["covariances"], dtype=np.float64)
        h = int(round(np.sqrt(covs.shape[1])))
        return cls(d["weights"], d["means"], covs.reshape(k, h, h),
                   reg=d.get("reg", 0.0), log_transform=d.get("log_transform", False))

    @classmethod
    def load(cls, path) -> "GaussianMixture":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator,
                    n_iter: int = 10) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    for _ in range(k - 1):
        d2 = np.min([((x - c) ** 2).sum(axis=1) for c in centers], axis=0)
        total = d2.sum()
        if total <= 0:
            centers.append(x[rng.integers(n)])
            continue
        centers.append(x[rng.choice(n, p=d2 / total)])
    centers = np.array(centers)
    for _ in range(n_iter):
        assign = np.argmin(((x[:, None, :] - centers[None]) ** 2).sum(axis=2), axis=1)
        for i in range(k):
            if np.any(assign == i):
                centers[i] = x[assign == i].mean(axis=0)
    return np.argmin(((x[:, None, :] - centers[None]) ** 2).sum(axis=2), axis=1)


def _moment_match(x, assign, k, reg, h):
    weights = np.empty(k)
    means = np.empty((k, h))
    covs = np.empty((k, h, h))
    for i in range(k):
        xi = x[assign == i]
        if xi.shape[0] == 0:
            return None
        weights[i] = xi.shape[0] / x.shape[0]
        means[i] = xi.mean(axis=0)
        d = xi - means[i]
        covs[i] = d.T @ d / xi.shape[0] + reg * np.eye(h)
    return weights, means, covs


def fit_em(features: FeatureMatrix, labels: LabelVector | None = None,
           k_components: int | None = None, cfg: EmConfig | None = None,
           return_history: bool = False):
    """Fit a full-covariance mixture with EM.

    When labels are present the default initialization moment-matches one
    component per class; otherwise k-means++ seeds the components. The total
    log-likelihood is non-decreasing across iterations (up to 1e-9 slack)
    and the fit is deterministic for a given seed. With ``return_history``
    the per-iteration log-likelihoods are returned alongside the mixture.
    """
    cfg = cfg or EmConfig()
    x = features.data
    if cfg.log_transform:
        if np.any(x <= 0):
            raise ConfigError("log transform requires strictly positive features")
        x = np.log(x)
    n, h = x.shape
    if k_components is None:
        k_components = labels.k if labels is not None else 1
    if k_components < 1:
        raise ConfigError("k_components must be >= 1")
    if n <= h * k_components:
        warnings.warn("few samples per component relative to dimension; "
                      "covariances may be poorly conditioned", stacklevel=2)

    rng = np.random.default_rng(cfg.seed)
    if labels is not None and cfg.init == "labels" and labels.k == k_components:
        assign = labels.labels
    else:
        assign = _kmeans_pp_init(x, k_components, rng)

    for attempt in range(4):
        params = _moment_match(x, assign, k_components, cfg.reg, h)
        if params is not None:
            break
        if attempt == 3:
            raise SingularModelError("empty component after 3 reinitializations")
        assign = _kmeans_pp_init(x, k_components, rng)
    weights, means, covs = params

    history = []
    prev_ll = -np.inf
    for _ in range(cfg.max_iter):
        gmm = GaussianMixture(weights, means, covs, reg=cfg.reg)
        log_joint = gmm.component_log_densities(x) + np.log(weights)
        m = log_joint.max(axis=1, keepdims=True)
        log_total = m + np.log(np.exp(log_joint - m).sum(axis=1, keepdims=True))
        ll = float(log_total.sum())
        history.append(ll)
        resp = np.exp(log_joint - log_total)

        if ll - prev_ll < cfg.rel_tol * abs(ll) and np.isfinite(prev_ll):
            break
        prev_ll = ll

        nk = resp.sum(axis=0)
        if np.any(nk <= 0):
            raise SingularModelError("component collapsed to zero responsibility")
        weights = nk / n
        means = (resp.T @ x) / nk[:, None]
        for i in range(k_components):
            d = x - means[i]
            covs[i] = (resp[:, i, None] * d).T @ d / nk[i] + cfg.reg * np.eye(h)

    fitted = GaussianMixture(weights, means, covs, reg=cfg.reg,
                             log_transform=cfg.log_transform)
    return (fitted, history) if return_history else fitted
