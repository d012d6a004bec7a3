"""Valid-OOD-region geometry.

Covers the empirical uncertainty threshold, the exact two-class slab
(solved through the Gaussian half-space mass equation), the general-K
union-of-slabs linear approximation fitted far from the origin, the
per-component density region, and a seeded Monte Carlo mass estimator used
as the oracle for all of them.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf
from scipy.stats import chi2

from .core import FeatureMatrix, SoftmaxHead, softmax_from_logits
from .errors import ConfigError, DimensionError, NumericalError
from .gmm import GaussianMixture

__all__ = [
    "RegionSpec",
    "SlabRegion",
    "LinearApproxRegion",
    "DensityRegion",
    "GaussianClassModel",
    "empirical_threshold",
    "solve_alpha_exact_k2",
    "fit_linear_region",
    "density_region",
    "mc_region_mass",
]

DEFAULT_MC_SAMPLES = 1_000_000
DEFAULT_MC_SEED = 20_240_601
FAR_FIELD_FACTOR = 1e3
SEPARABILITY_TAIL = 1e-4


@dataclass(frozen=True)
class RegionSpec:
    epsilon: float
    u_star: float
    estimator_id: str

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError("epsilon must lie in (0, 1)")
        if not np.isfinite(self.u_star):
            raise NumericalError("u_star must be finite")


def empirical_threshold(train_scores, epsilon: float) -> float:
    """(1 - epsilon)-quantile of the training scores, nearest-rank-higher.

    A point z belongs to the region iff U(z) > u_star, i.e. iff it scores
    more uncertain than at least a (1 - epsilon) fraction of training data.
    """
    scores = np.asarray(train_scores, dtype=np.float64)
    if scores.size == 0:
        raise ConfigError("empty score vector")
    if not 0.0 < epsilon < 1.0:
        raise ConfigError("epsilon must lie in (0, 1)")
    rank = max(1, int(np.ceil(scores.size * (1.0 - epsilon))))
    return float(np.sort(scores)[rank - 1])


@dataclass(frozen=True)
class GaussianClassModel:
    """Per-class Gaussians with priors; the analytic stand-in for p_in(z)."""

    means: np.ndarray
    covariances: np.ndarray
    priors: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        covs = np.asarray(self.covariances, dtype=np.float64)
        priors = np.asarray(self.priors, dtype=np.float64)
        if means.ndim != 2 or covs.shape != (means.shape[0],) + (means.shape[1],) * 2:
            raise DimensionError("means must be KxH, covariances KxHxH")
        if abs(priors.sum() - 1.0) > 1e-12 or np.any(priors < 0):
            raise ConfigError("priors must form a simplex vector")
        for c in covs:
            np.linalg.cholesky(c)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covs)
        object.__setattr__(self, "priors", priors)

    @property
    def k(self) -> int:
        return self.means.shape[0]

    @property
    def h(self) -> int:
        return self.means.shape[1]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        counts = rng.multinomial(n, self.priors)
        chunks = []
        for i, c in enumerate(counts):
            if c:
                chunks.append(rng.multivariate_normal(self.means[i], self.covariances[i],
                                                      size=c, method="cholesky"))
        out = np.concatenate(chunks, axis=0)
        return out[rng.permutation(n)]


@dataclass(frozen=True)
class SlabRegion:
    """Region between two parallel hyperplanes around a decision boundary.

    Membership: -alpha_lo * ||n||^2 < n . z - n . anchor < alpha_hi * ||n||^2
    with n the boundary normal (w_1 for K=2, or w_i - w_j).
    """

    normal: np.ndarray
    anchor: np.ndarray
    alpha_lo: float
    alpha_hi: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        a = np.asarray(self.anchor, dtype=np.float64)
        if np.linalg.norm(n) == 0.0:
            raise ConfigError("slab normal must be nonzero")
        if self.alpha_lo < 0 or self.alpha_hi < 0:
            raise ConfigError("slab offsets must be nonnegative")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "anchor", a)

    def contains(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        nsq = float(self.normal @ self.normal)
        g = z @ self.normal - float(self.normal @ self.anchor)
        return (-self.alpha_lo * nsq < g) & (g < self.alpha_hi * nsq)

    def to_dict(self) -> dict:
        return {"type": "slab", "normal": self.normal.tolist(),
                "anchor": self.anchor.tolist(),
                "alpha_lo": self.alpha_lo, "alpha_hi": self.alpha_hi}


def _gaussian_mass_outside_slab(model: GaussianClassModel, w: np.ndarray,
                                c_lo: float, c_hi: float) -> float:
    """Mass of the class mixture outside the slab c_lo < w.z < c_hi."""
    total = 0.0
    for i in range(model.k):
        m = float(w @ model.means[i])
        s = float(np.sqrt(w @ model.covariances[i] @ w))
        below = 0.5 * (1.0 + erf((c_lo - m) / (np.sqrt(2.0) * s)))
        above = 0.5 * (1.0 - erf((c_hi - m) / (np.sqrt(2.0) * s)))
        total += model.priors[i] * (below + above)
    return total


def check_linear_separability(model: GaussianClassModel, w: np.ndarray,
                              boundary_offset: float = 0.0) -> bool:
    """Each class keeps all but a negligible tail on its own side of the
    decision hyperplane w . z = boundary_offset.
    """
    ok = True
    for i in range(model.k):
        m = float(w @ model.means[i]) - boundary_offset
        s = float(np.sqrt(w @ model.covariances[i] @ w))
        tail = 0.5 * (1.0 - erf(abs(m) / (np.sqrt(2.0) * s)))
        ok &= tail < SEPARABILITY_TAIL
    return ok


def solve_alpha_exact_k2(model: GaussianClassModel, head: SoftmaxHead,
                         epsilon: float, tol: float = 1e-10,
                         max_doublings: int = 60) -> SlabRegion:
    """Exact two-class slab width.

    Requires w_1 = -w_2. Solves for alpha > 0 such that the class-Gaussian
    mass outside the slab |w_1 . (z - z_0)| < alpha ||w_1||^2 equals
    1 - epsilon, by bisection on the analytic half-space integrals.
    """
    if model.k != 2 or head.k != 2:
        raise ConfigError("exact slab solve is defined for two classes")
    if not 0.0 < epsilon < 1.0:
        raise ConfigError("epsilon must lie in (0, 1)")
    w1 = head.w[:, 0]
    if np.linalg.norm(head.w[:, 0] + head.w[:, 1]) > 1e-8 * max(1.0, np.linalg.norm(w1)):
        raise ConfigError("exact slab solve requires w_1 = -w_2")
    nsq = float(w1 @ w1)
    if nsq == 0.0:
        raise ConfigError("zero weight vector")
    # Decision boundary: w_1.z + b_1 = w_2.z + b_2  =>  w_1.z = (b_2-b_1)/2
    boundary = float(head.b[1] - head.b[0]) / 2.0
    if not check_linear_separability(model, w1, boundary):
        warnings.warn("class Gaussians are not linearly separable; "
                      "slab width is approximate", stacklevel=2)

    target = 1.0 - epsilon

    def out_mass(alpha: float) -> float:
        return _gaussian_mass_outside_slab(model, w1, boundary - alpha * nsq,
                                           boundary + alpha * nsq)

    lo, hi = 0.0, 1.0
    doublings = 0
    while out_mass(hi) > target:
        hi *= 2.0
        doublings += 1
        if doublings > max_doublings:
            raise NumericalError("no sign change while growing the bisection bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if out_mass(mid) > target:
            lo = mid
        else:
            hi = mid
    alpha = 0.5 * (lo + hi)
    anchor = w1 * (boundary / nsq)
    return SlabRegion(normal=w1, anchor=anchor, alpha_lo=alpha, alpha_hi=alpha)


@dataclass(frozen=True)
class LinearApproxRegion:
    """Union over class pairs of (slab around that pair's boundary)
    intersected with the two classes' argmax cells.
    """

    head: SoftmaxHead
    slabs: dict  # (i, j) with i < j -> SlabRegion
    u_star: float
    epsilon: float

    def contains(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        ell = z @ self.head.w + self.head.b
        argmax = np.argmax(ell, axis=1)
        inside = np.zeros(z.shape[0], dtype=bool)
        for (i, j), slab in self.slabs.items():
            cell = (argmax == i) | (argmax == j)
            inside |= cell & slab.contains(z)
        return inside

    def to_dict(self) -> dict:
        return {
            "type": "linear_approx",
            "u_star": self.u_star,
            "epsilon": self.epsilon,
            "slabs": [{"pair": [i, j], **slab.to_dict()}
                      for (i, j), slab in sorted(self.slabs.items())],
        }


def _u_max_values(head: SoftmaxHead, z: np.ndarray) -> np.ndarray:
    ell = np.atleast_2d(z) @ head.w + head.b
    return -softmax_from_logits(ell).max(axis=1)


def _solve_slab_offset(head, base, direction, u_star, side, max_doublings=60,
                       tol=1e-12):
    """Smallest t > 0 with u_max(base + side*t*direction) <= u_star.

    u_max decreases monotonically moving away from the boundary along the
    pair normal, so this is a bisection after geometric bracket growth.
    """
    def u_at(t):
        return float(_u_max_values(head, (base + side * t * direction)[None, :])[0])

    hi = 1.0
    doublings = 0
    while u_at(hi) > u_star:
        hi *= 2.0
        doublings += 1
        if doublings > max_doublings:
            raise NumericalError("u_max never crosses u_star along the pair normal")
    lo = 0.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if u_at(mid) > u_star:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fit_linear_region(head: SoftmaxHead, train_features: FeatureMatrix,
                      epsilon: float,
                      far_field_factor: float = FAR_FIELD_FACTOR) -> LinearApproxRegion:
    """Fit per-pair slab offsets so each slab matches the u_max = u_star
    contour far from the origin along the pair's boundary direction.
    """
    u_star = empirical_threshold(_u_max_values(head, train_features.data), epsilon)
    norms = head.column_norms()
    far = far_field_factor * float(norms.max())
    slabs = {}
    for i in range(head.k):
        for j in range(i + 1, head.k):
            n = head.w[:, i] - head.w[:, j]
            nsq = float(n @ n)
            if nsq <= 1e-24:
                raise ConfigError(f"degenerate class pair ({i}, {j}): w_i = w_j")
            # Boundary point: n.z + (b_i - b_j) = 0, nearest to origin.
            d = float(head.b[i] - head.b[j])
            z0 = -d / nsq * n
            # Far-field direction along the boundary, in the (w_i, w_j) plane.
            e = head.w[:, i] + head.w[:, j]
            e = e - (e @ n) / nsq * n
            e_norm = np.linalg.norm(e)
            base = z0 if e_norm < 1e-12 else z0 + far * (e / e_norm)
            t_hi = _solve_slab_offset(head, base, n, u_star, +1.0)
            t_lo = _solve_slab_offset(head, base, n, u_star, -1.0)
            slabs[(i, j)] = SlabRegion(normal=n, anchor=z0,
                                       alpha_lo=t_lo, alpha_hi=t_hi)
    return LinearApproxRegion(head=head, slabs=slabs, u_star=u_star, epsilon=epsilon)


@dataclass(frozen=True)
class DensityRegion:
    """Outside-every-cluster region: Mahalanobis^2 to component i exceeds
    c_i for ALL components.
    """

    gmm: GaussianMixture
    thresholds: np.ndarray
    epsilon: float

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=np.float64)
        if np.any(t <= 0):
            raise ConfigError("density-region thresholds must be positive")
        object.__setattr__(self, "thresholds", t)

    def contains(self, z: np.ndarray) -> np.ndarray:
        d2 = self.gmm.mahalanobis_sq(z)
        return np.all(d2 > self.thresholds, axis=1)

    def to_dict(self) -> dict:
        return {"type": "density", "epsilon": self.epsilon,
                "thresholds": self.thresholds.tolist()}


def density_region(gmm: GaussianMixture, epsilon: float) -> DensityRegion:
    """Per-component chi-square thresholds at level 1 - epsilon.

    This is a per-component proxy for the mixture-level epsilon mass
    condition; measure the discrepancy with mc_region_mass.
    """
    if not 0.0 < epsilon < 1.0:
        raise ConfigError("epsilon must lie in (0, 1)")
    c = chi2.ppf(1.0 - epsilon, df=gmm.h)
    return DensityRegion(gmm=gmm, thresholds=np.full(gmm.k_components, c),
                         epsilon=epsilon)


def mc_region_mass(contains, sampler, n: int = DEFAULT_MC_SAMPLES,
                   seed: int = DEFAULT_MC_SEED, batch: int = 100_000) -> float:
    """Monte Carlo estimate of the sampler's mass inside the region.

    ``contains`` maps an N x H batch to booleans; ``sampler`` is either a
    GaussianClassModel or any object with sample(n, rng). Deterministic for
    a given (seed, batch) pair.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < n:
        m = min(batch, n - done)
        pts = sampler.sample(m, rng)
        hits += int(np.count_nonzero(contains(pts)))
        done += m
    return hits / n


def region_to_json(region) -> str:
    return json.dumps(region.to_dict(), indent=1, sort_keys=True)
