"""Closed-form Gaussian(-mixture) algebra for geometric-mean density fusion.

The building blocks:

* ``kappa(w, P)`` -- the mass of an exponentiated Gaussian,
  integral of N(x; m, P)^w dx = [det(2 pi P / w)]^(1/2) / [det(2 pi P)]^(w/2),
  independent of the mean.
* ``gm_power`` -- per-component mixture exponentiation
  (sum_i a_i N_i)^w ~ sum_i a_i^w kappa(w, P_i) N(x; m_i, P_i / w),
  exact for a single Gaussian, a good approximation when components are
  well separated.
* ``gm_gci_fuse`` -- the normalized weighted geometric mean
  p1^w * p2^(1-w) / eta of two mixtures, with
  eta = integral of p1^w p2^(1-w) dx returned alongside.

All fused pair quantities are evaluated in log space; ``pair_fusion_grid``
batches the computation over every (component of a) x (component of b) pair
for whole track tables at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .rfs import GaussianComponent, GaussianMixture

__all__ = [
    "ETA_UNDERFLOW",
    "kappa",
    "log_kappa",
    "gm_power",
    "FusionResult",
    "gm_gci_fuse",
    "PairFusionGrid",
    "pair_fusion_grid",
]

# Below this mass the geometric mean is treated as empty (no overlap) rather
# than renormalized into garbage.
ETA_UNDERFLOW = 1e-300

_LOG_2PI = np.log(2.0 * np.pi)


def _check_spd_cholesky(P: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise ValidationError("covariance is not symmetric positive definite") from exc


def log_kappa(omega: float, covariance: np.ndarray) -> float:
    """log of the exponentiation constant kappa(omega, P)."""
    if not 0.0 < omega <= 1.0:
        raise ValidationError(f"omega must lie in (0, 1], got {omega}")
    P = np.atleast_2d(np.asarray(covariance, dtype=float))
    d = P.shape[0]
    chol = _check_spd_cholesky(P)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return 0.5 * (1.0 - omega) * (d * _LOG_2PI + logdet) - 0.5 * d * np.log(omega)


def kappa(omega: float, covariance: np.ndarray) -> float:
    """kappa(omega, P) = [det(2 pi P / omega)]^(1/2) / [det(2 pi P)]^(omega/2).

    Equals the integral of N(x; m, P)^omega over x, for any mean m.
    """
    return float(np.exp(log_kappa(omega, covariance)))


def gm_power(p: GaussianMixture, omega: float) -> GaussianMixture:
    """Component-wise mixture power p(x)^omega, deliberately unnormalized.

    Each (a, m, P) becomes (a^omega * kappa(omega, P), m, P / omega).
    """
    if omega <= 0.0:
        raise ValidationError(f"omega must be positive, got {omega}")
    if omega > 1.0:
        raise ValidationError(f"omega must lie in (0, 1], got {omega}")
    comps = tuple(
        GaussianComponent(
            c.weight**omega * kappa(omega, c.covariance), c.mean, c.covariance / omega
        )
        for c in p.components
    )
    return GaussianMixture(comps)


@dataclass(frozen=True, eq=False)
class FusionResult:
    """Outcome of fusing two spatial densities.

    ``eta`` is the overlap mass (zero when the inputs do not overlap within
    floating range, in which case ``fused`` is None); ``log_eta`` keeps the
    unclamped log mass for cost construction.
    """

    eta: float
    log_eta: float
    fused: GaussianMixture | None

    @property
    def empty(self) -> bool:
        return self.fused is None


def _padded_arrays(mixtures: Sequence[GaussianMixture]) -> tuple[np.ndarray, ...]:
    """Stack mixtures into (n, M_max, ...) arrays, padding with zero weights.

    Padding components get identity covariances so batched factorizations
    stay valid; their zero weight turns into -inf log mass downstream.
    """
    n = len(mixtures)
    counts = np.array([len(m.components) for m in mixtures], dtype=int)
    m_max = int(counts.max())
    d = mixtures[0].dim
    weights = np.zeros((n, m_max))
    means = np.zeros((n, m_max, d))
    covs = np.tile(np.eye(d), (n, m_max, 1, 1))
    for i, mix in enumerate(mixtures):
        for ci, c in enumerate(mix.components):
            weights[i, ci] = c.weight
            means[i, ci] = c.mean
            covs[i, ci] = c.covariance
    return weights, means, covs, counts


def _batch_log_kappa(omega: float, covs: np.ndarray) -> np.ndarray:
    d = covs.shape[-1]
    chol = np.linalg.cholesky(covs)
    logdet = 2.0 * np.log(np.einsum("...ii->...i", chol)).sum(axis=-1)
    return 0.5 * (1.0 - omega) * (d * _LOG_2PI + logdet) - 0.5 * d * np.log(omega)


class PairFusionGrid:
    """All pairwise geometric-mean fusions between two sets of mixtures.

    ``log_eta[i, j]`` is the log overlap mass of mixture i of side a with
    mixture j of side b; ``result(i, j)`` materializes the fused density.
    """

    def __init__(self, mixtures_a: Sequence[GaussianMixture], mixtures_b: Sequence[GaussianMixture], omega: float):
        if not 0.0 < omega < 1.0:
            raise ValidationError(f"fusion weight must lie strictly in (0, 1), got {omega}")
        self.omega = float(omega)
        self.n_a = len(mixtures_a)
        self.n_b = len(mixtures_b)
        self.log_eta = np.full((self.n_a, self.n_b), -np.inf)
        if self.n_a == 0 or self.n_b == 0:
            return
        wa, ma, pa, self._counts_a = _padded_arrays(mixtures_a)
        wb, mb, pb, self._counts_b = _padded_arrays(mixtures_b)
        if ma.shape[2] != mb.shape[2]:
            raise ValidationError("state dimensions differ between the two sides")
        w = self.omega
        d = ma.shape[2]
        inv_a = np.linalg.inv(pa)  # (na, Ma, d, d), SPD by construction
        inv_b = np.linalg.inv(pb)
        # Information-form combination for every component pair:
        # shapes broadcast to (na, Ma, nb, Mb, d, d).
        info = w * inv_a[:, :, None, None] + (1.0 - w) * inv_b[None, None, :, :]
        self._cov = np.linalg.inv(info)
        rhs = (
            w * np.einsum("amij,amj->ami", inv_a, ma)[:, :, None, None]
            + (1.0 - w) * np.einsum("bnij,bnj->bni", inv_b, mb)[None, None, :, :]
        )
        self._mean = np.einsum("ambnij,ambnj->ambni", self._cov, rhs)
        # log alpha: exponentiated weights, kappas, and the cross Gaussian
        # N(ma - mb; 0, Pa/w + Pb/(1-w)).
        spread = pa[:, :, None, None] / w + pb[None, None, :, :] / (1.0 - w)
        chol = np.linalg.cholesky(spread)
        diff = ma[:, :, None, None, :] - mb[None, None, :, :, :]
        z = np.linalg.solve(chol, diff[..., None])[..., 0]
        logdet = 2.0 * np.log(np.einsum("...ii->...i", chol)).sum(axis=-1)
        log_norm = -0.5 * ((z**2).sum(axis=-1) + logdet + d * _LOG_2PI)
        with np.errstate(divide="ignore"):
            self._log_alpha = (
                w * np.log(wa)[:, :, None, None]
                + (1.0 - w) * np.log(wb)[None, None, :, :]
                + _batch_log_kappa(w, pa)[:, :, None, None]
                + _batch_log_kappa(1.0 - w, pb)[None, None, :, :]
                + log_norm
            )
        peak = self._log_alpha.max(axis=(1, 3))
        finite = ~np.isneginf(peak)
        shifted = np.exp(
            self._log_alpha - np.where(finite, peak, 0.0)[:, None, :, None]
        ).sum(axis=(1, 3))
        with np.errstate(divide="ignore"):
            self.log_eta = np.where(finite, peak + np.log(shifted), -np.inf)

    def eta(self, i: int, j: int) -> float:
        return float(np.exp(self.log_eta[i, j]))

    def result(self, i: int, j: int) -> FusionResult:
        log_eta = self.log_eta[i, j]
        if not log_eta > np.log(ETA_UNDERFLOW):
            return FusionResult(eta=0.0, log_eta=float(log_eta), fused=None)
        ca, cb = self._counts_a[i], self._counts_b[j]
        weights = np.exp(self._log_alpha[i, :ca, j, :cb] - log_eta).ravel()
        means = self._mean[i, :ca, j, :cb].reshape(len(weights), -1)
        covs = self._cov[i, :ca, j, :cb].reshape(len(weights), means.shape[1], means.shape[1])
        comps = tuple(
            _trusted_component(wi, mi, Pi) for wi, mi, Pi in zip(weights, means, covs)
        )
        return FusionResult(eta=float(np.exp(log_eta)), log_eta=float(log_eta), fused=_trusted_mixture(comps))


def pair_fusion_grid(
    mixtures_a: Sequence[GaussianMixture],
    mixtures_b: Sequence[GaussianMixture],
    omega: float,
) -> PairFusionGrid:
    return PairFusionGrid(mixtures_a, mixtures_b, omega)


def gm_gci_fuse(p1: GaussianMixture, p2: GaussianMixture, omega: float) -> FusionResult:
    """Fuse two mixtures into p1^omega * p2^(1-omega) / eta.

    The fused mixture has one component per input component pair:
    P_ij = [w P_i^-1 + (1-w) P_j^-1]^-1, the matching information-filter
    mean, and weight a_ij from the exponentiated-pair mass; eta = sum a_ij.
    """
    return pair_fusion_grid([p1], [p2], omega).result(0, 0)


# Trusted constructors: inputs come from validated math in this module, so
# the SPD/shape checks in the public constructors are skipped.


def _trusted_component(weight: float, mean: np.ndarray, cov: np.ndarray) -> GaussianComponent:
    obj = object.__new__(GaussianComponent)
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    mean.setflags(write=False)
    cov.setflags(write=False)
    object.__setattr__(obj, "weight", float(weight))
    object.__setattr__(obj, "mean", mean)
    object.__setattr__(obj, "covariance", cov)
    return obj


def _trusted_mixture(components: tuple[GaussianComponent, ...]) -> GaussianMixture:
    obj = object.__new__(GaussianMixture)
    object.__setattr__(obj, "components", components)
    return obj
