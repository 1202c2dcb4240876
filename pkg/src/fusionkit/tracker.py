"""Gaussian-mixture LMB filter: prediction, ranked-assignment update, track extraction.

Supplies realistic per-agent posteriors for the fusion algorithms.  The
measurement update converts the predicted LMB plus the scan into a joint
existence/association problem: every track row chooses a measurement, a
missed detection, or non-existence, and the cheapest ``k_best`` joint events
(ranked with Murty's algorithm) are marginalized back into an LMB.  Tracks
are clustered by measurement gating first, so each assignment problem stays
small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

from .assignment import murty_k_best
from .errors import ValidationError
from .gaussians import _trusted_component, _trusted_mixture
from .rfs import (
    AgentLabel,
    BernoulliComponent,
    GaussianComponent,
    GaussianMixture,
    LabeledTrackSet,
    LmbDensity,
)

__all__ = [
    "MotionModel",
    "Region",
    "SensorModel",
    "BirthSite",
    "BirthModel",
    "TrackerConfig",
    "LmbFilter",
    "lmb_predict",
    "lmb_update",
    "reduce_mixture",
    "extract_tracks",
]

# Uniform clutter intensity is floored so that zero-clutter sensors still
# yield finite association costs (detections then dominate by ~e^60).
_MIN_CLUTTER_RATE = 1e-30
_EXISTENCE_CLIP = 1e-12


@dataclass(frozen=True, eq=False)
class MotionModel:
    """Linear-Gaussian target dynamics plus survival probability."""

    F: np.ndarray
    Q: np.ndarray
    survival: float

    def __post_init__(self):
        object.__setattr__(self, "F", np.asarray(self.F, dtype=float))
        object.__setattr__(self, "Q", np.asarray(self.Q, dtype=float))
        if not 0.0 < self.survival <= 1.0:
            raise ValidationError(f"survival must lie in (0, 1], got {self.survival}")
        if np.abs(self.Q - self.Q.T).max() > 1e-9 * (1 + np.linalg.norm(self.Q)):
            raise ValidationError("process noise must be symmetric")
        if np.linalg.eigvalsh(self.Q).min() < -1e-9 * (1 + np.linalg.norm(self.Q)):
            raise ValidationError("process noise must be positive semi-definite")

    @classmethod
    def constant_velocity(cls, T: float = 1.0, sigma_w: float = 10.0, survival: float = 0.9):
        """Nearly-constant-velocity model on [x, vx, y, vy] with period T."""
        F = np.array(
            [[1, T, 0, 0], [0, 1, 0, 0], [0, 0, 1, T], [0, 0, 0, 1]], dtype=float
        )
        G = np.array([[T**2 / 2, 0], [T, 0], [0, T**2 / 2], [0, T]], dtype=float)
        return cls(F=F, Q=G @ G.T * sigma_w**2, survival=survival)

    def noise_matrix(self, T: float = 1.0) -> np.ndarray:
        return np.array([[T**2 / 2, 0], [T, 0], [0, T**2 / 2], [0, T]], dtype=float)


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle supporting the uniform clutter distribution."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise ValidationError(f"degenerate region {self}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        low = [self.x_min, self.y_min]
        high = [self.x_max, self.y_max]
        return rng.uniform(low, high, size=(n, 2))


@dataclass(frozen=True, eq=False)
class SensorModel:
    """Linear position sensor with detection probability and Poisson clutter."""

    H: np.ndarray
    R: np.ndarray
    detection: float
    clutter_rate: float
    region: Region

    def __post_init__(self):
        object.__setattr__(self, "H", np.asarray(self.H, dtype=float))
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float))
        if not 0.0 < self.detection <= 1.0:
            raise ValidationError(f"detection must lie in (0, 1], got {self.detection}")
        if self.clutter_rate < 0:
            raise ValidationError(f"clutter rate must be >= 0, got {self.clutter_rate}")
        try:
            np.linalg.cholesky(self.R)
        except np.linalg.LinAlgError as exc:
            raise ValidationError("measurement noise must be SPD") from exc

    @classmethod
    def position_sensor(
        cls,
        sigma_x: float,
        sigma_y: float,
        detection: float,
        clutter_rate: float,
        region: Region,
    ):
        H = np.array([[1, 0, 0, 0], [0, 0, 1, 0]], dtype=float)
        R = np.diag([sigma_x**2, sigma_y**2]).astype(float)
        return cls(H=H, R=R, detection=detection, clutter_rate=clutter_rate, region=region)

    @property
    def clutter_density(self) -> float:
        return max(self.clutter_rate, _MIN_CLUTTER_RATE) / self.region.area


@dataclass(frozen=True, eq=False)
class BirthSite:
    """One birth location: existence prior, spatial prior, and label index."""

    existence: float
    density: GaussianMixture
    index: int

    def __post_init__(self):
        if not 0.0 < self.existence < 1.0:
            raise ValidationError(f"birth existence must lie in (0, 1), got {self.existence}")


@dataclass(frozen=True, eq=False)
class BirthModel:
    sites: tuple[BirthSite, ...]

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        idx = [s.index for s in self.sites]
        if len(set(idx)) != len(idx):
            raise ValidationError("birth site indices must be distinct")

    @classmethod
    def empty(cls) -> "BirthModel":
        return cls(sites=())


def lmb_predict(
    f: LmbDensity, motion: MotionModel, birth: BirthModel, time: int
) -> LmbDensity:
    """Survival-scaled prediction of every track plus fresh birth components.

    Births are labeled (time, site index); existing labels must not collide
    with them, i.e. call once per time step.
    """
    F, Q = motion.F, motion.Q
    out = []
    for c in f.components:
        comps = tuple(
            _trusted_component(g.weight, F @ g.mean, F @ g.covariance @ F.T + Q)
            for g in c.density.components
        )
        out.append(
            BernoulliComponent(c.label, motion.survival * c.existence, _trusted_mixture(comps))
        )
    for site in birth.sites:
        out.append(BernoulliComponent(AgentLabel(time, site.index), site.existence, site.density))
    return LmbDensity(tuple(out))


def reduce_mixture(
    p: GaussianMixture,
    prune_threshold: float,
    merge_threshold: float,
    max_components: int,
) -> GaussianMixture:
    """Prune light components, merge close ones, cap the component count.

    Components below ``prune_threshold`` are dropped (the heaviest one is
    kept if that would empty the mixture).  Survivors are merged greedily
    around the heaviest component: everything within squared Mahalanobis
    distance ``merge_threshold`` of it is moment-matched into one Gaussian.
    The result is renormalized to unit mass only when mass was dropped, so
    a pure merge preserves mean and total weight exactly.
    """
    if prune_threshold <= 0 or merge_threshold <= 0 or max_components < 1:
        raise ValidationError("reduction thresholds must be positive")
    w = np.array([c.weight for c in p.components])
    keep = w >= prune_threshold
    dropped_mass = not bool(keep.all())
    if not keep.any():
        keep = np.zeros_like(keep)
        keep[np.argmax(w)] = True
    comps = [c for c, k in zip(p.components, keep) if k]

    merged: list[GaussianComponent] = []
    while comps:
        i = int(np.argmax([c.weight for c in comps]))
        pivot = comps[i]
        inv = np.linalg.inv(pivot.covariance)
        cluster, rest = [], []
        for c in comps:
            d = c.mean - pivot.mean
            (cluster if d @ inv @ d < merge_threshold else rest).append(c)
        weight = sum(c.weight for c in cluster)
        mean = sum(c.weight * c.mean for c in cluster) / weight
        cov = np.zeros_like(pivot.covariance)
        for c in cluster:
            d = c.mean - mean
            cov += c.weight * (c.covariance + np.outer(d, d))
        merged.append(_trusted_component(weight, mean, cov / weight))
        comps = rest

    merged.sort(key=lambda c: -c.weight)
    if len(merged) > max_components:
        merged = merged[:max_components]
        dropped_mass = True
    if dropped_mass:
        total = sum(c.weight for c in merged)
        merged = [_trusted_component(c.weight / total, c.mean, c.covariance) for c in merged]
    return _trusted_mixture(tuple(merged))


def extract_tracks(f: LmbDensity, threshold: float = 0.5) -> LabeledTrackSet:
    """Point estimates of tracks with existence strictly above the threshold.

    The state is the mean of the heaviest mixture component; the identity is
    the component's label.
    """
    if not 0.0 < threshold < 1.0:
        raise ValidationError(f"threshold must lie in (0, 1), got {threshold}")
    entries = []
    for c in f.components:
        if c.existence > threshold:
            heaviest = max(c.density.components, key=lambda g: g.weight)
            entries.append((heaviest.mean, c.label))
    return LabeledTrackSet(tuple(entries))


# ---------------------------------------------------------------------------
# Measurement update
# ---------------------------------------------------------------------------


class _TrackLikelihood:
    """Per-track Kalman quantities against a full scan."""

    def __init__(self, comp: BernoulliComponent, Z: np.ndarray, sensor: SensorModel):
        self.prior = comp
        mix = comp.density
        H, R = sensor.H, sensor.R
        m = Z.shape[0]
        n_c = len(mix.components)
        with np.errstate(divide="ignore"):
            self.log_w = np.log(np.array([g.weight for g in mix.components]))
        self.log_lik = np.full((n_c, m), -np.inf)  # log N(z; Hm, S) per comp/meas
        self.maha = np.full((n_c, m), np.inf)
        self.upd_mean = np.zeros((n_c, m, mix.dim))
        self.upd_cov = np.zeros((n_c, mix.dim, mix.dim))
        for ci, g in enumerate(mix.components):
            S = H @ g.covariance @ H.T + R
            chol = np.linalg.cholesky(S)
            K = g.covariance @ H.T @ np.linalg.inv(S)
            nu = Z - (H @ g.mean)[None, :]
            z = np.linalg.solve(chol, nu.T).T
            maha = (z**2).sum(axis=1)
            logdet = 2.0 * np.log(np.diag(chol)).sum()
            self.maha[ci] = maha
            self.log_lik[ci] = -0.5 * (maha + logdet + 2.0 * math.log(2 * math.pi))
            self.upd_mean[ci] = g.mean[None, :] + nu @ K.T
            self.upd_cov[ci] = (np.eye(mix.dim) - K @ H) @ g.covariance
        # predictive log-likelihood q(z) of each measurement under the mixture
        self.log_q = logsumexp(self.log_w[:, None] + self.log_lik, axis=0)

    def gated(self, gate_chi2: float) -> np.ndarray:
        return (self.maha < gate_chi2).any(axis=0)

    def updated_mixture(self, j: int) -> GaussianMixture:
        """Posterior mixture given association with measurement j."""
        logw = self.log_w + self.log_lik[:, j] - self.log_q[j]
        comps = tuple(
            _trusted_component(np.exp(lw), mu, cov)
            for lw, mu, cov in zip(logw, self.upd_mean[:, j], self.upd_cov)
        )
        return _trusted_mixture(comps)


def _group_tracks(gate_matrix: np.ndarray) -> list[tuple[list[int], list[int]]]:
    """Connected components of tracks linked through shared gated measurements."""
    n, m = gate_matrix.shape
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for j in range(m):
        rows = np.nonzero(gate_matrix[:, j])[0]
        for r in rows[1:]:
            parent[find(r)] = find(rows[0])
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    out = []
    for tracks in groups.values():
        meas = np.nonzero(gate_matrix[tracks].any(axis=0))[0].tolist()
        out.append((tracks, meas))
    out.sort(key=lambda g: g[0][0])
    return out


def lmb_update(
    f: LmbDensity,
    Z: Iterable[Sequence[float]] | np.ndarray,
    sensor: SensorModel,
    *,
    k_best: int = 100,
    prune_component: float = 1e-5,
    merge_threshold: float = 4.0,
    max_components: int = 20,
    gate_chi2: float = 18.42,
) -> LmbDensity:
    """Bayes update of the predicted LMB against one measurement scan.

    Joint events assign each track in a gating cluster to a measurement, a
    missed detection, or non-existence; the ``k_best`` cheapest events are
    found by ranked assignment and marginalized per track.  Measurements
    gated by no track act as pure clutter and drop out of the weights.
    """
    Z = np.asarray(list(Z) if not isinstance(Z, np.ndarray) else Z, dtype=float).reshape(-1, 2)
    if len(f) == 0:
        return f
    tracks = [_TrackLikelihood(c, Z, sensor) for c in f.components]
    gate = np.array([t.gated(gate_chi2) for t in tracks]).reshape(len(tracks), Z.shape[0])
    log_kappa_c = math.log(sensor.clutter_density)
    log_pd = math.log(sensor.detection)
    log_qd = math.log1p(-sensor.detection) if sensor.detection < 1.0 else -np.inf

    posterior: dict[int, BernoulliComponent] = {}
    for track_ids, meas_ids in _group_tracks(gate):
        n_g, m_g = len(track_ids), len(meas_ids)
        r = np.clip(
            [tracks[t].prior.existence for t in track_ids], _EXISTENCE_CLIP, 1 - _EXISTENCE_CLIP
        )
        cost = np.full((n_g, m_g + 2 * n_g), np.inf)
        for a, t in enumerate(track_ids):
            cost[a, :m_g] = -(
                np.log(r[a]) + log_pd + tracks[t].log_q[meas_ids] - log_kappa_c
            )
            cost[a, m_g + a] = -(np.log(r[a]) + log_qd)
            cost[a, m_g + n_g + a] = -np.log1p(-r[a])
        events = murty_k_best(cost, k_best)
        log_w = np.array([-e.cost for e in events])
        w_events = np.exp(log_w - logsumexp(log_w))

        for a, t in enumerate(track_ids):
            exist_mass = 0.0
            assoc_mass: dict[int, float] = {}  # measurement index (or -1 for miss)
            for e, w_e in zip(events, w_events):
                col = e.column_of(a)
                if col >= m_g + n_g:
                    continue
                exist_mass += w_e
                key = meas_ids[col] if col < m_g else -1
                assoc_mass[key] = assoc_mass.get(key, 0.0) + w_e
            if exist_mass <= 0.0:
                posterior[t] = BernoulliComponent(
                    tracks[t].prior.label, 0.0, tracks[t].prior.density
                )
                continue
            comps: list[GaussianComponent] = []
            for key, mass in sorted(assoc_mass.items()):
                mix = (
                    tracks[t].prior.density if key == -1 else tracks[t].updated_mixture(key)
                )
                share = mass / exist_mass
                comps.extend(
                    _trusted_component(share * g.weight, g.mean, g.covariance)
                    for g in mix.components
                )
            density = reduce_mixture(
                _trusted_mixture(tuple(comps)), prune_component, merge_threshold, max_components
            )
            posterior[t] = BernoulliComponent(
                tracks[t].prior.label, min(float(exist_mass), 1.0), density
            )
    return LmbDensity(tuple(posterior[i] for i in range(len(tracks))))


@dataclass
class TrackerConfig:
    """Defaults for a full predict/update/prune cycle."""

    k_best: int = 100
    prune_component: float = 1e-5
    merge_threshold: float = 4.0
    max_components: int = 20
    prune_track: float = 1e-4
    extract_threshold: float = 0.5
    gate_chi2: float = 18.42


@dataclass
class LmbFilter:
    """Single-agent GM-LMB filter owning its posterior across time steps."""

    motion: MotionModel
    sensor: SensorModel
    birth: BirthModel
    config: TrackerConfig = field(default_factory=TrackerConfig)
    density: LmbDensity = field(default_factory=lambda: LmbDensity(()))

    def step(self, measurements, time: int) -> LmbDensity:
        cfg = self.config
        predicted = lmb_predict(self.density, self.motion, self.birth, time)
        updated = lmb_update(
            predicted,
            measurements,
            self.sensor,
            k_best=cfg.k_best,
            prune_component=cfg.prune_component,
            merge_threshold=cfg.merge_threshold,
            max_components=cfg.max_components,
            gate_chi2=cfg.gate_chi2,
        )
        self.density = LmbDensity(
            tuple(c for c in updated.components if c.existence >= cfg.prune_track)
        )
        return self.density

    def extract(self) -> LabeledTrackSet:
        return extract_tracks(self.density, self.config.extract_threshold)
