"""Core labeled-RFS types: labels, Gaussian mixtures, LMB and joint-label GLMB densities.

Labels identify tracks: a track born at time step ``k`` as the ``i``-th
simultaneous birth carries the label ``(k, i)``.  When two agents each
maintain their own label space, a joint label is one label per agent,
encoding both the identities and the cross-agent association.

All types are immutable after construction and safe to share across
threads.  Agent indices are 1-based throughout (agent 1 ... agent S).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Mapping, NamedTuple, Sequence, Union

import numpy as np

from .errors import InconsistencyError, ValidationError

__all__ = [
    "AgentLabel",
    "JointLabel",
    "Label",
    "GaussianComponent",
    "GaussianMixture",
    "BernoulliComponent",
    "LmbDensity",
    "JlGlmbDensity",
    "LabeledTrackSet",
    "project_labels",
    "distinct_label_indicator",
    "marginalize_joint_label",
]

_SYM_RTOL = 1e-9
_WEIGHT_TOL = 1e-9


class AgentLabel(NamedTuple):
    """Track label within one agent's label space: (birth time, birth index)."""

    birth_time: int
    birth_index: int

    def validate(self) -> "AgentLabel":
        if self.birth_time < 0 or self.birth_index < 0:
            raise ValidationError(f"label fields must be non-negative, got {self}")
        return self


@dataclass(frozen=True)
class JointLabel:
    """One AgentLabel per agent, ordered by agent index (agent 1 first).

    An element of the direct-product label space of all agents; it names a
    single fused track together with the cross-agent label association.
    """

    per_agent: tuple[AgentLabel, ...]

    def __init__(self, per_agent: Iterable[AgentLabel]):
        labels = tuple(AgentLabel(*lbl) for lbl in per_agent)
        if len(labels) < 2:
            raise ValidationError(f"joint label needs >= 2 agents, got {len(labels)}")
        object.__setattr__(self, "per_agent", labels)

    def agent(self, agent_index: int) -> AgentLabel:
        """Label of the given agent (1-based index)."""
        if not 1 <= agent_index <= len(self.per_agent):
            raise IndexError(f"agent_index {agent_index} out of range 1..{len(self.per_agent)}")
        return self.per_agent[agent_index - 1]

    def __len__(self) -> int:
        return len(self.per_agent)

    def __iter__(self):
        return iter(self.per_agent)


Label = Union[AgentLabel, JointLabel]


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    """Weighted Gaussian over the single-target state [x, vx, y, vy]."""

    weight: float
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _readonly(np.atleast_1d(self.mean)))
        object.__setattr__(self, "covariance", _readonly(np.atleast_2d(self.covariance)))
        if self.weight < 0 or not np.isfinite(self.weight):
            raise ValidationError(f"component weight must be finite and >= 0, got {self.weight}")
        d = self.mean.shape[0]
        if self.covariance.shape != (d, d):
            raise ValidationError(
                f"covariance shape {self.covariance.shape} does not match state dim {d}"
            )
        scale = np.linalg.norm(self.covariance)
        if scale == 0.0:
            raise ValidationError("covariance is zero")
        asym = np.abs(self.covariance - self.covariance.T).max()
        if asym > _SYM_RTOL * scale:
            raise ValidationError(f"covariance not symmetric: max asymmetry {asym:.3e}")
        eigvals = np.linalg.eigvalsh(self.covariance)
        if eigvals.min() <= 0:
            raise ValidationError(f"covariance not positive definite: min eig {eigvals.min():.3e}")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Weighted sum of Gaussians; normalized to weight 1 when used as a spatial density."""

    components: tuple[GaussianComponent, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ValidationError("mixture must have at least one component")
        dims = {c.dim for c in comps}
        if len(dims) != 1:
            raise ValidationError(f"mixed state dimensions {dims}")

    @classmethod
    def single(cls, mean, covariance, weight: float = 1.0) -> "GaussianMixture":
        return cls((GaussianComponent(weight, mean, covariance),))

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    def total_weight(self) -> float:
        return float(sum(c.weight for c in self.components))

    def is_normalized(self, tol: float = _WEIGHT_TOL) -> bool:
        return abs(self.total_weight() - 1.0) <= tol

    def normalized(self) -> "GaussianMixture":
        total = self.total_weight()
        if total <= 0:
            raise ValidationError("cannot normalize a zero-mass mixture")
        return GaussianMixture(
            tuple(GaussianComponent(c.weight / total, c.mean, c.covariance) for c in self.components)
        )

    def mean(self) -> np.ndarray:
        w = self.weights / self.total_weight()
        return sum(wi * c.mean for wi, c in zip(w, self.components))

    def covariance(self) -> np.ndarray:
        """Covariance of the mixture (moment-matched single Gaussian)."""
        w = self.weights / self.total_weight()
        m = self.mean()
        cov = np.zeros((self.dim, self.dim))
        for wi, c in zip(w, self.components):
            d = c.mean - m
            cov += wi * (c.covariance + np.outer(d, d))
        return cov

    def pdf(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        val = 0.0
        for c in self.components:
            d = x - c.mean
            chol = np.linalg.cholesky(c.covariance)
            z = np.linalg.solve(chol, d)
            logdet = 2.0 * np.log(np.diag(chol)).sum()
            val += c.weight * np.exp(-0.5 * (z @ z + logdet + c.dim * np.log(2 * np.pi)))
        return float(val)


@dataclass(frozen=True, eq=False)
class BernoulliComponent:
    """One potential track: existence probability r and spatial density p(x)."""

    label: Label
    existence: float
    density: GaussianMixture

    def __post_init__(self):
        if not 0.0 <= self.existence <= 1.0:
            raise ValidationError(f"existence must lie in [0, 1], got {self.existence}")
        if not self.density.is_normalized():
            raise ValidationError(
                f"spatial density must be normalized, total weight {self.density.total_weight()!r}"
            )


@dataclass(frozen=True, eq=False)
class LmbDensity:
    """Labeled multi-Bernoulli density: Bernoulli components with distinct labels."""

    components: tuple[BernoulliComponent, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        labels = [c.label for c in comps]
        if len(set(labels)) != len(labels):
            raise ValidationError("LMB labels must be pairwise distinct")

    def labels(self) -> tuple[Label, ...]:
        return tuple(c.label for c in self.components)

    def existence_map(self) -> dict[Label, float]:
        return {c.label: c.existence for c in self.components}

    def get(self, label: Label) -> BernoulliComponent | None:
        for c in self.components:
            if c.label == label:
                return c
        return None

    def __len__(self) -> int:
        return len(self.components)


@dataclass(frozen=True, eq=False)
class JlGlmbDensity:
    """Fused density over the joint label space: ranked label-set hypotheses.

    ``hypotheses`` holds (label set, normalized weight) pairs; ``spatial``
    maps each joint label to its fused spatial density.  Within every
    hypothesis the per-agent projections must be duplicate-free.
    """

    hypotheses: tuple[tuple[frozenset[JointLabel], float], ...]
    spatial: Mapping[JointLabel, GaussianMixture]

    def __post_init__(self):
        hyps = tuple((frozenset(ls), float(w)) for ls, w in self.hypotheses)
        object.__setattr__(self, "hypotheses", hyps)
        object.__setattr__(self, "spatial", dict(self.spatial))
        if not hyps:
            raise ValidationError("need at least one hypothesis")
        total = sum(w for _, w in hyps)
        if abs(total - 1.0) > _WEIGHT_TOL:
            raise ValidationError(f"hypothesis weights must sum to 1, got {total!r}")
        if any(w <= 0 for _, w in hyps):
            raise ValidationError("hypothesis weights must be positive")
        for label_set, _ in hyps:
            if not _joint_labels_distinct(label_set, mode="per_agent"):
                raise ValidationError(
                    f"hypothesis {sorted(map(tuple, label_set))} repeats a per-agent label"
                )
        for label_set, _ in hyps:
            for lbl in label_set:
                if lbl not in self.spatial:
                    raise ValidationError(f"no spatial density for joint label {lbl}")

    def joint_existence(self) -> dict[JointLabel, float]:
        """r(l) = sum of hypothesis weights containing the joint label l."""
        out: dict[JointLabel, float] = {}
        for label_set, w in self.hypotheses:
            for lbl in label_set:
                out[lbl] = out.get(lbl, 0.0) + w
        return out


@dataclass(frozen=True, eq=False)
class LabeledTrackSet:
    """Point estimates with identities at one time step (truth or extraction)."""

    entries: tuple[tuple[np.ndarray, Any], ...]

    def __post_init__(self):
        entries = tuple((_readonly(np.atleast_1d(s)), ident) for s, ident in self.entries)
        object.__setattr__(self, "entries", entries)
        ids = [ident for _, ident in entries]
        if len(set(ids)) != len(ids):
            raise ValidationError("track identities must be distinct within one step")

    @property
    def states(self) -> list[np.ndarray]:
        return [s for s, _ in self.entries]

    @property
    def identities(self) -> list[Any]:
        return [i for _, i in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


# ---------------------------------------------------------------------------
# Label-set algebra
# ---------------------------------------------------------------------------


def project_labels(
    X: Iterable[tuple[Any, JointLabel]], agent_index: int
) -> tuple[tuple[Any, AgentLabel], ...]:
    """Project joint-labeled states onto one agent's labeled state space.

    Returns a multiset (tuple): repeated projected labels are preserved so
    that downstream distinct-label checks can detect them.
    """
    items = tuple(X)
    if items:
        n_agents = len(items[0][1])
        if not 1 <= agent_index <= n_agents:
            raise IndexError(f"agent_index {agent_index} out of range 1..{n_agents}")
    elif agent_index < 1:
        raise IndexError(f"agent_index {agent_index} out of range")
    return tuple((state, lbl.agent(agent_index)) for state, lbl in items)


def _joint_labels_distinct(labels: Iterable[JointLabel], mode: str) -> bool:
    labels = list(labels)
    if mode == "joint":
        return len({tuple(l.per_agent) for l in labels}) == len(labels)
    if mode == "per_agent":
        if not labels:
            return True
        for i in range(1, len(labels[0]) + 1):
            proj = [l.agent(i) for l in labels]
            if len(set(proj)) != len(proj):
                return False
        return True
    raise ValidationError(f"unknown mode {mode!r}, expected 'joint' or 'per_agent'")


def distinct_label_indicator(X: Iterable[tuple[Any, JointLabel]], mode: str = "joint") -> bool:
    """Distinct-label indicator over joint labels.

    ``joint`` mode: all joint labels pairwise distinct as tuples (some agent
    differs).  ``per_agent`` mode: the stricter condition that every agent's
    projected labels are pairwise distinct (all agents differ).
    """
    return _joint_labels_distinct((lbl for _, lbl in X), mode)


def marginalize_joint_label(
    r_joint: Mapping[JointLabel, float], target_agent: int
) -> dict[AgentLabel, float]:
    """Collapse joint-label existence mass onto one agent's labels.

    r(l) = sum of r over joint labels projecting to l.  A raw sum above
    1 + 1e-6 signals non-exclusive hypotheses upstream and raises; sums
    within that slack are clamped into [0, 1].
    """
    for lbl, r in r_joint.items():
        if not 0.0 <= r <= 1.0:
            raise ValidationError(f"existence {r!r} for {lbl} outside [0, 1]")
    out: dict[AgentLabel, float] = {}
    for lbl, r in r_joint.items():
        key = lbl.agent(target_agent)
        out[key] = out.get(key, 0.0) + r
    for key, total in out.items():
        if total > 1.0 + 1e-6:
            raise InconsistencyError(
                f"marginal existence for {key} sums to {total!r} > 1; "
                "joint hypotheses are not mutually exclusive"
            )
        out[key] = min(max(total, 0.0), 1.0)
    return out
