"""Track-to-track fusion of two labeled multi-Bernoulli densities.

Four methods, all returning a fused LMB:

* ``labelwise_gci``  -- fuse components that share a label value; the
  baseline that silently breaks when the agents' label spaces disagree.
* ``lm_gci``         -- first match labels across agents (Hungarian on a
  matching cost built from existence and overlap), then fuse label-wise.
* ``jl_gci``         -- fuse over the joint label space: rank label-set
  hypotheses with Murty's algorithm, normalize, and keep the ranked
  hypothesis density alongside its LMB approximation.
* ``simplified_jl_gci`` -- closed form per joint-label pair, valid when
  targets are well separated (and surprisingly usable when they are not).

``label_inconsistency`` quantifies how much two densities disagree about
which label belongs to which target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

from .assignment import murty_k_best, hungarian
from .errors import ValidationError
from .gaussians import PairFusionGrid, gm_gci_fuse, pair_fusion_grid
from .rfs import (
    AgentLabel,
    BernoulliComponent,
    GaussianMixture,
    JlGlmbDensity,
    JointLabel,
    LmbDensity,
    marginalize_joint_label,
)

__all__ = [
    "FusionWeights",
    "FusionConfig",
    "labelwise_gci",
    "lm_gci",
    "jl_gci",
    "simplified_jl_gci",
    "label_inconsistency",
    "marginalize_lmb",
    "pairwise_eta",
]


@dataclass(frozen=True)
class FusionWeights:
    """Normalized averaging weights of the two agents."""

    omega_a: float
    omega_b: float

    def __post_init__(self):
        if self.omega_a < 0 or self.omega_b < 0:
            raise ValidationError(f"weights must be non-negative, got {self}")
        if abs(self.omega_a + self.omega_b - 1.0) > 1e-12:
            raise ValidationError(f"weights must sum to 1, got {self}")

    @classmethod
    def equal(cls) -> "FusionWeights":
        return cls(0.5, 0.5)

    def swapped(self) -> "FusionWeights":
        return FusionWeights(self.omega_b, self.omega_a)


@dataclass(frozen=True)
class FusionConfig:
    """Knobs of the joint-label methods.

    ``k_best``: Murty truncation depth.  ``eta_floor``: overlap mass below
    which a pairing is treated as impossible.  ``existence_epsilon``: r is
    clamped to [eps, 1-eps] inside log-cost terms so costs stay finite.
    """

    k_best: int = 100
    eta_floor: float = 1e-12
    existence_epsilon: float = 1e-6

    def __post_init__(self):
        if self.k_best < 1:
            raise ValidationError(f"k_best must be >= 1, got {self.k_best}")
        if self.eta_floor < 0:
            raise ValidationError(f"eta_floor must be >= 0, got {self.eta_floor}")
        if not 0.0 < self.existence_epsilon < 1.0:
            raise ValidationError(
                f"existence_epsilon must lie in (0, 1), got {self.existence_epsilon}"
            )


def _fused_existence(r_a: float, r_b: float, eta: float, w: FusionWeights) -> float:
    """r = eta r_a^wa r_b^wb / [(1-r_a)^wa (1-r_b)^wb + eta r_a^wa r_b^wb]."""
    num = eta * r_a**w.omega_a * r_b**w.omega_b
    if num <= 0.0:
        return 0.0
    den = (1.0 - r_a) ** w.omega_a * (1.0 - r_b) ** w.omega_b + num
    return min(num / den, 1.0)


def labelwise_gci(fa: LmbDensity, fb: LmbDensity, w: FusionWeights) -> LmbDensity:
    """Fuse components sharing the same label value; unshared labels get r = 0."""
    map_b = {c.label: c for c in fb.components}
    seen = set()
    out = []
    for ca in fa.components:
        cb = map_b.get(ca.label)
        seen.add(ca.label)
        if cb is None:
            out.append(BernoulliComponent(ca.label, 0.0, ca.density))
            continue
        res = gm_gci_fuse(ca.density, cb.density, w.omega_a)
        r = _fused_existence(ca.existence, cb.existence, res.eta, w)
        density = ca.density if res.empty else res.fused
        out.append(BernoulliComponent(ca.label, r, density))
    for cb in fb.components:
        if cb.label not in seen:
            out.append(BernoulliComponent(cb.label, 0.0, cb.density))
    return LmbDensity(tuple(out))


def _clamped(r: np.ndarray, eps: float) -> np.ndarray:
    return np.clip(r, eps, 1.0 - eps)


def _lm_cost_matrix(
    fa: LmbDensity, fb: LmbDensity, w: FusionWeights, grid: PairFusionGrid, eps: float
) -> np.ndarray:
    """|Psi_a| x |Psi_a| matching cost; columns beyond |Psi_b| are auxiliary."""
    n_a, n_b = len(fa), len(fb)
    ra = _clamped(np.array([c.existence for c in fa.components]), eps)
    rb = _clamped(np.array([c.existence for c in fb.components]), eps)
    cost = np.empty((n_a, n_a))
    overlap = np.exp(grid.log_eta)  # c_{l,l'}
    matched = (1.0 - ra[:, None]) ** w.omega_a * (1.0 - rb[None, :]) ** w.omega_b + (
        ra[:, None] ** w.omega_a
    ) * (rb[None, :] ** w.omega_b) * overlap
    cost[:, :n_b] = -np.log(matched)
    cost[:, n_b:] = np.repeat(-w.omega_a * np.log(1.0 - ra)[:, None], n_a - n_b, axis=1)
    return cost


def lm_gci(
    fa: LmbDensity,
    fb: LmbDensity,
    w: FusionWeights,
    cfg: FusionConfig = FusionConfig(),
) -> tuple[LmbDensity, dict[AgentLabel, AgentLabel]]:
    """Label-matching fusion: optimal bijection first, label-wise fusion second.

    The fused density lives on the label space of the larger support (roles
    are swapped internally when agent b has more components).  The returned
    matching always maps agent-a labels to agent-b labels.
    """
    if len(fa) < len(fb):
        fused, matching = lm_gci(fb, fa, w.swapped(), cfg)
        return fused, {v: k for k, v in matching.items()}
    if len(fb) == 0:
        fused = LmbDensity(
            tuple(BernoulliComponent(c.label, 0.0, c.density) for c in fa.components)
        )
        return fused, {}
    grid = pair_fusion_grid(
        [c.density for c in fa.components], [c.density for c in fb.components], w.omega_a
    )
    cost = _lm_cost_matrix(fa, fb, w, grid, cfg.existence_epsilon)
    assign = hungarian(cost)
    n_b = len(fb)
    matching = {
        fa.components[i].label: fb.components[j].label for i, j in assign.pairs if j < n_b
    }
    relabeled = LmbDensity(
        tuple(
            BernoulliComponent(a_label, fb.get(b_label).existence, fb.get(b_label).density)
            for a_label, b_label in matching.items()
        )
    )
    return labelwise_gci(fa, relabeled, w), matching


def _pairing_costs(
    fa: LmbDensity,
    fb: LmbDensity,
    w: FusionWeights,
    cfg: FusionConfig,
    grid: PairFusionGrid,
    allowed_pairs: set[tuple[AgentLabel, AgentLabel]] | None,
) -> np.ndarray:
    """C1: per-pair costs -log g(i, j), +inf where pairing is impossible."""
    eps = cfg.existence_epsilon
    ra = _clamped(np.array([c.existence for c in fa.components]), eps)
    rb = _clamped(np.array([c.existence for c in fb.components]), eps)
    log_g = (
        grid.log_eta
        + w.omega_a * (np.log(ra) - np.log1p(-ra))[:, None]
        + w.omega_b * (np.log(rb) - np.log1p(-rb))[None, :]
    )
    c1 = -log_g
    log_floor = math.log(cfg.eta_floor) if cfg.eta_floor > 0 else -np.inf
    c1[grid.log_eta < log_floor] = np.inf
    c1[np.isneginf(grid.log_eta)] = np.inf
    if allowed_pairs is not None:
        for i, ca in enumerate(fa.components):
            for j, cb in enumerate(fb.components):
                if (ca.label, cb.label) not in allowed_pairs:
                    c1[i, j] = np.inf
    return c1


def jl_gci(
    fa: LmbDensity,
    fb: LmbDensity,
    w: FusionWeights,
    cfg: FusionConfig = FusionConfig(),
    *,
    allowed_pairs: Iterable[tuple[AgentLabel, AgentLabel]] | None = None,
    grid: PairFusionGrid | None = None,
) -> tuple[LmbDensity, JlGlmbDensity]:
    """Joint-label GCI fusion via ranked assignment.

    Builds the pairing cost [C1 | C2], ranks the ``cfg.k_best`` cheapest
    label-set hypotheses with Murty's algorithm, normalizes their masses
    w(L) = exp(cost_0 - cost_L), and returns both the hypothesis density
    and its LMB approximation r(l_a, l_b) = sum of weights of hypotheses
    containing the pair.

    ``allowed_pairs`` restricts the joint label space to the given
    (label_a, label_b) pairs; ``grid`` accepts a precomputed pairwise
    fusion grid so several methods can share it.
    """
    restriction = None if allowed_pairs is None else set(allowed_pairs)
    if grid is None:
        grid = pair_fusion_grid(
            [c.density for c in fa.components], [c.density for c in fb.components], w.omega_a
        )
    if len(fa) == 0:
        glmb = JlGlmbDensity(hypotheses=((frozenset(), 1.0),), spatial={})
        return LmbDensity(()), glmb

    # Rows/columns that cannot pair at all would always take their zero-cost
    # leave-unpaired diagonal; dropping them shrinks the ranking problem
    # without changing any hypothesis or cost.
    c1 = _pairing_costs(fa, fb, w, cfg, grid, restriction)
    active_a = np.nonzero(np.isfinite(c1).any(axis=1))[0]
    active_b = np.nonzero(np.isfinite(c1[active_a]).any(axis=0))[0]
    if len(active_a) == 0:
        pair_sets: list[list[tuple[int, int]]] = [[]]
        weights = np.array([1.0])
    else:
        n_act = len(active_a)
        c2 = np.full((n_act, n_act), np.inf)
        np.fill_diagonal(c2, 0.0)
        cost = np.hstack([c1[np.ix_(active_a, active_b)], c2])
        ranked = murty_k_best(cost, cfg.k_best)
        log_masses = np.array([-a.cost for a in ranked])
        weights = np.exp(log_masses - logsumexp(log_masses))
        pair_sets = [
            [
                (int(active_a[i]), int(active_b[j]))
                for i, j in a.pairs
                if j < len(active_b)
            ]
            for a in ranked
        ]

    hyps: list[tuple[frozenset[JointLabel], float]] = []

    spatial: dict[JointLabel, GaussianMixture] = {}
    joint_r: dict[JointLabel, float] = {}
    order: list[JointLabel] = []
    for pairs, weight in zip(pair_sets, weights):
        label_set = set()
        for i, j in pairs:
            jl = JointLabel((fa.components[i].label, fb.components[j].label))
            label_set.add(jl)
            if jl not in spatial:
                spatial[jl] = grid.result(i, j).fused
                order.append(jl)
            joint_r[jl] = joint_r.get(jl, 0.0) + weight
        hyps.append((frozenset(label_set), float(weight)))

    glmb = JlGlmbDensity(hypotheses=tuple(hyps), spatial=spatial)
    lmb = LmbDensity(
        tuple(
            BernoulliComponent(jl, min(joint_r[jl], 1.0), spatial[jl]) for jl in order
        )
    )
    return lmb, glmb


def simplified_jl_gci(
    fa: LmbDensity,
    fb: LmbDensity,
    w: FusionWeights,
    cfg: FusionConfig = FusionConfig(),
    *,
    allowed_pairs: Iterable[tuple[AgentLabel, AgentLabel]] | None = None,
    grid: PairFusionGrid | None = None,
) -> LmbDensity:
    """Closed-form joint-label fusion under the well-separated-targets assumption.

    One Bernoulli component per pair of the joint support with
    r = eta r_a^wa r_b^wb / [(1-r_a)^wa (1-r_b)^wb + eta r_a^wa r_b^wb];
    pairs whose overlap mass falls below ``cfg.eta_floor`` are omitted.
    """
    restriction = None if allowed_pairs is None else set(allowed_pairs)
    if grid is None:
        grid = pair_fusion_grid(
            [c.density for c in fa.components], [c.density for c in fb.components], w.omega_a
        )
    log_floor = math.log(cfg.eta_floor) if cfg.eta_floor > 0 else -np.inf
    out = []
    for i, ca in enumerate(fa.components):
        for j, cb in enumerate(fb.components):
            if grid.log_eta[i, j] < log_floor or np.isneginf(grid.log_eta[i, j]):
                continue
            if restriction is not None and (ca.label, cb.label) not in restriction:
                continue
            res = grid.result(i, j)
            if res.empty:
                continue
            r = _fused_existence(ca.existence, cb.existence, res.eta, w)
            out.append(BernoulliComponent(JointLabel((ca.label, cb.label)), r, res.fused))
    return LmbDensity(tuple(out))


def marginalize_lmb(lmb: LmbDensity, agent_index: int, *, clamp: bool = False) -> LmbDensity:
    """Collapse a joint-label LMB onto one agent's labels.

    The marginal existence sums the joint masses per projected label; the
    spatial density is taken from the heaviest contributing joint component
    (the most probable cross-agent association).  ``clamp=True`` silences
    the mass-overflow check, which non-exclusive components (the simplified
    method) routinely trip.
    """
    if clamp:
        raw: dict[AgentLabel, float] = {}
        for c in lmb.components:
            key = c.label.agent(agent_index)
            raw[key] = raw.get(key, 0.0) + c.existence
        marginal_r = {k: min(v, 1.0) for k, v in raw.items()}
    else:
        marginal_r = marginalize_joint_label(
            {c.label: c.existence for c in lmb.components}, agent_index
        )
    best: dict[AgentLabel, BernoulliComponent] = {}
    order: list[AgentLabel] = []
    for c in lmb.components:
        key = c.label.agent(agent_index)
        if key not in best:
            best[key] = c
            order.append(key)
        elif c.existence > best[key].existence:
            best[key] = c
    return LmbDensity(
        tuple(
            BernoulliComponent(key, marginal_r[key], best[key].density) for key in order
        )
    )


def pairwise_eta(
    fa: LmbDensity, fb: LmbDensity, w: FusionWeights
) -> tuple[tuple[Any, ...], tuple[Any, ...], np.ndarray]:
    """Overlap-mass matrix eta(l_a, l_b) over the two supports (diagnostics)."""
    grid = pair_fusion_grid(
        [c.density for c in fa.components], [c.density for c in fb.components], w.omega_a
    )
    return fa.labels(), fb.labels(), np.exp(grid.log_eta)


# ---------------------------------------------------------------------------
# Label inconsistency diagnostic
# ---------------------------------------------------------------------------


def _conditional_label_table(
    f: LmbDensity, labels: Sequence[Any], states: np.ndarray
) -> np.ndarray | None:
    """pi values over ordered distinct label tuples, or None when impossible.

    Entry t of the returned array is the labeled density of
    {(x_1, l_t1), ..., (x_n, l_tn)} under f; labels outside f's support act
    as r = 0 components.
    """
    n = states.shape[0]
    r = np.array([(f.get(l).existence if f.get(l) else 0.0) for l in labels])
    pdf = np.zeros((n, len(labels)))
    for col, lbl in enumerate(labels):
        comp = f.get(lbl)
        if comp is None:
            continue
        for row in range(n):
            pdf[row, col] = comp.density.pdf(states[row])
    values = []
    for tup in permutations(range(len(labels)), n):
        in_set = np.zeros(len(labels), dtype=bool)
        in_set[list(tup)] = True
        mass = np.prod(np.where(in_set, r, 1.0 - r))
        for row, col in enumerate(tup):
            mass *= pdf[row, col]
        values.append(mass)
    values = np.array(values)
    total = values.sum()
    if total <= 0.0:
        return None
    return values / total


def label_inconsistency(
    fa: LmbDensity,
    fb: LmbDensity,
    w: FusionWeights,
    states: Sequence[np.ndarray],
) -> tuple[list[float], float]:
    """Agreement of the two densities' labelling information.

    For each provided unlabeled state set, mu sums the geometric mean of the
    agents' conditional label-tuple distributions over all distinct label
    tuples (mu = 1 iff the labelling information coincides).  The indicator
    estimate is -log of the sample mean of mu; the caller supplies state
    sets drawn from the fused unlabeled density.
    """
    if len(states) == 0:
        raise ValidationError("d_G undefined: no state sets supplied")
    labels = list(fa.labels()) + [l for l in fb.labels() if l not in set(fa.labels())]
    mus: list[float] = []
    for X in states:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[0]
        if len(labels) ** max(n, 1) > 10**6:
            raise ValidationError(
                f"label support {len(labels)} too large for exact summation over {n} states"
            )
        if n == 0:
            mus.append(1.0)
            continue
        table_a = _conditional_label_table(fa, labels, X)
        table_b = _conditional_label_table(fb, labels, X)
        if table_a is None or table_b is None:
            raise ValidationError("state set has zero density under one agent")
        mu = float(np.sum(table_a**w.omega_a * table_b**w.omega_b))
        mus.append(mu)
    mean_mu = float(np.mean(mus))
    d_g = float(-np.log(mean_mu)) if mean_mu > 0 else float("inf")
    return mus, d_g
