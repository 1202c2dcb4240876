"""Scenario definition, truth/measurement simulation, Monte-Carlo orchestration.

One trial runs two independent GM-LMB trackers against the same noisy
truth, fuses their posteriors each step with every requested method, and
scores the fused track sets with TOSPA plus cardinality counts.  RNG
streams are keyed by (scenario seed, trial, stream), so adding a fusion
method to the list never perturbs another method's numbers.

Estimated track identities live in per-agent label spaces, while truth
identities are scenario track ids; before scoring, each estimated id is
mapped to the truth id it spent most of its life closest to (ties broken
deterministically).  Label switches and spurious tracks then surface as
TOSPA label-error penalties.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, ValidationError
from .fusion import (
    FusionConfig,
    FusionWeights,
    jl_gci,
    labelwise_gci,
    lm_gci,
    marginalize_lmb,
    simplified_jl_gci,
)
from .gaussians import pair_fusion_grid
from .metrics import TospaParams, tospa
from .rfs import GaussianMixture, LabeledTrackSet, LmbDensity
from .tracker import (
    BirthModel,
    BirthSite,
    LmbFilter,
    MotionModel,
    Region,
    SensorModel,
    TrackerConfig,
    extract_tracks,
)

__all__ = [
    "METHODS",
    "TruthTrack",
    "Scenario",
    "default_scenario",
    "generate_truth",
    "generate_measurements",
    "MonteCarloReport",
    "run_monte_carlo",
]

METHODS = ("labelwise", "lm", "jl", "simplified-jl")


@dataclass(frozen=True, eq=False)
class TruthTrack:
    """A ground-truth target: alive on time steps [birth, death)."""

    track_id: str
    birth: int
    death: int
    initial_state: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "initial_state", np.asarray(self.initial_state, dtype=float))


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything a Monte-Carlo run needs, fully deterministic given ``seed``.

    ``birth_orders`` permutes the birth-site label indices per agent: the
    agents number their birth components locally, so the same physical site
    can carry different label indices on different agents, which is exactly
    the label inconsistency the joint-label methods are built to survive.
    """

    duration: int
    seed: int
    motion: MotionModel
    period: float
    sigma_w: float
    sensors: tuple[SensorModel, ...]
    birth_orders: tuple[tuple[int, ...], ...]
    birth: BirthModel
    tracks: tuple[TruthTrack, ...]

    def __post_init__(self):
        if self.duration < 1:
            raise ValidationError("duration must be positive")
        for t in self.tracks:
            if not 0 <= t.birth < t.death <= self.duration:
                raise ValidationError(
                    f"track {t.track_id}: need 0 <= birth < death <= duration, "
                    f"got [{t.birth}, {t.death}) in {self.duration} steps"
                )
        if len(self.birth_orders) != len(self.sensors):
            raise ValidationError("need one birth_order per sensor")
        n = len(self.birth.sites)
        for order in self.birth_orders:
            if sorted(order) != list(range(n)):
                raise ValidationError(f"birth_order {order} is not a permutation of 0..{n - 1}")

    def birth_model_for_agent(self, agent: int) -> BirthModel:
        """Birth model with this agent's local numbering of the sites."""
        order = self.birth_orders[agent]
        return BirthModel(
            tuple(
                BirthSite(site.existence, site.density, order[i])
                for i, site in enumerate(self.birth.sites)
            )
        )


# Truth tracks approximating the published two-sensor scenario: 12 targets
# born from the four birth sites, at most 10 alive at once, several
# simultaneous births and trajectory crossings over 100 steps.
_DEFAULT_TRACKS = (
    ("T01", 0, 50, (0.0, 12.0, 0.0, -8.0)),
    ("T02", 0, 100, (400.0, -9.0, -600.0, 11.0)),
    ("T03", 0, 70, (-800.0, 13.0, -200.0, 4.0)),
    ("T04", 0, 100, (-200.0, 4.0, 800.0, -11.0)),
    ("T05", 10, 100, (0.0, -8.0, 0.0, -6.0)),
    ("T06", 10, 80, (-800.0, 11.0, -200.0, -3.0)),
    ("T07", 20, 100, (400.0, -11.0, -600.0, 2.0)),
    ("T08", 20, 60, (-200.0, 9.0, 800.0, -13.0)),
    ("T09", 40, 90, (0.0, -4.0, 0.0, 12.0)),
    ("T10", 40, 100, (400.0, 2.0, -600.0, 13.0)),
    ("T11", 60, 100, (-800.0, 10.0, -200.0, 9.0)),
    ("T12", 60, 100, (-200.0, -5.0, 800.0, -12.0)),
)

_BIRTH_MEANS = (
    (0.0, 0.0, 0.0, 0.0),
    (400.0, 0.0, -600.0, 0.0),
    (-800.0, 0.0, -200.0, 0.0),
    (-200.0, 0.0, 800.0, 0.0),
)


def default_scenario(
    detection: float = 0.98,
    seed: int = 20260810,
    duration: int = 100,
    clutter_rate: float = 10.0,
) -> Scenario:
    """The shipped two-sensor scenario (sensor noise 10 m vs 12 m)."""
    region = Region(-1000.0, 1000.0, -1000.0, 1000.0)
    sites = tuple(
        BirthSite(0.07, GaussianMixture.single(np.array(m), np.eye(4) * 50.0**2), i)
        for i, m in enumerate(_BIRTH_MEANS)
    )
    return Scenario(
        duration=duration,
        seed=seed,
        motion=MotionModel.constant_velocity(T=1.0, sigma_w=10.0, survival=0.9),
        period=1.0,
        sigma_w=10.0,
        sensors=(
            SensorModel.position_sensor(10.0, 10.0, detection, clutter_rate, region),
            SensorModel.position_sensor(12.0, 12.0, detection, clutter_rate, region),
        ),
        birth_orders=((0, 1, 2, 3), (1, 2, 3, 0)),
        birth=BirthModel(sites),
        tracks=tuple(
            TruthTrack(tid, b, min(d, duration), np.array(state))
            for tid, b, d, state in _DEFAULT_TRACKS
            if b < duration
        ),
    )


def generate_truth(
    scenario: Scenario, rng: np.random.Generator | None = None
) -> list[LabeledTrackSet]:
    """Noisy constant-velocity trajectories for every truth track, per step."""
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence((scenario.seed, 0)))
    F = scenario.motion.F
    G = scenario.motion.noise_matrix(scenario.period) * scenario.sigma_w
    paths: dict[str, dict[int, np.ndarray]] = {}
    for t in scenario.tracks:
        x = t.initial_state.copy()
        steps = {t.birth: x.copy()}
        for k in range(t.birth + 1, t.death):
            x = F @ x + G @ rng.standard_normal(2)
            steps[k] = x.copy()
        paths[t.track_id] = steps
    out = []
    for k in range(scenario.duration):
        entries = tuple(
            (paths[t.track_id][k], t.track_id)
            for t in scenario.tracks
            if t.birth <= k < t.death
        )
        out.append(LabeledTrackSet(entries))
    return out


def generate_measurements(
    truth_step: LabeledTrackSet, sensor: SensorModel, rng: np.random.Generator
) -> np.ndarray:
    """One scan: detections (prob. p_D, noise R) plus uniform Poisson clutter."""
    chol = np.linalg.cholesky(sensor.R)
    detections = [
        sensor.H @ state + chol @ rng.standard_normal(2)
        for state in truth_step.states
        if rng.random() < sensor.detection
    ]
    clutter = sensor.region.sample(rng, rng.poisson(sensor.clutter_rate))
    if detections:
        return np.vstack([np.array(detections), clutter])
    return clutter.reshape(-1, 2)


def _fuse_step(
    method: str,
    fa: LmbDensity,
    fb: LmbDensity,
    w: FusionWeights,
    cfg: FusionConfig,
    threshold: float,
) -> LabeledTrackSet:
    if method == "labelwise":
        return extract_tracks(labelwise_gci(fa, fb, w), threshold)
    if method == "lm":
        fused, _ = lm_gci(fa, fb, w, cfg)
        return extract_tracks(fused, threshold)
    grid = pair_fusion_grid(
        [c.density for c in fa.components], [c.density for c in fb.components], w.omega_a
    )
    if method == "jl":
        lmb, _ = jl_gci(fa, fb, w, cfg, grid=grid)
        return extract_tracks(marginalize_lmb(lmb, 1), threshold)
    if method == "simplified-jl":
        lmb = simplified_jl_gci(fa, fb, w, cfg, grid=grid)
        return extract_tracks(marginalize_lmb(lmb, 1, clamp=True), threshold)
    raise ConfigError(f"unknown fusion method {method!r}; expected one of {METHODS}")


def _position(state: np.ndarray) -> np.ndarray:
    return state[[0, 2]] if state.shape[0] == 4 else state


def _identity_mapping(
    estimates: list[LabeledTrackSet], truth: list[LabeledTrackSet]
) -> dict:
    """Map each estimated id to the truth id it was most often nearest to."""
    votes: dict[object, dict[str, int]] = {}
    for est_step, truth_step in zip(estimates, truth):
        if len(truth_step) == 0:
            continue
        t_pos = np.array([_position(s) for s in truth_step.states])
        for state, ident in est_step.entries:
            d = np.linalg.norm(t_pos - _position(state)[None, :], axis=1)
            winner = truth_step.identities[int(np.argmin(d))]
            votes.setdefault(ident, {}).setdefault(winner, 0)
            votes[ident][winner] += 1
    mapping = {}
    for ident, counts in votes.items():
        mapping[ident] = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
    return mapping


def _relabeled(step: LabeledTrackSet, mapping: dict) -> LabeledTrackSet:
    entries = []
    used = set()
    for state, ident in step.entries:
        new = mapping.get(ident, ident)
        if new in used:
            new = ("spurious", ident)
        used.add(new)
        entries.append((state, new))
    return LabeledTrackSet(tuple(entries))


def _run_trial(
    scenario: Scenario,
    methods: Sequence[str],
    trial: int,
    tospa_params: TospaParams,
    cfg: FusionConfig,
    tracker_cfg: TrackerConfig,
    weights: FusionWeights,
) -> dict:
    rng_truth = np.random.default_rng(np.random.SeedSequence((scenario.seed, trial, 0)))
    truth = generate_truth(scenario, rng_truth)
    agents = []
    for i, sensor in enumerate(scenario.sensors):
        agents.append(
            (
                LmbFilter(scenario.motion, sensor, scenario.birth_model_for_agent(i), tracker_cfg),
                np.random.default_rng(np.random.SeedSequence((scenario.seed, trial, i + 1))),
            )
        )
    estimates: dict[str, list[LabeledTrackSet]] = {m: [] for m in methods}
    for k in range(scenario.duration):
        posteriors = []
        for filt, rng in agents:
            Z = generate_measurements(truth[k], filt.sensor, rng)
            posteriors.append(filt.step(Z, k))
        fa, fb = posteriors[0], posteriors[1]
        for m in methods:
            estimates[m].append(
                _fuse_step(m, fa, fb, weights, cfg, tracker_cfg.extract_threshold)
            )
    result = {
        "truth_cardinality": np.array([len(ts) for ts in truth], dtype=float),
        "tospa": {},
        "cardinality": {},
    }
    for m in methods:
        mapping = _identity_mapping(estimates[m], truth)
        result["tospa"][m] = np.array(
            [
                tospa(truth[k], _relabeled(estimates[m][k], mapping), tospa_params)
                for k in range(scenario.duration)
            ]
        )
        result["cardinality"][m] = np.array([len(ts) for ts in estimates[m]], dtype=float)
    return result


def _trial_worker(args):
    return _run_trial(*args)


@dataclass
class MonteCarloReport:
    """Aggregated Monte-Carlo output: per-step means and scenario summaries."""

    methods: tuple[str, ...]
    trials: int
    seed: int
    tospa_params: TospaParams
    weights: FusionWeights
    mean_tospa: dict[str, np.ndarray]
    mean_cardinality: dict[str, np.ndarray]
    truth_cardinality: np.ndarray
    scenario_average_tospa: dict[str, float] = field(init=False)
    cardinality_bias: dict[str, float] = field(init=False)

    def __post_init__(self):
        self.scenario_average_tospa = {
            m: float(np.mean(self.mean_tospa[m])) for m in self.methods
        }
        self.cardinality_bias = {
            m: float(np.mean(np.abs(self.mean_cardinality[m] - self.truth_cardinality)))
            for m in self.methods
        }

    def to_csv_text(self) -> str:
        lines = ["step,method,mean_tospa,mean_cardinality,truth_cardinality"]
        for k in range(len(self.truth_cardinality)):
            for m in self.methods:
                lines.append(
                    f"{k},{m},{self.mean_tospa[m][k]!r},"
                    f"{self.mean_cardinality[m][k]!r},{self.truth_cardinality[k]!r}"
                )
        return "\n".join(lines) + "\n"

    def summary_obj(self) -> dict:
        return {
            "methods": list(self.methods),
            "trials": self.trials,
            "seed": self.seed,
            "omega_a": self.weights.omega_a,
            "omega_b": self.weights.omega_b,
            "tospa_params": {
                "p": self.tospa_params.p,
                "c": self.tospa_params.c,
                "alpha": self.tospa_params.alpha,
            },
            "scenario_average_tospa": self.scenario_average_tospa,
            "cardinality_bias": self.cardinality_bias,
        }


def run_monte_carlo(
    scenario: Scenario,
    methods: Sequence[str],
    trials: int,
    tospa_params: TospaParams = TospaParams(),
    cfg: FusionConfig = FusionConfig(),
    *,
    tracker_cfg: TrackerConfig | None = None,
    weights: FusionWeights | None = None,
    jobs: int = 1,
) -> MonteCarloReport:
    """Average TOSPA and cardinality per step and method over ``trials`` runs.

    Deterministic given (scenario, trials, config); trials run in parallel
    when ``jobs`` > 1 and are reduced in trial order.
    """
    methods = tuple(methods)
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    if len(set(methods)) != len(methods) or not methods:
        raise ConfigError(f"methods must be a non-empty set drawn from {METHODS}")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown fusion method {m!r}; expected one of {METHODS}")
    if len(scenario.sensors) != 2:
        raise ConfigError("the Monte-Carlo harness fuses exactly two agents")
    weights = weights or FusionWeights.equal()
    tracker_cfg = tracker_cfg or TrackerConfig()

    tasks = [
        (scenario, methods, t, tospa_params, cfg, tracker_cfg, weights) for t in range(trials)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_trial_worker, tasks))
    else:
        results = [_trial_worker(t) for t in tasks]

    mean_tospa = {
        m: np.mean([r["tospa"][m] for r in results], axis=0) for m in methods
    }
    mean_card = {
        m: np.mean([r["cardinality"][m] for r in results], axis=0) for m in methods
    }
    return MonteCarloReport(
        methods=methods,
        trials=trials,
        seed=scenario.seed,
        tospa_params=tospa_params,
        weights=weights,
        mean_tospa=mean_tospa,
        mean_cardinality=mean_card,
        truth_cardinality=results[0]["truth_cardinality"],
    )
