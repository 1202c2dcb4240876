"""JSON codecs for the on-disk formats: densities, track sets, scenarios.

Labels serialize as ``[k, i]`` pairs, joint labels as pairs of such pairs,
mixtures as arrays of ``{weight, mean, covariance}`` with the covariance
flattened row-major.  Floats rely on Python's shortest-roundtrip repr, so a
dump/load cycle preserves every value bit-for-bit; emitted text is
key-sorted for byte stability.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ValidationError
from .rfs import (
    AgentLabel,
    BernoulliComponent,
    GaussianComponent,
    GaussianMixture,
    JointLabel,
    LabeledTrackSet,
    LmbDensity,
)
from .tracker import BirthModel, BirthSite, MotionModel, Region, SensorModel

__all__ = [
    "dumps",
    "mixture_to_obj",
    "mixture_from_obj",
    "label_to_obj",
    "label_from_obj",
    "lmb_to_obj",
    "lmb_from_obj",
    "save_lmb",
    "load_lmb",
    "tracksets_to_obj",
    "tracksets_from_obj",
    "save_tracksets",
    "load_tracksets",
    "scenario_to_obj",
    "scenario_from_obj",
    "save_scenario",
    "load_scenario",
]


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=1)


def _parse_error(what: str, obj: Any, exc: Exception | None = None) -> ValidationError:
    detail = f": {exc}" if exc else ""
    return ValidationError(f"malformed {what} near {json.dumps(obj)[:120]}{detail}")


def mixture_to_obj(mix: GaussianMixture) -> dict:
    return {
        "components": [
            {
                "weight": float(c.weight),
                "mean": c.mean.tolist(),
                "covariance": c.covariance.ravel().tolist(),
            }
            for c in mix.components
        ]
    }


def mixture_from_obj(obj: dict) -> GaussianMixture:
    try:
        comps = []
        for c in obj["components"]:
            mean = np.asarray(c["mean"], dtype=float)
            d = mean.shape[0]
            cov = np.asarray(c["covariance"], dtype=float).reshape(d, d)
            comps.append(GaussianComponent(float(c["weight"]), mean, cov))
        return GaussianMixture(tuple(comps))
    except (KeyError, TypeError, ValueError) as exc:
        raise _parse_error("Gaussian mixture", obj, exc) from None


def label_to_obj(label) -> list:
    if isinstance(label, JointLabel):
        return [[int(l.birth_time), int(l.birth_index)] for l in label.per_agent]
    k, i = label
    return [int(k), int(i)]


def label_from_obj(obj) -> AgentLabel | JointLabel:
    try:
        if isinstance(obj[0], list):
            return JointLabel(tuple(AgentLabel(int(k), int(i)) for k, i in obj))
        k, i = obj
        return AgentLabel(int(k), int(i))
    except (TypeError, ValueError, IndexError) as exc:
        raise _parse_error("label", obj, exc) from None


def lmb_to_obj(f: LmbDensity) -> dict:
    return {
        "components": [
            {
                "label": label_to_obj(c.label),
                "existence": float(c.existence),
                "density": mixture_to_obj(c.density),
            }
            for c in f.components
        ]
    }


def lmb_from_obj(obj: dict) -> LmbDensity:
    try:
        comps = tuple(
            BernoulliComponent(
                label_from_obj(c["label"]),
                float(c["existence"]),
                mixture_from_obj(c["density"]),
            )
            for c in obj["components"]
        )
    except (KeyError, TypeError) as exc:
        raise _parse_error("LMB density", obj, exc) from None
    return LmbDensity(comps)


def _canonical_identity(ident):
    if isinstance(ident, list):
        return tuple(_canonical_identity(x) for x in ident)
    return ident


def trackset_to_obj(ts: LabeledTrackSet) -> dict:
    entries = []
    for state, ident in ts.entries:
        if isinstance(ident, (AgentLabel, JointLabel)):
            ident = label_to_obj(ident)
        elif isinstance(ident, tuple):
            ident = list(ident)
        entries.append({"state": state.tolist(), "identity": ident})
    return {"entries": entries}


def trackset_from_obj(obj: dict) -> LabeledTrackSet:
    try:
        entries = tuple(
            (np.asarray(e["state"], dtype=float), _canonical_identity(e["identity"]))
            for e in obj["entries"]
        )
    except (KeyError, TypeError) as exc:
        raise _parse_error("track set", obj, exc) from None
    return LabeledTrackSet(entries)


def tracksets_to_obj(steps: list[LabeledTrackSet]) -> dict:
    return {"steps": [trackset_to_obj(ts) for ts in steps]}


def tracksets_from_obj(obj: dict) -> list[LabeledTrackSet]:
    if "steps" not in obj:
        raise _parse_error("track-set sequence (missing 'steps')", obj)
    return [trackset_from_obj(s) for s in obj["steps"]]


def scenario_to_obj(scenario) -> dict:
    return {
        "duration": scenario.duration,
        "seed": scenario.seed,
        "motion": {
            "T": scenario.period,
            "sigma_w": scenario.sigma_w,
            "survival": scenario.motion.survival,
        },
        "sensors": [
            {
                "sigma_x": float(np.sqrt(s.R[0, 0])),
                "sigma_y": float(np.sqrt(s.R[1, 1])),
                "detection": s.detection,
                "clutter_rate": s.clutter_rate,
                "region": [s.region.x_min, s.region.x_max, s.region.y_min, s.region.y_max],
                "birth_order": list(order),
            }
            for s, order in zip(scenario.sensors, scenario.birth_orders)
        ],
        "birth_sites": [
            {
                "existence": site.existence,
                "mean": site.density.components[0].mean.tolist(),
                "covariance": site.density.components[0].covariance.ravel().tolist(),
            }
            for site in scenario.birth.sites
        ],
        "tracks": [
            {
                "id": t.track_id,
                "birth": t.birth,
                "death": t.death,
                "state": t.initial_state.tolist(),
            }
            for t in scenario.tracks
        ],
    }


def scenario_from_obj(obj: dict):
    from .sim import Scenario, TruthTrack  # deferred: sim imports this module

    def require(mapping, key, where):
        if key not in mapping:
            raise ValidationError(f"scenario config: missing field {key!r} in {where}")
        return mapping[key]

    motion_obj = require(obj, "motion", "scenario")
    period = float(require(motion_obj, "T", "motion"))
    sigma_w = float(require(motion_obj, "sigma_w", "motion"))
    motion = MotionModel.constant_velocity(
        T=period, sigma_w=sigma_w, survival=float(require(motion_obj, "survival", "motion"))
    )
    sensors, orders = [], []
    for s in require(obj, "sensors", "scenario"):
        x0, x1, y0, y1 = require(s, "region", "sensor")
        sensors.append(
            SensorModel.position_sensor(
                sigma_x=float(require(s, "sigma_x", "sensor")),
                sigma_y=float(require(s, "sigma_y", "sensor")),
                detection=float(require(s, "detection", "sensor")),
                clutter_rate=float(require(s, "clutter_rate", "sensor")),
                region=Region(x0, x1, y0, y1),
            )
        )
        orders.append(tuple(int(i) for i in require(s, "birth_order", "sensor")))
    sites = []
    for idx, site in enumerate(require(obj, "birth_sites", "scenario")):
        mean = np.asarray(require(site, "mean", "birth site"), dtype=float)
        cov = np.asarray(require(site, "covariance", "birth site"), dtype=float).reshape(
            mean.shape[0], mean.shape[0]
        )
        sites.append(
            BirthSite(
                existence=float(require(site, "existence", "birth site")),
                density=GaussianMixture.single(mean, cov),
                index=idx,
            )
        )
    tracks = tuple(
        TruthTrack(
            track_id=str(require(t, "id", "track")),
            birth=int(require(t, "birth", "track")),
            death=int(require(t, "death", "track")),
            initial_state=np.asarray(require(t, "state", "track"), dtype=float),
        )
        for t in require(obj, "tracks", "scenario")
    )
    return Scenario(
        duration=int(require(obj, "duration", "scenario")),
        seed=int(require(obj, "seed", "scenario")),
        motion=motion,
        period=period,
        sigma_w=sigma_w,
        sensors=tuple(sensors),
        birth_orders=tuple(orders),
        birth=BirthModel(tuple(sites)),
        tracks=tracks,
    )


def _save(path, obj):
    Path(path).write_text(dumps(obj) + "\n")


def _load(path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON (line {exc.lineno}, col {exc.colno})") from None


def save_lmb(path, f: LmbDensity) -> None:
    _save(path, lmb_to_obj(f))


def load_lmb(path) -> LmbDensity:
    return lmb_from_obj(_load(path))


def save_tracksets(path, steps) -> None:
    _save(path, tracksets_to_obj(list(steps)))


def load_tracksets(path) -> list[LabeledTrackSet]:
    return tracksets_from_obj(_load(path))


def save_scenario(path, scenario) -> None:
    _save(path, scenario_to_obj(scenario))


def load_scenario(path):
    return scenario_from_obj(_load(path))
