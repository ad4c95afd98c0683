"""JSON scenario files.

Vertices in the file are numbered from 1 and edges are written ``[tail, head]``.
Example::

    {
      "graph": {"n": 3, "edges": [[2, 1], [3, 2], [1, 3]]},
      "distances": [1, 1, 1],
      "mismatch": [0.05, 0.03, 0.02],
      "initial": {"perturbed_realization": {"base": "triangle", "noise": 0.1, "seed": 7}},
      "horizon": 600,
      "integrator": {"rtol": 1e-12, "atol": 1e-14},
      "output": {"stride": 0.5}
    }
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .dynamics import (
    IntegratorSettings,
    Scenario,
    distances_from_coordinates,
    mismatch_from_distance_pairs,
    perturbed_realization,
    triangle_realization,
)
from .graph import FormationGraph

_point = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_positive_list = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1}

SCHEMA = {
    "type": "object",
    "required": ["graph", "initial", "horizon"],
    "additionalProperties": False,
    "properties": {
        "graph": {
            "type": "object",
            "required": ["n", "edges"],
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 3},
                "edges": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "array", "items": {"type": "integer", "minimum": 1},
                              "minItems": 2, "maxItems": 2},
                },
            },
        },
        "distances": {"oneOf": [_positive_list, {"const": "from_base"}]},
        "mismatch": {
            "oneOf": [
                {"type": "array", "items": {"type": "number"}},
                {
                    "type": "object",
                    "required": ["head_distances", "tail_distances"],
                    "additionalProperties": False,
                    "properties": {"head_distances": _positive_list, "tail_distances": _positive_list},
                },
            ]
        },
        "initial": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["coordinates"],
                    "additionalProperties": False,
                    "properties": {"coordinates": {"type": "array", "items": _point}},
                },
                {
                    "type": "object",
                    "required": ["perturbed_realization"],
                    "additionalProperties": False,
                    "properties": {
                        "perturbed_realization": {
                            "type": "object",
                            "required": ["base", "noise"],
                            "additionalProperties": False,
                            "properties": {
                                "base": {"oneOf": [{"const": "triangle"},
                                                   {"type": "array", "items": _point}]},
                                "noise": {"type": "number", "minimum": 0},
                                "seed": {"type": "integer", "minimum": 0},
                            },
                        }
                    },
                },
            ]
        },
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "integrator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rtol": {"type": "number", "exclusiveMinimum": 0},
                "atol": {"type": "number", "exclusiveMinimum": 0},
                "max_step": {"type": "number", "exclusiveMinimum": 0},
                "method": {"enum": ["RK45", "DOP853"]},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "stride": {"type": "number", "exclusiveMinimum": 0},
                "trajectory": {"type": "string"},
                "report": {"type": "string"},
            },
        },
    },
}


class ScenarioFileError(ValueError):
    """Unreadable, malformed or inconsistent scenario file."""


@dataclass
class ScenarioFile:
    document: dict
    graph: FormationGraph
    seed: int | None = None
    outputs: dict = field(default_factory=dict)

    @property
    def stride(self) -> float:
        return float(self.document.get("output", {}).get("stride", 0.1))

    def base_coordinates(self) -> np.ndarray | None:
        init = self.document["initial"]
        if "coordinates" in init:
            return np.asarray(init["coordinates"], dtype=float)
        base = init["perturbed_realization"]["base"]
        if isinstance(base, str):
            dist = self.document.get("distances")
            if not isinstance(dist, list):
                raise ScenarioFileError("a triangle base needs explicit distances")
            return triangle_realization(self.graph, dist)
        return np.asarray(base, dtype=float)

    def distances(self) -> np.ndarray:
        dist = self.document.get("distances", "from_base")
        if dist == "from_base":
            return distances_from_coordinates(self.graph, self.base_coordinates())
        return np.asarray(dist, dtype=float)

    def mismatch(self) -> np.ndarray:
        mu = self.document.get("mismatch")
        if mu is None:
            return np.zeros(self.graph.m)
        if isinstance(mu, dict):
            return mismatch_from_distance_pairs(self.graph, mu["head_distances"], mu["tail_distances"])
        return np.asarray(mu, dtype=float)

    def initial_state(self, rng: np.random.Generator) -> np.ndarray:
        init = self.document["initial"]
        if "coordinates" in init:
            return np.asarray(init["coordinates"], dtype=float)
        pert = init["perturbed_realization"]
        return perturbed_realization(self.base_coordinates(), float(pert["noise"]), rng)

    def build(self, rng: np.random.Generator, mismatch=None) -> Scenario:
        doc = self.document
        cfg = IntegratorSettings(stride=self.stride, **doc.get("integrator", {}))
        try:
            return Scenario(
                graph=self.graph,
                target_distances=self.distances(),
                mismatch=self.mismatch() if mismatch is None else mismatch,
                initial_state=self.initial_state(rng),
                horizon=float(doc["horizon"]),
                integrator=cfg,
            )
        except ValueError as exc:
            raise ScenarioFileError(str(exc)) from exc


def parse_scenario(doc: dict) -> ScenarioFile:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ScenarioFileError(f"schema violation at {list(exc.absolute_path)}: {exc.message}") from exc
    gdoc = doc["graph"]
    try:
        graph = FormationGraph(gdoc["n"], [(t - 1, h - 1) for t, h in gdoc["edges"]])
    except ValueError as exc:
        raise ScenarioFileError(str(exc)) from exc
    init = doc["initial"]
    seed = init.get("perturbed_realization", {}).get("seed")
    sf = ScenarioFile(doc, graph, seed, doc.get("output", {}))
    if isinstance(doc.get("distances"), list) and len(doc["distances"]) != graph.m:
        raise ScenarioFileError(f"distances needs {graph.m} entries")
    mu = doc.get("mismatch")
    if isinstance(mu, list) and len(mu) != graph.m:
        raise ScenarioFileError(f"mismatch needs {graph.m} entries")
    if isinstance(mu, dict) and any(len(v) != graph.m for v in mu.values()):
        raise ScenarioFileError(f"mismatch distance lists need {graph.m} entries")
    try:
        n_pts = len(sf.base_coordinates())
    except ScenarioFileError:
        raise
    except ValueError as exc:
        raise ScenarioFileError(str(exc)) from exc
    if n_pts != graph.n:
        raise ScenarioFileError(f"initial coordinates list {n_pts} points for {graph.n} vertices")
    return sf


def load_scenario(path) -> ScenarioFile:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ScenarioFileError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioFileError(f"{path} is not valid JSON: {exc}") from exc
    return parse_scenario(doc)
