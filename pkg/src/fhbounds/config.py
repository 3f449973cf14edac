"""Experiment configuration: JSON schema validation, semantic checks, canonical form.

The canonical form fills every default, stores packet sizes in bits and path
capacities as an explicit list, and leaves out the ``output`` section (where
results go does not change what they are). It is what every output file
embeds, and loading it back yields the same experiment.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from fhbounds.analytics import DEFAULT_EPS_TRUNC
from fhbounds.curves import DEFAULT_Z, canonical_json, tau_grid
from fhbounds.errors import ConfigError, InstabilityError, InvalidParameters
from fhbounds.sim.engine import SimSpec, _check_counts
from fhbounds.sim.model import (
    FronthaulTopology,
    NonOrthogonal,
    OrthogonalBandwidth,
    OrthogonalPath,
    TrafficClass,
    resolve_allocation,
)

CONFIG_FORMAT = "fhbounds.experiment/1"

DEFAULT_TAU_GRID = {"min": 1e-6, "max": 1e-1, "points": 200, "spacing": "log"}
DEFAULT_SIMULATION = {"packets": 1_000_000, "warmup": None, "replications": 1, "base_seed": 0, "z": DEFAULT_Z}
DEFAULT_RELIABILITY = [0.999, 0.99999, 0.999999]
DEFAULT_OUTPUT = {"dir": "results", "format": "csv", "raw_samples": False}


def schema() -> dict:
    text = resources.files("fhbounds").joinpath("data/experiment.schema.json").read_text()
    return json.loads(text)


def _policy_from_dict(doc: dict):
    kind = doc["type"]
    if kind == "non_orthogonal":
        return NonOrthogonal()
    if kind == "orthogonal_bandwidth":
        return OrthogonalBandwidth(dict(doc["fractions"]))
    return OrthogonalPath(dict(doc["paths"]))


def _policy_to_dict(policy) -> dict:
    if isinstance(policy, OrthogonalBandwidth):
        return {"type": policy.name, "fractions": {k: float(v) for k, v in policy.fractions.items()}}
    if isinstance(policy, OrthogonalPath):
        return {"type": policy.name, "paths": {k: int(v) for k, v in policy.paths.items()}}
    return {"type": policy.name}


@dataclass(frozen=True)
class ExperimentConfig:
    topology: FronthaulTopology
    classes: tuple[TrafficClass, ...]
    policy: object
    tau: dict = field(default_factory=lambda: dict(DEFAULT_TAU_GRID))
    packets: int = DEFAULT_SIMULATION["packets"]
    warmup: int | None = None
    replications: int = 1
    base_seed: int = 0
    z: float = DEFAULT_Z
    eps_trunc: float = DEFAULT_EPS_TRUNC
    reliability_targets: tuple[float, ...] = tuple(DEFAULT_RELIABILITY)
    output_dir: str = DEFAULT_OUTPUT["dir"]
    output_format: str = DEFAULT_OUTPUT["format"]
    raw_samples: bool = False

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        """Validate ``doc`` against the schema and all model preconditions."""
        try:
            jsonschema.validate(doc, schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {where}: {exc.message}") from None
        topo = doc["topology"]
        try:
            if "capacities_bps" in topo:
                topology = FronthaulTopology(tuple(topo["capacities_bps"]))
            else:
                topology = FronthaulTopology.homogeneous(topo["n_paths"], topo["capacity_bps"])
            classes = tuple(
                TrafficClass(
                    c["name"],
                    c["packet_size_bits"] if "packet_size_bits" in c else 8.0 * c["packet_size_bytes"],
                    c["arrival_rate_per_s"],
                    c["k"],
                    c.get("n_alloc"),
                )
                for c in doc["classes"]
            )
            sim = {**DEFAULT_SIMULATION, **doc.get("simulation", {})}
            out = {**DEFAULT_OUTPUT, **doc.get("output", {})}
            cfg = cls(
                topology=topology,
                classes=classes,
                policy=_policy_from_dict(doc["policy"]),
                tau={**DEFAULT_TAU_GRID, **doc.get("tau_grid", {})},
                packets=sim["packets"],
                warmup=sim["warmup"],
                replications=sim["replications"],
                base_seed=sim["base_seed"],
                z=float(sim["z"]),
                eps_trunc=float(doc.get("eps_trunc", DEFAULT_EPS_TRUNC)),
                reliability_targets=tuple(float(r) for r in doc.get("reliability_targets", DEFAULT_RELIABILITY)),
                output_dir=out["dir"],
                output_format=out["format"],
                raw_samples=bool(out["raw_samples"]),
            )
        except InstabilityError:
            raise
        except InvalidParameters as exc:
            raise ConfigError(str(exc)) from None
        return cfg.validated()

    def validated(self) -> "ExperimentConfig":
        """Resolve defaults and check every precondition; raises ConfigError/InstabilityError."""
        try:
            packets, warmup = _check_counts(self.packets, self.warmup)
            resolve_allocation(self.topology, self.classes, self.policy)
            self.tau_values()
            if not 0.0 < self.eps_trunc < 1.0:
                raise InvalidParameters(f"eps_trunc must lie in (0, 1), got {self.eps_trunc!r}")
            if self.replications < 1:
                raise InvalidParameters("replications must be >= 1")
            if self.output_format not in ("csv", "json"):
                raise InvalidParameters(f"unknown output format {self.output_format!r}")
        except InstabilityError:
            raise
        except InvalidParameters as exc:
            raise ConfigError(str(exc)) from None
        return replace(self, packets=packets, warmup=warmup)

    def with_overrides(self, **changes) -> "ExperimentConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        if "packets" in changes and "warmup" not in changes:
            changes["warmup"] = None
        tau = dict(self.tau)
        for key in ("min", "max", "points", "spacing"):
            value = changes.pop(f"tau_{key}", None)
            if value is not None:
                tau[key] = value
        return replace(self, tau=tau, **changes).validated()

    def tau_values(self) -> np.ndarray:
        t = self.tau
        return tau_grid(float(t["min"]), float(t["max"]), int(t["points"]), t["spacing"])

    def sim_spec(self) -> SimSpec:
        return SimSpec(self.topology, self.classes, self.policy, self.packets, self.warmup)

    def canonical(self) -> dict:
        return {
            "format": CONFIG_FORMAT,
            "topology": {"capacities_bps": [float(c) for c in self.topology.capacities]},
            "classes": [
                {
                    "name": c.name,
                    "packet_size_bits": float(c.packet_size),
                    "arrival_rate_per_s": float(c.arrival_rate),
                    "k": int(c.k),
                    "n_alloc": c.n_alloc,
                }
                for c in self.classes
            ],
            "policy": _policy_to_dict(self.policy),
            "tau_grid": {
                "min": float(self.tau["min"]),
                "max": float(self.tau["max"]),
                "points": int(self.tau["points"]),
                "spacing": self.tau["spacing"],
            },
            "simulation": {
                "packets": int(self.packets),
                "warmup": int(self.warmup),
                "replications": int(self.replications),
                "base_seed": int(self.base_seed),
                "z": float(self.z),
            },
            "eps_trunc": float(self.eps_trunc),
            "reliability_targets": [float(r) for r in self.reliability_targets],
        }

    def canonical_json(self) -> str:
        return canonical_json(self.canonical())

    def class_named(self, name: str) -> TrafficClass:
        for c in self.classes:
            if c.name == name:
                return c
        raise ConfigError(f"no traffic class named {name!r}; have {[c.name for c in self.classes]}")


def _embedded_config(text: str) -> dict | None:
    """Pull the canonical config out of a previous output file, if it is one."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        doc = json.loads(text)
        meta = doc.get("metadata")
        if isinstance(meta, dict) and isinstance(meta.get("config"), dict):
            return meta["config"]
        if isinstance(doc.get("config"), dict):
            return doc["config"]
        return None
    for line in text.splitlines():
        if line.startswith("# metadata:"):
            meta = json.loads(line[len("# metadata:"):])
            return meta.get("config")
    return None


def load_config(path) -> ExperimentConfig:
    """Load an experiment config, or the config embedded in an fhbounds output file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        embedded = _embedded_config(text)
        doc = embedded if embedded is not None else json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return ExperimentConfig.from_dict(copy.deepcopy(doc))
