"""Reliability-latency inversion and functional-split / scenario feasibility.

Latencies produced here are fronthaul-only: they are compared directly with
split budgets and with whole end-to-end scenario budgets, without carving out
air-interface or core shares, so scenario verdicts are optimistic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from fhbounds.curves import DelayCurve
from fhbounds.errors import InvalidParameters, UnreachableReliabilityError

REQUIREMENTS_FORMAT = "fhbounds.requirements/1"


@dataclass(frozen=True)
class SplitOption:
    """A functional split point. Bandwidths are carried as metadata only."""

    name: str
    one_way_latency_budget: float
    dl_bandwidth: float | None = None
    ul_bandwidth: float | None = None
    option: int | None = None

    def __post_init__(self) -> None:
        if not self.one_way_latency_budget > 0.0:
            raise InvalidParameters(f"{self.name}: latency budget must be > 0")

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "option": self.option,
            "one_way_latency_budget_s": self.one_way_latency_budget,
            "dl_bandwidth_bps": self.dl_bandwidth,
            "ul_bandwidth_bps": self.ul_bandwidth,
        }


@dataclass(frozen=True)
class ScenarioRequirement:
    name: str
    end_to_end_latency: float
    reliability: float
    payload_note: str = ""

    def __post_init__(self) -> None:
        if not 0.0 < self.reliability < 1.0:
            raise InvalidParameters(f"{self.name}: reliability must lie in (0, 1)")
        if not self.end_to_end_latency > 0.0:
            raise InvalidParameters(f"{self.name}: latency must be > 0")

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "end_to_end_latency_s": self.end_to_end_latency,
            "reliability": self.reliability,
            "payload": self.payload_note,
        }


@dataclass(frozen=True)
class SplitVerdict:
    split: SplitOption
    feasible: bool
    margin: float | None
    reason: str = ""


@dataclass(frozen=True)
class ScenarioVerdict:
    scenario: ScenarioRequirement
    supported: bool
    latency: float | None
    reason: str = ""


def _check_reliability(reliability: float) -> float:
    reliability = float(reliability)
    if not 0.0 < reliability < 1.0:
        raise InvalidParameters(f"reliability must lie in (0, 1), got {reliability!r}")
    return reliability


def achievable_latency(curve: DelayCurve, reliability: float) -> float:
    """Smallest tau with P{D > tau} <= 1 - reliability.

    Between grid points the tail is interpolated linearly in (tau, log p).
    Empirical curves are inverted against their confidence upper envelope.
    """
    reliability = _check_reliability(reliability)
    target = 1.0 - reliability
    probs = curve.upper_envelope() if curve.kind == "empirical" else curve.probs
    hits = np.nonzero(probs <= target)[0]
    if hits.size == 0:
        raise UnreachableReliabilityError(reliability, float(probs.min()))
    i = int(hits[0])
    if i == 0:
        return float(curve.taus[0])
    tau_a, tau_b = curve.taus[i - 1], curve.taus[i]
    p_a, p_b = probs[i - 1], probs[i]
    if p_b == 0.0:
        # log-linear segment is undefined; stay conservative
        return float(tau_b)
    frac = (math.log(p_a) - math.log(target)) / (math.log(p_a) - math.log(p_b))
    return float(tau_a + min(max(frac, 0.0), 1.0) * (tau_b - tau_a))


def recommend_splits(curve: DelayCurve, reliability: float, splits) -> list[SplitVerdict]:
    """Feasibility of each split, lowest (most centralized) feasible split first.

    A split is feasible when the achievable latency fits its one-way budget.
    Lower splits have tighter budgets, so ordering is by budget within the
    feasible and then the infeasible group.
    """
    splits = sorted(splits, key=lambda s: s.one_way_latency_budget)
    try:
        latency = achievable_latency(curve, reliability)
    except UnreachableReliabilityError as exc:
        return [SplitVerdict(s, False, None, str(exc)) for s in splits]
    verdicts = []
    for s in splits:
        margin = s.one_way_latency_budget - latency
        feasible = latency <= s.one_way_latency_budget
        reason = "" if feasible else (
            f"needs {latency:.6g} s, budget {s.one_way_latency_budget:.6g} s"
        )
        verdicts.append(SplitVerdict(s, feasible, margin, reason))
    return sorted(verdicts, key=lambda v: not v.feasible)


def recommended_split(verdicts: list[SplitVerdict]) -> SplitOption | None:
    return next((v.split for v in verdicts if v.feasible), None)


def match_scenarios(curve: DelayCurve, scenarios) -> list[ScenarioVerdict]:
    """Whether the fronthaul alone meets each scenario's latency at its reliability."""
    out = []
    for sc in scenarios:
        try:
            latency = achievable_latency(curve, sc.reliability)
        except UnreachableReliabilityError as exc:
            out.append(ScenarioVerdict(sc, False, None, str(exc)))
            continue
        ok = latency <= sc.end_to_end_latency
        reason = "" if ok else f"needs {latency:.6g} s, budget {sc.end_to_end_latency:.6g} s"
        out.append(ScenarioVerdict(sc, ok, latency, reason))
    return out


def parse_requirements(doc: dict) -> tuple[list[SplitOption], list[ScenarioRequirement]]:
    if doc.get("format", REQUIREMENTS_FORMAT) != REQUIREMENTS_FORMAT:
        raise InvalidParameters(f"unknown requirements format {doc.get('format')!r}")
    try:
        splits = [
            SplitOption(
                s["name"],
                float(s["one_way_latency_budget_s"]),
                s.get("dl_bandwidth_bps"),
                s.get("ul_bandwidth_bps"),
                s.get("option"),
            )
            for s in doc.get("splits", [])
        ]
        scenarios = [
            ScenarioRequirement(
                s["name"],
                float(s["end_to_end_latency_s"]),
                float(s["reliability"]),
                s.get("payload", ""),
            )
            for s in doc.get("scenarios", [])
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidParameters(f"malformed requirements document: {exc}") from exc
    return splits, scenarios


def default_requirements() -> tuple[list[SplitOption], list[ScenarioRequirement]]:
    """The built-in PDCP-RLC / MAC-PHY budgets and 5G scenario table."""
    text = resources.files("fhbounds").joinpath("data/tables.json").read_text()
    return parse_requirements(json.loads(text))


def load_requirements(path) -> tuple[list[SplitOption], list[ScenarioRequirement]]:
    return parse_requirements(json.loads(Path(path).read_text()))
