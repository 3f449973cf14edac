"""Tail-probability curves P{D > tau} and their CSV / JSON encodings.

CSV layout (gnuplot-ready; provenance lives in ``#`` comment lines)::

    # fhbounds delay curve
    # kind: analytic-upper
    # metadata: {"...": ...}
    tau_seconds,tail_probability,ci_half_width
    1.0000000000000000e-06,9.9999999999999978e-01,

Numbers are written with 17 significant digits so a curve read back from
disk compares equal to the one in memory. Analytic curves leave the
``ci_half_width`` column empty.
"""

from __future__ import annotations

import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fhbounds.errors import EmptySampleError, InvalidParameters

KINDS = ("analytic-lower", "analytic-upper", "empirical")
CSV_COLUMNS = ("tau_seconds", "tail_probability", "ci_half_width")
JSON_FORMAT = "fhbounds.delay_curve/1"
DEFAULT_Z = 3.0

# analytic tails evaluated pointwise can wiggle by a few ulps where p ~ 1
_MONOTONE_SLACK = 1e-12


def format_float(x: float) -> str:
    return f"{float(x):.16e}"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass
class DelayCurve:
    kind: str
    taus: np.ndarray
    probs: np.ndarray
    half_widths: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise InvalidParameters(f"unknown curve kind {self.kind!r}")
        self.taus = np.asarray(self.taus, dtype=float)
        self.probs = np.asarray(self.probs, dtype=float)
        if self.taus.ndim != 1 or self.taus.shape != self.probs.shape or self.taus.size == 0:
            raise InvalidParameters("taus and probs must be equal-length non-empty 1-d arrays")
        if np.any(np.diff(self.taus) <= 0.0) or not np.all(np.isfinite(self.taus)):
            raise InvalidParameters("tau grid must be finite and strictly increasing")
        if np.any(self.probs < 0.0) or np.any(self.probs > 1.0) or np.any(np.isnan(self.probs)):
            raise InvalidParameters("tail probabilities must lie in [0, 1]")
        if np.any(np.diff(self.probs) > _MONOTONE_SLACK * self.probs[:-1]):
            raise InvalidParameters("tail probabilities must be non-increasing in tau")
        if self.kind == "empirical":
            if self.half_widths is None:
                raise InvalidParameters("empirical curves need confidence half-widths")
            if "sample_count" not in self.metadata:
                raise InvalidParameters("empirical curves need a sample_count in metadata")
        elif self.half_widths is not None:
            raise InvalidParameters("analytic curves carry no confidence half-widths")
        if self.half_widths is not None:
            self.half_widths = np.asarray(self.half_widths, dtype=float)
            if self.half_widths.shape != self.taus.shape or np.any(self.half_widths < 0.0):
                raise InvalidParameters("half-widths must be non-negative and match the grid")

    def __len__(self) -> int:
        return self.taus.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, DelayCurve):
            return NotImplemented
        same_hw = (self.half_widths is None and other.half_widths is None) or (
            self.half_widths is not None
            and other.half_widths is not None
            and np.array_equal(self.half_widths, other.half_widths)
        )
        return (
            self.kind == other.kind
            and np.array_equal(self.taus, other.taus)
            and np.array_equal(self.probs, other.probs)
            and same_hw
            and canonical_json(self.metadata) == canonical_json(other.metadata)
        )

    def upper_envelope(self) -> np.ndarray:
        """Conservative tail: p + half-width, clipped to 1 and made non-increasing."""
        if self.half_widths is None:
            return self.probs.copy()
        upper = np.minimum(self.probs + self.half_widths, 1.0)
        return np.maximum.accumulate(upper[::-1])[::-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# fhbounds delay curve\n")
        buf.write(f"# kind: {self.kind}\n")
        buf.write(f"# metadata: {canonical_json(self.metadata)}\n")
        buf.write(",".join(CSV_COLUMNS) + "\n")
        for i in range(self.taus.size):
            hw = "" if self.half_widths is None else format_float(self.half_widths[i])
            buf.write(f"{format_float(self.taus[i])},{format_float(self.probs[i])},{hw}\n")
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "format": JSON_FORMAT,
            "kind": self.kind,
            "tau_seconds": [float(t) for t in self.taus],
            "tail_probability": [float(p) for p in self.probs],
            "ci_half_width": None
            if self.half_widths is None
            else [float(h) for h in self.half_widths],
            "metadata": self.metadata,
        }
        return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "DelayCurve":
        kind, metadata, rows = None, {}, []
        header_seen = False
        for line in text.splitlines():
            if not line.strip():
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("kind:"):
                    kind = body[len("kind:"):].strip()
                elif body.startswith("metadata:"):
                    metadata = json.loads(body[len("metadata:"):])
                continue
            if not header_seen:
                if tuple(c.strip() for c in line.split(",")) != CSV_COLUMNS:
                    raise InvalidParameters(f"unexpected CSV header {line!r}")
                header_seen = True
                continue
            rows.append(line.split(","))
        if kind is None or not rows:
            raise InvalidParameters("not a delay-curve CSV (missing kind or rows)")
        taus = [float(r[0]) for r in rows]
        probs = [float(r[1]) for r in rows]
        hw = None
        if kind == "empirical":
            hw = [float(r[2]) for r in rows]
        return cls(kind, taus, probs, hw, metadata)

    @classmethod
    def from_json(cls, text: str) -> "DelayCurve":
        doc = json.loads(text)
        if doc.get("format") != JSON_FORMAT:
            raise InvalidParameters(f"not a delay-curve JSON document: {doc.get('format')!r}")
        return cls(
            doc["kind"],
            doc["tau_seconds"],
            doc["tail_probability"],
            doc["ci_half_width"],
            doc.get("metadata", {}),
        )

    def save(self, path, fmt: str | None = None) -> Path:
        path = Path(path)
        fmt = fmt or ("json" if path.suffix == ".json" else "csv")
        atomic_write(path, self.to_json() if fmt == "json" else self.to_csv())
        return path

    @classmethod
    def load(cls, path) -> "DelayCurve":
        text = Path(path).read_text()
        if text.lstrip().startswith("{"):
            return cls.from_json(text)
        return cls.from_csv(text)


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def binomial_half_width(probs, count: int, z: float = DEFAULT_Z) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    return z * np.sqrt(probs * (1.0 - probs) / count)


def exceedance_counts(sorted_samples: np.ndarray, taus) -> np.ndarray:
    """Number of samples strictly greater than each tau (samples pre-sorted)."""
    m = sorted_samples.size
    return m - np.searchsorted(sorted_samples, np.asarray(taus, dtype=float), side="right")


def check_grid(tau_grid) -> np.ndarray:
    taus = np.asarray(tau_grid, dtype=float)
    if taus.ndim != 1 or taus.size == 0:
        raise InvalidParameters("tau grid must be a non-empty 1-d sequence")
    if np.any(np.diff(taus) <= 0.0):
        raise InvalidParameters("tau grid must be strictly increasing")
    return taus


def curve_from_counts(
    taus, exceed, count: int, z: float = DEFAULT_Z, metadata: dict | None = None
) -> DelayCurve:
    if count <= 0:
        raise EmptySampleError("no samples to build an empirical CCDF from")
    probs = np.asarray(exceed, dtype=float) / count
    meta = {"sample_count": int(count), "z": float(z)}
    meta.update(metadata or {})
    return DelayCurve("empirical", taus, probs, binomial_half_width(probs, count, z), meta)


def empirical_ccdf(samples, tau_grid, z: float = DEFAULT_Z, metadata: dict | None = None) -> DelayCurve:
    """Fraction of samples strictly above each tau, with ``z``-sigma binomial half-widths."""
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise EmptySampleError("no samples to build an empirical CCDF from")
    taus = check_grid(tau_grid)
    exceed = exceedance_counts(np.sort(samples), taus)
    return curve_from_counts(taus, exceed, samples.size, z, metadata)


def tau_grid(tau_min: float, tau_max: float, points: int, spacing: str = "log") -> np.ndarray:
    if points < 1:
        raise InvalidParameters("tau grid needs at least one point")
    if spacing == "log":
        if not 0.0 < tau_min <= tau_max:
            raise InvalidParameters("log-spaced grid needs 0 < tau_min <= tau_max")
        grid = np.geomspace(tau_min, tau_max, points)
    elif spacing == "linear":
        if not 0.0 <= tau_min <= tau_max:
            raise InvalidParameters("linear grid needs 0 <= tau_min <= tau_max")
        grid = np.linspace(tau_min, tau_max, points)
    else:
        raise InvalidParameters(f"spacing must be 'log' or 'linear', got {spacing!r}")
    if points > 1 and not math.isfinite(grid[-1]):
        raise InvalidParameters("tau grid bounds must be finite")
    return check_grid(grid)
