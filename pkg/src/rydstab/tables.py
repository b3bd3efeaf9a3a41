"""Fringe tables and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FRINGE_COLUMNS = ("phase_rad", "survival_prob", "shots", "successes")


def fmt(x) -> str:
    """Nine significant digits, the precision used in every CSV we write."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.9g}"


@dataclass
class FringeTable:
    """Ancilla survival versus Ramsey phase.

    ``shots``/``successes`` are ``None`` for exact (shot-free) probabilities.
    """

    phases: np.ndarray
    probs: np.ndarray
    shots: np.ndarray | None = None
    successes: np.ndarray | None = None
    label: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.phases = np.asarray(self.phases, dtype=float)
        self.probs = np.asarray(self.probs, dtype=float)
        if self.phases.shape != self.probs.shape:
            raise ValueError("phases and probabilities must have equal length")
        if self.shots is not None:
            self.shots = np.asarray(self.shots, dtype=int)
            self.successes = np.asarray(self.successes, dtype=int)

    @classmethod
    def from_counts(cls, phases, successes, shots, label: str = "") -> "FringeTable":
        successes = np.asarray(successes, dtype=int)
        shots = np.asarray(shots, dtype=int)
        with np.errstate(invalid="ignore", divide="ignore"):
            probs = np.where(shots > 0, successes / np.maximum(shots, 1), np.nan)
        return cls(phases, probs, shots, successes, label)

    @property
    def stderr(self) -> np.ndarray | None:
        if self.shots is None:
            return None
        p = self.probs
        return np.sqrt(np.clip(p * (1 - p), 0, None) / np.maximum(self.shots, 1))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(FRINGE_COLUMNS)
        for k in range(len(self.phases)):
            shots = None if self.shots is None else self.shots[k]
            succ = None if self.successes is None else self.successes[k]
            w.writerow([fmt(self.phases[k]), fmt(self.probs[k]), fmt(shots), fmt(succ)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "FringeTable":
        text = Path(source).read_text() if not isinstance(source, str) or "\n" not in source else source
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("fringe CSV has no rows")
        missing = set(FRINGE_COLUMNS[:2]) - set(rows[0])
        if missing:
            raise ValueError(f"fringe CSV lacks columns {sorted(missing)}")
        phases = [float(r["phase_rad"]) for r in rows]
        probs = [float(r["survival_prob"]) for r in rows]
        if all(r.get("shots") for r in rows):
            shots = [int(r["shots"]) for r in rows]
            succ = [int(r["successes"]) for r in rows]
            return cls(phases, probs, shots, succ)
        return cls(phases, probs)


def write_rows(path, header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(x) if not isinstance(x, str) else x for x in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
