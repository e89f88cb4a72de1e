"""Certification records: one row per tested inequality."""

from dataclasses import asdict, dataclass, field

import numpy as np


def _plain(value):
    if isinstance(value, np.ndarray):
        if np.iscomplexobj(value):
            return [[float(v.real), float(v.imag)] for v in value.ravel()]
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


@dataclass
class CheckRecord:
    """Outcome of one sampled inequality.

    ``worst_violation`` is the largest observed value of ``lhs - rhs`` for an
    inequality ``lhs <= rhs``; the check passes when it is ``<= tolerance``.
    """

    anchor: str
    passed: bool
    sample_count: int
    tolerance: float
    worst_violation: float
    location: object = None
    seed: object = None
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return _plain(asdict(self))


@dataclass
class CertificationReport:
    records: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r.passed for r in self.records)

    def add(self, record):
        self.records.append(record)
        return record

    def extend(self, other):
        self.records.extend(other.records)
        return self

    def failures(self):
        return [r for r in self.records if not r.passed]

    def worst(self):
        """The record with the largest violation relative to its tolerance."""
        if not self.records:
            return None
        return max(self.records, key=lambda r: r.worst_violation - r.tolerance)

    def __getitem__(self, anchor):
        for rec in self.records:
            if rec.anchor == anchor:
                return rec
        raise KeyError(anchor)

    def to_dicts(self):
        return [r.to_dict() for r in self.records]


def make_record(anchor, violations, tolerance, points=None, seed=None, **details):
    """Build a record from an array of ``lhs - rhs`` values."""
    violations = np.asarray(violations, dtype=float).ravel()
    if violations.size == 0:
        return CheckRecord(anchor, True, 0, float(tolerance), float("-inf"), None, seed,
                           dict(details, note="no samples"))
    finite = np.where(np.isnan(violations), np.inf, violations)
    idx = int(np.argmax(finite))
    worst = float(finite[idx])
    location = None
    if points is not None:
        location = _plain(np.asarray(points)[idx])
    return CheckRecord(anchor, bool(worst <= tolerance), int(violations.size),
                       float(tolerance), worst, location, seed, dict(details))
