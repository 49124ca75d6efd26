"""Check records and JSON emission."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np


@dataclass
class CheckResult:
    name: str
    value: float
    tolerance: float
    passed: bool
    comparison: str = "<"

    @classmethod
    def below(cls, name: str, value: float, tolerance: float) -> "CheckResult":
        return cls(name, float(value), float(tolerance), bool(value < tolerance), "<")

    @classmethod
    def above(cls, name: str, value: float, tolerance: float) -> "CheckResult":
        return cls(name, float(value), float(tolerance), bool(value > tolerance), ">")

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance, "pass": self.passed,
                "comparison": self.comparison}


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, CheckResult):
        return obj.as_dict()
    return obj


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, repr-exact floats)."""
    return json.dumps(_plain(obj), indent=2, sort_keys=True)


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(obj) + "\n")


def write_checks(path, checks: Iterable[CheckResult], **extra) -> None:
    checks = list(checks)
    write_json(path, {"checks": [c.as_dict() for c in checks], "all_pass": all(c.passed for c in checks), **extra})
