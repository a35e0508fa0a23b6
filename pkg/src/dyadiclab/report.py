"""Structured pass/fail records shared by the verifiers and the proof-step checks."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "item") and callable(x.item) and getattr(x, "ndim", 1) == 0:
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


@dataclass
class CheckRecord:
    """One inequality or identity evaluated on concrete data.

    ``ratio`` is lhs/rhs for inequalities (pass means ratio <= 1 up to the
    tolerance used by the check); identities store the absolute error in
    ``lhs`` and the tolerance in ``rhs``.
    """

    check: str
    passed: bool
    lhs: float = math.nan
    rhs: float = math.nan
    params: dict[str, Any] = field(default_factory=dict)
    detail: str = ""

    @property
    def ratio(self) -> float:
        if self.rhs == 0:
            return 0.0 if self.lhs <= 0 else math.inf
        return self.lhs / self.rhs

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ratio"] = self.ratio
        return _jsonable(d)


@dataclass
class VerificationReport:
    name: str
    records: list[CheckRecord] = field(default_factory=list)
    info: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def add(self, check, passed, lhs=math.nan, rhs=math.nan, detail="", **params):
        rec = CheckRecord(check, bool(passed), float(lhs), float(rhs), params, detail)
        self.records.append(rec)
        return rec

    def le(self, check, lhs, rhs, rtol=1e-12, **params):
        """Record ``lhs <= rhs`` with a relative slack ``rtol``."""
        lhs, rhs = float(lhs), float(rhs)
        ok = lhs <= rhs + rtol * max(abs(rhs), abs(lhs), 1e-300)
        return self.add(check, ok, lhs, rhs, **params)

    def extend(self, other: "VerificationReport", prefix: str = ""):
        for r in other.records:
            if prefix:
                r = CheckRecord(prefix + r.check, r.passed, r.lhs, r.rhs, r.params, r.detail)
            self.records.append(r)
        return self

    def failures(self) -> list[CheckRecord]:
        return [r for r in self.records if not r.passed]

    def worst(self, check: str | None = None) -> CheckRecord | None:
        recs = [r for r in self.records if check is None or r.check == check]
        recs = [r for r in recs if math.isfinite(r.ratio)] or recs
        return max(recs, key=lambda r: r.ratio, default=None)

    def summary(self) -> dict:
        by_check: dict[str, dict] = {}
        for r in self.records:
            s = by_check.setdefault(r.check, {"count": 0, "failures": 0, "worst_ratio": -math.inf})
            s["count"] += 1
            s["failures"] += 0 if r.passed else 1
            if math.isfinite(r.ratio):
                s["worst_ratio"] = max(s["worst_ratio"], r.ratio)
        return _jsonable({"name": self.name, "passed": self.passed, "checks": by_check, "info": self.info})

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "info": _jsonable(self.info),
            "records": [r.to_dict() for r in self.records],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)
