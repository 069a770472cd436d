import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional


COLUMNS = ["check_id", "anchor", "n", "value", "bound", "margin", "pass"]


@dataclass
class CheckRecord:
    """One verified inequality: ``value <= bound`` passes with margin bound - value."""

    check_id: str
    anchor: str
    value: float
    bound: float
    n: Optional[int] = None
    margin: Optional[float] = None
    passed: Optional[bool] = None

    def __post_init__(self):
        self.value = float(self.value)
        self.bound = float(self.bound)
        if self.margin is None:
            self.margin = self.bound - self.value
        if self.passed is None:
            self.passed = bool(math.isfinite(self.margin) and self.margin >= 0.0)

    def row(self):
        return [self.check_id, self.anchor, self.n, self.value, self.bound, self.margin, self.passed]


@dataclass
class RunReport:
    subcommand: str
    problem: str
    records: List[CheckRecord] = field(default_factory=list)
    environment: Dict = field(default_factory=dict)

    def add(self, record):
        self.records.append(record)
        return record

    @property
    def passed(self):
        return all(r.passed for r in self.records)

    @property
    def failures(self):
        return [r for r in self.records if not r.passed]

    def summary(self):
        return f"{len(self.records)} checks, {len(self.failures)} failed"

    def to_dict(self):
        return {
            "subcommand": self.subcommand,
            "problem": self.problem,
            "passed": self.passed,
            "environment": self.environment,
            "records": [asdict(r) for r in self.records],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            subcommand=data["subcommand"],
            problem=data["problem"],
            records=[CheckRecord(**r) for r in data.get("records", [])],
            environment=data.get("environment", {}),
        )
