from __future__ import annotations

from dataclasses import dataclass

PASS = "pass"
FAIL = "fail"
VACUOUS = "vacuous"


@dataclass(frozen=True)
class Verdict:
    status: str
    clause: str | None = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status != FAIL

    def to_json(self) -> list:
        if self.status == FAIL:
            return [self.status, self.clause, self.detail]
        return [self.status]

    @classmethod
    def from_json(cls, data) -> Verdict:
        return cls(*data)


OK = Verdict(PASS)


def fail(clause: str, detail: str = "") -> Verdict:
    return Verdict(FAIL, clause, detail)


def vacuous(clause: str, detail: str = "") -> Verdict:
    return Verdict(VACUOUS, clause, detail)


def combine(*verdicts: Verdict) -> Verdict:
    for v in verdicts:
        if v.status == FAIL:
            return v
    return OK
