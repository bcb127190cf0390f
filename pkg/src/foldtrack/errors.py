"""Exception taxonomy and the Verdict type shared by all modules."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional


class FoldtrackError(Exception):
    """Base class for all domain errors."""


class ValidationError(FoldtrackError):
    """An object violates a structural invariant.

    ``code`` is a short machine-readable tag (e.g. ``rank_mismatch``),
    ``location`` points at the offending vertex/edge/class id.
    """

    def __init__(self, code: str, location: str = "", detail: str = ""):
        self.code = code
        self.location = location
        self.detail = detail
        super().__init__(f"{code} at {location!r}: {detail}" if location else f"{code}: {detail}")


class IllegalMove(FoldtrackError):
    def __init__(self, code: str, detail: str = ""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}")


class Inconsistent(FoldtrackError):
    """A morphism does not factor through the requested move."""


class OutOfRange(FoldtrackError):
    pass


class NotAPath(FoldtrackError):
    pass


class NotClosed(FoldtrackError):
    pass


class GraphMismatch(FoldtrackError):
    pass


class Unsupported(FoldtrackError):
    """Requested data is not derivable from the finite quotient presentation."""


class SearchExhausted(FoldtrackError):
    pass


class EmptySystem(FoldtrackError):
    pass


class Disconnected(FoldtrackError):
    pass


@dataclass
class Verdict:
    """Outcome of a validation or certification check.

    ``ok`` is the overall answer; on failure ``code`` carries the first
    violated invariant and ``location`` the offending id.  ``data`` holds
    check-specific extras (conjugators, tripods, specialization chains).
    """

    ok: bool
    code: Optional[str] = None
    location: str = ""
    detail: str = ""
    data: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.ok

    @classmethod
    def good(cls, **data: Any) -> "Verdict":
        return cls(ok=True, data=data)

    @classmethod
    def bad(cls, code: str, location: str = "", detail: str = "", **data: Any) -> "Verdict":
        return cls(ok=False, code=code, location=location, detail=detail, data=data)

    def to_json(self) -> dict:
        out: dict[str, Any] = {"ok": self.ok}
        if not self.ok:
            out["error"] = self.code
            if self.location:
                out["location"] = self.location
            if self.detail:
                out["detail"] = self.detail
        for key, value in self.data.items():
            out[key] = value
        return out
