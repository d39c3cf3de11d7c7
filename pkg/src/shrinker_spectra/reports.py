"""Machine-readable outcomes of identity, spectral, and obstruction checks."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class IdentityReport:
    """Outcome of one numerical identity check.

    ``passed`` is derived: a report passes exactly when the residual is
    within tolerance.  ``lhs``/``rhs`` carry representative values of the
    two sides (or the extremal values for inequality checks); ``meta``
    records mesh/shape provenance.
    """

    identity: str
    lhs: float
    rhs: float
    residual: float
    tol: float
    meta: dict = field(default_factory=dict)
    skipped: bool = False

    @property
    def passed(self) -> bool:
        return self.skipped or self.residual <= self.tol

    def to_dict(self) -> dict:
        return {
            "id": self.identity,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "residual": self.residual,
            "tol": self.tol,
            "pass": self.passed,
            "skipped": self.skipped,
            "meta": self.meta,
        }
