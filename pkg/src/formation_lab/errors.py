"""Exception types. Every error carries a machine-readable ``category``."""

from __future__ import annotations


class FormationError(Exception):
    category = "formation-error"
    exit_code = 1

    def __init__(self, message: str, *, field: str | None = None, agent=None):
        super().__init__(message)
        self.field = field
        self.agent = agent

    def as_dict(self) -> dict:
        out = {"category": self.category, "message": str(self)}
        if self.field is not None:
            out["field"] = self.field
        if self.agent is not None:
            out["agent"] = self.agent
        return out


class StructuralError(FormationError):
    """Malformed graph: bad ids, duplicate followers, repeated neighbors."""

    category = "structural-error"
    exit_code = 3


class DegenerateConfigurationError(FormationError):
    """Collocated nominal agents or a zero-sum weight pair."""

    category = "degenerate-configuration"
    exit_code = 4


class NotLocalizableError(FormationError):
    category = "not-localizable"
    exit_code = 5


class AssumptionViolation(FormationError):
    category = "assumption-violation"
    exit_code = 6


class CertificateError(FormationError):
    category = "certificate-failure"
    exit_code = 7

    def __init__(self, message: str, *, alpha2_min: float | None = None, **kw):
        super().__init__(message, **kw)
        self.alpha2_min = alpha2_min

    def as_dict(self) -> dict:
        out = super().as_dict()
        if self.alpha2_min is not None:
            out["alpha2_min"] = self.alpha2_min
        return out


class ContractViolation(FormationError):
    category = "contract-violation"
    exit_code = 8


class DivergenceError(FormationError):
    category = "divergence"
    exit_code = 9


class SchemaError(FormationError):
    category = "schema-error"
    exit_code = 2


class ScenarioValidationError(FormationError):
    """Aggregates every violation found while validating a scenario."""

    category = "validation-failed"
    exit_code = 10

    def __init__(self, errors: list[FormationError]):
        self.errors = list(errors)
        lines = [f"[{e.category}] {e}" for e in self.errors]
        super().__init__("scenario validation failed:\n  " + "\n  ".join(lines))
        if len({e.category for e in self.errors}) == 1:
            # failures of a single kind are reported under that kind
            self.category = self.errors[0].category
            self.exit_code = self.errors[0].exit_code

    @property
    def categories(self) -> set[str]:
        return {e.category for e in self.errors}

    def as_dict(self) -> dict:
        out = self.errors[0].as_dict() if len(self.errors) == 1 else {"message": str(self)}
        out["category"] = self.category
        out["errors"] = [e.as_dict() for e in self.errors]
        return out
