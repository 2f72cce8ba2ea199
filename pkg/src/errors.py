"""Exception hierarchy. Every error maps to a process exit code."""

from typing import Any, Dict, Optional


class CongruenceError(Exception):
    exit_code = 4
    kind = "error"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = dict(details or {})

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "message": self.message, "details": self.details}


# --- exit code 1 ---
class ParseError(CongruenceError):
    exit_code = 1
    kind = "parse"

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"{message} (line {line}, column {column})", {"line": line, "column": column})
        self.line = line
        self.column = column


# --- exit code 2 ---
class PrecisionInsufficient(CongruenceError):
    exit_code = 2
    kind = "precision_insufficient"


# --- exit code 3 ---
class Unstabilized(CongruenceError):
    exit_code = 3
    kind = "unstabilized"


# --- exit code 4 ---
class PreconditionViolation(CongruenceError):
    exit_code = 4
    kind = "precondition"


class ConstantTerm(PreconditionViolation):
    kind = "constant_term"


class UnitLinearTerm(PreconditionViolation):
    kind = "unit_linear_term"


class InfiniteLength(PreconditionViolation):
    kind = "infinite_length"


class DegreeCapExceeded(PreconditionViolation):
    kind = "degree_cap_exceeded"


class NotRegularDirection(PreconditionViolation):
    kind = "not_regular_direction"


class NotNiceForm(PreconditionViolation):
    kind = "not_nice_form"


class NotFound(PreconditionViolation):
    kind = "not_found"


class PsiNotTorsion(PreconditionViolation):
    kind = "psi_not_torsion"


class DepthCertificateFailed(PreconditionViolation):
    kind = "depth_certificate_failed"


class NoRecurringClass(PreconditionViolation):
    kind = "no_recurring_class"


class HomologySpread(PreconditionViolation):
    kind = "homology_spread"


class D2NotZero(PreconditionViolation):
    kind = "d2_not_zero"


# --- exit code 5 ---
class IdentityFailure(CongruenceError):
    exit_code = 5
    kind = "identity_failure"


class IdentityFailed(IdentityFailure):
    kind = "identity_failed"


class StrategyDisagreement(IdentityFailure):
    kind = "strategy_disagreement"


class IsoFailed(IdentityFailure):
    kind = "iso_failed"


class DualityFailed(IdentityFailure):
    kind = "duality_failed"


class TransferFailed(IdentityFailure):
    kind = "transfer_failed"
