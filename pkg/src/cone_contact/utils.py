# Various Utilities
import logging
import os

import numpy as np


class ConeContactError(Exception):
    """Base exception class for the cone_contact package."""

    def __init__(self, message, error_code=None):
        super().__init__(message)
        self.error_code = error_code

    def __str__(self):
        if self.error_code is None:
            return super().__str__()
        return f"{super().__str__()} (Error Code: {self.error_code})"


class DomainError(ConeContactError, ValueError):
    """An operation was called outside its domain (zero vectors, non-convex bodies, ...)."""


class AdmissibilityError(DomainError):
    """A metric family violates its admissibility condition."""


class PathNotPositiveError(DomainError):
    """A path of contactomorphisms failed the positivity check."""


class NumericalError(ConeContactError, ArithmeticError):
    """A numerical refinement did not converge."""

    def __init__(self, message, residual=None, error_code=None):
        super().__init__(message, error_code=error_code)
        self.residual = residual


class IntegrationError(ConeContactError, ArithmeticError):
    """An ODE integration left its admissible region."""

    def __init__(self, message, last_state=None, last_time=None, error_code=None):
        super().__init__(message, error_code=error_code)
        self.last_state = last_state
        self.last_time = last_time


class ScenarioError(ConeContactError):
    """Bad scenario configuration."""

    def __init__(self, message, line=None, column=None, error_code=2):
        super().__init__(message, error_code=error_code)
        self.line = line
        self.column = column

    def __str__(self):
        where = ""
        if self.line is not None:
            where = f" at line {self.line}, column {self.column}"
        return f"{Exception.__str__(self)}{where} (Error Code: {self.error_code})"


class StrongConvexityWarning(UserWarning):
    """The fundamental tensor is not positive definite at a sampled ray."""


def configure_logging(level=None):
    """Configure the root logger once, from CONE_CONTACT_LOG_LEVEL unless given."""
    level = level or os.getenv("CONE_CONTACT_LOG_LEVEL", "INFO")
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def as_array(x) -> np.ndarray:
    """Component array of a geometric value or of anything array-like."""
    components = getattr(x, "components", None)
    if components is None:
        components = getattr(x, "coords", x)
    return np.asarray(components, dtype=float)


def require_nonzero(x: np.ndarray, what: str = "vector"):
    norms = np.linalg.norm(x, axis=-1)
    if np.any(norms == 0.0) or not np.all(np.isfinite(x)):
        raise DomainError(f"{what} must be finite and non-zero.", error_code=400)
    return norms
