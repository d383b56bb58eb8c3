"""Domain errors for the collapse lab.

Every numeric error keeps the quantity that tripped it so that row-level
failures can be written into reports without re-deriving context.
"""

from typing import Optional


class OVCError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(OVCError):
    """Invalid experiment configuration or unreadable config file."""


class EmitError(OVCError):
    """Writing a report artifact failed."""

    def __init__(self, path: str, reason: str):
        self.path = path
        super().__init__(f"cannot write {path}: {reason}")


class PointTooCloseToCharge(OVCError):
    def __init__(self, distance: float, radius: float):
        self.distance = distance
        self.radius = radius
        super().__init__(
            f"point at distance {distance:.3e} from a charge, exclusion radius {radius:.3e}"
        )


class TolUnreachable(OVCError):
    def __init__(self, bound: float, tol: float, max_terms: int):
        self.bound = bound
        self.tol = tol
        self.max_terms = max_terms
        super().__init__(
            f"tail bound {bound:.3e} above tolerance {tol:.3e} at max_terms={max_terms}"
        )


class NegativePotential(OVCError):
    def __init__(self, value: float):
        self.value = value
        super().__init__(f"potential {value:.6e} is not positive")


class OnDiracString(OVCError):
    def __init__(self, axis_distance: float, radius: float):
        self.axis_distance = axis_distance
        self.radius = radius
        super().__init__(
            f"point at distance {axis_distance:.3e} from the string axis, "
            f"exclusion radius {radius:.3e}"
        )


class OriginSingular(OVCError):
    def __init__(self):
        super().__init__("period map is singular at y = 0")


class SingularMetric(OVCError):
    def __init__(self, detail: str = ""):
        super().__init__(f"metric is not positive definite{': ' + detail if detail else ''}")


class StepTooLarge(OVCError):
    def __init__(self, est_error: float, budget: float, fd_step: float):
        self.est_error = est_error
        self.budget = budget
        self.fd_step = fd_step
        super().__init__(
            f"curvature error estimate {est_error:.3e} exceeds budget {budget:.3e} "
            f"(fd_step={fd_step:.3e})"
        )


class AmbiguousRegion(OVCError):
    def __init__(self, eps: float, d: float, labels: Optional[list] = None):
        self.eps = eps
        self.d = d
        self.labels = labels or []
        matched = ", ".join(self.labels) if self.labels else "none"
        super().__init__(f"no unique region for eps={eps:.3e}, d={d:.6g} (matched: {matched})")


class InvalidSchedule(OVCError):
    """A d-schedule that does not show the required asymptotic trend."""


class GridTooCoarse(OVCError):
    def __init__(self, fd_error: float, observed: float, index: int):
        self.fd_error = fd_error
        self.observed = observed
        self.index = index
        super().__init__(
            f"finite-difference error {fd_error:.3e} exceeds observed difference "
            f"{observed:.3e} at sequence index {index}"
        )


class NotAdmissible(OVCError):
    def __init__(self, reason: str, value: float, limit: float):
        self.reason = reason
        self.value = value
        self.limit = limit
        super().__init__(f"matrix not admissible ({reason}): {value:.6e} vs {limit:.6e}")
