"""Registration of experiments, one router per experiment family."""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

from errors import OVCError
from models import ExperimentConfig, ExperimentName, RowValue, Verdict, to_row_value

logger = logging.getLogger(__name__)


@dataclass
class ExperimentOutcome:
    columns: List[str]
    rows: List[Dict[str, RowValue]]
    verdicts: List[Verdict]
    series: Dict[str, List[Optional[float]]] = field(default_factory=dict)


Handler = Callable[[ExperimentConfig, int], ExperimentOutcome]


@dataclass
class Route:
    name: ExperimentName
    family: str
    description: str
    handler: Handler


class ExperimentRouter:
    def __init__(self, family: str):
        self.family = family
        self.routes: List[Route] = []

    def experiment(self, name: ExperimentName, description: str = ""):
        def register(fn: Handler) -> Handler:
            self.routes.append(Route(name=name, family=self.family,
                                     description=description or (fn.__doc__ or "").strip(),
                                     handler=fn))
            return fn
        return register


def make_row(columns: Sequence[str], **values: Any) -> Dict[str, RowValue]:
    """Row dict in column order; missing columns are None."""
    return {c: to_row_value(values.get(c)) for c in columns}


def capture(fn: Callable[..., Any], *args, **kwargs):
    """(result, None) or (None, message) for a domain error."""
    try:
        return fn(*args, **kwargs), None
    except OVCError as exc:
        logger.warning("%s failed: %s", getattr(fn, "__name__", "call"), exc)
        return None, f"{type(exc).__name__}: {exc}"


def strictly_decreasing(values: Sequence[Optional[float]]) -> bool:
    if any(v is None for v in values):
        return False
    return all(b < a for a, b in zip(values, values[1:]))


def threshold_verdict(name: str, observed: Optional[float], threshold: float,
                      below: bool = True, detail: str = "") -> Verdict:
    if observed is None:
        return Verdict(name=name, passed=False, threshold=threshold, observed=None,
                       detail=detail or "no value computed")
    passed = observed < threshold if below else observed > threshold
    return Verdict(name=name, passed=passed, threshold=threshold, observed=observed, detail=detail)
