"""
Experiment registry and runner.

Each experiment family module exposes a ``router``; including it here makes
its experiments reachable by name from configs and the CLI.
"""

import hashlib
import json
import logging
import math
import time
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import ValidationError

from errors import ConfigError
from experiments import curvature, matrix, potential, regions
from models import ExperimentConfig, ExperimentName, Provenance, ReportBundle
from router import ExperimentRouter, Route
from settings import APP_VERSION, JOBS

logger = logging.getLogger(__name__)

_REGISTRY: Dict[ExperimentName, Route] = {}


def include_router(router: ExperimentRouter) -> None:
    for route in router.routes:
        if route.name in _REGISTRY:
            raise ConfigError(f"experiment {route.name.value} registered twice")
        _REGISTRY[route.name] = route


include_router(potential.router)
include_router(curvature.router)
include_router(regions.router)
include_router(matrix.router)


def list_experiments() -> List[Route]:
    return [_REGISTRY[name] for name in ExperimentName if name in _REGISTRY]


def load_config(source: Union[str, Path]) -> ExperimentConfig:
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return ExperimentConfig.model_validate_json(text)
    except ValidationError as exc:
        raise ConfigError(f"invalid config {path}:\n{exc}") from exc


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _finite(v) -> Optional[float]:
    return float(v) if v is not None and math.isfinite(v) else None


def run(config: ExperimentConfig, jobs: Optional[int] = None) -> ReportBundle:
    route = _REGISTRY.get(config.experiment)
    if route is None:
        raise ConfigError(f"no experiment registered for {config.experiment}")
    jobs = JOBS if jobs is None else jobs

    logger.info("running %s (%s family, jobs=%d)", route.name.value, route.family, jobs)
    start = time.perf_counter()
    outcome = route.handler(config, jobs)
    wall = time.perf_counter() - start

    bundle = ReportBundle(
        experiment=config.experiment,
        columns=outcome.columns,
        rows=outcome.rows,
        verdicts=outcome.verdicts,
        provenance=Provenance(config_hash=config_hash(config), code_version=APP_VERSION, seed=config.seed),
        series={k: [_finite(v) for v in vals] for k, vals in outcome.series.items()},
        wall_time=wall,
    )
    logger.info("%s finished in %.2fs: %s", route.name.value, wall,
                ", ".join(f"{v.name}={v.label}" for v in bundle.verdicts))
    return bundle
