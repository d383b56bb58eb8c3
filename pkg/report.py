"""
Report artifacts: CSV tables, JSON summary and bundle, SVG figures.

CSV and JSON are byte-identical for identical bundles.  Figures drop the date
metadata and use a fixed hash salt; wall time goes to timing.json only.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from errors import ConfigError, EmitError  # noqa: E402
from models import ExperimentName, ReportBundle  # noqa: E402

logger = logging.getLogger(__name__)

FORMATS = ("csv", "json", "svg")

CSV_NAMES: Dict[ExperimentName, str] = {
    ExperimentName.POTENTIAL_IDENTITY: "potential_identity.csv",
    ExperimentName.HARMONICITY: "harmonicity.csv",
    ExperimentName.CONNECTION: "connection.csv",
    ExperimentName.RICCI_FLAT: "ricci_flat.csv",
    ExperimentName.CURVATURE_SWEEP: "sweep.csv",
    ExperimentName.REGION1: "region1.csv",
    ExperimentName.REGION2: "region2.csv",
    ExperimentName.REGION3: "region3.csv",
    ExperimentName.LIMIT_STABILITY: "limit_stability.csv",
    ExperimentName.MATRIX_LEMMA: "matrix_lemma.csv",
}

plt.rcParams["svg.hashsalt"] = "ovcollapse"


def parse_formats(value: str) -> List[str]:
    formats = [f.strip().lower() for f in value.split(",") if f.strip()]
    unknown = [f for f in formats if f not in FORMATS]
    if unknown:
        raise ConfigError(f"unknown output format(s) {unknown}; choose from {list(FORMATS)}")
    return formats


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def _write_text(path: Path, text: str) -> Path:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise EmitError(str(path), str(exc)) from exc
    return path


def write_csv(bundle: ReportBundle, out_dir: Path) -> Path:
    path = out_dir / CSV_NAMES[bundle.experiment]
    try:
        with path.open("w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(bundle.columns)
            for row in bundle.rows:
                w.writerow([format_cell(row.get(c)) for c in bundle.columns])
    except OSError as exc:
        raise EmitError(str(path), str(exc)) from exc
    return path


def summary(bundle: ReportBundle) -> dict:
    return {
        "experiment": bundle.experiment.value,
        "passed": bundle.passed,
        "verdicts": [
            {"name": v.name, "verdict": v.label, "threshold": v.threshold,
             "observed": v.observed, "detail": v.detail}
            for v in bundle.verdicts
        ],
        "provenance": bundle.provenance.model_dump(),
    }


def write_json(bundle: ReportBundle, out_dir: Path) -> List[Path]:
    text = json.dumps(summary(bundle), indent=2, sort_keys=True, allow_nan=False, default=_json_default)
    return [
        _write_text(out_dir / "summary.json", text + "\n"),
        _write_text(out_dir / "bundle.json", bundle.model_dump_json(indent=2) + "\n"),
    ]


def _json_default(value):
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def _loglog(path: Path, x: Iterable[Optional[float]], curves: Dict[str, Iterable[Optional[float]]],
            xlabel: str, ylabel: str, title: str) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    xs = list(x)
    for label, ys in curves.items():
        pts = [(a, b) for a, b in zip(xs, ys) if a is not None and b is not None and a > 0 and b > 0]
        if pts:
            style = "--" if label == "reference" else "o-"
            ax.plot([p[0] for p in pts], [p[1] for p in pts], style, label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise EmitError(str(path), str(exc)) from exc
    finally:
        plt.close(fig)
    return path


def write_svg(bundle: ReportBundle, out_dir: Path) -> List[Path]:
    s = bundle.series
    name = bundle.experiment
    if name is ExperimentName.CURVATURE_SWEEP and "eps" in s:
        return [_loglog(out_dir / "sweep.svg", s["eps"],
                        {"max |Rm|": s["max_norm_rm"], "reference": s.get("reference", [])},
                        "eps", "max |Rm|", "curvature sweep, reference eps^-1 log(1/eps)")]
    regions = {ExperimentName.REGION1: "region1", ExperimentName.REGION2: "region2",
               ExperimentName.REGION3: "region3"}
    if name in regions and "beta" in s:
        curves = {k: v for k, v in s.items() if k != "beta"}
        return [_loglog(out_dir / f"{regions[name]}.svg", s["beta"], curves,
                        "beta", "sup deviation", f"{name.value} convergence")]
    if name is ExperimentName.LIMIT_STABILITY and "lambda" in s:
        return [_loglog(out_dir / "limit_stability.svg", s["lambda"],
                        {"D": s["D"], "rescaled sup": s["rescaled_sup"]},
                        "lambda", "difference", "limit stability")]
    return []


def write_timing(bundle: ReportBundle, out_dir: Path) -> Optional[Path]:
    if bundle.wall_time is None:
        return None
    return _write_text(out_dir / "timing.json",
                       json.dumps({"wall_time_s": round(bundle.wall_time, 3)}, sort_keys=True) + "\n")


def emit(bundle: ReportBundle, out_dir, formats: Iterable[str] = FORMATS) -> List[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise EmitError(str(out), str(exc)) from exc

    written: List[Path] = []
    formats = list(formats)
    if "csv" in formats:
        written.append(write_csv(bundle, out))
    if "json" in formats:
        written.extend(write_json(bundle, out))
    if "svg" in formats:
        written.extend(write_svg(bundle, out))
    timing = write_timing(bundle, out)
    if timing:
        written.append(timing)
    for path in written:
        logger.info("wrote %s", path)
    return written


def load_bundle(path) -> ReportBundle:
    try:
        return ReportBundle.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read bundle {path}: {exc}") from exc
