"""Dataset files, filtered prediction grids and report emission."""

from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from circreg.bandwidth import CvConfig
from circreg.circfit import CircularFit, ObservationSet, SurfacePrediction, predict_batch
from circreg.core import wrap_angle
from circreg.errors import InsufficientDataError, InvalidInputError, ParseError, SchemaError
from circreg.simulate import StudyConfig, StudyReport

log = logging.getLogger(__name__)


def format_float(x: float) -> str:
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(x))


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


# --- datasets -----------------------------------------------------------------


@dataclass(frozen=True)
class DatasetFile:
    path: str | Path
    response_column: str
    covariate_columns: tuple[str, ...]
    angle_unit: str = "radians"

    def __post_init__(self):
        if self.angle_unit not in ("radians", "degrees"):
            raise InvalidInputError("angle_unit must be 'radians' or 'degrees'")
        object.__setattr__(self, "covariate_columns", tuple(self.covariate_columns))
        if not self.covariate_columns:
            raise InvalidInputError("need at least one covariate column")


def parse_dataset(file: DatasetFile) -> ObservationSet:
    """Read a comma-separated file with a header row into an ObservationSet."""
    with open(file.path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{file.path}: empty file, expected a header row") from None
        wanted = (file.response_column, *file.covariate_columns)
        for col in wanted:
            if col not in header:
                raise SchemaError(f"{file.path}: missing column {col!r}")
        idx = [header.index(c) for c in wanted]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            values = []
            for j, col in zip(idx, wanted):
                cell = row[j].strip() if j < len(row) else ""
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"{file.path}: line {lineno}, column {col!r}: cannot parse {cell!r}"
                    ) from None
                if not np.isfinite(values[-1]):
                    raise ParseError(f"{file.path}: line {lineno}, column {col!r}: non-finite value")
            rows.append(values)
    if len(rows) < 2:
        raise InsufficientDataError(f"{file.path}: need at least 2 observations, found {len(rows)}")
    arr = np.array(rows)
    theta = arr[:, 0]
    if file.angle_unit == "degrees":
        theta = np.deg2rad(theta)
    return ObservationSet(arr[:, 1:], wrap_angle(theta))


def write_dataset(path, data: ObservationSet, response_column: str, covariate_columns, degrees=False):
    """Write an ObservationSet in the format read by :func:`parse_dataset`."""
    covariate_columns = list(covariate_columns)
    if len(covariate_columns) != data.dimension:
        raise InvalidInputError("one column name per covariate is required")
    theta = np.rad2deg(data.responses) if degrees else data.responses
    rows = [
        [format_float(t)] + [format_float(v) for v in x]
        for t, x in zip(theta, data.covariates)
    ]
    atomic_write_text(path, _csv_text([response_column, *covariate_columns], rows))


def jitter_repeated(X, scale: float, cell, rng: np.random.Generator) -> np.ndarray:
    """Add uniform noise in ``[-scale*cell, scale*cell]`` to repeated covariate rows."""
    X = np.asarray(X, dtype=float)
    _, inverse, counts = np.unique(X, axis=0, return_inverse=True, return_counts=True)
    repeated = counts[inverse.ravel()] > 1
    out = X.copy()
    noise = rng.uniform(-1.0, 1.0, X.shape) * scale * np.asarray(cell, dtype=float)
    out[repeated] += noise[repeated]
    return out


# --- prediction grid ------------------------------------------------------------


@dataclass(frozen=True)
class GridFilterConfig:
    resolution: int = 100
    max_cell_distance: float = 15.0
    require_stability: bool = True
    bounds: tuple | None = None  # ((low_1, high_1), ...); data bounding box if None

    def __post_init__(self):
        if self.resolution < 2:
            raise InvalidInputError("grid resolution must be at least 2")
        if not self.max_cell_distance > 0:
            raise InvalidInputError("max_cell_distance must be positive")


@dataclass
class PredictionGrid:
    points: np.ndarray  # every grid point
    cell: np.ndarray  # grid spacing per axis
    near_data: np.ndarray  # rule (a)
    stable: np.ndarray  # rule (b)
    kept: np.ndarray
    prediction: SurfacePrediction | None = None

    @property
    def kept_points(self) -> np.ndarray:
        return self.points[self.kept]


def grid_axes(data: ObservationSet, config: GridFilterConfig) -> list[np.ndarray]:
    if config.bounds is not None:
        bounds = np.asarray(config.bounds, dtype=float).reshape(data.dimension, 2)
    else:
        bounds = np.column_stack([data.covariates.min(axis=0), data.covariates.max(axis=0)])
    if np.any(bounds[:, 1] <= bounds[:, 0]):
        raise InvalidInputError("grid bounds are degenerate; pass explicit bounds")
    return [np.linspace(lo, hi, config.resolution) for lo, hi in bounds]


def build_prediction_grid(data: ObservationSet, config: GridFilterConfig, fit: CircularFit | None = None) -> PredictionGrid:
    """Regular grid over the covariate box, filtered by distance to data and fit stability.

    A point is kept when it lies within ``max_cell_distance`` grid cells of an
    observation (distance measured per axis in units of that axis's spacing)
    and, if ``require_stability``, the local fit there is stable.
    """
    axes = grid_axes(data, config)
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.column_stack([g.ravel() for g in mesh])
    cell = np.array([a[1] - a[0] for a in axes])
    tree = cKDTree(data.covariates / cell)
    dist, _ = tree.query(points / cell, k=1)
    near = dist <= config.max_cell_distance + 1e-9
    stable = np.ones(points.shape[0], dtype=bool)
    prediction = None
    if fit is not None:
        prediction = predict_batch(fit, points)
        if config.require_stability:
            stable = prediction.stable
    elif config.require_stability:
        raise InvalidInputError("a fit is required to apply the stability filter")
    kept = near & stable
    if not kept.any():
        log.warning("prediction grid is empty after filtering")
    return PredictionGrid(points, cell, near, stable, kept, prediction)


# --- study config and reports -------------------------------------------------------


def parse_bandwidth_option(text: str, d: int):
    """``fixed:h11,h22,...`` | ``cv-diag`` | ``cv-scalar`` | ``cv-full``."""
    text = text.strip()
    modes = {"cv-diag": "diagonal", "cv-diagonal": "diagonal", "cv-scalar": "scalar", "cv-full": "full"}
    if text in modes:
        return modes[text]
    if not text.startswith("fixed:"):
        raise InvalidInputError(f"bad bandwidth option {text!r}")
    try:
        vals = np.array([float(v) for v in text[len("fixed:"):].split(",")])
    except ValueError:
        raise InvalidInputError(f"bad bandwidth values in {text!r}") from None
    if vals.size == 1:
        return float(vals[0])
    if vals.size == d:
        return vals
    if vals.size == d * d:
        return vals.reshape(d, d)
    raise InvalidInputError(f"fixed bandwidth needs 1, {d} or {d * d} values")


def study_config_from_mapping(values: dict, **overrides) -> StudyConfig:
    """Build a StudyConfig from flat ``key = value`` settings."""
    values = {k.strip().lower(): str(v).strip() for k, v in values.items()}
    values.update({k: str(v) for k, v in overrides.items() if v is not None})
    known = {
        "model", "n", "kappa", "replicates", "degree", "seed", "eval_grid", "kernel",
        "bandwidth.mode", "bandwidth.grid_per_axis", "bandwidth.grid_span", "bandwidth.fixed",
        "bandwidth.max_iterations", "bandwidth.simplex_tolerance",
    }
    unknown = sorted(set(values) - known)
    if unknown:
        raise InvalidInputError(f"unknown config keys: {', '.join(unknown)}")
    try:
        mode = values.get("bandwidth.mode", "cv-diag")
        if mode == "fixed":
            bandwidth = parse_bandwidth_option("fixed:" + values["bandwidth.fixed"], 2)
        else:
            kind = parse_bandwidth_option(mode, 2)
            if not isinstance(kind, str):
                raise InvalidInputError(f"bad bandwidth.mode {mode!r}")
            cv = {"matrix_kind": kind}
            if "bandwidth.grid_per_axis" in values:
                cv["grid_per_axis"] = int(values["bandwidth.grid_per_axis"])
            if "bandwidth.grid_span" in values:
                lo, hi = (float(v) for v in values["bandwidth.grid_span"].split(","))
                cv["grid_span"] = (lo, hi)
            if "bandwidth.max_iterations" in values:
                cv["max_iterations"] = int(values["bandwidth.max_iterations"])
            if "bandwidth.simplex_tolerance" in values:
                cv["simplex_tolerance"] = float(values["bandwidth.simplex_tolerance"])
            bandwidth = CvConfig(**cv)
        return StudyConfig(
            model=values.get("model", "M1"),
            n=int(values.get("n", 225)),
            kappa=float(values.get("kappa", 5.0)),
            replicates=int(values.get("replicates", 100)),
            degree=int(values.get("degree", 1)),
            bandwidth=bandwidth,
            seed=int(values.get("seed", 0)),
            eval_grid=int(values.get("eval_grid", 0)),
            kernel=values.get("kernel", "epanechnikov"),
        )
    except (KeyError, ValueError) as exc:
        raise InvalidInputError(f"bad study config: {exc}") from None


def load_study_config(path, **overrides) -> StudyConfig:
    """Read a flat ``key = value`` study file (``#`` comments allowed)."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str
    text = Path(path).read_text(encoding="utf-8")
    parser.read_string("[study]\n" + text)
    return study_config_from_mapping(dict(parser["study"]), **overrides)


def report_summary(report: StudyReport) -> dict:
    cfg = report.config
    bw = cfg.bandwidth
    summary = {
        "model": cfg.model.name,
        "n": cfg.n,
        "kappa": cfg.kappa,
        "replicates": cfg.replicates,
        "degree": cfg.degree,
        "kernel": cfg.kernel,
        "seed": cfg.seed,
        "bandwidth": (
            {"mode": bw.matrix_kind, "grid_per_axis": bw.grid_per_axis, "grid_span": list(bw.grid_span)}
            if isinstance(bw, CvConfig)
            else {"mode": "fixed", "matrix": bw.matrix.tolist()}
        ),
        "mean_case": report.mean_case,
        "failed_replicates": report.failures,
    }
    if report.pointwise is not None:
        pw = report.pointwise
        summary["eval_grid"] = cfg.eval_grid
        summary["mean_cb"] = float(np.nanmean(pw.cb))
        summary["mean_cvar"] = float(np.nanmean(pw.cvar))
        summary["mean_cmse"] = float(np.nanmean(pw.cmse))
    return summary


def write_study_report(report: StudyReport, prefix) -> list[Path]:
    """Emit ``<prefix>.csv`` (one row per replicate), ``<prefix>.json`` and,
    when pointwise metrics exist, ``<prefix>_pointwise.csv``."""
    prefix = Path(prefix)
    d = report.config.model.dimension
    h_cols = [f"h{i + 1}{j + 1}" for i in range(d) for j in range(d)]
    rows = []
    for o in report.replicates:
        hs = o.bandwidth.ravel() if o.bandwidth is not None else [float("nan")] * len(h_cols)
        rows.append(
            [o.index, format_float(o.case), o.undefined, *[format_float(h) for h in hs], o.error or ""]
        )
    paths = [prefix.parent / f"{prefix.name}.csv", prefix.parent / f"{prefix.name}.json"]
    atomic_write_text(paths[0], _csv_text(["replicate", "case", "undefined", *h_cols, "error"], rows))
    atomic_write_text(paths[1], json.dumps(report_summary(report), indent=2, sort_keys=True) + "\n")
    if report.pointwise is not None:
        pw = report.pointwise
        x_cols = [f"x{i + 1}" for i in range(d)]
        prow = [
            [*[format_float(v) for v in pw.points[i]], format_float(pw.truth[i]),
             format_float(pw.mean_direction[i]), format_float(pw.cb[i]), format_float(pw.cvar[i]),
             format_float(pw.cmse[i]), int(pw.used[i])]
            for i in range(pw.points.shape[0])
        ]
        path = prefix.parent / f"{prefix.name}_pointwise.csv"
        atomic_write_text(path, _csv_text([*x_cols, "truth", "mean_estimate", "cb", "cvar", "cmse", "replicates_used"], prow))
        paths.append(path)
    return paths


def write_csv(path, header, rows) -> None:
    atomic_write_text(path, _csv_text(header, rows))
