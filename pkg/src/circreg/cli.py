"""Command-line interface: ``circreg {fit,predict,cv,simulate}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from circreg.bandwidth import CvConfig, cv_search
from circreg.circfit import CircularFit, ObservationSet
from circreg.errors import CircRegError
from circreg.io import (
    DatasetFile,
    GridFilterConfig,
    atomic_write_text,
    build_prediction_grid,
    format_float,
    grid_axes,
    jitter_repeated,
    load_study_config,
    parse_bandwidth_option,
    parse_dataset,
    write_csv,
    write_study_report,
)
from circreg.kernels import KernelSpec
from circreg.localpoly import LocalFitSpec, as_bandwidth
from circreg.simulate import run_study

log = logging.getLogger("circreg")


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="comma-separated file with a header row")
    p.add_argument("--response", required=True, help="column holding the circular response")
    p.add_argument("--covariates", required=True, help="comma-separated covariate column names")
    p.add_argument("--degrees", action="store_true", help="angles in degrees (input and output)")
    p.add_argument("--degree", type=int, default=1, help="local polynomial degree p")
    p.add_argument("--kernel", choices=["epanechnikov", "gaussian"], default="epanechnikov")
    p.add_argument(
        "--bandwidth", default="cv-diag", help="fixed:h11,h22,... | cv-diag | cv-scalar | cv-full"
    )
    p.add_argument("--grid-per-axis", type=int, default=None, help="CV grid size per axis")
    p.add_argument("--jitter", type=float, default=0.0, help="jitter repeated covariates by +-scale cells")
    p.add_argument("--grid-resolution", type=int, default=100)
    p.add_argument("--max-cell-distance", type=float, default=15.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="circreg", description="Kernel regression for circular responses."
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="select or accept a bandwidth and write the fit record")
    _data_args(p)

    p = sub.add_parser("predict", help="evaluate a fit over a filtered prediction grid")
    _data_args(p)
    p.add_argument("--fit", default=None, help="fit record from `circreg fit` (reuses its bandwidth)")
    p.add_argument("--no-stability-filter", action="store_true")

    p = sub.add_parser("cv", help="report the cross-validation search as JSON")
    _data_args(p)

    p = sub.add_parser("simulate", help="run a Monte-Carlo study from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--replicates", type=int, default=None, help="overrides the config value")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True, help="output prefix; writes <out>.csv and <out>.json")
    return parser


def _load(args) -> tuple[ObservationSet, list[str]]:
    cols = [c.strip() for c in args.covariates.split(",") if c.strip()]
    unit = "degrees" if args.degrees else "radians"
    data = parse_dataset(DatasetFile(args.data, args.response, cols, unit))
    if args.jitter > 0:
        cfg = GridFilterConfig(resolution=args.grid_resolution)
        cell = [a[1] - a[0] for a in grid_axes(data, cfg)]
        X = jitter_repeated(data.covariates, args.jitter, cell, np.random.default_rng(args.seed))
        data = ObservationSet(X, data.responses)
    return data, cols


def _resolve_bandwidth(args, data: ObservationSet, kernel: KernelSpec):
    """Return (BandwidthMatrix, CvResult or None)."""
    choice = parse_bandwidth_option(args.bandwidth, data.dimension)
    if isinstance(choice, str):
        cv_kwargs = {"matrix_kind": choice}
        if args.grid_per_axis is not None:
            cv_kwargs["grid_per_axis"] = args.grid_per_axis
        result = cv_search(data, args.degree, kernel, CvConfig(**cv_kwargs))
        return result.bandwidth, result
    return as_bandwidth(choice, data.dimension), None


def _fit_record(args, data, cols, H, cv) -> dict:
    return {
        "degree": args.degree,
        "kernel": args.kernel,
        "bandwidth": H.matrix.tolist(),
        "bandwidth_kind": H.kind,
        "n": data.n,
        "response": args.response,
        "covariates": cols,
        "angle_unit": "degrees" if args.degrees else "radians",
        "cv_score": cv.score if cv is not None else None,
    }


def cmd_fit(args) -> int:
    data, cols = _load(args)
    kernel = KernelSpec(args.kernel, data.dimension)
    H, cv = _resolve_bandwidth(args, data, kernel)
    LocalFitSpec(args.degree, kernel, H)
    record = _fit_record(args, data, cols, H, cv)
    atomic_write_text(args.out, json.dumps(record, indent=2) + "\n")
    return 0


def cmd_cv(args) -> int:
    data, cols = _load(args)
    kernel = KernelSpec(args.kernel, data.dimension)
    choice = parse_bandwidth_option(args.bandwidth, data.dimension)
    if not isinstance(choice, str):
        print("error: cv needs --bandwidth cv-diag, cv-scalar or cv-full", file=sys.stderr)
        return 1
    _, result = _resolve_bandwidth(args, data, kernel)
    out = {
        "kind": result.kind,
        "selected": result.bandwidth.matrix.tolist(),
        "score": result.score,
        "iterations": result.iterations,
        "converged": result.converged,
        "surface": [
            {"bandwidth": H.matrix.tolist(), "score": s}
            for H, s in zip(result.candidates, result.scores)
        ],
    }
    atomic_write_text(args.out, json.dumps(out, indent=2) + "\n")
    return 0


def cmd_predict(args) -> int:
    data, cols = _load(args)
    kernel = KernelSpec(args.kernel, data.dimension)
    if args.fit:
        record = json.loads(Path(args.fit).read_text(encoding="utf-8"))
        H = as_bandwidth(np.array(record["bandwidth"]), data.dimension)
    else:
        H, _ = _resolve_bandwidth(args, data, kernel)
    fit = CircularFit(data, LocalFitSpec(args.degree, kernel, H))
    config = GridFilterConfig(
        resolution=args.grid_resolution,
        max_cell_distance=args.max_cell_distance,
        require_stability=not args.no_stability_filter,
    )
    grid = build_prediction_grid(data, config, fit)
    pred = grid.prediction
    unit = "degrees" if args.degrees else "radians"
    rows = []
    for i in np.nonzero(grid.kept)[0]:
        direction = pred.direction[i]
        if args.degrees:
            direction = np.rad2deg(direction)
        rows.append(
            [*[format_float(v) for v in grid.points[i]], format_float(direction),
             format_float(pred.ell_hat[i]), "true" if pred.stable[i] else "false"]
        )
    if not rows:
        print("warning: no grid point survived the filters; writing header only", file=sys.stderr)
    write_csv(args.out, [*cols, f"direction_{unit}", "ell_hat", "stable"], rows)
    return 0


def cmd_simulate(args) -> int:
    config = load_study_config(args.config, seed=args.seed, replicates=args.replicates)
    report = run_study(config, workers=max(1, args.threads))
    write_study_report(report, args.out)
    return 0


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "cv": cmd_cv, "simulate": cmd_simulate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (CircRegError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
