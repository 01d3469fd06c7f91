"""Command-line entry point.

Subcommands: ``synth``, ``elicit``, ``schedule``, ``evaluate``, ``sweep`` and
``plot``. Every output file starts with ``#`` lines echoing the tool version
and the run configuration. Output paths are not echoed, so identical runs
into different directories produce identical bytes.

Exit codes: 0 success, 2 configuration error, 3 data or precondition error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import blr, report
from .data import (
    InsufficientData,
    ParseError,
    SynthConfig,
    ValidationError,
    load_dataset_dir,
    synth_cohort,
    validate_dataset,
    write_dataset,
)
from .evaluation import (
    DEFAULT_C_GRID,
    DEFAULT_F_GRID,
    DEFAULT_THRESHOLDS,
    EmptyInput,
    Method,
    Predictor,
    cohort_point,
    replay_dataset,
    replay_metrics,
    scheduled_times,
    sweep_thresholds,
)

logger = logging.getLogger("sigmasched")

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


def parse_grid(text: str) -> list[float]:
    """``a:b:n`` for n evenly spaced values from a to b, or a comma list."""
    text = text.strip()
    try:
        if ":" in text:
            a, b, n = text.split(":")
            return [float(v) for v in np.linspace(float(a), float(b), int(n))]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse grid {text!r}") from None


def _run_config(args: argparse.Namespace, skip: Sequence[str] = ("out", "func", "verbose")) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _load(args: argparse.Namespace):
    path = Path(args.data)
    if not (path / "events.csv").exists() or not (path / "schedules.csv").exists():
        raise DataError(f"{path} must contain events.csv and schedules.csv")
    return load_dataset_dir(path, drop_invalid=getattr(args, "drop_invalid", False))


def _load_priors(path: str | None) -> blr.PriorSpec | None:
    if path is None:
        return None
    if not Path(path).exists():
        raise DataError(f"priors file {path} not found")
    try:
        return blr.PriorSpec.from_json(path)
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"invalid priors file {path}: {exc}") from exc


def _replays(args: argparse.Namespace, dataset, predictor: Predictor, participants=None):
    kwargs: dict[str, Any] = {"participants": participants}
    if predictor is Predictor.BLR:
        priors = _load_priors(args.priors)
        if priors is None and not getattr(args, "lopo", True):
            raise DataError("the blr predictor needs --priors (or --lopo to elicit per participant)")
        kwargs["priors"] = priors
    elif predictor is Predictor.CONSTANT:
        if args.sigma is None:
            raise ConfigError("the constant predictor needs --sigma")
        kwargs["constant_sigma"] = args.sigma
    return replay_dataset(dataset, predictor, **kwargs)


def _method_parameter(args: argparse.Namespace) -> tuple[Method, float]:
    method = Method(args.method)
    if method is Method.SIGMA:
        if args.c is None or args.fixed_min is not None:
            raise ConfigError("--method sigma takes --c (and not --fixed-min)")
        value = args.c
    else:
        if args.fixed_min is None or args.c is not None:
            raise ConfigError("--method fixed takes --fixed-min (and not --c)")
        if getattr(args, "c_map", None):
            raise ConfigError("--c-map only applies to --method sigma")
        value = args.fixed_min
    if not math.isfinite(value) or value > 0:
        raise ConfigError(f"{method.value} parameter must be finite and <= 0, got {value}")
    return method, value


def _c_map(path: str | None) -> dict[str, float]:
    if not path:
        return {}
    raw = json.loads(Path(path).read_text())
    out = {str(k): float(v) for k, v in raw.items()}
    bad = {k: v for k, v in out.items() if v > 0}
    if bad:
        raise ConfigError(f"per-participant critical values must be <= 0: {bad}")
    return out


# ---------------------------------------------------------------------------
# Commands


def cmd_synth(args: argparse.Namespace) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
        if args.seed is not None:
            raw["seed"] = args.seed
        config = SynthConfig.from_dict(raw)
    except (OSError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid synth config: {exc}") from exc
    dataset = synth_cohort(config)
    try:
        validate_dataset(dataset)
    except ValidationError as exc:
        raise ConfigError(f"config yields an invalid dataset: {exc}") from exc
    header = report.header_lines("synth", {"synth_config": config.to_dict()})
    write_dataset(dataset, args.out, header)
    logger.info("wrote %d participants to %s", len(dataset.participants), args.out)
    return 0


def cmd_elicit(args: argparse.Namespace) -> int:
    dataset = _load(args)
    if args.holdout is not None and args.holdout not in dataset.ids:
        raise DataError(f"unknown participant {args.holdout!r}")
    train = [p for p in dataset.participants if p.id != args.holdout]
    if len(dataset.participants) < 2:
        raise InsufficientData("prior elicitation needs at least 2 participants")
    prior = blr.elicit_from_participants(train, dataset.anchor)
    doc = {"run_config": report.header_lines("elicit", _run_config(args)), **prior.to_dict()}
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return 0


SCHEDULE_COLUMNS = ("participant_id", "day_index", "slot", "user_time_min", "t_hat_min",
                    "sigma_min", "scheduled_min", "clipped", "event_time_min",
                    "intervened_before")


def cmd_schedule(args: argparse.Namespace) -> int:
    method, value = _method_parameter(args)
    c_map = _c_map(args.c_map)
    predictor = Predictor(args.predictor)
    dataset = _load(args)
    chosen = None
    if args.holdout is not None:
        if args.holdout not in dataset.ids:
            raise DataError(f"unknown participant {args.holdout!r}")
        chosen = [args.holdout]
    replays = _replays(args, dataset, predictor, chosen)
    rows = schedule_rows(dataset, replays, method, value, c_map)
    report.write_csv(args.out, report.header_lines("schedule", _run_config(args)),
                     SCHEDULE_COLUMNS, rows)
    return 0


def schedule_rows(dataset, replays, method: Method, value: float,
                  c_map: dict[str, float] | None = None) -> list[list]:
    """schedule.csv rows for every replayed cell, in (participant, day, slot) order."""
    c_map = c_map or {}
    events = {p.id: {(e.day_index, e.slot): e for e in p.events} for p in dataset.participants}
    rows = []
    for r in replays:
        times, clipped = scheduled_times(r, method, c_map.get(r.participant, value))
        for i, slot in enumerate(r.slot):
            e = events[r.participant].get((int(r.day[i]), slot))
            rows.append([
                r.participant, int(r.day[i]), slot.value, report.num(r.user_time[i]),
                report.num(r.t_hat[i]), report.num(r.sigma[i]), report.num(times[i]),
                int(clipped[i]),
                report.num(e.true_time) if e else "",
                int(e.intervened_before) if e else "",
            ])
    return rows


def cmd_evaluate(args: argparse.Namespace) -> int:
    method, value = _method_parameter(args)
    c_map = _c_map(args.c_map)
    predictor = Predictor(args.predictor)
    dataset = _load(args)
    thresholds = parse_grid(args.thresholds)
    replays = _replays(args, dataset, predictor)
    metrics = [replay_metrics(r, method, c_map.get(r.participant, value)) for r in replays]
    rows = [[m.participant, m.K, m.P, report.num(m.coverage),
             "" if m.P == 0 else report.num(m.mean_delay_min)] for m in metrics]
    header = report.header_lines("evaluate", _run_config(args))
    for th in thresholds:
        point = cohort_point(metrics, th, value)
        header.append(
            f"threshold {th:g}: proportion_meeting={point.proportion_meeting!r} "
            f"mean_delay_hours={point.mean_delay_hours!r}"
        )
    report.write_csv(args.out, header,
                     ("participant_id", "K", "P", "coverage", "mean_delay_min"), rows)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    grid_c = parse_grid(args.grid_c) if args.grid_c else list(DEFAULT_C_GRID)
    grid_f = parse_grid(args.grid_f) if args.grid_f else list(DEFAULT_F_GRID)
    thresholds = parse_grid(args.thresholds) if args.thresholds else list(DEFAULT_THRESHOLDS)
    if any(v > 0 for v in grid_c + grid_f):
        raise ConfigError("grid values must be <= 0")
    if any(not 0 <= t <= 1 for t in thresholds):
        raise ConfigError("thresholds must lie in [0, 1]")
    predictors = [Predictor(p) for p in args.predictor]
    dataset = _load(args)

    curves = {}
    curve_rows = []
    for predictor in predictors:
        replays = _replays(args, dataset, predictor)
        for method, grid in ((Method.FIXED, grid_f), (Method.SIGMA, grid_c)):
            for curve in sweep_thresholds(replays, predictor, method, grid, thresholds):
                curves[(predictor.value, method.value, curve.threshold)] = curve
                curve_rows.extend(report.curve_rows(predictor.value, [curve]))

    out = Path(args.out)
    header = report.header_lines("sweep", _run_config(args))
    report.write_csv(out / "curves.csv", header, report.CURVE_COLUMNS, curve_rows)
    report.write_csv(out / "auc.csv", header, report.AUC_COLUMNS, report.auc_rows(curves))
    columns, rows = report.auc_table_rows(curves, [p.value for p in predictors], thresholds)
    report.write_csv(out / "auc_table.csv", header, columns, rows)
    if args.svg:
        from . import plotting

        plotting.plot_all(curves, out)
    _print_table(columns, rows)
    return 0


def _print_table(columns: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    widths = [max(len(c), 8) for c in columns]
    print("  ".join(c.rjust(w) for c, w in zip(columns, widths)))
    for row in rows:
        print("  ".join(v.rjust(w) for v, w in zip(row, widths)))


def cmd_plot(args: argparse.Namespace) -> int:
    from . import plotting

    path = Path(args.curves)
    if not path.exists():
        raise DataError(f"{path} not found")
    for written in plotting.plot_all(report.read_curves(path), args.out):
        print(written)
    return 0


# ---------------------------------------------------------------------------


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="dataset directory (events.csv, schedules.csv)")
    p.add_argument("--drop-invalid", action="store_true",
                   help="exclude participants that fail validation instead of aborting")


def _add_predictor(p: argparse.ArgumentParser, multiple: bool = False) -> None:
    choices = [x.value for x in Predictor]
    if multiple:
        p.add_argument("--predictor", nargs="+", choices=choices, default=["residual", "blr"])
    else:
        p.add_argument("--predictor", choices=choices, default="residual")
    p.add_argument("--priors", help="priors.json for the blr predictor (same prior for everyone)")
    p.add_argument("--sigma", type=float, help="uncertainty in minutes for the constant predictor")


def _add_policy(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=[m.value for m in Method], required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--c", type=float, help="critical value (<= 0) for --method sigma")
    group.add_argument("--fixed-min", type=float, help="fixed offset in minutes (<= 0)")
    p.add_argument("--c-map", help="JSON {participant_id: c} overriding --c per participant")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sigmasched", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("--config", required=True, help="SynthConfig JSON")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("elicit", help="elicit BLR priors from all but one participant")
    _add_data(p)
    p.add_argument("--holdout", help="participant excluded from training")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_elicit)

    p = sub.add_parser("schedule", help="write one decision point per (participant, day, slot)")
    _add_data(p)
    _add_predictor(p)
    _add_policy(p)
    p.add_argument("--lopo", action="store_true",
                   help="blr: elicit priors per participant from all others")
    p.add_argument("--holdout", help="only schedule this participant")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("evaluate", help="per-participant coverage and delay for one policy")
    _add_data(p)
    _add_predictor(p)
    _add_policy(p)
    p.add_argument("--lopo", action="store_true",
                   help="blr: elicit priors per participant from all others")
    p.add_argument("--thresholds", default=",".join(f"{t:g}" for t in DEFAULT_THRESHOLDS))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="tradeoff curves and bounded AUC for both methods")
    _add_data(p)
    _add_predictor(p, multiple=True)
    p.add_argument("--grid-c", help="critical values, 'a:b:n' or comma list (default -3:0:31); "
                   "pass negative values as --grid-c=-3:0:31")
    p.add_argument("--grid-f", help="fixed offsets in minutes (default -360:0:37)")
    p.add_argument("--thresholds", help="desired-coverage thresholds (default 0.66..0.99)")
    p.add_argument("--svg", action="store_true", help="also render tradeoff figures")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="render SVG figures from curves.csv")
    p.add_argument("--curves", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ParseError, ValidationError, InsufficientData, EmptyInput) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (blr.NumericalFailure, blr.DegenerateNoise) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
