"""Command-line interface and file formats.

Verbs: ``fit`` (estimate a mixing distribution from a population CSV),
``simulate`` (draw a synthetic cohort), ``check`` (append the optimality
certificate to a finished fit), and ``report`` (render SVG summaries).

Data CSV schema (header is exact): ``id,evid,time,amount,duration,route,obs``.
Rows with evid=1 are doses and must leave ``obs`` empty; rows with evid=0 are
observations and must leave ``amount``/``duration``/``route`` empty. Rows are
grouped by id in file order and times must be non-decreasing within a subject.

Config files are strict JSON: unknown keys anywhere are rejected so typos
fail loudly instead of silently falling back to defaults.
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .data import (DiscreteDistribution, DoseEvent, ObservationEvent, ParameterSpace,
                   Population, Subject)
from .driver import (FitConfig, FitResult, fit_npod, optimality_check, weighted_stats)
from .exceptions import ConfigError, ConvergenceFailureError, NpmlError, ParseError
from .likelihood import ADDITIVE, PROPORTIONAL, ErrorModel
from .models import MODEL_PARAMETERS, ModelSpec
from .refine import RefinementConfig
from .sampling import MixtureComponent, SimulationSpec, simulate_population

DATA_HEADER = ("id", "evid", "time", "amount", "duration", "route", "obs")

# Fit-section keys the strict schema accepts, with defaults for the optional ones.
FIT_DEFAULTS = {
    "init_points": 1024,
    "seed": 0,
    "max_cycles": 1000,
    "delta_f": 1e-4,
    "delta_lambda": 1e-3,
    "delta_d": 1e-4,
    "nm_steps": 5,
    "qr_ratio_threshold": 1e-8,
}


# ----------------------------------------------------------------------------
# file plumbing
# ----------------------------------------------------------------------------

def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(f"{path.name}.tmp-{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _fmt(x: float) -> str:
    """Shortest decimal that round-trips the double exactly."""
    return repr(float(x))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ----------------------------------------------------------------------------
# population CSV
# ----------------------------------------------------------------------------

def parse_data_csv(path) -> Population:
    """Read a population from the CSV schema above.

    Raises :class:`ParseError` naming the file and 1-based line number on any
    schema violation.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"data file not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(f"{path}: not valid UTF-8: {e}") from e

    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != DATA_HEADER:
        raise ParseError(f"{path}:1: header must be exactly {','.join(DATA_HEADER)}")

    def fail(line: int, message: str):
        raise ParseError(f"{path}:{line}: {message}")

    def number(line: int, cell: str, what: str) -> float:
        try:
            return float(cell)
        except ValueError:
            fail(line, f"cannot parse {what} {cell!r} as a decimal number")

    subjects: list[Subject] = []
    current_id = None
    doses: list[DoseEvent] = []
    observations: list[ObservationEvent] = []
    last_time = -math.inf

    def flush(line: int):
        if current_id is None:
            return
        try:
            subjects.append(Subject(current_id, tuple(doses), tuple(observations)))
        except ValueError as e:
            fail(line, str(e))

    for line, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(DATA_HEADER):
            fail(line, f"expected {len(DATA_HEADER)} cells, got {len(row)}")
        sid, evid, t, amount, duration, route, obs = (c.strip() for c in row)
        if not sid:
            fail(line, "empty subject id")
        if sid != current_id:
            flush(line)
            current_id, doses, observations = sid, [], []
            last_time = -math.inf
        t_value = number(line, t, "time")
        if t_value < last_time:
            fail(line, f"time {t} decreases within subject {sid!r}")
        last_time = t_value
        try:
            if evid == "1":
                if obs:
                    fail(line, "dose row (evid=1) must leave obs empty")
                if not amount:
                    fail(line, "dose row (evid=1) requires an amount")
                doses.append(DoseEvent(
                    time=t_value,
                    amount=number(line, amount, "amount"),
                    duration=number(line, duration, "duration") if duration else 0.0,
                    route=route or "infusion"))
            elif evid == "0":
                if amount or duration or route:
                    fail(line, "observation row (evid=0) must leave amount/duration/route empty")
                if not obs:
                    fail(line, "observation row (evid=0) requires an obs value")
                observations.append(ObservationEvent(time=t_value, value=number(line, obs, "obs")))
            else:
                fail(line, f"evid must be 0 or 1, got {evid!r}")
        except ValueError as e:
            fail(line, str(e))
    flush(len(rows) + 1)
    try:
        return Population(tuple(subjects))
    except ValueError as e:
        raise ParseError(f"{path}: {e}") from e


def format_data_csv(population: Population) -> str:
    """Inverse of :func:`parse_data_csv`; floats keep full precision."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(DATA_HEADER)
    for subject in population:
        events = [(d.time, 0, d) for d in subject.doses]
        events += [(o.time, 1, o) for o in subject.observations]
        for _, kind, e in sorted(events, key=lambda x: (x[0], x[1])):
            if kind == 0:
                writer.writerow([subject.id, 1, _fmt(e.time), _fmt(e.amount),
                                 _fmt(e.duration), e.route, ""])
            else:
                writer.writerow([subject.id, 0, _fmt(e.time), "", "", "", _fmt(e.value)])
    return out.getvalue()


# ----------------------------------------------------------------------------
# config
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ConfigBundle:
    model: ModelSpec
    space: ParameterSpace
    error: ErrorModel
    fit_options: dict
    simulation: SimulationSpec | None


def _strict(section: dict, allowed, where: str) -> None:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} in {where} (allowed: {sorted(allowed)})")


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing key {key!r} in {where}")
    return section[key]


def parse_config(path) -> ConfigBundle:
    """Parse and validate a strict-schema JSON config."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(document, dict):
        raise ConfigError(f"{path}: top level must be an object")
    _strict(document, {"model", "error", "fit", "simulate"}, "config")

    model_section = _require(document, "model", "config")
    _strict(model_section, {"kind", "parameters", "fixed"}, "model")
    kind = _require(model_section, "kind", "model")
    if kind not in MODEL_PARAMETERS:
        raise ConfigError(f"unknown model kind {kind!r} (known: {sorted(MODEL_PARAMETERS)})")
    fixed = model_section.get("fixed", {})
    if not isinstance(fixed, dict):
        raise ConfigError("model.fixed must be an object of name -> value")
    try:
        model = ModelSpec(kind, tuple(fixed.items()))
    except ValueError as e:
        raise ConfigError(str(e)) from e

    parameters = _require(model_section, "parameters", "model")
    names, lowers, uppers = [], [], []
    for i, p in enumerate(parameters):
        _strict(p, {"name", "lower", "upper"}, f"model.parameters[{i}]")
        names.append(_require(p, "name", f"model.parameters[{i}]"))
        lowers.append(_require(p, "lower", f"model.parameters[{i}]"))
        uppers.append(_require(p, "upper", f"model.parameters[{i}]"))
    if tuple(names) != model.free_names:
        raise ConfigError(
            f"model.parameters must list the free parameters of {kind} in order "
            f"{model.free_names}, got {tuple(names)}")
    try:
        space = ParameterSpace(tuple(names), np.array(lowers, float), np.array(uppers, float))
    except ValueError as e:
        raise ConfigError(str(e)) from e

    error_section = _require(document, "error", "config")
    _strict(error_section, {"c0", "c1", "c2", "c3", "mode", "value"}, "error")
    mode = _require(error_section, "mode", "error")
    if mode not in (ADDITIVE, PROPORTIONAL):
        raise ConfigError(f"error.mode must be 'additive' or 'proportional', got {mode!r}")
    try:
        error = ErrorModel(
            poly=tuple(float(error_section.get(c, 0.0)) for c in ("c0", "c1", "c2", "c3")),
            mode=mode, value=float(_require(error_section, "value", "error")))
    except ValueError as e:
        raise ConfigError(str(e)) from e

    fit_section = dict(document.get("fit", {}))
    _strict(fit_section, FIT_DEFAULTS, "fit")
    fit_options = {**FIT_DEFAULTS, **fit_section}

    simulation = None
    if "simulate" in document:
        simulation = _parse_simulate(document["simulate"], model, error)

    return ConfigBundle(model, space, error, fit_options, simulation)


def _parse_simulate(section: dict, model: ModelSpec, error: ErrorModel) -> SimulationSpec:
    _strict(section, {"n_subjects", "seed", "regimen", "sample_times", "truth"}, "simulate")
    regimen = []
    for i, d in enumerate(_require(section, "regimen", "simulate")):
        _strict(d, {"time", "amount", "duration", "route"}, f"simulate.regimen[{i}]")
        try:
            regimen.append(DoseEvent(
                time=float(_require(d, "time", f"simulate.regimen[{i}]")),
                amount=float(_require(d, "amount", f"simulate.regimen[{i}]")),
                duration=float(d.get("duration", 0.0)),
                route=d.get("route", "infusion")))
        except ValueError as e:
            raise ConfigError(f"simulate.regimen[{i}]: {e}") from e

    truth_section = _require(section, "truth", "simulate")
    _strict(truth_section, {"components", "points", "weights"}, "simulate.truth")
    if "components" in truth_section:
        if "points" in truth_section or "weights" in truth_section:
            raise ConfigError("simulate.truth takes either components or points+weights, not both")
        components = []
        for i, c in enumerate(truth_section["components"]):
            _strict(c, {"fraction", "mean", "sd"}, f"simulate.truth.components[{i}]")
            try:
                components.append(MixtureComponent(
                    fraction=float(_require(c, "fraction", f"simulate.truth.components[{i}]")),
                    mean=tuple(_require(c, "mean", f"simulate.truth.components[{i}]")),
                    sd=tuple(_require(c, "sd", f"simulate.truth.components[{i}]"))))
            except ValueError as e:
                raise ConfigError(f"simulate.truth.components[{i}]: {e}") from e
        truth = tuple(components)
    else:
        try:
            truth = DiscreteDistribution.from_arrays(
                _require(truth_section, "points", "simulate.truth"),
                _require(truth_section, "weights", "simulate.truth"))
        except ValueError as e:
            raise ConfigError(f"simulate.truth: {e}") from e

    try:
        return SimulationSpec(
            model=model, truth=truth, regimen=tuple(regimen),
            sample_times=tuple(_require(section, "sample_times", "simulate")),
            error=error,
            n_subjects=int(_require(section, "n_subjects", "simulate")),
            seed=int(section.get("seed", 0)))
    except ValueError as e:
        raise ConfigError(f"simulate: {e}") from e


def build_fit_config(bundle: ConfigBundle, seed: int | None = None) -> FitConfig:
    o = bundle.fit_options
    return FitConfig(
        model=bundle.model, error=bundle.error,
        init_points=int(o["init_points"]),
        seed=int(seed if seed is not None else o["seed"]),
        max_cycles=int(o["max_cycles"]),
        delta_f=float(o["delta_f"]),
        refinement=RefinementConfig(
            delta_lambda=float(o["delta_lambda"]),
            qr_ratio_threshold=float(o["qr_ratio_threshold"]),
            delta_d=float(o["delta_d"]),
            nm_steps=int(o["nm_steps"])))


# ----------------------------------------------------------------------------
# outputs
# ----------------------------------------------------------------------------

def _summary_payload(result: FitResult, space: ParameterSpace) -> dict:
    stats = weighted_stats(result.distribution)
    payload = {
        "log_likelihood": result.log_likelihood,
        "neg2_log_likelihood": -2.0 * result.log_likelihood,
        "cycles": len(result.cycles),
        "converged": result.converged,
        "n_support_points": result.distribution.n_points,
        "stats": {
            "names": list(space.names),
            "mean": stats.mean.tolist(),
            "variance": stats.variance.tolist(),
            "covariance": stats.covariance.tolist(),
            "median": stats.median.tolist(),
        },
        "optimality": None,
    }
    if result.optimality is not None:
        payload["optimality"] = {
            "max_d_probe": result.optimality.max_d_probe,
            "n_probes": result.optimality.n_probes,
        }
    return payload


def _write_json(path: Path, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_fit_outputs(out: Path, result: FitResult, space: ParameterSpace) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(space.names) + ["weight"])
    for point, weight in zip(result.distribution.points, result.distribution.weights):
        writer.writerow([_fmt(c) for c in point.coords] + [_fmt(weight)])
    _atomic_write(out / "support_points.csv", buf.getvalue())

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["cycle", "log_likelihood", "n_points_after_reduce", "wall_time_ms"])
    for r in result.cycles:
        writer.writerow([r.cycle, _fmt(r.log_likelihood), r.n_points_after_reduce, r.wall_time_ms])
    _atomic_write(out / "cycles.csv", buf.getvalue())

    _write_json(out / "summary.json", _summary_payload(result, space))


def _write_manifest(out: Path, seed: int | None, started: str, inputs: dict[str, str]) -> None:
    payload = {
        "artifact_version": __version__,
        "seed": seed,
        "started_at": started,
        "finished_at": _utc_now(),
        "input_digests": inputs,
    }
    _write_json(out / "manifest.json", payload)


def _utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _read_support_points(out: Path, space: ParameterSpace) -> DiscreteDistribution:
    path = out / "support_points.csv"
    if not path.exists():
        raise ParseError(f"support points file not found: {path} (run fit first)")
    rows = list(csv.reader(io.StringIO(path.read_text(encoding="utf-8"))))
    expected = list(space.names) + ["weight"]
    if not rows or rows[0] != expected:
        raise ParseError(f"{path}:1: header must be {','.join(expected)}")
    coords = np.array([[float(c) for c in row[:-1]] for row in rows[1:]])
    weights = np.array([float(row[-1]) for row in rows[1:]])
    return DiscreteDistribution.from_arrays(coords, weights / weights.sum())


# ----------------------------------------------------------------------------
# SVG report
# ----------------------------------------------------------------------------

def _svg_document(width: int, height: int, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">')
    return "\n".join([head, *body, "</svg>", ""])


def _axis_frame(x0, y0, x1, y1, x_label, y_label) -> list[str]:
    return [
        f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" fill="none" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2}" y="{y0 + 32}" text-anchor="middle" font-size="13">{x_label}</text>',
        f'<text x="{x0 - 44}" y="{(y0 + y1) / 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 {x0 - 44} {(y0 + y1) / 2})">{y_label}</text>',
    ]


def _scale(values: np.ndarray, lo_px: float, hi_px: float) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.full_like(values, (lo_px + hi_px) / 2.0)
    return lo_px + (values - lo) / (hi - lo) * (hi_px - lo_px)


def render_objective_trace(cycles: list[tuple[int, float]]) -> str:
    x0, y0, x1, y1 = 60, 360, 600, 20  # y0 is the bottom in pixel space
    xs = np.array([c for c, _ in cycles], dtype=float)
    ys = np.array([ll for _, ll in cycles], dtype=float)
    px = _scale(xs, x0, x1)
    py = _scale(ys, y0, y1)
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(px, py))
    body = _axis_frame(x0, y0, x1, y1, "cycle", "log likelihood")
    body.append(f'<polyline points="{pts}" fill="none" stroke="#1f6feb" stroke-width="1.5"/>')
    body += [f'<circle cx="{x:.2f}" cy="{y:.2f}" r="2.5" fill="#1f6feb"/>' for x, y in zip(px, py)]
    body.append(f'<text x="{x1}" y="{y1 - 6}" text-anchor="end" font-size="12">'
                f'final {ys[-1]:.4f} after {int(xs[-1])} cycles</text>')
    return _svg_document(640, 400, body)


def render_support_points(distribution: DiscreteDistribution, space: ParameterSpace) -> str:
    x0, y0, x1, y1 = 60, 360, 600, 20
    coords = distribution.coords_array()
    if space.dim >= 2:
        xs, ys = coords[:, 0], coords[:, 1]
        x_label, y_label = space.names[0], space.names[1]
    else:
        xs, ys = coords[:, 0], distribution.weights
        x_label, y_label = space.names[0], "weight"
    px = _scale(xs, x0, x1)
    py = _scale(ys, y0, y1)
    body = _axis_frame(x0, y0, x1, y1, x_label, y_label)
    for x, y, w in zip(px, py, distribution.weights):
        r = 2.0 + 14.0 * math.sqrt(float(w))
        body.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r:.2f}" fill="#d73a49" '
                    f'fill-opacity="0.6" stroke="#d73a49"/>')
    return _svg_document(640, 400, body)


# ----------------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------------

def _resolve_threads(value: int | None) -> int:
    if value is None:
        value = int(os.environ.get("NPML_THREADS", "1"))
    return os.cpu_count() or 1 if value == 0 else max(1, value)


def run_fit(args) -> int:
    started = _utc_now()
    bundle = parse_config(args.config)
    population = parse_data_csv(args.data)
    config = build_fit_config(bundle, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = fit_npod(population, bundle.space, config, threads=_resolve_threads(args.threads))
    except ConvergenceFailureError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    _write_fit_outputs(out, result, bundle.space)
    _write_manifest(out, config.seed, started,
                    {Path(args.config).name: _sha256(Path(args.config)),
                     Path(args.data).name: _sha256(Path(args.data))})
    if not result.converged:
        print(f"fit did not converge within {config.max_cycles} cycles", file=sys.stderr)
        return 2
    print(f"converged in {len(result.cycles)} cycles, "
          f"log likelihood {result.log_likelihood:.6f}, "
          f"{result.distribution.n_points} support points -> {out}")
    return 0


def run_simulate(args) -> int:
    started = _utc_now()
    bundle = parse_config(args.config)
    if bundle.simulation is None:
        raise ConfigError("config has no 'simulate' section")
    spec = bundle.simulation
    if args.seed is not None:
        from dataclasses import replace
        spec = replace(spec, seed=args.seed)
    population, thetas = simulate_population(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "data.csv", format_data_csv(population))

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id"] + [f"true_{n}" for n in _truth_names(spec)])
    for subject, theta in zip(population, thetas):
        writer.writerow([subject.id] + [_fmt(v) for v in theta])
    _atomic_write(out / "truth.csv", buf.getvalue())
    _write_manifest(out, spec.seed, started,
                    {Path(args.config).name: _sha256(Path(args.config))})
    print(f"simulated {len(population)} subjects -> {out}")
    return 0


def _truth_names(spec: SimulationSpec) -> tuple[str, ...]:
    d = (spec.truth.coords_array().shape[1] if isinstance(spec.truth, DiscreteDistribution)
         else len(spec.truth[0].mean))
    names = spec.model.parameter_names
    return names if len(names) == d else tuple(f"p{i}" for i in range(d))


def run_check(args) -> int:
    bundle = parse_config(args.config)
    population = parse_data_csv(args.data)
    out = Path(args.out)
    summary_path = out / "summary.json"
    if not summary_path.exists():
        raise ParseError(f"summary file not found: {summary_path} (run fit first)")
    summary = json.loads(summary_path.read_text(encoding="utf-8"))
    if not summary.get("converged", False):
        print("error: fit did not converge; optimality check requires a converged fit",
              file=sys.stderr)
        return 2
    distribution = _read_support_points(out, bundle.space)
    result = FitResult(distribution=distribution,
                       log_likelihood=float(summary["log_likelihood"]),
                       cycles=(), converged=True)
    max_d = optimality_check(result, population, bundle.space, bundle.model, bundle.error,
                             n_probes=args.probes, threads=_resolve_threads(args.threads))
    summary["optimality"] = {"max_d_probe": max_d, "n_probes": args.probes}
    _write_json(summary_path, summary)
    print(f"max directional derivative over {args.probes} probes: {max_d:.3e}")
    return 0


def run_report(args) -> int:
    out = Path(args.out)
    cycles_path = out / "cycles.csv"
    if not cycles_path.exists():
        raise ParseError(f"cycles file not found: {cycles_path} (run fit first)")
    rows = list(csv.reader(io.StringIO(cycles_path.read_text(encoding="utf-8"))))[1:]
    cycles = [(int(r[0]), float(r[1])) for r in rows]
    if not cycles:
        raise ParseError(f"{cycles_path}: no cycles recorded")

    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    names = tuple(summary["stats"]["names"])
    space = _report_space(names)
    distribution = _read_support_points(out, space)
    _atomic_write(out / "objective_trace.svg", render_objective_trace(cycles))
    _atomic_write(out / "support_points.svg", render_support_points(distribution, space))
    print(f"wrote objective_trace.svg and support_points.svg -> {out}")
    return 0


def _report_space(names: tuple[str, ...]) -> ParameterSpace:
    # Rendering only needs names; bounds are irrelevant for the scatter scale.
    return ParameterSpace(names, np.zeros(len(names)), np.ones(len(names)))


# ----------------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="npml",
        description="Nonparametric maximum-likelihood mixing distributions for population PK")
    parser.add_argument("--version", action="version", version=f"npml {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", required=True, help="strict JSON config file")
        if data:
            p.add_argument("--data", required=True, help="population CSV")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (0 = auto; falls back to NPML_THREADS)")

    fit = sub.add_parser("fit", help="estimate the mixing distribution from a population CSV")
    common(fit)
    fit.set_defaults(func=run_fit)

    simulate = sub.add_parser("simulate", help="draw a synthetic cohort from the config's truth")
    common(simulate, data=False)
    simulate.set_defaults(func=run_simulate)

    check = sub.add_parser("check", help="append the optimality certificate to a finished fit")
    common(check)
    check.add_argument("--probes", type=int, default=10_000,
                       help="number of quasi-random probe points")
    check.set_defaults(func=run_check)

    report = sub.add_parser("report", help="render SVG summaries of a finished fit")
    report.add_argument("--out", required=True, help="fit output directory")
    report.set_defaults(func=run_report)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ConvergenceFailureError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NpmlError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
