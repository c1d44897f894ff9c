"""CSV/JSON writers and the INI-style config loader.

Floats are written with ``repr`` (shortest round-trip form) so that equal
runs give byte-identical files.

CSV schemas::

    pmf        index,x,probability
    state      index,amplitude,probability
    angles     iteration,interval_index,theta
    records    estimator,seed,n_samples,cost_units,estimate,true_value,sq_error
    trace      depth,hits,shots
    report     target,n_prep_samples,n_queries,cost_units,rmse,stderr

A report's JSON summary has keys ``arm``, ``slope``, ``ci95``,
``config_hash`` and ``flags``.
"""

from __future__ import annotations

import configparser
import csv
import json
from pathlib import Path
from typing import Iterable

from .classical_mc import EstimateRecord
from .distributions import DiscretizedDistribution
from .experiments import ScalingReport
from .grover_rudolph import AngleSchedule, PreparedState


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def _write_rows(path, header: list[str], rows: Iterable[Iterable]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


def write_pmf_csv(path, disc: DiscretizedDistribution) -> Path:
    grid = disc.grid
    return _write_rows(path, ["index", "x", "probability"],
                       ((i, float(grid[i]), float(p)) for i, p in enumerate(disc.probs)))


def write_state_csv(path, state: PreparedState) -> Path:
    return _write_rows(path, ["index", "amplitude", "probability"],
                       ((i, float(a), float(a * a)) for i, a in enumerate(state.amps)))


def write_angles_csv(path, schedule: AngleSchedule) -> Path:
    rows = ((m, i, float(t)) for m, thetas in enumerate(schedule.thetas) for i, t in enumerate(thetas))
    return _write_rows(path, ["iteration", "interval_index", "theta"], rows)


def write_records_csv(path, records: Iterable[EstimateRecord]) -> Path:
    header = ["estimator", "seed", "n_samples", "cost_units", "estimate", "true_value", "sq_error"]
    rows = ((r.estimator, r.seed, r.queries_or_samples, r.cost_units, float(r.estimate),
             float(r.true_value), float(r.sq_error)) for r in records)
    return _write_rows(path, header, rows)


def write_trace_csv(path, trace: Iterable[tuple[int, int, int]]) -> Path:
    return _write_rows(path, ["depth", "hits", "shots"], trace)


def write_report_csv(path, report: ScalingReport) -> Path:
    header = ["target", "n_prep_samples", "n_queries", "cost_units", "rmse", "stderr"]
    rows = ((r.target, r.n_prep_samples, r.n_queries, r.cost_units, r.rmse, r.stderr) for r in report.rows)
    return _write_rows(path, header, rows)


def report_summary(report: ScalingReport) -> dict:
    return {
        "arm": report.arm,
        "slope": report.slope,
        "ci95": list(report.ci95),
        "config_hash": report.config_hash,
        "flags": list(report.flags),
    }


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return path


def write_report_json(path, report: ScalingReport) -> Path:
    return write_json(path, report_summary(report))


def load_config(path) -> dict[str, dict[str, str]]:
    """Read a flat key-value file with one ``[section]`` per module."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return {name: dict(parser.items(name)) for name in parser.sections()}
