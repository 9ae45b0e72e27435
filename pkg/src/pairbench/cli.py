"""``pairbench`` command line.

Exit codes: 0 success, 1 data-validation failure, 2 usage error.
Diagnostics go to stderr; results to the named files or stdout.
"""
from __future__ import annotations

import csv
import io
import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .core import (DomainError, PumpRegime, read_series_csv, read_sidecar, validate_series,
                   ValidatedSeries, write_series_csv)
from .propagation import LossBudget, consistency_report
from .pump_ring import PumpConfig, RingTransmission, write_fig_datasets
from .rate_fitting import (DegenerateFitError, FitOptions, PARAM_NAMES, RateModelParams, fit_rates,
                           synthesize_series)
from .registry import (DATASETS, TABLE_I_COLUMNS, TABLE_II_COLUMNS, TIMELINE_PARAMETERS,
                       bundled_dataset, compare, completeness_report, ingest_record, load_directory,
                       table_rows, timeline_export)
from .schmidt import amplitude_from_intensity, read_jsi, schmidt_decompose

TWO_PI = 2.0 * math.pi


class DataError(click.ClickException):
    exit_code = 1


def _dump_json(obj, out: str | None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out is None or out == "-":
        click.echo(text, nl=False)
    else:
        Path(out).write_text(text)
        click.echo(f"wrote {out}", err=True)


def _emit_csv(rows, out: str | None):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    if out is None or out == "-":
        click.echo(buf.getvalue(), nl=False)
    else:
        Path(out).write_text(buf.getvalue())
        click.echo(f"wrote {out}", err=True)


def _regime(kind, rep_rate, linewidth) -> PumpRegime:
    if kind == "cw":
        if rep_rate is not None or linewidth is not None:
            raise click.UsageError("--rep-rate/--linewidth only apply to --regime pulsed")
        return PumpRegime.cw()
    return PumpRegime.pulsed(rep_rate, linewidth)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="pairbench")
def cli():
    """Characterise and compare heralded single-photon sources."""


@cli.command()
@click.option("--series", "series_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="CSV with columns p_avg_mw,r_s_cps,r_i_cps,r_si_cps.")
@click.option("--sidecar", type=click.Path(exists=True, dir_okay=False),
              help="JSON with tau_s, regime and integration_time_s.")
@click.option("--tau", type=float, help="Coincidence window (s); overrides the sidecar.")
@click.option("--regime", type=click.Choice(["pulsed", "cw"]), default=None)
@click.option("--rep-rate", type=float, default=None, help="Pulsed repetition rate (Hz).")
@click.option("--linewidth", type=float, default=None, help="Pulsed pump linewidth (Hz).")
@click.option("--integration-time", type=float, default=None, show_default="1 s",
              help="Counting time per point, sets the Poisson weights.")
@click.option("--gtol", type=float, default=1e-10, show_default=True)
@click.option("--max-iter", type=int, default=200, show_default=True)
@click.option("--fix", multiple=True, metavar="NAME=VALUE", help="Hold a parameter fixed, e.g. beta_s=0.")
@click.option("--out", type=click.Path(dir_okay=False, writable=True, allow_dash=True), default="fit.json",
              show_default=True, help="Output JSON; '-' for stdout.")
def fit(series_path, sidecar, tau, regime, rep_rate, linewidth, integration_time, gtol, max_iter, fix, out):
    """Fit B1, H3 and noise terms to a power sweep."""
    side = read_sidecar(sidecar) if sidecar else {}
    tau = tau if tau is not None else side.get("tau")
    if tau is None:
        raise click.UsageError("coincidence window required: pass --tau or a sidecar with tau_s")
    if regime is not None:
        reg = _regime(regime, rep_rate, linewidth)
    else:
        reg = side.get("regime") or _regime("pulsed", rep_rate, linewidth)
    t_int = integration_time if integration_time is not None else side.get("integration_time", 1.0)
    fixed = {}
    for item in fix:
        name, _, value = item.partition("=")
        if name not in PARAM_NAMES or not value:
            raise click.UsageError(f"--fix expects NAME=VALUE with NAME in {', '.join(PARAM_NAMES)}; got {item!r}")
        fixed[name] = float(value)
    try:
        series = read_series_csv(series_path, tau, reg)
    except (DomainError, ValueError) as exc:
        raise DataError(f"{series_path}: {exc}")
    checked = validate_series(series)
    if not isinstance(checked, ValidatedSeries):
        raise DataError(f"{series_path} failed validation:\n" + "\n".join(f"  - {v}" for v in checked))
    try:
        result = fit_rates(checked, FitOptions(gtol=gtol, max_iterations=max_iter,
                                               integration_time=t_int, fixed=fixed))
    except (DegenerateFitError, DomainError) as exc:
        raise DataError(str(exc))
    doc = result.to_dict()
    doc["input"] = {"series": Path(series_path).name, "tau_s": tau, "regime": reg.to_dict(),
                    "integration_time_s": t_int, "points": len(series)}
    if not result.converged:
        click.echo(f"warning: fit did not converge in {result.iterations} iterations "
                   f"(gradient {result.gradient_norm:.3g})", err=True)
    _dump_json(doc, out)


@cli.command()
@click.option("--params", "params_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="JSON with B1, H3_s, H3_i, beta_s, beta_i, R_DC_s, R_DC_i.")
@click.option("--powers", required=True, help="Comma-separated average powers in mW.")
@click.option("--tau", type=float, required=True)
@click.option("--integration-time", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--noiseless", is_flag=True)
@click.option("--out", type=click.Path(dir_okay=False, writable=True), required=True)
def synth(params_path, powers, tau, integration_time, seed, noiseless, out):
    """Draw a synthetic power sweep from model parameters."""
    try:
        params = RateModelParams(**json.loads(Path(params_path).read_text()))
        p = [float(v) for v in powers.split(",")]
        series = synthesize_series(params, p, tau, integration_time, seed=seed, noiseless=noiseless)
    except (TypeError, ValueError) as exc:
        raise DataError(str(exc))
    write_series_csv(series, out)
    click.echo(f"wrote {out}", err=True)


@cli.command()
@click.option("--jsi", "jsi_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="JSI as CSV grid or JSON {omega_s, omega_i, intensity}.")
@click.option("--out", type=click.Path(dir_okay=False, writable=True), default=None)
def schmidt(jsi_path, out):
    """Schmidt decomposition, purity and mode count of a measured JSI."""
    try:
        jsi = read_jsi(jsi_path)
        d = schmidt_decompose(amplitude_from_intensity(jsi))
    except (DomainError, ValueError, KeyError) as exc:
        raise DataError(f"{jsi_path}: {exc}")
    doc = d.to_dict()
    doc["grid"] = list(jsi.intensity.shape)
    _dump_json(doc, out)


@cli.command()
@click.option("--ring-fwhm", type=float, required=True, help="Ring resonance FWHM (Hz).")
@click.option("--pump-fwhm", type=float, multiple=True, required=True,
              help="Pump FWHM (Hz); repeat for several. A single value also simulates half of it.")
@click.option("--rep-rate", type=float, default=100e6, show_default=True, help="Hz.")
@click.option("--center", type=float, default=193.4e12, show_default=True, help="Resonance frequency (Hz).")
@click.option("--extinction", type=float, default=0.0, show_default=True)
@click.option("--pulse-energy", type=float, default=1e-12, show_default=True,
              help="Energy (J) of the widest waveguide pulse.")
@click.option("--b1", type=float, default=1.0, show_default=True, help="Mcts s^-1 mW^-2.")
@click.option("--powers", default="0.1,0.2,0.4,0.6,0.8,1.0", show_default=True,
              help="Comma-separated waveguide average powers (mW).")
@click.option("--points", type=int, default=4096, show_default=True)
@click.option("--emit", type=click.Choice(["csv"]), default="csv", show_default=True)
@click.option("--outdir", type=click.Path(file_okay=False), default=".", show_default=True)
def pumpsim(ring_fwhm, pump_fwhm, rep_rate, center, extinction, pulse_energy, b1, powers, points, emit,
            outdir):
    """Waveguide vs intracavity pump profiles and R_si-vs-P^2 datasets."""
    fwhms = list(pump_fwhm) if len(pump_fwhm) > 1 else [pump_fwhm[0], pump_fwhm[0] / 2]
    try:
        p = [float(v) for v in powers.split(",")]
        ring = RingTransmission(TWO_PI * center, TWO_PI * ring_fwhm, extinction)
        widest = max(fwhms)
        # Equal peak spectral density: narrower profiles carry proportionally less energy.
        peak = 1.0 / (widest * TWO_PI * math.sqrt(math.pi / (4 * math.log(2))))
        configs = [PumpConfig(TWO_PI * f, ring, rep_rate, peak_density=peak, n=points,
                              half_span=10.0 * TWO_PI * widest) for f in fwhms]
        paths = write_fig_datasets(configs, p, b1, pulse_energy, outdir)
    except (DomainError, ValueError) as exc:
        raise DataError(str(exc))
    for path in paths:
        click.echo(f"wrote {path}", err=True)


def _load_record(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}")
    res = ingest_record(doc)
    if isinstance(res, list):
        raise DataError(f"{path} failed validation:\n" + "\n".join(f"  - {v}" for v in res))
    return res


@cli.command()
@click.option("--record", "record_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--budget", "budget_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON {ring_escape, path_s, path_i, detector_s, detector_i}, fractions or *_db.")
@click.option("--out", type=click.Path(dir_okay=False, writable=True), default=None)
def propagate(record_path, budget_path, out):
    """Forward/back-propagate B and H and report inconsistencies."""
    rec = _load_record(record_path)
    budget = None
    if budget_path:
        try:
            budget = LossBudget.load(budget_path)
        except (DomainError, ValueError) as exc:
            raise DataError(f"{budget_path}: {exc}")
    doc = consistency_report(rec, budget).to_dict()
    doc["record"] = rec.citation_key
    _dump_json(doc, out)


@cli.group()
def db():
    """Work with a directory of source records."""


def _records(directory, dataset):
    if directory and dataset:
        raise click.UsageError("use either --dir or --dataset, not both")
    if directory:
        records, problems = load_directory(directory)
        if problems:
            lines = [f"  - {f}: {v}" for f, vs in problems.items() for v in vs]
            raise DataError(f"{directory} contains invalid records:\n" + "\n".join(lines))
        if not records:
            raise DataError(f"{directory} contains no records")
        return records
    return bundled_dataset(dataset or "table1")


_src_options = [
    click.option("--dir", "directory", type=click.Path(exists=True, file_okay=False), default=None),
    click.option("--dataset", type=click.Choice(DATASETS), default=None,
                 help="Bundled dataset used when --dir is absent (default table1)."),
]


def _with_source(f):
    for opt in reversed(_src_options):
        f = opt(f)
    return f


def _columns(dataset):
    return TABLE_II_COLUMNS if dataset == "table2" else TABLE_I_COLUMNS


@db.command("validate")
@click.option("--dir", "directory", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False, writable=True), default=None)
def db_validate(directory, out):
    """Check every record; exit 1 if any is invalid."""
    records, problems = load_directory(directory)
    doc = {"valid": len(records),
           "invalid": {f: [str(v) for v in vs] for f, vs in problems.items()}}
    _dump_json(doc, out)
    if problems:
        raise DataError(f"{len(problems)} invalid record(s) in {directory}")


@db.command("compare")
@_with_source
@click.option("--sort", "sort_key", default="b1", show_default=True)
@click.option("--regime", type=click.Choice(["pulsed", "cw"]), default=None)
@click.option("--ascending", is_flag=True)
@click.option("--out", type=click.Path(dir_okay=False, writable=True), default=None)
def db_compare(directory, dataset, sort_key, regime, ascending, out):
    """Comparison table as CSV; regime warnings on stderr."""
    try:
        table = compare(_records(directory, dataset), sort_key, regime, _columns(dataset),
                        descending=not ascending)
    except DomainError as exc:
        raise click.UsageError(str(exc))
    _emit_csv(table_rows(table), out)
    for w in table.regime_warnings:
        click.echo(f"warning: {w}", err=True)


@db.command("timeline")
@_with_source
@click.option("--parameter", type=click.Choice(TIMELINE_PARAMETERS), required=True)
@click.option("--out", type=click.Path(dir_okay=False, writable=True), default=None)
def db_timeline(directory, dataset, parameter, out):
    """Year/value/uncertainty series for one parameter, as CSV."""
    pts = timeline_export(_records(directory, dataset), parameter)
    _emit_csv([["year", parameter, f"{parameter}_err"]] + [[y, f"{v:.10g}", f"{e:.10g}"] for y, v, e in pts],
              out)


@db.command("gaps")
@_with_source
@click.option("--bucket-years", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, writable=True), default=None)
def db_gaps(directory, dataset, bucket_years, out):
    """Unreported parameters and per-year reporting rates, as JSON."""
    records = _records(directory, dataset)
    cols = _columns(dataset)
    table = compare(records, "b1", columns=cols)
    doc = {"gaps": [{"citation_key": k, "parameter": p} for k, p in table.gaps],
           "completeness": completeness_report(records, cols, bucket_years)}
    _dump_json(doc, out)


def run(argv=None) -> int:
    """Run the CLI and return its exit code instead of exiting."""
    try:
        cli.main(args=argv, prog_name="pairbench", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except (OSError, DomainError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return 0


def main():
    sys.exit(run())
