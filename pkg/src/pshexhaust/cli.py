"""Command line: ``pshexhaust run | list-catalog | describe``."""

import sys

import click

from .config import PIPELINE_NAMES
from .domain import CATALOG
from .reporting import ReportError, describe as describe_report
from .runner import run as run_config


def catalog_text():
    lines = ["domains:"]
    for name, factory in CATALOG.items():
        doc = (factory.__doc__ or "").strip().splitlines()
        lines.append(f"  {name}" + (f"  {doc[0]}" if doc else ""))
    lines.append("pipelines:")
    lines += [f"  {name}" for name in PIPELINE_NAMES]
    return "\n".join(lines)


@click.group()
def main():
    """Build and certify exhaustion functions."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False),
              help="YAML run configuration.")
@click.option("--seed-override", type=int, default=None, help="Replace the configured seed.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None,
              help="Replace the configured output directory.")
@click.option("--dim-sweep", default=None, help='Truncations to certify, e.g. "1-3" or "1,3".')
@click.option("--tolerance-scale", type=float, default=None,
              help="Multiply the certification tolerance.")
def run(config_path, seed_override, out_dir, dim_sweep, tolerance_scale):
    """Build the configured exhaustion, certify it and write the report."""
    code = run_config(config_path, seed_override, out_dir, dim_sweep, tolerance_scale)
    sys.exit(code)


@main.command("list-catalog")
def list_catalog():
    """List the domain catalog and the pipelines."""
    click.echo(catalog_text())


@main.command()
@click.argument("report_path", type=click.Path())
def describe(report_path):
    """Summarize a records file (or a run output directory)."""
    try:
        click.echo(describe_report(report_path), nl=False)
    except ReportError as exc:
        raise click.ClickException(str(exc)) from None


if __name__ == "__main__":
    main()
