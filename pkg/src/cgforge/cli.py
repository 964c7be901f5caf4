"""Command-line driver.

Exit codes: 0 success, 1 validation error (bad config, data or document),
2 runtime error.
"""

from __future__ import annotations

import hashlib
import logging
import sys
from pathlib import Path

import click

from .documents import (
    GraphDocument,
    export_dot,
    export_frequencies,
    export_json,
    import_frequencies,
    import_json,
    write_atomic,
)
from .ensemble import average_graph, learn_ensemble
from .errors import CgforgeError, StageError, ValidationError
from .pipeline import (
    build_constraints,
    ingest,
    load_config,
    mb_document,
    nodes_of,
    provenance,
    run_pipeline,
)

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2

logger = logging.getLogger("cgforge")


def _emit(text: str, output: str | None) -> None:
    if output:
        write_atomic(output, text)
    else:
        click.echo(text, nl=False)


def _load(config, seed, runs, threshold, out, workers=None):
    return load_config(config).with_overrides(
        seed=seed, runs=runs, threshold=threshold, workers=workers,
        out=Path(out) if out else None,
    )


def _data_digest(cfg) -> str:
    return hashlib.sha256(Path(cfg.data).read_bytes()).hexdigest()


config_option = click.option("--config", "config", required=True, type=click.Path(dir_okay=False),
                             help="Pipeline config file (YAML or JSON).")
overrides = [
    click.option("--seed", type=int, default=None, help="Base seed (overrides config)."),
    click.option("--runs", type=int, default=None, help="Ensemble size (overrides config)."),
    click.option("--threshold", type=float, default=None, help="Edge frequency threshold (overrides config)."),
    click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory."),
    click.option("--workers", type=int, default=None, help="Parallel worker processes."),
]


def with_overrides(fn):
    for opt in reversed(overrides):
        fn = opt(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", count=True, help="More logging (-v info, -vv debug).")
def cli(verbose):
    """Learn averaged causal graphs from discrete data."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@config_option
@with_overrides
def run(config, seed, runs, threshold, out, workers):
    """Run the whole pipeline and write graph documents."""
    cfg = _load(config, seed, runs, threshold, out, workers)
    result = run_pipeline(cfg)
    for name, path in result.paths.items():
        click.echo(f"{name}: {path}")


@cli.command("ingest")
@config_option
@click.option("--output", type=click.Path(dir_okay=False), default=None,
              help="Write the preprocessed table as CSV here.")
def ingest_cmd(config, output):
    """Load and preprocess the data; print a variable summary."""
    import csv
    import io

    cfg = load_config(config)
    d = ingest(cfg)
    click.echo(f"{d.row_count} rows, {len(d.variables)} variables")
    for v in d.variables:
        click.echo(f"  tier {v.tier}  {v.name}: {v.arity} states {list(v.states)}")
    if output:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(d.names)
        writer.writerows(d.rows())
        write_atomic(output, buf.getvalue())


@cli.command()
@config_option
@with_overrides
def learn(config, seed, runs, threshold, out, workers):
    """Learn the bootstrap ensemble and write edge frequencies."""
    cfg = _load(config, seed, runs, threshold, out, workers)
    d = ingest(cfg)
    c = build_constraints(cfg, d)
    ens = learn_ensemble(d, c, cfg.ensemble)
    path = Path(cfg.out) / "frequencies.json"
    write_atomic(path, export_frequencies(ens.table, nodes_of(d), provenance(cfg, _data_digest(cfg))))
    click.echo(f"frequencies: {path}")


@cli.command()
@click.argument("frequencies", type=click.Path(exists=True, dir_okay=False))
@click.option("--threshold", type=float, default=None,
              help="Frequency threshold (default: the one recorded in the document, else 0.9).")
@click.option("--output", type=click.Path(dir_okay=False), default=None)
def average(frequencies, threshold, output):
    """Threshold an edge-frequency document into an averaged graph document."""
    table, nodes, prov = import_frequencies(Path(frequencies).read_text(encoding="utf-8"))
    if threshold is None:
        threshold = float(prov.get("threshold", 0.9))
    avg = average_graph(table, threshold, len(nodes))
    prov = dict(prov, threshold=threshold, dropped_in_repair=[
        [nodes[u].name, nodes[v].name] for u, v in avg.dropped
    ])
    doc = GraphDocument.from_dag(avg.dag, nodes, avg.frequencies, kind="averaged", provenance=prov)
    _emit(export_json(doc), output)


@cli.command()
@click.argument("graph", type=click.Path(exists=True, dir_okay=False))
@click.option("--target", "targets", multiple=True, required=True, help="Target variable (repeatable).")
@click.option("--output", type=click.Path(dir_okay=False), default=None)
def mb(graph, targets, output):
    """Restrict a graph document to its targets' Markov blankets."""
    doc = import_json(Path(graph).read_text(encoding="utf-8"))
    _emit(export_json(mb_document(doc, list(targets))), output)


@cli.command()
@click.argument("graph", type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["dot", "json"]), default="dot")
@click.option("--output", type=click.Path(dir_okay=False), default=None)
def export(graph, fmt, output):
    """Convert a graph document to DOT (or re-emit canonical JSON)."""
    doc = import_json(Path(graph).read_text(encoding="utf-8"))
    _emit(export_dot(doc) if fmt == "dot" else export_json(doc), output)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="cgforge", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_RUNTIME
    except click.ClickException as exc:
        exc.show()
        return EXIT_VALIDATION
    except StageError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_VALIDATION if isinstance(exc.cause, ValidationError) else EXIT_RUNTIME
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_VALIDATION
    except CgforgeError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to exit code 2
        logger.debug("unhandled error", exc_info=True)
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
