"""Command-line entry points for running and reporting experiments."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from noisenas import experiments
from noisenas.evaluation import ConfigurationError
from noisenas.evaluators import EvaluatorFailure
from noisenas.space import Genotype, build_graph, serialize_graph

EXIT_CONFIG_ERROR = 2
EXIT_EVALUATOR_FAILURE = 3


@click.group()
def main():
    """Noise-aware neural architecture search experiments."""


def _load_config(path: str) -> experiments.ExperimentConfig:
    try:
        return experiments.ExperimentConfig.from_toml(path)
    except (ConfigurationError, OSError, ValueError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def run(config_path):
    """Run one experiment cell (all runs) to budget exhaustion."""
    config = _load_config(config_path)
    results = experiments.run_experiment(config)
    failed = [r for r in results if r.failed]
    for result in results:
        status = f"FAILED: {result.failed}" if result.failed else (
            f"consumed {result.consumed}/{config.budget} trainings, "
            f"{result.n_evaluations} evaluations, "
            f"best fitness {result.best[0][1]:.6f}" if result.best else "no evaluations"
        )
        click.echo(f"run {result.seed}: {status}")
    if failed:
        sys.exit(EXIT_EVALUATOR_FAILURE)


@main.command()
@click.option("--results", "results_dir", required=True, type=click.Path(exists=True))
def reeval(results_dir):
    """Fill independent (holdout) qualities for every cell's best genotypes."""
    try:
        for cell_dir in experiments.find_cells(results_dir):
            results = experiments.reevaluate_cell(cell_dir)
            click.echo(f"{cell_dir}: reevaluated {sum(len(r.best) for r in results)} genotypes")
    except ConfigurationError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    except EvaluatorFailure as exc:
        click.echo(f"evaluator failure: {exc}", err=True)
        sys.exit(EXIT_EVALUATOR_FAILURE)


@main.command()
@click.option("--results", "results_dir", required=True, type=click.Path(exists=True))
def report(results_dir):
    """Write summary.csv and trajectory.csv aggregating all cells."""
    cells = experiments.load_cells(results_dir)
    if not cells:
        click.echo("config error: no cells found", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    root = Path(results_dir)
    summary = experiments.summarize(cells)
    trajectory = experiments.trajectory_table(cells)
    (root / "summary.csv").write_text(summary)
    (root / "trajectory.csv").write_text(trajectory)
    click.echo(summary, nl=False)


@main.command()
@click.option("--results", "results_dir", required=True, type=click.Path(exists=True))
@click.option("--m", "m", default=8, show_default=True, help="Bonferroni factor")
def compare(results_dir, m):
    """Pairwise one-sided Wilcoxon setup comparisons with Bonferroni."""
    cells = experiments.load_cells(results_dir)
    if not cells:
        click.echo("config error: no cells found", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    pairs = [("cv", "1fold"), ("3cv", "1fold"), ("3cv", "cv")]
    try:
        table = experiments.compare_setups(cells, pairs, m)
    except ConfigurationError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    (Path(results_dir) / "comparison.csv").write_text(table)
    click.echo(table, nl=False)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--samples", default=5000, show_default=True)
@click.option("--fraction", default=0.2, show_default=True)
def noise(config_path, samples, fraction):
    """Fig-1 style noise analysis of the configured evaluator."""
    config = _load_config(config_path)
    try:
        evaluator = config.build_evaluator()
    except ConfigurationError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    report_doc = experiments.noise_analysis(
        evaluator, samples, fraction, pool=config.search_pool
    )
    config.output_dir.mkdir(parents=True, exist_ok=True)
    csv_path = config.output_dir / "noise_pairs.csv"
    csv_path.write_text(experiments.noise_report_csv(report_doc))
    stats = {
        "seed_comparison": report_doc["seed_comparison"],
        "partitioning_comparison": report_doc["partitioning_comparison"],
    }
    (config.output_dir / "noise_stats.json").write_text(
        json.dumps(stats, sort_keys=True, separators=(",", ":")) + "\n"
    )
    click.echo(json.dumps(stats, sort_keys=True, indent=2))


@main.command("export-arch")
@click.option("--genotype", "genotype_text", required=True,
              help="24 comma-separated integers, topology genes first")
@click.option("--stem-channels", default=32, show_default=True)
@click.option("--width", default=128, show_default=True)
@click.option("--height", default=128, show_default=True)
def export_arch(genotype_text, stem_channels, width, height):
    """Decode a genotype and print its architecture graph as JSON."""
    try:
        genotype = Genotype.from_text(genotype_text)
    except ValueError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    graph = build_graph(genotype, stem_channels, width, height)
    click.echo(serialize_graph(graph))


if __name__ == "__main__":
    main()
