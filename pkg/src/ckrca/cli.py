"""Command-line driver: build, train, infer, evaluate, synth, serve."""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from . import ckgraph, forest
from .config import ConfigError, Settings, load_settings
from .evaluation import EVAL_METHODS, leave_one_out_eval
from .inference import METHODS, render_document, run_query
from .ingestion import read_alert_log, read_outage_reports
from .pipeline import build_ck_graph, train_predictor
from .synth import generate_corpus, load_scenario, random_scenario, write_corpus
from .text import build_embedder


def _settings(config: str | None, seed: int | None) -> Settings:
    try:
        s = load_settings(config)
    except ConfigError as exc:
        raise click.ClickException(f"invalid config: {exc}") from None
    return s if seed is None else s.model_copy(update={"seed": seed})


def _inputs(alerts: str, reports: str):
    try:
        return read_alert_log(alerts), read_outage_reports(reports)
    except (OSError, ValueError) as exc:
        raise click.ClickException(str(exc)) from None


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


config_opt = click.option("--config", type=click.Path(dir_okay=False), default=None, help="YAML or JSON settings file.")
seed_opt = click.option("--seed", type=int, default=None, help="Overrides the configured seed.")
alerts_opt = click.option("--alert-log", "alert_log", required=True, type=click.Path(exists=True), help="Alert log (JSON lines).")
reports_opt = click.option("--reports", required=True, type=click.Path(exists=True), help="Outage reports: directory, JSON array or JSON lines.")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool) -> None:
    """Recommend root causes and remediations of past outages for a new set of alerts."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@alerts_opt
@reports_opt
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Where to write the CK graph.")
@config_opt
@seed_opt
def build(alert_log, reports, out, config, seed):
    """Build the CK graph from an alert log and outage reports."""
    settings = _settings(config, seed)
    log, reps = _inputs(alert_log, reports)
    try:
        ck, m = build_ck_graph(log, reps, settings)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from None
    ckgraph.save(ck, out)
    click.echo(f"graph: {m.shape[1]} alerts, {len(reps)} outages -> {out}", err=True)


@main.command()
@alerts_opt
@reports_opt
@click.option("--graph", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Where to write the model.")
@config_opt
@seed_opt
def train(alert_log, reports, graph, out, config, seed):
    """Train the outage cluster predictor against a built graph."""
    settings = _settings(config, seed)
    log, reps = _inputs(alert_log, reports)
    try:
        ck = ckgraph.load(graph)
        model = train_predictor(ck, log, reps, settings)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from None
    if model is None:
        raise click.ClickException("cannot train: the graph has fewer than two outage clusters or no alerts")
    forest.save_model(model, out)
    click.echo(f"model: {model.n_estimators} trees over {model.n_features_in_} alerts -> {out}", err=True)


@main.command()
@click.option("--graph", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--model", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--alerts", default=None, help="Comma-separated fired alert ids.")
@click.option("--alerts-file", type=click.Path(exists=True, dir_okay=False), default=None, help="One alert id per line.")
@click.option("--method", type=click.Choice(METHODS), default="clust", show_default=True)
@click.option("--k", type=int, default=None, help="Maximum path length.")
@click.option("--L", "L", type=int, default=None, help="Clusters kept by clust.")
@click.option("--top-n", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@config_opt
def infer(graph, model, alerts, alerts_file, method, k, L, top_n, out, config):
    """Rank past outages for the given fired alerts and print the result document."""
    settings = _settings(config, None)
    ids: list[str] = []
    if alerts:
        ids += [a.strip() for a in alerts.split(",") if a.strip()]
    if alerts_file:
        ids += [ln.strip() for ln in Path(alerts_file).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not ids:
        raise click.ClickException("no alerts given; use --alerts or --alerts-file")
    try:
        ck = ckgraph.load(graph)
        mdl = forest.load_model(model) if model else None
        doc = run_query(
            ck, mdl, ids, method,
            settings.k if k is None else k,
            settings.L if L is None else L,
            settings.top_n if top_n is None else top_n,
            build_embedder(ck.metadata.get("embedder")),
        )
    except ValueError as exc:
        raise click.ClickException(str(exc)) from None
    _emit(render_document(doc), out)


@main.command()
@alerts_opt
@reports_opt
@click.option("--method", type=click.Choice(EVAL_METHODS), default="clust", show_default=True)
@click.option("--top-k", type=int, default=5, show_default=True)
@click.option("--sample", type=int, default=50, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["json", "table"]), default="json", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@config_opt
@seed_opt
def evaluate(alert_log, reports, method, top_k, sample, fmt, out, config, seed):
    """Leave-one-out evaluation with Rouge-1 and Rouge-L."""
    settings = _settings(config, seed)
    log, reps = _inputs(alert_log, reports)
    try:
        rep = leave_one_out_eval((log, reps), method, top_k, sample, settings.seed, settings)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from None
    _emit(rep.to_json() if fmt == "json" else rep.to_table() + "\n", out)


@main.command()
@click.option("--scenario", type=click.Path(exists=True, dir_okay=False), default=None, help="Scenario YAML; random if omitted.")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory.")
@seed_opt
def synth(scenario, out, seed):
    """Generate a synthetic alert log and outage reports."""
    try:
        if scenario:
            spec = load_scenario(scenario)
            if seed is not None:
                spec = type(spec).from_dict({**spec.to_dict(), "seed": seed})
        else:
            spec = random_scenario(seed=0 if seed is None else seed)
        paths = write_corpus(generate_corpus(spec), out)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc)) from None
    for name, p in sorted(paths.items()):
        click.echo(f"{name}: {p}", err=True)


@main.command()
@click.option("--graph", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--model", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@config_opt
def serve(graph, model, host, port, config):
    """Serve read-only inference over HTTP."""
    import uvicorn

    from .service import create_app

    settings = _settings(config, None)
    try:
        app = create_app(graph, model, settings=settings)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from None
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    sys.exit(main())
