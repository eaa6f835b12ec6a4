"""``htcprompt`` command line.

Subcommands::

    run                  classify the test split for every (strategy, k) cell
    score                re-score a predictions file from its raw completions
    cost-report          token and cost tables for one or more run directories
    contamination-check  run a contamination probe battery
    render               print the prompt one document would receive

Exit status: 0 success, 1 configuration or input error, 2 authentication
failure, 3 finished with failed documents, cells or probes.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import yaml

from .config import (
    ExperimentConfig,
    config_hash,
    load_config,
    load_contamination_config,
)
from .contamination import battery, write_report
from .cost import CostReport, PriceTable, aggregate, format_cost_table
from .dataset import CsvSchema, Dataset, load_csv, sample_few_shot
from .errors import AuthError, ConfigError, DatasetError, HTCError, LLMError, SchemaMismatch, TaxonomyError
from .llm_client import EchoOracle, LLMClient, MockBackend
from .metrics import MetricsReport, format_metrics_table, score
from .prompts import DEFAULT_TEMPLATES, PromptTemplates, render_dh, render_dl, render_tmh_step
from .strategies import STRATEGIES, RunConfig, read_predictions, reinterpret, run_experiment, write_predictions
from .taxonomy import Taxonomy

__all__ = ["main"]

log = logging.getLogger("htcprompt")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_AUTH = 2
EXIT_PARTIAL = 3


def _dump_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def _csv_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _templates(directory) -> PromptTemplates:
    return DEFAULT_TEMPLATES if directory is None else PromptTemplates.from_directory(directory)


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------
def _overrides(args) -> dict:
    out = {}
    if args.strategy:
        out["strategies"] = [s.upper() for s in _csv_list(args.strategy)]
    if args.k:
        try:
            out["k_shot"] = [int(k) for k in _csv_list(args.k)]
        except ValueError as exc:
            raise ConfigError(f"--k expects comma-separated integers: {args.k!r}") from exc
    for flag, key in (
        ("seed", "seed"),
        ("output_dir", "output_dir"),
        ("concurrency", "concurrency"),
        ("limit", "limit"),
        ("model", "model"),
        ("backend", "backend.kind"),
    ):
        value = getattr(args, flag)
        if value is not None:
            out[key] = str(value) if flag == "output_dir" else value
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        out[key] = yaml.safe_load(value)
    return out


def _run_config(cfg: ExperimentConfig, strategy: str, k: int) -> RunConfig:
    return RunConfig(
        strategy=strategy,
        k_shot=k,
        seed=cfg.seed,
        model=cfg.model,
        temperature=cfg.temperature,
        top_p=cfg.top_p,
        max_completion_tokens=cfg.max_completion_tokens,
        prices=cfg.prices.table(),
        concurrency=cfg.concurrency,
    )


@dataclass
class _Cell:
    strategy: str
    k: int
    metrics: MetricsReport | None = None
    cost: CostReport | None = None
    n_failed: int = 0
    error: str | None = None


def _dry_run(cfg: ExperimentConfig, dataset: Dataset, docs, templates) -> int:
    """Render every prompt the run would send, through an offline gold oracle."""
    rows = []
    for strategy in cfg.strategies:
        for k in cfg.k_shot:
            run_cfg = _run_config(cfg, strategy, k)
            client = LLMClient(MockBackend(EchoOracle.from_dataset(dataset)))
            try:
                result = run_experiment(dataset, run_cfg, client, templates, docs)
            except DatasetError as exc:
                rows.append(f"{strategy:<4} k={k:<3} skipped: {exc}")
                continue
            rows.append(
                f"{strategy:<4} k={k:<3} prompts={client.request_count:<6} "
                f"avg_prompt_tokens={result.cost.avg_prompt_tokens or 0:.2f}"
            )
    print(f"dry run for {dataset.name}: {len(docs)} documents, no requests sent")
    print("\n".join(rows))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    dataset = cfg.dataset.load()
    templates = _templates(cfg.templates_dir)
    docs = list(dataset.test[: cfg.limit] if cfg.limit else dataset.test)
    if args.dry_run:
        return _dry_run(cfg, dataset, docs, templates)

    digest = config_hash(cfg)
    out_dir = cfg.output_dir
    cells: list[_Cell] = []
    for strategy in cfg.strategies:
        for k in cfg.k_shot:
            cell = _Cell(strategy, k)
            cells.append(cell)
            cell_dir = out_dir / f"{strategy}_k{k}"
            audit = cell_dir / "audit.jsonl"
            if audit.exists():
                audit.unlink()
            run_cfg = _run_config(cfg, strategy, k)
            try:
                sample_few_shot(dataset, k, cfg.seed)
            except DatasetError as exc:
                cell.error = f"{type(exc).__name__}: {exc}"
                log.error("cell %s k=%d skipped: %s", strategy, k, exc)
                continue
            with cfg.backend.client(dataset, audit_path=audit) as client:
                result = run_experiment(dataset, run_cfg, client, templates, docs)
            cell.metrics, cell.cost, cell.n_failed = result.metrics, result.cost, result.n_failed
            meta = {
                "config_hash": digest,
                "dataset": dataset.name,
                "strategy": strategy,
                "k_shot": k,
                "seed": cfg.seed,
                "model": cfg.model,
            }
            write_predictions(
                cell_dir / "predictions.jsonl",
                result.predictions,
                {**meta, "few_shot_ids": list(result.few_shot_ids), "max_depth": dataset.taxonomy.max_depth},
            )
            _dump_json(cell_dir / "metrics.json", {**meta, "metrics": result.metrics.to_dict()})
            _dump_json(cell_dir / "cost.json", {**meta, "prices": run_cfg.prices.to_dict(), "cost": result.cost.to_dict()})

    _dump_json(
        out_dir / "summary.json",
        {
            "config_hash": digest,
            "dataset": dataset.name,
            "cells": [
                {"strategy": c.strategy, "k_shot": c.k, "n_failed": c.n_failed, "error": c.error} for c in cells
            ],
        },
    )
    _print_run_summary(dataset.name, cells, args.convention)
    partial = any(c.error or c.n_failed for c in cells)
    return EXIT_PARTIAL if partial else EXIT_OK


def _print_run_summary(name: str, cells: Sequence[_Cell], convention: str) -> None:
    done = [c for c in cells if c.metrics is not None]
    if done:
        print(f"== accuracy ({name}) ==")
        print(format_metrics_table([(c.strategy, c.k, c.metrics) for c in done], convention))
        print()
        print(f"== average tokens per document ({name}) ==")
        print(format_cost_table({(c.strategy, c.k): c.cost for c in done}, name))
        costs = [c for c in done if c.cost.estimated_cost is not None]
        if costs:
            print()
            for c in costs:
                print(f"{c.strategy} k={c.k}: estimated cost {c.cost.estimated_cost:.6f} ({c.cost.usage_provenance} usage)")
    for c in cells:
        if c.error:
            print(f"cell {c.strategy} k={c.k} failed: {c.error}", file=sys.stderr)
        elif c.n_failed:
            print(f"cell {c.strategy} k={c.k}: {c.n_failed} document(s) failed", file=sys.stderr)


# --------------------------------------------------------------------------
# score
# --------------------------------------------------------------------------
def _scoring_reference(args, header: dict) -> tuple[Taxonomy, dict[str, tuple[str, ...]] | None]:
    if args.config:
        dataset = load_config(args.config).dataset.load()
        return dataset.taxonomy, dataset.golds()
    if args.dataset:
        if not args.label_columns:
            raise ConfigError("--dataset needs --label-columns")
        schema = CsvSchema(args.text_column, tuple(_csv_list(args.label_columns)), args.split_column)
        dataset = load_csv(args.dataset, schema, args.name or header.get("dataset"))
        return dataset.taxonomy, dataset.golds()
    if args.taxonomy:
        try:
            t = Taxonomy.from_json(Path(args.taxonomy).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read taxonomy {args.taxonomy}: {exc}") from exc
        return t, None
    raise ConfigError("score needs --config, --dataset or --taxonomy")


def cmd_score(args) -> int:
    header, preds = read_predictions(args.predictions)
    t, golds = _scoring_reference(args, header)
    rescored = [reinterpret(p, t) for p in preds]
    if golds is None:
        golds = {p.doc_id: p.gold for p in rescored}
    report = score(rescored, golds, t)
    label = header.get("strategy") or (rescored[0].strategy if rescored else "-")
    print(format_metrics_table([(label, header.get("k_shot", "-"), report)], args.convention))
    if args.output:
        meta = {key: header[key] for key in ("config_hash", "dataset", "strategy", "k_shot", "seed", "model") if key in header}
        _dump_json(Path(args.output), {**meta, "metrics": report.to_dict()})
    return EXIT_PARTIAL if report.n_failed else EXIT_OK


# --------------------------------------------------------------------------
# cost-report
# --------------------------------------------------------------------------
def cmd_cost_report(args) -> int:
    files = []
    for root in args.run_dirs:
        root = Path(root)
        if root.is_file():
            files.append(root)
        else:
            files.extend(sorted(root.glob("*/predictions.jsonl")))
    if not files:
        raise ConfigError(f"no predictions.jsonl found under {', '.join(args.run_dirs)}")
    price = None
    if args.input_price is not None or args.output_price is not None:
        price = PriceTable(args.input_price or 0, args.output_price or 0)
    by_dataset: dict[str, dict[tuple[str, int], CostReport]] = {}
    for path in files:
        header, preds = read_predictions(path)
        strategy = header.get("strategy") or (preds[0].strategy if preds else "?")
        by_dataset.setdefault(header.get("dataset", "?"), {})[(strategy, int(header.get("k_shot", 0)))] = aggregate(preds, price)
    order = {s: i for i, s in enumerate(STRATEGIES)}
    for name, cells in by_dataset.items():
        cells = dict(sorted(cells.items(), key=lambda item: (order.get(item[0][0], len(order)), item[0])))
        print(f"== average tokens per document ({name}) ==")
        print(format_cost_table(cells, name))
        if price is not None:
            for (strategy, k), report in cells.items():
                print(f"{strategy} k={k}: estimated cost {report.estimated_cost:.6f} ({report.usage_provenance} usage)")
        print()
    return EXIT_OK


# --------------------------------------------------------------------------
# contamination-check
# --------------------------------------------------------------------------
def cmd_contamination(args) -> int:
    cfg = load_contamination_config(args.battery)
    if not cfg.probes:
        raise ConfigError(f"{args.battery}: no probes listed")
    references = {key: ref.load() for key, ref in cfg.references.items()}
    templates = _templates(cfg.templates_dir)
    with cfg.backend.client() as client:
        verdicts = battery(
            list(cfg.probes),
            client,
            references,
            model=cfg.model,
            rules=cfg.rules(),
            templates=templates,
        )
    output = Path(args.output) if args.output else cfg.output
    write_report(verdicts, output, config_hash=config_hash(cfg), model=cfg.model)
    for v in verdicts:
        where = v.dataset_name + (f" [{v.split}]" if v.split else "")
        print(f"{where:<40} {v.format:<8} {v.verdict or 'failed':<16} {v.evidence or v.error or ''}")
    return EXIT_PARTIAL if any(v.error for v in verdicts) else EXIT_OK


# --------------------------------------------------------------------------
# render
# --------------------------------------------------------------------------
def cmd_render(args) -> int:
    cfg = load_config(args.config)
    dataset = cfg.dataset.load()
    t = dataset.taxonomy
    templates = _templates(cfg.templates_dir)
    if not dataset.test:
        raise ConfigError("the dataset has no test documents")
    if not 0 <= args.doc < len(dataset.test):
        raise ConfigError(f"--doc must be in [0, {len(dataset.test) - 1}]")
    doc = dataset.test[args.doc]
    few_shot = sample_few_shot(dataset, args.k, cfg.seed)
    strategy = args.strategy.upper()
    if strategy == "DL":
        prompt = render_dl(t, few_shot, doc.text, templates)
    elif strategy == "DH":
        prompt = render_dh(t, few_shot, doc.text, templates)
    elif strategy == "TMH":
        gold = doc.gold_path(t)
        depth = args.depth or 1
        if not 1 <= depth <= len(gold):
            raise ConfigError(f"--depth must be in [1, {len(gold)}] for this document")
        parent = gold[depth - 2] if depth > 1 else None
        prompt = render_tmh_step(t, parent, few_shot, doc.text, depth, templates)
    else:
        raise ConfigError(f"unknown strategy {args.strategy!r}")
    sys.stdout.write(prompt.text + "\n")
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="htcprompt", description="Hierarchical text classification by prompting a chat LLM.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment grid")
    run.add_argument("config", help="experiment config (YAML)")
    run.add_argument("--strategy", help="comma-separated subset of DL,DH,TMH")
    run.add_argument("--k", help="comma-separated few-shot counts")
    run.add_argument("--seed", type=int)
    run.add_argument("--model")
    run.add_argument("--backend", choices=["http", "mock-echo", "mock-scripted", "mock-perturb"])
    run.add_argument("--output-dir")
    run.add_argument("--concurrency", type=int)
    run.add_argument("--limit", type=int, help="only the first N test documents")
    run.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key, e.g. backend.timeout=30")
    run.add_argument("--dry-run", action="store_true", help="render and count prompts without sending any")
    run.add_argument("--convention", choices=["prefix", "local"], default="prefix")
    run.set_defaults(func=cmd_run)

    sc = sub.add_parser("score", help="re-score stored predictions")
    sc.add_argument("predictions")
    sc.add_argument("--config", help="experiment config naming the dataset")
    sc.add_argument("--dataset", help="CSV with gold labels")
    sc.add_argument("--name", help="dataset name used in document ids (default: from the predictions header)")
    sc.add_argument("--text-column", default="text")
    sc.add_argument("--label-columns", help="comma-separated label columns, root first")
    sc.add_argument("--split-column")
    sc.add_argument("--taxonomy", help="taxonomy JSON; gold labels then come from the records")
    sc.add_argument("--convention", choices=["prefix", "local"], default="prefix")
    sc.add_argument("--output", help="write the metrics JSON here")
    sc.set_defaults(func=cmd_score)

    cr = sub.add_parser("cost-report", help="token usage tables for run directories")
    cr.add_argument("run_dirs", nargs="+")
    cr.add_argument("--input-price", help="currency per million prompt tokens")
    cr.add_argument("--output-price", help="currency per million completion tokens")
    cr.set_defaults(func=cmd_cost_report)

    ct = sub.add_parser("contamination-check", help="run a contamination probe battery")
    ct.add_argument("battery", help="probe battery (YAML)")
    ct.add_argument("--output", help="report path (overrides the battery file)")
    ct.set_defaults(func=cmd_contamination)

    rd = sub.add_parser("render", help="print one rendered prompt")
    rd.add_argument("config")
    rd.add_argument("--strategy", default="DL")
    rd.add_argument("--k", type=int, default=0)
    rd.add_argument("--doc", type=int, default=0, help="index into the test split")
    rd.add_argument("--depth", type=int, help="TMH step, following the gold path")
    rd.set_defaults(func=cmd_render)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except AuthError as exc:
        print(f"authentication error: {exc}", file=sys.stderr)
        return EXIT_AUTH
    except (ConfigError, DatasetError, TaxonomyError, SchemaMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LLMError as exc:
        print(f"request failed: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    except HTCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
