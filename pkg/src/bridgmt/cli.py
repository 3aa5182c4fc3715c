"""``bridgmt`` command line.

Exit codes: 0 success, 1 run failure, 2 usage or configuration error.
Progress goes to stderr; reports go to files under ``--out`` and, for
tabular reports, to stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .config import PipelineConfig, config_from_dict, load_config_dict
from .core import RunReport, read_corpus
from .errors import BridgError, ParseError, UsageError
from .selection import SWEEP_STRATEGIES, SelectionConfig, SelectionStrategy
from .decisions import AggregationStrategy, FilterPolicy

log = logging.getLogger("bridgmt")

SWEEP_SETTINGS = ((1, None), (3, "polling"), (3, "prompting"))


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse already exits 2; keep usage on stderr
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, *, out_required: bool = True) -> None:
    p.add_argument("--config", "-c", type=Path, help="TOML configuration file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value (dotted key, TOML literal); repeatable")
    p.add_argument("--out", "-o", type=Path, required=out_required, help="output directory")
    p.add_argument("--seed", type=int, help="base random seed")
    p.add_argument("--strict", action="store_true", default=None, help="abort on the first sentence failure")
    p.add_argument("--concurrency", type=int, help="sentences translated in parallel")
    p.add_argument("--verbose", "-v", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bridgmt", description="Bridge-based machine translation pipeline")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build-pool", help="build the start-sentence pool from the dev corpus")
    _common(p)

    p = sub.add_parser("translate", help="translate the corpus with bridging")
    _common(p)
    p.add_argument("--sweep", action="store_true",
                   help="run every selection strategy with k=1, k=3 polling and k=3 prompting")

    p = sub.add_parser("baseline", help="zero-shot or k-shot baseline run")
    _common(p)

    p = sub.add_parser("evaluate", help="score finished runs with one or more QE backends")
    _common(p)
    p.add_argument("runs", nargs="+", type=Path, help="run directories (method label = directory name)")
    p.add_argument("--scorer", action="append", default=[], help="QE backend id; repeatable (default: qe)")

    p = sub.add_parser("analyze-bridges", help="progress of bridges toward their end sentence")
    _common(p)
    p.add_argument("run", type=Path)
    p.add_argument("--no-trajectories", action="store_true", help="skip the per-bridge CSV export")

    p = sub.add_parser("cost-report", help="per-stage time of a finished run")
    p.add_argument("run", type=Path)
    p.add_argument("--compare", type=Path, help="second run; adds per-stage time ratios")
    p.add_argument("--out", "-o", type=Path, help="write cost.tsv and cost.png here")
    p.add_argument("--verbose", "-v", action="store_true")

    p = sub.add_parser("mock-server", help="serve scripted providers over HTTP")
    p.add_argument("scripts", type=Path, help="JSON file: {chat: {...}, embedding: {...}, qe: {...}}")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8089)
    p.add_argument("--max-concurrency", type=int)
    p.add_argument("--verbose", "-v", action="store_true")
    return parser


# --- helpers ---------------------------------------------------------------------


def _load(args) -> tuple[PipelineConfig, dict]:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.concurrency is not None:
        overrides.append(f"concurrency={args.concurrency}")
    if args.strict:
        overrides.append("strict=true")
    raw = load_config_dict(args.config, overrides)
    return config_from_dict(raw), raw


def _need(value, what: str):
    if value is None:
        raise UsageError(f"{what} is not set in the configuration")
    if not Path(value).exists():
        raise UsageError(f"{what} {value} does not exist")
    return value


def _corpus(cfg: PipelineConfig, *, gold: bool = True):
    path = _need(cfg.data.corpus, "data.corpus")
    gold_path = _need(cfg.data.gold, "data.gold") if gold and cfg.data.gold else None
    return read_corpus(path, name=cfg.data.corpus_name, gold_path=gold_path, lang_pair=cfg.lang_pair)


def _gateway(cfg: PipelineConfig, out: Path):
    from .pipeline import build_gateway

    out.mkdir(parents=True, exist_ok=True)
    return build_gateway(cfg, out / "cache.jsonl")


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)


def _run_status(report: RunReport) -> int:
    n, failed = report.summary["n_sentences"], report.summary["n_failed"]
    if failed:
        log.warning("%d of %d sentences failed; see the error field in records.jsonl", failed, n)
    return 1 if n and failed == n else 0


def _sweep_name(cfg: PipelineConfig) -> str:
    agg = cfg.aggregation.kind if cfg.selection.k > 1 else "single"
    label = f"{cfg.selection.strategy.label}_k{cfg.selection.k}_{agg}_{_regime(cfg)}"
    return re.sub(r"[^A-Za-z0-9_-]+", "-", label).strip("-")


def _regime(cfg: PipelineConfig) -> str:
    pre = cfg.filters.pre is not None or cfg.pre_percentile is not None
    return "+".join(p for p, on in (("pre", pre), ("post", cfg.filters.post)) if on) or "none"


def sweep_configs(cfg: PipelineConfig) -> list[PipelineConfig]:
    """Selection strategy x (k=1, k=3 polling, k=3 prompting) x filtering regime.

    Tops only runs at k=3. Regimes with pre-filtering are included only when
    the configuration supplies a threshold or percentile to filter with.
    """
    has_pre = cfg.filters.pre is not None or cfg.pre_percentile is not None
    regimes = [(False, False), (False, True)] + ([(True, False), (True, True)] if has_pre else [])
    out = []
    for label in SWEEP_STRATEGIES:
        strategy = SelectionStrategy.parse(label, cfg.selection.strategy.filter_width)
        for k, agg in SWEEP_SETTINGS:
            if strategy.kind == "Tops" and k != 3:
                continue
            for pre, post in regimes:
                out.append(replace(
                    cfg,
                    selection=SelectionConfig(strategy, k),
                    aggregation=AggregationStrategy(agg or cfg.aggregation.kind),
                    filters=FilterPolicy(cfg.filters.pre if pre else None, post),
                    pre_percentile=cfg.pre_percentile if pre else None,
                ))
    return out


# --- subcommands -----------------------------------------------------------------


def cmd_build_pool(args) -> int:
    from .pool import build_pool, save_pool
    from .prompts import TranslationPromptAssets

    cfg, _ = _load(args)
    cfg.validate_backends(pipeline=False)
    dev_path = _need(cfg.data.dev, "data.dev")
    gold_path = _need(cfg.data.dev_gold, "data.dev_gold") if cfg.data.dev_gold else None
    dev = read_corpus(dev_path, gold_path=gold_path, lang_pair=cfg.lang_pair)
    gw = _gateway(cfg, args.out)
    prompts = TranslationPromptAssets.for_pair(cfg.lang_pair, cfg.prompt_style, cfg.target_language)
    pool = build_pool(dev, cfg.pool_build, gw, prompts, cfg.seed)
    save_pool(pool, args.out / "pool.jsonl")
    log.info("pool of %d entries written to %s", len(pool), args.out / "pool.jsonl")
    return 0


def _translate_one(cfg: PipelineConfig, corpus, pool, gw, out: Path) -> RunReport:
    from .pipeline import Pipeline, resolve_pre_threshold, run_corpus

    pipeline = Pipeline(cfg, gw, pool)
    pipeline, todo, extra = resolve_pre_threshold(pipeline, corpus)
    return run_corpus(todo, pipeline, out, extra_summary=extra)


def cmd_translate(args) -> int:
    from .pool import load_pool

    cfg, _ = _load(args)
    corpus = _corpus(cfg)
    pool = load_pool(_need(cfg.data.pool, "data.pool"))
    gw = _gateway(cfg, args.out)
    if not args.sweep:
        report = _translate_one(cfg, corpus, pool, gw, args.out)
        log.info("%d sentences, %d bridged, %d took the bridged output", report.summary["n_sentences"],
                 report.summary["n_bridged"], report.summary["n_selected"])
        return _run_status(report)
    lines = ["strategy\tk\taggregation\tfilters\tn_bridged\tn_selected\tzero_shot_x100\toutput_x100\trun"]
    status = 0
    for sub in sweep_configs(cfg):
        name = _sweep_name(sub)
        log.info("sweep: %s", name)
        report = _translate_one(sub, corpus, pool, gw, args.out / name)
        status = max(status, _run_status(report))
        s = report.summary
        fmt = lambda v: "" if v is None else f"{100 * v:.2f}"  # noqa: E731
        agg = sub.aggregation.kind if sub.selection.k > 1 else "-"
        lines.append(f"{sub.selection.strategy.label}\t{sub.selection.k}\t{agg}\t{_regime(sub)}\t{s['n_bridged']}\t"
                     f"{s['n_selected']}\t{fmt(s['mean_zero_shot_qe'])}\t{fmt(s['mean_output_qe'])}\t{name}")
    table = "\n".join(lines) + "\n"
    _write(args.out / "sweep.tsv", table)
    sys.stdout.write(table)
    return status


def cmd_baseline(args) -> int:
    from .evaluation import run_baseline
    from .pool import load_pool

    cfg, _ = _load(args)
    corpus = _corpus(cfg)
    pool = []
    if cfg.baseline.mode == "k_shot" and cfg.baseline.k > 0:
        pool = load_pool(_need(cfg.baseline.pool or cfg.data.pool, "baseline.pool"))
    gw = _gateway(cfg, args.out)
    return _run_status(run_baseline(corpus, cfg, gw, pool, args.out))


def cmd_evaluate(args) -> int:
    from .evaluation import score_report
    from .pipeline import load_report
    from .plotting import plot_scores

    cfg, _ = _load(args)
    corpus = _corpus(cfg)
    scorers = args.scorer or [cfg.qe]
    gw = _gateway(cfg, args.out)
    reports = {}
    for run in args.runs:
        label = run.resolve().name
        if label in reports:
            raise UsageError(f"two runs share the label {label!r}")
        reports[label] = load_report(run)
    table = score_report(reports, scorers, gw, corpus)
    tsv = table.to_tsv()
    _write(args.out / "scores.tsv", tsv)
    _write(args.out / "scores.json", json.dumps(table.to_dict(), indent=2, sort_keys=True) + "\n")
    plot_scores(table, args.out / "scores.png")
    sys.stdout.write(tsv)
    return 0


def cmd_analyze_bridges(args) -> int:
    from .evaluation import analyze_bridges, bridges_of, export_trajectories, progress_tsv
    from .pipeline import load_records
    from .plotting import plot_progress

    cfg, _ = _load(args)
    records = load_records(args.run / "records.jsonl")
    traces = bridges_of(records)
    if not traces:
        raise UsageError(f"{args.run} has no bridges to analyse")
    gw = _gateway(cfg, args.out)
    embed = lambda xs: gw.embed(cfg.embedder, xs)  # noqa: E731
    gold = {}
    if cfg.data.corpus and cfg.data.gold:
        by_id = {p.id: p.gold for p in _corpus(cfg)}
        gold = {bid: by_id[bid.rsplit("#", 1)[0]] for bid, _ in traces if by_id.get(bid.rsplit("#", 1)[0])}
    progress, summary = analyze_bridges(traces, embed, target_embed=embed if gold else None, gold=gold)
    tsv = progress_tsv(progress)
    _write(args.out / "progress.tsv", tsv)
    _write(args.out / "progress_summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    plot_progress(progress, args.out / "progress.png")
    if not args.no_trajectories:
        export_trajectories(traces, embed, args.out / "trajectories")
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    return 0


def cmd_cost_report(args) -> int:
    from .pipeline import compare_costs, cost_report, cost_table_tsv, load_report
    from .plotting import plot_stage_costs

    report = load_report(args.run)
    rows = cost_report(report)
    tsv = cost_table_tsv(rows)
    if args.compare is not None:
        ratios = compare_costs(load_report(args.compare), report)
        tsv += "\nstage\tratio_vs_compare\n" + "".join(
            f"{s}\t{'' if r is None else f'{r:.4f}'}\n" for s, r in ratios.items()
        )
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        _write(args.out / "cost.tsv", tsv)
        plot_stage_costs(rows, args.out / "cost.png")
    sys.stdout.write(tsv)
    return 0


def cmd_mock_server(args) -> int:
    from .gateway.server import MockServer, load_scripts

    server = MockServer(load_scripts(args.scripts), args.host, args.port, args.max_concurrency)
    log.info("mock providers listening on %s", server.url)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


COMMANDS = {
    "build-pool": cmd_build_pool,
    "translate": cmd_translate,
    "baseline": cmd_baseline,
    "evaluate": cmd_evaluate,
    "analyze-bridges": cmd_analyze_bridges,
    "cost-report": cmd_cost_report,
    "mock-server": cmd_mock_server,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="bridgmt: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    logging.getLogger("httpx").setLevel(logging.WARNING)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ParseError) as exc:
        print(f"bridgmt: error: {exc}", file=sys.stderr)
        return 2
    except (BridgError, OSError) as exc:
        print(f"bridgmt: run failed: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("bridgmt: interrupted; rerun with the same --out to resume", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
