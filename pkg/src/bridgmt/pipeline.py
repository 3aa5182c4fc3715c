"""End-to-end orchestration over a corpus.

Run directory layout::

    config.snapshot   canonical TOML of the resolved configuration
    records.jsonl     one DecisionRecord per line, corpus order, append-only
    summary.json      RunReport summary document
    cache.jsonl       provider response cache

A run can be interrupted and restarted on the same directory; sentences
already in ``records.jsonl`` are not recomputed. Restarting with a config
whose fingerprint differs from the snapshot is refused.
"""

from __future__ import annotations

import contextvars
import json
import logging
import math
import random
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Sequence

from .bridging import generate_bridge, gradual_mt, sample_bridge
from .config import PipelineConfig, config_from_dict, dump_config, fingerprint_config, load_config_dict
from .core import STAGES, DecisionRecord, PoolEntry, RunReport, SentencePair, canonical_json, iter_jsonl
from .decisions import (
    aggregate_polling,
    aggregate_prompting,
    apply_filters,
    compute_pre_threshold,
    passes_pre_filter,
)
from .errors import BridgError, ConfigError, UsageError
from .gateway import CostMeter, Gateway, ResponseCache
from .metrics import HttpTreeProvider, chain_tree
from .prompts import BridgingPromptAssets, TranslationPromptAssets
from .seeds import derive_seed
from .selection import TreeCache, score_candidates, select_starts

log = logging.getLogger(__name__)


def build_gateway(cfg: PipelineConfig, cache_path: str | Path | None = None, **kwargs) -> Gateway:
    return Gateway(cfg.backends, cache=ResponseCache(cache_path), **kwargs)


class StageTimer:
    """Per-stage seconds, measured on the wall clock or as charged provider time."""

    def __init__(self, mode: str = "wall") -> None:
        self.mode = mode
        self._micros: dict[str, int] = {}
        self._secs: dict[str, float] = {}

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        if self.mode == "charged":
            with CostMeter() as meter:
                try:
                    yield
                finally:
                    self._micros[name] = self._micros.get(name, 0) + meter.micros
        else:
            t0 = time.perf_counter()
            try:
                yield
            finally:
                self._secs[name] = self._secs.get(name, 0.0) + (time.perf_counter() - t0)

    @property
    def timings(self) -> dict[str, float]:
        if self.mode == "charged":
            return {k: v / 1e6 for k, v in self._micros.items()}
        return dict(self._secs)


class Pipeline:
    """Holds everything a single end-sentence translation needs."""

    def __init__(
        self,
        cfg: PipelineConfig,
        gateway: Gateway,
        pool: Sequence[PoolEntry],
        *,
        prompts: TranslationPromptAssets | None = None,
        bridging_assets: BridgingPromptAssets | None = None,
    ) -> None:
        cfg.validate_backends()
        if len(pool) < cfg.selection.k:
            raise UsageError(f"pool has {len(pool)} entries but k = {cfg.selection.k}")
        self.cfg = cfg
        # effective policy; differs from cfg.filters once a holdout threshold is resolved
        self.filters = cfg.filters
        self.gateway = gateway
        self.pool = list(pool)
        self.prompts = prompts or TranslationPromptAssets.for_pair(cfg.lang_pair, cfg.prompt_style, cfg.target_language)
        self.bridging_assets = bridging_assets or BridgingPromptAssets.default()
        provider = chain_tree if cfg.tree_provider == "chain" else HttpTreeProvider(cfg.tree_provider)
        self.trees = TreeCache(provider)

    def with_filters(self, **changes) -> Pipeline:
        clone = Pipeline.__new__(Pipeline)
        clone.__dict__.update(self.__dict__)
        clone.filters = replace(self.filters, **changes)
        return clone

    def embed(self, sentences: Sequence[str]):
        return self.gateway.embed(self.cfg.embedder, sentences)

    def score(self, source: str, translation: str):
        return self.gateway.score_qe(self.cfg.qe, source, translation)

    def zero_shot(self, source: str) -> str:
        request = self.prompts.request(self.cfg.gradual.translator, source, seed=self.cfg.seed)
        return self.gateway.chat(request).strip()

    def translate_sentence(self, end: SentencePair) -> DecisionRecord:
        """Run every stage for one end sentence; fail-soft unless ``strict``."""
        timer = StageTimer(self.cfg.timing)
        partial: dict = {}
        try:
            return self._translate(end, timer, partial)
        except BridgError as exc:
            if self.cfg.strict:
                raise
            log.warning("%s failed: %s", end.id, exc)
            return DecisionRecord(
                end.id,
                partial.get("zero_shot"),
                timings=timer.timings,
                error=f"{type(exc).__name__}: {exc}",
            )

    def _translate(self, end: SentencePair, timer: StageTimer, partial: dict) -> DecisionRecord:
        cfg, policy, src = self.cfg, self.filters, end.source
        with timer.stage("zero_shot"):
            zs = self.zero_shot(src)
        with timer.stage("pre_filter" if policy.pre is not None else "post_filter"):
            zq = self.score(src, zs)
        partial["zero_shot"] = (zs, zq)
        record = DecisionRecord(end.id, (zs, zq))
        if not passes_pre_filter(zq.value, policy):
            return replace(apply_filters(record, policy), timings=timer.timings)

        with timer.stage("selection"):
            scored = score_candidates(src, self.pool, self.embed, self.trees)
            starts = select_starts(scored, cfg.selection, derive_seed(cfg.seed, "select", end.id))
        with timer.stage("bridging"):
            bridges = [
                generate_bridge(s.source, src, self.gateway, cfg.gradual, self.bridging_assets,
                                seed=derive_seed(cfg.seed, "bridge", end.id, j))
                for j, s in enumerate(starts)
            ]
        if cfg.gradual.sampling_mode == "sampled":
            bridges = [sample_bridge(b) for b in bridges]
        with timer.stage("gradual_mt"):
            traces = [gradual_mt(b, self.gateway, cfg.gradual, self.prompts, seed=cfg.seed) for b in bridges]
        finals = [t.final for t in traces]
        if len(finals) == 1:
            aggregate = finals[0]
        else:
            with timer.stage("aggregation"):
                if cfg.aggregation.kind == "polling":
                    aggregate = aggregate_polling(finals, derive_seed(cfg.seed, "poll", end.id))
                else:
                    aggregate = aggregate_prompting(
                        src, finals, self.gateway, cfg.gradual.translator, self.prompts, seed=cfg.seed
                    ).strip()
        record = replace(
            record,
            bridges=tuple(traces),
            aggregate=(aggregate, None),
            starts=tuple(s.pair.id for s in starts),
        )
        if policy.post:
            with timer.stage("post_filter"):
                record = apply_filters(record, policy, self.score, src)
        else:
            record = apply_filters(record, policy)
        return replace(record, timings=timer.timings)


# --- corpus runs -----------------------------------------------------------------


def split_holdout(corpus: Sequence[SentencePair], fraction: float, seed: int) -> tuple[list, list]:
    """Deterministic random split into (evaluation, holdout), both in corpus order."""
    n_hold = math.floor(len(corpus) * fraction)
    picked = set(random.Random(seed).sample(range(len(corpus)), n_hold))
    evaluation = [p for i, p in enumerate(corpus) if i not in picked]
    holdout = [p for i, p in enumerate(corpus) if i in picked]
    return evaluation, holdout


def resolve_pre_threshold(pipeline: Pipeline, corpus: Sequence[SentencePair]) -> tuple[Pipeline, list, dict]:
    """Derive the pre-filter threshold from a held-out split when requested.

    Returns the (possibly updated) pipeline, the sentences left to translate,
    and fields for the run summary.
    """
    cfg = pipeline.cfg
    if cfg.filters.pre is not None:
        return pipeline, list(corpus), {"pre_threshold": cfg.filters.pre}
    if cfg.pre_percentile is None:
        return pipeline, list(corpus), {}
    evaluation, holdout = split_holdout(corpus, cfg.holdout_fraction, derive_seed(cfg.seed, "holdout"))
    if not holdout:
        raise UsageError("holdout split is empty; raise holdout_fraction or set filters.pre_threshold")
    pairs = [(p.source, pipeline.zero_shot(p.source)) for p in holdout]
    tau = compute_pre_threshold(pairs, pipeline.score, cfg.pre_percentile)
    log.info("pre-filter threshold %.4f from %d held-out sentences (p=%g)", tau, len(holdout), cfg.pre_percentile)
    extra = {
        "pre_threshold": tau,
        "pre_percentile": cfg.pre_percentile,
        "holdout_ids": [p.id for p in holdout],
    }
    return pipeline.with_filters(pre=tau), evaluation, extra


def write_summary(path: Path, report: RunReport) -> None:
    text = json.dumps(report.summary_document(), sort_keys=True, indent=2, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")


def _prepare_run_dir(run_dir: Path, cfg: PipelineConfig) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    snapshot = run_dir / "config.snapshot"
    fp = fingerprint_config(cfg)
    if snapshot.exists():
        try:
            previous = fingerprint_config(config_from_dict(load_config_dict(snapshot)))
        except ConfigError as exc:
            raise UsageError(f"{snapshot} is unreadable: {exc}") from exc
        if previous != fp:
            raise UsageError(f"{run_dir} holds a run with a different configuration; use a fresh --out")
    snapshot.write_text(dump_config(cfg), encoding="utf-8")


def load_records(path: Path) -> list[DecisionRecord]:
    if not path.exists():
        return []
    return [DecisionRecord.from_dict(obj) for _, obj in iter_jsonl(path, tolerate_torn_tail=True)]


def run_corpus(
    corpus: Sequence[SentencePair],
    pipeline: Pipeline,
    run_dir: str | Path | None = None,
    *,
    extra_summary: dict | None = None,
    record_fn=None,
) -> RunReport:
    """Translate every sentence; records come out in corpus order.

    ``record_fn`` replaces ``pipeline.translate_sentence`` (used by the
    baseline runner, which shares the persistence logic).
    """
    cfg = pipeline.cfg
    fp = fingerprint_config(cfg)
    translate = record_fn or pipeline.translate_sentence
    ids = [p.id for p in corpus]
    if len(set(ids)) != len(ids):
        raise UsageError("corpus sentence ids are not unique")
    done: dict[str, DecisionRecord] = {}
    out = None
    if run_dir is not None:
        run_dir = Path(run_dir)
        _prepare_run_dir(run_dir, cfg)
        records_path = run_dir / "records.jsonl"
        existing = [r for r in load_records(records_path) if r.end_id in set(ids)]
        done = {r.end_id: r for r in existing}
        prefix = [done[i] for i in ids[: len(existing)] if i in done]
        if [r.end_id for r in existing] == [r.end_id for r in prefix] and records_path.exists():
            # file holds exactly an ordered prefix: drop any torn tail by rewriting it
            _rewrite(records_path, existing)
        else:
            _rewrite(records_path, [done[i] for i in ids if i in done])
        out = open(records_path, "a", encoding="utf-8", newline="\n")
    results: dict[str, DecisionRecord] = dict(done)
    pending = [p for p in corpus if p.id not in done]
    if done:
        log.info("resuming: %d of %d sentences already done", len(done), len(corpus))
    cursor = 0

    def flush() -> None:
        nonlocal cursor
        while cursor < len(ids) and ids[cursor] in results:
            rec = results[ids[cursor]]
            if out is not None and ids[cursor] not in done:
                out.write(canonical_json(rec.to_dict()) + "\n")
                out.flush()
            cursor += 1

    try:
        flush()
        if cfg.concurrency == 1:
            for pair in pending:
                results[pair.id] = translate(pair)
                flush()
                log.info("%s done (%d/%d)", pair.id, len(results), len(corpus))
        else:
            with ThreadPoolExecutor(max_workers=cfg.concurrency) as ex:
                futures = {ex.submit(contextvars.copy_context().run, translate, p): p for p in pending}
                remaining = set(futures)
                while remaining:
                    finished, remaining = wait(remaining, return_when=FIRST_COMPLETED)
                    for fut in finished:
                        results[futures[fut].id] = fut.result()
                    flush()
    finally:
        if out is not None:
            out.close()
    extra = dict(extra_summary or {})
    policy = getattr(pipeline, "filters", None)
    if policy is not None and policy.pre is not None:
        extra.setdefault("pre_threshold", policy.pre)
    report = RunReport.build([results[i] for i in ids], fp, cfg.seed, **extra)
    if run_dir is not None:
        write_summary(Path(run_dir) / "summary.json", report)
    return report


def _rewrite(path: Path, records: Sequence[DecisionRecord]) -> None:
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(canonical_json(r.to_dict()) + "\n")
    tmp.replace(path)


def load_report(run_dir: str | Path) -> RunReport:
    run_dir = Path(run_dir)
    summary_path = run_dir / "summary.json"
    if not summary_path.exists():
        raise UsageError(f"{run_dir} has no summary.json; is the run complete?")
    doc = json.loads(summary_path.read_text(encoding="utf-8"))
    records = load_records(run_dir / "records.jsonl")
    return RunReport(tuple(records), doc["summary"], doc["config_fingerprint"], doc["seed"])


# --- cost accounting ---------------------------------------------------------------


@dataclass(frozen=True)
class CostRow:
    stage: str
    sentences: int
    total_s: float
    mean_s: float
    percent: float


def cost_report(report: RunReport) -> list[CostRow]:
    """Mean seconds per sentence for each stage and its share of the total."""
    per_stage: dict[str, list[float]] = {}
    for rec in report.per_sentence:
        for stage, secs in rec.timings.items():
            per_stage.setdefault(stage, []).append(secs)
    if not per_stage:
        return []
    totals = {s: math.fsum(v) for s, v in per_stage.items()}
    grand = math.fsum(totals.values())
    order = [s for s in STAGES if s in per_stage] + sorted(set(per_stage) - set(STAGES))
    return [
        CostRow(
            s,
            len(per_stage[s]),
            totals[s],
            totals[s] / len(per_stage[s]),
            100.0 * totals[s] / grand if grand > 0 else 0.0,
        )
        for s in order
    ]


def compare_costs(baseline: RunReport, candidate: RunReport) -> dict[str, float | None]:
    """Per-stage ratio of candidate to baseline mean time (None where undefined)."""
    a = {r.stage: r.mean_s for r in cost_report(baseline)}
    b = {r.stage: r.mean_s for r in cost_report(candidate)}
    return {s: (b[s] / a[s] if s in b and a.get(s) else None) for s in STAGES if s in a or s in b}


def cost_table_tsv(rows: Sequence[CostRow]) -> str:
    lines = ["stage\tsentences\ttotal_s\tmean_s\tpercent"]
    lines += [f"{r.stage}\t{r.sentences}\t{r.total_s:.6f}\t{r.mean_s:.6f}\t{r.percent:.2f}" for r in rows]
    return "\n".join(lines) + "\n"
