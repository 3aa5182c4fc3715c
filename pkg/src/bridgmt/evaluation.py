"""Baselines, score tables and bridge trajectory analysis."""

from __future__ import annotations

import csv
import math
import re
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .config import PipelineConfig
from .core import DecisionRecord, PoolEntry, RunReport, SentencePair
from .errors import BridgError, UsageError
from .gateway import Gateway
from .metrics import cosine_similarity, euclidean_distance
from .pipeline import StageTimer, run_corpus
from .prompts import TranslationPromptAssets
from .selection import _pool_rank

Embedder = Callable[[Sequence[str]], Sequence[Sequence[float]]]


# --- baselines -----------------------------------------------------------------


class BaselineRunner:
    """Zero-shot or k-shot translation with few-shot pairs retrieved by similarity."""

    def __init__(
        self,
        cfg: PipelineConfig,
        gateway: Gateway,
        pool: Sequence[PoolEntry] = (),
        prompts: TranslationPromptAssets | None = None,
    ) -> None:
        cfg.validate_backends(pipeline=False)
        self.cfg = cfg
        self.gateway = gateway
        self.k = cfg.baseline.k if cfg.baseline.mode == "k_shot" else 0
        self.pool = list(pool)
        if self.k > len(self.pool):
            raise UsageError(f"k = {self.k} exceeds the pool size {len(self.pool)}")
        if self.k and any(e.pair.gold is None for e in self.pool):
            raise UsageError("k-shot retrieval needs pool entries that carry gold translations")
        self.prompts = prompts or TranslationPromptAssets.for_pair(cfg.lang_pair, cfg.prompt_style, cfg.target_language)
        self._vectors: list | None = None

    def _pool_vectors(self) -> list:
        if self._vectors is None:
            missing = [e.source for e in self.pool if e.embedding is None]
            fetched = dict(zip(missing, self.gateway.embed(self.cfg.embedder, missing))) if missing else {}
            self._vectors = [e.embedding if e.embedding is not None else fetched[e.source] for e in self.pool]
        return self._vectors

    def retrieve(self, source: str) -> list[PoolEntry]:
        """The ``k`` most similar pool entries, most similar first."""
        if self.k == 0:
            return []
        end_vec = self.gateway.embed(self.cfg.embedder, [source])[0]
        sims = [cosine_similarity(end_vec, v) for v in self._pool_vectors()]
        order = sorted(range(len(self.pool)), key=lambda i: (-sims[i], _pool_rank(self.pool[i])))
        return [self.pool[i] for i in order[: self.k]]

    def translate_sentence(self, end: SentencePair) -> DecisionRecord:
        timer = StageTimer(self.cfg.timing)
        try:
            with timer.stage("selection"):
                shots = self.retrieve(end.source)
            with timer.stage("zero_shot"):
                request = self.prompts.request(
                    self.cfg.gradual.translator,
                    end.source,
                    [(e.source, e.pair.gold) for e in shots],
                    seed=self.cfg.seed,
                )
                text = self.gateway.chat(request).strip()
            with timer.stage("post_filter"):
                qe = self.gateway.score_qe(self.cfg.qe, end.source, text)
        except BridgError as exc:
            if self.cfg.strict:
                raise
            return DecisionRecord(end.id, None, timings=timer.timings, error=f"{type(exc).__name__}: {exc}")
        return DecisionRecord(end.id, (text, qe), timings=timer.timings, starts=tuple(e.pair.id for e in shots))


def run_baseline(
    corpus: Sequence[SentencePair],
    cfg: PipelineConfig,
    gateway: Gateway,
    pool: Sequence[PoolEntry] = (),
    run_dir: str | Path | None = None,
) -> RunReport:
    runner = BaselineRunner(cfg, gateway, pool)
    extra = {"method": f"{cfg.baseline.mode}" + (f"@{runner.k}" if runner.k else "")}
    return run_corpus(corpus, runner, run_dir, extra_summary=extra)


# --- score tables -----------------------------------------------------------------


@dataclass(frozen=True)
class ScoreCell:
    method: str
    language: str
    scorer: str
    mean: float | None  # already multiplied by 100
    n: int


@dataclass(frozen=True)
class ScoreTable:
    cells: tuple[ScoreCell, ...]

    @property
    def scorers(self) -> list[str]:
        return list(dict.fromkeys(c.scorer for c in self.cells))

    def rows(self) -> list[tuple[str, str, dict[str, float | None]]]:
        out: dict[tuple[str, str], dict[str, float | None]] = {}
        for c in self.cells:
            out.setdefault((c.method, c.language), {})[c.scorer] = c.mean
        return [(m, lang, scores) for (m, lang), scores in out.items()]

    def to_tsv(self) -> str:
        scorers = self.scorers
        lines = ["\t".join(["method", "language", *scorers])]
        for method, lang, scores in self.rows():
            vals = ["" if scores.get(s) is None else f"{scores[s]:.2f}" for s in scorers]
            lines.append("\t".join([method, lang, *vals]))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "scale": "x100",
            "cells": [
                {"method": c.method, "language": c.language, "scorer": c.scorer, "mean": c.mean, "n": c.n}
                for c in self.cells
            ],
        }


def score_report(
    reports: Mapping[str, RunReport],
    scorers: Sequence[str],
    gateway: Gateway,
    corpus: Sequence[SentencePair],
) -> ScoreTable:
    """Mean score (x100) of each method's final outputs under each scorer.

    Failed records are left out. Reference-based scorers need gold for every
    scored sentence.
    """
    by_id = {p.id: p for p in corpus}
    for sid in scorers:
        prof = gateway.profile(sid, "qe")
        if prof.reference_based:
            missing = [p.id for p in corpus if p.gold is None]
            if missing:
                raise UsageError(f"scorer {sid!r} is reference-based but {missing[0]} has no gold translation")
    cells = []
    for method, report in reports.items():
        records = [r for r in report.per_sentence if r.error is None and r.output is not None]
        for r in records:
            if r.end_id not in by_id:
                raise UsageError(f"record {r.end_id} is not in the evaluation corpus")
        lang = _language(corpus)
        for sid in scorers:
            ref_based = gateway.profile(sid, "qe").reference_based
            values = [
                gateway.score_qe(
                    sid,
                    by_id[r.end_id].source,
                    r.output,
                    by_id[r.end_id].gold if ref_based else None,
                ).value
                for r in records
            ]
            mean = 100.0 * math.fsum(values) / len(values) if values else None
            cells.append(ScoreCell(method, lang, sid, mean, len(values)))
    return ScoreTable(tuple(cells))


def _language(corpus: Sequence[SentencePair]) -> str:
    pairs = {p.lang_pair for p in corpus}
    return ",".join(sorted(f"{a}-{b}" for a, b in pairs)) or "-"


# --- bridge analysis -----------------------------------------------------------------


@dataclass(frozen=True)
class ProgressRecord:
    bridge_id: str
    side: str
    distances: tuple[float, ...]
    progresses: tuple[float, ...]
    average_progress: float

    @classmethod
    def from_distances(cls, bridge_id: str, distances: Sequence[float], side: str = "source") -> ProgressRecord:
        if len(distances) < 2:
            raise UsageError("progress needs at least two distances")
        d = tuple(float(x) for x in distances)
        prog = tuple(d[i - 1] - d[i] for i in range(1, len(d)))
        return cls(bridge_id, side, d, prog, math.fsum(prog) / len(prog))


def bridges_of(records: Sequence[DecisionRecord]) -> list[tuple[str, object]]:
    """(bridge_id, trace) for every bridge in a run, in record order."""
    return [(f"{r.end_id}#{j}", t) for r in records for j, t in enumerate(r.bridges)]


def _distances(vectors: Sequence[Sequence[float]], target: Sequence[float]) -> list[float]:
    return [euclidean_distance(v, target) for v in vectors]


def analyze_bridges(
    traces: Sequence[tuple[str, object]],
    embed: Embedder,
    *,
    target_embed: Embedder | None = None,
    gold: Mapping[str, str] | None = None,
) -> tuple[list[ProgressRecord], dict]:
    """Progress toward the end sentence along each bridge.

    ``gold`` maps bridge ids to gold translations of the end sentence; when
    given (with ``target_embed``), the translated steps are analysed against
    the gold embedding as well. Bridges of a single sentence are skipped.
    """
    if not traces:
        raise UsageError("no bridges to analyse")
    out: list[ProgressRecord] = []
    skipped = 0
    for bridge_id, trace in traces:
        sentences = list(trace.bridge.sentences)
        if len(sentences) < 2:
            skipped += 1
            continue
        vecs = embed(sentences)
        out.append(ProgressRecord.from_distances(bridge_id, _distances(vecs, vecs[-1]), "source"))
        ref = (gold or {}).get(bridge_id)
        if target_embed is not None and ref is not None:
            tvecs = target_embed([y for _, y in trace.steps] + [ref])
            out.append(ProgressRecord.from_distances(bridge_id, _distances(tvecs[:-1], tvecs[-1]), "target"))
    summary: dict = {"skipped_single_sentence": skipped}
    for side in ("source", "target"):
        avgs = [r.average_progress for r in out if r.side == side]
        if avgs:
            summary[side] = {
                "n_bridges": len(avgs),
                "mean": math.fsum(avgs) / len(avgs),
                "stddev": statistics.pstdev(avgs),
            }
    return out, summary


def progress_tsv(records: Sequence[ProgressRecord]) -> str:
    lines = ["bridge_id\tside\tn\taverage_progress\tdistances"]
    for r in records:
        dist = ",".join(f"{d:.6f}" for d in r.distances)
        lines.append(f"{r.bridge_id}\t{r.side}\t{len(r.distances)}\t{r.average_progress:.6f}\t{dist}")
    return "\n".join(lines) + "\n"


def _safe_name(bridge_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", bridge_id)


def export_trajectories(traces: Sequence[tuple[str, object]], embed: Embedder, out_dir: str | Path) -> list[dict]:
    """One CSV per bridge (index, sentence, v1..vd) plus ``manifest.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = []
    for bridge_id, trace in traces:
        sentences = list(trace.bridge.sentences)
        vecs = embed(sentences)
        name = f"{_safe_name(bridge_id)}.csv"
        dim = len(vecs[0]) if vecs else 0
        with open(out_dir / name, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "sentence", *(f"v{j}" for j in range(1, dim + 1))])
            for i, (s, v) in enumerate(zip(sentences, vecs), start=1):
                w.writerow([i, s, *(repr(float(x)) for x in v)])
        manifest.append({"bridge_id": bridge_id, "file": name, "n": len(sentences), "dim": dim})
    with open(out_dir / "manifest.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, ["bridge_id", "file", "n", "dim"], lineterminator="\n")
        w.writeheader()
        w.writerows(manifest)
    return manifest


def read_trajectory(path: str | Path) -> tuple[list[str], list[list[float]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    return [r[1] for r in body], [[float(x) for x in r[2:]] for r in body]
