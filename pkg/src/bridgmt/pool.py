"""Start-sentence pool construction from a development corpus."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .core import PoolEntry, QeScore, SentencePair, iter_jsonl, nfc, write_jsonl
from .errors import ParseError, UsageError, ValidationError
from .gateway import Gateway
from .prompts import TranslationPromptAssets
from .seeds import derive_seed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PoolBuildConfig:
    translator: str = "translator"
    qe: str = "qe"
    embedder: str = "embedder"
    samples_per_sentence: int = 5
    pool_size: int = 100
    concurrency: int = 1

    def __post_init__(self) -> None:
        if self.samples_per_sentence < 1:
            raise UsageError("samples_per_sentence must be >= 1")
        if self.pool_size < 1:
            raise UsageError("pool_size must be >= 1")


def _norm(text: str) -> str:
    return nfc(text).strip()


def pick_representative(translations: Sequence[tuple[str, QeScore]]) -> tuple[str, QeScore]:
    """Choose the representative among repeated samples of one source.

    The most frequent translation wins (mode ties: higher mean QE, then first
    occurrence). With no repeats, the sample whose QE is closest to the mean
    is chosen (ties: first occurrence).
    """
    if not translations:
        raise UsageError("pick_representative needs at least one translation")
    groups: dict[str, list[int]] = defaultdict(list)
    for i, (text, _) in enumerate(translations):
        groups[_norm(text)].append(i)
    top = max(len(ix) for ix in groups.values())
    if top > 1:
        modes = [ix for ix in groups.values() if len(ix) == top]
        best = max(
            modes,
            key=lambda ix: (math.fsum(translations[i][1].value for i in ix) / len(ix), -ix[0]),
        )
        return translations[best[0]]
    mean = math.fsum(qe.value for _, qe in translations) / len(translations)
    i = min(range(len(translations)), key=lambda i: (abs(translations[i][1].value - mean), i))
    return translations[i]


def _represent(
    pair: SentencePair, cfg: PoolBuildConfig, gateway: Gateway, prompts: TranslationPromptAssets, seed: int
) -> tuple[str, QeScore]:
    samples = []
    for i in range(cfg.samples_per_sentence):
        request = prompts.request(cfg.translator, pair.source, seed=derive_seed(seed, "pool", pair.id, i))
        text = gateway.chat(request).strip()
        samples.append((text, gateway.score_qe(cfg.qe, pair.source, text)))
    return pick_representative(samples)


def build_pool(
    dev_corpus: Sequence[SentencePair],
    cfg: PoolBuildConfig,
    gateway: Gateway,
    prompts: TranslationPromptAssets,
    seed: int = 0,
) -> list[PoolEntry]:
    """Sample, score and rank dev translations; keep the best ``pool_size``.

    Each sample uses its own derived seed so cached requests stay distinct.
    """
    if not dev_corpus:
        raise UsageError("dev corpus is empty")
    if cfg.pool_size > len(dev_corpus):
        raise UsageError(f"pool_size {cfg.pool_size} exceeds the dev corpus size {len(dev_corpus)}")
    with ThreadPoolExecutor(max_workers=max(1, cfg.concurrency)) as ex:
        reps = list(ex.map(lambda p: _represent(p, cfg, gateway, prompts, seed), dev_corpus))
    order = sorted(range(len(dev_corpus)), key=lambda i: (-reps[i][1].value, i))[: cfg.pool_size]
    kept = [dev_corpus[i] for i in order]
    vectors = gateway.embed(cfg.embedder, [p.source for p in kept])
    log.info("pool: kept %d of %d sentences", len(kept), len(dev_corpus))
    return [PoolEntry(p, reps[i][0], reps[i][1], v) for p, i, v in zip(kept, order, vectors)]


def save_pool(entries: Sequence[PoolEntry], path: str | Path) -> None:
    write_jsonl(path, (e.to_dict() for e in entries))


def load_pool(path: str | Path) -> list[PoolEntry]:
    """Read and validate a pool file; errors carry the offending line number."""
    entries = []
    seen: set[str] = set()
    dim = None
    for line, obj in iter_jsonl(path):
        try:
            entry = PoolEntry.from_dict(obj)
        except (KeyError, TypeError, ValidationError) as exc:
            raise ParseError(f"invalid pool entry: {exc}", line=line) from None
        if entry.pair.id in seen:
            raise ParseError(f"duplicate sentence id {entry.pair.id!r}", line=line)
        seen.add(entry.pair.id)
        if entry.embedding is not None:
            if dim is None:
                dim = len(entry.embedding)
            elif len(entry.embedding) != dim:
                raise ParseError(f"embedding dimension {len(entry.embedding)} differs from {dim}", line=line)
        entries.append(entry)
    return entries
