"""Aggregation of per-bridge translations and QE-based pre/post filtering."""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass, replace
from typing import Callable, Literal, Sequence

from .core import DecisionRecord, QeScore
from .errors import UsageError
from .gateway import Gateway
from .prompts import TranslationPromptAssets


@dataclass(frozen=True)
class AggregationStrategy:
    kind: Literal["polling", "prompting"] = "prompting"

    def __post_init__(self) -> None:
        if self.kind not in ("polling", "prompting"):
            raise UsageError(f"unknown aggregation {self.kind!r}")


@dataclass(frozen=True)
class FilterPolicy:
    """``pre`` is the zero-shot QE threshold (None disables pre-filtering)."""

    pre: float | None = None
    post: bool = True

    def __post_init__(self) -> None:
        if self.pre is not None and not (0.0 <= self.pre <= 1.0):
            raise UsageError("pre-filter threshold must lie in [0, 1]")

    @property
    def label(self) -> str:
        parts = [p for p, on in (("pre", self.pre is not None), ("post", self.post)) if on]
        return "+".join(parts) or "none"


def aggregate_polling(candidates: Sequence[str], seed: int) -> str:
    """Most duplicated candidate; ties (including all-distinct) drawn with ``seed``."""
    if not candidates:
        raise UsageError("nothing to aggregate")
    counts = Counter(candidates)
    top = max(counts.values())
    modes = [c for c in dict.fromkeys(candidates) if counts[c] == top]
    if len(modes) == 1:
        return modes[0]
    return random.Random(seed).choice(modes)


def aggregate_prompting(
    end: str,
    candidates: Sequence[str],
    gateway: Gateway,
    translator: str,
    prompts: TranslationPromptAssets,
    seed: int | None = None,
) -> str:
    """Re-translate ``end`` with every candidate shown as an (end, candidate) example."""
    if not candidates:
        raise UsageError("nothing to aggregate")
    request = prompts.request(translator, end, [(end, c) for c in candidates], seed=seed)
    return gateway.chat(request)


def nearest_rank_percentile(values: Sequence[float], p: float) -> float:
    if not values:
        raise UsageError("percentile of an empty sample")
    if not (0 < p <= 100):
        raise UsageError("percentile must lie in (0, 100]")
    ordered = sorted(values)
    rank = max(1, math.ceil(p / 100 * len(ordered)))
    return ordered[rank - 1]


def compute_pre_threshold(
    holdout: Sequence[tuple[str, str]],
    scorer: Callable[[str, str], QeScore],
    percentile: float = 50.0,
) -> float:
    """Nearest-rank percentile of reference-free QE over held-out zero-shot pairs."""
    if not holdout:
        raise UsageError("holdout set is empty")
    return nearest_rank_percentile([scorer(src, mt).value for src, mt in holdout], percentile)


def passes_pre_filter(zero_shot_qe: float, policy: FilterPolicy) -> bool:
    """True when the sentence should be bridged."""
    return policy.pre is None or zero_shot_qe < policy.pre


def apply_filters(
    record: DecisionRecord,
    policy: FilterPolicy,
    scorer: Callable[[str, str], QeScore] | None = None,
    source: str | None = None,
) -> DecisionRecord:
    """Settle ``chosen`` (and ``prefiltered_out``) for a record in progress.

    With post-filtering on, the aggregate is scored (if not already) and wins
    only when its QE strictly exceeds the zero-shot QE.
    """
    if record.zero_shot is None:
        raise UsageError("apply_filters needs a scored zero-shot translation")
    zero_text, zero_qe = record.zero_shot
    if not passes_pre_filter(zero_qe.value, policy):
        return replace(record, prefiltered_out=True, bridges=(), aggregate=None, chosen="zero_shot")
    if record.aggregate is None:
        return replace(record, chosen="zero_shot")
    if not policy.post:
        return replace(record, chosen="bridg")
    agg_text, agg_qe = record.aggregate
    if agg_qe is None:
        if scorer is None or source is None:
            raise UsageError("post-filtering needs a QE scorer and the source sentence")
        agg_qe = scorer(source, agg_text)
    chosen = "bridg" if agg_qe.value > zero_qe.value else "zero_shot"
    return replace(record, aggregate=(agg_text, agg_qe), chosen=chosen)
