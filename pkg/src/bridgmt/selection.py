"""Choosing start sentences for an end sentence.

Three metrics are computed per pool entry: SBERT-style cosine similarity
(``S``, higher is closer), Levenshtein distance (``L``) and tree edit
distance (``T``), both lower-is-closer. Residual ties always fall back to
pool order, i.e. higher pool QE first and then sentence id, which makes
every strategy independent of the order candidates are passed in.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Literal, Sequence

from .core import PoolEntry
from .errors import UsageError
from .metrics import TreeProvider, chain_tree, cosine_similarity, levenshtein, parse_tree, tree_edit_distance

Metric = Literal["S", "L", "T"]
Embedder = Callable[[Sequence[str]], Sequence[Sequence[float]]]

SWEEP_STRATEGIES = (
    "Filter(T-L)",
    "Filter(L-T)",
    "Sort(L-S)",
    "Sort(T-S)",
    "Sort(L-T-S)",
    "Sort(T-L-S)",
    "Sort(S-T)",
    "Tops",
)


@dataclass(frozen=True)
class SimilarityVector:
    sbert_sim: float
    lev_dist: int
    ted_dist: int

    def key(self, metric: str) -> float:
        if metric == "S":
            return -self.sbert_sim
        if metric == "L":
            return self.lev_dist
        return self.ted_dist


@dataclass(frozen=True)
class SelectionStrategy:
    kind: Literal["Sort", "Filter", "Tops"] = "Sort"
    metric_priority: tuple[Metric, ...] = ("S", "T")
    filter_width: int = 10

    def __post_init__(self) -> None:
        object.__setattr__(self, "metric_priority", tuple(self.metric_priority))
        if self.kind not in ("Sort", "Filter", "Tops"):
            raise UsageError(f"unknown selection strategy {self.kind!r}")
        if any(m not in ("S", "L", "T") for m in self.metric_priority):
            raise UsageError(f"unknown metric in {self.metric_priority}")
        if len(set(self.metric_priority)) != len(self.metric_priority):
            raise UsageError("metric priority lists a metric twice")
        if self.kind != "Tops" and not self.metric_priority:
            raise UsageError(f"{self.kind} needs at least one metric")
        if self.filter_width < 1:
            raise UsageError("filter_width must be positive")

    @property
    def label(self) -> str:
        if self.kind == "Tops":
            return "Tops"
        return f"{self.kind}({'-'.join(self.metric_priority)})"

    @classmethod
    def parse(cls, label: str, filter_width: int = 10) -> SelectionStrategy:
        m = re.fullmatch(r"\s*(Sort|Filter|Tops)\s*(?:\(([SLT](?:-[SLT])*)\))?\s*", label)
        if not m:
            raise UsageError(f"cannot parse selection strategy {label!r}")
        kind, metrics = m.group(1), m.group(2)
        if kind == "Tops":
            return cls("Tops", (), filter_width)
        if not metrics:
            raise UsageError(f"{kind} needs a metric list, e.g. {kind}(S-T)")
        return cls(kind, tuple(metrics.split("-")), filter_width)


@dataclass(frozen=True)
class SelectionConfig:
    strategy: SelectionStrategy = SelectionStrategy()
    k: int = 3

    def __post_init__(self) -> None:
        if self.k < 1:
            raise UsageError("k must be >= 1")
        if self.strategy.kind == "Tops" and self.k > 3:
            raise UsageError("Tops yields at most 3 start sentences")


Scored = tuple[PoolEntry, SimilarityVector]


class TreeCache:
    """Memoizes parse trees so pool sentences are parsed once per run."""

    def __init__(self, provider: TreeProvider = chain_tree) -> None:
        self.provider = provider
        self._trees: dict[str, object] = {}

    def __call__(self, sentence: str):
        tree = self._trees.get(sentence)
        if tree is None:
            tree = self._trees[sentence] = parse_tree(sentence, self.provider)
        return tree


def score_candidates(
    end: str,
    pool: Sequence[PoolEntry],
    embedder: Embedder | None,
    trees: Callable[[str], object] | None = None,
) -> list[Scored]:
    """All three metrics of every pool entry against ``end``."""
    if not pool:
        raise UsageError("the start pool is empty")
    if not end.strip():
        raise UsageError("end sentence is empty")
    if embedder is None:
        raise UsageError("no embedder configured; cannot compute similarity for the end sentence")
    trees = trees or TreeCache()
    missing = [e.source for e in pool if e.embedding is None]
    vectors = list(embedder([end] + missing))
    end_vec = vectors[0]
    fetched = dict(zip(missing, vectors[1:]))
    end_tree = trees(end)
    out = []
    for entry in pool:
        vec = entry.embedding if entry.embedding is not None else fetched[entry.source]
        sim = cosine_similarity(end_vec, vec)
        out.append(
            (
                entry,
                SimilarityVector(
                    sim,
                    levenshtein(end, entry.source),
                    int(tree_edit_distance(end_tree, trees(entry.source))),
                ),
            )
        )
    return out


def _pool_rank(entry: PoolEntry) -> tuple:
    ident = tuple(int(p) if p.isdigit() else p for p in re.split(r"(\d+)", entry.pair.id) if p)
    return (-entry.qe.value, tuple((0, p) if isinstance(p, int) else (1, p) for p in ident))


def _ordered(scored: Sequence[Scored], metrics: Sequence[str]) -> list[Scored]:
    return sorted(scored, key=lambda s: (tuple(s[1].key(m) for m in metrics), _pool_rank(s[0])))


def select_starts(scored: Sequence[Scored], cfg: SelectionConfig, rng_seed: int | None = None) -> list[PoolEntry]:
    """Pick ``cfg.k`` distinct start sentences. ``rng_seed`` is reserved."""
    k, strat = cfg.k, cfg.strategy
    if k > len(scored):
        raise UsageError(f"asked for {k} start sentences from {len(scored)} candidates")
    if strat.kind == "Sort":
        return [e for e, _ in _ordered(scored, strat.metric_priority)[:k]]
    if strat.kind == "Filter":
        shortlist = _ordered(scored, ("S",))[: strat.filter_width]
        if len(shortlist) < k:
            raise UsageError(f"filter width {strat.filter_width} leaves fewer than k={k} candidates")
        return [e for e, _ in _ordered(shortlist, strat.metric_priority)[:k]]
    picks: list[PoolEntry] = []
    taken: set[str] = set()
    for metric in ("S", "L", "T")[:k]:
        for entry, _ in _ordered(scored, (metric,)):
            if entry.pair.id not in taken:
                picks.append(entry)
                taken.add(entry.pair.id)
                break
    return picks
