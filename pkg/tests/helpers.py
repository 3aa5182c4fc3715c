"""Mock-backed configurations and synthetic corpora shared by the tests."""

from __future__ import annotations

import random
from pathlib import Path

from bridgmt.config import config_from_dict
from bridgmt.core import PoolEntry, QeScore, SentencePair
from bridgmt.gateway import Gateway, ResponseCache
from bridgmt.gateway.mocks import reverse_words

# PASS/FAIL lines from test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_RESULTS: list[str] = []

WORDS = (
    "the a river city council old new bright stone road market bridge north winter "
    "people told quiet report minister harbor garden station later river's early "
    "small large green red blue lake forest mountain village teacher doctor writer "
    "walked opened closed built found crossed painted watched carried signed"
).split()


def sentence(rng: random.Random, lo: int = 4, hi: int = 9) -> str:
    words = [rng.choice(WORDS) for _ in range(rng.randint(lo, hi))]
    return " ".join(words).capitalize() + "."


def synthetic_corpus(n: int, seed: int = 0, name: str = "test") -> list[SentencePair]:
    rng = random.Random(seed)
    seen: set[str] = set()
    out = []
    while len(out) < n:
        s = sentence(rng)
        if s in seen:
            continue
        seen.add(s)
        out.append(SentencePair(f"{name}:{len(out) + 1}", s, reverse_words(s), ("en", "ko")))
    return out


def write_corpus(path: Path, pairs) -> tuple[Path, Path]:
    src = path.with_suffix(".src")
    gold = path.with_suffix(".gold")
    src.write_text("\n".join(p.source for p in pairs) + "\n", encoding="utf-8")
    gold.write_text("\n".join(p.gold for p in pairs) + "\n", encoding="utf-8")
    return src, gold


def mock_backends(latency: float | None = 0.01) -> dict:
    lat = {} if latency is None else {"latency": latency}
    return {
        "translator": {"kind": "chat", "endpoint": "mock:", "mock": {"fallback": "glossary"}, **lat},
        "bridger": {"kind": "chat", "endpoint": "mock:", "mock": {"fallback": "bridge"}, **lat},
        "qe": {"kind": "qe", "endpoint": "mock:", "mock": {"kind": "oracle", "gold_function": "reverse_words"}, **lat},
        "embedder": {
            "kind": "embedding",
            "endpoint": "mock:",
            "mock": {"kind": "char_counts", "bias": True},
            **lat,
        },
    }


def config_dict(**sections) -> dict:
    d = {
        "lang_pair": ["en", "ko"],
        "seed": 7,
        "timing": "charged",
        "backends": mock_backends(),
    }
    for key, value in sections.items():
        if isinstance(value, dict) and isinstance(d.get(key), dict):
            d[key] = {**d[key], **value}
        else:
            d[key] = value
    return d


def make_config(**sections):
    return config_from_dict(config_dict(**sections))


def make_gateway(cfg, cache_path=None, **kw) -> Gateway:
    return Gateway(cfg.backends, cache=ResponseCache(cache_path), **kw)


def oracle_pool(n: int, seed: int = 1, embed=None) -> list[PoolEntry]:
    """Pool entries whose representative is the gold, with descending QE."""
    pairs = synthetic_corpus(n, seed=seed, name="dev")
    entries = []
    for i, p in enumerate(pairs):
        vec = embed([p.source])[0] if embed else None
        entries.append(PoolEntry(p, p.gold, QeScore(1.0 - i / (10 * n), "qe"), vec))
    return entries


# --- selection fixture -------------------------------------------------------------
#
# (id, S, L, T, pool QE). Expected picks below were worked out by hand with
# filter width 3; the S shortlist is {p5, p1, p2}.
SELECTION_FIXTURE = (
    ("p1", 0.90, 13, 6, 0.9),
    ("p2", 0.80, 4, 5, 0.8),
    ("p3", 0.70, 4, 2, 0.7),
    ("p4", 0.60, 8, 2, 0.6),
    ("p5", 0.95, 12, 7, 0.5),
    ("p6", 0.50, 2, 9, 0.4),
)

SELECTION_EXPECTED = {
    "Filter(T-L)": ("p2", "p1", "p5"),
    "Filter(L-T)": ("p2", "p5", "p1"),
    "Sort(L-S)": ("p6", "p2", "p3"),
    "Sort(T-S)": ("p3", "p4", "p2"),
    "Sort(L-T-S)": ("p6", "p3", "p2"),
    "Sort(T-L-S)": ("p3", "p4", "p2"),
    "Sort(S-T)": ("p5", "p1", "p2"),
    "Tops": ("p5", "p6", "p3"),
}


def selection_fixture():
    from bridgmt.selection import SimilarityVector

    return [
        (PoolEntry(SentencePair(pid, f"sentence {pid}"), f"t {pid}", QeScore(q, "qe")), SimilarityVector(s, l, t))
        for pid, s, l, t, q in SELECTION_FIXTURE
    ]
