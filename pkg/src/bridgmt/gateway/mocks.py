"""Scripted in-process providers speaking the same wire format as real ones.

Each ``make_*`` factory turns a JSON-able spec into a handler
``payload -> (status, body)``. The handlers back both in-process mock
profiles (``endpoint = "mock:"``) and the ``mock-server`` HTTP process, so
integration tests over real sockets exercise exactly the same behavior.

Chat spec::

    {"rules": [{"pattern": "...", "match": "exact|regex|contains", "response": "..."}],
     "fallback": "uppercase" | "echo" | "echo_last_assistant" | "fewshot_count"
                 | "bridge" | "glossary" | "pipeline" | null,
     "glossary": {"known_percent": 60, "context_percent": 30}}

Rules are matched against the query text (the last user message with any
``Sentence:`` wrapper removed). Without a matching rule or fallback the
handler answers 404.

Embedding spec: ``{"kind": "char_counts", "alphabet": "ab", "bias": false}`` or
``{"kind": "constant", "vector": [...]}``.

QE spec: ``{"kind": "oracle", "gold": {src: gold}, "gold_function": "reverse_words",
"scores": [{"translation": ..., "source": ..., "score": ...}], "scale": "unit"}``.
"""

from __future__ import annotations

import re
import zlib
from collections import Counter
from typing import Any, Callable

Handler = Callable[[dict], "tuple[int, Any]"]

BRIDGE_MARKER = "gradually change the first sentence"
_SENT1 = re.compile(r"^Sentence1:\s*(.*)$", re.M)
_SENT2 = re.compile(r"^Sentence2:\s*(.*)$", re.M)


def _crc(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def query_text(content: str) -> str:
    """Strip a ``...\\nSentence: <x>`` instruction wrapper if present."""
    marker = "\nSentence: "
    if marker in content:
        return content.rsplit(marker, 1)[1]
    return content


def _messages(payload: dict) -> list[tuple[str, str]]:
    return [(m["role"], m["content"]) for m in payload.get("messages", [])]


def _fewshot(msgs: list[tuple[str, str]]) -> list[tuple[str, str]]:
    """Prior (user, assistant) pairs before the final user turn."""
    pairs = []
    for (r1, c1), (r2, c2) in zip(msgs, msgs[1:]):
        if r1 == "user" and r2 == "assistant":
            pairs.append((query_text(c1), c2))
    return pairs


def _chat_body(text: str) -> dict:
    return {"choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}]}


# --- chat fallbacks -------------------------------------------------------------


def reverse_words(text: str) -> str:
    """Gold "translation" used by the glossary mock: every word reversed."""
    return " ".join(w[::-1] for w in text.split())


def synthetic_bridge(start: str, end: str) -> list[str]:
    """Deterministic interpolation that swaps start words for end words."""
    s, e = start.split(), end.split()
    interior = 1 + (len(s) + len(e)) % 4
    out = [start]
    for j in range(1, interior + 1):
        k = round(j * len(e) / (interior + 1))
        p = round(j * len(s) / (interior + 1))
        words = e[:k] + s[p:]
        out.append(" ".join(words) if words else end)
    out.append(end)
    return out


def render_numbered(lines: list[str]) -> str:
    return "\n".join(f"{i}. {line}" for i, line in enumerate(lines, start=1))


def _bridge_reply(content: str) -> str | None:
    if BRIDGE_MARKER not in content:
        return None
    s1, s2 = _SENT1.findall(content), _SENT2.findall(content)
    if not s1 or not s2:
        return None
    return render_numbered(synthetic_bridge(s1[-1].strip(), s2[-1].strip()))


class GlossaryTranslator:
    """Word-by-word translator whose vocabulary grows with in-context examples.

    A word is translated (reversed) when it is globally known, when a few-shot
    pair demonstrates its correct translation, or by a context-dependent coin
    flip keyed on the few-shot size and seed; otherwise it comes out as tildes.
    """

    def __init__(self, known_percent: int = 60, context_percent: int = 30) -> None:
        self.known_percent = known_percent
        self.context_percent = context_percent

    def __call__(self, sentence: str, fewshot: list[tuple[str, str]], seed: int | None) -> str:
        learned = set()
        for src, tgt in fewshot:
            tgt_words = set(tgt.split())
            learned.update(w for w in src.split() if w[::-1] in tgt_words)
        out = []
        for w in sentence.split():
            known = (
                _crc(w.lower()) % 100 < self.known_percent
                or w in learned
                or _crc(f"{w}|{len(fewshot)}|{seed}") % 100 < self.context_percent
            )
            out.append(w[::-1] if known else "~" * len(w))
        return " ".join(out)


def make_chat_handler(spec: dict) -> Handler:
    rules = []
    for rule in spec.get("rules", []):
        kind = rule.get("match", "exact")
        pat = rule["pattern"]
        if kind == "regex":
            rx = re.compile(pat)
            test = lambda q, rx=rx: rx.search(q) is not None  # noqa: E731
        elif kind == "contains":
            test = lambda q, pat=pat: pat in q  # noqa: E731
        elif kind == "exact":
            test = lambda q, pat=pat: q == pat  # noqa: E731
        else:
            raise ValueError(f"unknown rule match kind {kind!r}")
        rules.append((test, rule["response"]))

    fallback = spec.get("fallback")
    glossary = GlossaryTranslator(**spec.get("glossary", {}))

    def handle(payload: dict) -> tuple[int, Any]:
        msgs = _messages(payload)
        users = [c for r, c in msgs if r == "user"]
        if not users:
            return 400, {"error": "no user message"}
        content = users[-1]
        query = query_text(content)
        for test, response in rules:
            if test(query):
                return 200, _chat_body(response)
        fewshot = _fewshot(msgs)
        seed = payload.get("seed")
        reply = None
        if callable(fallback):
            reply = fallback(query, fewshot)
        elif fallback == "uppercase":
            reply = query.upper()
        elif fallback == "echo":
            reply = query
        elif fallback == "echo_last_assistant":
            assistants = [c for r, c in msgs if r == "assistant"]
            reply = assistants[-1] if assistants else query
        elif fallback == "fewshot_count":
            reply = f"{query}#{len(fewshot)}"
        elif fallback == "bridge":
            reply = _bridge_reply(content)
        elif fallback == "glossary":
            reply = glossary(query, fewshot, seed)
        elif fallback == "pipeline":
            reply = _bridge_reply(content)
            if reply is None:
                reply = glossary(query, fewshot, seed)
        if reply is None:
            return 404, {"error": "no scripted response", "query": query[:200]}
        return 200, _chat_body(reply)

    return handle


# --- embedding ----------------------------------------------------------------


def make_embedding_handler(spec: dict) -> Handler:
    kind = spec.get("kind", "char_counts")
    if kind == "char_counts":
        alphabet = spec.get("alphabet", "abcdefghijklmnopqrstuvwxyz")
        bias = bool(spec.get("bias", False))
        lower = bool(spec.get("lowercase", True))

        def vec(s: str) -> list[float]:
            counts = Counter(s.lower() if lower else s)
            v = [float(counts.get(ch, 0)) for ch in alphabet]
            return v + [1.0] if bias else v

    elif kind == "constant":
        constant = [float(x) for x in spec.get("vector", [1.0, 0.0])]

        def vec(s: str) -> list[float]:
            return list(constant)

    else:
        raise ValueError(f"unknown mock embedder {kind!r}")

    def handle(payload: dict) -> tuple[int, Any]:
        inputs = payload.get("input")
        if isinstance(inputs, str):
            inputs = [inputs]
        if not isinstance(inputs, list) or not inputs:
            return 400, {"error": "input must be a non-empty list"}
        return 200, {"data": [{"index": i, "embedding": vec(s)} for i, s in enumerate(inputs)]}

    return handle


# --- QE -----------------------------------------------------------------------


def char_f1(hyp: str, ref: str) -> float:
    """F1 over the multiset of non-space characters; 1.0 for identical strings."""
    h = Counter(hyp.replace(" ", ""))
    r = Counter(ref.replace(" ", ""))
    total = sum(h.values()) + sum(r.values())
    if total == 0:
        return 1.0
    return 2 * sum((h & r).values()) / total


GOLD_FUNCTIONS: dict[str, Callable[[str], str]] = {"reverse_words": reverse_words}


def make_qe_handler(spec: dict) -> Handler:
    gold_map: dict[str, str] = dict(spec.get("gold", {}))
    gold_fn = GOLD_FUNCTIONS.get(spec["gold_function"]) if spec.get("gold_function") else None
    scripted = list(spec.get("scores", []))
    scale = spec.get("scale", "unit")
    factor = {"unit": 1.0, "da100": 100.0}.get(scale)
    if factor is None:
        raise ValueError(f"oracle QE mock cannot emit scale {scale!r}")

    def score(item: dict) -> float | None:
        src, mt = item.get("src", ""), item.get("mt", "")
        for s in scripted:
            if s.get("translation", mt) == mt and s.get("source", src) == src:
                return float(s["score"])
        ref = item.get("ref")
        if ref is None:
            ref = gold_map.get(src)
        if ref is None and gold_fn is not None:
            ref = gold_fn(src)
        if ref is None:
            return None
        return char_f1(mt, ref) * factor

    def handle(payload: dict) -> tuple[int, Any]:
        data = payload.get("data")
        if not isinstance(data, list) or not data:
            return 400, {"error": "data must be a non-empty list"}
        scores = []
        for item in data:
            v = score(item)
            if v is None:
                return 404, {"error": "no gold or scripted score", "src": item.get("src", "")[:200]}
            scores.append(v)
        return 200, {"scores": scores, "scale": scale}

    return handle


def make_handler(kind: str, spec: dict) -> Handler:
    if kind == "chat":
        return make_chat_handler(spec)
    if kind == "embedding":
        return make_embedding_handler(spec)
    if kind == "qe":
        return make_qe_handler(spec)
    raise ValueError(f"no mock for provider kind {kind!r}")
