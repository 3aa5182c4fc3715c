"""Shared domain types and their JSON serialization.

Every type here is an immutable value object. ``to_dict``/``from_dict`` are
exact inverses; records are written as canonical JSON (sorted keys, compact
separators) so that identical runs produce identical bytes.
"""

from __future__ import annotations

import json
import math
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Literal, Sequence

from .errors import ParseError, ValidationError

STAGES = (
    "zero_shot",
    "pre_filter",
    "selection",
    "bridging",
    "gradual_mt",
    "aggregation",
    "post_filter",
)


def nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class SentencePair:
    id: str
    source: str
    gold: str | None = None
    lang_pair: tuple[str, str] = ("en", "xx")

    def __post_init__(self) -> None:
        if not self.source.strip():
            raise ValidationError(f"sentence {self.id!r} has an empty source")
        object.__setattr__(self, "lang_pair", tuple(self.lang_pair))

    def to_dict(self) -> dict:
        return {"id": self.id, "source": self.source, "gold": self.gold, "lang_pair": list(self.lang_pair)}

    @classmethod
    def from_dict(cls, d: dict) -> SentencePair:
        return cls(d["id"], d["source"], d.get("gold"), tuple(d.get("lang_pair", ("en", "xx"))))


@dataclass(frozen=True)
class QeScore:
    """Quality estimate normalized to [0, 1], higher is better.

    ``raw`` keeps the provider's native value when the scale was not already
    unit (DA 0-100, MQM 0-25). MQM scores are inverted into ``value`` only for
    display; ``scale == "mqm25"`` marks them as unusable for filtering.
    """

    value: float
    scorer_id: str
    reference_based: bool = False
    raw: float | None = None
    scale: str = "unit"

    def __post_init__(self) -> None:
        if not (isinstance(self.value, (int, float)) and 0.0 <= self.value <= 1.0) or math.isnan(self.value):
            raise ValidationError(f"QE value {self.value!r} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "scorer_id": self.scorer_id,
            "reference_based": self.reference_based,
            "raw": self.raw,
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> QeScore:
        return cls(
            d["value"],
            d["scorer_id"],
            d.get("reference_based", False),
            d.get("raw"),
            d.get("scale", "unit"),
        )


@dataclass(frozen=True)
class PoolEntry:
    pair: SentencePair
    representative_translation: str
    qe: QeScore
    embedding: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.embedding is not None:
            object.__setattr__(self, "embedding", tuple(float(x) for x in self.embedding))

    @property
    def source(self) -> str:
        return self.pair.source

    def to_dict(self) -> dict:
        d = {
            "pair": self.pair.to_dict(),
            "representative_translation": self.representative_translation,
            "qe": self.qe.to_dict(),
        }
        if self.embedding is not None:
            d["embedding"] = list(self.embedding)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> PoolEntry:
        emb = d.get("embedding")
        return cls(
            SentencePair.from_dict(d["pair"]),
            d["representative_translation"],
            QeScore.from_dict(d["qe"]),
            tuple(emb) if emb is not None else None,
        )


@dataclass(frozen=True)
class Bridge:
    start: str
    end: str
    sentences: tuple[str, ...]
    origin: Literal["full", "sampled"] = "full"

    def __post_init__(self) -> None:
        object.__setattr__(self, "sentences", tuple(self.sentences))
        s = self.sentences
        if not s:
            raise ValidationError("bridge has no sentences")
        if s[0] != self.start or s[-1] != self.end:
            raise ValidationError("bridge endpoints do not match start/end")
        if len(s) < 2 and self.start != self.end:
            raise ValidationError("bridge between distinct sentences needs at least 2 sentences")
        if self.origin not in ("full", "sampled"):
            raise ValidationError(f"unknown bridge origin {self.origin!r}")

    def __len__(self) -> int:
        return len(self.sentences)

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end, "sentences": list(self.sentences), "origin": self.origin}

    @classmethod
    def from_dict(cls, d: dict) -> Bridge:
        return cls(d["start"], d["end"], tuple(d["sentences"]), d.get("origin", "full"))


@dataclass(frozen=True)
class GradualTrace:
    bridge: Bridge
    steps: tuple[tuple[str, str], ...]
    final: str
    call_count: int

    def __post_init__(self) -> None:
        steps = tuple((s, t) for s, t in self.steps)
        object.__setattr__(self, "steps", steps)
        if len(steps) != len(self.bridge.sentences):
            raise ValidationError("trace length differs from bridge length")
        if any(src != x for (src, _), x in zip(steps, self.bridge.sentences)):
            raise ValidationError("trace sources do not follow the bridge")
        if self.final != steps[-1][1]:
            raise ValidationError("trace final is not the last step's translation")
        if self.call_count != len(steps):
            raise ValidationError("call_count must equal the number of steps")

    def to_dict(self) -> dict:
        return {
            "bridge": self.bridge.to_dict(),
            "steps": [[s, t] for s, t in self.steps],
            "final": self.final,
            "call_count": self.call_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> GradualTrace:
        return cls(Bridge.from_dict(d["bridge"]), tuple(tuple(p) for p in d["steps"]), d["final"], d["call_count"])


def _scored_to_dict(pair: tuple[str, QeScore | None] | None) -> dict | None:
    if pair is None:
        return None
    text, qe = pair
    return {"text": text, "qe": qe.to_dict() if qe is not None else None}


def _scored_from_dict(d: dict | None) -> tuple[str, QeScore | None] | None:
    if d is None:
        return None
    return d["text"], QeScore.from_dict(d["qe"]) if d.get("qe") is not None else None


@dataclass(frozen=True)
class DecisionRecord:
    """Everything decided for one end sentence.

    ``error`` is set when the sentence failed under fail-soft execution; in
    that case ``zero_shot`` may be missing and the record is excluded from
    score means.
    """

    end_id: str
    zero_shot: tuple[str, QeScore] | None
    bridges: tuple[GradualTrace, ...] = ()
    aggregate: tuple[str, QeScore | None] | None = None
    chosen: Literal["zero_shot", "bridg"] = "zero_shot"
    prefiltered_out: bool = False
    timings: dict[str, float] = field(default_factory=dict)
    starts: tuple[str, ...] = ()
    error: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "bridges", tuple(self.bridges))
        object.__setattr__(self, "starts", tuple(self.starts))
        if self.chosen not in ("zero_shot", "bridg"):
            raise ValidationError(f"unknown choice {self.chosen!r}")
        if self.prefiltered_out and (self.bridges or self.chosen != "zero_shot"):
            raise ValidationError("a prefiltered record cannot carry bridges or choose bridg")
        if self.chosen == "bridg" and self.aggregate is None:
            raise ValidationError("chosen == bridg requires an aggregate")
        if self.zero_shot is None and self.error is None:
            raise ValidationError("zero_shot is required unless the record failed")
        if any(v < 0 for v in self.timings.values()):
            raise ValidationError("negative stage timing")

    @property
    def bridged(self) -> bool:
        return bool(self.bridges)

    @property
    def output(self) -> str | None:
        if self.chosen == "bridg":
            return self.aggregate[0]
        return self.zero_shot[0] if self.zero_shot else None

    @property
    def output_qe(self) -> QeScore | None:
        if self.chosen == "bridg":
            return self.aggregate[1]
        return self.zero_shot[1] if self.zero_shot else None

    def to_dict(self) -> dict:
        return {
            "end_id": self.end_id,
            "zero_shot": _scored_to_dict(self.zero_shot),
            "bridges": [t.to_dict() for t in self.bridges],
            "aggregate": _scored_to_dict(self.aggregate),
            "chosen": self.chosen,
            "prefiltered_out": self.prefiltered_out,
            "timings": dict(self.timings),
            "starts": list(self.starts),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> DecisionRecord:
        return cls(
            end_id=d["end_id"],
            zero_shot=_scored_from_dict(d.get("zero_shot")),
            bridges=tuple(GradualTrace.from_dict(t) for t in d.get("bridges", ())),
            aggregate=_scored_from_dict(d.get("aggregate")),
            chosen=d.get("chosen", "zero_shot"),
            prefiltered_out=d.get("prefiltered_out", False),
            timings=dict(d.get("timings", {})),
            starts=tuple(d.get("starts", ())),
            error=d.get("error"),
        )


def _mean(values: Sequence[float]) -> float | None:
    return math.fsum(values) / len(values) if values else None


def summarize(records: Sequence[DecisionRecord], **extra: Any) -> dict:
    """Corpus-level counts and means recomputed from the records.

    Means use ``math.fsum`` so they do not depend on record order.
    """
    ok = [r for r in records if r.error is None]
    zero_qes = [r.zero_shot[1].value for r in ok]
    chosen_qes = [r.output_qe.value for r in ok if r.output_qe is not None]
    totals: dict[str, list[float]] = {}
    for r in records:
        for stage, secs in r.timings.items():
            totals.setdefault(stage, []).append(secs)
    summary = {
        "n_sentences": len(records),
        "n_failed": len(records) - len(ok),
        "n_prefiltered": sum(r.prefiltered_out for r in records),
        "n_bridged": sum(r.bridged for r in records),
        "n_selected": sum(r.chosen == "bridg" for r in records),
        "n_scored_outputs": len(chosen_qes),
        "mean_zero_shot_qe": _mean(zero_qes),
        "mean_output_qe": _mean(chosen_qes),
        "timing_totals": {k: math.fsum(v) for k, v in sorted(totals.items())},
    }
    summary.update(extra)
    return summary


@dataclass(frozen=True)
class RunReport:
    per_sentence: tuple[DecisionRecord, ...]
    summary: dict
    config_fingerprint: str
    seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_sentence", tuple(self.per_sentence))

    @classmethod
    def build(cls, records: Iterable[DecisionRecord], config_fingerprint: str, seed: int, **extra: Any) -> RunReport:
        records = tuple(records)
        return cls(records, summarize(records, **extra), config_fingerprint, seed)

    def summary_document(self) -> dict:
        return {"config_fingerprint": self.config_fingerprint, "seed": self.seed, "summary": self.summary}

    def to_dict(self) -> dict:
        d = self.summary_document()
        d["per_sentence"] = [r.to_dict() for r in self.per_sentence]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> RunReport:
        return cls(
            tuple(DecisionRecord.from_dict(r) for r in d["per_sentence"]),
            d["summary"],
            d["config_fingerprint"],
            d["seed"],
        )


# --- JSONL helpers -----------------------------------------------------------


def iter_jsonl(path: str | Path, *, tolerate_torn_tail: bool = False) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, object)`` for each non-blank line.

    With ``tolerate_torn_tail`` a final line lacking its newline that fails to
    parse is skipped; it is what an interrupted append leaves behind.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            yield i, json.loads(line)
        except json.JSONDecodeError as exc:
            if tolerate_torn_tail and i == len(lines):
                return
            raise ParseError(f"malformed JSON ({exc.msg})", line=i) from None


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(canonical_json(row) + "\n")


def read_corpus(
    path: str | Path,
    *,
    name: str | None = None,
    gold_path: str | Path | None = None,
    lang_pair: tuple[str, str] = ("en", "xx"),
) -> list[SentencePair]:
    """Read a line-aligned plain-text corpus (one sentence per line).

    Ids are ``<name>:<line>`` with 1-based line numbers; blank lines are
    skipped but still consume a line number so ids stay aligned with the file.
    """
    path = Path(path)
    name = name or path.stem
    sources = path.read_text(encoding="utf-8").split("\n")
    golds: list[str] | None = None
    if gold_path is not None:
        golds = Path(gold_path).read_text(encoding="utf-8").split("\n")
    pairs = []
    for i, line in enumerate(sources, start=1):
        src = nfc(line.strip())
        if not src:
            continue
        gold = None
        if golds is not None:
            if i > len(golds) or not golds[i - 1].strip():
                raise ParseError(f"gold file has no translation for {name}:{i}", line=i)
            gold = nfc(golds[i - 1].strip())
        pairs.append(SentencePair(f"{name}:{i}", src, gold, lang_pair))
    return pairs
