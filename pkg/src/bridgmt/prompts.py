"""Prompt templates for translation and sentence bridging.

Translation prompts come in two styles: ``system`` puts the instruction in a
system message and the bare sentence in the user turn; ``user`` puts both in
the user turn as ``<instruction>\\nSentence: <sentence>``. Few-shot examples
are rendered as alternating user/assistant pairs in the same style.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import Literal, Sequence

from .core import Bridge
from .errors import UsageError
from .gateway import BRIDGING_SAMPLING, ChatRequest, SamplingParams

LANGUAGE_NAMES = {
    "en": "English",
    "de": "German",
    "zh": "Chinese",
    "ko": "Korean",
    "hi": "Hindi",
    "sw": "Swahili",
    "bn": "Bengali",
    "mr": "Marathi",
    "fr": "French",
    "es": "Spanish",
    "ja": "Japanese",
}


def language_name(code: str) -> str:
    return LANGUAGE_NAMES.get(code, code)


def _asset(name: str) -> str:
    return resources.files("bridgmt.assets").joinpath(name).read_text(encoding="utf-8")


@dataclass(frozen=True)
class TranslationPromptAssets:
    source_language: str = "English"
    target_language: str = "Korean"
    style: Literal["system", "user"] = "system"
    template: str = ""

    def __post_init__(self) -> None:
        if self.style not in ("system", "user"):
            raise UsageError(f"unknown prompt style {self.style!r}")
        if not self.template:
            object.__setattr__(self, "template", _asset("translation_instruction.txt").strip())

    @classmethod
    def for_pair(cls, lang_pair: Sequence[str], style: str = "system", target_language: str | None = None):
        return cls(language_name(lang_pair[0]), target_language or language_name(lang_pair[1]), style)

    @property
    def instruction(self) -> str:
        return self.template.format(source_language=self.source_language, target_language=self.target_language)

    def user_turn(self, sentence: str) -> str:
        if self.style == "user":
            return f"{self.instruction}\nSentence: {sentence}"
        return sentence

    def messages(self, sentence: str, fewshot: Sequence[tuple[str, str]] = ()) -> list[tuple[str, str]]:
        msgs: list[tuple[str, str]] = []
        if self.style == "system":
            msgs.append(("system", self.instruction))
        for src, tgt in fewshot:
            msgs.append(("user", self.user_turn(src)))
            msgs.append(("assistant", tgt))
        msgs.append(("user", self.user_turn(sentence)))
        return msgs

    def request(
        self,
        backend_id: str,
        sentence: str,
        fewshot: Sequence[tuple[str, str]] = (),
        *,
        sampling: SamplingParams | None = None,
        seed: int | None = None,
    ) -> ChatRequest:
        return ChatRequest(backend_id, tuple(self.messages(sentence, fewshot)), sampling, seed)


@dataclass(frozen=True)
class BridgingPromptAssets:
    instruction: str
    fewshot_examples: tuple[Bridge, ...]

    def __post_init__(self) -> None:
        if len(self.fewshot_examples) != 3:
            raise UsageError("bridging prompt expects exactly three exemplars")

    @classmethod
    def default(cls) -> BridgingPromptAssets:
        examples = tuple(parse_exemplar(_asset(f"bridging_example_{i}.txt")) for i in (1, 2, 3))
        return cls(_asset("bridging_instruction.txt").strip(), examples)


_NUMBERED = re.compile(r"^\s*(\d+)\s*[.)]\s*(.*?)\s*$")


def parse_exemplar(text: str) -> Bridge:
    """Read a ``Sentence1:/Sentence2:/Bridge:`` block with a numbered list."""
    start = end = None
    items: list[str] = []
    for line in text.splitlines():
        if line.startswith("Sentence1:"):
            start = line.split(":", 1)[1].strip()
        elif line.startswith("Sentence2:"):
            end = line.split(":", 1)[1].strip()
        else:
            m = _NUMBERED.match(line)
            if m:
                items.append(m.group(2))
    if start is None or end is None:
        raise UsageError("exemplar lacks Sentence1/Sentence2 lines")
    return Bridge(start, end, tuple(items))


def render_block(instruction: str, start: str, end: str, bridge: Bridge | None = None) -> str:
    lines = [instruction, f"Sentence1: {start}", f"Sentence2: {end}"]
    if bridge is not None:
        lines.append("Bridge:")
        lines.extend(f"{i}. {s}" for i, s in enumerate(bridge.sentences, start=1))
    return "\n".join(lines)


def build_bridge_prompt(
    start: str,
    end: str,
    assets: BridgingPromptAssets,
    backend_id: str = "bridger",
    *,
    sampling: SamplingParams = BRIDGING_SAMPLING,
    seed: int | None = None,
) -> ChatRequest:
    """Single user message: the three exemplar blocks, then the query block."""
    if not start.strip() or not end.strip():
        raise UsageError("bridging needs non-empty start and end sentences")
    blocks = [render_block(assets.instruction, b.start, b.end, b) for b in assets.fewshot_examples]
    blocks.append(render_block(assets.instruction, start, end))
    return ChatRequest(backend_id, (("user", "\n\n".join(blocks)),), sampling, seed)
