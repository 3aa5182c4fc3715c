"""Sentence bridging and Gradual MT."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Literal

from .core import Bridge, GradualTrace
from .errors import FormatError, ProviderCallError, UsageError
from .gateway import BRIDGING_SAMPLING, Gateway, SamplingParams
from .prompts import BridgingPromptAssets, TranslationPromptAssets, build_bridge_prompt

log = logging.getLogger(__name__)

_NUMBERED = re.compile(r"^\s*(\d+)\s*[.)]\s*(.*?)\s*$")


@dataclass(frozen=True)
class GradualConfig:
    translator: str = "translator"
    bridger: str = "bridger"
    sampling_mode: Literal["full", "sampled"] = "full"
    max_bridge_len: int = 16
    bridge_sampling: SamplingParams = field(default=BRIDGING_SAMPLING)

    def __post_init__(self) -> None:
        if self.sampling_mode not in ("full", "sampled"):
            raise UsageError(f"unknown sampling_mode {self.sampling_mode!r}")
        if self.max_bridge_len < 2:
            raise UsageError("max_bridge_len must be at least 2")


def render_bridge(bridge: Bridge) -> str:
    return "\n".join(f"{i}. {s}" for i, s in enumerate(bridge.sentences, start=1))


def thin_interior(sentences: list[str], max_len: int) -> list[str]:
    """Drop interior sentences evenly so that at most ``max_len`` remain."""
    n = len(sentences)
    if n <= max_len:
        return list(sentences)
    interior, keep = n - 2, max_len - 2
    picks = [1 + (j * interior) // keep for j in range(keep)]
    return [sentences[0]] + [sentences[i] for i in picks] + [sentences[-1]]


def parse_bridge(raw: str, start: str, end: str, max_len: int = 16) -> Bridge:
    """Extract the numbered list from model output and pin its endpoints.

    Unnumbered lines (commentary, headings) are ignored. The first and last
    items are replaced by ``start`` and ``end`` verbatim.
    """
    if not raw.strip():
        raise FormatError("empty bridging output")
    items = []
    for line in raw.splitlines():
        m = _NUMBERED.match(line)
        if m and m.group(2):
            items.append(m.group(2))
    if not items:
        raise FormatError("no numbered lines in bridging output")
    items[0] = start
    items[-1] = end
    if len(items) < 2 and start != end:
        raise FormatError("bridging output collapsed to a single sentence")
    return Bridge(start, end, tuple(thin_interior(items, max_len)))


def generate_bridge(
    start: str,
    end: str,
    gateway: Gateway,
    cfg: GradualConfig,
    assets: BridgingPromptAssets,
    seed: int | None = None,
) -> Bridge:
    """Ask the bridging model for a bridge; one retry, then ``[start, end]``.

    The retry uses ``seed + 1`` so it is not answered from the cache.
    """
    if start == end:
        return Bridge(start, end, (start,))
    for attempt in range(2):
        attempt_seed = None if seed is None else seed + attempt
        request = build_bridge_prompt(start, end, assets, cfg.bridger, sampling=cfg.bridge_sampling, seed=attempt_seed)
        raw = gateway.chat(request)
        try:
            return parse_bridge(raw, start, end, cfg.max_bridge_len)
        except FormatError as exc:
            log.info("bridge format error (attempt %d): %s", attempt + 1, exc)
    return Bridge(start, end, (start, end))


def sample_bridge(bridge: Bridge) -> Bridge:
    """Keep the first, middle (ceil(n/2), 1-based) and last sentences."""
    n = len(bridge.sentences)
    keep = sorted({1, math.ceil(n / 2), n})
    return Bridge(bridge.start, bridge.end, tuple(bridge.sentences[i - 1] for i in keep), "sampled")


class GradualMTError(ProviderCallError):
    """A chat call failed mid-bridge; ``partial`` holds the completed steps."""

    def __init__(self, message: str, partial: list[tuple[str, str]]) -> None:
        self.partial = partial
        super().__init__(message)


def gradual_mt(
    bridge: Bridge,
    gateway: Gateway,
    cfg: GradualConfig,
    prompts: TranslationPromptAssets,
    seed: int | None = None,
) -> GradualTrace:
    """Translate the bridge in order, feeding earlier pairs back as few-shot."""
    steps: list[tuple[str, str]] = []
    for x in bridge.sentences:
        request = prompts.request(cfg.translator, x, steps, seed=seed)
        try:
            y = gateway.chat(request).strip()
        except ProviderCallError as exc:
            raise GradualMTError(f"gradual MT failed at step {len(steps) + 1}: {exc}", list(steps)) from exc
        steps.append((x, y))
    return GradualTrace(bridge, tuple(steps), steps[-1][1], len(steps))
