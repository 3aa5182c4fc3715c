"""Pipeline configuration: TOML in, frozen dataclasses out, canonical dict back.

``config_to_dict(config_from_dict(d))`` is the canonical, fully-defaulted
form; it is what gets written to ``config.snapshot`` and what the
fingerprint hashes. Execution-only knobs (``concurrency``, ``strict``) are
left out of the fingerprint because they do not change results, which lets
an interrupted run be resumed with different parallelism.
"""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import tomli
import tomli_w

from .bridging import GradualConfig
from .core import canonical_json
from .decisions import AggregationStrategy, FilterPolicy
from .errors import ConfigError, UsageError
from .gateway import BRIDGING_SAMPLING, ProviderProfile, SamplingParams
from .pool import PoolBuildConfig
from .selection import SelectionConfig, SelectionStrategy

EXECUTION_KEYS = ("concurrency", "strict")


@dataclass(frozen=True)
class BaselineConfig:
    mode: Literal["zero_shot", "k_shot"] = "zero_shot"
    k: int = 0
    pool: str | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("zero_shot", "k_shot"):
            raise UsageError(f"unknown baseline mode {self.mode!r}")
        if self.k < 0:
            raise UsageError("baseline k must be >= 0")


@dataclass(frozen=True)
class DataPaths:
    pool: str | None = None
    corpus: str | None = None
    gold: str | None = None
    dev: str | None = None
    dev_gold: str | None = None
    corpus_name: str | None = None


@dataclass(frozen=True)
class PipelineConfig:
    lang_pair: tuple[str, str] = ("en", "ko")
    target_language: str | None = None
    prompt_style: Literal["system", "user"] = "system"
    qe: str = "qe"
    embedder: str = "embedder"
    tree_provider: str = "chain"
    data: DataPaths = DataPaths()
    selection: SelectionConfig = SelectionConfig()
    gradual: GradualConfig = GradualConfig()
    aggregation: AggregationStrategy = AggregationStrategy()
    filters: FilterPolicy = FilterPolicy()
    pre_percentile: float | None = None
    holdout_fraction: float = 0.1
    pool_build: PoolBuildConfig = PoolBuildConfig()
    baseline: BaselineConfig = BaselineConfig()
    backends: dict[str, ProviderProfile] = field(default_factory=dict)
    seed: int = 0
    concurrency: int = 1
    strict: bool = False
    timing: Literal["wall", "charged"] = "wall"

    def __post_init__(self) -> None:
        if self.timing not in ("wall", "charged"):
            raise ConfigError(f"timing must be 'wall' or 'charged', not {self.timing!r}")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        if self.pre_percentile is not None and not (0 < self.pre_percentile <= 100):
            raise ConfigError("pre_percentile must lie in (0, 100]")
        if not (0 <= self.holdout_fraction < 1):
            raise ConfigError("holdout_fraction must lie in [0, 1)")

    def validate_backends(self, *, pipeline: bool = True) -> None:
        """Every referenced backend id must resolve to a profile of the right kind."""
        wanted = [(self.gradual.translator, "chat"), (self.qe, "qe"), (self.embedder, "embedding")]
        if pipeline:
            wanted.append((self.gradual.bridger, "chat"))
        for bid, kind in wanted:
            prof = self.backends.get(bid)
            if prof is None:
                raise ConfigError(f"backend {bid!r} is referenced but not configured")
            if prof.kind != kind:
                raise ConfigError(f"backend {bid!r} must be a {kind} provider, not {prof.kind}")
        qe = self.backends[self.qe]
        if qe.reference_based:
            raise ConfigError(f"filtering backend {self.qe!r} must be reference-free")
        if qe.qe_scale == "mqm25":
            raise ConfigError(f"filtering backend {self.qe!r} uses an MQM scale; filtering needs higher-is-better scores")


# --- dict <-> config --------------------------------------------------------------

_PROFILE_KEYS = {
    "kind", "endpoint", "model", "auth_env", "temperature", "top_p", "max_tokens", "rate_limit",
    "timeout", "max_retries", "batch_size", "reference_based", "qe_scale", "latency", "mock",
}


def _take(d: dict, key: str, default: Any, where: str) -> Any:
    if not isinstance(d, dict):
        raise ConfigError(f"[{where}] must be a table")
    return d.get(key, default)


def _reject_unknown(d: dict, allowed: set[str], where: str) -> None:
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(extra))}")


def _profile_from_dict(bid: str, d: dict) -> ProviderProfile:
    _reject_unknown(d, _PROFILE_KEYS, f"backends.{bid}")
    kind = d.get("kind")
    if kind is None:
        raise ConfigError(f"backends.{bid}: 'kind' is required")
    base = SamplingParams()
    sampling = SamplingParams(
        float(d.get("temperature", base.temperature)),
        float(d.get("top_p", base.top_p)),
        int(d.get("max_tokens", base.max_tokens)),
    )
    return ProviderProfile(
        backend_id=bid,
        kind=kind,
        endpoint=d.get("endpoint", "mock:"),
        model=d.get("model"),
        auth_env=d.get("auth_env"),
        default_sampling=sampling,
        rate_limit=int(d.get("rate_limit", 4)),
        timeout=float(d.get("timeout", 60.0)),
        max_retries=int(d.get("max_retries", 3)),
        batch_size=int(d.get("batch_size", 32)),
        reference_based=bool(d.get("reference_based", False)),
        qe_scale=d.get("qe_scale", "unit"),
        latency=None if d.get("latency") is None else float(d["latency"]),
        mock=copy.deepcopy(d.get("mock")),
    )


def _profile_to_dict(p: ProviderProfile) -> dict:
    d = {
        "kind": p.kind,
        "endpoint": p.endpoint,
        "model": p.model,
        "auth_env": p.auth_env,
        **p.default_sampling.to_dict(),
        "rate_limit": p.rate_limit,
        "timeout": p.timeout,
        "max_retries": p.max_retries,
        "batch_size": p.batch_size,
        "reference_based": p.reference_based,
        "qe_scale": p.qe_scale,
        "latency": p.latency,
        "mock": copy.deepcopy(p.mock),
    }
    return {k: v for k, v in d.items() if v is not None}


_TOP_KEYS = {
    "lang_pair", "target_language", "prompt_style", "qe", "embedder", "tree_provider", "data", "selection",
    "gradual", "aggregation", "filters", "pool_build", "baseline", "backends", "seed", "concurrency",
    "strict", "timing", "sweep",
}


def config_from_dict(d: dict) -> PipelineConfig:
    try:
        return _config_from_dict(d)
    except ConfigError:
        raise
    except UsageError as exc:
        raise ConfigError(str(exc)) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration value: {exc}") from exc


def _config_from_dict(d: dict) -> PipelineConfig:
    _reject_unknown(d, _TOP_KEYS, "top level")
    data = d.get("data", {})
    _reject_unknown(data, {"pool", "corpus", "gold", "dev", "dev_gold", "corpus_name"}, "data")
    sel = d.get("selection", {})
    _reject_unknown(sel, {"strategy", "k", "filter_width"}, "selection")
    grad = d.get("gradual", {})
    _reject_unknown(grad, {"translator", "bridger", "sampling_mode", "max_bridge_len", "bridge_temperature", "bridge_top_p", "bridge_max_tokens"}, "gradual")
    agg = d.get("aggregation", {})
    _reject_unknown(agg, {"kind"}, "aggregation")
    flt = d.get("filters", {})
    _reject_unknown(flt, {"pre_threshold", "pre_percentile", "holdout_fraction", "post"}, "filters")
    pb = d.get("pool_build", {})
    _reject_unknown(pb, {"samples_per_sentence", "pool_size", "concurrency"}, "pool_build")
    bl = d.get("baseline", {})
    _reject_unknown(bl, {"mode", "k", "pool"}, "baseline")

    strategy = SelectionStrategy.parse(str(sel.get("strategy", "Sort(S-T)")), int(sel.get("filter_width", 10)))
    backends_raw = d.get("backends", {})
    if not isinstance(backends_raw, dict):
        raise ConfigError("[backends] must be a table of tables")
    pre = flt.get("pre_threshold")
    return PipelineConfig(
        lang_pair=tuple(d.get("lang_pair", ("en", "ko"))),
        target_language=d.get("target_language"),
        prompt_style=d.get("prompt_style", "system"),
        qe=d.get("qe", "qe"),
        embedder=d.get("embedder", "embedder"),
        tree_provider=d.get("tree_provider", "chain"),
        data=DataPaths(**{k: data.get(k) for k in ("pool", "corpus", "gold", "dev", "dev_gold", "corpus_name")}),
        selection=SelectionConfig(strategy, int(sel.get("k", 3))),
        gradual=GradualConfig(
            translator=grad.get("translator", "translator"),
            bridger=grad.get("bridger", "bridger"),
            sampling_mode=grad.get("sampling_mode", "full"),
            max_bridge_len=int(grad.get("max_bridge_len", 16)),
            bridge_sampling=SamplingParams(
                float(grad.get("bridge_temperature", BRIDGING_SAMPLING.temperature)),
                float(grad.get("bridge_top_p", BRIDGING_SAMPLING.top_p)),
                int(grad.get("bridge_max_tokens", BRIDGING_SAMPLING.max_tokens)),
            ),
        ),
        aggregation=AggregationStrategy(agg.get("kind", "prompting")),
        filters=FilterPolicy(None if pre is None else float(pre), bool(flt.get("post", True))),
        pre_percentile=None if flt.get("pre_percentile") is None else float(flt["pre_percentile"]),
        holdout_fraction=float(flt.get("holdout_fraction", 0.1)),
        pool_build=PoolBuildConfig(
            translator=grad.get("translator", "translator"),
            qe=d.get("qe", "qe"),
            embedder=d.get("embedder", "embedder"),
            samples_per_sentence=int(pb.get("samples_per_sentence", 5)),
            pool_size=int(pb.get("pool_size", 100)),
            concurrency=int(pb.get("concurrency", d.get("concurrency", 1))),
        ),
        baseline=BaselineConfig(bl.get("mode", "zero_shot"), int(bl.get("k", 0)), bl.get("pool")),
        backends={bid: _profile_from_dict(bid, p) for bid, p in backends_raw.items()},
        seed=int(d.get("seed", 0)),
        concurrency=int(d.get("concurrency", 1)),
        strict=bool(d.get("strict", False)),
        timing=d.get("timing", "wall"),
    )


def config_to_dict(cfg: PipelineConfig) -> dict:
    g = cfg.gradual
    d = {
        "lang_pair": list(cfg.lang_pair),
        "target_language": cfg.target_language,
        "prompt_style": cfg.prompt_style,
        "qe": cfg.qe,
        "embedder": cfg.embedder,
        "tree_provider": cfg.tree_provider,
        "data": {k: v for k, v in vars(cfg.data).items() if v is not None},
        "selection": {
            "strategy": cfg.selection.strategy.label,
            "k": cfg.selection.k,
            "filter_width": cfg.selection.strategy.filter_width,
        },
        "gradual": {
            "translator": g.translator,
            "bridger": g.bridger,
            "sampling_mode": g.sampling_mode,
            "max_bridge_len": g.max_bridge_len,
            "bridge_temperature": g.bridge_sampling.temperature,
            "bridge_top_p": g.bridge_sampling.top_p,
            "bridge_max_tokens": g.bridge_sampling.max_tokens,
        },
        "aggregation": {"kind": cfg.aggregation.kind},
        "filters": {
            "pre_threshold": cfg.filters.pre,
            "pre_percentile": cfg.pre_percentile,
            "holdout_fraction": cfg.holdout_fraction,
            "post": cfg.filters.post,
        },
        "pool_build": {
            "samples_per_sentence": cfg.pool_build.samples_per_sentence,
            "pool_size": cfg.pool_build.pool_size,
            "concurrency": cfg.pool_build.concurrency,
        },
        "baseline": {"mode": cfg.baseline.mode, "k": cfg.baseline.k, "pool": cfg.baseline.pool},
        "backends": {bid: _profile_to_dict(p) for bid, p in sorted(cfg.backends.items())},
        "seed": cfg.seed,
        "concurrency": cfg.concurrency,
        "strict": cfg.strict,
        "timing": cfg.timing,
    }
    return _drop_none(d)


def _drop_none(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _drop_none(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, list):
        return [_drop_none(v) for v in obj]
    return obj


def fingerprint_config(cfg: PipelineConfig) -> str:
    d = config_to_dict(cfg)
    for key in EXECUTION_KEYS:
        d.pop(key, None)
    d.get("pool_build", {}).pop("concurrency", None)
    return hashlib.sha256(canonical_json(d).encode("utf-8")).hexdigest()


# --- files and overrides -----------------------------------------------------------


def parse_override(text: str) -> tuple[list[str], Any]:
    """``a.b.c=value`` where value is a TOML literal, or a bare string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = tomli.loads(f"v = {raw.strip()}")["v"]
    except tomli.TOMLDecodeError:
        value = raw.strip()
    return path, value


def apply_overrides(d: dict, overrides: list[str]) -> dict:
    d = copy.deepcopy(d)
    for text in overrides:
        path, value = parse_override(text)
        node = d
        for part in path[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {text!r}: {part!r} is not a table")
            node = nxt
        node[path[-1]] = value
    return d


def _resolve_paths(d: dict, base: Path) -> dict:
    d = copy.deepcopy(d)
    data = d.get("data", {})
    for key in ("pool", "corpus", "gold", "dev", "dev_gold"):
        if isinstance(data.get(key), str) and not Path(data[key]).is_absolute():
            data[key] = str((base / data[key]).resolve())
    bl = d.get("baseline", {})
    if isinstance(bl.get("pool"), str) and not Path(bl["pool"]).is_absolute():
        bl["pool"] = str((base / bl["pool"]).resolve())
    return d


def load_config_dict(path: str | Path | None, overrides: list[str] = ()) -> dict:
    """Read a TOML file (relative data paths resolved against its directory)
    and apply ``--set`` overrides on top."""
    if path is None:
        d: dict = {}
        base = Path.cwd()
    else:
        path = Path(path)
        try:
            d = tomli.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} does not exist") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        base = path.parent
    return _resolve_paths(apply_overrides(d, list(overrides)), base)


def load_config(path: str | Path | None, overrides: list[str] = ()) -> PipelineConfig:
    return config_from_dict(load_config_dict(path, overrides))


def dump_config(cfg: PipelineConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))
