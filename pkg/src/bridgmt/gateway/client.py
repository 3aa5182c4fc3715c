"""Uniform client over chat, embedding and QE providers.

All three kinds go through the same path: cache lookup, single-flight
de-duplication of concurrent identical requests, a per-profile in-flight
bound, retries with capped exponential backoff, then a cache write.

Time spent in provider calls is *charged* to the active :class:`CostMeter`
(if any). For mock providers the charge is the profile's declared latency;
for real providers it is the measured wall time. Cached responses replay the
charge recorded when they were fetched, so a warm-cache rerun reports the
same stage costs as the original run.
"""

from __future__ import annotations

import contextvars
import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Literal, Protocol, Sequence

import httpx

from ..core import QeScore, canonical_json
from ..errors import ProtocolError, ProviderError, TransportError, UsageError

log = logging.getLogger(__name__)

RETRYABLE_STATUS = frozenset({408, 409, 425, 429, 500, 502, 503, 504})
QE_SCALES = {"unit": 1.0, "da100": 100.0, "mqm25": 25.0}


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.3
    top_p: float = 1.0
    max_tokens: int = 512

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise UsageError("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise UsageError("top_p must lie in (0, 1]")
        if self.max_tokens < 1:
            raise UsageError("max_tokens must be positive")

    def to_dict(self) -> dict:
        return {"temperature": self.temperature, "top_p": self.top_p, "max_tokens": self.max_tokens}


# Translation profile for hosted chat models; bridging profile.
TRANSLATION_SAMPLING = SamplingParams(temperature=0.3, top_p=1.0)
BRIDGING_SAMPLING = SamplingParams(temperature=0.6, top_p=0.9, max_tokens=1024)

Role = Literal["system", "user", "assistant"]


@dataclass(frozen=True)
class ChatRequest:
    backend_id: str
    messages: tuple[tuple[Role, str], ...]
    sampling: SamplingParams | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        msgs = tuple((r, c) for r, c in self.messages)
        object.__setattr__(self, "messages", msgs)
        roles = [r for r, _ in msgs]
        if any(r not in ("system", "user", "assistant") for r in roles):
            raise UsageError(f"unknown chat role in {roles}")
        if "user" not in roles:
            raise UsageError("a chat request needs at least one user message")
        if any(a == b == "assistant" for a, b in zip(roles, roles[1:])):
            raise UsageError("two consecutive assistant messages")

    @property
    def last_user(self) -> str:
        return next(c for r, c in reversed(self.messages) if r == "user")

    def few_shot_size(self) -> int:
        return sum(r == "assistant" for r, _ in self.messages)


@dataclass(frozen=True)
class ProviderProfile:
    """Connection settings for one backend.

    ``endpoint`` is a full URL, or ``mock:`` for an in-process scripted
    provider configured by ``mock``. ``auth_env`` names an environment
    variable holding a bearer token; secrets never live in config files.
    ``latency`` (seconds) is what a call is charged when it cannot be timed
    meaningfully, i.e. for mocks.
    """

    backend_id: str
    kind: Literal["chat", "embedding", "qe"]
    endpoint: str
    model: str | None = None
    auth_env: str | None = None
    default_sampling: SamplingParams = TRANSLATION_SAMPLING
    rate_limit: int = 4
    timeout: float = 60.0
    max_retries: int = 3
    batch_size: int = 32
    reference_based: bool = False
    qe_scale: str = "unit"
    latency: float | None = None
    mock: dict | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("chat", "embedding", "qe"):
            raise UsageError(f"backend {self.backend_id!r}: unknown kind {self.kind!r}")
        if self.rate_limit < 1:
            raise UsageError(f"backend {self.backend_id!r}: rate_limit must be >= 1")
        if self.qe_scale not in QE_SCALES:
            raise UsageError(f"backend {self.backend_id!r}: unknown QE scale {self.qe_scale!r}")

    @property
    def is_mock(self) -> bool:
        return self.endpoint.startswith("mock:")

    def headers(self) -> dict[str, str]:
        if not self.auth_env:
            return {}
        token = os.environ.get(self.auth_env, "")
        if not token:
            raise UsageError(f"backend {self.backend_id!r}: environment variable {self.auth_env} is not set")
        return {"Authorization": f"Bearer {token}"}


# --- cost metering -------------------------------------------------------------

_meter: contextvars.ContextVar[CostMeter | None] = contextvars.ContextVar("bridgmt_meter", default=None)


class CostMeter:
    """Accumulates charged provider time in integer microseconds."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.micros = 0

    def charge(self, micros: int) -> None:
        with self._lock:
            self.micros += micros

    def __enter__(self) -> CostMeter:
        self._token = _meter.set(self)
        return self

    def __exit__(self, *exc: object) -> None:
        _meter.reset(self._token)


def _charge(micros: int) -> None:
    meter = _meter.get()
    if meter is not None:
        meter.charge(micros)


# --- cache ---------------------------------------------------------------------


def cache_key(backend_id: str, kind: str, payload: dict) -> str:
    blob = canonical_json({"backend": backend_id, "kind": kind, "payload": payload})
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ResponseCache:
    """Thread-safe key -> response store, optionally persisted as JSONL.

    Each line is ``{"key", "response", "latency_us"}``; the file is append-only
    and later lines win on load.
    """

    def __init__(self, path: str | Path | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._data: dict[str, tuple[Any, int]] = {}
        if self.path is not None and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    log.warning("skipping torn cache line in %s", self.path)
                    continue
                self._data[rec["key"]] = (rec["response"], int(rec.get("latency_us", 0)))

    def __len__(self) -> int:
        return len(self._data)

    def __contains__(self, key: str) -> bool:
        return key in self._data

    def get(self, key: str) -> tuple[Any, int] | None:
        with self._lock:
            return self._data.get(key)

    def put(self, key: str, response: Any, latency_us: int) -> None:
        with self._lock:
            self._data[key] = (response, latency_us)
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(canonical_json({"key": key, "response": response, "latency_us": latency_us}) + "\n")


# --- transports ----------------------------------------------------------------


class TransportFailure(Exception):
    """Network-level failure worth retrying."""


class Transport(Protocol):
    def post(self, url: str, body: dict, headers: dict[str, str], timeout: float) -> tuple[int, Any]: ...


class HttpTransport:
    def __init__(self, client: httpx.Client | None = None) -> None:
        self._client = client or httpx.Client()

    def post(self, url: str, body: dict, headers: dict[str, str], timeout: float) -> tuple[int, Any]:
        try:
            resp = self._client.post(url, json=body, headers=headers, timeout=timeout)
        except httpx.HTTPError as exc:
            raise TransportFailure(str(exc)) from exc
        try:
            payload = resp.json()
        except ValueError:
            payload = resp.text
        return resp.status_code, payload


class MockTransport:
    """Routes requests to an in-process handler returning ``(status, body)``."""

    def __init__(self, handler: Callable[[dict], tuple[int, Any]]) -> None:
        self.handler = handler

    def post(self, url: str, body: dict, headers: dict[str, str], timeout: float) -> tuple[int, Any]:
        return self.handler(body)


class CountingTransport:
    """Wraps a transport and records every request plus peak concurrency."""

    def __init__(self, inner: Transport) -> None:
        self.inner = inner
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        self._active = 0
        self.peak_concurrency = 0

    @property
    def calls(self) -> int:
        return len(self.requests)

    def post(self, url: str, body: dict, headers: dict[str, str], timeout: float) -> tuple[int, Any]:
        with self._lock:
            self.requests.append(body)
            self._active += 1
            self.peak_concurrency = max(self.peak_concurrency, self._active)
        try:
            return self.inner.post(url, body, headers, timeout)
        finally:
            with self._lock:
                self._active -= 1


# --- gateway -------------------------------------------------------------------


@dataclass
class _Flight:
    done: threading.Event = field(default_factory=threading.Event)
    result: Any = None
    error: BaseException | None = None


class Gateway:
    """Shared client handle over every configured provider profile."""

    def __init__(
        self,
        profiles: dict[str, ProviderProfile] | Sequence[ProviderProfile],
        *,
        cache: ResponseCache | None = None,
        transports: dict[str, Transport] | None = None,
        http_transport: Transport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        backoff_base: float = 0.5,
        backoff_cap: float = 8.0,
    ) -> None:
        if not isinstance(profiles, dict):
            profiles = {p.backend_id: p for p in profiles}
        self.profiles = dict(profiles)
        self.cache = cache if cache is not None else ResponseCache()
        self.sleep = sleep
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self._http = http_transport
        self.transports: dict[str, Transport] = {}
        for bid, prof in self.profiles.items():
            if transports and bid in transports:
                self.transports[bid] = transports[bid]
            elif prof.is_mock:
                from .mocks import make_handler

                self.transports[bid] = MockTransport(make_handler(prof.kind, prof.mock or {}))
            else:
                self._http = self._http or HttpTransport()
                self.transports[bid] = self._http
        self._slots = {bid: threading.BoundedSemaphore(p.rate_limit) for bid, p in self.profiles.items()}
        self._embed_locks = {bid: threading.Lock() for bid in self.profiles}
        self._flights: dict[str, _Flight] = {}
        self._flights_lock = threading.Lock()
        self._count_lock = threading.Lock()
        self.network_calls = 0

    def profile(self, backend_id: str, kind: str | None = None) -> ProviderProfile:
        try:
            prof = self.profiles[backend_id]
        except KeyError:
            raise UsageError(f"no provider profile named {backend_id!r}") from None
        if kind is not None and prof.kind != kind:
            raise UsageError(f"backend {backend_id!r} is a {prof.kind} provider, not {kind}")
        return prof

    # -- public operations --

    def chat(self, request: ChatRequest) -> str:
        prof = self.profile(request.backend_id, "chat")
        sampling = request.sampling or prof.default_sampling
        payload = {
            "model": prof.model,
            "messages": [{"role": r, "content": c} for r, c in request.messages],
            **sampling.to_dict(),
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        body = self._cached_call(prof, payload)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ProtocolError(f"{prof.backend_id}: chat response lacks choices[0].message.content") from None
        if not isinstance(content, str):
            raise ProtocolError(f"{prof.backend_id}: chat content is not a string")
        return content

    def embed(self, backend_id: str, sentences: Sequence[str]) -> list[tuple[float, ...]]:
        prof = self.profile(backend_id, "embedding")
        if not sentences:
            raise UsageError("embed needs at least one sentence")
        if any(not s.strip() for s in sentences):
            raise UsageError("cannot embed an empty sentence")
        keys = {s: cache_key(prof.backend_id, "embedding", {"model": prof.model, "input": s}) for s in sentences}
        vectors: dict[str, tuple[float, ...]] = {}
        # misses are fetched under a per-profile lock so concurrent callers
        # never request the same sentence twice
        with self._embed_locks[prof.backend_id]:
            missing: list[str] = []
            for s in dict.fromkeys(sentences):
                hit = self.cache.get(keys[s])
                if hit is not None:
                    vectors[s] = tuple(hit[0])
                    _charge(hit[1])
                else:
                    missing.append(s)
            self._fetch_embeddings(prof, missing, keys, vectors)
        out = [vectors[s] for s in sentences]
        if len({len(v) for v in out}) != 1:
            raise ProtocolError(f"{prof.backend_id}: embeddings of differing dimension")
        return out

    def _fetch_embeddings(self, prof: ProviderProfile, missing: list[str], keys: dict, vectors: dict) -> None:
        for i in range(0, len(missing), prof.batch_size):
            batch = missing[i : i + prof.batch_size]
            body, micros = self._request(prof, {"model": prof.model, "input": batch})
            data = body.get("data") if isinstance(body, dict) else None
            if not isinstance(data, list) or len(data) != len(batch):
                raise ProtocolError(f"{prof.backend_id}: embedding response has the wrong number of vectors")
            try:
                ordered = sorted(data, key=lambda d: d["index"])
                got = [tuple(float(x) for x in d["embedding"]) for d in ordered]
            except (KeyError, TypeError, ValueError):
                raise ProtocolError(f"{prof.backend_id}: malformed embedding entries") from None
            per = micros // len(batch)
            for s, v in zip(batch, got):
                vectors[s] = v
                self.cache.put(keys[s], list(v), per)
            _charge(per * len(batch))

    def score_qe(self, backend_id: str, source: str, translation: str, reference: str | None = None) -> QeScore:
        prof = self.profile(backend_id, "qe")
        if not source.strip() or not translation.strip():
            raise UsageError("QE needs a non-empty source and translation")
        if prof.reference_based and reference is None:
            raise UsageError(f"{backend_id} is reference-based and needs a reference")
        if not prof.reference_based and reference is not None:
            raise UsageError(f"{backend_id} is reference-free; do not pass a reference")
        item = {"src": source, "mt": translation}
        if reference is not None:
            item["ref"] = reference
        body = self._cached_call(prof, {"model": prof.model, "data": [item]})
        try:
            raw = float(body["scores"][0])
        except (KeyError, IndexError, TypeError, ValueError):
            raise ProtocolError(f"{backend_id}: QE response lacks scores[0]") from None
        scale = body.get("scale", prof.qe_scale)
        if scale not in QE_SCALES:
            raise ProtocolError(f"{backend_id}: unknown QE scale {scale!r}")
        top = QE_SCALES[scale]
        if not (0.0 <= raw <= top):
            raise ProtocolError(f"{backend_id}: score {raw} outside the {scale} range [0, {top:g}]")
        value = 1.0 - raw / top if scale == "mqm25" else raw / top
        return QeScore(value, backend_id, prof.reference_based, raw if scale != "unit" else None, scale)

    # -- plumbing --

    def _cached_call(self, prof: ProviderProfile, payload: dict) -> Any:
        key = cache_key(prof.backend_id, prof.kind, payload)
        hit = self.cache.get(key)
        if hit is not None:
            _charge(hit[1])
            return hit[0]
        with self._flights_lock:
            flight = self._flights.get(key)
            leader = flight is None
            if leader:
                hit = self.cache.get(key)
                if hit is not None:
                    _charge(hit[1])
                    return hit[0]
                flight = self._flights[key] = _Flight()
        if not leader:
            flight.done.wait()
            if flight.error is not None:
                raise flight.error
            body, micros = flight.result
            _charge(micros)
            return body
        try:
            body, micros = self._request(prof, payload)
            self.cache.put(key, body, micros)
            flight.result = (body, micros)
        except BaseException as exc:
            flight.error = exc
            raise
        finally:
            with self._flights_lock:
                del self._flights[key]
            flight.done.set()
        _charge(micros)
        return body

    def _request(self, prof: ProviderProfile, payload: dict) -> tuple[Any, int]:
        transport = self.transports[prof.backend_id]
        headers = prof.headers()
        last: str = ""
        for attempt in range(prof.max_retries + 1):
            if attempt:
                delay = min(self.backoff_cap, self.backoff_base * 2 ** (attempt - 1))
                log.info("%s: retry %d/%d in %.1fs (%s)", prof.backend_id, attempt, prof.max_retries, delay, last)
                self.sleep(delay)
            t0 = time.perf_counter()
            try:
                with self._slots[prof.backend_id]:
                    with self._count_lock:
                        self.network_calls += 1
                    status, body = transport.post(prof.endpoint, payload, headers, prof.timeout)
            except TransportFailure as exc:
                last = str(exc)
                continue
            elapsed_us = int((time.perf_counter() - t0) * 1e6)
            if 200 <= status < 300:
                if not isinstance(body, dict):
                    raise ProtocolError(f"{prof.backend_id}: response body is not a JSON object")
                micros = round(prof.latency * 1e6) if prof.latency is not None else max(elapsed_us, 1)
                return body, micros
            if status in RETRYABLE_STATUS:
                last = f"HTTP {status}"
                continue
            raise ProviderError(f"{prof.backend_id}: HTTP {status}: {_snippet(body)}", status=status)
        raise TransportError(f"{prof.backend_id}: gave up after {prof.max_retries + 1} attempts ({last})")


def _snippet(body: Any, limit: int = 200) -> str:
    text = body if isinstance(body, str) else json.dumps(body, ensure_ascii=False)
    return text[:limit]
