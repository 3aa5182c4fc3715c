from .client import (
    BRIDGING_SAMPLING,
    TRANSLATION_SAMPLING,
    ChatRequest,
    CostMeter,
    CountingTransport,
    Gateway,
    HttpTransport,
    MockTransport,
    ProviderProfile,
    ResponseCache,
    SamplingParams,
    TransportFailure,
    cache_key,
)

__all__ = [
    "BRIDGING_SAMPLING",
    "TRANSLATION_SAMPLING",
    "ChatRequest",
    "CostMeter",
    "CountingTransport",
    "Gateway",
    "HttpTransport",
    "MockTransport",
    "ProviderProfile",
    "ResponseCache",
    "SamplingParams",
    "TransportFailure",
    "cache_key",
]
