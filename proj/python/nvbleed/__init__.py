"""Simulated GPU interconnect covert channels, side channels and model extraction."""

from ._core import (
    NvbleedError,
    PlatformProfile,
    conv_candidates,
    covert_run,
    extract,
    fingerprint,
    levenshtein,
    load_profile,
    parse_model,
    pool_candidates,
    record_model_trace,
    schedule_transfer,
    simple_model_names,
    window_stats,
)

__all__ = [
    "NvbleedError",
    "PlatformProfile",
    "conv_candidates",
    "covert_run",
    "extract",
    "fingerprint",
    "levenshtein",
    "load_profile",
    "parse_model",
    "pool_candidates",
    "record_model_trace",
    "schedule_transfer",
    "simple_model_names",
    "window_stats",
]
