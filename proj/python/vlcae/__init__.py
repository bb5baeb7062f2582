"""Dimmable VLC codebook learning (Python bindings to the C++ core)."""

from ._core import (
    ConfigError,
    DomainError,
    NumericalError,
    ParseError,
    audit,
    brute_force_cwc_distance,
    checkpoint_codebooks,
    content_hash,
    default_config,
    fixture,
    fixture_ids,
    isi_geometry,
    isi_matrix,
    led_forward,
    measure_ser_checkpoint,
    measure_ser_ml,
    normalize_config,
    parse_codebook,
    q_function,
    search_codebook,
    sigmoid_window_mean,
    snr_to_sigma2,
    solve_offset,
    train,
    wilson_interval,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
