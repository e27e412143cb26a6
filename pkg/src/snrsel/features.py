"""Frame-to-feature conversion.

A frame becomes a real 2 x N matrix (row 0 real part, row 1 imaginary
part), either of the raw time-domain samples or of the unitary,
DC-centered discrete Fourier transform. One of three normalizations is
then applied: none, per-frame unit power, or global standardization with
statistics fitted on the training split only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError

NORMALIZATIONS = ("none", "frame_power", "global_standard")
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class PipelineConfig:
    use_fft: bool = False
    normalization: str = "frame_power"

    def __post_init__(self) -> None:
        if self.normalization not in NORMALIZATIONS:
            raise ConfigurationError(
                f"normalization must be one of {NORMALIZATIONS}, got {self.normalization!r}"
            )


@dataclass(frozen=True)
class FeatureStats:
    """Per-dimension mean/std of the training split, for standardization."""

    mean: np.ndarray  # (2, N)
    std: np.ndarray  # (2, N), floored at STD_FLOOR


def _spectrum(iq: np.ndarray) -> np.ndarray:
    # Unitary, DC-centered DFT along the sample axis.
    n = iq.shape[-1]
    return np.fft.fftshift(np.fft.fft(iq, axis=-1), axes=-1) / np.sqrt(n)


def transform(
    iq: np.ndarray,
    cfg: PipelineConfig,
    stats: FeatureStats | None = None,
) -> np.ndarray:
    """Featurize a batch of frames: (B, N) complex -> (B, 2, N) float64."""
    iq = np.asarray(iq)
    single = iq.ndim == 1
    if single:
        iq = iq[None, :]
    if not np.all(np.isfinite(iq)):
        raise DataError("Non-finite samples in input frames")

    z = iq.astype(np.complex128)
    if cfg.use_fft:
        z = _spectrum(z)
    x = np.stack([z.real, z.imag], axis=1)  # (B, 2, N)

    if cfg.normalization == "frame_power":
        power = np.mean(np.sum(x**2, axis=1), axis=-1)  # mean |z|^2 per frame
        x = x / np.sqrt(np.maximum(power, 1e-30))[:, None, None]
    elif cfg.normalization == "global_standard":
        if stats is None:
            raise ConfigurationError("global_standard normalization needs fitted stats")
        x = (x - stats.mean[None]) / stats.std[None]

    return x[0] if single else x


def to_feature(iq: np.ndarray, cfg: PipelineConfig, stats: FeatureStats | None = None) -> np.ndarray:
    """Featurize one frame: (N,) complex -> (2, N) float64."""
    return transform(iq, cfg, stats)


def fit_stats(
    iq: np.ndarray,
    cfg: PipelineConfig,
    roles: np.ndarray | None = None,
) -> FeatureStats:
    """Per-dimension mean/std over training frames (std floored at 1e-8).

    If ``roles`` is given (one string per frame), any frame not marked
    "train" is rejected: statistics must never see validation/test data.
    """
    iq = np.asarray(iq)
    if iq.ndim == 1:
        iq = iq[None, :]
    if iq.shape[0] == 0:
        raise DataError("Cannot fit feature statistics on an empty split")
    if roles is not None:
        roles = np.asarray(roles)
        if roles.shape[0] != iq.shape[0]:
            raise ConfigurationError("roles must align with frames")
        bad = np.flatnonzero(roles != "train")
        if bad.size:
            raise DataError(
                f"{bad.size} non-training frames passed to fit_stats (first index {bad[0]})"
            )
    # Fit on unnormalized features in the configured domain.
    base = PipelineConfig(use_fft=cfg.use_fft, normalization="none")
    x = transform(iq, base)
    mean = np.mean(x, axis=0)
    std = np.std(x, axis=0)
    return FeatureStats(mean=mean, std=np.maximum(std, STD_FLOOR))
