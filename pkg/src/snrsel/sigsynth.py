"""Synthetic modulated-baseband frame generation.

Builds a class x SNR lattice of short complex baseband frames: random
symbols (or a band-limited analog message), root-raised-cosine or
frequency-pulse shaping at a fixed oversampling factor, a four-stage
impairment chain (timing offset, carrier frequency offset, phase jitter,
optional flat fading), and calibrated AWGN.

SNR is defined per complex sample as signal power over noise power,
measured on the actual post-impairment frame. Every frame is normalized
to unit power immediately before noise is added, so the noise variance
for a target of ``snr_db`` is exactly ``10**(-snr_db/10)``.

Generation is deterministic: every frame's random draws come from a seed
derived from (master_seed, class index, SNR index, frame index), so any
single frame can be regenerated in isolation and datasets are identical
regardless of generation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigurationError, DataError
from .seeding import seed_sequence

DEFAULT_ROLLOFF = 0.35
DEFAULT_FILTER_SPAN = 8  # symbols
GFSK_BT = 0.35
FSK_MOD_INDEX = 0.5
AM_MOD_INDEX = 0.5
FM_DEVIATION = 0.25  # cycles/sample at unit message peak
ANALOG_MSG_CUTOFF = 0.003  # cycles/sample (3 kHz at a 1 MHz sample rate)

SNR_INF = float("inf")  # sentinel: apply_awgn returns its input unchanged


class ModType(str, Enum):
    """Supported modulation classes."""

    BPSK = "BPSK"
    QPSK = "QPSK"
    PSK8 = "8PSK"
    PAM4 = "PAM4"
    QAM16 = "QAM16"
    QAM64 = "QAM64"
    GFSK = "GFSK"
    CPFSK = "CPFSK"
    AM_DSB = "AM-DSB"
    WBFM = "WBFM"


def _psk_points(order: int) -> np.ndarray:
    return np.exp(2j * np.pi * np.arange(order) / order)


def _qam_points(side: int) -> np.ndarray:
    levels = np.arange(-side + 1, side, 2, dtype=float)
    pts = (levels[:, None] + 1j * levels[None, :]).ravel()
    return pts / np.sqrt(np.mean(np.abs(pts) ** 2))


def _pam_points() -> np.ndarray:
    levels = np.array([-3.0, -1.0, 1.0, 3.0])
    return (levels / np.sqrt(np.mean(levels**2))).astype(complex)


# Unit average-energy alphabets for the linearly modulated classes.
CONSTELLATIONS: dict[ModType, np.ndarray] = {
    ModType.BPSK: np.array([1.0 + 0j, -1.0 + 0j]),
    ModType.QPSK: _psk_points(4) * np.exp(1j * np.pi / 4),
    ModType.PSK8: _psk_points(8),
    ModType.PAM4: _pam_points(),
    ModType.QAM16: _qam_points(4),
    ModType.QAM64: _qam_points(8),
}

LINEAR_CLASSES = frozenset(CONSTELLATIONS)
FREQ_CLASSES = frozenset({ModType.GFSK, ModType.CPFSK})
ANALOG_CLASSES = frozenset({ModType.AM_DSB, ModType.WBFM})


@dataclass(frozen=True)
class SnrGrid:
    """Ordered SNR lattice in dB: strictly increasing, uniform step."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values) == 0:
            raise ConfigurationError("SNR grid must not be empty")
        diffs = np.diff(self.values)
        if len(self.values) > 1:
            if np.any(diffs <= 0):
                raise ConfigurationError("SNR grid must be strictly increasing")
            if not np.allclose(diffs, diffs[0], atol=1e-9):
                raise ConfigurationError("SNR grid must have a uniform step")

    @classmethod
    def default(cls) -> "SnrGrid":
        return cls(tuple(float(s) for s in range(-20, 20, 2)))

    @property
    def step(self) -> float:
        if len(self.values) < 2:
            return 0.0
        return float(self.values[1] - self.values[0])

    def index_of(self, snr_db: float) -> int:
        for i, v in enumerate(self.values):
            if abs(v - snr_db) < 1e-6:
                return i
        raise ConfigurationError(f"SNR {snr_db} dB is not on the grid {self.values}")

    def __contains__(self, snr_db: float) -> bool:
        return any(abs(v - snr_db) < 1e-6 for v in self.values)

    def __len__(self) -> int:
        return len(self.values)

    def neighbors(self, snr_db: float) -> list[float]:
        """Grid values adjacent to snr_db (one step away), in order."""
        i = self.index_of(snr_db)
        out = []
        if i > 0:
            out.append(self.values[i - 1])
        if i < len(self.values) - 1:
            out.append(self.values[i + 1])
        return out


@dataclass(frozen=True)
class ImpairmentConfig:
    """Bounds for the four-stage channel/hardware impairment chain.

    cfo_max is in cycles/sample, phase_jitter_std in radians/sample,
    timing_offset_max in symbols. A stage whose bound is zero (or fading
    off) is skipped entirely and consumes no random draws.
    """

    cfo_max: float = 0.005
    phase_jitter_std: float = 0.001
    timing_offset_max: float = 0.5
    fading: bool = False

    def __post_init__(self) -> None:
        if self.cfo_max < 0 or self.phase_jitter_std < 0 or self.timing_offset_max < 0:
            raise ConfigurationError("Impairment bounds must be >= 0")
        if self.cfo_max >= 0.5:
            raise ConfigurationError("cfo_max must be < 0.5 cycles/sample")

    @classmethod
    def none(cls) -> "ImpairmentConfig":
        return cls(cfo_max=0.0, phase_jitter_std=0.0, timing_offset_max=0.0, fading=False)


@dataclass(frozen=True)
class DatasetSpec:
    """Full recipe for one balanced class x SNR dataset."""

    classes: tuple[ModType, ...]
    grid: SnrGrid = field(default_factory=SnrGrid.default)
    frames_per_cell: int = 100
    sps: int = 8
    frame_len: int = 128
    impairments: ImpairmentConfig = field(default_factory=ImpairmentConfig)
    master_seed: int = 0

    def __post_init__(self) -> None:
        if len(self.classes) == 0:
            raise ConfigurationError("DatasetSpec needs at least one class")
        if len(set(self.classes)) != len(self.classes):
            raise ConfigurationError("Duplicate modulation classes in DatasetSpec")
        if self.frames_per_cell <= 0:
            raise ConfigurationError("frames_per_cell must be > 0")
        if self.sps < 2:
            raise ConfigurationError("sps must be >= 2")
        if self.frame_len <= 0:
            raise ConfigurationError("frame_len must be > 0")

    @property
    def n_frames(self) -> int:
        return len(self.classes) * len(self.grid) * self.frames_per_cell


@dataclass(frozen=True)
class Frame:
    """One labeled baseband example."""

    iq: np.ndarray  # (frame_len,) complex
    label: int  # index into the owning spec's class list
    snr_db: float
    frame_id: int
    seed_path: tuple[int, ...]  # (master_seed, class idx, snr idx, frame idx)


@dataclass
class Dataset:
    """Frame collection in canonical order (class-major, then SNR, then frame)."""

    iq: np.ndarray  # (n, frame_len) complex64
    labels: np.ndarray  # (n,) int64
    snr_db: np.ndarray  # (n,) float64
    frame_ids: np.ndarray  # (n,) int64
    classes: tuple[str, ...]
    grid: SnrGrid
    spec: DatasetSpec | None = None

    @property
    def n_frames(self) -> int:
        return int(self.iq.shape[0])

    @property
    def frame_len(self) -> int:
        return int(self.iq.shape[1])

    def indices_at(self, snr_db: float) -> np.ndarray:
        return np.flatnonzero(np.abs(self.snr_db - snr_db) < 1e-6)


def rrc_taps(sps: int, rolloff: float = DEFAULT_ROLLOFF, span: int = DEFAULT_FILTER_SPAN) -> np.ndarray:
    """Root-raised-cosine FIR taps, unit energy, odd length span*sps + 1."""
    if sps < 2:
        raise ConfigurationError("sps must be >= 2")
    if not 0 < rolloff <= 1:
        raise ConfigurationError("rolloff must be in (0, 1]")
    n = np.arange(span * sps + 1) - span * sps / 2.0
    t = n / sps  # in symbols
    taps = np.empty_like(t)
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            taps[i] = 1.0 - rolloff + 4.0 * rolloff / np.pi
        elif abs(abs(ti) - 1.0 / (4.0 * rolloff)) < 1e-9:
            taps[i] = (rolloff / np.sqrt(2.0)) * (
                (1.0 + 2.0 / np.pi) * np.sin(np.pi / (4.0 * rolloff))
                + (1.0 - 2.0 / np.pi) * np.cos(np.pi / (4.0 * rolloff))
            )
        else:
            num = np.sin(np.pi * ti * (1.0 - rolloff)) + 4.0 * rolloff * ti * np.cos(
                np.pi * ti * (1.0 + rolloff)
            )
            den = np.pi * ti * (1.0 - (4.0 * rolloff * ti) ** 2)
            taps[i] = num / den
    return taps / np.linalg.norm(taps)


def _gaussian_taps(sps: int, bt: float, span: int = 4) -> np.ndarray:
    # 3 dB bandwidth bt * symbol rate; unit DC gain.
    sigma = np.sqrt(np.log(2.0)) / (2.0 * np.pi * bt)  # in symbols
    t = (np.arange(span * sps + 1) - span * sps / 2.0) / sps
    h = np.exp(-0.5 * (t / sigma) ** 2)
    return h / np.sum(h)


def bandlimited_message(n: int, rng: np.random.Generator, cutoff: float = ANALOG_MSG_CUTOFF) -> np.ndarray:
    """Stationary low-pass Gaussian message, unit peak, length n.

    Synthesized in the frequency domain over a window long enough to put
    several bins inside the cutoff (the cutoff is far below the frame
    rate, so a frame-sized window would collapse to a constant).
    """
    nfft = max(int(n), int(np.ceil(16.0 / cutoff)))
    freqs = np.fft.fftfreq(nfft)
    spec = rng.standard_normal(nfft) + 1j * rng.standard_normal(nfft)
    spec[np.abs(freqs) > cutoff] = 0.0
    full = np.fft.ifft(spec).real
    peak = np.max(np.abs(full))
    if peak > 0:
        full = full / peak
    return full[:n]


def generate_symbols(mod: ModType, n: int, seed: int) -> np.ndarray:
    """Draw n source symbols (or message samples, for analog classes).

    Digital classes return i.i.d. uniform draws from a unit-energy
    alphabet; frequency classes use the binary alphabet {+1, -1}; analog
    classes return a band-limited Gaussian message at the sample rate.
    """
    if n <= 0:
        raise ConfigurationError("symbol count must be > 0")
    mod = ModType(mod)
    rng = np.random.default_rng(seed)
    if mod in LINEAR_CLASSES:
        alphabet = CONSTELLATIONS[mod]
        return alphabet[rng.integers(0, len(alphabet), size=n)]
    if mod in FREQ_CLASSES:
        return np.where(rng.integers(0, 2, size=n) == 0, 1.0, -1.0).astype(complex)
    if mod in ANALOG_CLASSES:
        return bandlimited_message(n, rng).astype(complex)
    raise ConfigurationError(f"Unsupported modulation type: {mod}")


def pulse_shape(
    symbols: np.ndarray,
    sps: int,
    rolloff: float = DEFAULT_ROLLOFF,
    span: int = DEFAULT_FILTER_SPAN,
) -> np.ndarray:
    """Upsample by sps and apply the RRC filter; output has unit mean power."""
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.size == 0:
        raise DataError("Cannot pulse-shape an empty symbol sequence")
    taps = rrc_taps(sps, rolloff, span)
    up = np.zeros(symbols.size * sps, dtype=complex)
    up[::sps] = symbols
    y = np.convolve(up, taps)
    power = np.mean(np.abs(y) ** 2)
    if power > 0:
        y = y / np.sqrt(power)
    return y


def _freq_modulate(symbols: np.ndarray, sps: int, bt: float | None) -> np.ndarray:
    # Continuous-phase FSK: NRZ frequency waveform, optionally Gaussian
    # smoothed, integrated into phase. Constant envelope, unit power.
    nrz = np.repeat(symbols.real, sps)
    if bt is not None:
        nrz = np.convolve(nrz, _gaussian_taps(sps, bt), mode="same")
    phase = np.pi * FSK_MOD_INDEX * np.cumsum(nrz) / sps
    return np.exp(1j * phase)


def synthesize_waveform(mod: ModType, n_samples: int, sps: int, seed: int) -> np.ndarray:
    """Clean (pre-impairment) baseband waveform of exactly n_samples."""
    if n_samples <= 0:
        raise ConfigurationError("n_samples must be > 0")
    mod = ModType(mod)
    if mod in ANALOG_CLASSES:
        m = generate_symbols(mod, n_samples, seed).real
        if mod is ModType.AM_DSB:
            wave = (1.0 + AM_MOD_INDEX * m).astype(complex)
        else:
            phase = 2.0 * np.pi * FM_DEVIATION * np.cumsum(m)
            wave = np.exp(1j * phase)
    else:
        n_sym = math.ceil(n_samples / sps) + 2 * DEFAULT_FILTER_SPAN
        symbols = generate_symbols(mod, n_sym, seed)
        if mod in FREQ_CLASSES:
            bt = GFSK_BT if mod is ModType.GFSK else None
            wave = _freq_modulate(symbols, sps, bt)
        else:
            wave = pulse_shape(symbols, sps)
        start = (wave.size - n_samples) // 2
        wave = wave[start : start + n_samples]
    return wave


def draw_impairments(cfg: ImpairmentConfig, seed: int, n_samples: int) -> dict:
    """Deterministic impairment parameter draws for one waveform.

    Stage order is fixed (timing, CFO, jitter, fading); disabled stages
    draw nothing, so enabling one stage never shifts another's draws.
    """
    rng = np.random.default_rng(seed)
    draws: dict = {"timing_offset": 0.0, "cfo": 0.0, "jitter_phase": None, "fading_tap": None}
    if cfg.timing_offset_max > 0:
        draws["timing_offset"] = float(rng.uniform(-cfg.timing_offset_max, cfg.timing_offset_max))
    if cfg.cfo_max > 0:
        draws["cfo"] = float(rng.uniform(-cfg.cfo_max, cfg.cfo_max))
    if cfg.phase_jitter_std > 0:
        steps = rng.normal(0.0, cfg.phase_jitter_std, size=n_samples)
        draws["jitter_phase"] = np.cumsum(steps)
    if cfg.fading:
        g = rng.normal(size=2)
        draws["fading_tap"] = complex(g[0], g[1]) / np.sqrt(2.0)
    return draws


def _fractional_delay(x: np.ndarray, delay_samples: float, taps: int = 31) -> np.ndarray:
    n = np.arange(taps) - (taps - 1) / 2.0
    h = np.sinc(n - delay_samples) * np.hamming(taps)
    h = h / np.sum(h)
    return np.convolve(x, h, mode="same")


def apply_impairments(wave: np.ndarray, cfg: ImpairmentConfig, seed: int, sps: int = 8) -> np.ndarray:
    """Apply timing offset, CFO, phase jitter, and optional flat fading.

    With an all-zero config the input is returned unchanged (same values,
    fresh array). Deterministic given seed.
    """
    wave = np.asarray(wave, dtype=complex)
    if wave.size == 0:
        raise DataError("Cannot impair an empty waveform")
    draws = draw_impairments(cfg, seed, wave.size)
    out = wave.copy()
    if draws["timing_offset"] != 0.0:
        out = _fractional_delay(out, draws["timing_offset"] * sps)
    if draws["cfo"] != 0.0:
        k = np.arange(out.size)
        out = out * np.exp(2j * np.pi * draws["cfo"] * k)
    if draws["jitter_phase"] is not None:
        out = out * np.exp(1j * draws["jitter_phase"])
    if draws["fading_tap"] is not None:
        out = out * draws["fading_tap"]
    return out


def apply_awgn(wave: np.ndarray, snr_db: float, seed: int) -> np.ndarray:
    """Add circularly-symmetric complex Gaussian noise at the target SNR.

    Noise variance per complex sample is P * 10**(-snr_db/10) with P the
    measured mean power of the input. snr_db = +inf returns the input
    unchanged.
    """
    wave = np.asarray(wave, dtype=complex)
    if np.isinf(snr_db) and snr_db > 0:
        return wave.copy()
    power = float(np.mean(np.abs(wave) ** 2))
    if power <= 0.0:
        raise DataError("Cannot set an SNR on a zero-power waveform")
    noise_var = power * 10.0 ** (-snr_db / 10.0)
    rng = np.random.default_rng(seed)
    scale = np.sqrt(noise_var / 2.0)
    noise = scale * (rng.standard_normal(wave.size) + 1j * rng.standard_normal(wave.size))
    return wave + noise


def generate_frame(spec: DatasetSpec, class_idx: int, snr_idx: int, frame_idx: int) -> Frame:
    """Regenerate a single frame of the lattice from its lineage alone."""
    if not 0 <= class_idx < len(spec.classes):
        raise ConfigurationError("class_idx out of range")
    if not 0 <= snr_idx < len(spec.grid):
        raise ConfigurationError("snr_idx out of range")
    if not 0 <= frame_idx < spec.frames_per_cell:
        raise ConfigurationError("frame_idx out of range")

    ss = seed_sequence(spec.master_seed, "frame", class_idx, snr_idx, frame_idx)
    s_sym, s_imp, s_off, s_noise = (int(v) for v in ss.generate_state(4))

    guard = DEFAULT_FILTER_SPAN * spec.sps
    offset_span = DEFAULT_FILTER_SPAN * spec.sps  # one filter span of start jitter
    n_total = spec.frame_len + offset_span + 2 * guard

    mod = spec.classes[class_idx]
    snr_db = float(spec.grid.values[snr_idx])
    wave = synthesize_waveform(mod, n_total, spec.sps, s_sym)
    wave = apply_impairments(wave, spec.impairments, s_imp, sps=spec.sps)

    offset = int(np.random.default_rng(s_off).integers(0, offset_span))
    cut = wave[guard + offset : guard + offset + spec.frame_len]
    # Per-frame unit-power calibration: makes the per-sample SNR exact.
    cut = cut / np.sqrt(np.mean(np.abs(cut) ** 2))
    noisy = apply_awgn(cut, snr_db, s_noise)

    frame_id = (class_idx * len(spec.grid) + snr_idx) * spec.frames_per_cell + frame_idx
    return Frame(
        iq=noisy.astype(np.complex64),
        label=class_idx,
        snr_db=snr_db,
        frame_id=frame_id,
        seed_path=(spec.master_seed, class_idx, snr_idx, frame_idx),
    )


def build_dataset(spec: DatasetSpec) -> Dataset:
    """Generate the full balanced lattice in canonical frame order."""
    n = spec.n_frames
    iq = np.empty((n, spec.frame_len), dtype=np.complex64)
    labels = np.empty(n, dtype=np.int64)
    snrs = np.empty(n, dtype=np.float64)
    frame_ids = np.empty(n, dtype=np.int64)

    row = 0
    for ci in range(len(spec.classes)):
        for si in range(len(spec.grid)):
            for fi in range(spec.frames_per_cell):
                fr = generate_frame(spec, ci, si, fi)
                iq[row] = fr.iq
                labels[row] = fr.label
                snrs[row] = fr.snr_db
                frame_ids[row] = fr.frame_id
                row += 1

    return Dataset(
        iq=iq,
        labels=labels,
        snr_db=snrs,
        frame_ids=frame_ids,
        classes=tuple(m.value for m in spec.classes),
        grid=spec.grid,
        spec=spec,
    )
