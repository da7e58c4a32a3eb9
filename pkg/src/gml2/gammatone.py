"""Gammatone filterbank and power spectrogram features.

The filterbank places band centers uniformly on the ERB-rate scale and
models each band with the order-4 gammatone impulse response
h(t) = c t^{n-1} exp(-2 pi b t) cos(2 pi f0 t + phi) for t > 0, zero
otherwise. Band powers are computed per 80 ms Hann-windowed frame by
weighting the frame's power spectrum with each band's squared magnitude
response, which matches time-domain filtering via Parseval up to the
circular-convolution approximation.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .audio_io import ChannelStack, SignalPair, derive_channels
from .errors import DataError

SAMPLE_RATE = 48000

# Floor added before log10 compression; -100 dB keeps silence finite.
POWER_FLOOR = 1e-10

_FEATURE_MAGIC = b"G2FT"
_FEATURE_VERSION = 1

# 8 planes: reference then test, each as L, R, M, S.
PLANE_NAMES = (
    "ref_L", "ref_R", "ref_M", "ref_S",
    "test_L", "test_R", "test_M", "test_S",
)


@dataclass(frozen=True)
class GammatoneConfig:
    n_bands: int = 32
    f_low: float = 50.0
    f_high: float = 24000.0
    window_ms: float = 80.0
    hop_ms: float = 20.0
    order: int = 4
    compression: str = "log"  # "log" or "linear"

    def __post_init__(self):
        if not 0.0 < self.f_low < self.f_high <= SAMPLE_RATE / 2:
            raise ValueError("need 0 < f_low < f_high <= Nyquist")
        if self.n_bands < 2:
            raise ValueError("n_bands must be at least 2")
        if not self.window_ms >= self.hop_ms > 0.0:
            raise ValueError("need window_ms >= hop_ms > 0")
        if self.order < 1:
            raise ValueError("order must be positive")
        if self.compression not in ("log", "linear"):
            raise ValueError("compression must be 'log' or 'linear'")

    @property
    def window_samples(self) -> int:
        return int(round(self.window_ms * SAMPLE_RATE / 1000.0))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop_ms * SAMPLE_RATE / 1000.0))

    def key(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass(frozen=True)
class FilterBand:
    """One gammatone band: center f0, decay b, gain c, order n, phase phi."""

    f0: float
    b: float
    c: float
    n: int
    phi: float


@dataclass
class GammatoneSpectrogram:
    """power[planes, frames, bands] plus frame centers in seconds."""

    power: np.ndarray
    frame_times: np.ndarray
    config: GammatoneConfig = field(repr=False)

    @property
    def n_planes(self) -> int:
        return self.power.shape[0]

    @property
    def n_frames(self) -> int:
        return self.power.shape[1]

    @property
    def n_bands(self) -> int:
        return self.power.shape[2]


def erb_bandwidth(f: float):
    """Glasberg-Moore equivalent rectangular bandwidth in Hz."""
    f = np.asarray(f, dtype=np.float64)
    if np.any(f <= 0.0):
        raise ValueError("frequency must be positive")
    out = 24.7 * (4.37 * f / 1000.0 + 1.0)
    return float(out) if out.ndim == 0 else out


def _erb_rate(f):
    return 21.4 * np.log10(4.37 * np.asarray(f, dtype=np.float64) / 1000.0 + 1.0)


def _erb_rate_inverse(e):
    return (np.power(10.0, np.asarray(e, dtype=np.float64) / 21.4) - 1.0) * 1000.0 / 4.37


def center_frequencies(cfg: GammatoneConfig) -> np.ndarray:
    """n_bands frequencies uniformly spaced on the ERB-rate scale, endpoints
    included exactly."""
    rates = np.linspace(_erb_rate(cfg.f_low), _erb_rate(cfg.f_high), cfg.n_bands)
    freqs = _erb_rate_inverse(rates)
    freqs[0] = cfg.f_low
    freqs[-1] = cfg.f_high
    return freqs


def impulse_response_at(band: FilterBand, t: np.ndarray) -> np.ndarray:
    """Evaluate h(t) at arbitrary times; zero for t < 0."""
    t = np.asarray(t, dtype=np.float64)
    pos = t > 0.0
    out = np.zeros_like(t)
    tp = t[pos]
    out[pos] = (
        band.c
        * tp ** (band.n - 1)
        * np.exp(-2.0 * np.pi * band.b * tp)
        * np.cos(2.0 * np.pi * band.f0 * tp + band.phi)
    )
    return out


def impulse_response(band: FilterBand, duration: int, rate: int = SAMPLE_RATE) -> np.ndarray:
    """Sample h(t) at t = k/rate for k = 0..duration-1."""
    return impulse_response_at(band, np.arange(duration) / float(rate))


def envelope_peak_time(band: FilterBand) -> float:
    """Argmax of t^{n-1} exp(-2 pi b t): (n-1)/(2 pi b)."""
    return (band.n - 1) / (2.0 * np.pi * band.b)


def decay_length_samples(band: FilterBand, fraction: float = 1e-3, rate: int = SAMPLE_RATE) -> int:
    """Samples until the envelope falls below `fraction` of its peak."""
    t_pk = envelope_peak_time(band)
    env_pk = t_pk ** (band.n - 1) * np.exp(-2.0 * np.pi * band.b * t_pk)
    t = t_pk
    step = 1.0 / (2.0 * np.pi * band.b)
    while (t ** (band.n - 1) * np.exp(-2.0 * np.pi * band.b * t)) > fraction * env_pk:
        t += step
    return int(np.ceil(t * rate))


class Filterbank:
    """Bands plus squared-magnitude weights on a frame's rfft grid."""

    def __init__(self, cfg: GammatoneConfig):
        self.config = cfg
        self.window = cfg.window_samples
        n_fine = 1 << 17
        freqs = center_frequencies(cfg)
        bands = []
        rows = []
        for f0 in freqs:
            b = 1.019 * erb_bandwidth(f0)
            raw = FilterBand(f0=float(f0), b=float(b), c=1.0, n=cfg.order, phi=0.0)
            # IR long enough for the envelope to decay to 0.1% of peak, padded
            # to a multiple of the window so frame-grid bins are exact subsamples
            need = max(self.window, decay_length_samples(raw, 1e-3))
            mult = int(np.ceil(need / self.window))
            h = impulse_response(raw, self.window * mult)
            peak = float(np.max(np.abs(np.fft.rfft(h, n=max(n_fine, h.size)))))
            c = 1.0 / peak
            bands.append(FilterBand(f0=raw.f0, b=raw.b, c=c, n=raw.n, phi=raw.phi))
            resp = np.abs(np.fft.rfft(h, n=self.window * mult)) * c
            rows.append(resp[::mult] ** 2)
        self.bands: list[FilterBand] = bands
        self.weights = np.asarray(rows)  # [n_bands, window//2 + 1]
        self.hann = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(self.window) / self.window)
        self.window_energy = float(np.sum(self.hann**2))
        # rfft bin multiplicity for full-spectrum energy (DC/Nyquist once)
        mult_bins = np.full(self.window // 2 + 1, 2.0)
        mult_bins[0] = 1.0
        if self.window % 2 == 0:
            mult_bins[-1] = 1.0
        self._bin_mult = mult_bins


@lru_cache(maxsize=8)
def _filterbank_cached(key: str) -> Filterbank:
    cfg = GammatoneConfig(**json.loads(key))
    return Filterbank(cfg)


def get_filterbank(cfg: GammatoneConfig) -> Filterbank:
    return _filterbank_cached(cfg.key())


def _frame_signal(x: np.ndarray, window: int, hop: int) -> np.ndarray:
    n_frames = 1 + (x.size - window) // hop
    idx = np.arange(window)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx]


def spectrogram(stack: ChannelStack, cfg: GammatoneConfig) -> GammatoneSpectrogram:
    """Per-band mean-square power of each plane per Hann-windowed frame."""
    if stack.sample_rate != SAMPLE_RATE:
        raise DataError(f"spectrogram expects {SAMPLE_RATE} Hz, got {stack.sample_rate}")
    fb = get_filterbank(cfg)
    window, hop = fb.window, cfg.hop_samples
    if stack.length < window:
        raise DataError(
            f"signal of {stack.length} samples shorter than one {window}-sample window"
        )
    planes = []
    for x in stack.planes:
        frames = _frame_signal(x, window, hop) * fb.hann
        spec = np.abs(np.fft.rfft(frames, axis=1)) ** 2 * fb._bin_mult
        power = spec @ fb.weights.T / (window * fb.window_energy)
        planes.append(power)
    power = np.stack(planes)  # [4, frames, bands]
    n_frames = power.shape[1]
    times = (np.arange(n_frames) * hop + window / 2.0) / SAMPLE_RATE
    return GammatoneSpectrogram(power=power, frame_times=times, config=cfg)


def build_features(pair: SignalPair, cfg: GammatoneConfig) -> GammatoneSpectrogram:
    """8-plane feature stack [ref L,R,M,S, test L,R,M,S], compressed float32."""
    ref = spectrogram(derive_channels(pair.reference), cfg)
    test = spectrogram(derive_channels(pair.test), cfg)
    power = np.concatenate([ref.power, test.power], axis=0)
    if cfg.compression == "log":
        power = np.log10(power + POWER_FLOOR)
    return GammatoneSpectrogram(
        power=power.astype(np.float32),
        frame_times=ref.frame_times,
        config=cfg,
    )


def write_features(path: str | Path, spec: GammatoneSpectrogram) -> None:
    """Binary feature dump: magic, version, dims, config JSON, float32 data."""
    cfg_json = spec.config.key().encode()
    data = np.ascontiguousarray(spec.power, dtype="<f4").tobytes()
    buf = io.BytesIO()
    buf.write(_FEATURE_MAGIC)
    buf.write(
        struct.pack(
            "<IIIII",
            _FEATURE_VERSION,
            spec.n_planes,
            spec.n_frames,
            spec.n_bands,
            len(cfg_json),
        )
    )
    buf.write(cfg_json)
    buf.write(data)
    Path(path).write_bytes(buf.getvalue())


def read_features(path: str | Path) -> GammatoneSpectrogram:
    raw = Path(path).read_bytes()
    if raw[:4] != _FEATURE_MAGIC:
        raise DataError(f"{path}: not a feature file")
    version, planes, frames, bands, cfg_len = struct.unpack("<IIIII", raw[4:24])
    if version != _FEATURE_VERSION:
        raise DataError(f"{path}: unsupported feature version {version}")
    cfg = GammatoneConfig(**json.loads(raw[24 : 24 + cfg_len]))
    start = 24 + cfg_len
    count = planes * frames * bands
    power = np.frombuffer(raw[start : start + 4 * count], dtype="<f4")
    if power.size != count:
        raise DataError(f"{path}: truncated feature payload")
    power = power.reshape(planes, frames, bands)
    times = (np.arange(frames) * cfg.hop_samples + cfg.window_samples / 2.0) / SAMPLE_RATE
    return GammatoneSpectrogram(power=power.copy(), frame_times=times, config=cfg)
