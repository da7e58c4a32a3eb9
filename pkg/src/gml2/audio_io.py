"""WAV decoding, resampling, channel derivation, and pair alignment.

Waveforms are float64 arrays shaped [channels, length] with samples in
[-1, 1]. Only RIFF/WAVE files holding PCM 16/24/32-bit or IEEE float32
data with 1 or 2 channels are accepted; everything downstream runs at
48 kHz.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from .errors import (
    ChannelMismatchError,
    EmptyAudioError,
    SampleRateMismatchError,
    UnreadableFileError,
    UnsupportedEncodingError,
)

TARGET_RATE = 48000

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass
class Waveform:
    """Decoded audio: samples[channels, length] in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.samples.ndim != 2:
            raise ValueError("samples must be [channels, length]")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def length(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.length / self.sample_rate

    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples**2)))


@dataclass
class SignalPair:
    """Aligned (reference, test) waveforms: equal rate, channels, length."""

    reference: Waveform
    test: Waveform


@dataclass
class ChannelStack:
    """Left/Right/Mid/Side planes of one signal, all the same length."""

    planes: np.ndarray  # [4, length] ordered L, R, M, S
    sample_rate: int

    @property
    def length(self) -> int:
        return self.planes.shape[1]


def _read_fmt_chunk(body: bytes) -> tuple[int, int, int, int]:
    if len(body) < 16:
        raise UnreadableFileError("fmt chunk truncated")
    fmt_tag, n_channels, sample_rate, _, _, bits = struct.unpack("<HHIIHH", body[:16])
    if fmt_tag == _WAVE_FORMAT_EXTENSIBLE:
        if len(body) < 40:
            raise UnreadableFileError("extensible fmt chunk truncated")
        # sub-format GUID starts with the ordinary format tag
        fmt_tag = struct.unpack("<H", body[24:26])[0]
    return fmt_tag, n_channels, sample_rate, bits


def load_wav(path: str | Path) -> Waveform:
    """Decode a WAV file to a float waveform scaled to [-1, 1].

    Raises UnreadableFileError, UnsupportedEncodingError, or
    EmptyAudioError; each carries a distinct ``code``.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from exc

    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise UnreadableFileError(f"{path} is not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (size,) = struct.unpack("<I", raw[pos + 4 : pos + 8])
        body = raw[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            fmt = _read_fmt_chunk(body)
        elif cid == b"data":
            if len(body) < size:
                raise UnreadableFileError(f"{path}: data chunk truncated")
            data = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None or data is None:
        raise UnreadableFileError(f"{path}: missing fmt or data chunk")
    fmt_tag, n_channels, sample_rate, bits = fmt

    if n_channels not in (1, 2):
        raise UnsupportedEncodingError(
            f"{path}: {n_channels} channels unsupported (need 1 or 2)"
        )
    if sample_rate <= 0:
        raise UnreadableFileError(f"{path}: invalid sample rate {sample_rate}")

    if fmt_tag == _WAVE_FORMAT_PCM and bits == 16:
        flat = np.frombuffer(data[: len(data) // 2 * 2], dtype="<i2")
        scaled = flat.astype(np.float64) / 32768.0
    elif fmt_tag == _WAVE_FORMAT_PCM and bits == 24:
        usable = len(data) // 3 * 3
        b = np.frombuffer(data[:usable], dtype=np.uint8).reshape(-1, 3)
        vals = (
            b[:, 0].astype(np.int32)
            | (b[:, 1].astype(np.int32) << 8)
            | (b[:, 2].astype(np.int32) << 16)
        )
        vals = np.where(vals >= 1 << 23, vals - (1 << 24), vals)
        scaled = vals.astype(np.float64) / float(1 << 23)
    elif fmt_tag == _WAVE_FORMAT_PCM and bits == 32:
        flat = np.frombuffer(data[: len(data) // 4 * 4], dtype="<i4")
        scaled = flat.astype(np.float64) / float(1 << 31)
    elif fmt_tag == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        flat = np.frombuffer(data[: len(data) // 4 * 4], dtype="<f4")
        scaled = np.clip(flat.astype(np.float64), -1.0, 1.0)
    else:
        raise UnsupportedEncodingError(
            f"{path}: format tag {fmt_tag} with {bits} bits unsupported"
        )

    n_frames = scaled.size // n_channels
    if n_frames == 0:
        raise EmptyAudioError(f"{path}: zero-length audio")
    samples = scaled[: n_frames * n_channels].reshape(n_frames, n_channels).T
    return Waveform(samples=np.ascontiguousarray(samples), sample_rate=sample_rate)


def save_wav(path: str | Path, w: Waveform, encoding: str = "float32") -> None:
    """Write a waveform as WAV. encoding: pcm16, pcm24, pcm32, or float32."""
    samples = w.samples.T  # interleave [length, channels]
    if encoding == "pcm16":
        fmt_tag, bits = _WAVE_FORMAT_PCM, 16
        ints = np.clip(np.rint(samples * 32768.0), -32768, 32767).astype("<i2")
        payload = ints.tobytes()
    elif encoding == "pcm24":
        fmt_tag, bits = _WAVE_FORMAT_PCM, 24
        vals = np.clip(np.rint(samples * float(1 << 23)), -(1 << 23), (1 << 23) - 1)
        vals = vals.astype(np.int32)
        b = np.empty(vals.shape + (3,), dtype=np.uint8)
        b[..., 0] = vals & 0xFF
        b[..., 1] = (vals >> 8) & 0xFF
        b[..., 2] = (vals >> 16) & 0xFF
        payload = b.tobytes()
    elif encoding == "pcm32":
        fmt_tag, bits = _WAVE_FORMAT_PCM, 32
        vals = np.clip(np.rint(samples * float(1 << 31)), -(1 << 31), (1 << 31) - 1)
        payload = vals.astype("<i4").tobytes()
    elif encoding == "float32":
        fmt_tag, bits = _WAVE_FORMAT_IEEE_FLOAT, 32
        payload = samples.astype("<f4").tobytes()
    else:
        raise ValueError(f"unknown encoding {encoding!r}")

    n_channels = w.channels
    block_align = n_channels * bits // 8
    byte_rate = w.sample_rate * block_align
    fmt_body = struct.pack(
        "<HHIIHH", fmt_tag, n_channels, w.sample_rate, byte_rate, block_align, bits
    )
    chunks = b"".join(
        [
            b"fmt ",
            struct.pack("<I", len(fmt_body)),
            fmt_body,
            b"data",
            struct.pack("<I", len(payload)),
            payload,
            b"\x00" if len(payload) & 1 else b"",
        ]
    )
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks)


def resample_to_48k(w: Waveform) -> Waveform:
    """Polyphase windowed-sinc conversion to 48 kHz; pass-through at 48 kHz."""
    if w.sample_rate == TARGET_RATE:
        return w
    g = np.gcd(TARGET_RATE, w.sample_rate)
    up, down = TARGET_RATE // g, w.sample_rate // g
    out = resample_poly(w.samples, up, down, axis=1)
    return Waveform(samples=np.clip(out, -1.0, 1.0), sample_rate=TARGET_RATE)


def derive_channels(w: Waveform) -> ChannelStack:
    """L/R/M/S planes: stereo uses M=(L+R)/2, S=(L-R)/2; mono maps to dual-mono."""
    if w.channels == 1:
        x = w.samples[0]
        planes = np.stack([x, x, x, np.zeros_like(x)])
    elif w.channels == 2:
        left, right = w.samples[0], w.samples[1]
        planes = np.stack([left, right, (left + right) / 2.0, (left - right) / 2.0])
    else:
        raise ChannelMismatchError(f"{w.channels} channels unsupported (need 1 or 2)")
    return ChannelStack(planes=planes, sample_rate=w.sample_rate)


def align_pair(ref: Waveform, test: Waveform) -> SignalPair:
    """Zero-pad the shorter signal's tail so both waveforms match in length."""
    if ref.channels != test.channels:
        raise ChannelMismatchError(
            f"channel mismatch: reference {ref.channels} vs test {test.channels}"
        )
    if ref.sample_rate != test.sample_rate:
        raise SampleRateMismatchError(
            f"sample rate mismatch: {ref.sample_rate} vs {test.sample_rate}"
        )
    n = max(ref.length, test.length)

    def pad(w: Waveform) -> Waveform:
        if w.length == n:
            return w
        padded = np.zeros((w.channels, n))
        padded[:, : w.length] = w.samples
        return Waveform(samples=padded, sample_rate=w.sample_rate)

    return SignalPair(reference=pad(ref), test=pad(test))


def rms_difference_db(ref: Waveform, test: Waveform) -> float:
    """Level difference |20 log10(rms_ref / rms_test)| in dB; inf if one is silent."""
    r, t = ref.rms(), test.rms()
    if r == 0.0 or t == 0.0:
        return float("inf") if r != t else 0.0
    return abs(20.0 * np.log10(r / t))


def load_pair(
    ref_path: str | Path, test_path: str | Path, strict_rate: bool = False
) -> SignalPair:
    """Load, rate-normalize, and align a reference/test pair."""
    ref = load_wav(ref_path)
    test = load_wav(test_path)
    if strict_rate:
        if ref.sample_rate != TARGET_RATE or test.sample_rate != TARGET_RATE:
            raise SampleRateMismatchError(
                f"strict rate: expected {TARGET_RATE} Hz, got "
                f"{ref.sample_rate}/{test.sample_rate}"
            )
    ref, test = resample_to_48k(ref), resample_to_48k(test)
    return align_pair(ref, test)
