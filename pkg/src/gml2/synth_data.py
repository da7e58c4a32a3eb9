"""Desk-scale synthetic datasets with known ground truth.

Parametric degradations (additive noise, lowpass, bit crush, band
dropout) stand in for codecs; synthetic listener panels are drawn from
Beta distributions whose mode follows the degradation strength, so
end-to-end training runs can be scored against exact target means.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve, firwin

from . import prob_beta
from .audio_io import Waveform, save_wav

DEGRADATION_KINDS = ("additive_noise", "lowpass", "bit_crush", "band_dropout")

# Additive noise spans 60 dB SNR (d=0) down to 0 dB (d=1).
_NOISE_SNR_SPAN_DB = 60.0
# Lowpass cutoff glides log-spaced from 20 kHz down to 1 kHz.
_LP_CUTOFF_HIGH = 20000.0
_LP_CUTOFF_LOW = 1000.0
# Bit crusher: 16 bits at d=0 down to 2 bits at d=1.
_CRUSH_BITS_HIGH = 16.0
_CRUSH_BITS_LOW = 2.0
# Band dropout: zeroed spectral band grows to 8 kHz wide at d=1.
_DROPOUT_MAX_WIDTH = 8000.0

_SOURCE_PEAK = 0.45


@dataclass(frozen=True)
class DegradationSpec:
    kind: str
    strength: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DEGRADATION_KINDS:
            raise ValueError(f"unknown degradation kind {self.kind!r}")
        if not 0.0 <= self.strength <= 1.0:
            raise ValueError("strength must lie in [0, 1]")


@dataclass(frozen=True)
class ListenerModel:
    """Panel model: quality mode follows 0.95(1-d) + 0.05d, sharpness kappa."""

    concentration: float = 20.0
    n_listeners: int = 10
    mode_high: float = 0.95
    mode_low: float = 0.05

    def __post_init__(self):
        if self.concentration <= 2.0:
            raise ValueError("concentration must exceed 2")
        if self.n_listeners < 1:
            raise ValueError("need at least one listener")

    def mode_at(self, d: float) -> float:
        return self.mode_high * (1.0 - d) + self.mode_low * d

    def beta_params(self, d: float) -> prob_beta.BetaParams:
        return prob_beta.params_from_mode_concentration(
            self.mode_at(d), self.concentration
        )

    def true_mean_mushra(self, d: float) -> float:
        return 100.0 * prob_beta.mean(self.beta_params(d))


# ----------------------------------------------------------- test sources

def _normalize_peak(x: np.ndarray, peak: float = _SOURCE_PEAK) -> np.ndarray:
    m = np.max(np.abs(x))
    return x * (peak / m) if m > 0 else x


def _multitone(rng, n, sr):
    freqs = np.exp(rng.uniform(np.log(80.0), np.log(12000.0), size=8))
    t = np.arange(n) / sr
    left = np.zeros(n)
    right = np.zeros(n)
    for f in freqs:
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.3, 1.0)
        pan = rng.uniform(0.3, 0.7)
        tone = amp * np.sin(2 * np.pi * f * t + phase)
        left += (1 - pan) * tone
        right += pan * tone
    return np.stack([left, right])


def _noise_bursts(rng, n, sr):
    noise = rng.standard_normal((2, n))
    lo = rng.uniform(100.0, 2000.0)
    hi = lo * rng.uniform(3.0, 8.0)
    taps = firwin(255, [lo, min(hi, 0.45 * sr)], pass_zero=False, fs=sr)
    shaped = fftconvolve(noise, taps[None, :], mode="same", axes=1)
    burst_rate = rng.uniform(2.0, 6.0)
    t = np.arange(n) / sr
    env = 0.5 - 0.5 * np.cos(2 * np.pi * burst_rate * t + rng.uniform(0, 2 * np.pi))
    return shaped * env[None, :] ** 2


def _am_harmonics(rng, n, sr):
    f0 = rng.uniform(100.0, 160.0)
    t = np.arange(n) / sr
    sig = np.zeros(n)
    for k in range(1, 13):
        sig += np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi)) / k
    am = 0.55 + 0.45 * np.sin(2 * np.pi * rng.uniform(3.0, 7.0) * t)
    mono = sig * am
    delay = int(rng.integers(8, 32))
    right = np.concatenate([np.zeros(delay), mono[:-delay]])
    return np.stack([mono, 0.9 * right + 0.1 * mono])


_SOURCE_KINDS = (_multitone, _noise_bursts, _am_harmonics)


def make_source(index: int, seed: int, duration: float = 3.2, sr: int = 48000) -> Waveform:
    """Deterministic stereo test signal; kind rotates with the index."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    n = int(round(duration * sr))
    gen = _SOURCE_KINDS[index % len(_SOURCE_KINDS)]
    samples = _normalize_peak(gen(rng, n, sr))
    return Waveform(samples=samples, sample_rate=sr)


# ----------------------------------------------------------- degradations

def degrade(w: Waveform, spec: DegradationSpec) -> Waveform:
    """Apply one parametric degradation; d=0 returns the input unchanged."""
    if spec.strength == 0.0:
        return Waveform(samples=w.samples.copy(), sample_rate=w.sample_rate)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, hash(spec.kind) & 0x7FFFFFFF]))
    x = w.samples
    d = spec.strength

    if spec.kind == "additive_noise":
        snr_db = _NOISE_SNR_SPAN_DB * (1.0 - d)
        noise = rng.standard_normal(x.shape)
        p_sig = np.mean(x**2)
        target = p_sig / 10.0 ** (snr_db / 10.0)
        noise *= np.sqrt(target / np.mean(noise**2))
        out = x + noise
    elif spec.kind == "lowpass":
        cutoff = _LP_CUTOFF_HIGH * (_LP_CUTOFF_LOW / _LP_CUTOFF_HIGH) ** d
        taps = firwin(257, cutoff, fs=w.sample_rate)
        out = fftconvolve(x, taps[None, :], mode="same", axes=1)
    elif spec.kind == "bit_crush":
        bits = _CRUSH_BITS_HIGH - (_CRUSH_BITS_HIGH - _CRUSH_BITS_LOW) * d
        q = 2.0 ** (bits - 1.0)
        out = np.round(x * q) / q
    else:  # band_dropout
        width = d * _DROPOUT_MAX_WIDTH
        f_start = rng.uniform(300.0, 16000.0 - _DROPOUT_MAX_WIDTH)
        spec_x = np.fft.rfft(x, axis=1)
        freqs = np.fft.rfftfreq(x.shape[1], 1.0 / w.sample_rate)
        kill = (freqs >= f_start) & (freqs <= f_start + width)
        spec_x[:, kill] = 0.0
        out = np.fft.irfft(spec_x, n=x.shape[1], axis=1)

    return Waveform(samples=np.clip(out, -1.0, 1.0), sample_rate=w.sample_rate)


def default_conditions(n_conditions: int, seed: int = 0) -> list[DegradationSpec]:
    """Strengths spread over [0, 1] with rotating degradation kinds."""
    if n_conditions < 2:
        raise ValueError("need at least 2 conditions")
    specs = []
    for j in range(n_conditions):
        d = j / (n_conditions - 1)
        kind = DEGRADATION_KINDS[j % len(DEGRADATION_KINDS)]
        specs.append(DegradationSpec(kind=kind, strength=d, seed=seed + j))
    return specs


# -------------------------------------------------------------- listeners

def sample_listeners(d: float, lm: ListenerModel, seed: int) -> np.ndarray:
    """n_listeners MUSHRA scores drawn from the panel Beta, scaled x100."""
    p = lm.beta_params(d)
    rng = np.random.default_rng(seed)
    return 100.0 * rng.beta(p.alpha, p.beta, size=lm.n_listeners)


# ---------------------------------------------------------------- dataset

def build_dataset(
    sources: list[tuple[str, Waveform]],
    conditions: list[DegradationSpec],
    lm: ListenerModel,
    out_dir: str | Path,
    seed: int = 0,
    test_items: int = 0,
    kappa_per_condition: list[float] | None = None,
) -> Path:
    """Write degraded WAVs, a JSONL manifest (one row per item, condition,
    listener), and a ground-truth sidecar. Returns the manifest path."""
    if len(sources) < 4:
        raise ValueError("need at least 4 source items")
    if kappa_per_condition is not None and len(kappa_per_condition) != len(conditions):
        raise ValueError("kappa_per_condition must match the condition count")
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wavs"
    wav_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD5]))
    item_ids = [item_id for item_id, _ in sources]
    test_set = set()
    if test_items:
        test_set = set(rng.choice(item_ids, size=test_items, replace=False).tolist())

    rows = []
    truth = {}
    for i, (item_id, wav) in enumerate(sources):
        ref_name = f"wavs/{item_id}_ref.wav"
        save_wav(out_dir / ref_name, wav, encoding="float32")
        split = "test" if item_id in test_set else "train"
        for j, cond in enumerate(conditions):
            cond_id = f"c{j:02d}_{cond.kind}"
            spec = replace(cond, seed=int(np.random.SeedSequence([seed, i, j]).entropy % (1 << 32)))
            degraded = degrade(wav, spec)
            test_name = f"wavs/{item_id}_{cond_id}.wav"
            save_wav(out_dir / test_name, degraded, encoding="float32")

            panel_lm = lm
            if kappa_per_condition is not None:
                panel_lm = replace(lm, concentration=kappa_per_condition[j])
            listener_seed = int(np.random.SeedSequence([seed, i, j, 1]).entropy % (1 << 32))
            scores = sample_listeners(cond.strength, panel_lm, listener_seed)
            p = panel_lm.beta_params(cond.strength)
            truth[f"{item_id}/{cond_id}"] = {
                "alpha": p.alpha,
                "beta": p.beta,
                "strength": cond.strength,
                "kind": cond.kind,
                "kappa": panel_lm.concentration,
                "true_mean": panel_lm.true_mean_mushra(cond.strength),
            }
            for li, score in enumerate(scores):
                rows.append(
                    {
                        "ref_path": ref_name,
                        "test_path": test_name,
                        "listener_score": float(score),
                        "listener_id": f"L{li:02d}",
                        "item_id": item_id,
                        "condition_id": cond_id,
                        "split": split,
                    }
                )

    manifest_path = out_dir / "manifest.jsonl"
    with open(manifest_path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    with open(out_dir / "groundtruth.json", "w") as fh:
        json.dump(truth, fh, indent=2)
    return manifest_path
