"""Fixed-length 16 kHz audio ingest, 32x32 log-mel features, and stochastic
waveform augmentations (amplitude, speed, time shift, background noise)."""
from __future__ import annotations

import math
import wave
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import get_window, resample_poly

TARGET_RATE = 16_000
CLIP_SAMPLES = 16_000          # one second at the target rate
N_FFT = 2048
HOP_LENGTH = 512
N_MELS = 32
FMIN_HZ = 0.0
FMAX_HZ = 8000.0
LOG_FLOOR = 1e-6
N_FRAMES = 1 + CLIP_SAMPLES // HOP_LENGTH  # 32 with center padding


class IngestError(Exception):
    """A WAV file could not be turned into a valid clip."""


@dataclass
class AudioClip:
    """Mono waveform, normalized amplitudes, fixed length after ingest."""

    samples: np.ndarray
    sample_rate: int = TARGET_RATE
    source_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("clip samples must be one-dimensional")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("clip contains non-finite samples")


@dataclass
class MelSpectrogram:
    """32x32 log-mel matrix (mel bins x frames)."""

    values: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (N_MELS, N_FRAMES):
            raise ValueError(f"expected {N_MELS}x{N_FRAMES} matrix, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("spectrogram contains non-finite values")

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


@dataclass
class AugmentationConfig:
    """Per-augmentation application probability and parameter ranges."""

    apply_prob: float = 0.5
    amplitude_range: tuple[float, float] = (0.8, 1.2)
    speed_range: tuple[float, float] = (0.8, 1.2)
    shift_range_ms: tuple[float, float] = (-250.0, 250.0)
    snr_range_db: tuple[float, float] = (0.0, 40.0)
    noise_bank: list[AudioClip] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.apply_prob <= 1.0:
            raise ValueError("apply_prob must lie in [0, 1]")
        for name in ("amplitude_range", "speed_range", "shift_range_ms", "snr_range_db"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} must be a non-degenerate (lo, hi) interval")


def _pad_or_crop(x: np.ndarray, length: int) -> np.ndarray:
    """Symmetric zero-pad short signals, center-crop long ones."""
    n = x.shape[0]
    if n == length:
        return x
    if n < length:
        lead = (length - n) // 2
        return np.pad(x, (lead, length - n - lead))
    start = (n - length) // 2
    return x[start:start + length]


def ingest_wav(path, target_rate: int = TARGET_RATE) -> AudioClip:
    """Decode a PCM WAV file into a mono clip of exactly one second.

    Multi-channel audio is averaged, sample rates are converted with a
    polyphase resampler, and the waveform is symmetrically zero-padded or
    center-cropped to `target_rate` samples.
    """
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            n_frames = wf.getnframes()
            raw = wf.readframes(n_frames)
    except (OSError, wave.Error, EOFError) as exc:
        raise IngestError(f"cannot read WAV file {path}: {exc}") from exc

    if n_frames == 0:
        raise IngestError(f"zero-length audio in {path}")

    if width == 1:
        x = (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif width == 2:
        x = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    else:
        raise IngestError(f"unsupported sample width {8 * width} bits in {path}")

    if n_channels > 1:
        x = x.reshape(-1, n_channels).mean(axis=1)

    if rate != target_rate:
        g = math.gcd(int(rate), int(target_rate))
        x = resample_poly(x, target_rate // g, rate // g)

    x = _pad_or_crop(x, target_rate)
    return AudioClip(samples=x, sample_rate=target_rate, source_id=str(path))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(n_mels: int = N_MELS, fmin: float = FMIN_HZ,
                           fmax: float = FMAX_HZ) -> np.ndarray:
    pts = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    return pts[1:-1]


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = N_FFT, rate: int = TARGET_RATE,
                   fmin: float = FMIN_HZ, fmax: float = FMAX_HZ) -> np.ndarray:
    """Triangular mel filters (n_mels x n_fft//2+1), unit peak per filter."""
    pts = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.fft.rfftfreq(n_fft, 1.0 / rate)
    fb = np.zeros((n_mels, freqs.size))
    for i in range(n_mels):
        lo, center, hi = pts[i], pts[i + 1], pts[i + 2]
        rising = (freqs - lo) / (center - lo)
        falling = (hi - freqs) / (hi - center)
        fb[i] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


_FILTERBANK_CACHE: dict[tuple, np.ndarray] = {}


def _cached_filterbank() -> np.ndarray:
    key = (N_MELS, N_FFT, TARGET_RATE, FMIN_HZ, FMAX_HZ)
    if key not in _FILTERBANK_CACHE:
        _FILTERBANK_CACHE[key] = mel_filterbank()
    return _FILTERBANK_CACHE[key]


def mel_spectrogram(clip: AudioClip) -> MelSpectrogram:
    """Log-mel power spectrogram of a one-second 16 kHz clip.

    Hann-windowed STFT (window 2048, hop 512, reflect-padded center frames),
    power spectrum through the 0-8 kHz mel filterbank, log(S + 1e-6).
    """
    if clip.sample_rate != TARGET_RATE or clip.samples.shape[0] != CLIP_SAMPLES:
        raise ValueError("mel_spectrogram expects a 16000-sample clip at 16 kHz")
    x = np.pad(clip.samples, N_FFT // 2, mode="reflect")
    frames = np.lib.stride_tricks.sliding_window_view(x, N_FFT)[::HOP_LENGTH]
    window = get_window("hann", N_FFT, fftbins=True)
    spec = np.abs(np.fft.rfft(frames * window, axis=1)) ** 2
    mel = _cached_filterbank() @ spec.T
    return MelSpectrogram(values=np.log(mel + LOG_FLOOR), source_id=clip.source_id)


def change_amplitude(x: np.ndarray, factor: float) -> np.ndarray:
    return x * factor


def change_speed(x: np.ndarray, factor: float) -> np.ndarray:
    """Resample by linear interpolation; factor > 1 plays faster (shorter)."""
    if factor <= 0:
        raise ValueError("speed factor must be positive")
    n = x.shape[0]
    n_new = max(1, int(round(n / factor)))
    positions = np.arange(n_new) * factor
    return np.interp(positions, np.arange(n), x)


def shift_time(x: np.ndarray, shift_samples: int) -> np.ndarray:
    """Shift right for positive offsets, filling vacated samples with zeros."""
    n = x.shape[0]
    s = int(shift_samples)
    if s == 0 or abs(s) >= n:
        return x.copy() if s == 0 else np.zeros_like(x)
    out = np.zeros_like(x)
    if s > 0:
        out[s:] = x[:-s]
    else:
        out[:s] = x[-s:]
    return out


def add_noise(x: np.ndarray, noise: np.ndarray, snr_db: float) -> np.ndarray:
    """Mix in `noise` rescaled so that 10*log10(P_x / P_noise) == snr_db."""
    p_signal = float(np.mean(x ** 2))
    p_noise = float(np.mean(noise ** 2))
    if p_signal <= 0.0 or p_noise <= 0.0:
        raise ValueError("signal and noise must both have positive power")
    scale = math.sqrt(p_signal / (p_noise * 10.0 ** (snr_db / 10.0)))
    return x + scale * _pad_or_crop(noise, x.shape[0])


def augment_with_trace(clip: AudioClip, cfg: AugmentationConfig,
                       rng_seed: int) -> tuple[AudioClip, list[dict]]:
    """Apply each augmentation independently with probability cfg.apply_prob,
    in the order amplitude, speed, shift, noise. Returns the augmented clip and
    a record of the operations applied with their drawn parameters.

    Deterministic for a given (clip, cfg, rng_seed). Noise is calibrated
    against the signal as it stands after the first three augmentations.
    """
    rng = np.random.default_rng(rng_seed)
    x = clip.samples.copy()
    trace: list[dict] = []

    if rng.random() < cfg.apply_prob:
        u = rng.uniform(*cfg.amplitude_range)
        x = change_amplitude(x, u)
        trace.append({"op": "amplitude", "factor": u})

    if rng.random() < cfg.apply_prob:
        u = rng.uniform(*cfg.speed_range)
        x = _pad_or_crop(change_speed(x, u), CLIP_SAMPLES)
        trace.append({"op": "speed", "factor": u})

    if rng.random() < cfg.apply_prob:
        t_ms = rng.uniform(*cfg.shift_range_ms)
        s = int(round(t_ms * clip.sample_rate / 1000.0))
        x = shift_time(x, s)
        trace.append({"op": "shift", "ms": t_ms, "samples": s})

    if rng.random() < cfg.apply_prob:
        if not cfg.noise_bank:
            warnings.warn("noise augmentation drawn but noise bank is empty; skipping")
        else:
            idx = int(rng.integers(len(cfg.noise_bank)))
            snr = rng.uniform(*cfg.snr_range_db)
            noise = cfg.noise_bank[idx].samples
            if np.mean(x ** 2) <= 0.0 or np.mean(noise ** 2) <= 0.0:
                warnings.warn("zero-power signal or noise; skipping noise augmentation")
            else:
                x = add_noise(x, noise, snr)
                trace.append({"op": "noise", "bank_index": idx, "snr_db": snr})

    return AudioClip(samples=x, sample_rate=clip.sample_rate, source_id=clip.source_id), trace


def augment(clip: AudioClip, cfg: AugmentationConfig, rng_seed: int) -> AudioClip:
    out, _ = augment_with_trace(clip, cfg, rng_seed)
    return out


def write_wav(path, clip: AudioClip) -> None:
    """Write a clip as 16-bit PCM WAV (used by the labeling service)."""
    pcm = np.clip(clip.samples, -1.0, 1.0)
    pcm = (pcm * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate)
        wf.writeframes(pcm.tobytes())


def wav_bytes(clip: AudioClip) -> bytes:
    import io

    buf = io.BytesIO()
    pcm = (np.clip(clip.samples, -1.0, 1.0) * 32767.0).astype("<i2")
    with wave.open(buf, "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate)
        wf.writeframes(pcm.tobytes())
    return buf.getvalue()
