"""WAV input/output and waveform-level perturbations.

Audio is kept as mono float arrays in [-1, 1]. The toolkit's canonical
internal rate is 16 kHz; files at other rates are resampled on ingest.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import wave
from scipy.signal import resample_poly

CANONICAL_RATE_HZ = 16_000

# 16-bit PCM full scale used for both read normalization and write quantization.
_PCM_SCALE = 32768.0


class WavFormatError(ValueError):
    """File is not a well-formed RIFF/PCM WAV container."""


class WavEncodingError(WavFormatError):
    """WAV file uses an encoding other than 16-bit PCM mono/stereo."""


@dataclass
class Waveform:
    """Mono audio samples at a fixed sample rate.

    Samples are finite reals, nominally in [-1, 1]; values outside that
    range are permitted in memory and clipped on write.
    """

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size < 1:
            raise ValueError("waveform must be a non-empty 1-D sample sequence")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform samples must be finite")
        rate = int(self.sample_rate_hz)
        if rate <= 0:
            raise ValueError("sample_rate_hz must be positive")
        self.samples = samples
        self.sample_rate_hz = rate

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def copy(self) -> "Waveform":
        return Waveform(self.samples.copy(), self.sample_rate_hz)


def read_wav(path: str | Path) -> Waveform:
    """Read a 16-bit PCM WAV file as a mono waveform in [-1, 1].

    Stereo files are averaged to mono. Raises FileNotFoundError for a
    missing file, WavFormatError for a malformed container, and
    WavEncodingError for unsupported encodings (not 16-bit PCM, or more
    than two channels).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such audio file: {path}")
    try:
        with wave.open(str(path), "rb") as fh:
            n_channels = fh.getnchannels()
            sampwidth = fh.getsampwidth()
            comptype = fh.getcomptype()
            rate = fh.getframerate()
            n_frames = fh.getnframes()
            raw = fh.readframes(n_frames)
    except wave.Error as exc:
        raise WavFormatError(f"malformed WAV file {path}: {exc}") from exc
    except EOFError as exc:
        raise WavFormatError(f"truncated WAV file {path}") from exc
    if comptype != "NONE" or sampwidth != 2:
        raise WavEncodingError(
            f"{path}: only 16-bit PCM is supported "
            f"(got sampwidth={sampwidth}, comptype={comptype!r})"
        )
    if n_channels not in (1, 2):
        raise WavEncodingError(f"{path}: expected mono or stereo, got {n_channels} channels")
    if n_frames < 1:
        raise WavFormatError(f"{path}: file contains no samples")
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64)
    if n_channels == 2:
        data = data.reshape(-1, 2).mean(axis=1)
    return Waveform(data / _PCM_SCALE, rate)


def write_wav(w: Waveform, path: str | Path) -> None:
    """Write a waveform as 16-bit PCM mono WAV at the waveform's rate.

    Samples are clipped to [-1, 1] before quantization, so a read-back
    matches the (clipped) input within one quantization step (1/32768).
    """
    path = Path(path)
    clipped = np.clip(w.samples, -1.0, 1.0)
    quantized = np.clip(np.rint(clipped * _PCM_SCALE), -32768, 32767).astype("<i2")
    try:
        with wave.open(str(path), "wb") as fh:
            fh.setnchannels(1)
            fh.setsampwidth(2)
            fh.setframerate(w.sample_rate_hz)
            fh.writeframes(quantized.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write WAV file {path}: {exc}") from exc


def add_gaussian_noise(w: Waveform, std: float, seed: int) -> Waveform:
    """Add i.i.d. Gaussian noise at the waveform level, then clip to [-1, 1].

    Deterministic for a fixed seed; std=0 returns the input samples
    unchanged (bitwise).
    """
    if std < 0:
        raise ValueError(f"noise std must be non-negative, got {std}")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, std, size=w.samples.size)
    return Waveform(np.clip(w.samples + noise, -1.0, 1.0), w.sample_rate_hz)


def resample(w: Waveform, new_rate_hz: int) -> Waveform:
    """Band-limited polyphase resampling to a new rate."""
    new_rate_hz = int(new_rate_hz)
    if new_rate_hz <= 0:
        raise ValueError(f"new_rate_hz must be positive, got {new_rate_hz}")
    if new_rate_hz == w.sample_rate_hz:
        return w.copy()
    g = np.gcd(new_rate_hz, w.sample_rate_hz)
    out = resample_poly(w.samples, new_rate_hz // g, w.sample_rate_hz // g)
    return Waveform(out, new_rate_hz)
