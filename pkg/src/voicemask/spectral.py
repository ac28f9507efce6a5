"""Time-frequency analysis and synthesis.

STFT here takes frames fully inside the signal (offsets 0, hop, 2*hop, ...),
so T = 1 + floor((len - frame_len) / hop); signals shorter than one frame are
reflect-padded up to frame_len. The inverse transform is the least-squares
overlap-add inverse (synthesis window with sum-of-squares normalization),
which is what makes the Griffin-Lim consistency error provably non-increasing.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import Waveform

DEFAULT_FRAME_LEN = 1024
DEFAULT_HOP = 256
DEFAULT_LOG_FLOOR = 1e-5
DEFAULT_CEPSTRAL_ORDER = 40

# Overlap positions with window-power coverage below this are synthesized as 0.
_COVERAGE_TINY = 1e-10


@dataclass
class ComplexSpectrogram:
    """Complex STFT frames (T x B) plus the framing metadata."""

    frames: np.ndarray
    frame_len: int
    hop: int
    sample_rate_hz: int
    window: str = "hann"

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.complex128)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValueError("spectrogram frames must be a T x B array with T >= 1")
        if frames.shape[1] != self.frame_len // 2 + 1:
            raise ValueError(
                f"bin count {frames.shape[1]} inconsistent with frame_len {self.frame_len}"
            )
        if not 0 < self.hop <= self.frame_len:
            raise ValueError("hop must satisfy 0 < hop <= frame_len")
        self.frames = frames

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_bins(self) -> int:
        return self.frames.shape[1]


@dataclass
class Spectrogram:
    """Real-valued (magnitude or log-magnitude) frames with framing metadata."""

    frames: np.ndarray
    frame_len: int
    hop: int
    sample_rate_hz: int
    log_scaled: bool = False
    window: str = "hann"

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValueError("spectrogram frames must be a T x B array with T >= 1")
        if not 0 < self.hop <= self.frame_len:
            raise ValueError("hop must satisfy 0 < hop <= frame_len")
        if not self.log_scaled and np.any(frames < 0):
            raise ValueError("magnitude spectrogram entries must be non-negative")
        self.frames = frames

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_bins(self) -> int:
        return self.frames.shape[1]


def hann_window(frame_len: int) -> np.ndarray:
    """Periodic Hann window."""
    n = np.arange(frame_len)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / frame_len)


def _frame_signal(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    if x.size < frame_len:
        pad = frame_len - x.size
        mode = "reflect" if x.size > 1 else "edge"
        x = np.pad(x, (0, pad), mode=mode)
    n_frames = 1 + (x.size - frame_len) // hop
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx]


def stft(w: Waveform, frame_len: int = DEFAULT_FRAME_LEN, hop: int = DEFAULT_HOP) -> ComplexSpectrogram:
    """Short-time Fourier transform with a periodic Hann window.

    frame_len must be a power of two and 0 < hop <= frame_len.
    """
    if frame_len < 2 or frame_len & (frame_len - 1):
        raise ValueError(f"frame_len must be a power of two, got {frame_len}")
    if not 0 < hop <= frame_len:
        raise ValueError(f"hop must satisfy 0 < hop <= frame_len, got {hop}")
    frames = _frame_signal(w.samples, frame_len, hop)
    spec = np.fft.rfft(frames * hann_window(frame_len)[None, :], axis=1)
    return ComplexSpectrogram(spec, frame_len, hop, w.sample_rate_hz)


def istft(cs: ComplexSpectrogram) -> Waveform:
    """Least-squares overlap-add inverse STFT.

    Output length is frame_len + (T - 1) * hop. Sample positions with no
    window coverage (the very first Hann sample) come out as zero.
    """
    frame_len, hop = cs.frame_len, cs.hop
    if cs.window != "hann":
        raise ValueError(f"unknown analysis window {cs.window!r}")
    win = hann_window(frame_len)
    frames = np.fft.irfft(cs.frames, n=frame_len, axis=1)
    n_frames = frames.shape[0]
    length = frame_len + (n_frames - 1) * hop
    num = np.zeros(length)
    den = np.zeros(length)
    weighted = frames * win[None, :]
    for t in range(n_frames):
        start = t * hop
        num[start:start + frame_len] += weighted[t]
        den[start:start + frame_len] += win * win
    out = np.where(den > _COVERAGE_TINY, num / np.maximum(den, _COVERAGE_TINY), 0.0)
    return Waveform(out, cs.sample_rate_hz)


def log_magnitude(cs: ComplexSpectrogram, floor: float = DEFAULT_LOG_FLOOR) -> Spectrogram:
    """Log of the magnitude spectrogram, floored at `floor` before the log."""
    if floor <= 0:
        raise ValueError(f"log floor must be positive, got {floor}")
    mags = np.log(np.maximum(np.abs(cs.frames), floor))
    return Spectrogram(mags, cs.frame_len, cs.hop, cs.sample_rate_hz, log_scaled=True)


def exponentiate(s: Spectrogram) -> Spectrogram:
    """Invert log_magnitude back to linear magnitude."""
    if not s.log_scaled:
        raise ValueError("spectrogram is already linear magnitude")
    return Spectrogram(np.exp(s.frames), s.frame_len, s.hop, s.sample_rate_hz, log_scaled=False)


def mel_filterbank(n_mels: int, n_bins: int, sample_rate_hz: int, fmin: float, fmax: float) -> np.ndarray:
    """Triangular mel filterbank, shape (n_mels, n_bins).

    Every row is non-negative and must keep at least one positive entry;
    configurations too dense for the FFT grid are rejected.
    """
    def to_mel(f):
        return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)

    frame_len = 2 * (n_bins - 1)
    bin_freqs = np.arange(n_bins) * sample_rate_hz / frame_len
    edges = from_mel(np.linspace(to_mel(fmin), to_mel(fmax), n_mels + 2))
    fb = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (bin_freqs - lo) / max(center - lo, 1e-12)
        falling = (hi - bin_freqs) / max(hi - center, 1e-12)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    if np.any(fb.sum(axis=1) <= 0):
        raise ValueError(
            f"mel filterbank with n_mels={n_mels} leaves empty rows on a "
            f"{n_bins}-bin grid; reduce n_mels or widen [fmin, fmax]"
        )
    return fb


def mel_spectrogram(
    cs: ComplexSpectrogram,
    n_mels: int,
    fmin: float,
    fmax: float,
    floor: float = 1e-10,
) -> Spectrogram:
    """Log mel power spectrogram (triangular filterbank over |STFT|^2)."""
    nyquist = cs.sample_rate_hz / 2.0
    if not 0 <= fmin < fmax <= nyquist:
        raise ValueError(f"need 0 <= fmin < fmax <= {nyquist}, got fmin={fmin} fmax={fmax}")
    if n_mels < 1:
        raise ValueError(f"n_mels must be >= 1, got {n_mels}")
    if floor <= 0:
        raise ValueError(f"floor must be positive, got {floor}")
    fb = mel_filterbank(n_mels, cs.n_bins, cs.sample_rate_hz, fmin, fmax)
    power = np.abs(cs.frames) ** 2
    mel = power @ fb.T
    return Spectrogram(
        np.log(np.maximum(mel, floor)), cs.frame_len, cs.hop, cs.sample_rate_hz, log_scaled=True
    )


def griffin_lim(
    mag: Spectrogram,
    iters: int = 60,
    seed: int = 0,
    return_errors: bool = False,
):
    """Recover a waveform from a linear magnitude spectrogram.

    Classic alternating projection: start from seeded random phase, then
    repeat [istft -> stft -> reimpose target magnitude]. The Frobenius
    consistency error ||  |STFT(x_k)| - mag ||_F is non-increasing in k.

    With return_errors=True, also returns the iters+1 consistency errors
    (index 0 is the random-phase baseline).
    """
    if mag.log_scaled:
        raise ValueError("griffin_lim needs linear magnitude; exponentiate log input first")
    if iters < 0:
        raise ValueError(f"iters must be >= 0, got {iters}")
    target = mag.frames
    rng = np.random.default_rng(seed)
    phase = rng.uniform(-np.pi, np.pi, size=target.shape)
    spec = ComplexSpectrogram(
        target * np.exp(1j * phase), mag.frame_len, mag.hop, mag.sample_rate_hz
    )
    x = istft(spec)
    errors = []
    for _ in range(iters):
        analyzed = stft(x, mag.frame_len, mag.hop)
        errors.append(np.linalg.norm(np.abs(analyzed.frames) - target))
        reimposed = target * np.exp(1j * np.angle(analyzed.frames))
        x = istft(ComplexSpectrogram(reimposed, mag.frame_len, mag.hop, mag.sample_rate_hz))
    final = stft(x, mag.frame_len, mag.hop)
    errors.append(np.linalg.norm(np.abs(final.frames) - target))
    if return_errors:
        return x, np.asarray(errors)
    return x


def spectral_envelope(frame_spectrum: np.ndarray, cepstral_order: int = DEFAULT_CEPSTRAL_ORDER) -> np.ndarray:
    """Smooth spectral envelope of one magnitude frame via cepstral liftering.

    Keeps quefrencies 0..cepstral_order of the real cepstrum of the log
    spectrum and exponentiates back; the result is strictly positive and has
    at most cepstral_order oscillations across the band.
    """
    spectrum = np.asarray(frame_spectrum, dtype=np.float64)
    if spectrum.ndim != 1 or spectrum.size == 0:
        raise ValueError("frame_spectrum must be a non-empty 1-D magnitude array")
    if cepstral_order < 1:
        raise ValueError(f"cepstral_order must be >= 1, got {cepstral_order}")
    n_fft = 2 * (spectrum.size - 1) if spectrum.size > 1 else 2
    log_spec = np.log(np.maximum(spectrum, 1e-10))
    cep = np.fft.irfft(log_spec, n=n_fft)
    lifter = np.zeros(n_fft)
    keep = min(cepstral_order, n_fft // 2)
    lifter[: keep + 1] = 1.0
    lifter[n_fft - keep:] = 1.0
    smooth = np.fft.rfft(cep * lifter).real[: spectrum.size]
    return np.exp(smooth)


_SPEC_MAGIC = b"VMSG"
_SPEC_VERSION = 1


def save_spectrogram(s: Spectrogram, path: str | Path) -> None:
    """Write a spectrogram as the flat binary container (float32 payload)."""
    header = struct.pack(
        "<4sHIIIIIB",
        _SPEC_MAGIC,
        _SPEC_VERSION,
        s.n_frames,
        s.n_bins,
        s.frame_len,
        s.hop,
        s.sample_rate_hz,
        1 if s.log_scaled else 0,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(s.frames.astype("<f4").tobytes())


def load_spectrogram(path: str | Path) -> Spectrogram:
    """Read a spectrogram container written by save_spectrogram."""
    with open(path, "rb") as fh:
        header = fh.read(struct.calcsize("<4sHIIIIIB"))
        magic, version, t, b, frame_len, hop, rate, log_flag = struct.unpack("<4sHIIIIIB", header)
        if magic != _SPEC_MAGIC:
            raise ValueError(f"{path}: not a spectrogram container")
        if version != _SPEC_VERSION:
            raise ValueError(f"{path}: unsupported container version {version}")
        data = np.frombuffer(fh.read(4 * t * b), dtype="<f4")
    if data.size != t * b:
        raise ValueError(f"{path}: truncated spectrogram payload")
    return Spectrogram(
        data.reshape(t, b).astype(np.float64), frame_len, hop, rate, log_scaled=bool(log_flag)
    )
