"""Audio ingestion and short-time power spectra."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    AudioTooShortError,
    NotWavError,
    TruncatedFileError,
    UnsupportedEncodingError,
)

SAMPLE_RATE = 16000


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1 or x.size == 0:
            raise ValueError("audio must be a non-empty 1-D array")
        if not np.all(np.isfinite(x)):
            raise ValueError("audio contains non-finite samples")
        object.__setattr__(self, "samples", x)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class FrameSpec:
    window_ms: float = 25.0
    hop_ms: float = 10.0
    window_kind: str = "hamming"
    preemphasis: float = 0.97
    fft_size: int = 512

    def __post_init__(self):
        if self.hop_ms <= 0 or self.hop_ms > self.window_ms:
            raise ValueError("need 0 < hop_ms <= window_ms")
        if not 0.0 <= self.preemphasis < 1.0:
            raise ValueError("preemphasis must lie in [0, 1)")
        if self.fft_size < 1 or self.fft_size & (self.fft_size - 1):
            raise ValueError("fft_size must be a power of two")
        if self.window_kind != "hamming":
            raise ValueError(f"unsupported window {self.window_kind!r}")

    def window_length(self, sample_rate: int = SAMPLE_RATE) -> int:
        return int(round(self.window_ms * sample_rate / 1000.0))

    def hop_length(self, sample_rate: int = SAMPLE_RATE) -> int:
        return int(round(self.hop_ms * sample_rate / 1000.0))

    def n_frames(self, n_samples: int, sample_rate: int = SAMPLE_RATE) -> int:
        win = self.window_length(sample_rate)
        if n_samples < win:
            return 0
        return (n_samples - win) // self.hop_length(sample_rate) + 1

    def check(self, sample_rate: int = SAMPLE_RATE) -> None:
        if self.fft_size < self.window_length(sample_rate):
            raise ValueError("fft_size shorter than the analysis window")


@dataclass
class PowerSpectrogram:
    frames: np.ndarray  # T x (fft_size/2 + 1)
    spec: FrameSpec = field(default_factory=FrameSpec)
    sample_rate_hz: int = SAMPLE_RATE

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.frames.shape[1]) * self.sample_rate_hz / self.spec.fft_size


def _read_chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + size]
        yield cid, size, body
        pos += 8 + size + (size & 1)


def load_wav(path) -> AudioBuffer:
    """Read a 16-bit PCM mono 16 kHz RIFF/WAVE file.

    Anything else is rejected; resampling and downmixing are the caller's job.
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise NotWavError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    pcm = None
    for cid, size, body in _read_chunks(data):
        if cid == b"fmt ":
            if len(body) < 16:
                raise TruncatedFileError(f"{path}: short fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            if len(body) < size:
                raise TruncatedFileError(f"{path}: data chunk declares {size} bytes, has {len(body)}")
            pcm = body
            break
    if fmt is None:
        raise NotWavError(f"{path}: missing fmt chunk")
    if pcm is None:
        raise TruncatedFileError(f"{path}: missing data chunk")

    tag, channels, rate, _, _, bits = fmt
    if tag != 1 or bits != 16:
        raise UnsupportedEncodingError(f"{path}: need 16-bit PCM (format {tag}, {bits} bits)")
    if channels != 1:
        raise UnsupportedEncodingError(f"{path}: need mono, got {channels} channels")
    if rate != SAMPLE_RATE:
        raise UnsupportedEncodingError(f"{path}: need {SAMPLE_RATE} Hz, got {rate} Hz; resample first")
    if len(pcm) % 2:
        raise TruncatedFileError(f"{path}: odd data length")
    if not pcm:
        raise TruncatedFileError(f"{path}: empty data chunk")

    samples = np.frombuffer(pcm, dtype="<i2").astype(np.float64) / 32768.0
    return AudioBuffer(samples, rate)


def write_wav(path, audio: AudioBuffer | np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    """Write 16-bit PCM mono. Float input is clipped to [-1, 1) and scaled by 32768."""
    if isinstance(audio, AudioBuffer):
        x, sample_rate = audio.samples, audio.sample_rate_hz
    else:
        x = np.asarray(audio)
    if x.dtype.kind == "f":
        pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    else:
        pcm = x.astype("<i2")
    body = pcm.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(body), b"WAVE",
        b"fmt ", 16, 1, 1, sample_rate, sample_rate * 2, 2, 16,
        b"data", len(body),
    )
    Path(path).write_bytes(header + body)


def preemphasize(x: np.ndarray, coeff: float) -> np.ndarray:
    y = np.array(x, dtype=np.float64, copy=True)
    if coeff > 0 and y.size > 1:
        y[1:] -= coeff * x[:-1]
    return y


def frame_signal(x: np.ndarray, win: int, hop: int) -> np.ndarray:
    """Strided (n_frames, win) view; trailing samples that do not fill a frame are dropped."""
    n = (x.size - win) // hop + 1
    return np.lib.stride_tricks.as_strided(
        x, shape=(n, win), strides=(hop * x.strides[0], x.strides[0]), writeable=False
    )


def frame_power_spectrum(audio: AudioBuffer, spec: FrameSpec | None = None) -> PowerSpectrogram:
    spec = spec or FrameSpec()
    sr = audio.sample_rate_hz
    spec.check(sr)
    win = spec.window_length(sr)
    hop = spec.hop_length(sr)
    if len(audio) < win:
        raise AudioTooShortError(f"{len(audio)} samples < window of {win}")

    # Pre-emphasis is applied per frame so that a shift by one hop shifts frames exactly.
    frames = frame_signal(audio.samples, win, hop)
    emph = frames.copy()
    emph[:, 1:] -= spec.preemphasis * frames[:, :-1]
    windowed = emph * np.hamming(win)
    spectrum = np.fft.rfft(windowed, n=spec.fft_size, axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    return PowerSpectrogram(power, spec, sr)
