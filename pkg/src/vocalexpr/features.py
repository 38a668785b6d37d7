"""Cepstral, modulation and pitch feature streams.

All cepstral extractors share the same framing, so on identical audio they
produce identical frame counts and can be concatenated column-wise.
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .dsp import AudioBuffer, FrameSpec, PowerSpectrogram, frame_power_spectrum, frame_signal
from .errors import (
    AudioTooShortError,
    BadFeatureFileError,
    BadFilterbankError,
    FrameCountMismatchError,
    TooFewFramesError,
    WrongKindError,
)

LOG_FLOOR = 1e-10
N_CEPS = 20
NMCC_POWER = 1.0 / 15.0
VOICING_THRESHOLD = 0.3
LAG_PENALTY = 0.1  # peak picking favours short lags by up to this much (octave-error guard)
F0_MIN_HZ = 60.0
F0_MAX_HZ = 400.0
DELTA_WINDOW = 2
CMVN_VAR_FLOOR = 1e-8


class FeatureKind(enum.Enum):
    # value = (file code, width); width None means free
    MFCC20 = (1, 20)
    GCC20 = (2, 20)
    NMCC20 = (3, 20)
    F0V3 = (4, 3)
    MFCC39 = (5, 39)
    CONCAT23 = (6, 23)
    SPLICED429 = (7, 429)
    TV8 = (8, 8)
    CUSTOM = (9, None)
    MFCC13 = (10, 13)

    @property
    def code(self) -> int:
        return self.value[0]

    @property
    def width(self) -> int | None:
        return self.value[1]

    @classmethod
    def from_code(cls, code: int) -> "FeatureKind":
        for kind in cls:
            if kind.code == code:
                return kind
        raise BadFeatureFileError(f"unknown feature kind code {code}")


@dataclass
class FeatureMatrix:
    data: np.ndarray
    kind: FeatureKind = FeatureKind.CUSTOM
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("feature data must be a 2-D frames x dims matrix")
        width = self.kind.width
        if width is not None and self.data.shape[1] != width:
            raise WrongKindError(f"{self.kind.name} needs {width} columns, got {self.data.shape[1]}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError(f"non-finite values in {self.kind.name} features")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class FilterbankSpec:
    kind: str = "mel"  # "mel" (triangular) or "gammatone" (ERB-spaced)
    n_filters: int = 40
    f_lo_hz: float = 50.0
    f_hi_hz: float = 7600.0

    def check(self, sample_rate: int, n_ceps: int = N_CEPS) -> None:
        if self.kind not in ("mel", "gammatone"):
            raise BadFilterbankError(f"unknown filterbank kind {self.kind!r}")
        if self.n_filters < n_ceps:
            raise BadFilterbankError(f"{self.n_filters} filters cannot yield {n_ceps} cepstra")
        if not 0 <= self.f_lo_hz < self.f_hi_hz <= sample_rate / 2:
            raise BadFilterbankError("need 0 <= f_lo < f_hi <= Nyquist")


MEL = FilterbankSpec("mel")
GAMMATONE = FilterbankSpec("gammatone")


# -- filterbanks --------------------------------------------------------------

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def erb_bandwidth(f):
    """Glasberg & Moore equivalent rectangular bandwidth in Hz."""
    return 24.7 * (4.37 * np.asarray(f, dtype=np.float64) / 1000.0 + 1.0)


def hz_to_erb_rate(f):
    return 21.4 * np.log10(1.0 + 0.00437 * np.asarray(f, dtype=np.float64))


def erb_rate_to_hz(e):
    return (10.0 ** (np.asarray(e, dtype=np.float64) / 21.4) - 1.0) / 0.00437


def erb_center_frequencies(n: int, f_lo: float, f_hi: float) -> np.ndarray:
    """n centre frequencies equally spaced on the ERB-rate scale, endpoints included."""
    return erb_rate_to_hz(np.linspace(hz_to_erb_rate(f_lo), hz_to_erb_rate(f_hi), n))


@lru_cache(maxsize=16)
def mel_filterbank(n_filters: int, fft_size: int, sample_rate: int, f_lo: float, f_hi: float) -> np.ndarray:
    """Triangular filters (n_filters x fft_size/2+1), unit peak, evaluated at bin frequencies."""
    edges = mel_to_hz(np.linspace(hz_to_mel(f_lo), hz_to_mel(f_hi), n_filters + 2))
    freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    w = np.maximum(0.0, np.minimum(rising, falling))
    w.flags.writeable = False
    return w


@lru_cache(maxsize=16)
def gammatone_weights(n_filters: int, fft_size: int, sample_rate: int, f_lo: float, f_hi: float) -> np.ndarray:
    """Squared magnitude responses of 4th-order gammatone filters at the FFT bins.

    Uses |H(f)|^2 = (1 + ((f - fc) / b)^2)^-4 with b = 1.019 * ERB(fc).
    """
    fc = erb_center_frequencies(n_filters, f_lo, f_hi)[:, None]
    b = 1.019 * erb_bandwidth(fc)
    freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    w = (1.0 + ((freqs - fc) / b) ** 2) ** -4
    w.flags.writeable = False
    return w


@lru_cache(maxsize=8)
def dct_matrix(n_in: int, n_out: int | None = None) -> np.ndarray:
    """First n_out rows of the orthonormal DCT-II matrix of size n_in."""
    n_out = n_in if n_out is None else n_out
    k = np.arange(n_out)[:, None]
    n = np.arange(n_in)[None, :]
    d = np.sqrt(2.0 / n_in) * np.cos(np.pi * k * (2 * n + 1) / (2 * n_in))
    d[0] /= np.sqrt(2.0)
    d.flags.writeable = False
    return d


def _bank_for(fb: FilterbankSpec, ps: PowerSpectrogram) -> np.ndarray:
    args = (fb.n_filters, ps.spec.fft_size, ps.sample_rate_hz, float(fb.f_lo_hz), float(fb.f_hi_hz))
    return mel_filterbank(*args) if fb.kind == "mel" else gammatone_weights(*args)


def _log_cepstra(energies: np.ndarray, n_ceps: int) -> np.ndarray:
    logs = np.log(np.maximum(energies, LOG_FLOOR))
    return logs @ dct_matrix(energies.shape[1], n_ceps).T


# -- cepstral streams ---------------------------------------------------------

def mfcc(ps: PowerSpectrogram, fb: FilterbankSpec = MEL, n_ceps: int = N_CEPS) -> FeatureMatrix:
    """Mel cepstra c0..c{n_ceps-1} (c0 included). n_ceps=13 gives the static part of MFCC39."""
    if fb.kind != "mel":
        raise BadFilterbankError("mfcc needs a mel filterbank")
    fb.check(ps.sample_rate_hz, n_ceps)
    ceps = _log_cepstra(ps.frames @ _bank_for(fb, ps).T, n_ceps)
    kind = {20: FeatureKind.MFCC20, 13: FeatureKind.MFCC13}.get(n_ceps, FeatureKind.CUSTOM)
    return FeatureMatrix(ceps, kind, {"extractor": "mfcc", "n_filters": fb.n_filters, "n_ceps": n_ceps})


def gcc(ps: PowerSpectrogram, fb: FilterbankSpec = GAMMATONE) -> FeatureMatrix:
    if fb.kind != "gammatone":
        raise BadFilterbankError("gcc needs a gammatone filterbank")
    fb.check(ps.sample_rate_hz)
    ceps = _log_cepstra(ps.frames @ _bank_for(fb, ps).T, N_CEPS)
    return FeatureMatrix(ceps, FeatureKind.GCC20, {"extractor": "gcc", "n_filters": fb.n_filters})


def gammatone_fir(fc: float, sample_rate: int) -> np.ndarray:
    """4th-order gammatone impulse response with unit gain at fc."""
    b = 1.019 * float(erb_bandwidth(fc))
    n_taps = int(np.ceil(20.0 / (2 * np.pi * b) * sample_rate))
    t = np.arange(n_taps) / sample_rate
    g = t**3 * np.exp(-2 * np.pi * b * t) * np.cos(2 * np.pi * fc * t)
    gain = np.abs(np.sum(g * np.exp(-2j * np.pi * fc * t)))
    return g / gain


def teager(x: np.ndarray) -> np.ndarray:
    """Teager energy x[n]^2 - x[n-1] x[n+1]; edge samples replicate their neighbours."""
    psi = np.empty_like(x)
    psi[1:-1] = x[1:-1] ** 2 - x[:-2] * x[2:]
    psi[0], psi[-1] = psi[1], psi[-2]
    return psi


def desa_envelope(x: np.ndarray, omega_lo: float, omega_hi: float) -> np.ndarray:
    """Amplitude envelope by DESA-1 energy separation.

    The instantaneous frequency estimate is clamped to [omega_lo, omega_hi]
    (radians/sample) so the 1/sin^2 correction stays bounded; negative Teager
    energies are clamped to zero.
    """
    psi_x = np.maximum(teager(x), 0.0)
    y = np.empty_like(x)
    y[0] = x[0]
    y[1:] = x[1:] - x[:-1]
    psi_y = teager(y)
    psi_y_next = np.append(psi_y[1:], psi_y[-1])
    active = psi_x > 1e-20
    ratio = np.zeros_like(x)
    np.divide(psi_y + psi_y_next, 4.0 * psi_x, out=ratio, where=active)
    cos_omega = np.clip(1.0 - ratio, np.cos(omega_hi), np.cos(omega_lo))
    sin2 = 1.0 - cos_omega**2
    return np.sqrt(psi_x / sin2)


def nmcc(audio: AudioBuffer, fb: FilterbankSpec = GAMMATONE, spec: FrameSpec | None = None) -> FeatureMatrix:
    """Modulation cepstra: gammatone bands -> DESA envelopes -> frame power -> ^(1/15) -> DCT."""
    spec = spec or FrameSpec()
    if fb.kind != "gammatone":
        raise BadFilterbankError("nmcc needs a gammatone filterbank")
    sr = audio.sample_rate_hz
    fb.check(sr)
    win, hop = spec.window_length(sr), spec.hop_length(sr)
    if len(audio) < win:
        raise AudioTooShortError(f"{len(audio)} samples < window of {win}")

    x = audio.samples
    n_frames = spec.n_frames(x.size, sr)
    centres = erb_center_frequencies(fb.n_filters, fb.f_lo_hz, fb.f_hi_hz)
    band_power = np.empty((n_frames, fb.n_filters))
    for j, fc in enumerate(centres):
        bw = 1.019 * float(erb_bandwidth(fc))
        band = fftconvolve(x, gammatone_fir(fc, sr))[: x.size]
        lo = 2 * np.pi * max(fc - 2 * bw, fc / 2) / sr
        hi = 2 * np.pi * min(fc + 2 * bw, 0.49 * sr) / sr
        env = desa_envelope(band, lo, hi)
        band_power[:, j] = frame_signal(env**2, win, hop).mean(axis=1)
    compressed = np.maximum(band_power, 0.0) ** NMCC_POWER
    ceps = compressed @ dct_matrix(fb.n_filters, N_CEPS).T
    return FeatureMatrix(
        ceps, FeatureKind.NMCC20,
        {"extractor": "nmcc", "n_filters": fb.n_filters, "compression": "power 1/15"},
    )


# -- pitch --------------------------------------------------------------------

def _interpolate_unvoiced(f0: np.ndarray, voiced: np.ndarray) -> np.ndarray:
    if not voiced.any():
        return np.zeros_like(f0)
    idx = np.flatnonzero(voiced)
    return np.interp(np.arange(f0.size), idx, f0[idx])


def f0v(audio: AudioBuffer, spec: FrameSpec | None = None) -> FeatureMatrix:
    """Pitch, pitch delta and voicing per frame from normalised cross-correlation.

    Each frame of the analysis window is correlated against the signal
    starting lag samples later (lags covering 60-400 Hz). Voicing is the peak
    correlation clamped to [0, 1]. The pitch lag is the peak of the correlation
    after a mild linear down-weighting of long lags, which suppresses
    period-doubling errors. Frames below the voicing threshold get f0 linearly
    interpolated from voiced neighbours.
    """
    spec = spec or FrameSpec()
    sr = audio.sample_rate_hz
    win, hop = spec.window_length(sr), spec.hop_length(sr)
    x = audio.samples
    if x.size < win:
        raise AudioTooShortError(f"{x.size} samples < window of {win}")

    min_lag = int(np.ceil(sr / F0_MAX_HZ))
    max_lag = int(np.floor(sr / F0_MIN_HZ))
    seg_len = win + max_lag
    padded = np.concatenate([x, np.zeros(seg_len)])
    n_frames = spec.n_frames(x.size, sr)
    segs = frame_signal(padded, seg_len, hop)[:n_frames]
    heads = segs[:, :win]

    n_fft = 1 << int(np.ceil(np.log2(seg_len + win)))
    xcorr = np.fft.irfft(
        np.conj(np.fft.rfft(heads, n_fft, axis=1)) * np.fft.rfft(segs, n_fft, axis=1), n_fft, axis=1
    )
    lags = np.arange(min_lag, max_lag + 1)
    num = xcorr[:, lags]

    csum = np.concatenate([np.zeros((n_frames, 1)), np.cumsum(segs**2, axis=1)], axis=1)
    e_head = csum[:, win]
    e_lag = csum[:, lags + win] - csum[:, lags]
    denom = np.sqrt(e_head[:, None] * e_lag)
    ncc = np.zeros_like(num)
    np.divide(num, denom, out=ncc, where=denom > 1e-12)

    weight = 1.0 - LAG_PENALTY * (lags - min_lag) / (max_lag - min_lag)
    best = np.argmax(ncc * weight, axis=1)
    voicing = np.clip(ncc.max(axis=1), 0.0, 1.0)
    raw_f0 = sr / lags[best]
    f0 = _interpolate_unvoiced(raw_f0, voicing >= VOICING_THRESHOLD)
    delta = np.gradient(f0) if n_frames > 1 else np.zeros(1)
    meta = {
        "extractor": "f0v", "voicing_threshold": VOICING_THRESHOLD,
        "f0_range_hz": [F0_MIN_HZ, F0_MAX_HZ], "unvoiced": "linear interpolation",
        "lag_penalty": LAG_PENALTY,
    }
    return FeatureMatrix(np.column_stack([f0, delta, voicing]), FeatureKind.F0V3, meta)


# -- stream manipulation ------------------------------------------------------

def concat(a: FeatureMatrix, b: FeatureMatrix) -> FeatureMatrix:
    if a.n_frames != b.n_frames:
        raise FrameCountMismatchError(f"{a.n_frames} vs {b.n_frames} frames")
    if b.dim == 0:
        return a
    if a.dim == 0:
        return b
    data = np.hstack([a.data, b.data])
    kind = FeatureKind.CONCAT23 if (a.dim, b.dim) == (20, 3) else FeatureKind.CUSTOM
    parts = a.meta.get("parts", [a.kind.name]) + b.meta.get("parts", [b.kind.name])
    return FeatureMatrix(data, kind, {"parts": parts})


def _regression_delta(x: np.ndarray, n: int = DELTA_WINDOW) -> np.ndarray:
    padded = np.pad(x, ((n, n), (0, 0)), mode="edge")
    T = x.shape[0]
    num = sum(k * (padded[n + k : n + k + T] - padded[n - k : n - k + T]) for k in range(1, n + 1))
    return num / (2 * sum(k * k for k in range(1, n + 1)))


def add_deltas(f: FeatureMatrix) -> FeatureMatrix:
    """13 static cepstra -> [static, delta, delta-delta] (39 columns)."""
    if f.kind is not FeatureKind.MFCC13:
        raise WrongKindError(f"add_deltas expects MFCC13, got {f.kind.name}")
    d1 = _regression_delta(f.data)
    d2 = _regression_delta(d1)
    return FeatureMatrix(np.hstack([f.data, d1, d2]), FeatureKind.MFCC39, {**f.meta, "deltas": DELTA_WINDOW})


def mfcc39(audio: AudioBuffer, spec: FrameSpec | None = None) -> FeatureMatrix:
    return add_deltas(mfcc(frame_power_spectrum(audio, spec), MEL, n_ceps=13))


def splice(f: FeatureMatrix, context: int) -> FeatureMatrix:
    """Stack frames t-context..t+context into one row, repeating boundary frames."""
    if context < 0:
        raise ValueError("context must be >= 0")
    if context == 0:
        return f
    T = f.n_frames
    idx = np.clip(np.arange(T)[:, None] + np.arange(-context, context + 1)[None, :], 0, T - 1)
    data = f.data[idx].reshape(T, -1)
    kind = FeatureKind.SPLICED429 if data.shape[1] == 429 else FeatureKind.CUSTOM
    return FeatureMatrix(data, kind, {**f.meta, "splice_context": context})


def cmvn(f: FeatureMatrix) -> FeatureMatrix:
    """Per-utterance mean/variance normalisation; near-constant columns are only centred."""
    if f.n_frames < 2:
        raise TooFewFramesError("cmvn needs at least 2 frames")
    mean = f.data.mean(axis=0)
    var = f.data.var(axis=0)
    scale = np.where(var > CMVN_VAR_FLOOR, np.sqrt(np.maximum(var, CMVN_VAR_FLOOR)), 1.0)
    return FeatureMatrix((f.data - mean) / scale, f.kind, {**f.meta, "cmvn": "utterance"})


# -- named extraction recipes ---------------------------------------------------

BASE_STREAMS = ("mfcc", "gcc", "nmcc", "f0v", "mfcc39")


def extract(audio: AudioBuffer, name: str, spec: FrameSpec | None = None) -> FeatureMatrix:
    """One of the base streams by name."""
    if name == "mfcc":
        return mfcc(frame_power_spectrum(audio, spec), MEL)
    if name == "gcc":
        return gcc(frame_power_spectrum(audio, spec), GAMMATONE)
    if name == "nmcc":
        return nmcc(audio, GAMMATONE, spec)
    if name == "f0v":
        return f0v(audio, spec)
    if name == "mfcc39":
        return mfcc39(audio, spec)
    raise ValueError(f"unknown feature stream {name!r}")


# -- FEAT file format ---------------------------------------------------------

FEAT_MAGIC = b"FEAT"
FEAT_VERSION = 1


def write_feat(path, f: FeatureMatrix) -> None:
    rows, cols = f.data.shape
    meta = json.dumps(f.meta, sort_keys=True).encode("utf-8")
    payload = b"".join([
        FEAT_MAGIC,
        struct.pack("<BBII", FEAT_VERSION, f.kind.code, rows, cols),
        f.data.astype("<f4").tobytes(),
        struct.pack("<I", len(meta)),
        meta,
    ])
    Path(path).write_bytes(payload)


def read_feat(path) -> FeatureMatrix:
    raw = Path(path).read_bytes()
    if raw[:4] != FEAT_MAGIC:
        raise BadFeatureFileError(f"{path}: bad magic")
    if len(raw) < 14:
        raise BadFeatureFileError(f"{path}: truncated header")
    version, code, rows, cols = struct.unpack_from("<BBII", raw, 4)
    if version != FEAT_VERSION:
        raise BadFeatureFileError(f"{path}: unsupported version {version}")
    start = 14
    end = start + 4 * rows * cols
    if len(raw) < end + 4:
        raise BadFeatureFileError(f"{path}: truncated data")
    data = np.frombuffer(raw[start:end], dtype="<f4").reshape(rows, cols).astype(np.float64)
    (meta_len,) = struct.unpack_from("<I", raw, end)
    meta = json.loads(raw[end + 4 : end + 4 + meta_len].decode("utf-8")) if meta_len else {}
    return FeatureMatrix(data, FeatureKind.from_code(code), meta)
