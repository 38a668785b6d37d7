import struct

import numpy as np
import pytest

from vocalexpr.dsp import AudioBuffer, FrameSpec, frame_power_spectrum, load_wav, write_wav
from vocalexpr.errors import AudioTooShortError, NotWavError, TruncatedFileError, UnsupportedEncodingError


def _raw_wav(path, samples, rate=16000, channels=1, bits=16, fmt=1):
    data = np.asarray(samples, dtype="<i2").tobytes()
    block = channels * bits // 8
    fmt_chunk = struct.pack("<HHIIHH", fmt, channels, rate, rate * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", 16) + fmt_chunk + b"data" + struct.pack("<I", len(data)) + data
    path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
    return path


def test_load_scales_int16_endpoints(tmp_path):
    a = load_wav(_raw_wav(tmp_path / "a.wav", [0, -32768]))
    assert a.samples.tolist() == [0.0, -1.0]
    b = load_wav(_raw_wav(tmp_path / "b.wav", [16384]))
    assert b.samples.tolist() == [0.5]


def test_load_rejects_wrong_rate_and_stereo(tmp_path):
    with pytest.raises(UnsupportedEncodingError):
        load_wav(_raw_wav(tmp_path / "8k.wav", [0, 1, 2], rate=8000))
    with pytest.raises(UnsupportedEncodingError):
        load_wav(_raw_wav(tmp_path / "st.wav", [0, 1, 2, 3], channels=2))


def test_load_rejects_non_wav_and_truncated(tmp_path):
    p = tmp_path / "x.wav"
    p.write_bytes(b"not a wav file at all")
    with pytest.raises(NotWavError):
        load_wav(p)
    good = _raw_wav(tmp_path / "t.wav", np.arange(100))
    good.write_bytes(good.read_bytes()[:-40])
    with pytest.raises(TruncatedFileError):
        load_wav(good)


def test_write_then_load_roundtrip(tmp_path):
    x = np.round(np.random.default_rng(0).uniform(-0.9, 0.9, 1000) * 32767) / 32768
    write_wav(tmp_path / "r.wav", AudioBuffer(x))
    assert np.array_equal(load_wav(tmp_path / "r.wav").samples, x)


def test_frame_count_formula():
    spec = FrameSpec()
    assert (spec.window_length(), spec.hop_length()) == (400, 160)
    assert frame_power_spectrum(AudioBuffer(np.zeros(640)), spec).n_frames == 2


def test_zero_audio_gives_zero_power():
    ps = frame_power_spectrum(AudioBuffer(np.zeros(400)))
    assert ps.frames.shape == (1, 257)
    assert not ps.frames.any()


def test_too_short_audio():
    with pytest.raises(AudioTooShortError):
        frame_power_spectrum(AudioBuffer(np.zeros(399)))


def test_sinusoid_peak_matches_direct_dft():
    t = np.arange(16000) / 16000
    ps = frame_power_spectrum(AudioBuffer(np.sin(2 * np.pi * 1000 * t)))
    peak = int(np.argmax(ps.frames.mean(axis=0)))
    assert abs(peak - round(1000 * 512 / 16000)) <= 1

    # one frame against a hand-written DFT of the pre-emphasised, windowed frame
    frame = np.sin(2 * np.pi * 1000 * t[:400])
    frame = np.concatenate([[frame[0]], frame[1:] - 0.97 * frame[:-1]]) * np.hamming(400)
    k = np.arange(257)[:, None]
    n = np.arange(400)[None, :]
    direct = np.abs((frame * np.exp(-2j * np.pi * k * n / 512)).sum(axis=1)) ** 2
    assert np.allclose(ps.frames[0], direct, rtol=1e-9, atol=1e-9)
