import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bpfusion.errors import InvalidRoot, ShapeMismatch
from bpfusion.geometry import SPEED_OF_LIGHT
from bpfusion.waveform import (OfdmConfig, dft_codebook, freq_steering, remove_sequence,
                               sensing_sequence, time_steering, zadoff_chu_seq)

from conftest import sec6_cfg


def test_config_validation_and_resolution():
    cfg = sec6_cfg()
    assert cfg.wavelength == pytest.approx(SPEED_OF_LIGHT / 30e9)
    # c / (2 K df) and lambda / (2 L Tp), evaluated with mpmath
    assert cfg.range_resolution == pytest.approx(6.24567620833333333, rel=1e-14)
    assert cfg.speed_resolution == pytest.approx(0.0799446554666666667, rel=1e-14)
    with pytest.raises(ValueError):
        OfdmConfig(30e9, 240e3, 0.625e-3, 1, 100)
    with pytest.raises(ValueError):
        OfdmConfig(0, 240e3, 0.625e-3, 10, 10)


def test_zadoff_chu():
    assert zadoff_chu_seq(1, 3)[0] == 1 + 0j
    assert np.allclose(np.abs(zadoff_chu_seq(1, 7)), 1)
    x = zadoff_chu_seq(3, 11)
    # brute-force circular autocorrelation at lag 1
    corr = sum(x[(n + 1) % 11] * np.conj(x[n]) for n in range(11))
    assert abs(corr) < 1e-10
    for root, length in ((2, 4), (3, 9), (0, 7), (7, 7)):
        with pytest.raises(InvalidRoot):
            zadoff_chu_seq(root, length)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([7, 11, 13, 31, 101]), st.data())
def test_zadoff_chu_zero_autocorrelation(length, data):
    root = data.draw(st.integers(1, length - 1))
    x = zadoff_chu_seq(root, length)
    lags = np.fft.ifft(np.abs(np.fft.fft(x)) ** 2)
    assert np.max(np.abs(lags[1:])) < 1e-9 * length


def test_sequence_removal():
    cfg = OfdmConfig(30e9, 240e3, 0.625e-3, 8, 4)
    seq = sensing_sequence(cfg)
    assert seq.values.shape == (8, 4)
    np.testing.assert_allclose(remove_sequence(seq.values, seq), np.ones((8, 4)))
    np.testing.assert_array_equal(remove_sequence(np.zeros((8, 4)), seq), 0)
    psi = 0.3j * np.outer(freq_steering(12.0, cfg), time_steering(1.5, cfg))
    np.testing.assert_allclose(remove_sequence(psi * seq.values, seq), psi, atol=1e-14)
    with pytest.raises(ShapeMismatch):
        remove_sequence(np.zeros((4, 8)), seq)


def test_freq_steering():
    cfg = sec6_cfg()
    np.testing.assert_array_equal(freq_steering(0.0, cfg), np.ones(100))
    null = np.vdot(freq_steering(0.0, cfg), freq_steering(SPEED_OF_LIGHT / (cfg.k * cfg.delta_f), cfg))
    assert abs(null) < 1e-9 * cfg.k
    # -2 pi * 240e3 * 6.25 / c
    assert np.angle(freq_steering(6.25, cfg)[1]) == pytest.approx(-0.0314376753292752, rel=1e-12)


def test_time_steering():
    cfg = sec6_cfg()
    np.testing.assert_array_equal(time_steering(0.0, cfg), np.ones(100))
    v = cfg.wavelength / (cfg.l * cfg.tp)
    assert abs(np.vdot(time_steering(0.0, cfg), time_steering(v, cfg))) < 1e-9 * cfg.l
    assert np.angle(time_steering(0.5, cfg)[1]) > 0


def test_steering_broadcast():
    cfg = sec6_cfg(k=16, l=8)
    d = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = freq_steering(d, cfg)
    assert out.shape == (2, 2, 16)
    np.testing.assert_allclose(out[1, 0], freq_steering(3.0, cfg))


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 500), st.floats(0, 500), st.floats(0, 50), st.floats(0, 2 * np.pi))
def test_steering_shift_and_phase_invariance(d1, d2, shift, phase):
    cfg = sec6_cfg(k=32, l=8)
    a = np.vdot(freq_steering(d1, cfg), freq_steering(d2, cfg))
    b = np.vdot(freq_steering(d1 + shift, cfg), freq_steering(d2 + shift, cfg))
    assert abs(a - b) < 1e-8
    y = freq_steering(d2, cfg)
    assert abs(abs(np.vdot(freq_steering(d1, cfg), y))
               - abs(np.vdot(freq_steering(d1, cfg), y * np.exp(1j * phase)))) < 1e-9


def test_dft_codebook():
    np.testing.assert_allclose(dft_codebook(1, 5), np.ones((1, 5)))
    c = dft_codebook(4, 4)
    np.testing.assert_allclose(c.conj().T @ c, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(dft_codebook(64, 16), axis=0), 1.0)
