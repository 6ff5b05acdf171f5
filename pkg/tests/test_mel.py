import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sonoforge import dsp, mel
from sonoforge.audio_io import AudioClip

SR = 22050


def mel_of_hz(f):
    # independent restatement of the scale for oracle use
    if f <= 1000.0:
        return 3.0 * f / 200.0
    return 15.0 + 27.0 * math.log(f / 1000.0) / math.log(6.4)


def tone_clip(freq_hz, amp=0.5, dur_s=5.0, sr=SR):
    t = np.arange(int(round(sr * dur_s))) / sr
    return AudioClip(amp * np.sin(2.0 * np.pi * freq_hz * t), sr)


class TestMelScale:
    def test_anchor_points(self):
        # 3*200/200 = 3, 3*1000/200 = 15, 15 + 27*ln(6.4)/ln(6.4) = 42
        assert mel.hz_to_mel(0.0) == 0.0
        assert mel.hz_to_mel(200.0) == pytest.approx(3.0, abs=1e-12)
        assert mel.hz_to_mel(1000.0) == pytest.approx(15.0, abs=1e-12)
        assert mel.hz_to_mel(6400.0) == pytest.approx(42.0, abs=1e-12)

    def test_inverse_anchor_points(self):
        assert mel.mel_to_hz(15.0) == pytest.approx(1000.0, abs=1e-9)
        assert mel.mel_to_hz(42.0) == pytest.approx(6400.0, abs=1e-9)

    @given(st.floats(min_value=0.0, max_value=SR / 2))
    def test_round_trip(self, f):
        assert mel.mel_to_hz(mel.hz_to_mel(f)) == pytest.approx(f, rel=1e-10, abs=1e-9)

    @given(
        st.floats(min_value=0.0, max_value=SR / 2),
        st.floats(min_value=1e-3, max_value=1000.0),
    )
    def test_strictly_increasing(self, f, step):
        assert mel.hz_to_mel(f + step) > mel.hz_to_mel(f)

    @given(st.floats(min_value=0.0, max_value=SR / 2))
    def test_matches_piecewise_formula(self, f):
        assert mel.hz_to_mel(f) == pytest.approx(mel_of_hz(f), rel=1e-12, abs=1e-12)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            mel.hz_to_mel(-1.0)
        with pytest.raises(ValueError):
            mel.mel_to_hz(-0.5)

    def test_array_input(self):
        out = mel.hz_to_mel(np.array([0.0, 1000.0, 6400.0]))
        assert np.allclose(out, [0.0, 15.0, 42.0], atol=1e-12)


class TestFilterbank:
    def setup_method(self):
        self.bank = mel.build_mel_filterbank(SR, 2048)

    def test_shape_and_nonnegative(self):
        assert self.bank.weights.shape == (128, 1025)
        assert np.all(self.bank.weights >= 0.0)

    def test_breakpoints_equally_spaced_in_mel(self):
        mels = np.array([mel_of_hz(f) for f in self.bank.break_freqs_hz])
        assert mels.shape == (130,)
        steps = np.diff(mels)
        assert np.allclose(steps, steps[0], rtol=1e-9)
        assert mels[0] == pytest.approx(0.0, abs=1e-9)
        assert mels[-1] == pytest.approx(mel_of_hz(SR / 2), abs=1e-9)

    def test_rows_area_normalized(self):
        # sum over bins of weight * (mel width of the bin) recomputed directly
        df = SR / 2048
        widths = np.empty(1025)
        for b in range(1025):
            lo = max(b * df - df / 2, 0.0)
            hi = b * df + df / 2
            widths[b] = mel_of_hz(hi) - mel_of_hz(lo)
        areas = self.bank.weights @ widths
        assert np.allclose(areas, 1.0, atol=1e-9)

    def test_rows_unimodal(self):
        # weights rise to the apex then fall; sign of the difference flips once
        for row in self.bank.weights:
            nz = np.flatnonzero(row)
            seg = row[nz[0] : nz[-1] + 1]
            d = np.diff(seg)
            signs = np.sign(d[d != 0.0])
            assert np.all(np.diff(signs) <= 0.0)

    def test_peak_between_neighbor_breakpoints(self):
        bin_freqs = np.arange(1025) * SR / 2048
        for i, row in enumerate(self.bank.weights):
            f_peak = bin_freqs[np.argmax(row)]
            assert self.bank.break_freqs_hz[i] <= f_peak <= self.bank.break_freqs_hz[i + 2]

    def test_too_many_bands_for_small_fft_rejected(self):
        with pytest.raises(mel.DegenerateFilterbankError):
            mel.build_mel_filterbank(SR, 64, n_mels=128)

    def test_bad_frequency_range_rejected(self):
        with pytest.raises(ValueError):
            mel.build_mel_filterbank(SR, 2048, fmin_hz=5000.0, fmax_hz=4000.0)
        with pytest.raises(ValueError):
            mel.build_mel_filterbank(SR, 2048, fmax_hz=SR)


class TestMelSpectrogram:
    def test_canonical_shape(self):
        m = mel.mel_spectrogram(tone_clip(440.0))
        assert m.values.shape == (128, 216)
        assert m.kind == "mel"

    def test_silence_is_constant_floor(self):
        m = mel.mel_spectrogram(AudioClip(np.zeros(5 * SR), SR))
        assert np.all(m.values == -100.0)

    def test_tone_peaks_at_nearest_apex_row(self):
        # apex of filter i is breakpoint i+1; row 38 sits nearest 1 kHz
        mels = np.linspace(0.0, mel_of_hz(SR / 2), 130)
        apex_hz = np.array([mel.mel_to_hz(v) for v in mels[1:-1]])
        expected = int(np.argmin(np.abs(apex_hz - 1000.0)))
        assert expected == 38
        m = mel.mel_spectrogram(tone_clip(1000.0))
        assert np.all(np.argmax(m.values, axis=0) == expected)

    def test_shift_by_one_hop_shifts_columns(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal(5 * SR)
        a = mel.mel_spectrogram(AudioClip(x, SR), top_db=1000.0)
        b = mel.mel_spectrogram(AudioClip(x[512:], SR), top_db=1000.0)
        # frames coincide exactly away from the padded edges; the matmul may
        # still accumulate in a different order for 215 vs 216 columns
        assert np.allclose(b.values[:, 3:210], a.values[:, 4:211], atol=1e-12)

    def test_spread_bounded_by_top_db(self):
        rng = np.random.default_rng(3)
        clip = AudioClip(rng.standard_normal(5 * SR), SR)
        m = mel.mel_spectrogram(clip, top_db=20.0)
        assert m.values.max() - m.values.min() <= 20.0 + 1e-9


def dct_naive(x, n_out):
    # direct double loop over the analysis sum
    n = len(x)
    out = np.zeros(n_out)
    for k in range(n_out):
        alpha = math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n)
        for i in range(n):
            out[k] += alpha * x[i] * math.cos(math.pi * (i + 0.5) * k / n)
    return out


class TestDct:
    def test_constant_energy_in_first_coefficient(self):
        c = mel.dct_ii(np.ones(128), 40)
        assert c[0] == pytest.approx(math.sqrt(128.0), abs=1e-12)
        assert np.max(np.abs(c[1:])) < 1e-12

    def test_orthonormal_round_trip(self):
        m = mel._dct_matrix(16, 16)
        assert np.allclose(m.T @ m, np.eye(16), atol=1e-12)

    def test_preserves_energy_when_complete(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(32)
        c = mel.dct_ii(x, 32)
        assert np.linalg.norm(c) == pytest.approx(np.linalg.norm(x), rel=1e-12)

    @given(st.integers(min_value=1, max_value=24), st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_matches_naive_sum(self, size, seed):
        x = np.random.default_rng(seed).standard_normal(size)
        n_out = max(1, size // 2)
        assert np.allclose(mel.dct_ii(x, n_out), dct_naive(x, n_out), atol=1e-9)

    def test_bad_sizes_rejected(self):
        with pytest.raises(ValueError):
            mel.dct_ii(np.ones(8), 9)
        with pytest.raises(ValueError):
            mel.dct_ii(np.ones(8), 0)


class TestMfcc:
    def test_canonical_shape(self):
        c = mel.mfcc(tone_clip(440.0))
        assert c.values.shape == (40, 216)
        assert c.kind == "mfcc"

    def test_silence_all_energy_in_c0(self):
        # DCT of the constant -100 column: c0 = -100 * sqrt(128), rest 0
        c = mel.mfcc(AudioClip(np.zeros(5 * SR), SR))
        assert np.allclose(c.values[0], -100.0 * math.sqrt(128.0), atol=1e-9)
        assert np.max(np.abs(c.values[1:])) < 1e-9

    def test_amplitude_doubling_moves_only_c0(self):
        # +20*log10(2) dB in every band shifts the DC coefficient alone
        rng = np.random.default_rng(7)
        x = 0.1 * rng.standard_normal(5 * SR)
        c1 = mel.mfcc(AudioClip(x, SR))
        c2 = mel.mfcc(AudioClip(2.0 * x, SR))
        shift = 20.0 * math.log10(2.0) * math.sqrt(128.0)
        assert np.allclose(c2.values[0] - c1.values[0], shift, atol=1e-6)
        assert np.max(np.abs(c2.values[1:] - c1.values[1:])) < 1e-6

    def test_columns_match_per_frame_dct(self):
        clip = tone_clip(523.25)
        mel_db = mel.mel_spectrogram(clip)
        c = mel.mfcc(clip)
        for j in (0, 57, 215):
            assert np.allclose(c.values[:, j], mel.dct_ii(mel_db.values[:, j], 40), atol=1e-12)

    def test_too_many_coefficients_rejected(self):
        with pytest.raises(ValueError):
            mel.mfcc(tone_clip(440.0), n_mfcc=129)
