import numpy as np
import pytest

from sonoforge import rhythm
from sonoforge.audio_io import AudioClip

SR = 22050


def click_train(bpm, dur_s=5.0, amp=1.0, sr=SR):
    x = np.zeros(int(dur_s * sr))
    period_s = 60.0 / bpm
    t = 0.0
    while t < dur_s:
        x[int(round(t * sr))] = amp
        t += period_s
    return AudioClip(x, sr)


def cyclic_distance(a, b, n_bins=64):
    d = np.abs(np.asarray(a) - np.asarray(b)) % n_bins
    return np.minimum(d, n_bins - d)


class TestNoveltyCurveType:
    def test_negative_values_rejected(self):
        with pytest.raises(ValueError):
            rhythm.NoveltyCurve(np.array([0.0, -1.0]), 43.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            rhythm.NoveltyCurve(np.array([]), 43.0)

    def test_nonpositive_rate_rejected(self):
        with pytest.raises(ValueError):
            rhythm.NoveltyCurve(np.ones(4), 0.0)


class TestOnsetNovelty:
    def test_silence_is_all_zero(self):
        nov = rhythm.onset_novelty(AudioClip(np.zeros(5 * SR), SR))
        assert nov.n_frames == 216
        assert nov.frame_rate_hz == SR / 512
        assert np.all(nov.values == 0.0)

    def test_first_frame_is_zero(self):
        rng = np.random.default_rng(2)
        nov = rhythm.onset_novelty(AudioClip(rng.standard_normal(5 * SR), SR))
        assert nov.values[0] == 0.0

    def test_steady_tone_has_no_flux(self):
        # 1378.125 Hz = bin 128; each hop advances exactly 32 cycles, so
        # interior frames see an identical waveform
        t = np.arange(5 * SR) / SR
        f = 128 * SR / 2048
        steady = rhythm.onset_novelty(AudioClip(0.5 * np.sin(2 * np.pi * f * t), SR))
        onset = np.concatenate([np.zeros(2 * SR), 0.5 * np.sin(2 * np.pi * f * t[: 3 * SR])])
        step = rhythm.onset_novelty(AudioClip(onset, SR))
        assert steady.values[5:-5].max() < 1e-6 * step.values.max()

    def test_nonsynchronous_tone_flux_stays_small(self):
        # 440 Hz is not hop-synchronous; scalloping leaves a tiny residue
        t = np.arange(5 * SR) / SR
        steady = rhythm.onset_novelty(AudioClip(0.5 * np.sin(2 * np.pi * 440.0 * t), SR))
        onset = np.concatenate([np.zeros(2 * SR), 0.5 * np.sin(2 * np.pi * 440.0 * t[: 3 * SR])])
        step = rhythm.onset_novelty(AudioClip(onset, SR))
        assert steady.values[5:-5].max() < 1e-3 * step.values.max()

    def test_click_train_peak_spacing(self):
        nov = rhythm.onset_novelty(click_train(120.0))
        v = nov.values
        peaks = [
            j
            for j in range(1, v.size - 1)
            if v[j] >= v[j - 1] and v[j] >= v[j + 1] and v[j] > 0.5 * v.max()
        ]
        spacing = np.diff(peaks)
        expected = 0.5 * nov.frame_rate_hz  # one click every half second
        assert np.all(np.abs(spacing - expected) <= 1.0)


def acorr_naive(v, win_len):
    # direct triple loop with explicit zero padding and normalization
    pad = win_len // 2
    vp = np.concatenate([np.zeros(pad), v, np.zeros(pad)])
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(win_len) / win_len)
    out = np.zeros((win_len, v.size))
    for j in range(v.size):
        seg = vp[j : j + win_len] * w
        for lag in range(win_len):
            out[lag, j] = sum(seg[n] * seg[n + lag] for n in range(win_len - lag))
        if out[0, j] > 0:
            out[:, j] /= out[0, j]
        else:
            out[:, j] = 0.0
    return out


class TestAutocorrelationTempogram:
    @pytest.mark.parametrize("win_len", [4, 16, 25])
    def test_matches_naive_loop(self, win_len):
        rng = np.random.default_rng(win_len)
        v = rng.random(40)
        nov = rhythm.NoveltyCurve(v, 43.0)
        got = rhythm.autocorrelation_tempogram(nov, win_len)
        assert np.allclose(got, acorr_naive(v, win_len), atol=1e-12)

    def test_zero_novelty_gives_zero_matrix(self):
        nov = rhythm.NoveltyCurve(np.zeros(50), 43.0)
        assert np.all(rhythm.autocorrelation_tempogram(nov, 16) == 0.0)

    def test_live_columns_are_one_at_lag_zero(self):
        rng = np.random.default_rng(9)
        nov = rhythm.NoveltyCurve(rng.random(100), 43.0)
        out = rhythm.autocorrelation_tempogram(nov, 32)
        assert np.allclose(out[0], 1.0)

    def test_periodic_novelty_peaks_at_its_period(self):
        v = np.zeros(216)
        v[::20] = 1.0
        out = rhythm.autocorrelation_tempogram(rhythm.NoveltyCurve(v, 43.0), 128)
        lag_argmax = 1 + np.argmax(out[1:, 30:190], axis=0)
        assert np.all(np.abs(lag_argmax - 20) <= 1)

    def test_window_longer_than_curve_is_allowed(self):
        # the default window (384) exceeds a 5 s clip's 216 frames; the
        # segment just runs into the zero padding
        nov = rhythm.NoveltyCurve(np.ones(216), 43.0)
        out = rhythm.autocorrelation_tempogram(nov, 384)
        assert out.shape == (384, 216)
        assert np.isfinite(out).all()

    def test_tiny_window_rejected(self):
        with pytest.raises(ValueError):
            rhythm.autocorrelation_tempogram(rhythm.NoveltyCurve(np.ones(10), 43.0), 1)


class TestCyclicFoldWeights:
    def test_shape_and_lag_zero_column(self):
        w = rhythm.cyclic_fold_weights(384, SR / 512)
        assert w.shape == (64, 384)
        assert np.all(w >= 0.0)
        assert np.all(w[:, 0] == 0.0)

    @pytest.mark.parametrize("lag,bpm", [(43, 60.09), (22, 117.5), (86, 30.05)])
    def test_single_lag_folds_to_its_tempo_bin(self, lag, bpm):
        w = rhythm.cyclic_fold_weights(384, SR / 512)
        acorr = np.zeros((384, 1))
        acorr[lag, 0] = 1.0
        folded = (w @ acorr)[:, 0]
        # expected cyclic position of this lag's tempo, ref 60 BPM
        expected = (64.0 * (np.log2(bpm / 60.0) % 1.0)) % 64.0
        assert cyclic_distance(np.argmax(folded), round(expected)) <= 1


class TestCyclicTempogram:
    def test_canonical_shape(self):
        tg = rhythm.cyclic_tempogram(click_train(90.0))
        assert tg.values.shape == (64, 216)
        assert tg.kind == "tempogram"
        assert np.all(tg.values >= 0.0)

    def test_120_bpm_folds_onto_reference_bin(self):
        # log2(120/60) mod 1 = 0, the same cyclic position as 60 BPM
        tg = rhythm.cyclic_tempogram(click_train(120.0))
        argmax = np.argmax(tg.values[:, 20:200], axis=0)
        assert np.all(cyclic_distance(argmax, 0) <= 1)

    def test_60_and_120_bpm_share_their_bin(self):
        a = np.argmax(rhythm.cyclic_tempogram(click_train(60.0)).values[:, 20:200], axis=0)
        b = np.argmax(rhythm.cyclic_tempogram(click_train(120.0)).values[:, 20:200], axis=0)
        assert np.all(cyclic_distance(a, b) <= 1)

    def test_45_and_90_bpm_share_their_bin(self):
        a = np.argmax(rhythm.cyclic_tempogram(click_train(45.0)).values[:, 20:200], axis=0)
        b = np.argmax(rhythm.cyclic_tempogram(click_train(90.0)).values[:, 20:200], axis=0)
        assert np.all(cyclic_distance(a, b) <= 1)

    def test_argmax_invariant_under_amplitude(self):
        a = rhythm.cyclic_tempogram(click_train(90.0, amp=0.2))
        b = rhythm.cyclic_tempogram(click_train(90.0, amp=0.9))
        assert np.array_equal(np.argmax(a.values, axis=0), np.argmax(b.values, axis=0))

    def test_silence_gives_zero_matrix(self):
        tg = rhythm.cyclic_tempogram(AudioClip(np.zeros(5 * SR), SR))
        assert np.all(tg.values == 0.0)
