"""Audio ingest, log-mel features, and augmentation behavior."""
import wave

import numpy as np
import pytest

from batchal.audio import (
    AudioClip,
    AugmentationConfig,
    CLIP_SAMPLES,
    IngestError,
    LOG_FLOOR,
    N_FRAMES,
    N_MELS,
    TARGET_RATE,
    add_noise,
    augment,
    augment_with_trace,
    change_amplitude,
    change_speed,
    hz_to_mel,
    ingest_wav,
    mel_center_frequencies,
    mel_spectrogram,
    mel_to_hz,
    shift_time,
)


def write_pcm16(path, samples, rate, channels=1):
    pcm = (np.clip(samples, -1.0, 1.0) * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(2)
        wf.setframerate(rate)
        wf.writeframes(pcm.tobytes())


def sine(freq, rate, seconds=1.0, amp=0.5):
    t = np.arange(int(rate * seconds)) / rate
    return amp * np.sin(2.0 * np.pi * freq * t)


class TestIngest:
    def test_identity_when_already_target_rate(self, tmp_path):
        x = sine(440.0, TARGET_RATE)
        path = tmp_path / "tone.wav"
        write_pcm16(path, x, TARGET_RATE)
        clip = ingest_wav(path)
        assert clip.samples.shape == (CLIP_SAMPLES,)
        assert clip.sample_rate == TARGET_RATE
        # identical up to the int16 quantization of the test writer
        np.testing.assert_allclose(clip.samples, np.trunc(x * 32767) / 32768.0, atol=1e-12)

    def test_short_clip_padded_symmetrically(self, tmp_path):
        x = sine(440.0, TARGET_RATE, seconds=0.5)
        path = tmp_path / "short.wav"
        write_pcm16(path, x, TARGET_RATE)
        clip = ingest_wav(path)
        assert clip.samples.shape == (CLIP_SAMPLES,)
        assert np.all(clip.samples[:4000] == 0.0)
        assert np.all(clip.samples[-4000:] == 0.0)
        assert np.any(clip.samples[4000:-4000] != 0.0)

    def test_long_clip_center_cropped(self, tmp_path):
        x = sine(440.0, TARGET_RATE, seconds=1.5)
        path = tmp_path / "long.wav"
        write_pcm16(path, x, TARGET_RATE)
        clip = ingest_wav(path)
        assert clip.samples.shape == (CLIP_SAMPLES,)

    def test_resample_preserves_spectral_peak(self, tmp_path):
        # oracle: FFT argmax of a synthesized 440 Hz tone, 1 Hz resolution
        path = tmp_path / "tone8k.wav"
        write_pcm16(path, sine(440.0, 8000), 8000)
        clip = ingest_wav(path)
        assert clip.samples.shape == (CLIP_SAMPLES,)
        spectrum = np.abs(np.fft.rfft(clip.samples))
        freqs = np.fft.rfftfreq(CLIP_SAMPLES, 1.0 / TARGET_RATE)
        peak = freqs[int(np.argmax(spectrum))]
        assert abs(peak - 440.0) <= 1.0

    def test_multichannel_averaged(self, tmp_path):
        x = sine(300.0, TARGET_RATE)
        stereo = np.stack([x, -x], axis=1).reshape(-1)
        path = tmp_path / "stereo.wav"
        write_pcm16(path, stereo, TARGET_RATE, channels=2)
        clip = ingest_wav(path)
        assert np.max(np.abs(clip.samples)) < 1e-3

    def test_eight_bit_wav(self, tmp_path):
        x = sine(500.0, TARGET_RATE)
        pcm = np.clip((x * 127 + 128), 0, 255).astype(np.uint8)
        path = tmp_path / "u8.wav"
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(1)
            wf.setsampwidth(1)
            wf.setframerate(TARGET_RATE)
            wf.writeframes(pcm.tobytes())
        clip = ingest_wav(path)
        assert clip.samples.shape == (CLIP_SAMPLES,)
        assert np.corrcoef(clip.samples, x)[0, 1] > 0.99

    def test_unreadable_file_names_path(self, tmp_path):
        path = tmp_path / "bogus.wav"
        path.write_bytes(b"not a wav at all")
        with pytest.raises(IngestError, match="bogus.wav"):
            ingest_wav(path)

    def test_zero_length_audio_rejected(self, tmp_path):
        path = tmp_path / "empty.wav"
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(1)
            wf.setsampwidth(2)
            wf.setframerate(TARGET_RATE)
        with pytest.raises(IngestError):
            ingest_wav(path)

    def test_unsupported_sample_width_rejected(self, tmp_path):
        path = tmp_path / "s24.wav"
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(1)
            wf.setsampwidth(3)
            wf.setframerate(TARGET_RATE)
            wf.writeframes(b"\x00\x00\x00" * 100)
        with pytest.raises(IngestError, match="24 bits"):
            ingest_wav(path)


class TestMelSpectrogram:
    def test_output_shape_32x32(self):
        rng = np.random.default_rng(0)
        clip = AudioClip(samples=rng.uniform(-1, 1, CLIP_SAMPLES))
        spec = mel_spectrogram(clip)
        assert spec.values.shape == (32, 32)
        assert (N_MELS, N_FRAMES) == (32, 32)

    def test_all_zero_clip_hits_log_floor(self):
        spec = mel_spectrogram(AudioClip(samples=np.zeros(CLIP_SAMPLES)))
        np.testing.assert_allclose(spec.values, np.log(LOG_FLOOR))

    def test_pure_tone_lands_in_nearest_mel_bin(self):
        # oracle: recompute filterbank centers from the mel-scale formula
        centers = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(8000.0), N_MELS + 2))[1:-1]
        np.testing.assert_allclose(centers, mel_center_frequencies())
        expected_bin = int(np.argmin(np.abs(centers - 1000.0)))
        clip = AudioClip(samples=sine(1000.0, TARGET_RATE, amp=0.9))
        spec = mel_spectrogram(clip)
        assert int(np.argmax(spec.values.sum(axis=1))) == expected_bin

    def test_amplitude_scaling_shifts_log_energy_by_constant(self):
        clip = AudioClip(samples=sine(700.0, TARGET_RATE, amp=0.7))
        for a in (0.8, 1.2):
            base = mel_spectrogram(clip).values
            scaled = mel_spectrogram(AudioClip(samples=a * clip.samples)).values
            mask = base > np.log(LOG_FLOOR) + 21.0  # far above the log floor
            assert mask.sum() > 20
            diffs = (scaled - base)[mask]
            assert diffs.max() - diffs.min() <= 1e-9
            np.testing.assert_allclose(diffs, 2.0 * np.log(a), atol=1e-9)

    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError):
            mel_spectrogram(AudioClip(samples=np.zeros(100)))


class TestAugment:
    def make_clip(self, seed=0):
        rng = np.random.default_rng(seed)
        return AudioClip(samples=0.4 * np.sin(2 * np.pi * 620.0 * np.arange(CLIP_SAMPLES)
                                              / TARGET_RATE)
                         + 0.01 * rng.standard_normal(CLIP_SAMPLES))

    def noise_bank(self, k=3, seed=9):
        rng = np.random.default_rng(seed)
        return [AudioClip(samples=0.3 * rng.standard_normal(CLIP_SAMPLES)) for _ in range(k)]

    def test_apply_prob_zero_is_identity(self):
        clip = self.make_clip()
        cfg = AugmentationConfig(apply_prob=0.0, noise_bank=self.noise_bank())
        out = augment(clip, cfg, rng_seed=123)
        np.testing.assert_array_equal(out.samples, clip.samples)

    def test_amplitude_multiplies_every_sample(self):
        x = self.make_clip().samples
        for u in (0.8, 1.0, 1.2):
            np.testing.assert_array_equal(change_amplitude(x, u), x * u)

    def test_noise_at_zero_db_matches_signal_power(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(CLIP_SAMPLES)
        x /= np.sqrt(np.mean(x ** 2))  # unit power
        noise = rng.standard_normal(CLIP_SAMPLES)
        mixed = add_noise(x, noise, snr_db=0.0)
        added = mixed - x
        assert abs(np.mean(added ** 2) - 1.0) <= 1e-6

    @pytest.mark.parametrize("snr_db", [0.0, 3.7, 12.0, 25.5, 40.0])
    def test_noise_snr_calibration(self, snr_db):
        rng = np.random.default_rng(11)
        x = 0.5 * rng.standard_normal(CLIP_SAMPLES)
        noise = rng.standard_normal(CLIP_SAMPLES)
        mixed = add_noise(x, noise, snr_db)
        added = mixed - x
        measured = 10.0 * np.log10(np.mean(x ** 2) / np.mean(added ** 2))
        assert abs(measured - snr_db) <= 0.01

    def test_full_pipeline_snr_against_drawn_target(self):
        clip = self.make_clip()
        cfg = AugmentationConfig(apply_prob=1.0, noise_bank=self.noise_bank())
        for seed in range(8):
            out, trace = augment_with_trace(clip, cfg, rng_seed=seed)
            ops = {t["op"]: t for t in trace}
            assert set(ops) == {"amplitude", "speed", "shift", "noise"}
            x = change_amplitude(clip.samples, ops["amplitude"]["factor"])
            resampled = change_speed(x, ops["speed"]["factor"])
            n = resampled.shape[0]
            if n < CLIP_SAMPLES:
                lead = (CLIP_SAMPLES - n) // 2
                x = np.pad(resampled, (lead, CLIP_SAMPLES - n - lead))
            else:
                start = (n - CLIP_SAMPLES) // 2
                x = resampled[start:start + CLIP_SAMPLES]
            x = shift_time(x, ops["shift"]["samples"])
            added = out.samples - x
            measured = 10.0 * np.log10(np.mean(x ** 2) / np.mean(added ** 2))
            assert abs(measured - ops["noise"]["snr_db"]) <= 0.01

    def test_deterministic_given_seed(self):
        clip = self.make_clip()
        cfg = AugmentationConfig(noise_bank=self.noise_bank())
        a = augment(clip, cfg, rng_seed=77)
        b = augment(clip, cfg, rng_seed=77)
        np.testing.assert_array_equal(a.samples, b.samples)
        c = augment(clip, cfg, rng_seed=78)
        assert not np.array_equal(a.samples, c.samples)

    def test_output_length_invariant(self):
        clip = self.make_clip()
        cfg = AugmentationConfig(apply_prob=0.9, noise_bank=self.noise_bank())
        for seed in range(25):
            out = augment(clip, cfg, rng_seed=seed)
            assert out.samples.shape == (CLIP_SAMPLES,)
            assert np.all(np.isfinite(out.samples))

    def test_empty_noise_bank_warns_and_skips(self):
        clip = self.make_clip()
        cfg = AugmentationConfig(apply_prob=1.0)
        with pytest.warns(UserWarning, match="noise bank"):
            out, trace = augment_with_trace(clip, cfg, rng_seed=5)
        assert "noise" not in {t["op"] for t in trace}
        assert out.samples.shape == (CLIP_SAMPLES,)

    def test_shift_fills_with_zeros(self):
        x = np.ones(CLIP_SAMPLES)
        right = shift_time(x, 100)
        assert np.all(right[:100] == 0.0) and np.all(right[100:] == 1.0)
        left = shift_time(x, -250)
        assert np.all(left[-250:] == 0.0) and np.all(left[:-250] == 1.0)

    def test_speed_changes_duration_before_fitting(self):
        x = np.ones(CLIP_SAMPLES)
        assert change_speed(x, 1.25).shape[0] == round(CLIP_SAMPLES / 1.25)
        assert change_speed(x, 0.8).shape[0] == round(CLIP_SAMPLES / 0.8)

    def test_degenerate_config_rejected(self):
        with pytest.raises(ValueError):
            AugmentationConfig(apply_prob=1.5)
        with pytest.raises(ValueError):
            AugmentationConfig(amplitude_range=(1.0, 1.0))
