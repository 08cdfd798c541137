"""Synthetic accelerometer traces from audio via band response + aliasing.

The vibration pickup is modeled as a flat pass band (default 100-3300 Hz)
followed by sample-and-hold decimation to the sensor rate *without* an
anti-alias filter.  Skipping the anti-alias stage is the whole point: a tone
at f ends up at ``|f - N*fs|`` in the sensor stream, which is the effect the
feature pipeline downstream feeds on.  A proper resampler would erase it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trace import AudioClip, SensorTrace


@dataclass(frozen=True)
class ResponseModel:
    """Acoustic coupling model of a phone body + accelerometer.

    ``axis_gain`` is the relative coupling per axis (z strongest),
    ``volume_gain`` the loudspeaker volume in (0, 1], ``noise_sigma`` the
    additive white-noise level in m/s^2.
    """

    band_lo_hz: float = 100.0
    band_hi_hz: float = 3300.0
    sensor_rate_hz: float = 200.0
    axis_gain: tuple[float, float, float] = (0.3, 0.3, 1.0)
    noise_sigma: float = 0.01
    volume_gain: float = 1.0
    gravity_offset: float = 9.81
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.band_lo_hz < self.band_hi_hz):
            raise ValueError(f"bad pass band [{self.band_lo_hz}, {self.band_hi_hz}]")
        if not (self.sensor_rate_hz > 0):
            raise ValueError("sensor_rate_hz must be positive")
        gains = tuple(float(g) for g in self.axis_gain)
        if len(gains) != 3 or any(g < 0 for g in gains):
            raise ValueError("axis_gain must be three non-negative values")
        if gains[2] < max(gains):
            raise ValueError("axis_gain must peak on the z axis")
        object.__setattr__(self, "axis_gain", gains)
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if not (0 < self.volume_gain <= 1):
            raise ValueError("volume_gain must lie in (0, 1]")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def meta(self) -> dict[str, str]:
        return {
            "synth_band_lo_hz": repr(self.band_lo_hz),
            "synth_band_hi_hz": repr(self.band_hi_hz),
            "synth_sensor_rate_hz": repr(self.sensor_rate_hz),
            "synth_axis_gain": ",".join(repr(g) for g in self.axis_gain),
            "synth_noise_sigma": repr(self.noise_sigma),
            "synth_volume_gain": repr(self.volume_gain),
            "synth_gravity_offset": repr(self.gravity_offset),
            "synth_seed": repr(self.seed),
        }


def alias_frequency(f: float, f_s: float) -> float:
    """Frequency a tone at ``f`` folds to when sampled at ``f_s``.

    Returns the unique ``|f - N*f_s|`` inside [0, f_s/2], i.e. N is the
    nearest integer multiple.
    """
    if f < 0:
        raise ValueError("f must be non-negative")
    if f_s <= 0:
        raise ValueError("f_s must be positive")
    n = round(f / f_s)
    return abs(f - n * f_s)


def band_mask_signal(samples: np.ndarray, rate_hz: float, lo_hz: float, hi_hz: float) -> np.ndarray:
    """Zero all spectral content outside [lo_hz, hi_hz] via DFT masking."""
    spec = np.fft.rfft(samples)
    freqs = np.fft.rfftfreq(len(samples), d=1.0 / rate_hz)
    spec[(freqs < lo_hz) | (freqs > hi_hz)] = 0.0
    return np.fft.irfft(spec, n=len(samples))


def sample_and_hold(samples: np.ndarray, in_rate_hz: float, out_rate_hz: float) -> np.ndarray:
    """Decimate by holding the most recent input sample.  No anti-aliasing."""
    n_out = int(np.floor(len(samples) * out_rate_hz / in_rate_hz))
    if n_out < 1:
        raise ValueError("input shorter than one output sample")
    idx = np.floor(np.arange(n_out) * (in_rate_hz / out_rate_hz)).astype(np.intp)
    return samples[np.minimum(idx, len(samples) - 1)]


def synthesize_trace(
    clip: AudioClip,
    model: ResponseModel = ResponseModel(),
    lead_s: float = 5.0,
    trail_s: float = 2.0,
) -> SensorTrace:
    """Render an audio clip into the accelerometer domain.

    Pipeline: volume scaling, pass-band masking at the audio rate,
    sample-and-hold decimation to the sensor rate, per-axis gain plus white
    noise, gravity on z, and lead/trail stretches of noise-plus-offset
    silence around the speech.  Deterministic for a fixed (clip, model).
    """
    if lead_s < 0 or trail_s < 0:
        raise ValueError("lead_s and trail_s must be non-negative")
    audio_nyq = clip.sample_rate_hz / 2.0
    if model.band_lo_hz >= audio_nyq:
        raise ValueError(
            f"pass band starts at {model.band_lo_hz} Hz, above the audio "
            f"Nyquist {audio_nyq} Hz"
        )

    sig = clip.samples * model.volume_gain
    sig = band_mask_signal(sig, clip.sample_rate_hz, model.band_lo_hz, model.band_hi_hz)
    held = sample_and_hold(sig, clip.sample_rate_hz, model.sensor_rate_hz)

    rate = model.sensor_rate_hz
    n_lead = int(round(lead_s * rate))
    n_trail = int(round(trail_s * rate))
    n_total = n_lead + len(held) + n_trail

    streams = np.random.SeedSequence(model.seed).spawn(3)
    channels = []
    for axis in range(3):
        chan = np.zeros(n_total)
        if model.noise_sigma > 0:
            chan += np.random.default_rng(streams[axis]).normal(0.0, model.noise_sigma, n_total)
        chan[n_lead : n_lead + len(held)] += model.axis_gain[axis] * held
        channels.append(chan)
    channels[2] += model.gravity_offset

    meta = model.meta()
    meta["synth_lead_s"] = repr(float(lead_s))
    meta["synth_trail_s"] = repr(float(trail_s))
    meta["synth_audio_rate_hz"] = repr(clip.sample_rate_hz)
    meta["synth_speech_start_idx"] = str(n_lead)
    meta["synth_speech_end_idx"] = str(n_lead + len(held))
    if clip.label is not None:
        meta["synth_source_label"] = clip.label

    return SensorTrace(
        sample_rate_hz=rate,
        t=np.arange(n_total) / rate,
        x=channels[0],
        y=channels[1],
        z=channels[2],
        meta=meta,
    )
