"""Trace preprocessing, speech-region detection, and word isolation.

Detection follows the variance-of-a-sliding-window approach: the z axis
carries the strongest speech response, so the window with maximal z variance
marks the spoken region and x/y reuse its bounds.  Word isolation works on
the short-time spectral RMS profile instead, thresholding against the median
so that absolute amplitude does not matter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .trace import SensorTrace


@dataclass(frozen=True)
class SpeechSegment:
    """Half-open sample interval [start_idx, end_idx) tagged with the
    detection statistic that produced it."""

    start_idx: int
    end_idx: int
    peak_variance: float
    rms_profile: tuple[float, ...] | None = None

    def __post_init__(self):
        if not (0 <= self.start_idx < self.end_idx):
            raise ValueError(f"bad segment bounds [{self.start_idx}, {self.end_idx})")

    @property
    def n(self) -> int:
        return self.end_idx - self.start_idx

    def duration_s(self, sample_rate_hz: float) -> float:
        return self.n / sample_rate_hz


@dataclass(frozen=True)
class IsolationConfig:
    frame_samples: int = 64
    hop_samples: int = 16
    smooth_frames: int = 5
    threshold_ratio: float = 2.0
    gap_min_s: float = 0.08
    dur_min_s: float = 0.1

    def __post_init__(self):
        if self.frame_samples < 2 or self.hop_samples < 1:
            raise ValueError("frame_samples must be >= 2 and hop_samples >= 1")
        if self.smooth_frames < 1:
            raise ValueError("smooth_frames must be >= 1")
        if self.threshold_ratio <= 0:
            raise ValueError("threshold_ratio must be positive")
        if self.gap_min_s < 0 or self.dur_min_s < 0:
            raise ValueError("gap_min_s and dur_min_s must be non-negative")


def _highpass_coeffs(cutoff_hz: float, rate_hz: float) -> tuple[float, float]:
    """First-order Butterworth high-pass via the bilinear transform."""
    k = math.tan(math.pi * cutoff_hz / rate_hz)
    return 1.0 / (1.0 + k), (1.0 - k) / (1.0 + k)


def _highpass_once(s: np.ndarray, b0: float, a1: float) -> np.ndarray:
    # y[n] = b0*(x[n] - x[n-1]) + a1*y[n-1], primed with x[-1]=x[0], y[-1]=0
    # so a constant input maps to exactly zero.
    out, _ = lfilter([b0, -b0], [1.0, -a1], s, zi=np.array([-b0 * s[0]]))
    return out


def highpass_zero_phase(s: np.ndarray, cutoff_hz: float, rate_hz: float) -> np.ndarray:
    """Forward-backward first-order high-pass: no phase shift, squared magnitude."""
    b0, a1 = _highpass_coeffs(cutoff_hz, rate_hz)
    fwd = _highpass_once(np.asarray(s, dtype=np.float64), b0, a1)
    return _highpass_once(fwd[::-1], b0, a1)[::-1]


def highpass_motion_filter(trace: SensorTrace, cutoff_hz: float = 2.0) -> SensorTrace:
    """Remove DC / slow motion drift (hand movement, gravity) from all axes.

    Zero-phase so that segment boundaries found downstream are not skewed by
    filter delay.
    """
    if not (0 < cutoff_hz < trace.sample_rate_hz / 2):
        raise ValueError(
            f"cutoff {cutoff_hz} Hz must lie in (0, {trace.sample_rate_hz / 2}) Hz"
        )
    meta = dict(trace.meta)
    meta["highpass_cutoff_hz"] = repr(float(cutoff_hz))
    return SensorTrace(
        sample_rate_hz=trace.sample_rate_hz,
        t=trace.t,
        x=highpass_zero_phase(trace.x, cutoff_hz, trace.sample_rate_hz),
        y=highpass_zero_phase(trace.y, cutoff_hz, trace.sample_rate_hz),
        z=highpass_zero_phase(trace.z, cutoff_hz, trace.sample_rate_hz),
        meta=meta,
    )


def window_variances(s: np.ndarray, window_samples: int, stride_samples: int) -> tuple[np.ndarray, np.ndarray]:
    """Variance of every stride-spaced window; returns (starts, variances)."""
    n = len(s)
    if window_samples < 2 or window_samples > n:
        raise ValueError(f"window of {window_samples} samples does not fit {n}-sample signal")
    if stride_samples < 1:
        raise ValueError("stride_samples must be >= 1")
    s0 = np.asarray(s, dtype=np.float64) - np.mean(s)  # better conditioning
    c1 = np.concatenate(([0.0], np.cumsum(s0)))
    c2 = np.concatenate(([0.0], np.cumsum(s0 * s0)))
    starts = np.arange(0, n - window_samples + 1, stride_samples)
    ends = starts + window_samples
    w = float(window_samples)
    var = (c2[ends] - c2[starts]) / w - ((c1[ends] - c1[starts]) / w) ** 2
    return starts, np.maximum(var, 0.0)


def detect_speech_region(
    trace: SensorTrace,
    window_samples: int = 100,
    stride_samples: int = 10,
    expand_frac: float = 0.3,
) -> SpeechSegment:
    """Locate the speech region as the maximal-variance z window, grown
    outward while neighboring windows stay above ``expand_frac`` of the peak.
    """
    starts, variances = window_variances(trace.z, window_samples, stride_samples)
    best = int(np.argmax(variances))
    peak = float(variances[best])
    floor = expand_frac * peak
    lo = best
    while lo > 0 and variances[lo - 1] >= floor:
        lo -= 1
    hi = best
    while hi < len(starts) - 1 and variances[hi + 1] >= floor:
        hi += 1
    return SpeechSegment(
        start_idx=int(starts[lo]),
        end_idx=int(starts[hi]) + window_samples,
        peak_variance=peak,
    )


def speech_present(
    trace: SensorTrace,
    window_samples: int = 100,
    stride_samples: int = 10,
    min_peak_ratio: float = 3.0,
) -> bool:
    """Gate for all-silence traces: peak window variance must stand out
    against the median by ``min_peak_ratio``."""
    _, variances = window_variances(trace.z, window_samples, stride_samples)
    med = float(np.median(variances))
    if med <= 0.0:
        return bool(np.max(variances) > 0.0)
    return bool(np.max(variances) / med >= min_peak_ratio)


def spectral_rms_profile(s: np.ndarray, frame_samples: int, hop_samples: int) -> np.ndarray:
    """Per-frame RMS of the spectral magnitudes (DC excluded)."""
    n = len(s)
    n_frames = (n - frame_samples) // hop_samples + 1 if n >= frame_samples else 0
    if n_frames <= 0:
        return np.zeros(0)
    idx = np.arange(frame_samples)[None, :] + hop_samples * np.arange(n_frames)[:, None]
    frames = np.asarray(s, dtype=np.float64)[idx]
    mags = np.abs(np.fft.rfft(frames, axis=1))[:, 1:]
    return np.sqrt(np.mean(mags * mags, axis=1))


def _moving_average(v: np.ndarray, width: int) -> np.ndarray:
    if width <= 1 or len(v) == 0:
        return v.copy()
    half = width // 2
    out = np.empty_like(v)
    for i in range(len(v)):
        out[i] = np.mean(v[max(0, i - half) : i + half + 1])
    return out


def isolate_words(trace: SensorTrace, cfg: IsolationConfig = IsolationConfig()) -> list[SpeechSegment]:
    """Split a (high-pass filtered) trace into per-word segments.

    Frames the z axis, thresholds the smoothed spectral-RMS profile at
    ``threshold_ratio`` times its median, merges supra-threshold runs split
    by gaps shorter than ``gap_min_s``, and drops runs under ``dur_min_s``.
    Returns sorted, pairwise-disjoint segments; an empty list is a valid
    result for silence.
    """
    rate = trace.sample_rate_hz
    rms = spectral_rms_profile(trace.z, cfg.frame_samples, cfg.hop_samples)
    if len(rms) == 0:
        return []
    smooth = _moving_average(rms, cfg.smooth_frames)
    threshold = cfg.threshold_ratio * float(np.median(smooth))
    mask = smooth > threshold

    runs: list[list[int]] = []  # [first_frame, last_frame] inclusive
    i = 0
    while i < len(mask):
        if mask[i]:
            j = i
            while j + 1 < len(mask) and mask[j + 1]:
                j += 1
            runs.append([i, j])
            i = j + 1
        else:
            i += 1

    def span(run):  # sample-index interval of a frame run
        return run[0] * cfg.hop_samples, run[1] * cfg.hop_samples + cfg.frame_samples

    gap_min = cfg.gap_min_s * rate
    merged: list[list[int]] = []
    for run in runs:
        if merged:
            prev_end = span(merged[-1])[1]
            cur_start = span(run)[0]
            if cur_start - prev_end < gap_min:
                merged[-1][1] = run[1]
                continue
        merged.append(run)

    dur_min = cfg.dur_min_s * rate
    segments = []
    for run in merged:
        start, end = span(run)
        end = min(end, trace.n)
        if end - start < dur_min:
            continue
        profile = smooth[run[0] : run[1] + 1]
        segments.append(
            SpeechSegment(
                start_idx=int(start),
                end_idx=int(end),
                peak_variance=float(np.max(profile)),
                rms_profile=tuple(float(v) for v in profile),
            )
        )
    return segments
