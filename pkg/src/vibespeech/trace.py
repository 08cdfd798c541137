"""Accelerometer trace / audio clip data model and file I/O.

Traces carry explicit timestamps because real sensor logs jitter; validation
happens at construction time so no partially valid trace can circulate.
On-disk formats: CSV (header ``t,x,y,z``, ``# key=value`` meta comments) and
JSONL (optional header object, then one ``{"t":..,"x":..,"y":..,"z":..}`` per
line).  Audio comes in as mono PCM WAV, 8 or 16 bit.
"""

from __future__ import annotations

import json
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TRACE_FORMATS = ("csv", "jsonl")

# Keys written by the loaders; ignored when comparing traces so that
# save -> load round-trips compare equal even though provenance moved.
_PROVENANCE_KEYS = ("source_path", "source_format")


def _as_readonly_f64(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SensorTrace:
    """Timestamped tri-axial acceleration samples at a nominal rate.

    Invariants (enforced here): equal-length non-empty channels, strictly
    increasing timestamps, median sample interval within 20% of the nominal
    one, and finite acceleration values.
    """

    sample_rate_hz: float
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.sample_rate_hz > 0):
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "t", _as_readonly_f64(self.t, "t"))
        for name in ("x", "y", "z"):
            object.__setattr__(self, name, _as_readonly_f64(getattr(self, name), name))
        n = len(self.t)
        if n < 1:
            raise ValueError("trace must contain at least one sample")
        for name in ("x", "y", "z"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"channel {name} has length {len(getattr(self, name))}, expected {n}")
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"channel {name} contains non-finite values")
        if not np.all(np.isfinite(self.t)):
            raise ValueError("timestamps contain non-finite values")
        if n > 1:
            dt = np.diff(self.t)
            if np.any(dt <= 0):
                bad = int(np.argmax(dt <= 0))
                raise ValueError(f"timestamps not strictly increasing at index {bad + 1}")
            nominal = 1.0 / self.sample_rate_hz
            med = float(np.median(dt))
            if not (0.8 * nominal <= med <= 1.2 * nominal):
                raise ValueError(
                    f"median sample interval {med:.6g}s deviates more than 20% "
                    f"from nominal {nominal:.6g}s"
                )
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def n(self) -> int:
        return len(self.t)

    @property
    def duration_s(self) -> float:
        """Time span from the first to the last sample."""
        return float(self.t[-1] - self.t[0])

    def channel(self, name: str) -> np.ndarray:
        if name not in ("x", "y", "z"):
            raise ValueError(f"unknown channel {name!r}")
        return getattr(self, name)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SensorTrace):
            return NotImplemented
        strip = lambda m: {k: v for k, v in m.items() if k not in _PROVENANCE_KEYS}
        return (
            self.sample_rate_hz == other.sample_rate_hz
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.z, other.z)
            and strip(self.meta) == strip(other.meta)
        )


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono audio samples normalized to [-1, 1]."""

    sample_rate_hz: float
    samples: np.ndarray
    label: str | None = None

    def __post_init__(self):
        if not (self.sample_rate_hz >= 8000):
            raise ValueError(f"audio sample rate must be >= 8000 Hz, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", _as_readonly_f64(self.samples, "samples"))
        if len(self.samples) == 0:
            raise ValueError("audio clip is empty")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("audio samples contain non-finite values")
        peak = float(np.max(np.abs(self.samples)))
        if peak > 1.0:
            raise ValueError(f"audio samples exceed [-1, 1] (peak {peak:.6g})")

    @property
    def n(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def __eq__(self, other) -> bool:
        if not isinstance(other, AudioClip):
            return NotImplemented
        return (
            self.sample_rate_hz == other.sample_rate_hz
            and np.array_equal(self.samples, other.samples)
            and self.label == other.label
        )


def _f(v: float) -> str:
    """Shortest decimal string that round-trips the float exactly."""
    return repr(float(v))


def save_trace(trace: SensorTrace, path, format: str = "csv") -> None:
    """Write a trace so that :func:`load_trace` reproduces it bit-exactly."""
    path = Path(path)
    if format == "csv":
        lines = [f"# sample_rate_hz={_f(trace.sample_rate_hz)}"]
        for k in sorted(trace.meta):
            if k not in _PROVENANCE_KEYS:
                lines.append(f"# {k}={trace.meta[k]}")
        lines.append("t,x,y,z")
        for i in range(trace.n):
            lines.append(f"{_f(trace.t[i])},{_f(trace.x[i])},{_f(trace.y[i])},{_f(trace.z[i])}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    elif format == "jsonl":
        meta = {k: v for k, v in sorted(trace.meta.items()) if k not in _PROVENANCE_KEYS}
        lines = [json.dumps({"sample_rate_hz": trace.sample_rate_hz, "meta": meta}, sort_keys=True)]
        for i in range(trace.n):
            lines.append(
                json.dumps(
                    {"t": float(trace.t[i]), "x": float(trace.x[i]),
                     "y": float(trace.y[i]), "z": float(trace.z[i])}
                )
            )
        path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    else:
        raise ValueError(f"unknown trace format {format!r} (expected one of {TRACE_FORMATS})")


def load_trace(path, format: str = "csv", sample_rate_hz: float | None = None) -> SensorTrace:
    """Load and validate a trace file.

    The sample rate comes from the ``sample_rate_hz`` argument when given,
    else from the file's sidecar meta (``# sample_rate_hz=...`` comment for
    CSV, header object for JSONL).
    """
    path = Path(path)
    if format == "csv":
        rate, meta, rows = _parse_csv(path)
    elif format == "jsonl":
        rate, meta, rows = _parse_jsonl(path)
    else:
        raise ValueError(f"unknown trace format {format!r} (expected one of {TRACE_FORMATS})")

    if sample_rate_hz is not None:
        rate = float(sample_rate_hz)
    if rate is None:
        raise ValueError(f"{path}: sample rate not given and no sample_rate_hz sidecar key found")
    if not rows:
        raise ValueError(f"{path}: no samples")
    data = np.asarray(rows, dtype=np.float64)
    meta["source_path"] = str(path)
    meta["source_format"] = format
    return SensorTrace(
        sample_rate_hz=rate, t=data[:, 0], x=data[:, 1], y=data[:, 2], z=data[:, 3], meta=meta
    )


def _parse_csv(path: Path):
    rate = None
    meta: dict[str, str] = {}
    rows = []
    header_seen = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    k, v = body.split("=", 1)
                    k, v = k.strip(), v.strip()
                    if k == "sample_rate_hz":
                        rate = float(v)
                    else:
                        meta[k] = v
                continue
            if not header_seen:
                if line.replace(" ", "") != "t,x,y,z":
                    raise ValueError(f"{path}:{lineno}: expected header 't,x,y,z', got {line!r}")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 columns, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed row: {exc}") from None
    if not header_seen:
        raise ValueError(f"{path}: empty file (no 't,x,y,z' header)")
    return rate, meta, rows


def _parse_jsonl(path: Path):
    rate = None
    meta: dict[str, str] = {}
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed JSON: {exc}") from None
            if not isinstance(obj, dict):
                raise ValueError(f"{path}:{lineno}: expected an object per line")
            if "t" not in obj:
                # header object: sample rate and meta
                if "sample_rate_hz" in obj:
                    rate = float(obj["sample_rate_hz"])
                meta.update({str(k): str(v) for k, v in obj.get("meta", {}).items()})
                continue
            try:
                rows.append([float(obj[k]) for k in ("t", "x", "y", "z")])
            except KeyError as exc:
                raise ValueError(f"{path}:{lineno}: missing key {exc}") from None
    if not rows and rate is None and not meta:
        raise ValueError(f"{path}: empty file")
    return rate, meta, rows


def load_audio(path) -> AudioClip:
    """Read a mono PCM WAV file (8 or 16 bit) into a normalized clip."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wav:
            n_channels = wav.getnchannels()
            width = wav.getsampwidth()
            rate = wav.getframerate()
            n_frames = wav.getnframes()
            raw = wav.readframes(n_frames)
    except wave.Error as exc:
        raise ValueError(f"{path}: not a readable PCM WAV file: {exc}") from None
    if n_channels != 1:
        raise ValueError(f"{path}: multi-channel audio unsupported ({n_channels} channels)")
    if width == 1:
        # 8-bit WAV is unsigned
        samples = (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif width == 2:
        samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    else:
        raise ValueError(f"{path}: unsupported sample width {8 * width} bit (expected 8 or 16)")
    if len(samples) < n_frames:
        raise ValueError(f"{path}: truncated file ({len(samples)} of {n_frames} frames)")
    return AudioClip(sample_rate_hz=float(rate), samples=samples, label=path.stem)


def trim_protocol_edges(trace: SensorTrace, head_s: float = 5.0, tail_s: float = 2.0) -> SensorTrace:
    """Cut the recording-protocol padding off both ends of a trace.

    Drops everything at or before ``t0 + head_s`` and after ``t_end - tail_s``;
    with both arguments zero the trace is returned unchanged.
    """
    if head_s < 0 or tail_s < 0:
        raise ValueError("trim amounts must be non-negative")
    if trace.duration_s <= head_s + tail_s:
        raise ValueError(
            f"trace spans {trace.duration_s:.3f}s, too short to trim "
            f"{head_s:.3f}s + {tail_s:.3f}s"
        )
    keep = np.ones(trace.n, dtype=bool)
    if head_s > 0:
        keep &= trace.t > trace.t[0] + head_s
    if tail_s > 0:
        keep &= trace.t <= trace.t[-1] - tail_s
    if not np.any(keep):
        raise ValueError("trim leaves no samples")
    return SensorTrace(
        sample_rate_hz=trace.sample_rate_hz,
        t=trace.t[keep],
        x=trace.x[keep],
        y=trace.y[keep],
        z=trace.z[keep],
        meta=dict(trace.meta),
    )
