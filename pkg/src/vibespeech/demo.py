"""Bundled synthetic corpus: 11 digit-style words, 10 voices, 2 genders.

Every template parameter here is a toolkit convention chosen so the full
pipeline can be exercised without phone hardware.  All words share one
spectral comb (a fixed grid of tones whose aliases tile 20-92 Hz at the
default 200 Hz sensor rate), because the aliased sensor stream of real
speech carries word identity mostly in its temporal statistics, not in
stable spectral lines.  Words therefore differ in duration,
amplitude-modulation rate and depth, envelope attack, and short sub-frame
syllable dips.  Voices differ in fundamental frequency (and harmonics),
spectral tilt, a small formant offset applied to the comb, and overall
vocal strength; the fundamentals alias to distinct positions per voice
(male fundamentals fold high, female low) and the strength ladder rises
monotonically from m1 to f5, so gender and speaker stay separable by
whole-segment statistics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .synth import ResponseModel, synthesize_trace
from .trace import AudioClip, SensorTrace, save_trace


@dataclass(frozen=True)
class WordTemplate:
    am_rate_hz: float        # 0 disables amplitude modulation
    am_depth: float
    attack_frac: float       # envelope peak position
    duration_s: float
    dips: tuple[float, ...]  # syllable-dip centers as fractions of duration


@dataclass(frozen=True)
class VoiceProfile:
    f0_hz: float              # fundamental; aliases stay distinct across voices
    tilt: float               # harmonic rolloff exponent
    formant_offset_hz: float  # rigid shift of the shared comb
    strength: float           # vocal level ladder
    gender: str


#: tone comb shared by every word: alias positions and pre-alias carriers
COMB_ALIASES = (20.0, 28.0, 36.0, 44.0, 52.0, 60.0, 68.0, 76.0, 84.0, 92.0)
COMB_CARRIERS = (400.0, 1000.0, 1800.0, 2400.0, 400.0, 1000.0, 1800.0, 2400.0, 400.0, 1000.0)

WORD_TEMPLATES: dict[str, WordTemplate] = {
    "zero":  WordTemplate(0.0, 0.00, 0.12, 0.40, ()),
    "one":   WordTemplate(3.0, 0.50, 0.20, 0.45, ()),
    "two":   WordTemplate(5.0, 0.50, 0.35, 0.50, ()),
    "three": WordTemplate(7.0, 0.50, 0.15, 0.55, ()),
    "four":  WordTemplate(9.0, 0.50, 0.45, 0.60, ()),
    "five":  WordTemplate(4.0, 0.30, 0.25, 0.65, (0.5,)),
    "six":   WordTemplate(6.0, 0.30, 0.50, 0.70, (0.5,)),
    "seven": WordTemplate(8.0, 0.30, 0.30, 0.75, (0.5,)),
    "eight": WordTemplate(3.0, 0.70, 0.18, 0.80, (0.33, 0.66)),
    "nine":  WordTemplate(6.0, 0.70, 0.40, 0.85, (0.33, 0.66)),
    "oh":    WordTemplate(9.0, 0.70, 0.22, 0.90, (0.33, 0.66)),
}

VOICE_PROFILES: dict[str, VoiceProfile] = {
    "m1": VoiceProfile(111.0, 0.70, -5.0, 1.00, "male"),
    "m2": VoiceProfile(123.0, 0.85, -3.9, 1.25, "male"),
    "m3": VoiceProfile(134.0, 1.00, -2.8, 1.56, "male"),
    "m4": VoiceProfile(147.0, 1.15, -1.7, 1.95, "male"),
    "m5": VoiceProfile(159.0, 1.30, -0.6, 2.44, "male"),
    "f1": VoiceProfile(166.0, 0.75, 0.6, 2.95, "female"),
    "f2": VoiceProfile(172.0, 0.90, 1.7, 3.69, "female"),
    "f3": VoiceProfile(181.0, 1.05, 2.8, 4.61, "female"),
    "f4": VoiceProfile(188.0, 1.20, 3.9, 5.77, "female"),
    "f5": VoiceProfile(192.0, 1.35, 5.0, 7.21, "female"),
}

WORDS = tuple(WORD_TEMPLATES)
VOICES = tuple(VOICE_PROFILES)

N_HARMONICS = 3
HARMONIC_LEVEL = 0.22
TONE_LEVEL = 0.34
DIP_WIDTH_S = 0.055   # shorter than a cepstral frame, wider than one hop
DIP_DEPTH = 0.85
_MAX_STRENGTH = max(v.strength for v in VOICE_PROFILES.values())
# RMS of the loudest voice, sized so typical crest factors leave headroom
# inside [-1, 1]; a deterministic peak cap catches worst-phase draws
_TOP_RMS = 0.17

# Recording-protocol padding baked into the demo traces; slightly larger than
# the 5 s / 2 s trim amounts so detection still sees some silence context.
DEMO_LEAD_S = 5.6
DEMO_TRAIL_S = 2.35


@dataclass(frozen=True)
class DemoConfig:
    repetitions: int = 5
    audio_rate_hz: float = 8000.0
    sensor_rate_hz: float = 200.0
    volume_gain: float = 1.0
    noise_sigma: float = 0.006
    seed: int = 7

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


def _envelope(n: int, w: WordTemplate, rate_hz: float) -> np.ndarray:
    # attack/decay shape over a sustain floor; the floor keeps crest factors
    # modest so RMS-normalized audio stays inside [-1, 1]
    t = np.linspace(0.0, 1.0, n, endpoint=False)
    attack = np.clip(t / max(w.attack_frac, 1e-3), 0.0, 1.0)
    decay = np.clip((1.0 - t) / max(1.0 - w.attack_frac, 1e-3), 0.0, 1.0) ** 0.7
    env = 0.3 + 0.7 * np.minimum(attack, decay)
    # syllable dips: raised-cosine notches much shorter than a cepstral frame
    half = DIP_WIDTH_S / 2.0 / w.duration_s
    for center in w.dips:
        inside = np.abs(t - center) < half
        notch = 0.5 * (1 + np.cos(np.pi * (t[inside] - center) / half))
        env[inside] *= 1.0 - DIP_DEPTH * notch
    return env


def word_clip(
    word: str,
    voice: str,
    rng: np.random.Generator,
    audio_rate_hz: float = 8000.0,
) -> AudioClip:
    """One utterance of a template word in a template voice, with seeded
    per-utterance jitter in phase, component amplitudes, detune, and level."""
    w = WORD_TEMPLATES[word]
    v = VOICE_PROFILES[voice]

    n = int(round(w.duration_s * audio_rate_hz))
    t = np.arange(n) / audio_rate_hz
    sig = np.zeros(n)

    for h in range(1, N_HARMONICS + 1):
        amp = HARMONIC_LEVEL / h**v.tilt * (1.0 + rng.uniform(-0.04, 0.04))
        freq = h * v.f0_hz + rng.uniform(-0.5, 0.5)
        sig += amp * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
    for alias, carrier in zip(COMB_ALIASES, COMB_CARRIERS):
        amp = TONE_LEVEL * (1.0 + rng.uniform(-0.04, 0.04))
        freq = alias + carrier + v.formant_offset_hz + rng.uniform(-0.5, 0.5)
        sig += amp * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))

    if w.am_rate_hz > 0:
        sig *= 1.0 + w.am_depth * np.sin(2 * np.pi * w.am_rate_hz * t + rng.uniform(0, 2 * np.pi))
    sig *= _envelope(n, w, audio_rate_hz)

    # equalize RMS across words so the voice-strength ladder is the only
    # systematic level cue; words stay separable via duration, modulation,
    # and envelope statistics
    sig /= np.sqrt(np.mean(sig * sig))
    level = _TOP_RMS * (v.strength / _MAX_STRENGTH)
    sig *= level * (1.0 + rng.uniform(-0.02, 0.02))
    peak = float(np.max(np.abs(sig)))
    if peak > 0.95:
        sig *= 0.95 / peak
    return AudioClip(sample_rate_hz=audio_rate_hz, samples=sig, label=word)


def demo_model(cfg: DemoConfig, utterance_seed: int) -> ResponseModel:
    return ResponseModel(
        sensor_rate_hz=cfg.sensor_rate_hz,
        noise_sigma=cfg.noise_sigma,
        volume_gain=cfg.volume_gain,
        seed=utterance_seed,
    )


def utterance_trace(
    word: str, voice: str, rep: int, cfg: DemoConfig = DemoConfig()
) -> SensorTrace:
    """Synthesize a single demo utterance into the accelerometer domain."""
    w, v = WORDS.index(word), VOICES.index(voice)
    rng = np.random.default_rng([cfg.seed, v, w, rep])
    clip = word_clip(word, voice, rng, cfg.audio_rate_hz)
    model = demo_model(cfg, utterance_seed=int(rng.integers(0, 2**31)))
    trace = synthesize_trace(clip, model, lead_s=DEMO_LEAD_S, trail_s=DEMO_TRAIL_S)
    meta = dict(trace.meta)
    meta.update({"demo_word": word, "demo_voice": voice, "demo_rep": str(rep)})
    return SensorTrace(trace.sample_rate_hz, trace.t, trace.x, trace.y, trace.z, meta)


def generate_demo_corpus(out_dir, cfg: DemoConfig = DemoConfig()) -> Path:
    """Write the full corpus (traces + manifest) and return the manifest path.

    Layout: ``traces/<word>_<voice>_<rep>.csv`` next to ``manifest.csv`` with
    columns ``trace_path,label,speaker,gender``.
    """
    out_dir = Path(out_dir)
    trace_dir = out_dir / "traces"
    trace_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for voice in VOICES:
        for word in WORDS:
            for rep in range(cfg.repetitions):
                trace = utterance_trace(word, voice, rep, cfg)
                rel = f"traces/{word}_{voice}_{rep}.csv"
                save_trace(trace, out_dir / rel, format="csv")
                rows.append((rel, word, voice, VOICE_PROFILES[voice].gender))
    manifest = out_dir / "manifest.csv"
    with open(manifest, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["trace_path", "label", "speaker", "gender"])
        writer.writerows(rows)
    return manifest


def sentence_trace(
    words,
    voice: str,
    cfg: DemoConfig = DemoConfig(),
    gap_s: float = 0.35,
    seed: int = 0,
) -> tuple[SensorTrace, list[tuple[float, float]]]:
    """A multi-word utterance plus ground-truth word spans.

    Words are separated by silent gaps of ``gap_s`` seconds.  The returned
    spans are (start, end) in the time axis of the produced trace, so they
    stay valid after protocol trimming (timestamps are preserved).
    """
    rng = np.random.default_rng([cfg.seed, seed, VOICES.index(voice)])
    rate = cfg.audio_rate_hz
    pieces = []
    spans_audio = []
    cursor = 0
    for word in words:
        clip = word_clip(word, voice, rng, rate)
        pieces.append(clip.samples)
        spans_audio.append((cursor, cursor + clip.n))
        cursor += clip.n
        gap = int(round(gap_s * rate))
        pieces.append(np.zeros(gap))
        cursor += gap
    audio = np.concatenate(pieces[:-1])  # no trailing gap
    clip = AudioClip(sample_rate_hz=rate, samples=audio, label="sentence")
    model = demo_model(cfg, utterance_seed=int(rng.integers(0, 2**31)))
    trace = synthesize_trace(clip, model, lead_s=DEMO_LEAD_S, trail_s=DEMO_TRAIL_S)
    spans = [
        (DEMO_LEAD_S + a / rate, DEMO_LEAD_S + b / rate) for a, b in spans_audio
    ]
    return trace, spans
