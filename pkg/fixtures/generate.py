#!/usr/bin/env python3
"""Regenerate the bundled 8 kHz test clips.

The clips are synthetic formant speech: voiced syllables (glottal pulse
trains through moving resonators) alternating with fricative-like noise
bursts and pauses, under a syllabic amplitude envelope and a low noise
floor. They are deterministic given the seeds below and carry no third-
party material. Their job is to exercise the codec with speech-shaped
statistics: strong short-term correlation for the predictors and slow
energy modulation for the quantizer diagnostics.

Usage: python fixtures/generate.py [output_dir]
"""

import os
import sys

import numpy as np
from scipy.signal import lfilter

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from nlpvq.audio import SignalBuffer, save_pcm  # noqa: E402

RATE = 8000

VOWEL_FORMANTS = {
    "a": (730, 1090, 2440),
    "e": (530, 1840, 2480),
    "i": (270, 2290, 3010),
    "o": (570, 840, 2410),
    "u": (300, 870, 2240),
}
FORMANT_BW = (60, 90, 120)


def _resonator(x, freq, bw):
    r = np.exp(-np.pi * bw / RATE)
    theta = 2 * np.pi * freq / RATE
    return lfilter([1.0 - r], [1.0, -2.0 * r * np.cos(theta), r * r], x)


def _glottal_pulses(n, f0_start, f0_end, rng):
    """Impulse train with linear pitch glide and a little jitter."""
    out = np.zeros(n)
    pos = 0.0
    while pos < n:
        frac = pos / n
        f0 = f0_start + (f0_end - f0_start) * frac
        f0 *= 1.0 + 0.01 * rng.standard_normal()
        out[int(pos)] = 1.0
        pos += RATE / max(f0, 50.0)
    # one-pole lowpass gives the pulses a glottal-ish spectral tilt
    return lfilter([1.0], [1.0, -0.9], out)


def _voiced_segment(n, vowel_a, vowel_b, f0, rng):
    src = _glottal_pulses(n, f0 * 1.08, f0 * 0.92, rng)
    fa = VOWEL_FORMANTS[vowel_a]
    fb = VOWEL_FORMANTS[vowel_b]
    glide = np.linspace(0.0, 1.0, n)
    out = np.zeros(n)
    # piecewise-constant formant tracks are close enough at syllable scale
    n_chunks = 8
    for c in range(n_chunks):
        lo = c * n // n_chunks
        hi = (c + 1) * n // n_chunks
        g = glide[(lo + hi) // 2]
        seg = src[lo:hi]
        acc = np.zeros(hi - lo)
        for (f1, f2), bw in zip(zip(fa, fb), FORMANT_BW):
            freq = f1 + (f2 - f1) * g
            acc += _resonator(seg, freq, bw)
        out[lo:hi] = acc
    return out


def _unvoiced_segment(n, rng):
    noise = rng.standard_normal(n)
    band = _resonator(noise, 2600 + 600 * rng.random(), 900)
    return band


def _envelope(n, rng):
    # hard attack (speech onsets are abrupt; they stress the predictor)
    attack = min(n, max(2, int(RATE * 0.004)))
    decay = int(n * (0.2 + 0.2 * rng.random()))
    env = np.ones(n)
    env[:attack] = np.linspace(0.0, 1.0, attack)
    env[n - decay:] = np.linspace(1.0, 0.05, decay)
    return env


def synthesize(duration_s, seed):
    rng = np.random.default_rng(seed)
    n_total = int(duration_s * RATE)
    out = np.zeros(n_total)
    vowels = list(VOWEL_FORMANTS)
    pos = 0
    f0_base = 110.0 + 80.0 * rng.random()
    while pos < n_total:
        if rng.random() < 0.5:
            pos += int(RATE * (0.08 + 0.25 * rng.random()))  # pause
            continue
        n_seg = int(RATE * (0.12 + 0.16 * rng.random()))
        n_seg = min(n_seg, n_total - pos)
        if n_seg < RATE // 25:
            break
        if rng.random() < 0.25:
            seg = _unvoiced_segment(n_seg, rng)
            level = 0.04 + 0.1 * rng.random()
        else:
            va, vb = rng.choice(vowels, 2, replace=True)
            f0 = f0_base * (0.85 + 0.3 * rng.random())
            seg = _voiced_segment(n_seg, va, vb, f0, rng)
            # bimodal loudness, murmur or full voice: gives the residual
            # stream the multi-scale structure real cadence has
            level = (0.1 if rng.random() < 0.6 else 0.9) \
                * (0.8 + 0.4 * rng.random())
        peak = np.max(np.abs(seg))
        if peak > 0:
            seg = seg / peak * level
        out[pos:pos + n_seg] += seg * _envelope(n_seg, rng)
        pos += n_seg + int(RATE * 0.02 * rng.random())
    # recording-style noise floor so silence is never bit-exact zero
    out += 10 ** (-57 / 20.0) * rng.standard_normal(n_total)
    out = 0.6 * out / np.max(np.abs(out))
    return SignalBuffer(samples=out, sample_rate_hz=RATE)


CLIPS = [
    ("clip_a.wav", 2.2, 20260810),
    ("clip_b.wav", 2.2, 31415926),
    ("train_10s.wav", 10.0, 27182818),
]


def main():
    out_dir = sys.argv[1] if len(sys.argv) > 1 else os.path.dirname(__file__)
    for name, duration, seed in CLIPS:
        buf = synthesize(duration, seed)
        path = os.path.join(out_dir, name)
        save_pcm(buf, path)
        print(f"wrote {path}: {len(buf)} samples at {buf.sample_rate_hz} Hz")


if __name__ == "__main__":
    main()
