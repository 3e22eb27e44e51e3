"""PCM ingestion, framing, and the segmental-SNR fidelity metric.

Audio enters the codec as mono 16-bit PCM (WAV/RIFF or headerless raw
little-endian) and is normalized to [-1, 1) by scaling with 1/32768.
SEGSNR is the per-frame SNR in dB averaged over frames, with each frame
clamped to [-10, +60] dB and zero-energy frames excluded so that silence
neither inflates nor sinks the average.
"""

import wave
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_float_vector

PCM_SCALE = 32768.0

SEGSNR_FLOOR_DB = -10.0
SEGSNR_CEIL_DB = 60.0

DEFAULT_SAMPLE_RATE = 8000
DEFAULT_FRAME_LEN = 200  # 25 ms at 8 kHz


class AudioFormatError(ValueError):
    """Raised for malformed, multichannel, or empty PCM input."""


@dataclass(frozen=True)
class SignalBuffer:
    """Mono signal with amplitudes normalized to [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise AudioFormatError(f"samples must be 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise AudioFormatError("samples contain non-finite values")
        if self.sample_rate_hz <= 0:
            raise AudioFormatError("sample_rate_hz must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]


@dataclass(frozen=True)
class FramePlan:
    """Non-overlapping framing: hop equals frame_len."""

    frame_len: int = DEFAULT_FRAME_LEN

    def __post_init__(self):
        if self.frame_len <= 0:
            raise ValueError("frame_len must be positive")


@dataclass
class SegSnrReport:
    per_frame_db: np.ndarray
    mean_db: float
    across_files_std_db: float | None = None
    n_excluded_frames: int = 0
    clamp_db: tuple = field(default=(SEGSNR_FLOOR_DB, SEGSNR_CEIL_DB))


def load_pcm(path, format="wav-pcm16", sample_rate_override=None):
    """Load mono 16-bit PCM as a SignalBuffer scaled by 1/32768.

    ``format`` is ``"wav-pcm16"`` (RIFF) or ``"raw-pcm16-le"`` (headerless
    little-endian; requires ``sample_rate_override`` or defaults to 8 kHz).
    """
    if format == "wav-pcm16":
        try:
            with wave.open(str(path), "rb") as wf:
                n_channels = wf.getnchannels()
                sampwidth = wf.getsampwidth()
                rate = wf.getframerate()
                n_frames = wf.getnframes()
                raw = wf.readframes(n_frames)
        except (wave.Error, EOFError) as exc:
            raise AudioFormatError(f"malformed WAV file {path}: {exc}") from exc
        if n_channels != 1:
            raise AudioFormatError(
                f"{path}: expected mono input, got {n_channels} channels"
            )
        if sampwidth != 2:
            raise AudioFormatError(
                f"{path}: expected 16-bit PCM, got {8 * sampwidth}-bit"
            )
        data = np.frombuffer(raw, dtype="<i2")
        rate = int(sample_rate_override or rate)
    elif format == "raw-pcm16-le":
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) % 2 != 0:
            raise AudioFormatError(f"{path}: raw PCM16 byte count is odd")
        data = np.frombuffer(raw, dtype="<i2")
        rate = int(sample_rate_override or DEFAULT_SAMPLE_RATE)
    else:
        raise ValueError(f"unknown format {format!r}")

    if data.size == 0:
        raise AudioFormatError(f"{path}: zero-length PCM stream")
    samples = data.astype(np.float64) / PCM_SCALE
    return SignalBuffer(samples=samples, sample_rate_hz=rate)


def save_pcm(buf, path, format="wav-pcm16"):
    """Write a SignalBuffer as mono 16-bit PCM; inverse of load_pcm.

    Values are scaled by 32768, rounded to nearest, and clipped to the
    int16 range, so load_pcm(save_pcm(x)) round-trips bit-exactly for
    any buffer that came from load_pcm.
    """
    data = np.clip(np.rint(buf.samples * PCM_SCALE), -32768, 32767).astype("<i2")
    if format == "wav-pcm16":
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(1)
            wf.setsampwidth(2)
            wf.setframerate(buf.sample_rate_hz)
            wf.writeframes(data.tobytes())
    elif format == "raw-pcm16-le":
        with open(path, "wb") as fh:
            fh.write(data.tobytes())
    else:
        raise ValueError(f"unknown format {format!r}")


def frames(buf, plan):
    """Split into full non-overlapping frames plus the trailing remainder.

    Returns ``(frames, remainder)`` where ``frames`` has shape
    ``(n_frames, frame_len)`` and ``remainder`` holds the trailing partial
    samples (possibly empty). Nothing is dropped.
    """
    n = len(buf)
    frame_len = plan.frame_len
    n_full = n // frame_len
    full = buf.samples[: n_full * frame_len].reshape(n_full, frame_len)
    remainder = buf.samples[n_full * frame_len:]
    return full, remainder


def _padded_frames(samples, frame_len):
    n = samples.shape[0]
    n_frames = -(-n // frame_len)
    padded = np.zeros(n_frames * frame_len, dtype=np.float64)
    padded[:n] = samples
    return padded.reshape(n_frames, frame_len)


def segsnr(original, reconstructed, plan=FramePlan()):
    """Segmental SNR in dB between two equal-length buffers.

    Per frame: 10*log10(sum(x^2) / sum((x - xhat)^2)), clamped to
    [-10, +60] dB. Frames with zero signal energy are excluded from the
    mean. A trailing partial frame is zero-padded, which leaves its sums
    unchanged.
    """
    x = as_float_vector(original.samples, "original")
    y = as_float_vector(reconstructed.samples, "reconstructed")
    if x.shape[0] != y.shape[0]:
        raise ValueError(
            f"length mismatch: original {x.shape[0]} vs reconstructed {y.shape[0]}"
        )
    xf = _padded_frames(x, plan.frame_len)
    yf = _padded_frames(y, plan.frame_len)

    sig = np.sum(xf * xf, axis=1)
    err = np.sum((xf - yf) ** 2, axis=1)
    keep = sig > 0.0
    n_excluded = int(np.sum(~keep))
    if not np.any(keep):
        raise ValueError("zero frames after exclusion: no signal energy")

    sig = sig[keep]
    err = err[keep]
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(sig / np.where(err > 0.0, err, np.inf))
    db[err == 0.0] = np.inf
    db = np.clip(db, SEGSNR_FLOOR_DB, SEGSNR_CEIL_DB)
    return SegSnrReport(
        per_frame_db=db,
        mean_db=float(np.mean(db)),
        n_excluded_frames=n_excluded,
    )


def segsnr_across_files(reports):
    """Aggregate per-file SEGSNR reports: mean of the per-file means,
    with their standard deviation in across_files_std_db (the spread
    across speakers/files in a multi-file comparison)."""
    if not reports:
        raise ValueError("no reports to aggregate")
    means = np.array([r.mean_db for r in reports])
    return SegSnrReport(
        per_frame_db=means,
        mean_db=float(np.mean(means)),
        across_files_std_db=float(np.std(means)),
        n_excluded_frames=sum(r.n_excluded_frames for r in reports),
    )
