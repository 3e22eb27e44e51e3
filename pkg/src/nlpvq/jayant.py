"""Backward-adaptive scalar quantizer with per-level step multipliers.

A mid-rise uniform quantizer whose step size adapts one sample at a time:
after each sample the step is multiplied by a factor keyed to the emitted
magnitude level (inner levels shrink the step, outer levels grow it) and
clamped into [step_min, step_max]. Because the factor depends only on the
emitted code, encoder and decoder track the same step from the codes alone.

Code layout: with 2^bits levels there are L = 2^(bits-1) magnitudes per
sign; code = k for +(2k+1)*step/2 and L + k for -(2k+1)*step/2. An input
of exactly 0 maps to the positive inner level (a mid-rise quantizer has no
zero level).
"""

from dataclasses import dataclass, replace

import numpy as np

# Classical multiplier tables for 2-4 bits; the 5-bit table extends the
# same inner-shrink / outer-grow pattern. All are configuration defaults,
# swappable via load_multiplier_tables.
DEFAULT_MULTIPLIERS = {
    2: (0.8, 1.6),
    3: (0.9, 0.9, 1.25, 1.75),
    4: (0.9, 0.9, 0.9, 0.9, 1.2, 1.6, 2.0, 2.4),
    5: (0.85, 0.85, 0.85, 0.85, 0.85, 0.85, 0.9, 0.9,
        0.95, 1.0, 1.1, 1.2, 1.4, 1.6, 2.0, 2.4),
}

DEFAULT_STEP = 0.02
DEFAULT_STEP_MIN = 1e-5
DEFAULT_STEP_MAX = 1.0


@dataclass(frozen=True)
class JayantState:
    """Immutable quantizer state threaded through successive samples."""

    bits: int = 3
    step: float = DEFAULT_STEP
    step_min: float = DEFAULT_STEP_MIN
    step_max: float = DEFAULT_STEP_MAX
    multipliers: tuple = None

    def __post_init__(self):
        if not 2 <= self.bits <= 5:
            raise ValueError(f"bits must be in [2, 5], got {self.bits}")
        if self.multipliers is None:
            object.__setattr__(
                self, "multipliers", DEFAULT_MULTIPLIERS[self.bits]
            )
        mult = tuple(float(m) for m in self.multipliers)
        object.__setattr__(self, "multipliers", mult)
        if len(mult) != self.n_levels:
            raise ValueError(
                f"need {self.n_levels} multipliers for {self.bits} bits, "
                f"got {len(mult)}"
            )
        if min(mult) <= 0:
            raise ValueError("multipliers must be positive")
        if not (min(mult) < 1.0 < max(mult)):
            raise ValueError("multiplier table must satisfy min < 1 < max")
        if not (0 < self.step_min <= self.step_max):
            raise ValueError("need 0 < step_min <= step_max")
        if not (self.step_min <= self.step <= self.step_max):
            raise ValueError("step must lie within [step_min, step_max]")

    @property
    def n_levels(self):
        """Magnitude levels per sign: 2^(bits-1)."""
        return 1 << (self.bits - 1)

    @property
    def n_codes(self):
        return 1 << self.bits


def sq_dequantize(state, code):
    """Reproduce (dequantized value, next state) from a code index alone.

    This is the decoder side of the adaptation loop; sq_quantize funnels
    through it so both sides compute bit-identical values.
    """
    n_levels = state.n_levels
    if not 0 <= code < state.n_codes:
        raise ValueError(f"code {code} out of range for {state.bits} bits")
    level = code % n_levels
    sign = -1.0 if code >= n_levels else 1.0
    dequantized = sign * (2 * level + 1) * state.step / 2.0
    next_step = min(
        max(state.step * state.multipliers[level], state.step_min),
        state.step_max,
    )
    return dequantized, replace(state, step=next_step)


def sq_quantize(state, x):
    """Quantize one sample: returns (code, dequantized, next_state).

    Mid-rise with 2^bits levels at +/-(2k+1)*step/2, saturating at the
    outermost level. x = 0 maps to the positive inner level.
    """
    if not np.isfinite(x):
        raise ValueError(f"cannot quantize non-finite sample {x}")
    n_levels = state.n_levels
    level = min(int(abs(x) / state.step), n_levels - 1)
    code = level if x >= 0 else n_levels + level
    dequantized, next_state = sq_dequantize(state, code)
    return code, dequantized, next_state


def sq_quantize_vector(state, residual):
    """Quantize each component in order, threading step adaptation between
    components. Returns (codes, dequantized, next_state)."""
    codes = np.empty(len(residual), dtype=np.int64)
    dequantized = np.empty(len(residual), dtype=np.float64)
    for i, x in enumerate(residual):
        codes[i], dequantized[i], state = sq_quantize(state, x)
    return codes, dequantized, state


def load_multiplier_tables(path):
    """Parse multiplier tables from a text config.

    One table per line: ``<bits>: <m0> <m1> ...`` with ``#`` comments.
    Returns a dict {bits: tuple of multipliers}; entries not present fall
    back to DEFAULT_MULTIPLIERS at use sites.
    """
    tables = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                bits_part, values_part = line.split(":", 1)
                bits = int(bits_part)
                values = tuple(float(v) for v in values_part.split())
            except ValueError as exc:
                raise ValueError(
                    f"{path}:{lineno}: expected '<bits>: m0 m1 ...'"
                ) from exc
            if len(values) != 1 << (bits - 1):
                raise ValueError(
                    f"{path}:{lineno}: {bits}-bit table needs "
                    f"{1 << (bits - 1)} multipliers, got {len(values)}"
                )
            tables[bits] = values
    return tables
