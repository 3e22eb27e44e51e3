"""Backward-adaptive ADPCM state machines and closed-loop codebook design.

Three schemes share one machine:

* ``scalar-adpcm``: scalar LPC predictor, adaptive scalar quantizer.
* ``vpred-scalar``: MLP vector predictor, residual vector quantized one
  component at a time by the adaptive scalar quantizer.
* ``nlpvq``: MLP vector predictor, residual vector quantized whole by a
  codebook.

Backward adaptation: each frame's predictor is retrained only on the
*reconstructed* samples of the previous frame, which the decoder also has,
so no coefficients travel in the bitstream. That forces two disciplines on
the implementation: every float that feeds the reconstruction is computed
by code shared between encoder and decoder, and all retraining randomness
is seeded from (stream seed, frame index) so both ends draw identical
nets. The stream seed itself is shared out of band, like the codebook
sidecar; it is not part of the wire format.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .audio import SignalBuffer
from .bitstream import (EncodedStream, StreamHeader, ZERO_HASH,
                        expected_code_count)
from .jayant import JayantState, sq_dequantize, sq_quantize
from .lpc import fit_linear_predictor, predict_linear
from .mlp import (DEFAULT_HIDDEN_DIM, TrainingConfig, committee_forward,
                  multi_start_train)
from .vq import (CodebookProvenance, codebook_hash, design_lbg,
                 design_random_lloyd, refine_codebook, vq_distortion,
                 vq_encode)

SCHEMES = ("scalar-adpcm", "vpred-scalar", "nlpvq")

# Per-frame retraining runs under a tighter iteration budget than offline
# training; raise it via CodecConfig.training if encoding time is no issue.
CODEC_LM_ITERATIONS = 15

DEFAULT_CLOSED_LOOP_ROUNDS = 2
BOOTSTRAP_BITS = 3
MIN_TRAINING_VECTORS_PER_CODEWORD = 50


class CodecError(ValueError):
    pass


def nq_equivalent(m, n):
    """Equivalent quantization bits per sample: log2(M) / N."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be >= 1")
    return math.log2(m) / n


def derive_seed(*parts):
    """Stable non-negative integer from a tuple of non-negative integers;
    used to give each frame (and each design) its own seed stream."""
    seq = np.random.SeedSequence(entropy=tuple(int(p) for p in parts))
    return int(seq.generate_state(1, np.uint64)[0])


def default_codec_training(rng_seed=0):
    return TrainingConfig(rng_seed=rng_seed,
                          max_lm_iterations=CODEC_LM_ITERATIONS)


@dataclass(frozen=True)
class CodecConfig:
    scheme: str = "scalar-adpcm"
    frame_len: int = 200
    vector_dim: int = 2
    predictor_order: int = 10
    nq_bits_per_sample: float = 3.0
    training: TrainingConfig = field(default_factory=default_codec_training)
    jayant: JayantState | None = None
    codebook_ref: str | None = None
    warm_start: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise CodecError(f"unknown scheme {self.scheme!r}")
        if self.frame_len % self.vector_dim != 0:
            raise CodecError("frame_len must be divisible by vector_dim")
        if self.predictor_order + self.vector_dim > self.frame_len:
            raise CodecError("frame too short for predictor context + vector")
        if self.training.rng_seed < 0:
            raise CodecError("rng_seed must be non-negative")
        if self.scheme != "nlpvq":
            bits = self.nq_bits_per_sample
            if bits != int(bits) or not 2 <= int(bits) <= 5:
                raise CodecError(
                    "scalar schemes need an integer nq_bits_per_sample in [2, 5]")
        if self.scheme == "scalar-adpcm" \
                and self.frame_len < 2 * self.predictor_order:
            raise CodecError("frame too short to refit the linear predictor")

    def jayant_template(self):
        """Initial scalar-quantizer state (also what goes in the header)."""
        if self.jayant is not None:
            return self.jayant
        bits = int(self.nq_bits_per_sample) if self.scheme != "nlpvq" \
            else BOOTSTRAP_BITS
        return JayantState(bits=bits)

    def check_codebook(self, codebook):
        if self.scheme == "nlpvq":
            if codebook is None:
                raise CodecError("scheme nlpvq requires a codebook")
            if codebook.dim != self.vector_dim:
                raise CodecError(
                    f"codebook dim {codebook.dim} != vector_dim {self.vector_dim}")
            nq = nq_equivalent(codebook.size, self.vector_dim)
            if abs(nq - self.nq_bits_per_sample) > 1e-9:
                raise CodecError(
                    f"codebook size {codebook.size} gives nq {nq}, "
                    f"config says {self.nq_bits_per_sample}")
            if self.codebook_ref is not None \
                    and self.codebook_ref != codebook_hash(codebook):
                raise CodecError("codebook hash does not match codebook_ref")
        elif codebook is not None:
            raise CodecError(f"scheme {self.scheme} takes no codebook")


def training_windows(frame, order, vector_dim):
    """Sliding stride-N windows over one reconstructed frame: contexts of
    ``order`` consecutive samples, targets of the next ``vector_dim``."""
    length = frame.shape[0]
    starts = range(0, length - order - vector_dim + 1, vector_dim)
    contexts = np.stack([frame[p:p + order] for p in starts])
    targets = np.stack([frame[p + order:p + order + vector_dim]
                        for p in starts])
    return contexts, targets


class _CodecMachine:
    """State shared by encoder and decoder.

    Holds the reconstructed signal, the adaptive quantizer state, and the
    current predictor; every arithmetic step that touches the
    reconstruction is identical on both sides.
    """

    def __init__(self, cfg, codebook, n_padded):
        self.cfg = cfg
        self.codebook = codebook
        self.recon = np.zeros(n_padded)
        self.jayant = cfg.jayant_template()
        self.predictor = None  # None = cold-start zero predictor (frame 0)

    def begin_frame(self, t):
        if t == 0:
            return
        cfg = self.cfg
        lo = (t - 1) * cfg.frame_len
        prev = self.recon[lo:lo + cfg.frame_len]
        if cfg.scheme == "scalar-adpcm":
            self.predictor = fit_linear_predictor(prev, cfg.predictor_order)
            return
        contexts, targets = training_windows(
            prev, cfg.predictor_order, cfg.vector_dim)
        frame_cfg = replace(
            cfg.training, rng_seed=derive_seed(cfg.training.rng_seed, t))
        initial = None
        if cfg.warm_start and self.predictor is not None:
            initial = self.predictor.members
        self.predictor = multi_start_train(
            contexts, targets, frame_cfg,
            input_dim=cfg.predictor_order,
            hidden_dim=DEFAULT_HIDDEN_DIM,
            output_dim=cfg.vector_dim,
            initial_nets=initial,
        )

    def _context(self, pos):
        order = self.cfg.predictor_order
        if pos >= order:
            return self.recon[pos - order:pos]
        return np.concatenate([np.zeros(order - pos), self.recon[:pos]])

    def predict_sample(self, pos):
        if self.predictor is None:
            return 0.0
        # predict_linear takes the context most recent first
        return predict_linear(self.predictor, self._context(pos)[::-1])

    def predict_vector(self, pos):
        if self.predictor is None:
            return np.zeros(self.cfg.vector_dim)
        return committee_forward(self.predictor, self._context(pos))

    def apply_sample(self, pos, prediction, code):
        deq, self.jayant = sq_dequantize(self.jayant, code)
        self.recon[pos] = prediction + deq

    def apply_codeword(self, pos, prediction, index):
        deq = self.codebook.codewords[index]
        self.recon[pos:pos + self.cfg.vector_dim] = prediction + deq


def _padded_length(n, frame_len):
    return -(-n // frame_len) * frame_len


def encode(signal, cfg, codebook=None):
    """Encode a SignalBuffer; returns (EncodedStream, reconstruction,
    residual vectors).

    The reconstruction is exactly what the decoder will produce. The
    residuals are the pre-quantization prediction errors, grouped into
    vector_dim vectors, for use as VQ training material. The tail is
    zero-padded to a whole frame internally; padded positions emit codes
    but are trimmed from the reconstruction and residuals.
    """
    cfg.check_codebook(codebook)
    n = len(signal)
    if n < cfg.frame_len:
        raise CodecError(
            f"signal of {n} samples is shorter than one frame ({cfg.frame_len})")
    n_padded = _padded_length(n, cfg.frame_len)
    x = np.zeros(n_padded)
    x[:n] = signal.samples

    machine = _CodecMachine(cfg, codebook, n_padded)
    vdim = cfg.vector_dim
    codes = []
    prediction_errors = np.zeros(n_padded)

    for t in range(n_padded // cfg.frame_len):
        machine.begin_frame(t)
        lo = t * cfg.frame_len
        if cfg.scheme == "scalar-adpcm":
            for pos in range(lo, lo + cfg.frame_len):
                prediction = machine.predict_sample(pos)
                residual = x[pos] - prediction
                prediction_errors[pos] = residual
                code, _, _ = sq_quantize(machine.jayant, residual)
                machine.apply_sample(pos, prediction, code)
                codes.append(code)
        else:
            for pos in range(lo, lo + cfg.frame_len, vdim):
                prediction = machine.predict_vector(pos)
                residual = x[pos:pos + vdim] - prediction
                prediction_errors[pos:pos + vdim] = residual
                if cfg.scheme == "vpred-scalar":
                    for i in range(vdim):
                        code, _, _ = sq_quantize(machine.jayant, residual[i])
                        machine.apply_sample(pos + i, prediction[i], code)
                        codes.append(code)
                else:
                    index, _ = vq_encode(codebook, residual)
                    machine.apply_codeword(pos, prediction, index)
                    codes.append(index)

    # Residual vectors for VQ training: only those starting inside the
    # real signal (padded-tail vectors are synthetic).
    rows = prediction_errors.reshape(-1, vdim)
    residuals = rows[: -(-n // vdim)].copy()

    header = _make_header(cfg, signal.sample_rate_hz, n, codebook)
    stream = EncodedStream(header=header,
                           codes=np.asarray(codes, dtype=np.int64))
    reconstruction = SignalBuffer(samples=machine.recon[:n].copy(),
                                  sample_rate_hz=signal.sample_rate_hz)
    return stream, reconstruction, residuals


def _make_header(cfg, sample_rate, total_samples, codebook):
    if cfg.scheme == "nlpvq":
        m = codebook.size
        cb_hash = bytes.fromhex(codebook_hash(codebook))
    else:
        m = 1 << int(cfg.nq_bits_per_sample)
        cb_hash = ZERO_HASH
    return StreamHeader(
        scheme=cfg.scheme,
        sample_rate=sample_rate,
        frame_len=cfg.frame_len,
        vector_dim=cfg.vector_dim,
        predictor_order=cfg.predictor_order,
        codebook_size=m,
        initial_step=cfg.jayant_template().step,
        codebook_hash=cb_hash,
        total_samples=total_samples,
    )


def config_from_header(header, training=None, jayant=None, warm_start=False):
    """Rebuild the codec configuration implied by a stream header.

    The pieces the wire format does not carry (training seed, multiplier
    tables, step bounds) default to the package defaults; pass matching
    ``training``/``jayant`` values if the encoder overrode them.
    """
    if header.scheme == "nlpvq":
        nq = header.nq_per_sample
        bits = BOOTSTRAP_BITS
    else:
        nq = header.nq_per_sample
        bits = int(round(nq))
    if jayant is None:
        jayant = JayantState(bits=bits, step=header.initial_step)
    elif jayant.step != header.initial_step:
        raise CodecError("jayant template disagrees with the header step")
    return CodecConfig(
        scheme=header.scheme,
        frame_len=header.frame_len,
        vector_dim=header.vector_dim,
        predictor_order=header.predictor_order,
        nq_bits_per_sample=nq,
        training=training or default_codec_training(),
        jayant=jayant,
        warm_start=warm_start,
    )


def decode(stream, codebook=None, config=None):
    """Decode an EncodedStream back to a SignalBuffer.

    Replays the encoder's backward adaptation from the code indices alone;
    the output is bit-identical to the reconstruction encode() returned.
    ``config`` must match the encoder's configuration where the header
    does not pin it (seeds, multiplier tables); defaults reproduce an
    encoder run with default settings.
    """
    header = stream.header
    if config is None:
        config = config_from_header(header)
    else:
        _check_config_matches_header(config, header)
    if header.scheme == "nlpvq":
        if codebook is None:
            raise CodecError("scheme nlpvq requires the codebook sidecar")
        if bytes.fromhex(codebook_hash(codebook)) != header.codebook_hash:
            raise CodecError("codebook hash mismatch: wrong codebook file")
    elif header.codebook_hash != ZERO_HASH:
        raise CodecError("scalar stream carries a nonzero codebook hash")

    n = header.total_samples
    if n == 0:
        return SignalBuffer(samples=np.zeros(0),
                            sample_rate_hz=header.sample_rate)
    expected = expected_code_count(header)
    if stream.codes.shape[0] != expected:
        raise CodecError(
            f"truncated stream: expected {expected} codes, "
            f"got {stream.codes.shape[0]}")

    n_padded = _padded_length(n, header.frame_len)
    machine = _CodecMachine(config, codebook, n_padded)
    vdim = header.vector_dim
    codes = stream.codes
    k = 0
    for t in range(n_padded // header.frame_len):
        machine.begin_frame(t)
        lo = t * header.frame_len
        if header.scheme == "scalar-adpcm":
            for pos in range(lo, lo + header.frame_len):
                prediction = machine.predict_sample(pos)
                machine.apply_sample(pos, prediction, int(codes[k]))
                k += 1
        elif header.scheme == "vpred-scalar":
            for pos in range(lo, lo + header.frame_len, vdim):
                prediction = machine.predict_vector(pos)
                for i in range(vdim):
                    machine.apply_sample(pos + i, prediction[i],
                                         int(codes[k]))
                    k += 1
        else:
            for pos in range(lo, lo + header.frame_len, vdim):
                prediction = machine.predict_vector(pos)
                machine.apply_codeword(pos, prediction, int(codes[k]))
                k += 1
    return SignalBuffer(samples=machine.recon[:n].copy(),
                        sample_rate_hz=header.sample_rate)


def closed_loop_design(corpus, cfg, sizes, algorithms=("random-lloyd", "lbg"),
                       rounds=DEFAULT_CLOSED_LOOP_ROUNDS):
    """Design residual codebooks in closed loop with the codec.

    Round 0 encodes the corpus with the vector predictor and the 3-bit
    adaptive scalar quantizer and designs one codebook per (algorithm,
    size) on the collected residual vectors. Each later round re-encodes
    the corpus with each codebook in place (scheme nlpvq), collects that
    codebook's own residuals, and updates the codebook on them with Lloyd
    iterations. Sizes that are not powers of two are designed by
    random-lloyd only.

    Returns (designs, log): designs maps (algorithm, size) -> Codebook;
    log has one record per designed/updated codebook with its distortion
    on its own round's training set and, from round 1 on, the previous
    codebook's distortion on that same set.
    """
    sizes = sorted({int(m) for m in sizes})
    if not sizes:
        raise CodecError("no codebook sizes requested")
    for alg in algorithms:
        if alg not in ("random-lloyd", "lbg"):
            raise CodecError(f"unknown design algorithm {alg!r}")

    boot_cfg = replace(cfg, scheme="vpred-scalar",
                       nq_bits_per_sample=float(BOOTSTRAP_BITS),
                       jayant=None, codebook_ref=None)
    _, _, residuals = encode(corpus, boot_cfg)
    needed = MIN_TRAINING_VECTORS_PER_CODEWORD * max(sizes)
    if residuals.shape[0] < needed:
        raise CodecError(
            f"insufficient residuals: got {residuals.shape[0]}, "
            f"need {needed} for the largest codebook")

    designs = {}
    log = []
    for m in sizes:
        for alg in algorithms:
            if alg == "lbg" and (m & (m - 1)) != 0:
                continue
            if alg == "lbg":
                cb = design_lbg(residuals, m)
            else:
                cb = design_random_lloyd(
                    residuals, m,
                    seed=derive_seed(cfg.training.rng_seed, m, 0))
            designs[(alg, m)] = cb
            log.append({
                "round": 0, "algorithm": alg, "size": m,
                "training_size": residuals.shape[0],
                "distortion": vq_distortion(cb, residuals),
                "previous_distortion": None,
            })

    for r in range(1, rounds + 1):
        for (alg, m), cb in list(designs.items()):
            nl_cfg = replace(cfg, scheme="nlpvq",
                             nq_bits_per_sample=nq_equivalent(
                                 m, cfg.vector_dim),
                             codebook_ref=None)
            _, _, own_residuals = encode(corpus, nl_cfg, codebook=cb)
            previous = vq_distortion(cb, own_residuals)
            refined = refine_codebook(cb, own_residuals)
            refined = replace(refined, provenance=CodebookProvenance(
                algorithm=alg, closed_loop_iteration=r,
                training_size=own_residuals.shape[0]))
            designs[(alg, m)] = refined
            log.append({
                "round": r, "algorithm": alg, "size": m,
                "training_size": own_residuals.shape[0],
                "distortion": vq_distortion(refined, own_residuals),
                "previous_distortion": previous,
            })
    return designs, log


def _check_config_matches_header(config, header):
    mismatches = [
        name for name, got, want in [
            ("scheme", config.scheme, header.scheme),
            ("frame_len", config.frame_len, header.frame_len),
            ("vector_dim", config.vector_dim, header.vector_dim),
            ("predictor_order", config.predictor_order,
             header.predictor_order),
        ] if got != want
    ]
    if abs(config.nq_bits_per_sample - header.nq_per_sample) > 1e-9:
        mismatches.append("nq_bits_per_sample")
    if config.scheme != "nlpvq" \
            and config.jayant_template().step != header.initial_step:
        mismatches.append("initial_step")
    if mismatches:
        raise CodecError(f"config disagrees with header on: {mismatches}")
