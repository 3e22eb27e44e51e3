"""Backward-adaptive speech codec with nonlinear vector prediction and
vector-quantized residuals, plus entropy diagnostics for quantizer design."""

from .audio import (FramePlan, SegSnrReport, SignalBuffer, frames, load_pcm,
                    save_pcm, segsnr, segsnr_across_files)
from .codec import (CodecConfig, closed_loop_design, decode, encode,
                    nq_equivalent)
from .entropy import (EntropyReport, analyze_stream, entropy_h0, entropy_h1,
                      quantizer_diagnosis)
from .jayant import JayantState, sq_dequantize, sq_quantize, sq_quantize_vector
from .lpc import (LinearPredictor, LinearScalarPredictor,
                  fit_linear_predictor, predict_linear)
from .mlp import (Committee, MlpPredictor, MlpVectorPredictor, TrainingConfig,
                  committee_forward, lm_train, mlp_forward, multi_start_train)
from .vq import (Codebook, VectorQuantizer, design_lbg, design_random_lloyd,
                 lloyd_iterate, load_codebook, refine_codebook, save_codebook,
                 vq_distortion, vq_encode)

__version__ = "0.1.0"

__all__ = [
    "Codebook", "CodecConfig", "Committee", "EntropyReport", "FramePlan",
    "JayantState", "LinearPredictor", "LinearScalarPredictor", "MlpPredictor",
    "MlpVectorPredictor", "SegSnrReport", "SignalBuffer", "TrainingConfig",
    "VectorQuantizer", "analyze_stream", "closed_loop_design",
    "committee_forward", "decode", "design_lbg", "design_random_lloyd",
    "encode", "entropy_h0", "entropy_h1", "fit_linear_predictor", "frames",
    "lloyd_iterate", "lm_train", "load_codebook", "load_pcm", "mlp_forward",
    "multi_start_train", "nq_equivalent", "predict_linear",
    "quantizer_diagnosis", "refine_codebook", "save_codebook", "save_pcm",
    "segsnr", "segsnr_across_files", "sq_dequantize", "sq_quantize",
    "sq_quantize_vector",
    "vq_distortion", "vq_encode",
]
