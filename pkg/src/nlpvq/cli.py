"""Command-line front end: codebook training, encoding, decoding, entropy
analysis, and experiment-matrix reports.

All commands are deterministic under a fixed --seed and write their
outputs atomically (temp file + rename). Exit codes: 0 when every
requested output was written, 2 for usage errors and missing inputs,
1 for runtime failures.
"""

import argparse
import csv
import json
import os
import sys

from .audio import (AudioFormatError, FramePlan, load_pcm, save_pcm,
                    segsnr, segsnr_across_files)
from .bitstream import BitstreamError, read_stream, write_stream
from .codec import (CodecConfig, CodecError, closed_loop_design,
                    config_from_header, decode, default_codec_training,
                    encode, nq_equivalent)
from .entropy import (REPORT_FIELDS, analyze_stream, quantizer_diagnosis,
                      report_row, report_to_json, write_report_csv)
from .jayant import JayantState, load_multiplier_tables
from .vq import codebook_hash, load_codebook, save_codebook

DEFAULT_SEED = 0

MATRIX_FIELDS = ["scheme", "algorithm", "nq", "input", "segsnr_db",
                 "segsnr_std_db"] + [
    f for f in REPORT_FIELDS if f not in ("scheme", "source")
]


def _atomic_write(path, write_fn):
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def _require_inputs(parser, paths):
    for path in paths:
        if not os.path.exists(path):
            parser.error(f"input file not found: {path}")


def _load_config_file(path):
    with open(path) as fh:
        doc = json.load(fh)
    if "seed" not in doc:
        raise ValueError(f"{path}: config files must pin 'seed'")
    return doc


def _resolve(args, key, config, default):
    """Explicit flag > config-file entry > built-in default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if config and key in config:
        return config[key]
    return default


def _guess_format(path, explicit):
    if explicit:
        return explicit
    return "wav-pcm16" if str(path).lower().endswith(".wav") \
        else "raw-pcm16-le"


def _jayant_template(bits, args, config):
    tables_path = _resolve(args, "multipliers", config, None)
    if tables_path is None:
        return JayantState(bits=bits)
    tables = load_multiplier_tables(tables_path)
    if bits not in tables:
        raise ValueError(f"{tables_path} has no {bits}-bit table")
    return JayantState(bits=bits, multipliers=tables[bits])


def _build_codec_config(args, config, scheme, nq):
    seed = int(_resolve(args, "seed", config, DEFAULT_SEED))
    frame_len = int(_resolve(args, "frame_len", config, 200))
    jayant = None
    if scheme != "nlpvq":
        jayant = _jayant_template(int(nq), args, config)
    return CodecConfig(
        scheme=scheme,
        frame_len=frame_len,
        nq_bits_per_sample=float(nq),
        training=default_codec_training(seed),
        jayant=jayant,
    )


def cmd_encode(args):
    config = _load_config_file(args.config) if args.config else None
    scheme = _resolve(args, "scheme", config, None)
    nq = _resolve(args, "nq", config, None)
    if scheme is None or nq is None:
        raise ValueError("encode needs --scheme and --nq (flag or config)")
    codebook_path = _resolve(args, "codebook", config, None)
    if scheme == "nlpvq" and codebook_path is None:
        args.parser.error("scheme nlpvq requires --codebook")
    _require_inputs(args.parser, [args.infile]
                    + ([codebook_path] if codebook_path else []))

    rate = _resolve(args, "rate", config, None)
    fmt = _guess_format(args.infile, _resolve(args, "format", config, None))
    signal = load_pcm(args.infile, format=fmt, sample_rate_override=rate)
    cfg = _build_codec_config(args, config, scheme, nq)
    codebook = load_codebook(codebook_path) if codebook_path else None

    stream, reconstruction, _ = encode(signal, cfg, codebook=codebook)
    _atomic_write(args.outfile, lambda tmp: write_stream(stream, tmp))
    report = segsnr(signal, reconstruction, FramePlan(cfg.frame_len))
    print(f"segsnr_db={report.mean_db:.12f}")
    print(f"wrote {args.outfile}: {len(stream.codes)} codes, "
          f"scheme={scheme}, nq={float(nq):g}")
    return 0


def cmd_decode(args):
    config = _load_config_file(args.config) if args.config else None
    codebook_path = _resolve(args, "codebook", config, None)
    _require_inputs(args.parser, [args.infile]
                    + ([codebook_path] if codebook_path else []))
    stream = read_stream(args.infile)
    codebook = load_codebook(codebook_path) if codebook_path else None
    if stream.header.scheme == "nlpvq" and codebook is None:
        args.parser.error("this stream needs --codebook (scheme nlpvq)")

    seed = int(_resolve(args, "seed", config, DEFAULT_SEED))
    bits = int(round(stream.header.nq_per_sample)) \
        if stream.header.scheme != "nlpvq" else 3
    jayant = None
    if stream.header.scheme != "nlpvq":
        jayant = _jayant_template(bits, args, config)
        jayant = JayantState(bits=bits, step=stream.header.initial_step,
                             multipliers=jayant.multipliers)
    cfg = config_from_header(stream.header,
                             training=default_codec_training(seed),
                             jayant=jayant)
    out = decode(stream, codebook=codebook, config=cfg)
    _atomic_write(args.outfile, lambda tmp: save_pcm(out, tmp))
    print(f"wrote {args.outfile}: {len(out)} samples "
          f"at {out.sample_rate_hz} Hz")
    return 0


def cmd_train_codebook(args):
    config = _load_config_file(args.config) if args.config else None
    _require_inputs(args.parser, [args.infile])
    os.makedirs(args.out_dir, exist_ok=True)

    sizes = [int(s) for s in args.sizes.split(",")]
    algorithms = []
    for name in args.algo.split(","):
        name = name.strip()
        algorithms.append("random-lloyd" if name == "random" else name)

    rate = _resolve(args, "rate", config, None)
    fmt = _guess_format(args.infile, _resolve(args, "format", config, None))
    corpus = load_pcm(args.infile, format=fmt, sample_rate_override=rate)
    cfg = _build_codec_config(args, config, "vpred-scalar", 3)

    designs, log = closed_loop_design(corpus, cfg, sizes=sizes,
                                      algorithms=tuple(algorithms),
                                      rounds=args.rounds)
    for (algorithm, m), codebook in sorted(designs.items()):
        path = os.path.join(args.out_dir, f"{algorithm}_M{m}.json")
        _atomic_write(path, lambda tmp, cb=codebook: save_codebook(cb, tmp))
        print(f"wrote {path}: nq={nq_equivalent(m, codebook.dim):g} "
              f"sha256={codebook_hash(codebook)[:12]}...")

    log_path = os.path.join(args.out_dir, "distortion_log.csv")

    def write_log(tmp):
        with open(tmp, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=[
                "round", "algorithm", "size", "training_size",
                "distortion", "previous_distortion"])
            writer.writeheader()
            for entry in log:
                writer.writerow(entry)

    _atomic_write(log_path, write_log)
    print(f"wrote {log_path}: {len(log)} design records")
    return 0


def _analyze_one(path):
    stream = read_stream(path)
    header = stream.header
    samples_per_code = header.vector_dim if header.scheme == "nlpvq" else 1
    report = analyze_stream(stream.codes, m=header.codebook_size,
                            n=samples_per_code)
    diagnosis = quantizer_diagnosis(report)
    return report, diagnosis, header


def cmd_analyze(args):
    if args.matrix:
        _require_inputs(args.parser, [args.matrix])
        return _run_matrix(args, args.matrix, args.outfile)
    if not args.infiles:
        args.parser.error("analyze needs input streams or --matrix")
    _require_inputs(args.parser, args.infiles)
    rows = []
    for path in args.infiles:
        report, diagnosis, header = _analyze_one(path)
        rows.append(report_row(report, diagnosis, scheme=header.scheme,
                               source=os.path.basename(path)))
        if args.json_dir:
            os.makedirs(args.json_dir, exist_ok=True)
            json_path = os.path.join(
                args.json_dir,
                os.path.splitext(os.path.basename(path))[0] + ".json")
            doc = report_to_json(report, diagnosis)

            def write_doc(tmp, d=doc):
                with open(tmp, "w") as fh:
                    fh.write(d)

            _atomic_write(json_path, write_doc)
        print(f"{path}: h0={report.h0:.4f} h1={report.h1:.4f} "
              f"nq={report.nq * report.n:.1f} bits/codeword "
              f"diagnosis={diagnosis}")
    _atomic_write(args.outfile, lambda tmp: write_report_csv(rows, tmp))
    print(f"wrote {args.outfile}: {len(rows)} rows")
    return 0


def cmd_report(args):
    _require_inputs(args.parser, [args.matrix])
    return _run_matrix(args, args.matrix, args.outfile)


def _run_matrix(args, matrix_path, out_csv):
    with open(matrix_path) as fh:
        matrix = json.load(fh)
    if "seed" not in matrix:
        raise ValueError(f"{matrix_path}: experiment matrix must pin 'seed'")
    seed = int(matrix["seed"])
    schemes = matrix["schemes"]
    nq_values = matrix["nq_values"]
    inputs = matrix["inputs"]
    codebook_dir = matrix.get("codebook_dir", ".")
    vq_algorithms = matrix.get("vq_algorithms", ["lbg"])
    _require_inputs(args.parser, inputs)

    rows = []
    for scheme in schemes:
        for nq in nq_values:
            for cell in _matrix_cells(scheme, nq, vq_algorithms,
                                      codebook_dir, args.parser):
                algorithm, codebook = cell
                cell_rows = [_run_cell(args, scheme, nq, algorithm,
                                       codebook, infile, seed)
                             for infile in inputs]
                rows.extend(cell_rows)
                if len(inputs) > 1:
                    rows.append(_summary_row(scheme, nq, algorithm,
                                             cell_rows))
    _atomic_write(out_csv, lambda tmp: _write_matrix_csv(rows, tmp))
    print(f"wrote {out_csv}: {len(rows)} rows")
    return 0


def _summary_row(scheme, nq, algorithm, cell_rows):
    """Mean SEGSNR and its spread across the input files (the sigma
    column of a multi-speaker table)."""
    aggregate = segsnr_across_files([r["_segsnr_report"]
                                     for r in cell_rows])
    return {
        "scheme": scheme, "algorithm": algorithm or "", "nq": float(nq),
        "input": f"(mean of {len(cell_rows)} files)",
        "segsnr_db": aggregate.mean_db,
        "segsnr_std_db": aggregate.across_files_std_db,
    }


def _matrix_cells(scheme, nq, vq_algorithms, codebook_dir, parser):
    if scheme != "nlpvq":
        if float(nq) != int(nq) or not 2 <= int(nq) <= 5:
            raise ValueError(
                f"scheme {scheme} cannot run at nq={nq}: needs an integer "
                "in [2, 5]")
        return [(None, None)]
    m = 2.0 ** (float(nq) * 2)
    if m != int(m):
        raise ValueError(f"nq={nq} at vector dimension 2 is not a whole "
                         "codebook size")
    cells = []
    for algorithm in vq_algorithms:
        path = os.path.join(codebook_dir, f"{algorithm}_M{int(m)}.json")
        if not os.path.exists(path):
            parser.error(f"matrix needs codebook file {path}")
        cells.append((algorithm, load_codebook(path)))
    return cells


def _run_cell(args, scheme, nq, algorithm, codebook, infile, seed):
    signal = load_pcm(infile, format=_guess_format(infile, None))
    cfg = CodecConfig(
        scheme=scheme,
        frame_len=int(getattr(args, "frame_len", None) or 200),
        nq_bits_per_sample=float(nq),
        training=default_codec_training(seed),
    )
    stream, reconstruction, _ = encode(signal, cfg, codebook=codebook)
    snr = segsnr(signal, reconstruction, FramePlan(cfg.frame_len))
    samples_per_code = cfg.vector_dim if scheme == "nlpvq" else 1
    report = analyze_stream(stream.codes, m=stream.header.codebook_size,
                            n=samples_per_code)
    diagnosis = quantizer_diagnosis(report)
    row = {"scheme": scheme, "algorithm": algorithm or "",
           "nq": float(nq), "input": os.path.basename(infile),
           "segsnr_db": snr.mean_db, "_segsnr_report": snr}
    base = report_row(report, diagnosis)
    for field in MATRIX_FIELDS[6:]:
        row[field] = base[field]
    return row


def _write_matrix_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MATRIX_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: v for k, v in row.items()
                             if not k.startswith("_")})


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nlpvq",
        description="Backward-adaptive speech codec with neural vector "
                    "prediction and VQ residual coding.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="stream seed for all retraining RNG (default 0)")
    common.add_argument("--frame-len", dest="frame_len", type=int,
                        default=None, help="frame length in samples "
                        "(default 200)")
    common.add_argument("--rate", type=int, default=None,
                        help="sample rate override for raw input")
    common.add_argument("--config", default=None,
                        help="JSON config file with defaults (must pin seed)")
    common.add_argument("--format", choices=["wav-pcm16", "raw-pcm16-le"],
                        default=None, help="input PCM container")
    common.add_argument("--multipliers", default=None,
                        help="text file with step-multiplier tables")

    sub = parser.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", parents=[common],
                         help="encode PCM to a bitstream")
    enc.add_argument("--in", dest="infile", required=True)
    enc.add_argument("--out", dest="outfile", required=True)
    enc.add_argument("--scheme", choices=["scalar-adpcm", "vpred-scalar",
                                          "nlpvq"], default=None)
    enc.add_argument("--nq", type=float, default=None,
                     help="quantization bits per sample")
    enc.add_argument("--codebook", default=None,
                     help="codebook JSON (required for nlpvq)")
    enc.set_defaults(func=cmd_encode)

    dec = sub.add_parser("decode", parents=[common],
                         help="decode a bitstream to WAV")
    dec.add_argument("--in", dest="infile", required=True)
    dec.add_argument("--out", dest="outfile", required=True)
    dec.add_argument("--codebook", default=None)
    dec.set_defaults(func=cmd_decode)

    train = sub.add_parser("train-codebook", parents=[common],
                           help="closed-loop residual codebook design")
    train.add_argument("--in", dest="infile", required=True)
    train.add_argument("--sizes", default="16,32,64,128,256",
                       help="comma-separated codebook sizes")
    train.add_argument("--algo", default="random,lbg",
                       help="comma-separated: random (alias random-lloyd), "
                            "lbg")
    train.add_argument("--rounds", type=int, default=2,
                       help="closed-loop update rounds after the bootstrap")
    train.add_argument("--out-dir", dest="out_dir", required=True)
    train.set_defaults(func=cmd_train_codebook)

    ana = sub.add_parser("analyze", parents=[common],
                         help="entropy report for encoded streams")
    ana.add_argument("--in", dest="infiles", nargs="*", default=[])
    ana.add_argument("--out", dest="outfile", required=True,
                     help="CSV report path")
    ana.add_argument("--json-dir", dest="json_dir", default=None,
                     help="also write one JSON report per stream")
    ana.add_argument("--matrix", default=None,
                     help="experiment matrix JSON: run encode+analyze per "
                          "(scheme, nq, input) cell")
    ana.set_defaults(func=cmd_analyze)

    rep = sub.add_parser("report", parents=[common],
                         help="SEGSNR + entropy table for an experiment "
                              "matrix")
    rep.add_argument("--matrix", required=True)
    rep.add_argument("--out", dest="outfile", required=True)
    rep.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    args.parser = parser
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (AudioFormatError, BitstreamError, CodecError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
