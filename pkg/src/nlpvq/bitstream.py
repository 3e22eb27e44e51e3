"""Bitstream container: fixed header plus indices packed at a fixed bit
width, little-endian bit order within bytes.

Layout (all little-endian):
  magic "NLPQ" | version u8 | scheme u8 | sample_rate u32 | frame_len u16 |
  vector_dim u8 | predictor_order u8 | codebook_size u16 | initial_step f64 |
  codebook sha256 (32 bytes, zeroed for scalar schemes) | total_samples u64 |
  packed code indices
"""

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"NLPQ"
VERSION = 1

_HEADER = struct.Struct("<4sBBIHBBHd32sQ")

SCHEME_IDS = {"scalar-adpcm": 0, "vpred-scalar": 1, "nlpvq": 2}
SCHEME_NAMES = {v: k for k, v in SCHEME_IDS.items()}

ZERO_HASH = bytes(32)


class BitstreamError(ValueError):
    pass


@dataclass(frozen=True)
class StreamHeader:
    scheme: str
    sample_rate: int
    frame_len: int
    vector_dim: int
    predictor_order: int
    codebook_size: int
    initial_step: float
    codebook_hash: bytes
    total_samples: int

    @property
    def nq_per_sample(self):
        """Equivalent quantization bits per sample."""
        samples_per_code = self.vector_dim if self.scheme == "nlpvq" else 1
        return float(np.log2(self.codebook_size)) / samples_per_code

    @property
    def bits_per_index(self):
        return index_bit_width(self.codebook_size)


@dataclass(frozen=True)
class EncodedStream:
    header: StreamHeader
    codes: np.ndarray

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64)
        if codes.size and (codes.min() < 0
                           or codes.max() >= self.header.codebook_size):
            raise BitstreamError("code indices out of range for codebook size")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)


def index_bit_width(m):
    """Bits needed per index for an alphabet of m codewords (min 1)."""
    if m < 1:
        raise ValueError("alphabet size must be >= 1")
    return max(1, int(m - 1).bit_length())


def pack_indices(indices, bit_width):
    """Pack indices at bit_width bits each; the first index occupies the
    least significant bits of the first byte."""
    acc = 0
    n_bits = 0
    out = bytearray()
    for value in indices:
        value = int(value)
        if value < 0 or value >> bit_width:
            raise BitstreamError(
                f"index {value} does not fit in {bit_width} bits")
        acc |= value << n_bits
        n_bits += bit_width
        while n_bits >= 8:
            out.append(acc & 0xFF)
            acc >>= 8
            n_bits -= 8
    if n_bits:
        out.append(acc & 0xFF)
    return bytes(out)


def unpack_indices(data, bit_width, count):
    """Inverse of pack_indices; reads exactly count indices."""
    needed = (count * bit_width + 7) // 8
    if len(data) < needed:
        raise BitstreamError(
            f"truncated stream: need {needed} bytes of codes, have {len(data)}")
    mask = (1 << bit_width) - 1
    out = np.empty(count, dtype=np.int64)
    acc = 0
    n_bits = 0
    pos = 0
    for i in range(count):
        while n_bits < bit_width:
            acc |= data[pos] << n_bits
            pos += 1
            n_bits += 8
        out[i] = acc & mask
        acc >>= bit_width
        n_bits -= bit_width
    return out


def write_stream(stream, path):
    header = stream.header
    scheme_id = SCHEME_IDS.get(header.scheme)
    if scheme_id is None:
        raise BitstreamError(f"unknown scheme {header.scheme!r}")
    if len(header.codebook_hash) != 32:
        raise BitstreamError("codebook hash must be 32 bytes")
    blob = _HEADER.pack(
        MAGIC, VERSION, scheme_id, header.sample_rate, header.frame_len,
        header.vector_dim, header.predictor_order, header.codebook_size,
        header.initial_step, header.codebook_hash, header.total_samples,
    )
    blob += pack_indices(stream.codes, header.bits_per_index)
    with open(path, "wb") as fh:
        fh.write(blob)


def read_stream(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise BitstreamError("truncated stream: header incomplete")
    (magic, version, scheme_id, sample_rate, frame_len, vector_dim,
     predictor_order, codebook_size, initial_step, codebook_hash,
     total_samples) = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise BitstreamError(f"bad magic {magic!r}")
    if version != VERSION:
        raise BitstreamError(f"unsupported version {version}")
    scheme = SCHEME_NAMES.get(scheme_id)
    if scheme is None:
        raise BitstreamError(f"unknown scheme id {scheme_id}")
    header = StreamHeader(
        scheme=scheme,
        sample_rate=sample_rate,
        frame_len=frame_len,
        vector_dim=vector_dim,
        predictor_order=predictor_order,
        codebook_size=codebook_size,
        initial_step=initial_step,
        codebook_hash=codebook_hash,
        total_samples=total_samples,
    )
    n_codes = expected_code_count(header)
    codes = unpack_indices(blob[_HEADER.size:], header.bits_per_index, n_codes)
    return EncodedStream(header=header, codes=codes)


def expected_code_count(header):
    """Code count implied by total_samples: streams are padded to whole
    frames, with one code per sample (scalar schemes) or per vector."""
    if header.total_samples == 0:
        return 0
    frames = -(-header.total_samples // header.frame_len)
    padded = frames * header.frame_len
    if header.scheme == "nlpvq":
        return padded // header.vector_dim
    return padded
