import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlpvq.bitstream import (BitstreamError, EncodedStream, StreamHeader,
                             ZERO_HASH, expected_code_count, index_bit_width,
                             pack_indices, read_stream, unpack_indices,
                             write_stream)


def make_header(**overrides):
    fields = dict(
        scheme="scalar-adpcm", sample_rate=8000, frame_len=200,
        vector_dim=2, predictor_order=10, codebook_size=8,
        initial_step=0.02, codebook_hash=ZERO_HASH, total_samples=400,
    )
    fields.update(overrides)
    return StreamHeader(**fields)


class TestPacking:
    def test_little_endian_bit_order(self):
        # 1-bit indices 1,0,1,1 fill the first byte from the LSB: 0b1101
        assert pack_indices([1, 0, 1, 1], 1) == bytes([0b1101])

    def test_three_bit_example(self):
        # 3-bit values 5, 1: 5 | 1 << 3 = 0b001101 = 13
        assert pack_indices([5, 1], 3) == bytes([0b001101])

    def test_round_trip_random(self, rng):
        for width in range(1, 17):
            n = int(rng.integers(1, 200))
            values = rng.integers(0, 1 << width, n)
            packed = pack_indices(values, width)
            assert len(packed) == (n * width + 7) // 8
            unpacked = unpack_indices(packed, width, n)
            assert np.array_equal(unpacked, values)

    def test_value_too_wide_rejected(self):
        with pytest.raises(BitstreamError, match="fit"):
            pack_indices([8], 3)

    def test_truncated_data_rejected(self):
        packed = pack_indices([1, 2, 3], 8)
        with pytest.raises(BitstreamError, match="truncated"):
            unpack_indices(packed[:2], 8, 3)

    def test_bit_width(self):
        assert index_bit_width(1) == 1
        assert index_bit_width(2) == 1
        assert index_bit_width(5) == 3
        assert index_bit_width(64) == 6
        assert index_bit_width(256) == 8

    @given(st.integers(1, 16).flatmap(
        lambda w: st.tuples(st.just(w),
                            st.lists(st.integers(0, 2 ** w - 1),
                                     min_size=1, max_size=300))))
    @settings(max_examples=150, deadline=None)
    def test_round_trip_property(self, case):
        width, values = case
        assert unpack_indices(pack_indices(values, width), width,
                              len(values)).tolist() == values


class TestContainer:
    def test_round_trip(self, tmp_path, rng):
        header = make_header()
        codes = rng.integers(0, 8, 400)
        stream = EncodedStream(header=header, codes=codes)
        path = tmp_path / "x.nlq"
        write_stream(stream, path)
        loaded = read_stream(path)
        assert loaded.header == header
        assert np.array_equal(loaded.codes, codes)

    def test_nlpvq_code_count_is_per_vector(self, tmp_path, rng):
        header = make_header(scheme="nlpvq", codebook_size=64,
                             codebook_hash=bytes(range(32)),
                             total_samples=399)
        assert expected_code_count(header) == 200  # padded to 400, /2
        codes = rng.integers(0, 64, 200)
        path = tmp_path / "v.nlq"
        write_stream(EncodedStream(header=header, codes=codes), path)
        loaded = read_stream(path)
        assert np.array_equal(loaded.codes, codes)
        assert loaded.header.nq_per_sample == pytest.approx(3.0)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.nlq"
        path.write_bytes(b"JUNK" + bytes(100))
        with pytest.raises(BitstreamError, match="magic"):
            read_stream(path)

    def test_truncated_header_rejected(self, tmp_path):
        path = tmp_path / "short.nlq"
        path.write_bytes(b"NLPQ\x01")
        with pytest.raises(BitstreamError, match="header"):
            read_stream(path)

    def test_truncated_codes_rejected(self, tmp_path, rng):
        header = make_header()
        stream = EncodedStream(header=header, codes=rng.integers(0, 8, 400))
        path = tmp_path / "x.nlq"
        write_stream(stream, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-20])
        with pytest.raises(BitstreamError, match="truncated"):
            read_stream(path)

    def test_out_of_range_codes_rejected(self):
        with pytest.raises(BitstreamError, match="range"):
            EncodedStream(header=make_header(), codes=np.array([0, 8]))

    def test_zero_samples_stream(self, tmp_path):
        header = make_header(total_samples=0)
        path = tmp_path / "empty.nlq"
        write_stream(EncodedStream(header=header, codes=np.zeros(0, int)),
                     path)
        loaded = read_stream(path)
        assert loaded.codes.size == 0
