"""Array types, vectorization convention, and HSEQ round-trips."""

import json
import struct

import numpy as np
import pytest

from mtunmix.errors import SequenceFormatError
from mtunmix.hseq import (
    GlmmModel,
    HsiSequence,
    devectorize_frame,
    frame_file_name,
    read_hseq,
    read_matrix,
    vectorize_frame,
    write_hseq,
    write_matrix,
)


class TestVectorize:
    def test_column_stacking_definition(self):
        Y = np.array([[1.0, 3.0], [2.0, 4.0]])
        np.testing.assert_array_equal(vectorize_frame(Y), [1.0, 2.0, 3.0, 4.0])

    def test_single_row(self):
        Y = np.array([[5.0, 6.0, 7.0]])
        np.testing.assert_array_equal(vectorize_frame(Y), [5.0, 6.0, 7.0])

    def test_roundtrip_random(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            L, N = rng.integers(1, 9, size=2)
            Y = rng.standard_normal((L, N))
            np.testing.assert_array_equal(devectorize_frame(vectorize_frame(Y), L, N), Y)

    def test_linearity(self):
        rng = np.random.default_rng(1)
        X, Y = rng.standard_normal((2, 4, 3))
        a, b = rng.standard_normal(2)
        np.testing.assert_allclose(
            vectorize_frame(a * X + b * Y),
            a * vectorize_frame(X) + b * vectorize_frame(Y),
            rtol=1e-12,
        )

    def test_hadamard_diag_identity(self):
        # vec(M * Psi) == diag(vec(M)) @ vec(Psi), the identity that makes the
        # vectorized observation model consistent with column stacking
        rng = np.random.default_rng(2)
        M, Psi = rng.standard_normal((2, 5, 4))
        lhs = vectorize_frame(M * Psi)
        rhs = np.diag(vectorize_frame(M)) @ vectorize_frame(Psi)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12)

    def test_vec_of_product_is_kron(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((4, 3))
        A = rng.standard_normal((3, 5))
        lhs = vectorize_frame(X @ A)
        rhs = np.kron(A.T, np.eye(4)) @ vectorize_frame(X)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12)


class TestSequenceIO:
    def test_single_element_file_bytes(self, tmp_path):
        seq = HsiSequence(frames=(np.array([[0.5]]),))
        write_hseq(seq, tmp_path / "d")
        raw = (tmp_path / "d" / frame_file_name(0)).read_bytes()
        assert raw == struct.pack("<d", 0.5)

    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(4)
        frames = tuple(rng.standard_normal((7, 5)) for _ in range(3))
        write_hseq(HsiSequence(frames=frames), tmp_path / "seq")
        back = read_hseq(tmp_path / "seq")
        for orig, loaded in zip(frames, back.frames):
            assert orig.tobytes() == loaded.tobytes()

    def test_benchmark_scale_file_sizes(self, tmp_path):
        rng = np.random.default_rng(5)
        frames = tuple(rng.random((173, 50)) for _ in range(10))
        write_hseq(HsiSequence(frames=frames), tmp_path / "seq")
        files = sorted((tmp_path / "seq").glob("frame_*.f64"))
        assert len(files) == 10
        assert all(f.stat().st_size == 69200 for f in files)

    def test_byte_offset_layout(self, tmp_path):
        # element (l, n) at byte offset 8 * (n * L + l)
        L, N = 3, 2
        Y = np.arange(L * N, dtype=float).reshape(L, N)
        write_hseq(HsiSequence(frames=(Y,)), tmp_path / "seq")
        raw = (tmp_path / "seq" / frame_file_name(0)).read_bytes()
        for n in range(N):
            for l in range(L):
                (value,) = struct.unpack_from("<d", raw, 8 * (n * L + l))
                assert value == Y[l, n]

    def test_missing_frame_error_names_frame(self, tmp_path):
        rng = np.random.default_rng(6)
        frames = tuple(rng.random((4, 3)) for _ in range(3))
        write_hseq(HsiSequence(frames=frames), tmp_path / "seq")
        (tmp_path / "seq" / frame_file_name(2)).unlink()
        with pytest.raises(SequenceFormatError, match="frame_0002"):
            read_hseq(tmp_path / "seq")

    def test_manifest_frame_count_mismatch(self, tmp_path):
        rng = np.random.default_rng(7)
        write_hseq(HsiSequence(frames=(rng.random((4, 3)),) * 2), tmp_path / "seq")
        mpath = tmp_path / "seq" / "manifest.json"
        manifest = json.loads(mpath.read_text())
        manifest["T"] = 3
        mpath.write_text(json.dumps(manifest))
        with pytest.raises(SequenceFormatError, match="T=3"):
            read_hseq(tmp_path / "seq")

    def test_truncated_frame_reports_byte_counts(self, tmp_path):
        rng = np.random.default_rng(8)
        write_hseq(HsiSequence(frames=(rng.random((4, 3)),)), tmp_path / "seq")
        fpath = tmp_path / "seq" / frame_file_name(0)
        fpath.write_bytes(fpath.read_bytes()[:-8])
        with pytest.raises(SequenceFormatError, match="88.*expected 96"):
            read_hseq(tmp_path / "seq")

    def test_nonfinite_rejected_with_index(self, tmp_path):
        frame = np.ones((3, 2))
        frame[2, 1] = np.nan
        with pytest.raises(ValueError, match="band 2, pixel 1"):
            HsiSequence(frames=(frame,))

    def test_matrix_roundtrip_with_inferred_cols(self, tmp_path):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((6, 4))
        write_matrix(tmp_path / "m.f64", X)
        np.testing.assert_array_equal(read_matrix(tmp_path / "m.f64", 6), X)

    def test_unsupported_dtype_rejected(self, tmp_path):
        rng = np.random.default_rng(10)
        write_hseq(HsiSequence(frames=(rng.random((2, 2)),)), tmp_path / "seq")
        mpath = tmp_path / "seq" / "manifest.json"
        manifest = json.loads(mpath.read_text())
        manifest["dtype"] = "float32"
        mpath.write_text(json.dumps(manifest))
        with pytest.raises(SequenceFormatError, match="dtype"):
            read_hseq(tmp_path / "seq")


class TestDomainTypes:
    def test_glmm_model_vectorization_exact(self):
        rng = np.random.default_rng(11)
        M0 = rng.random((5, 3))
        model = GlmmModel(M0=M0)
        np.testing.assert_array_equal(model.m0, vectorize_frame(M0))
        assert model.P == 3 and model.L == 5

    def test_glmm_model_rejects_negative(self):
        M0 = np.ones((4, 2))
        M0[1, 1] = -0.1
        with pytest.raises(ValueError, match="nonnegative"):
            GlmmModel(M0=M0)

    def test_glmm_model_needs_two_materials(self):
        with pytest.raises(ValueError):
            GlmmModel(M0=np.ones((4, 1)))

    def test_sequence_shape_consistency(self):
        with pytest.raises(ValueError, match="frame 1"):
            HsiSequence(frames=(np.ones((3, 2)), np.ones((3, 3))))
