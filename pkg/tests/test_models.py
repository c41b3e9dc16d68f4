"""
数据模型测试
"""
import numpy as np
import pytest
from numpy.testing import assert_array_equal

from models import (
    FrameLayout, LlrFrame, LlrOrder, FsConstraint, CandidateList, IterationRecord, IterationTrace,
    BerRecord, MiEstimate, NoiseModel, RealSnapshot
)


class TestFrameLayout:
    """帧布局"""

    def test_snapshots_from_codeword_length(self):
        layout = FrameLayout.from_codeword_length(256, 4, 4)
        assert layout.k == 32
        assert layout.codeword_length == 256
        assert layout.bits_per_snapshot == 8

    def test_rejects_indivisible_length(self):
        with pytest.raises(ValueError):
            FrameLayout.from_codeword_length(30, 4, 4)

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            FrameLayout(n_t=0, n_r=2, k=4)

    def test_symbol_and_bit_order_are_inverse(self):
        layout = FrameLayout(n_t=3, n_r=3, k=1)
        assert_array_equal(layout.symbol_order, [0, 2, 4, 1, 3, 5])
        b = np.arange(6)
        assert_array_equal(b[layout.symbol_order][layout.bit_order], b)

    def test_snapshot_of(self):
        layout = FrameLayout(n_t=2, n_r=2, k=8)
        assert layout.snapshot_of(0) == 0
        assert layout.snapshot_of(3) == 0
        assert layout.snapshot_of(4) == 1
        assert layout.snapshot_slice(2) == slice(8, 12)


class TestLlrFrame:
    """LLR 向量"""

    def test_clipped(self):
        llr = LlrFrame(np.array([-12.0, -3.0, 0.0, 9.5]))
        assert_array_equal(llr.clipped(8.0).values, [-8.0, -3.0, 0.0, 8.0])

    def test_clip_must_be_positive(self):
        with pytest.raises(ValueError):
            LlrFrame.zeros(4).clipped(0.0)

    def test_hard_bits_zero_is_bit_zero(self):
        llr = LlrFrame(np.array([1.0, -1.0, 0.0]))
        assert_array_equal(llr.hard_bits(), [0, 1, 0])
        assert_array_equal(llr.polarized(), [1, -1, 1])

    def test_rejects_matrix(self):
        with pytest.raises(ValueError):
            LlrFrame(np.zeros((2, 2)))

    def test_zeros_keeps_order(self):
        llr = LlrFrame.zeros(5, LlrOrder.DECODER)
        assert len(llr) == 5
        assert llr.order == LlrOrder.DECODER


class TestFsConstraint:
    """禁止集约束"""

    def test_three_variable_check(self):
        c = FsConstraint(check=0, subset=(0,), support=(0, 1, 2))
        assert c.complement == (1, 2)
        assert c.rhs == 0
        assert c.coefficients() == {0: 1.0, 1: -1.0, 2: -1.0}
        assert c.lhs(np.array([1.0, 0.0, 0.0])) == 1.0
        assert not c.is_satisfied(np.array([1.0, 0.0, 0.0]))
        assert c.is_satisfied(np.array([1.0, 1.0, 0.0]))

    def test_even_subset_rejected(self):
        with pytest.raises(ValueError):
            FsConstraint(check=0, subset=(0, 1), support=(0, 1, 2))

    def test_subset_outside_support_rejected(self):
        with pytest.raises(ValueError):
            FsConstraint(check=0, subset=(5,), support=(0, 1, 2))

    def test_remap(self):
        c = FsConstraint(check=1, subset=(0, 1, 2), support=(0, 1, 2, 3))
        mapped = c.remap([3, 2, 1, 0])
        assert mapped.subset == (3, 2, 1)
        assert mapped.support == (3, 2, 1, 0)
        assert mapped.check == 1


class TestCandidateList:
    def test_partition_sizes(self):
        members = np.array([[1, 1], [1, -1], [-1, 1]], dtype=np.int8)
        cands = CandidateList(k=0, anchor=members[0], radius=1, members=members)
        assert len(cands) == 3
        assert_array_equal(cands.partition_sizes(), [[2, 1], [2, 1]])


class TestIterationTrace:
    """迭代轨迹"""

    def _record(self, t, errors, parity_ok=False, solves=0):
        return IterationRecord(iteration=t, hard_bits=np.zeros(4, dtype=np.uint8), parity_ok=parity_ok,
                               bit_errors=errors, sdp_solves=solves)

    def test_errors_carried_forward_after_early_stop(self):
        trace = IterationTrace(scheme="multi-sdr", records=[self._record(1, 5), self._record(2, 0, True)])
        assert trace.errors_by_iteration(4) == [5, 0, 0, 0]
        assert trace.stopped_early
        assert trace.final.iteration == 2

    def test_sdp_solves_sum(self):
        trace = IterationTrace(scheme="single-sdr",
                               records=[self._record(1, 3, solves=1), self._record(2, 2), self._record(3, 1)])
        assert trace.sdp_solves == 1
        assert not trace.stopped_early

    def test_to_dict_without_llrs(self):
        record = self._record(1, 2)
        record.l_e1 = np.ones(4)
        assert 'l_e1' in record.to_dict()
        assert 'l_e1' not in record.to_dict(include_llrs=False)


class TestBerRecord:
    def test_rates(self):
        record = BerRecord(snr_db=5.0, iteration=2, bit_errors=10, bits=1000, frame_errors=3,
                           frames=4, seed=0, config_hash="abc", wall_time=1.23456)
        assert record.ber == pytest.approx(0.01)
        assert record.fer == pytest.approx(0.75)
        assert 'wall_time' not in record.to_dict()
        assert record.to_dict(include_timing=True)['wall_time'] == 1.235


class TestMisc:
    def test_mi_estimate_is_clamped(self):
        assert MiEstimate(1.2, 64, 10).value == 1.0
        assert MiEstimate(-0.1, 64, 10).value == 0.0

    @pytest.mark.parametrize("sigma_n2", [0.0, -1.0, float('inf')])
    def test_noise_model_rejects_invalid(self, sigma_n2):
        with pytest.raises(ValueError):
            NoiseModel(sigma_n2)

    def test_noise_model_complex_variance(self):
        assert NoiseModel(0.25).complex_variance == 0.5

    def test_snapshot_dimension_check(self):
        with pytest.raises(ValueError):
            RealSnapshot(y=np.zeros(3), H=np.zeros((4, 4)))
