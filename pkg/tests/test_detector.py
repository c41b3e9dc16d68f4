"""
软检测测试：代价矩阵、问题装配、列表构造、max-log 外信息
"""
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from detector import (
    cost_matrix, assemble_joint_map_sdr, round_solution, hamming_ball_list, maxlog_extrinsic_llr,
    list_detect, full_list_detect, simplified_anchor, joint_map_sdr_detect, disjoint_sdr_detect,
    exhaustive_llr, exhaustive_ml
)
from ldpc import EnumerationGuardError, enumerate_fs_constraints
from mimo_model import generate_frame, map_codeword
from models import FrameLayout, RealSnapshot, SolverStatus
from sdp import SdpSolution, lift

from conftest import FAST_SDP


def _random_snapshot(rng, n_t, n_r, sigma_n2=0.3):
    layout = FrameLayout(n_t=n_t, n_r=n_r, k=1)
    c = rng.integers(0, 2, 2 * n_t)
    frame = generate_frame(layout, int(rng.integers(0, 2 ** 31)), sigma_n2, c)
    return frame[0], c


class TestCostMatrix:
    """代价矩阵"""

    def test_trace_identity(self, rng):
        snap, _ = _random_snapshot(rng, 4, 4)
        C = cost_matrix(snap)
        assert_allclose(C, C.T)
        for _ in range(5):
            x = rng.choice([-1.0, 1.0], 8)
            expected = np.sum((snap.y - snap.H @ x) ** 2)
            assert np.trace(C @ lift(x)) == pytest.approx(expected, abs=1e-9)
            assert np.trace(C @ lift(-x, -1.0)) == pytest.approx(expected, abs=1e-9)


class TestAssembly:
    """联合 MAP-SDR 装配"""

    def test_default_configuration_counts(self, pcm_256):
        fs = enumerate_fs_constraints(pcm_256)
        layout = FrameLayout.from_codeword_length(256, 4, 4)
        frame = generate_frame(layout, 0, 0.5, np.zeros(256, dtype=int))
        problem = assemble_joint_map_sdr(frame, np.zeros(256), 0.5, fs)
        assert problem.n_blocks == 32
        assert problem.block_size == 9
        assert problem.n_vars == 256
        assert problem.n_fs_rows == 4096
        assert problem.n_box_rows == 512
        assert problem.n_coupling_rows == 256

    def test_no_prior_no_code(self, small_layout, make_frame):
        frame, _ = make_frame(small_layout, 0.5)
        problem = assemble_joint_map_sdr(frame, None, 0.5)
        assert not problem.linear_cost.any()
        assert problem.n_fs_rows == 0

    def test_linear_cost_sign(self, small_layout, make_frame):
        frame, _ = make_frame(small_layout, 0.5)
        prior = np.zeros(32)
        prior[5] = 3.0
        plus = assemble_joint_map_sdr(frame, prior, 0.5)
        minus = assemble_joint_map_sdr(frame, -prior, 0.5)
        assert plus.linear_cost[5] == pytest.approx(3.0)
        assert minus.linear_cost[5] == -plus.linear_cost[5]

    def test_coupling_follows_bit_layout(self, small_layout, make_frame):
        frame, c = make_frame(small_layout, 0.5)
        problem = assemble_joint_map_sdr(frame, None, 0.5)
        symbols = map_codeword(c, small_layout)
        D = problem.block_size
        for n in range(32):
            k, j = problem.coupling_block[n], problem.coupling_row[n]
            assert symbols[k, j] == 1 - 2 * int(c[n])
            assert j < D - 1

    def test_prior_length_checked(self, small_layout, make_frame):
        frame, _ = make_frame(small_layout, 0.5)
        with pytest.raises(ValueError):
            assemble_joint_map_sdr(frame, np.zeros(31), 0.5)


class TestRounding:
    def test_half_rounds_to_plus_one(self):
        layout = FrameLayout(n_t=1, n_r=1, k=1)
        sol = SdpSolution(blocks=np.zeros((1, 3, 3)), f=np.array([0.5, 0.51]), objective=0.0,
                          status=SolverStatus.CONVERGED, iterations=1)
        assert_array_equal(round_solution(sol, layout), [[1, -1]])


class TestHammingBall:
    """汉明球候选列表"""

    @pytest.mark.parametrize("radius,size", [(0, 1), (1, 9), (2, 37), (8, 256)])
    def test_sizes(self, radius, size):
        cands = hamming_ball_list(np.ones(8, dtype=np.int8), radius)
        assert len(cands) == size
        assert len({tuple(m) for m in cands.members}) == size

    def test_nested_and_contains_anchor(self, rng):
        anchor = rng.choice([-1, 1], 8).astype(np.int8)
        small = {tuple(m) for m in hamming_ball_list(anchor, 1).members}
        large = {tuple(m) for m in hamming_ball_list(anchor, 2).members}
        assert small < large
        assert tuple(anchor) in small
        distances = [(np.asarray(m) != anchor).sum() for m in large]
        assert max(distances) == 2

    def test_invalid_anchor(self):
        with pytest.raises(ValueError):
            hamming_ball_list(np.array([1, 0]), 1)
        with pytest.raises(ValueError):
            hamming_ball_list(np.array([1, -1]), 3)


class TestMaxLog:
    """max-log 外信息"""

    def test_scalar_example(self):
        # 单天线、H = I：y = (1, 0.2)，σ² = 0.5
        snap = RealSnapshot(y=np.array([1.0, 0.2]), H=np.eye(2))
        cands = hamming_ball_list(np.array([1, 1], dtype=np.int8), 2)
        llr = maxlog_extrinsic_llr(cands, snap, 0.5)
        assert llr[0] == pytest.approx(4.0)
        assert llr[1] == pytest.approx(0.8)

    def test_matches_exhaustive_oracle(self, rng):
        for _ in range(20):
            snap, _ = _random_snapshot(rng, 2, 2)
            prior = rng.normal(0.0, 2.0, 4)
            cands = hamming_ball_list(np.ones(4, dtype=np.int8), 4)
            assert_allclose(maxlog_extrinsic_llr(cands, snap, 0.3, prior),
                            exhaustive_llr(snap, 0.3, prior), atol=1e-9)

    def test_zero_observation_gives_zero(self):
        snap = RealSnapshot(y=np.zeros(4), H=np.zeros((4, 4)))
        cands = hamming_ball_list(np.ones(4, dtype=np.int8), 4)
        assert_array_equal(maxlog_extrinsic_llr(cands, snap, 1.0), np.zeros(4))

    def test_own_prior_excluded(self, rng):
        snap, _ = _random_snapshot(rng, 2, 2)
        cands = hamming_ball_list(rng.choice([-1, 1], 4).astype(np.int8), 2)
        prior = rng.normal(0.0, 2.0, 4)
        base = maxlog_extrinsic_llr(cands, snap, 0.3, prior)
        changed = prior.copy()
        changed[2] += 7.0
        assert maxlog_extrinsic_llr(cands, snap, 0.3, changed)[2] == base[2]

    def test_constant_metric_shift(self, rng):
        snap, _ = _random_snapshot(rng, 2, 2)
        cands = hamming_ball_list(np.ones(4, dtype=np.int8), 2)
        shifted = RealSnapshot(y=np.append(snap.y, 3.0), H=np.vstack([snap.H, np.zeros(4)]))
        assert_allclose(maxlog_extrinsic_llr(cands, shifted, 0.3), maxlog_extrinsic_llr(cands, snap, 0.3),
                        atol=1e-9)

    def test_empty_partition(self, rng):
        snap, _ = _random_snapshot(rng, 2, 2)
        cands = hamming_ball_list(np.ones(4, dtype=np.int8), 0)
        with pytest.raises(ValueError):
            maxlog_extrinsic_llr(cands, snap, 0.3)


class TestListDetect:
    """列表检测"""

    def test_full_list_zero_input(self):
        frame = [RealSnapshot(y=np.zeros(4), H=np.zeros((4, 4)))]
        out = full_list_detect(frame, 1.0, None)
        assert_array_equal(out.l_e1.values, np.zeros(4))

    def test_full_list_guard(self):
        frame = [RealSnapshot(y=np.zeros(2), H=np.zeros((2, 14)))]
        with pytest.raises(EnumerationGuardError):
            full_list_detect(frame, 1.0, None)

    def test_noiseless_signs(self, small_layout, make_frame):
        frame, c = make_frame(small_layout, 1e-6, seed=4)
        out = full_list_detect(frame, 1e-6, None)
        assert_array_equal(out.l_e1.hard_bits(), c)
        assert np.abs(out.l_e1.values).max() <= 8.0

    def test_radius_must_be_positive(self, small_layout, make_frame):
        frame, _ = make_frame(small_layout, 0.5)
        with pytest.raises(ValueError):
            list_detect(frame, np.ones((8, 4)), 0.5, None, 0)

    def test_anchor_shape(self, small_layout, make_frame):
        frame, _ = make_frame(small_layout, 0.5)
        with pytest.raises(ValueError):
            list_detect(frame, np.ones((7, 4)), 0.5, None, 2)

    def test_keep_metrics(self, small_layout, make_frame):
        frame, _ = make_frame(small_layout, 0.5)
        out = list_detect(frame, np.ones((8, 4)), 0.5, None, 2, keep_metrics=True)
        assert out.metrics.shape == (8, 11)


class TestAnchors:
    def test_simplified_anchor(self):
        layout = FrameLayout(n_t=1, n_r=1, k=2)
        anchors = simplified_anchor(np.array([1.0, -2.0, 0.0, 0.5]), np.array([-3.0, 1.0, 0.0, -0.5]), layout)
        assert_array_equal(anchors, [[-1, -1], [1, 1]])

    def test_disjoint_sdr_high_snr(self, rng):
        layout = FrameLayout(n_t=2, n_r=2, k=5)
        c = rng.integers(0, 2, 20)
        frame = generate_frame(layout, 12, 1e-4, c)
        anchors, solution = disjoint_sdr_detect(frame, FAST_SDP)
        truth = (1 - 2 * c).reshape(5, 4)
        correct = sum(np.array_equal(anchors[k], truth[k]) for k in range(5))
        assert correct >= 4
        assert solution.blocks.shape == (5, 5, 5)

    def test_joint_detect_noiseless(self, small_pcm, small_fs, small_generator, small_layout, rng):
        c = small_generator.encode(rng.integers(0, 2, small_generator.k))
        frame = generate_frame(small_layout, 5, 1e-6, c)
        out = joint_map_sdr_detect(frame, None, 1e-6, small_fs, radius=2, clip=8.0, sdp=FAST_SDP)
        assert out.solution is not None
        assert_array_equal(out.anchors, (1 - 2 * c.astype(int)).reshape(8, 4))
        assert_array_equal(out.l_e1.hard_bits(), c)
        assert np.abs(out.l_e1.values).max() <= 8.0

    def test_exhaustive_ml_noiseless(self, rng):
        layout = FrameLayout(n_t=2, n_r=2, k=1)
        c = rng.integers(0, 2, 4)
        snap = generate_frame(layout, 1, 1e-12, c)[0]
        bits, cost = exhaustive_ml(snap)
        assert_array_equal(bits, 1 - 2 * c)
        assert cost < 1e-8
