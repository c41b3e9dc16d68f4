"""
MIMO 信号模型测试
"""
import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from mimo_model import (
    RngStreams, snr_db_to_sigma2, sigma2_to_snr_db, random_complex_channel, complex_to_real,
    map_bits_to_symbols, map_codeword, demap_symbols, generate_frame, stack_frame, layout_of
)
from models import FrameLayout, ComplexChannel, NoiseModel


def _stack(sc):
    return np.concatenate([sc.real, sc.imag])


class TestComplexToReal:
    """复数域 → 实数域"""

    def test_scalar_example(self):
        snap = complex_to_real(np.array([[1 + 2j]]), np.array([3 - 1j]))
        assert_array_equal(snap.H, [[1, -2], [2, 1]])
        assert_array_equal(snap.y, [3, -1])

    def test_identity_channel(self):
        snap = complex_to_real(np.eye(2), np.zeros(2))
        s = np.array([1 + 1j, -1 - 1j])
        assert_array_equal(snap.H @ _stack(s), [1, -1, 1, -1])

    def test_real_model_matches_complex(self, rng):
        for n_r, n_t in [(1, 1), (2, 3), (4, 4)]:
            Hc = random_complex_channel(n_r, n_t, rng)
            s = rng.standard_normal(n_t) + 1j * rng.standard_normal(n_t)
            snap = complex_to_real(Hc, Hc.entries @ s)
            assert_allclose(snap.H @ _stack(s), _stack(Hc.entries @ s), atol=1e-12)
            assert_allclose(snap.y, _stack(Hc.entries @ s), atol=1e-12)
            assert snap.has_block_structure()

    def test_linearity(self, rng):
        Hc = random_complex_channel(2, 2, rng).entries
        y1 = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        y2 = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        a, b = 0.7, -1.3
        combined = complex_to_real(Hc, a * y1 + b * y2).y
        separate = a * complex_to_real(Hc, y1).y + b * complex_to_real(Hc, y2).y
        assert_allclose(combined, separate, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            complex_to_real(np.eye(2), np.zeros(3))


class TestBitMapping:
    """比特 → 符号映射"""

    def test_single_antenna(self):
        layout = FrameLayout(n_t=1, n_r=1, k=1)
        assert_array_equal(map_bits_to_symbols(np.array([1, 0]), layout), [-1, 1])

    def test_two_antennas(self):
        layout = FrameLayout(n_t=2, n_r=2, k=1)
        assert_array_equal(map_bits_to_symbols(np.array([0, 1, 1, 0]), layout), [1, -1, -1, 1])

    def test_all_zero_bits(self):
        layout = FrameLayout(n_t=4, n_r=4, k=1)
        assert_array_equal(map_bits_to_symbols(np.zeros(8, dtype=int), layout), np.ones(8))

    def test_invalid_bits(self):
        layout = FrameLayout(n_t=1, n_r=1, k=1)
        with pytest.raises(ValueError):
            map_bits_to_symbols(np.array([2, 0]), layout)
        with pytest.raises(ValueError):
            map_bits_to_symbols(np.array([0, 0, 0]), layout)

    @pytest.mark.parametrize("n_t", [1, 2, 3, 4])
    def test_bijection(self, n_t):
        layout = FrameLayout(n_t=n_t, n_r=1, k=1)
        seen = set()
        for bits in itertools.product([0, 1], repeat=2 * n_t):
            c = np.array(bits)
            s = map_bits_to_symbols(c, layout)
            assert_array_equal(demap_symbols(s, layout), c)
            seen.add(tuple(s))
        assert len(seen) == 4 ** n_t

    def test_map_codeword_rows(self):
        layout = FrameLayout(n_t=2, n_r=2, k=3)
        c = np.random.default_rng(1).integers(0, 2, 12)
        symbols = map_codeword(c, layout)
        assert symbols.shape == (3, 4)
        for k in range(3):
            assert_array_equal(symbols[k], map_bits_to_symbols(c[layout.snapshot_slice(k)], layout))


class TestSnrConvention:
    def test_zero_db(self):
        assert snr_db_to_sigma2(0.0, 4) == pytest.approx(4.0)

    def test_round_trip(self):
        for snr in [-3.0, 0.0, 7.5]:
            assert sigma2_to_snr_db(snr_db_to_sigma2(snr, 4), 4) == pytest.approx(snr)

    def test_ten_db_step(self):
        assert snr_db_to_sigma2(10.0, 2) == pytest.approx(snr_db_to_sigma2(0.0, 2) / 10.0)


class TestGenerateFrame:
    """帧生成"""

    def test_deterministic(self):
        layout = FrameLayout(n_t=2, n_r=2, k=4)
        c = np.zeros(16, dtype=int)
        a = stack_frame(generate_frame(layout, 5, 0.3, c))
        b = stack_frame(generate_frame(layout, 5, 0.3, c))
        assert_array_equal(a[0], b[0])
        assert_array_equal(a[1], b[1])
        c2 = stack_frame(generate_frame(layout, 6, 0.3, c))
        assert not np.array_equal(a[0], c2[0])

    def test_noiseless_residual(self):
        layout = FrameLayout(n_t=4, n_r=4, k=8)
        c = np.random.default_rng(2).integers(0, 2, 64)
        frame = generate_frame(layout, 1, 1e-30, c)
        symbols = map_codeword(c, layout)
        for k, snap in enumerate(frame):
            assert snap.has_block_structure()
            assert snap.index == k
            assert np.abs(snap.y - snap.H @ symbols[k]).max() < 1e-12

    def test_noise_variance(self):
        layout = FrameLayout(n_t=1, n_r=4, k=25000)
        sigma_n2 = 0.5
        c = np.zeros(layout.codeword_length, dtype=int)
        frame = generate_frame(layout, 9, sigma_n2, c)
        y, H = stack_frame(frame)
        noise = y - np.einsum('kij,j->ki', H, np.ones(2))
        assert noise.size == 200000
        assert noise.var() == pytest.approx(sigma_n2, rel=0.02)
        complex_noise = noise[:, :4] + 1j * noise[:, 4:]
        assert np.mean(np.abs(complex_noise) ** 2) == pytest.approx(NoiseModel(sigma_n2).complex_variance, rel=0.02)

    def test_non_positive_variance(self):
        layout = FrameLayout(n_t=1, n_r=1, k=1)
        with pytest.raises(ValueError):
            generate_frame(layout, 0, 0.0, np.zeros(2, dtype=int))

    def test_layout_of(self):
        layout = FrameLayout(n_t=2, n_r=3, k=5)
        frame = generate_frame(layout, 0, 1.0, np.zeros(20, dtype=int))
        assert layout_of(frame) == layout


class TestRngStreams:
    """派生随机流"""

    def test_same_key_same_stream(self):
        streams = RngStreams(42)
        assert_array_equal(streams.generator('frame', 1, 2).random(4), streams.generator('frame', 1, 2).random(4))

    def test_different_keys_differ(self):
        streams = RngStreams(42)
        a = streams.generator('frame', 1, 2).random(4)
        assert not np.array_equal(a, streams.generator('frame', 1, 3).random(4))
        assert not np.array_equal(a, streams.generator('message', 1, 2).random(4))
        assert not np.array_equal(a, RngStreams(43).generator('frame', 1, 2).random(4))

    def test_invalid(self):
        with pytest.raises(ValueError):
            RngStreams(-1)
        with pytest.raises(ValueError):
            RngStreams(0).generator('unknown')

    def test_channel_entries_unit_variance(self):
        Hc = random_complex_channel(200, 200, np.random.default_rng(0))
        assert isinstance(Hc, ComplexChannel)
        assert np.mean(np.abs(Hc.entries) ** 2) == pytest.approx(1.0, rel=0.02)
