"""
测试公共夹具 - 小规模码、帧与配置
"""
import numpy as np
import pytest

from config_models import SimConfig, SdpSettings, TurboConfig
from ldpc import build_pcm, derive_generator, enumerate_fs_constraints
from mimo_model import generate_frame
from models import FrameLayout, Scheme

# 测试用 SDP 参数：容限放宽以控制运行时间
FAST_SDP = SdpSettings(tol=1e-5, max_iters=1500)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def toy_pcm():
    """(8,4) 列重 2 的玩具码"""
    return build_pcm(8, 4, 2, seed=0, max_attempts=20)


@pytest.fixture(scope="session")
def small_pcm():
    """(32,16) 列重 3，行重 6"""
    return build_pcm(32, 16, 3, seed=3)


@pytest.fixture(scope="session")
def small_generator(small_pcm):
    return derive_generator(small_pcm)


@pytest.fixture(scope="session")
def small_fs(small_pcm):
    return enumerate_fs_constraints(small_pcm)


@pytest.fixture(scope="session")
def pcm_256():
    """默认配置的 (256,128) 列重 3 码"""
    return build_pcm(256, 128, 3, seed=1)


@pytest.fixture
def small_layout():
    """2×2 MIMO，32 比特码字 → 8 个快照"""
    return FrameLayout.from_codeword_length(32, 2, 2)


@pytest.fixture
def turbo_cfg():
    def make(scheme=Scheme.FULL_LIST, iters=3, keep_llrs=False, radius=2):
        return TurboConfig(max_turbo_iters=iters, radius=radius, clip=8.0, scheme=scheme,
                           sdp=FAST_SDP, decoder_iters=20, keep_llrs=keep_llrs)
    return make


@pytest.fixture
def small_cfg():
    """小规模仿真配置：2×2、(32,16) 码、全列表方案"""
    def make(**overrides):
        params = dict(
            n_t=2, n_r=2, code_n=32, code_k=16, col_weight=3, code_seed=3,
            snr_grid_db=[4.0, 8.0], scheme=Scheme.FULL_LIST, turbo_iters=3,
            max_frames=4, min_errors=10 ** 6, batch_frames=2, seed=11,
            sdp_tol=1e-5, sdp_max_iters=1500,
            exit_grid=[0.0, 0.5], exit_frames=4,
        )
        params.update(overrides)
        return SimConfig(**params)
    return make


@pytest.fixture
def make_frame():
    """按布局与噪声方差生成随机码字帧，返回 (帧, 码字)"""
    def make(layout, sigma_n2, seed=0, codeword=None):
        if codeword is None:
            codeword = np.random.default_rng(seed + 1000).integers(0, 2, layout.codeword_length)
        frame = generate_frame(layout, seed, sigma_n2, codeword)
        return frame, np.asarray(codeword, dtype=np.uint8)
    return make
