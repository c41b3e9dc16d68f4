"""
MIMO 信号模型 - 信道/噪声生成、复数到实数域变换、比特到符号映射
"""
import logging
from typing import List, Union, Sequence

import numpy as np

from models import ComplexChannel, RealSnapshot, NoiseModel, FrameLayout

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.SeedSequence]

# 每个复符号能量（QPSK, ±1±j）
SYMBOL_ENERGY = 2.0


class RngStreams:
    """
    由主种子派生的独立随机流

    每个流由 (用途, 附加键...) 唯一确定，与调用顺序无关，
    因此帧级并行时结果与进程数无关。
    """

    STREAMS = {
        'frame': 0,  # 信道 + 噪声
        'message': 1,
        'interleaver': 2,
        'prior': 3,
    }

    def __init__(self, master_seed: int):
        if master_seed < 0:
            raise ValueError(f"主种子必须非负: {master_seed}")
        self.master_seed = int(master_seed)

    def seed_sequence(self, name: str, *key: int) -> np.random.SeedSequence:
        if name not in self.STREAMS:
            raise ValueError(f"未知随机流: {name}")
        spawn_key = (self.STREAMS[name],) + tuple(int(x) for x in key)
        return np.random.SeedSequence(entropy=self.master_seed, spawn_key=spawn_key)

    def generator(self, name: str, *key: int) -> np.random.Generator:
        return np.random.default_rng(self.seed_sequence(name, *key))


def _child(seed: SeedLike, index: int) -> np.random.SeedSequence:
    """不改变父对象状态地派生子种子序列"""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(entropy=seed.entropy, spawn_key=tuple(seed.spawn_key) + (index,))
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(index,))


def snr_db_to_sigma2(snr_db: float, n_t: int) -> float:
    """SNR(dB) = 10·log10(N_t·E_s / (2σ_n²))，E_s = 2"""
    return n_t * SYMBOL_ENERGY / (2.0 * 10.0 ** (snr_db / 10.0))


def sigma2_to_snr_db(sigma_n2: float, n_t: int) -> float:
    NoiseModel(sigma_n2)
    return 10.0 * np.log10(n_t * SYMBOL_ENERGY / (2.0 * sigma_n2))


def random_complex_channel(n_r: int, n_t: int, rng: np.random.Generator) -> ComplexChannel:
    """元素服从 CN(0,1) 的瑞利信道"""
    g = rng.standard_normal((n_r, n_t, 2))
    return ComplexChannel((g[..., 0] + 1j * g[..., 1]) / np.sqrt(2.0))


def complex_to_real(Hc: Union[ComplexChannel, np.ndarray], yc: np.ndarray, index: int = 0) -> RealSnapshot:
    """
    复数模型 y^c = H^c s^c + n^c 变换到实数域

    H = [[Re, -Im], [Im, Re]]，y = [Re; Im]
    """
    entries = Hc.entries if isinstance(Hc, ComplexChannel) else np.asarray(Hc, dtype=complex)
    yc = np.asarray(yc, dtype=complex)
    if entries.ndim != 2:
        raise ValueError(f"信道矩阵必须为二维: shape={entries.shape}")
    if yc.shape != (entries.shape[0],):
        raise ValueError(f"接收向量长度 {yc.shape} 与信道行数 {entries.shape[0]} 不一致")

    re, im = entries.real, entries.imag
    H = np.block([[re, -im], [im, re]])
    y = np.concatenate([yc.real, yc.imag])
    return RealSnapshot(y=y, H=H, index=index)


def map_bits_to_symbols(coded_bits: np.ndarray, layout: FrameLayout) -> np.ndarray:
    """
    单个快照的 2N_t 个编码比特 → 实数域符号向量

    b = 1 - 2c；比特 2i 为天线 i 实部，比特 2i+1 为虚部。
    """
    c = np.asarray(coded_bits)
    if c.shape != (layout.bits_per_snapshot,):
        raise ValueError(f"比特长度必须为 {layout.bits_per_snapshot}: {c.shape}")
    if not np.all((c == 0) | (c == 1)):
        raise ValueError("编码比特必须取 0 或 1")
    b = 1.0 - 2.0 * c
    return b[layout.symbol_order]


def map_codeword(codeword: np.ndarray, layout: FrameLayout) -> np.ndarray:
    """整帧映射，返回 (K, 2N_t) 实数符号"""
    c = np.asarray(codeword)
    if c.shape != (layout.codeword_length,):
        raise ValueError(f"码字长度必须为 {layout.codeword_length}: {c.shape}")
    if not np.all((c == 0) | (c == 1)):
        raise ValueError("编码比特必须取 0 或 1")
    b = (1.0 - 2.0 * c).reshape(layout.k, layout.bits_per_snapshot)
    return b[:, layout.symbol_order]


def demap_symbols(s: np.ndarray, layout: FrameLayout) -> np.ndarray:
    """硬解映射：sign(s) → c，sign(0) 判为 +1"""
    s = np.asarray(s, dtype=float)
    if s.shape[-1] != layout.bits_per_snapshot:
        raise ValueError(f"符号长度必须为 {layout.bits_per_snapshot}: {s.shape}")
    b = np.where(s >= 0, 1, -1)[..., layout.bit_order]
    return ((1 - b) // 2).astype(np.uint8)


def generate_frame(layout: FrameLayout, rng_seed: SeedLike, sigma_n2: float,
                   codeword: np.ndarray) -> List[RealSnapshot]:
    """
    生成一帧 K 个快照：每个快照独立的 CN(0,1) 信道，y = H s + n

    信道与噪声来自种子派生的两个独立子流，给定种子结果确定。
    """
    noise = NoiseModel(sigma_n2)
    symbols = map_codeword(codeword, layout)

    chan_rng = np.random.default_rng(_child(rng_seed, 0))
    noise_rng = np.random.default_rng(_child(rng_seed, 1))

    g = chan_rng.standard_normal((layout.k, layout.n_r, layout.n_t, 2))
    channels = (g[..., 0] + 1j * g[..., 1]) / np.sqrt(2.0)
    w = noise_rng.standard_normal((layout.k, layout.n_r, 2))
    noise_c = np.sqrt(noise.complex_variance / 2.0) * (w[..., 0] + 1j * w[..., 1])

    nt = layout.n_t
    frame = []
    for k in range(layout.k):
        sc = symbols[k, :nt] + 1j * symbols[k, nt:]
        yc = channels[k] @ sc + noise_c[k]
        frame.append(complex_to_real(channels[k], yc, index=k))
    return frame


def stack_frame(frame: Sequence[RealSnapshot]):
    """快照序列 → (y: (K, 2N_r), H: (K, 2N_r, 2N_t))"""
    if not frame:
        raise ValueError("帧不能为空")
    y = np.stack([s.y for s in frame])
    H = np.stack([s.H for s in frame])
    return y, H


def layout_of(frame: Sequence[RealSnapshot]) -> FrameLayout:
    """由快照序列推导帧布局"""
    first = frame[0]
    return FrameLayout(n_t=first.n_t, n_r=first.n_r, k=len(frame))


__all__ = [
    'RngStreams', 'SYMBOL_ENERGY',
    'snr_db_to_sigma2', 'sigma2_to_snr_db', 'random_complex_channel',
    'complex_to_real', 'map_bits_to_symbols', 'map_codeword', 'demap_symbols',
    'generate_frame', 'stack_frame', 'layout_of',
]
