"""
数据模型定义 - LDPC 编码 MIMO 迭代接收机仿真的核心数据结构
"""
import math
from dataclasses import dataclass, field
from typing import List, Dict, Tuple, Optional, Any, Sequence
from enum import Enum

import numpy as np


class LlrOrder(Enum):
    """LLR 序列的排列顺序"""
    CHANNEL = "channel"  # 交织后（检测器侧）
    DECODER = "decoder"  # 解交织后（译码器侧，码字顺序）


class Scheme(Enum):
    """接收机方案"""
    MULTI_SDR = "multi-sdr"
    SINGLE_SDR = "single-sdr"
    FULL_LIST = "full-list"


class SolverStatus(Enum):
    """SDP 求解状态"""
    CONVERGED = "converged"
    MAXITER = "maxiter"


@dataclass(frozen=True)
class FrameLayout:
    """
    帧布局：码字先沿空间维、再沿时间维放置

    快照 k 内第 2i 个比特驱动天线 i 的实部，第 2i+1 个比特驱动虚部（均从 0 计数）。
    实数域符号向量按 (Re_1..Re_Nt, Im_1..Im_Nt) 排列。
    """
    n_t: int
    n_r: int
    k: int  # 每帧快照数

    def __post_init__(self):
        for name in ('n_t', 'n_r', 'k'):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value <= 0:
                raise ValueError(f"{name} 必须为正整数: {value}")

    @classmethod
    def from_codeword_length(cls, n: int, n_t: int, n_r: int) -> 'FrameLayout':
        """由码长推导快照数"""
        if n % (2 * n_t):
            raise ValueError(f"码长 {n} 不能被 2N_t={2 * n_t} 整除")
        return cls(n_t=n_t, n_r=n_r, k=n // (2 * n_t))

    @property
    def bits_per_snapshot(self) -> int:
        return 2 * self.n_t

    @property
    def codeword_length(self) -> int:
        return 2 * self.n_t * self.k

    @property
    def symbol_order(self) -> np.ndarray:
        """s = b[symbol_order]：比特序 → 实数符号序"""
        return np.concatenate([np.arange(0, 2 * self.n_t, 2), np.arange(1, 2 * self.n_t, 2)])

    @property
    def bit_order(self) -> np.ndarray:
        """b = s[bit_order]：实数符号序 → 比特序"""
        return np.argsort(self.symbol_order)

    def snapshot_of(self, n: int) -> int:
        """码字比特 n 所在快照"""
        return n // self.bits_per_snapshot

    def snapshot_slice(self, k: int) -> slice:
        start = k * self.bits_per_snapshot
        return slice(start, start + self.bits_per_snapshot)


@dataclass
class ComplexChannel:
    """复基带信道矩阵 N_r × N_t，元素 CN(0,1)"""
    entries: np.ndarray

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=complex)
        if self.entries.ndim != 2:
            raise ValueError(f"信道矩阵必须为二维: shape={self.entries.shape}")
        if not np.all(np.isfinite(self.entries)):
            raise ValueError("信道矩阵含非有限值")

    @property
    def n_r(self) -> int:
        return self.entries.shape[0]

    @property
    def n_t(self) -> int:
        return self.entries.shape[1]


@dataclass
class RealSnapshot:
    """单个时刻的实数域接收向量与信道矩阵"""
    y: np.ndarray  # 2N_r
    H: np.ndarray  # 2N_r × 2N_t
    index: int = 0  # 快照序号，从 0 计数

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.H = np.asarray(self.H, dtype=float)
        if self.H.ndim != 2 or self.y.shape != (self.H.shape[0],):
            raise ValueError(f"快照维度不一致: y={self.y.shape}, H={self.H.shape}")

    @property
    def n_r(self) -> int:
        return self.H.shape[0] // 2

    @property
    def n_t(self) -> int:
        return self.H.shape[1] // 2

    def has_block_structure(self, atol: float = 0.0) -> bool:
        """检查 [[Re, -Im], [Im, Re]] 块结构"""
        nr, nt = self.n_r, self.n_t
        re_ok = np.allclose(self.H[:nr, :nt], self.H[nr:, nt:], rtol=0.0, atol=atol)
        im_ok = np.allclose(self.H[:nr, nt:], -self.H[nr:, :nt], rtol=0.0, atol=atol)
        return bool(re_ok and im_ok)


@dataclass(frozen=True)
class NoiseModel:
    """噪声模型，sigma_n2 为每个实分量的方差"""
    sigma_n2: float

    def __post_init__(self):
        if not (self.sigma_n2 > 0 and math.isfinite(self.sigma_n2)):
            raise ValueError(f"噪声方差必须为正: {self.sigma_n2}")

    @property
    def complex_variance(self) -> float:
        return 2.0 * self.sigma_n2


@dataclass
class LlrFrame:
    """长度为 N 的 LLR 向量；正值对应比特 0（b=+1）"""
    values: np.ndarray
    order: LlrOrder = LlrOrder.CHANNEL

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise ValueError(f"LLR 必须为一维向量: shape={self.values.shape}")

    def __len__(self) -> int:
        return self.values.shape[0]

    @classmethod
    def zeros(cls, n: int, order: LlrOrder = LlrOrder.CHANNEL) -> 'LlrFrame':
        return cls(np.zeros(n), order)

    def clipped(self, clip: float) -> 'LlrFrame':
        """逐元素限幅到 [-clip, clip]"""
        if not clip > 0:
            raise ValueError(f"限幅值必须为正: {clip}")
        return LlrFrame(np.clip(self.values, -clip, clip), self.order)

    def hard_bits(self) -> np.ndarray:
        """硬判决，LLR=0 判为比特 0"""
        return (self.values < 0).astype(np.uint8)

    def polarized(self) -> np.ndarray:
        """极化比特 b=sign(L)，sign(0)=+1"""
        return np.where(self.values >= 0, 1, -1).astype(np.int8)


@dataclass(frozen=True)
class FsConstraint:
    """
    禁止集（FS）约束：sum_{n in F} f_n - sum_{n in N_m \\ F} f_n <= |F| - 1
    """
    check: int
    subset: Tuple[int, ...]  # F，奇数个元素
    support: Tuple[int, ...]  # N_m

    def __post_init__(self):
        if not self.subset or len(self.subset) % 2 == 0:
            raise ValueError(f"校验 {self.check} 的禁止集必须为非空奇数集: {self.subset}")
        if not set(self.subset) <= set(self.support):
            raise ValueError(f"禁止集不在校验 {self.check} 的支撑集内: {self.subset}")

    @property
    def complement(self) -> Tuple[int, ...]:
        chosen = set(self.subset)
        return tuple(n for n in self.support if n not in chosen)

    @property
    def rhs(self) -> int:
        return len(self.subset) - 1

    def coefficients(self) -> Dict[int, float]:
        coeffs = {n: -1.0 for n in self.support}
        coeffs.update({n: 1.0 for n in self.subset})
        return coeffs

    def lhs(self, f: np.ndarray) -> float:
        f = np.asarray(f, dtype=float)
        return float(f[list(self.subset)].sum() - f[list(self.complement)].sum())

    def is_satisfied(self, f: np.ndarray, tol: float = 0.0) -> bool:
        return self.lhs(f) <= self.rhs + tol

    def remap(self, index_map: Sequence[int]) -> 'FsConstraint':
        """把变量下标映射到另一排列（码字序 → 信道序）"""
        index_map = np.asarray(index_map)
        return FsConstraint(
            check=self.check,
            subset=tuple(int(index_map[n]) for n in self.subset),
            support=tuple(int(index_map[n]) for n in self.support),
        )


@dataclass
class CandidateList:
    """以锚点为中心、汉明半径 P 内的候选极化比特向量"""
    k: int
    anchor: np.ndarray  # {±1}^{2N_t}
    radius: int
    members: np.ndarray  # (|L|, 2N_t)

    def __len__(self) -> int:
        return self.members.shape[0]

    @property
    def positive_mask(self) -> np.ndarray:
        """(|L|, 2N_t) 布尔阵，True 表示该候选在位置 i 上 b_i=+1"""
        return self.members > 0

    def partition_sizes(self) -> np.ndarray:
        """每个比特位置的 (+1 分区大小, -1 分区大小)"""
        pos = self.positive_mask.sum(axis=0)
        return np.stack([pos, len(self) - pos], axis=1)


@dataclass
class DetectorOutput:
    """检测器输出"""
    l_e1: LlrFrame  # 外信息，信道顺序，已限幅
    anchors: Optional[np.ndarray] = None  # (K, 2N_t)
    solution: Optional[Any] = None  # SdpSolution
    metrics: Optional[np.ndarray] = None  # (K, |L|) 候选度量缓存


@dataclass
class IterationRecord:
    """一次 Turbo 迭代的记录"""
    iteration: int
    hard_bits: np.ndarray
    parity_ok: bool
    bit_errors: Optional[int] = None
    sdp_solves: int = 0
    solver_status: List[str] = field(default_factory=list)
    inner_iterations: int = 0
    l_e1: Optional[np.ndarray] = None
    l_a2: Optional[np.ndarray] = None
    l_e2: Optional[np.ndarray] = None
    l_a1: Optional[np.ndarray] = None

    def to_dict(self, include_llrs: bool = True) -> Dict[str, Any]:
        result = {
            'iteration': self.iteration,
            'parity_ok': self.parity_ok,
            'bit_errors': self.bit_errors,
            'sdp_solves': self.sdp_solves,
            'solver_status': self.solver_status,
            'inner_iterations': self.inner_iterations,
            'hard_bits': self.hard_bits,
        }
        if include_llrs:
            for name in ('l_a1', 'l_e1', 'l_a2', 'l_e2'):
                value = getattr(self, name)
                if value is not None:
                    result[name] = value
        return result


@dataclass
class IterationTrace:
    """一帧完整的 Turbo 迭代轨迹"""
    scheme: str
    records: List[IterationRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def sdp_solves(self) -> int:
        return sum(r.sdp_solves for r in self.records)

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]

    @property
    def stopped_early(self) -> bool:
        return bool(self.records) and self.records[-1].parity_ok

    def errors_by_iteration(self, n_iters: int) -> List[Optional[int]]:
        """每次迭代的比特错误数，提前停止后沿用停止时的判决"""
        errors = [r.bit_errors for r in self.records]
        if not errors:
            return [None] * n_iters
        return (errors + [errors[-1]] * n_iters)[:n_iters]


@dataclass
class BerRecord:
    """单个 SNR 点、单次迭代的误码统计"""
    snr_db: float
    iteration: int
    bit_errors: int
    bits: int
    frame_errors: int
    frames: int
    seed: int
    config_hash: str
    wall_time: float = 0.0

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else float('nan')

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames if self.frames else float('nan')

    def to_dict(self, include_timing: bool = False) -> Dict[str, Any]:
        result = {
            'snr_db': self.snr_db,
            'iteration': self.iteration,
            'bit_errors': self.bit_errors,
            'bits': self.bits,
            'frame_errors': self.frame_errors,
            'frames': self.frames,
            'ber': self.ber,
            'fer': self.fer,
            'seed': self.seed,
            'config_hash': self.config_hash,
        }
        if include_timing:
            result['wall_time'] = round(self.wall_time, 3)
        return result


@dataclass
class MiEstimate:
    """直方图互信息估计"""
    value: float
    n_bins: int
    n_samples: int
    degenerate: bool = False

    def __post_init__(self):
        self.value = float(min(1.0, max(0.0, self.value)))
