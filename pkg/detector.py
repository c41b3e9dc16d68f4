"""
软检测模块 - 联合 MAP-SDR 问题装配、解的取整、汉明球候选列表、max-log 外信息 LLR
"""
import logging
from functools import lru_cache
from itertools import combinations
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from config_models import SimDefaults, SdpSettings
from ldpc import EnumerationGuardError
from mimo_model import layout_of
from models import (
    RealSnapshot, FrameLayout, LlrFrame, LlrOrder, FsConstraint, CandidateList, DetectorOutput, SolverStatus
)
from sdp import BlockSdpProblem, SdpSolution, solve

logger = logging.getLogger(__name__)

Frame = Sequence[RealSnapshot]


def cost_matrix(snapshot: RealSnapshot) -> np.ndarray:
    """C = [[HᵀH, -Hᵀy], [-yᵀH, ‖y‖²]]，秩一点处 tr(C X) = ‖y - Hx‖²"""
    H, y = snapshot.H, snapshot.y
    hty = H.T @ y
    D = H.shape[1] + 1
    C = np.empty((D, D))
    C[:-1, :-1] = H.T @ H
    C[:-1, -1] = -hty
    C[-1, :-1] = -hty
    C[-1, -1] = y @ y
    return C


def _as_frame(values: Union[LlrFrame, np.ndarray, None], n: int, name: str) -> np.ndarray:
    if values is None:
        return np.zeros(n)
    arr = values.values if isinstance(values, LlrFrame) else np.asarray(values, dtype=float)
    if arr.shape != (n,):
        raise ValueError(f"{name} 长度必须为 {n}: {arr.shape}")
    return arr


def assemble_joint_map_sdr(frame: Frame, l_a1: Union[LlrFrame, np.ndarray, None], sigma_n2: float,
                           fs: Sequence[FsConstraint] = ()) -> BlockSdpProblem:
    """
    联合 MAP-SDR：Σ tr(C_k X_k) + 2σ²·L_A1ᵀf，禁止集约束以信道顺序给出

    码字比特 n = k·2N_t + l 耦合到块 k 的 (bit_order[l], 2N_t) 元素。
    """
    layout = layout_of(frame)
    N = layout.codeword_length
    prior = _as_frame(l_a1, N, "L_A1")
    if not sigma_n2 > 0:
        raise ValueError(f"噪声方差必须为正: {sigma_n2}")

    costs = np.stack([cost_matrix(s) for s in frame])
    bits = np.arange(N)
    coupling_block = bits // layout.bits_per_snapshot
    coupling_row = layout.bit_order[bits % layout.bits_per_snapshot]
    return BlockSdpProblem(costs, 2.0 * sigma_n2 * prior, coupling_block, coupling_row, list(fs))


def round_solution(sol: SdpSolution, layout: FrameLayout) -> np.ndarray:
    """f ≤ 0.5 → b = +1，返回 (K, 2N_t) 锚点（比特序）"""
    f = np.asarray(sol.f, dtype=float)
    if f.shape != (layout.codeword_length,):
        raise ValueError(f"解的维数 {f.shape} 与帧布局不一致")
    return np.where(f <= 0.5, 1, -1).astype(np.int8).reshape(layout.k, layout.bits_per_snapshot)


@lru_cache(maxsize=64)
def _flip_patterns(n_bits: int, radius: int) -> np.ndarray:
    """距离 0..P 的全部翻转模式（±1 乘子），按距离与字典序排列"""
    patterns = []
    for d in range(radius + 1):
        for idx in combinations(range(n_bits), d):
            p = np.ones(n_bits, dtype=np.int8)
            p[list(idx)] = -1
            patterns.append(p)
    out = np.array(patterns, dtype=np.int8)
    out.setflags(write=False)
    return out


def hamming_ball_list(anchor: np.ndarray, radius: int, k: int = 0) -> CandidateList:
    anchor = np.asarray(anchor).astype(np.int8)
    n_bits = anchor.size
    if not np.all(np.abs(anchor) == 1):
        raise ValueError("锚点必须为 ±1 向量")
    if not 0 <= radius <= n_bits:
        raise ValueError(f"汉明半径 P={radius} 必须位于 [0, {n_bits}]")
    members = _flip_patterns(n_bits, radius) * anchor[None, :]
    return CandidateList(k=k, anchor=anchor, radius=radius, members=members)


def _symbol_order(n_bits: int) -> np.ndarray:
    return np.concatenate([np.arange(0, n_bits, 2), np.arange(1, n_bits, 2)])


def candidate_distances(cands: CandidateList, snapshot: RealSnapshot) -> np.ndarray:
    """‖y - H s‖²，s 为候选比特映射后的符号"""
    s = cands.members[:, _symbol_order(cands.members.shape[1])].astype(float)
    residual = snapshot.y[None, :] - s @ snapshot.H.T
    return np.einsum('ij,ij->i', residual, residual)


def maxlog_extrinsic_llr(cands: CandidateList, snapshot: RealSnapshot, sigma_n2: float,
                         l_a1_k: Optional[np.ndarray] = None) -> np.ndarray:
    """
    max-log 外信息 LLR

    比特 i 的度量只含其余比特的先验，因此输出与 L_A1(i) 本身无关。
    """
    n_bits = cands.members.shape[1]
    prior = np.zeros(n_bits) if l_a1_k is None else np.asarray(l_a1_k, dtype=float)
    if prior.shape != (n_bits,):
        raise ValueError(f"先验长度必须为 {n_bits}: {prior.shape}")

    positive = cands.positive_mask
    sizes = cands.partition_sizes()
    if np.any(sizes == 0):
        raise ValueError(f"快照 {cands.k} 存在空的候选分区（P={cands.radius}），无法计算外信息")

    channel = -candidate_distances(cands, snapshot) / (2.0 * sigma_n2)
    # 第 i 列去掉比特 i 自身的先验
    excl = prior[:, None] * (1.0 - np.eye(n_bits)) / 2.0
    metric = channel[:, None] + cands.members.astype(float) @ excl

    best_pos = np.where(positive, metric, -np.inf).max(axis=0)
    best_neg = np.where(positive, -np.inf, metric).max(axis=0)
    return best_pos - best_neg


def _total_metrics(cands: CandidateList, snapshot: RealSnapshot, sigma_n2: float,
                   prior: np.ndarray) -> np.ndarray:
    channel = -candidate_distances(cands, snapshot) / (2.0 * sigma_n2)
    return channel + cands.members.astype(float) @ prior / 2.0


def list_detect(frame: Frame, anchors: np.ndarray, sigma_n2: float,
                l_a1: Union[LlrFrame, np.ndarray, None], radius: int,
                clip: float = SimDefaults.CLIP, keep_metrics: bool = False) -> DetectorOutput:
    """以给定锚点构造汉明球列表并输出限幅后的外信息（信道顺序）"""
    layout = layout_of(frame)
    prior = _as_frame(l_a1, layout.codeword_length, "L_A1")
    anchors = np.asarray(anchors)
    if anchors.shape != (layout.k, layout.bits_per_snapshot):
        raise ValueError(f"锚点维度必须为 {(layout.k, layout.bits_per_snapshot)}: {anchors.shape}")
    if radius < 1:
        raise ValueError(f"外信息计算要求 P ≥ 1: {radius}")

    llr = np.empty(layout.codeword_length)
    metrics = []
    for k, snapshot in enumerate(frame):
        sl = layout.snapshot_slice(k)
        cands = hamming_ball_list(anchors[k], radius, k)
        llr[sl] = maxlog_extrinsic_llr(cands, snapshot, sigma_n2, prior[sl])
        if keep_metrics:
            metrics.append(_total_metrics(cands, snapshot, sigma_n2, prior[sl]))

    l_e1 = LlrFrame(llr, LlrOrder.CHANNEL).clipped(clip)
    return DetectorOutput(l_e1=l_e1, anchors=anchors.astype(np.int8),
                          metrics=np.stack(metrics) if keep_metrics else None)


def full_list_detect(frame: Frame, sigma_n2: float, l_a1: Union[LlrFrame, np.ndarray, None],
                     clip: float = SimDefaults.CLIP, keep_metrics: bool = False) -> DetectorOutput:
    """穷举全部 4^{N_t} 个候选"""
    layout = layout_of(frame)
    size = 4 ** layout.n_t
    if size > SimDefaults.FULL_LIST_LIMIT:
        raise EnumerationGuardError(f"全列表规模 4^{layout.n_t}={size} 超过上限 {SimDefaults.FULL_LIST_LIMIT}")
    anchors = np.ones((layout.k, layout.bits_per_snapshot), dtype=np.int8)
    return list_detect(frame, anchors, sigma_n2, l_a1, layout.bits_per_snapshot, clip, keep_metrics)


def simplified_anchor(l_e1_init: Union[LlrFrame, np.ndarray], l_a1: Union[LlrFrame, np.ndarray],
                      layout: FrameLayout) -> np.ndarray:
    """b* = sign(L_E1^init + L_A1)，sign(0) = +1"""
    N = layout.codeword_length
    comb = _as_frame(l_e1_init, N, "L_E1_init") + _as_frame(l_a1, N, "L_A1")
    return np.where(comb >= 0, 1, -1).astype(np.int8).reshape(layout.k, layout.bits_per_snapshot)


def joint_map_sdr_detect(frame: Frame, l_a1: Union[LlrFrame, np.ndarray, None], sigma_n2: float,
                         fs: Sequence[FsConstraint], radius: int, clip: float = SimDefaults.CLIP,
                         sdp: Optional[SdpSettings] = None,
                         warm_start: Optional[SdpSolution] = None) -> DetectorOutput:
    """求解联合 MAP-SDR，取整得到锚点，再做列表外信息计算；warm_start 为同一帧的已有解"""
    sdp = sdp or SdpSettings()
    layout = layout_of(frame)
    problem = assemble_joint_map_sdr(frame, l_a1, sigma_n2, fs)
    solution = solve(problem, tol=sdp.tol, max_iters=sdp.max_iters, relaxation=sdp.relaxation,
                     warm_start=warm_start)
    if solution.status == SolverStatus.MAXITER:
        logger.debug(f"联合 MAP-SDR 未收敛（{solution.iterations} 次迭代），使用最优迭代点取整")
    anchors = round_solution(solution, layout)
    out = list_detect(frame, anchors, sigma_n2, l_a1, radius, clip)
    out.solution = solution
    return out


def disjoint_sdr_detect(frame: Frame, sdp: Optional[SdpSettings] = None) -> Tuple[np.ndarray, SdpSolution]:
    """无先验、无码约束的逐快照 SDR，返回 (锚点, 解)"""
    sdp = sdp or SdpSettings()
    layout = layout_of(frame)
    # 无先验时线性项为零，噪声方差不影响问题
    problem = assemble_joint_map_sdr(frame, None, 1.0, ())
    solution = solve(problem, tol=sdp.tol, max_iters=sdp.max_iters, relaxation=sdp.relaxation)
    return round_solution(solution, layout), solution


def exhaustive_llr(snapshot: RealSnapshot, sigma_n2: float, l_a1_k: Optional[np.ndarray] = None) -> np.ndarray:
    """逐比特直接枚举全部候选的 max-log LLR"""
    n_bits = 2 * snapshot.n_t
    prior = np.zeros(n_bits) if l_a1_k is None else np.asarray(l_a1_k, dtype=float)
    out = np.empty(n_bits)
    grid = np.array(np.meshgrid(*[[1, -1]] * n_bits, indexing='ij')).reshape(n_bits, -1).T
    s = grid[:, _symbol_order(n_bits)].astype(float)
    dist = ((snapshot.y[None, :] - s @ snapshot.H.T) ** 2).sum(axis=1)
    for i in range(n_bits):
        others = np.delete(np.arange(n_bits), i)
        metric = -dist / (2.0 * sigma_n2) + grid[:, others] @ prior[others] / 2.0
        out[i] = metric[grid[:, i] > 0].max() - metric[grid[:, i] < 0].max()
    return out


def exhaustive_ml(snapshot: RealSnapshot) -> Tuple[np.ndarray, float]:
    """穷举 ML：返回 (最优比特序 ±1 向量, ‖y - Hs‖²)"""
    n_bits = 2 * snapshot.n_t
    cands = hamming_ball_list(np.ones(n_bits, dtype=np.int8), n_bits)
    dist = candidate_distances(cands, snapshot)
    best = int(np.argmin(dist))
    return cands.members[best], float(dist[best])
