"""
EXIT 测量模块 - J 函数、一致高斯先验生成、直方图互信息估计、检测器外信息转移曲线
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, List, Any, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from config_models import SimDefaults
from mimo_model import RngStreams, snr_db_to_sigma2, layout_of
from models import RealSnapshot, FsConstraint, LlrFrame, LlrOrder, MiEstimate
from schemes import BaseScheme, DetectionContext
from storage.results_store import results_store

logger = logging.getLogger(__name__)

# σ 超过此值时 J(σ) 与 1 的差低于数值精度
SIGMA_MAX = 40.0

FrameSource = Callable[[int], Tuple[Sequence[RealSnapshot], np.ndarray]]


def _j_single(sigma: float) -> float:
    if sigma <= 0:
        return 0.0
    mean, var = sigma ** 2 / 2.0, sigma ** 2

    def integrand(x):
        density = np.exp(-(x - mean) ** 2 / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)
        return density * np.logaddexp(0.0, -x) / np.log(2.0)

    lo, hi = mean - 12.0 * sigma, mean + 12.0 * sigma
    value, _ = integrate.quad(integrand, lo, hi, points=[0.0] if lo < 0 < hi else None, limit=200)
    return 1.0 - value


def j_function(sigma: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """一致高斯 LLR（均值 σ²/2，方差 σ²）与等概比特之间的互信息"""
    if np.isscalar(sigma):
        return _j_single(float(sigma))
    sigma = np.asarray(sigma, dtype=float)
    return np.vectorize(_j_single, otypes=[float])(sigma)


@lru_cache(maxsize=1)
def _inverse_table() -> Tuple[PchipInterpolator, float, float]:
    grid = np.concatenate([np.linspace(0.0, 10.0, 201), np.linspace(10.25, SIGMA_MAX, 120)])
    values = j_function(grid)
    # 只保留严格递增的点
    keep = [0]
    for i in range(1, grid.size):
        if values[i] > values[keep[-1]] + 1e-12:
            keep.append(i)
    x, y = values[keep], grid[keep]
    return PchipInterpolator(x, y), float(x[-1]), float(y[-1])


def j_function_inverse(mi: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """J⁻¹：互信息 → σ_A（单调插值）"""
    arr = np.asarray(mi, dtype=float)
    if np.any((arr < 0) | (arr > 1)):
        raise ValueError(f"互信息必须位于 [0,1]: {mi}")
    table, top, sigma_top = _inverse_table()
    out = np.where(arr >= top, sigma_top, table(np.minimum(arr, top)))
    out = np.where(arr <= 0, 0.0, out)
    return float(out) if np.isscalar(mi) else out


def gen_apriori(bits: np.ndarray, sigma_a: float, rng: np.random.Generator,
                order: LlrOrder = LlrOrder.CHANNEL) -> LlrFrame:
    """L = (σ_A²/2)·b + σ_A·w"""
    if sigma_a < 0:
        raise ValueError(f"σ_A 必须非负: {sigma_a}")
    b = np.asarray(bits, dtype=float)
    if sigma_a == 0:
        return LlrFrame(np.zeros(b.size), order)
    return LlrFrame(sigma_a ** 2 / 2.0 * b + sigma_a * rng.standard_normal(b.size), order)


def mi_histogram(llrs, bits, n_bins: int = SimDefaults.EXIT_BINS) -> MiEstimate:
    """
    直方图法互信息估计

    按比特取值分别统计 LLR 的条件直方图（对称分箱覆盖观测范围），比特按等概处理。
    """
    L = llrs.values if isinstance(llrs, LlrFrame) else np.asarray(llrs, dtype=float)
    b = np.asarray(bits)
    if L.shape != b.shape or L.ndim != 1:
        raise ValueError(f"LLR 与比特长度不一致: {L.shape} vs {b.shape}")
    if n_bins < 2:
        raise ValueError(f"箱数必须 ≥ 2: {n_bins}")
    if not np.all(np.abs(b) == 1):
        raise ValueError("比特必须为 ±1 极化形式")

    n = L.size
    pos, neg = L[b > 0], L[b < 0]
    if n == 0 or np.all(L == L[0]) or pos.size == 0 or neg.size == 0:
        return MiEstimate(0.0, n_bins, n, degenerate=True)

    limit = np.abs(L).max()
    edges = np.linspace(-limit, limit, n_bins + 1)
    p_pos = np.histogram(pos, bins=edges)[0] / pos.size
    p_neg = np.histogram(neg, bins=edges)[0] / neg.size
    mix = p_pos + p_neg

    value = 0.0
    for p in (p_pos, p_neg):
        nz = p > 0
        value += 0.5 * np.sum(p[nz] * np.log2(2.0 * p[nz] / mix[nz]))
    return MiEstimate(value, n_bins, n)


@dataclass
class ExitPoint:
    """EXIT 曲线上的一点"""
    i_a: float
    i_e: float
    snr_db: float
    scheme: str
    samples: int
    sigma_a: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'I_A': self.i_a,
            'I_E': self.i_e,
            'snr_db': self.snr_db,
            'scheme': self.scheme,
            'samples': self.samples,
        }


def exit_curve(scheme: BaseScheme, snr_db: float, i_a_grid: Sequence[float], trials: int,
               frame_source: FrameSource, fs: Sequence[FsConstraint] = (),
               n_bins: int = SimDefaults.EXIT_BINS, seed: int = 0) -> List[ExitPoint]:
    """
    检测器 EXIT 曲线

    每个 I_A 反解 σ_A，生成一致高斯先验，做一次检测，测量 L_E1 的互信息。
    所有网格点使用同一组帧（frame_source 按试验序号确定性生成）。

    Args:
        frame_source: 试验序号 → (帧, 信道顺序编码比特 0/1)
    """
    if trials < 1:
        raise ValueError(f"试验次数必须 ≥ 1: {trials}")
    if any(not 0.0 <= x < 1.0 for x in i_a_grid):
        raise ValueError(f"I_A 网格必须位于 [0,1): {list(i_a_grid)}")

    streams = RngStreams(seed)
    frames = [frame_source(t) for t in range(trials)]
    sigma_n2 = snr_db_to_sigma2(snr_db, frames[0][0][0].n_t)

    points = []
    for g, i_a in enumerate(i_a_grid):
        sigma_a = float(j_function_inverse(i_a))
        llrs, polar = [], []
        for t, (frame, coded) in enumerate(frames):
            b = 1 - 2 * np.asarray(coded, dtype=np.int8)
            prior = gen_apriori(b, sigma_a, streams.generator('prior', g, t))
            ctx = DetectionContext(frame=frame, sigma_n2=sigma_n2, layout=layout_of(frame), fs=list(fs))
            out = scheme.detect_with_prior(ctx, prior)
            llrs.append(out.l_e1.values)
            polar.append(b)
        est = mi_histogram(np.concatenate(llrs), np.concatenate(polar), n_bins)
        if est.degenerate:
            logger.warning(f"EXIT 点 I_A={i_a} 的 LLR 退化，互信息记为 0")
        points.append(ExitPoint(i_a=float(i_a), i_e=est.value, snr_db=snr_db, scheme=scheme.name,
                                samples=est.n_samples, sigma_a=sigma_a))
        logger.debug(f"EXIT {scheme.name} SNR={snr_db}dB: I_A={i_a:.3f} → I_E={est.value:.4f}")
    return points


EXIT_COLUMNS = ['I_A', 'I_E', 'snr_db', 'scheme', 'samples']


def write_exit_csv(points: Sequence[ExitPoint], path: Union[str, Path],
                   header: Optional[Dict[str, Any]] = None) -> Path:
    rows = [p.to_dict() for p in points]
    return results_store.write_table(rows, path, SimDefaults.EXIT_CSV_SCHEMA, header or {}, EXIT_COLUMNS)
