"""
Turbo 迭代接收机 - 检测器与 SPA 译码器之间经交织/解交织交换外信息
"""
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from config_models import TurboConfig
from ldpc import ParityCheckMatrix, SpaDecoder, enumerate_fs_constraints
from mimo_model import layout_of
from models import (
    RealSnapshot, FsConstraint, LlrFrame, LlrOrder, IterationRecord, IterationTrace, Scheme
)
from schemes import BaseScheme, DetectionContext, create_scheme
from storage.results_store import results_store

logger = logging.getLogger(__name__)

ArrayOrFrame = Union[LlrFrame, np.ndarray]


class Interleaver:
    """
    比特交织器

    interleave: 码字顺序 → 信道顺序，out[j] = x[π(j)]
    deinterleave: 信道顺序 → 码字顺序
    """

    def __init__(self, permutation, seed: Optional[int] = None):
        perm = np.asarray(permutation, dtype=np.int64)
        if perm.ndim != 1 or not np.array_equal(np.sort(perm), np.arange(perm.size)):
            raise ValueError("交织置换必须是 0..N-1 的双射")
        self.permutation = perm
        self.seed = seed
        self.channel_index = np.argsort(perm)  # 码字比特 n 在信道中的位置

    @classmethod
    def random(cls, n: int, seed: Union[int, np.random.Generator]) -> 'Interleaver':
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        return cls(rng.permutation(n), seed if isinstance(seed, int) else None)

    @classmethod
    def identity(cls, n: int) -> 'Interleaver':
        return cls(np.arange(n))

    def __len__(self) -> int:
        return self.permutation.size

    def _check(self, values: np.ndarray):
        if values.shape != (len(self),):
            raise ValueError(f"交织长度不一致: 期望 {len(self)}, 实际 {values.shape}")

    def interleave(self, x: ArrayOrFrame) -> ArrayOrFrame:
        values = x.values if isinstance(x, LlrFrame) else np.asarray(x)
        self._check(values)
        out = values[self.permutation]
        return LlrFrame(out, LlrOrder.CHANNEL) if isinstance(x, LlrFrame) else out

    def deinterleave(self, x: ArrayOrFrame) -> ArrayOrFrame:
        values = x.values if isinstance(x, LlrFrame) else np.asarray(x)
        self._check(values)
        out = np.empty_like(values)
        out[self.permutation] = values
        return LlrFrame(out, LlrOrder.DECODER) if isinstance(x, LlrFrame) else out

    def remap_constraints(self, fs: Sequence[FsConstraint]) -> List[FsConstraint]:
        """码字顺序的禁止集约束 → 信道顺序"""
        return [c.remap(self.channel_index) for c in fs]


def clip_llr(values: ArrayOrFrame, clip: float) -> ArrayOrFrame:
    if isinstance(values, LlrFrame):
        return values.clipped(clip)
    return LlrFrame(np.asarray(values, dtype=float)).clipped(clip).values


class TurboReceiver:
    """
    Turbo 接收机

    每次迭代：检测（L_A1 → L_E1，已限幅）→ 解交织得到 L_A2 → SPA 译码得到 L_E2 → 交织得到下一轮 L_A1。
    所有校验满足或达到最大迭代次数时停止。
    """

    def __init__(self, pcm: ParityCheckMatrix, cfg: TurboConfig, interleaver: Interleaver,
                 fs: Optional[Sequence[FsConstraint]] = None):
        if len(interleaver) != pcm.n:
            raise ValueError(f"交织长度 {len(interleaver)} 与码长 {pcm.n} 不一致")
        self.pcm = pcm
        self.cfg = cfg
        self.interleaver = interleaver
        self.decoder = SpaDecoder(pcm, cfg.decoder_iters)
        self.scheme: BaseScheme = create_scheme(cfg)

        self.fs_channel: List[FsConstraint] = []
        if cfg.scheme != Scheme.FULL_LIST:
            fs = enumerate_fs_constraints(pcm) if fs is None else fs
            self.fs_channel = interleaver.remap_constraints(fs)

    def context(self, frame: Sequence[RealSnapshot], sigma_n2: float) -> DetectionContext:
        layout = layout_of(frame)
        if layout.codeword_length != self.pcm.n:
            raise ValueError(f"帧长度 {layout.codeword_length} 与码长 {self.pcm.n} 不一致")
        return DetectionContext(frame=frame, sigma_n2=sigma_n2, layout=layout, fs=self.fs_channel)

    def run(self, frame: Sequence[RealSnapshot], sigma_n2: float,
            truth: Optional[np.ndarray] = None) -> IterationTrace:
        """
        Args:
            frame: K 个快照（信道顺序）
            sigma_n2: 每实分量噪声方差
            truth: 码字顺序的发送码字，仅用于统计错误
        """
        ctx = self.context(frame, sigma_n2)
        if truth is not None:
            truth = np.asarray(truth).astype(np.uint8)
            if truth.shape != (self.pcm.n,):
                raise ValueError(f"真值码字长度必须为 {self.pcm.n}: {truth.shape}")

        trace = IterationTrace(scheme=self.scheme.name)
        l_a1 = LlrFrame.zeros(self.pcm.n, LlrOrder.CHANNEL)
        for t in range(1, self.cfg.max_turbo_iters + 1):
            out = self.scheme.detect(ctx, l_a1, t)
            l_a2 = self.interleaver.deinterleave(out.l_e1)
            result = self.decoder.decode(l_a2)

            statuses = [out.solution.status.value] if out.solution is not None else []
            record = IterationRecord(
                iteration=t,
                hard_bits=result.hard_bits,
                parity_ok=result.parity_ok,
                bit_errors=int(np.count_nonzero(result.hard_bits != truth)) if truth is not None else None,
                sdp_solves=len(statuses),
                solver_status=statuses,
                inner_iterations=result.iterations,
            )
            if self.cfg.keep_llrs:
                record.l_a1 = l_a1.values.copy()
                record.l_e1 = out.l_e1.values.copy()
                record.l_a2 = l_a2.values.copy()
                record.l_e2 = result.l_e2.values.copy()
            trace.records.append(record)
            logger.debug(f"Turbo 迭代 {t}: parity_ok={result.parity_ok}, errors={record.bit_errors}")

            if result.parity_ok:
                break
            l_a1 = self.interleaver.interleave(result.l_e2)
        return trace


def run_turbo(frame: Sequence[RealSnapshot], sigma_n2: float, pcm: ParityCheckMatrix, cfg: TurboConfig,
              interleaver: Optional[Interleaver] = None, truth: Optional[np.ndarray] = None,
              fs: Optional[Sequence[FsConstraint]] = None) -> IterationTrace:
    interleaver = interleaver or Interleaver.identity(pcm.n)
    return TurboReceiver(pcm, cfg, interleaver, fs).run(frame, sigma_n2, truth)


def trace_to_jsonl(trace: IterationTrace, path: Union[str, Path], include_llrs: bool = True,
                   extra: Optional[dict] = None) -> Path:
    """每次迭代一行 JSON"""
    rows = []
    for record in trace.records:
        row = {'scheme': trace.scheme}
        row.update(extra or {})
        row.update(record.to_dict(include_llrs=include_llrs))
        rows.append(row)
    return results_store.write_jsonl(rows, path)
