"""
仿真服务层 - 链路构建、蒙特卡洛 BER 扫描、EXIT 测量、单帧轨迹导出
"""
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import norm
from tqdm import tqdm

from config_models import SimConfig, SimDefaults, ConfigError
from exit_chart import ExitPoint, exit_curve, write_exit_csv
from ldpc import (
    ParityCheckMatrix, GeneratorMatrix, build_pcm, derive_generator, read_alist, enumerate_fs_constraints
)
from mimo_model import RngStreams, generate_frame, snr_db_to_sigma2
from models import FrameLayout, FsConstraint, RealSnapshot, BerRecord, IterationTrace, Scheme
from schemes import create_scheme
from storage.results_store import results_store
from turbo import Interleaver, TurboReceiver, trace_to_jsonl

logger = logging.getLogger(__name__)

BER_COLUMNS = ['snr_db', 'iteration', 'bit_errors', 'bits', 'frame_errors', 'frames', 'ber', 'fer',
               'seed', 'config_hash']

# 无噪声帧使用的极小噪声方差
NOISELESS_SIGMA2 = 1e-10


@dataclass
class LinkContext:
    """一次仿真中固定不变的链路对象：码、生成矩阵、交织器、禁止集"""
    cfg: SimConfig
    pcm: ParityCheckMatrix
    generator: GeneratorMatrix
    interleaver: Interleaver
    layout: FrameLayout
    streams: RngStreams
    fs: List[FsConstraint] = field(default_factory=list)  # 码字顺序

    @classmethod
    def build(cls, cfg: SimConfig) -> 'LinkContext':
        if cfg.alist_path:
            try:
                pcm = read_alist(cfg.alist_path)
            except ValueError as e:
                raise ConfigError(f"alist 文件无效: {e}") from e
            if pcm.n != cfg.code_n:
                raise ConfigError(f"alist 码长 {pcm.n} 与配置 code_n={cfg.code_n} 不一致")
        else:
            pcm = build_pcm(cfg.code_n, cfg.code_k, cfg.col_weight, cfg.code_seed)

        streams = RngStreams(cfg.seed)
        layout = FrameLayout.from_codeword_length(pcm.n, cfg.n_t, cfg.n_r)
        interleaver = Interleaver.random(pcm.n, streams.generator('interleaver'))
        interleaver.seed = cfg.seed
        fs = enumerate_fs_constraints(pcm) if cfg.scheme != Scheme.FULL_LIST else []
        return cls(cfg=cfg, pcm=pcm, generator=derive_generator(pcm), interleaver=interleaver,
                   layout=layout, streams=streams, fs=fs)

    @property
    def fs_channel(self) -> List[FsConstraint]:
        return self.interleaver.remap_constraints(self.fs)

    def make_frame(self, snr_idx: int, frame_idx: int,
                   sigma_n2: float) -> Tuple[List[RealSnapshot], np.ndarray, np.ndarray]:
        """返回 (帧, 码字顺序码字, 信道顺序比特)"""
        msg = self.streams.generator('message', snr_idx, frame_idx).integers(0, 2, self.generator.k)
        codeword = self.generator.encode(msg)
        channel_bits = self.interleaver.interleave(codeword)
        frame = generate_frame(self.layout, self.streams.seed_sequence('frame', snr_idx, frame_idx),
                               sigma_n2, channel_bits)
        return frame, codeword, channel_bits

    def receiver(self, keep_llrs: bool = False, scheme: Optional[Scheme] = None) -> TurboReceiver:
        turbo_cfg = self.cfg.turbo_config(keep_llrs)
        if scheme is not None:
            turbo_cfg = turbo_cfg.model_copy(update={'scheme': scheme})
        fs = self.fs if self.fs or turbo_cfg.scheme == Scheme.FULL_LIST else None
        return TurboReceiver(self.pcm, turbo_cfg, self.interleaver, fs)


@dataclass
class FrameOutcome:
    """单帧仿真结果"""
    frame_idx: int
    errors: List[int]  # 每次迭代的比特错误（提前停止后沿用）
    sdp_solves: int
    iterations_run: int


def simulate_frame(link: LinkContext, receiver: TurboReceiver, snr_idx: int, frame_idx: int,
                   sigma_n2: float) -> FrameOutcome:
    frame, codeword, _ = link.make_frame(snr_idx, frame_idx, sigma_n2)
    trace = receiver.run(frame, sigma_n2, truth=codeword)
    return FrameOutcome(frame_idx=frame_idx,
                        errors=trace.errors_by_iteration(link.cfg.turbo_iters),
                        sdp_solves=trace.sdp_solves,
                        iterations_run=len(trace))


# 工作进程内按配置哈希缓存链路对象
_WORKER_LINKS: Dict[str, Tuple[LinkContext, TurboReceiver]] = {}


def _worker_link(cfg_json: bytes) -> Tuple[LinkContext, TurboReceiver]:
    cfg = SimConfig.model_validate_json(cfg_json)
    key = cfg.config_hash()
    if key not in _WORKER_LINKS:
        link = LinkContext.build(cfg)
        _WORKER_LINKS[key] = (link, link.receiver())
    return _WORKER_LINKS[key]


def _simulate_frame_task(args) -> FrameOutcome:
    cfg_json, snr_idx, frame_idx, sigma_n2 = args
    link, receiver = _worker_link(cfg_json)
    return simulate_frame(link, receiver, snr_idx, frame_idx, sigma_n2)


def two_proportion_z_test(e1: int, n1: int, e2: int, n2: int) -> Tuple[float, float]:
    """
    单侧双比例 z 检验，备择假设 p1 > p2

    Returns:
        (z, p_value)
    """
    if n1 <= 0 or n2 <= 0:
        raise ValueError(f"样本数必须为正: n1={n1}, n2={n2}")
    if not (0 <= e1 <= n1 and 0 <= e2 <= n2):
        raise ValueError(f"错误数必须位于 [0, n]: e1={e1}, e2={e2}")
    p1, p2 = e1 / n1, e2 / n2
    pooled = (e1 + e2) / (n1 + n2)
    se = math.sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2))
    z = 0.0 if se == 0 else (p1 - p2) / se
    return z, float(norm.sf(z))


class SimulationService:
    """仿真服务"""

    def __init__(self):
        self.stats = {
            'frames': 0,
            'sdp_solves': 0,
            'sweeps': 0,
        }

    def _run_batch(self, link: LinkContext, receiver: TurboReceiver, executor: Optional[ProcessPoolExecutor],
                   snr_idx: int, frame_ids: Sequence[int], sigma_n2: float) -> List[FrameOutcome]:
        if executor is None:
            return [simulate_frame(link, receiver, snr_idx, i, sigma_n2) for i in frame_ids]
        cfg_json = link.cfg.model_dump_json()
        return list(executor.map(_simulate_frame_task, [(cfg_json, snr_idx, i, sigma_n2) for i in frame_ids]))

    def run_ber_sweep(self, cfg: SimConfig, out_path: Optional[Union[str, Path]] = None,
                      include_timing: bool = False, progress: bool = False) -> List[BerRecord]:
        """
        BER 扫描

        每个 SNR 点按固定批大小仿真，批结束后检查停止条件：
        最终迭代的比特错误数 ≥ min_errors 或帧数 ≥ max_frames。
        批划分与进程数无关，因此结果只由配置与种子决定。
        """
        link = LinkContext.build(cfg)
        receiver = link.receiver()
        iters = cfg.turbo_iters
        n_bits = link.pcm.n
        config_hash = cfg.config_hash()
        logger.info(f"BER 扫描开始: scheme={cfg.scheme.value}, SNR={cfg.snr_grid_db}, hash={config_hash}")

        executor = ProcessPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
        records: List[BerRecord] = []
        try:
            for snr_idx, snr_db in enumerate(cfg.snr_grid_db):
                sigma_n2 = snr_db_to_sigma2(snr_db, cfg.n_t)
                bit_errors = np.zeros(iters, dtype=np.int64)
                frame_errors = np.zeros(iters, dtype=np.int64)
                frames = 0
                start = time.perf_counter()

                with tqdm(total=cfg.max_frames, desc=f"SNR {snr_db:g} dB", disable=not progress,
                          leave=False) as bar:
                    while frames < cfg.max_frames and bit_errors[-1] < cfg.min_errors:
                        batch = range(frames, min(frames + cfg.batch_frames, cfg.max_frames))
                        for outcome in self._run_batch(link, receiver, executor, snr_idx, batch, sigma_n2):
                            errs = np.asarray(outcome.errors, dtype=np.int64)
                            bit_errors += errs
                            frame_errors += errs > 0
                            self.stats['sdp_solves'] += outcome.sdp_solves
                        frames += len(batch)
                        bar.update(len(batch))

                elapsed = time.perf_counter() - start
                self.stats['frames'] += frames
                for it in range(iters):
                    records.append(BerRecord(
                        snr_db=float(snr_db), iteration=it + 1, bit_errors=int(bit_errors[it]),
                        bits=frames * n_bits, frame_errors=int(frame_errors[it]), frames=frames,
                        seed=cfg.seed, config_hash=config_hash, wall_time=elapsed,
                    ))
                logger.info(f"SNR={snr_db:g}dB 完成: 帧数={frames}, "
                            f"BER(末次迭代)={bit_errors[-1] / (frames * n_bits):.3e}, 用时 {elapsed:.1f}s")
        finally:
            if executor is not None:
                executor.shutdown()

        self.stats['sweeps'] += 1
        if out_path is not None:
            write_ber_csv(records, out_path, cfg, include_timing)
        return records

    def run_exit(self, cfg: SimConfig, schemes: Optional[Sequence[Scheme]] = None,
                 out_path: Optional[Union[str, Path]] = None, progress: bool = False) -> List[ExitPoint]:
        """对每个 SNR 点与每个方案测量检测器 EXIT 曲线"""
        schemes = list(schemes) if schemes else [cfg.scheme]
        needs_fs = any(s != Scheme.FULL_LIST for s in schemes)
        link = LinkContext.build(cfg if not needs_fs else cfg.model_copy(update={'scheme': Scheme.MULTI_SDR}))
        fs_channel = link.fs_channel
        turbo_cfg = cfg.turbo_config()
        exit_cfg = cfg.exit_config()

        points: List[ExitPoint] = []
        jobs = [(i, snr, s) for i, snr in enumerate(cfg.snr_grid_db) for s in schemes]
        for snr_idx, snr_db, scheme_key in tqdm(jobs, desc="EXIT", disable=not progress):
            sigma_n2 = snr_db_to_sigma2(snr_db, cfg.n_t)
            scheme = create_scheme(turbo_cfg, scheme_key)

            def source(t, _snr_idx=snr_idx, _sigma=sigma_n2):
                frame, _, channel_bits = link.make_frame(_snr_idx, t, _sigma)
                return frame, channel_bits

            fs = fs_channel if scheme_key != Scheme.FULL_LIST else []
            points.extend(exit_curve(scheme, snr_db, exit_cfg.grid, exit_cfg.frames, source, fs,
                                     exit_cfg.bins, exit_cfg.seed))
            logger.info(f"EXIT 完成: scheme={scheme.name}, SNR={snr_db:g}dB")

        if out_path is not None:
            write_exit_csv(points, out_path, cfg.header_fields())
        return points

    def run_trace(self, cfg: SimConfig, snr_db: Optional[float] = None, frame_idx: int = 0,
                  out_path: Optional[Union[str, Path]] = None, noiseless: bool = False) -> IterationTrace:
        """导出单帧完整迭代轨迹"""
        link = LinkContext.build(cfg)
        snr_db = cfg.snr_grid_db[0] if snr_db is None else snr_db
        sigma_n2 = NOISELESS_SIGMA2 if noiseless else snr_db_to_sigma2(snr_db, cfg.n_t)
        frame, codeword, _ = link.make_frame(0, frame_idx, sigma_n2)
        trace = link.receiver(keep_llrs=True).run(frame, sigma_n2, truth=codeword)
        if out_path is not None:
            extra = {'snr_db': None if noiseless else snr_db, 'frame': frame_idx,
                     'config_hash': cfg.config_hash(), 'seed': cfg.seed}
            trace_to_jsonl(trace, out_path, extra=extra)
        return trace


def write_ber_csv(records: Sequence[BerRecord], path: Union[str, Path], cfg: SimConfig,
                  include_timing: bool = False) -> Path:
    columns = BER_COLUMNS + (['wall_time'] if include_timing else [])
    rows = [r.to_dict(include_timing) for r in records]
    return results_store.write_table(rows, path, SimDefaults.CSV_SCHEMA, cfg.header_fields(), columns)


# 全局服务实例
sim_service = SimulationService()


def run_ber_sweep(cfg: SimConfig, out_path: Optional[Union[str, Path]] = None,
                  include_timing: bool = False, progress: bool = False) -> List[BerRecord]:
    return sim_service.run_ber_sweep(cfg, out_path, include_timing, progress)


def run_exit(cfg: SimConfig, schemes: Optional[Sequence[Scheme]] = None,
             out_path: Optional[Union[str, Path]] = None, progress: bool = False) -> List[ExitPoint]:
    return sim_service.run_exit(cfg, schemes, out_path, progress)


def run_trace(cfg: SimConfig, snr_db: Optional[float] = None, frame_idx: int = 0,
              out_path: Optional[Union[str, Path]] = None, noiseless: bool = False) -> IterationTrace:
    return sim_service.run_trace(cfg, snr_db, frame_idx, out_path, noiseless)
