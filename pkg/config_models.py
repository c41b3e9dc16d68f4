"""
配置数据模型 - Pydantic 模型定义
用于仿真配置的校验、默认值说明和输出文件头回显
"""
import hashlib
import logging
from pathlib import Path
from typing import ClassVar, FrozenSet, List, Dict, Any, Optional

import orjson
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from models import Scheme

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """配置无效或无法读取"""


class SimDefaults:
    """全局默认常量"""
    N_T = 4
    N_R = 4
    CODE_N = 256
    CODE_K = 128
    COL_WEIGHT = 3
    RADIUS = 2
    CLIP = 8.0
    TURBO_ITERS = 3
    DECODER_ITERS = 20

    SDP_TOL = 1e-6
    SDP_MAX_ITERS = 5000

    MIN_ERRORS = 200
    MAX_FRAMES = 5000
    BATCH_FRAMES = 10

    EXIT_BINS = 64
    EXIT_GRID = [0.0, 0.25, 0.5, 0.75]
    EXIT_FRAMES = 40

    # 枚举保护
    FS_ENUMERATION_LIMIT = 2 ** 15
    FULL_LIST_LIMIT = 4096

    CSV_SCHEMA = "ber-v1"
    EXIT_CSV_SCHEMA = "exit-v1"
    SNR_CONVENTION = "SNR_dB=10*log10(N_t*E_s/(2*sigma_n2)),E_s=2"


class SdpSettings(BaseModel):
    """SDP 求解参数"""
    tol: float = Field(default=SimDefaults.SDP_TOL, description="残差容限（无穷范数）", gt=0)
    max_iters: int = Field(default=SimDefaults.SDP_MAX_ITERS, description="最大迭代次数", ge=1)
    relaxation: float = Field(default=1.6, description="过松弛系数", gt=0, lt=2)
    warm_start: bool = Field(default=True, description="后续 Turbo 迭代以同一帧上一次的解热启动")

    model_config = ConfigDict(frozen=True)


class TurboConfig(BaseModel):
    """Turbo 迭代参数"""
    max_turbo_iters: int = Field(default=SimDefaults.TURBO_ITERS, description="最大 Turbo 迭代次数", ge=1)
    radius: int = Field(default=SimDefaults.RADIUS, description="汉明半径 P", ge=1)
    clip: float = Field(default=SimDefaults.CLIP, description="L_E1 限幅值", gt=0)
    scheme: Scheme = Field(default=Scheme.MULTI_SDR, description="接收机方案")
    sdp: SdpSettings = Field(default_factory=SdpSettings, description="SDP 求解参数")
    decoder_iters: int = Field(default=SimDefaults.DECODER_ITERS, description="SPA 内迭代次数", ge=1)
    keep_llrs: bool = Field(default=False, description="轨迹中是否保存 LLR 向量")

    model_config = ConfigDict(frozen=True)


def _check_exit_grid(v: List[float]) -> List[float]:
    if any(not 0.0 <= x < 1.0 for x in v):
        raise ValueError(f"EXIT 网格必须位于 [0,1): {v}")
    return v


class ExitConfig(BaseModel):
    """检测器 EXIT 测量参数"""
    grid: List[float] = Field(default_factory=lambda: list(SimDefaults.EXIT_GRID), description="先验互信息 I_A 网格")
    frames: int = Field(default=SimDefaults.EXIT_FRAMES, description="每个网格点的帧数", ge=1)
    bins: int = Field(default=SimDefaults.EXIT_BINS, description="直方图箱数", ge=2)
    seed: int = Field(default=0, description="先验生成种子", ge=0)

    model_config = ConfigDict(frozen=True)

    @field_validator('grid')
    @classmethod
    def _check_grid(cls, v: List[float]) -> List[float]:
        return _check_exit_grid(v)


class SimConfig(BaseModel):
    """
    仿真配置

    所有默认值对应 4×4 QPSK、(256,128) 列重 3 的规则 LDPC 码、P=2、限幅 8、3 次 Turbo 迭代。
    """
    # 只影响运行方式、不影响结果的字段，不进入哈希与输出头
    RUN_ONLY_FIELDS: ClassVar[FrozenSet[str]] = frozenset({'workers'})

    n_t: int = Field(default=SimDefaults.N_T, description="发射天线数", ge=1, le=12)
    n_r: int = Field(default=SimDefaults.N_R, description="接收天线数", ge=1)
    snr_grid_db: List[float] = Field(default_factory=lambda: [3.0, 5.0, 7.0], description="SNR 网格(dB)",
                                     min_length=1)
    scheme: Scheme = Field(default=Scheme.MULTI_SDR, description="接收机方案")
    radius: int = Field(default=SimDefaults.RADIUS, description="汉明半径 P", ge=1)
    clip: float = Field(default=SimDefaults.CLIP, description="L_E1 限幅值", gt=0)
    turbo_iters: int = Field(default=SimDefaults.TURBO_ITERS, description="Turbo 迭代次数", ge=1)
    decoder_iters: int = Field(default=SimDefaults.DECODER_ITERS, description="SPA 内迭代次数", ge=1)
    max_frames: int = Field(default=SimDefaults.MAX_FRAMES, description="每个 SNR 点最大帧数", ge=1)
    min_errors: int = Field(default=SimDefaults.MIN_ERRORS, description="每个 SNR 点目标比特错误数", ge=1)
    batch_frames: int = Field(default=SimDefaults.BATCH_FRAMES, description="停止判决的批大小", ge=1)
    seed: int = Field(default=0, description="主随机种子", ge=0, lt=2 ** 64)
    sdp_tol: float = Field(default=SimDefaults.SDP_TOL, description="SDP 残差容限", gt=0)
    sdp_max_iters: int = Field(default=SimDefaults.SDP_MAX_ITERS, description="SDP 最大迭代次数", ge=1)

    code_n: int = Field(default=SimDefaults.CODE_N, description="码长", ge=2)
    code_k: int = Field(default=SimDefaults.CODE_K, description="信息位长", ge=1)
    col_weight: int = Field(default=SimDefaults.COL_WEIGHT, description="列重", ge=1)
    code_seed: int = Field(default=1, description="校验矩阵构造种子", ge=0)
    alist_path: Optional[str] = Field(None, description="alist 校验矩阵路径（优先于随机构造）")

    exit_grid: List[float] = Field(default_factory=lambda: list(SimDefaults.EXIT_GRID),
                                   description="EXIT 先验互信息网格")
    exit_frames: int = Field(default=SimDefaults.EXIT_FRAMES, description="每个 EXIT 点的帧数", ge=1)
    exit_bins: int = Field(default=SimDefaults.EXIT_BINS, description="直方图箱数", ge=2)

    workers: int = Field(default=1, description="并行进程数", ge=1)

    model_config = ConfigDict(
        frozen=True,
        extra='forbid',
        json_schema_extra={
            "example": {
                "n_t": 4,
                "n_r": 4,
                "snr_grid_db": [3.0, 5.0, 7.0],
                "scheme": "multi-sdr",
                "radius": 2,
                "clip": 8.0,
                "turbo_iters": 3,
                "code_n": 256,
                "code_k": 128,
                "col_weight": 3,
                "seed": 0
            }
        }
    )

    @field_validator('exit_grid')
    @classmethod
    def _check_exit_grid(cls, v: List[float]) -> List[float]:
        return _check_exit_grid(v)

    @model_validator(mode='after')
    def _check_consistency(self) -> 'SimConfig':
        if self.code_k >= self.code_n:
            raise ValueError(f"code_k={self.code_k} 必须小于 code_n={self.code_n}")
        if self.code_n % (2 * self.n_t):
            raise ValueError(f"码长 {self.code_n} 不能被 2N_t={2 * self.n_t} 整除")
        if self.radius > 2 * self.n_t:
            raise ValueError(f"汉明半径 P={self.radius} 超过 2N_t={2 * self.n_t}")
        return self

    @property
    def n_snapshots(self) -> int:
        return self.code_n // (2 * self.n_t)

    def sdp_settings(self) -> SdpSettings:
        return SdpSettings(tol=self.sdp_tol, max_iters=self.sdp_max_iters)

    def exit_config(self) -> ExitConfig:
        return ExitConfig(grid=self.exit_grid, frames=self.exit_frames, bins=self.exit_bins, seed=self.seed)

    def turbo_config(self, keep_llrs: bool = False) -> TurboConfig:
        return TurboConfig(
            max_turbo_iters=self.turbo_iters,
            radius=self.radius,
            clip=self.clip,
            scheme=self.scheme,
            sdp=self.sdp_settings(),
            decoder_iters=self.decoder_iters,
            keep_llrs=keep_llrs,
        )

    def result_fields(self) -> Dict[str, Any]:
        """决定输出内容的字段（不含 RUN_ONLY_FIELDS）"""
        return self.model_dump(mode='json', exclude=set(self.RUN_ONLY_FIELDS))

    def canonical_json(self) -> bytes:
        return orjson.dumps(self.result_fields(), option=orjson.OPT_SORT_KEYS)

    def config_hash(self) -> str:
        """配置哈希（sha256 前 12 位）"""
        return hashlib.sha256(self.canonical_json()).hexdigest()[:12]

    def header_fields(self) -> Dict[str, Any]:
        """输出文件头回显字段"""
        return {
            'config_hash': self.config_hash(),
            'seed': self.seed,
            'snr_convention': SimDefaults.SNR_CONVENTION,
            'config': self.result_fields(),
        }


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> SimConfig:
    """
    读取 JSON 键值配置文件并应用命令行覆盖项

    Args:
        path: 配置文件路径，None 表示全部使用默认值
        overrides: 覆盖字段（值为 None 的项忽略）
    """
    data: Dict[str, Any] = {}
    if path:
        try:
            data = orjson.loads(Path(path).read_bytes())
        except OSError as e:
            raise ConfigError(f"无法读取配置文件 {path}: {e}") from e
        except orjson.JSONDecodeError as e:
            raise ConfigError(f"配置文件不是合法 JSON {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"配置文件顶层必须为键值对象: {path}")

    data.update({k: v for k, v in (overrides or {}).items() if v is not None})

    try:
        cfg = SimConfig(**data)
    except ValidationError as e:
        raise ConfigError(f"配置校验失败: {e}") from e

    logger.info(f"配置已加载: hash={cfg.config_hash()}, seed={cfg.seed}")
    return cfg
