"""
检测方案 - 多 SDR / 单 SDR / 全列表三种接收机的检测策略，统一注册与创建
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Any, Optional, Sequence, Type, Union

import numpy as np

from config_models import TurboConfig
from detector import joint_map_sdr_detect, list_detect, full_list_detect, simplified_anchor
from models import RealSnapshot, FrameLayout, FsConstraint, LlrFrame, DetectorOutput, Scheme

logger = logging.getLogger(__name__)


@dataclass
class DetectionContext:
    """单帧检测上下文"""
    frame: Sequence[RealSnapshot]
    sigma_n2: float
    layout: FrameLayout
    fs: List[FsConstraint] = field(default_factory=list)  # 信道顺序
    _cache: Dict[str, Any] = field(default_factory=dict)

    def get_cache(self, key: str) -> Any:
        return self._cache.get(key)

    def set_cache(self, key: str, value: Any):
        self._cache[key] = value


class BaseScheme(ABC):
    """检测方案基类"""

    scheme: Scheme

    def __init__(self, cfg: TurboConfig):
        self.cfg = cfg
        self.stats = {'detections': 0, 'sdp_solves': 0}

    @property
    def name(self) -> str:
        return self.scheme.value

    @abstractmethod
    def _detect(self, ctx: DetectionContext, l_a1: LlrFrame, iteration: int) -> DetectorOutput:
        pass

    def detect(self, ctx: DetectionContext, l_a1: LlrFrame, iteration: int) -> DetectorOutput:
        """第 iteration 次 Turbo 迭代（从 1 计数）的检测"""
        if iteration < 1:
            raise ValueError(f"迭代序号从 1 开始: {iteration}")
        out = self._detect(ctx, l_a1, iteration)
        self.stats['detections'] += 1
        if out.solution is not None:
            self.stats['sdp_solves'] += 1
        return out

    def detect_with_prior(self, ctx: DetectionContext, l_a1: LlrFrame) -> DetectorOutput:
        """在给定先验下做一次检测（EXIT 测量用）"""
        return self.detect(ctx, l_a1, 1)

    def __repr__(self):
        return f"{self.__class__.__name__}(P={self.cfg.radius}, clip={self.cfg.clip})"


class MultiSdrScheme(BaseScheme):
    """每次迭代都带先验重新求解联合 MAP-SDR"""

    scheme = Scheme.MULTI_SDR
    SOLUTION_KEY = 'sdp_solution'

    def _detect(self, ctx, l_a1, iteration):
        # 各次迭代的问题只有先验线性项不同
        warm = ctx.get_cache(self.SOLUTION_KEY) if self.cfg.sdp.warm_start else None
        out = joint_map_sdr_detect(ctx.frame, l_a1, ctx.sigma_n2, ctx.fs, self.cfg.radius,
                                   self.cfg.clip, self.cfg.sdp, warm_start=warm)
        ctx.set_cache(self.SOLUTION_KEY, out.solution)
        return out


class SingleSdrScheme(BaseScheme):
    """
    只在第一次迭代求解联合 MAP-SDR

    之后的锚点由首轮外信息与当前先验直接相加后硬判决得到。
    """

    scheme = Scheme.SINGLE_SDR
    INIT_KEY = 'l_e1_init'

    def _detect(self, ctx, l_a1, iteration):
        init = ctx.get_cache(self.INIT_KEY)
        if iteration == 1 or init is None:
            out = joint_map_sdr_detect(ctx.frame, l_a1, ctx.sigma_n2, ctx.fs, self.cfg.radius,
                                       self.cfg.clip, self.cfg.sdp)
            ctx.set_cache(self.INIT_KEY, out.l_e1.values.copy())
            return out
        anchors = simplified_anchor(init, l_a1, ctx.layout)
        return list_detect(ctx.frame, anchors, ctx.sigma_n2, l_a1, self.cfg.radius, self.cfg.clip)

    def detect_with_prior(self, ctx, l_a1):
        # 首轮无先验，第二轮才用上先验
        if not np.any(l_a1.values):
            return self.detect(ctx, l_a1, 1)
        self.detect(ctx, LlrFrame.zeros(len(l_a1), l_a1.order), 1)
        return self.detect(ctx, l_a1, 2)


class FullListScheme(BaseScheme):
    """全列表 Turbo 接收机，不求解 SDP"""

    scheme = Scheme.FULL_LIST

    def _detect(self, ctx, l_a1, iteration):
        return full_list_detect(ctx.frame, ctx.sigma_n2, l_a1, self.cfg.clip)


SCHEME_TYPES: Dict[Scheme, Type[BaseScheme]] = {
    Scheme.MULTI_SDR: MultiSdrScheme,
    Scheme.SINGLE_SDR: SingleSdrScheme,
    Scheme.FULL_LIST: FullListScheme,
}


def register_scheme(scheme: Scheme, scheme_class: type):
    """注册新的检测方案"""
    if not (isinstance(scheme_class, type) and issubclass(scheme_class, BaseScheme)):
        raise ValueError(f"方案类必须继承BaseScheme: {scheme_class}")
    SCHEME_TYPES[scheme] = scheme_class


def create_scheme(cfg: TurboConfig, scheme: Optional[Union[Scheme, str]] = None) -> BaseScheme:
    """按配置创建方案实例，scheme 可覆盖 cfg.scheme"""
    key = Scheme(scheme) if scheme is not None else cfg.scheme
    if key not in SCHEME_TYPES:
        raise ValueError(f"未知检测方案: {key}")
    return SCHEME_TYPES[key](cfg)
