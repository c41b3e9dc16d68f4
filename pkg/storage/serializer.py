"""
序列化工具 - msgpack 二进制与 orjson 文本编解码，支持 numpy 数组
"""
import logging
from enum import Enum
from pathlib import Path
from typing import Any

import msgpack
import numpy as np
import orjson

logger = logging.getLogger(__name__)

JSON_OPTIONS = orjson.OPT_SERIALIZE_NUMPY


def _default_encoder(obj):
    """处理特殊类型编码"""
    if isinstance(obj, np.ndarray):
        arr = np.ascontiguousarray(obj)
        return {"__ndarray__": True, "dtype": arr.dtype.str, "shape": list(arr.shape), "data": arr.tobytes()}
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"无法序列化类型: {type(obj)}")


def _object_hook(obj):
    if obj.get("__ndarray__"):
        return np.frombuffer(obj["data"], dtype=np.dtype(obj["dtype"])).reshape(obj["shape"]).copy()
    return obj


def pack(data: Any) -> bytes:
    """序列化为 msgpack"""
    try:
        return msgpack.packb(data, default=_default_encoder, use_bin_type=True)
    except Exception as e:
        logger.error(f"序列化失败: {e}")
        raise


def unpack(data: bytes) -> Any:
    """反序列化 msgpack，数组还原为 numpy"""
    try:
        return msgpack.unpackb(data, raw=False, object_hook=_object_hook, strict_map_key=False)
    except Exception as e:
        logger.error(f"反序列化失败: {e}")
        raise


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, Enum):
        return obj.value
    raise TypeError(f"无法序列化类型: {type(obj)}")


def dumps_json(data: Any, sort_keys: bool = False) -> bytes:
    option = JSON_OPTIONS | (orjson.OPT_SORT_KEYS if sort_keys else 0)
    return orjson.dumps(data, default=_json_default, option=option)


def loads_json(data) -> Any:
    return orjson.loads(data)
