"""
结果文件存储 - 带版本头的 CSV、JSON-lines 轨迹
"""
import logging
from pathlib import Path
from typing import Dict, List, Any, Iterable, Tuple, Union

import pandas as pd

from storage.serializer import dumps_json, loads_json

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class ResultsStore:
    """结果文件读写"""

    HEADER_PREFIX = "# "

    def _header_lines(self, schema: str, header: Dict[str, Any]) -> List[str]:
        fields = {k: v for k, v in header.items() if k != 'config'}
        first = ' '.join([f"schema={schema}"] + [f"{k}={v}" for k, v in fields.items()])
        lines = [self.HEADER_PREFIX + first]
        if 'config' in header:
            lines.append(self.HEADER_PREFIX + "config=" + dumps_json(header['config'], sort_keys=True).decode())
        return lines

    def _prepare(self, path: PathLike) -> Path:
        path = Path(path)
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def write_table(self, rows: List[Dict[str, Any]], path: PathLike, schema: str,
                    header: Dict[str, Any], columns: List[str]) -> Path:
        """写出带注释头的 CSV"""
        path = self._prepare(path)
        df = pd.DataFrame(rows, columns=columns)
        try:
            with open(path, 'w', newline='') as fh:
                for line in self._header_lines(schema, header):
                    fh.write(line + '\n')
                df.to_csv(fh, index=False, lineterminator='\n')
        except OSError as e:
            logger.error(f"写入结果文件失败 {path}: {e}")
            raise
        logger.info(f"已写入 {len(df)} 条记录: {path}")
        return path

    def read_table(self, path: PathLike) -> Tuple[Dict[str, Any], pd.DataFrame]:
        """读取 CSV，返回 (头字段, 数据表)"""
        path = Path(path)
        header: Dict[str, Any] = {}
        skip = 0
        with open(path) as fh:
            for line in fh:
                if not line.startswith(self.HEADER_PREFIX.strip()):
                    break
                skip += 1
                body = line[len(self.HEADER_PREFIX):].strip()
                if body.startswith("config="):
                    header['config'] = loads_json(body[len("config="):])
                    continue
                for token in body.split(' '):
                    key, _, value = token.partition('=')
                    header[key] = value
        df = pd.read_csv(path, skiprows=skip)
        return header, df

    def write_jsonl(self, rows: Iterable[Dict[str, Any]], path: PathLike) -> Path:
        path = self._prepare(path)
        count = 0
        with open(path, 'wb') as fh:
            for row in rows:
                fh.write(dumps_json(row) + b'\n')
                count += 1
        logger.info(f"已写入 {count} 行轨迹: {path}")
        return path

    def read_jsonl(self, path: PathLike) -> List[Dict[str, Any]]:
        with open(path, 'rb') as fh:
            return [loads_json(line) for line in fh if line.strip()]


# 全局实例
results_store = ResultsStore()
