"""
序列化与结果文件测试
"""
import numpy as np
import pytest
from numpy.testing import assert_array_equal

from models import Scheme
from storage import pack, unpack, dumps_json, loads_json, ResultsStore


class TestSerializer:
    """msgpack / orjson 编解码"""

    def test_msgpack_ndarray(self):
        data = {'costs': np.arange(12, dtype=float).reshape(3, 4), 'rows': np.array([1, 2], dtype=np.int64),
                'name': 'x'}
        out = unpack(pack(data))
        assert_array_equal(out['costs'], data['costs'])
        assert out['costs'].dtype == np.float64
        assert out['rows'].dtype == np.int64
        assert out['name'] == 'x'

    def test_msgpack_scalars_and_enums(self):
        out = unpack(pack({'n': np.int64(3), 'v': np.float32(0.5), 'scheme': Scheme.MULTI_SDR}))
        assert out == {'n': 3, 'v': 0.5, 'scheme': 'multi-sdr'}

    def test_msgpack_unknown_type(self):
        with pytest.raises(TypeError):
            pack({'x': object()})

    def test_json_numpy(self):
        raw = dumps_json({'b': np.array([1, 0], dtype=np.uint8), 'a': Scheme.FULL_LIST}, sort_keys=True)
        assert raw == b'{"a":"full-list","b":[1,0]}'
        assert loads_json(raw) == {'a': 'full-list', 'b': [1, 0]}


class TestResultsStore:
    """带版本头的结果文件"""

    def test_table_round_trip(self, tmp_path):
        store = ResultsStore()
        rows = [{'snr_db': 3.0, 'ber': 0.1}, {'snr_db': 5.0, 'ber': 0.01}]
        path = store.write_table(rows, tmp_path / "sub" / "out.csv", "ber-v1",
                                 {'seed': 4, 'config': {'n_t': 2}}, ['snr_db', 'ber'])
        text = path.read_text()
        assert text.startswith("# schema=ber-v1 seed=4\n# config={\"n_t\":2}\n")
        header, df = store.read_table(path)
        assert header['schema'] == 'ber-v1'
        assert header['seed'] == '4'
        assert header['config'] == {'n_t': 2}
        assert df['ber'].tolist() == [0.1, 0.01]

    def test_jsonl(self, tmp_path):
        store = ResultsStore()
        path = store.write_jsonl([{'i': 1}, {'i': 2, 'v': np.ones(2)}], tmp_path / "t.jsonl")
        assert store.read_jsonl(path) == [{'i': 1}, {'i': 2, 'v': [1.0, 1.0]}]
