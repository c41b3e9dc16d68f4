"""
存储模块 - 序列化编解码与结果文件读写
"""
from storage.serializer import pack, unpack, dumps_json, loads_json
from storage.results_store import ResultsStore, results_store

__all__ = ['pack', 'unpack', 'dumps_json', 'loads_json', 'ResultsStore', 'results_store']
