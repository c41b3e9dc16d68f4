"""
LDPC 码模块 - 校验矩阵构造、GF(2) 编码、对数域和积译码、禁止集约束枚举、alist 读写
"""
import logging
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import List, Dict, Optional, Union

import numpy as np
from scipy import sparse

from config_models import SimDefaults
from models import FsConstraint, LlrFrame, LlrOrder

logger = logging.getLogger(__name__)


class LdpcConstructionError(ValueError):
    """度分布不可行或构造失败"""


class EnumerationGuardError(ValueError):
    """枚举规模超过保护上限"""


@dataclass
class ParityCheckMatrix:
    """
    稀疏二元校验矩阵 H (m × n)

    邻接表在构造时一次性生成，之后视为不可变。
    """
    matrix: sparse.csr_matrix
    check_neighbors: List[np.ndarray] = field(init=False, repr=False)
    var_neighbors: List[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        mat = sparse.csr_matrix(self.matrix)
        mat.sum_duplicates()
        if mat.nnz and mat.data.max() > 1:
            raise LdpcConstructionError("校验矩阵存在重复边")
        mat.eliminate_zeros()
        mat.data = np.ones_like(mat.data, dtype=np.uint8)
        mat.sort_indices()
        self.matrix = mat.astype(np.uint8)

        self.check_neighbors = [self.matrix.indices[self.matrix.indptr[i]:self.matrix.indptr[i + 1]].copy()
                                for i in range(self.m)]
        csc = self.matrix.tocsc()
        csc.sort_indices()
        self.var_neighbors = [csc.indices[csc.indptr[j]:csc.indptr[j + 1]].copy() for j in range(self.n)]

    @classmethod
    def from_dense(cls, array) -> 'ParityCheckMatrix':
        array = np.asarray(array)
        if array.ndim != 2:
            raise ValueError(f"校验矩阵必须为二维: shape={array.shape}")
        if not np.all((array == 0) | (array == 1)):
            raise ValueError("校验矩阵必须为 0/1 矩阵")
        return cls(sparse.csr_matrix(array.astype(np.uint8)))

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    @property
    def row_weights(self) -> np.ndarray:
        return np.diff(self.matrix.indptr)

    @property
    def col_weights(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=0)).ravel().astype(int)

    @property
    def edges(self):
        """(check, var) 边表，按校验节点排序"""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order].astype(np.int64), coo.col[order].astype(np.int64)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray().astype(np.uint8)

    def syndrome(self, bits) -> np.ndarray:
        c = np.asarray(bits).astype(np.int64)
        if c.shape != (self.n,):
            raise ValueError(f"比特长度必须为 {self.n}: {c.shape}")
        return (self.matrix.astype(np.int64) @ c) % 2

    def syndrome_check(self, bits) -> bool:
        return not self.syndrome(bits).any()

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParityCheckMatrix):
            return NotImplemented
        return self.matrix.shape == other.matrix.shape and (self.matrix != other.matrix).nnz == 0


def syndrome_check(pcm: ParityCheckMatrix, bits) -> bool:
    """H·cᵀ = 0 (GF(2))"""
    return pcm.syndrome_check(bits)


def _greedy_columns(n: int, m: int, col_weight: int, row_weight: int,
                    rng: np.random.Generator, avoid_cycles: bool) -> Optional[np.ndarray]:
    """
    按随机列序逐列放置边；每列选取当前度最小且（可选）两两不相邻的校验节点

    两个校验节点相邻指它们已共享某个变量节点，选相邻的两个会形成长度 4 的环。
    失败返回 None。
    """
    degree = np.zeros(m, dtype=int)
    adjacent = np.zeros((m, m), dtype=bool)
    rows, cols = [], []

    for v in rng.permutation(n):
        chosen: List[int] = []
        blocked = np.zeros(m, dtype=bool)
        for _ in range(col_weight):
            allowed = degree < row_weight
            allowed[chosen] = False
            if avoid_cycles:
                allowed &= ~blocked
            candidates = np.flatnonzero(allowed)
            if candidates.size == 0:
                return None
            lowest = candidates[degree[candidates] == degree[candidates].min()]
            pick = int(rng.choice(lowest))
            chosen.append(pick)
            blocked |= adjacent[pick]

        for a, b in combinations(chosen, 2):
            adjacent[a, b] = adjacent[b, a] = True
        degree[chosen] += 1
        rows.extend(chosen)
        cols.extend([int(v)] * col_weight)

    return sparse.csr_matrix((np.ones(len(rows), dtype=np.uint8), (rows, cols)), shape=(m, n))


def build_pcm(n: int, k: int, col_weight: int, seed: int, max_attempts: int = 500,
              strict_girth: bool = False) -> ParityCheckMatrix:
    """
    随机规则 LDPC 校验矩阵（列重固定，行重近似规则），尝试避免 4 环

    Args:
        n: 码长
        k: 设计信息位长，校验数 m = n - k
        col_weight: 列重
        seed: 构造种子
        max_attempts: 4 环避免的最大重试次数
        strict_girth: 为 True 时 4 环避免失败直接报错
    """
    m = n - k
    if n <= 0 or m <= 0:
        raise LdpcConstructionError(f"码参数无效: n={n}, k={k}")
    if col_weight < 1 or col_weight > m:
        raise LdpcConstructionError(f"列重 {col_weight} 不在 [1, {m}] 内")
    if (n * col_weight) % m:
        raise LdpcConstructionError(f"度分布不可行: n·w={n * col_weight} 不能被 m={m} 整除")
    row_weight = n * col_weight // m

    rng = np.random.default_rng(seed)
    for attempt in range(max_attempts):
        mat = _greedy_columns(n, m, col_weight, row_weight, rng, avoid_cycles=True)
        if mat is not None:
            logger.info(f"LDPC 校验矩阵构造完成: ({n},{k}) w={col_weight}, 尝试次数={attempt + 1}, 无 4 环")
            return ParityCheckMatrix(mat)

    if strict_girth:
        raise LdpcConstructionError(f"{max_attempts} 次尝试后仍无法避免 4 环: ({n},{k}) w={col_weight}")

    logger.warning(f"({n},{k}) w={col_weight} 无法避免 4 环，改用允许环的构造")
    for _ in range(max_attempts):
        mat = _greedy_columns(n, m, col_weight, row_weight, rng, avoid_cycles=False)
        if mat is not None:
            return ParityCheckMatrix(mat)
    raise LdpcConstructionError(f"无法构造 ({n},{k}) w={col_weight} 的规则校验矩阵")


def has_4_cycles(pcm: ParityCheckMatrix) -> bool:
    """任意两个校验共享超过一个变量即存在 4 环"""
    h = pcm.matrix.astype(np.int32)
    overlap = (h @ h.T).tolil()
    overlap.setdiag(0)
    overlap = overlap.tocsr()
    return bool(overlap.nnz and overlap.data.max() > 1)


def degree_profile(pcm: ParityCheckMatrix) -> Dict[str, Dict[int, int]]:
    """列/行度直方图 {度: 个数}"""
    return {
        'column': dict(sorted(Counter(pcm.col_weights.tolist()).items())),
        'row': dict(sorted(Counter(pcm.row_weights.tolist()).items())),
    }


def _gf2_rref(a: np.ndarray):
    """GF(2) 上的行最简形，返回 (非零行, 主元列)"""
    a = a.copy().astype(np.uint8)
    n_rows, n_cols = a.shape
    pivots: List[int] = []
    row = 0
    for col in range(n_cols):
        if row == n_rows:
            break
        hits = np.flatnonzero(a[row:, col]) + row
        if hits.size == 0:
            continue
        if hits[0] != row:
            a[[row, hits[0]]] = a[[hits[0], row]]
        others = np.flatnonzero(a[:, col])
        others = others[others != row]
        a[others] ^= a[row]
        pivots.append(col)
        row += 1
    return a[:row], pivots


@dataclass
class GeneratorMatrix:
    """系统形式生成矩阵 G (k × n)，G[:, info_positions] 为单位阵"""
    matrix: np.ndarray
    info_positions: np.ndarray

    @property
    def k(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    def encode(self, msg) -> np.ndarray:
        msg = np.asarray(msg)
        if msg.shape != (self.k,):
            raise ValueError(f"信息位长度必须为 {self.k}: {msg.shape}")
        if not np.all((msg == 0) | (msg == 1)):
            raise ValueError("信息位必须取 0 或 1")
        return ((msg.astype(np.int64) @ self.matrix) % 2).astype(np.uint8)

    def extract_message(self, codeword) -> np.ndarray:
        return np.asarray(codeword)[self.info_positions].astype(np.uint8)


def derive_generator(pcm: ParityCheckMatrix) -> GeneratorMatrix:
    """
    由 H 推导系统生成矩阵

    H 秩亏时 k = n - rank(H) 大于设计值，记录警告后继续。
    """
    reduced, pivots = _gf2_rref(pcm.dense())
    rank = len(pivots)
    free = np.setdiff1d(np.arange(pcm.n), pivots)
    k = pcm.n - rank
    if rank < pcm.m:
        logger.warning(f"校验矩阵秩亏: rank={rank} < m={pcm.m}，信息位长调整为 k={k}")

    G = np.zeros((k, pcm.n), dtype=np.uint8)
    G[:, free] = np.eye(k, dtype=np.uint8)
    if rank:
        G[:, pivots] = reduced[:, free].T
    return GeneratorMatrix(matrix=G, info_positions=free)


def encode(generator: GeneratorMatrix, msg) -> np.ndarray:
    return generator.encode(msg)


@dataclass
class SpaResult:
    """SPA 译码结果"""
    l_e2: LlrFrame  # 外信息 = 后验 - 输入
    hard_bits: np.ndarray
    parity_ok: bool
    iterations: int


class SpaDecoder:
    """
    对数域和积译码器（tanh 规则）

    校验节点按行填充成 (m, d_max) 视图，空位填 1 不影响乘积。
    """

    def __init__(self, pcm: ParityCheckMatrix, max_iters: int = SimDefaults.DECODER_ITERS,
                 clip: float = 30.0):
        if max_iters < 1:
            raise ValueError(f"译码迭代次数必须 ≥ 1: {max_iters}")
        self.pcm = pcm
        self.max_iters = max_iters
        self.clip = clip
        self._arg_limit = np.tanh(clip / 2.0)

        self.edge_check, self.edge_var = pcm.edges
        degrees = pcm.row_weights
        self.d_max = int(degrees.max()) if degrees.size else 0
        starts = np.concatenate([[0], np.cumsum(degrees)[:-1]])
        self.edge_port = np.arange(self.edge_var.size) - np.repeat(starts, degrees)

    def decode(self, l_a2: Union[LlrFrame, np.ndarray], max_iters: Optional[int] = None) -> SpaResult:
        prior = l_a2.values if isinstance(l_a2, LlrFrame) else np.asarray(l_a2, dtype=float)
        if prior.shape != (self.pcm.n,):
            raise ValueError(f"LLR 长度必须为 {self.pcm.n}: {prior.shape}")
        iters = self.max_iters if max_iters is None else max_iters
        if iters < 0:
            raise ValueError(f"译码迭代次数不能为负: {iters}")

        v2c = np.clip(prior[self.edge_var], -self.clip, self.clip)
        extrinsic = np.zeros(self.pcm.n)
        total = prior.copy()
        hard = (total < 0).astype(np.uint8)
        parity_ok = self.pcm.syndrome_check(hard)
        it = 0
        for it in range(1, iters + 1):
            view = np.ones((self.pcm.m, self.d_max))
            view[self.edge_check, self.edge_port] = np.tanh(v2c / 2.0)
            others = np.empty_like(view)
            for port in range(self.d_max):
                others[:, port] = np.prod(np.delete(view, port, axis=1), axis=1)
            arg = np.clip(others[self.edge_check, self.edge_port], -self._arg_limit, self._arg_limit)
            c2v = 2.0 * np.arctanh(arg)

            extrinsic = np.bincount(self.edge_var, weights=c2v, minlength=self.pcm.n)
            total = prior + extrinsic
            hard = (total < 0).astype(np.uint8)
            parity_ok = self.pcm.syndrome_check(hard)
            if parity_ok:
                break
            v2c = np.clip(total[self.edge_var] - c2v, -self.clip, self.clip)

        logger.debug(f"SPA 译码: 迭代 {it} 次, parity_ok={parity_ok}")
        return SpaResult(
            l_e2=LlrFrame(extrinsic, LlrOrder.DECODER),
            hard_bits=hard,
            parity_ok=parity_ok,
            iterations=it,
        )


def spa_decode(pcm: ParityCheckMatrix, l_a2: Union[LlrFrame, np.ndarray],
               max_inner_iters: int = SimDefaults.DECODER_ITERS) -> SpaResult:
    return SpaDecoder(pcm, max_inner_iters).decode(l_a2)


def enumerate_fs_constraints(pcm: ParityCheckMatrix,
                             limit: int = SimDefaults.FS_ENUMERATION_LIMIT) -> List[FsConstraint]:
    """每个校验枚举全部奇数子集，共 2^{deg-1} 条"""
    worst = int(pcm.row_weights.max()) if pcm.m else 0
    if worst and 2 ** (worst - 1) > limit:
        raise EnumerationGuardError(
            f"校验度 {worst} 需要 2^{worst - 1} 条禁止集约束，超过上限 {limit}，请降低行重")

    constraints: List[FsConstraint] = []
    for check, support in enumerate(pcm.check_neighbors):
        support = tuple(int(v) for v in support)
        for size in range(1, len(support) + 1, 2):
            for subset in combinations(support, size):
                constraints.append(FsConstraint(check=check, subset=subset, support=support))
    logger.debug(f"禁止集约束枚举完成: {len(constraints)} 条")
    return constraints


def read_alist(path: Union[str, Path]) -> ParityCheckMatrix:
    """
    读取 alist 文件

    格式：n m / 最大列重 最大行重 / n 个列重 / m 个行重 / n 行列邻接 / m 行行邻接，下标从 1 开始，0 为填充。
    """
    path = Path(path)
    try:
        lines = [[int(w) for w in line.split()] for line in path.read_text().splitlines()]
    except OSError as e:
        raise ValueError(f"无法读取 alist 文件 {path}: {e}") from e
    except ValueError as e:
        raise ValueError(f"alist 文件含非整数项 {path}: {e}") from e
    lines = [line for line in lines if line]
    if len(lines) < 4:
        raise ValueError(f"alist 文件不完整: {path}")

    n, m = lines[0][:2]
    col_deg = lines[2]
    row_deg = lines[3]
    if len(col_deg) != n or len(row_deg) != m or len(lines) < 4 + n + m:
        raise ValueError(f"alist 文件与声明的维度不一致: n={n}, m={m}")

    rows, cols = [], []
    for j in range(n):
        entries = [x for x in lines[4 + j] if x > 0]
        if len(entries) != col_deg[j]:
            raise ValueError(f"alist 第 {j + 1} 列度数不一致")
        rows.extend(x - 1 for x in entries)
        cols.extend([j] * len(entries))

    mat = sparse.csr_matrix((np.ones(len(rows), dtype=np.uint8), (rows, cols)), shape=(m, n))
    pcm = ParityCheckMatrix(mat)
    for i in range(m):
        listed = sorted(x - 1 for x in lines[4 + n + i] if x > 0)
        if listed != pcm.check_neighbors[i].tolist():
            raise ValueError(f"alist 第 {i + 1} 行邻接与列邻接不一致")
    logger.info(f"已读取 alist: {path} (n={n}, m={m})")
    return pcm


def write_alist(pcm: ParityCheckMatrix, path: Union[str, Path]) -> None:
    col_w = pcm.col_weights
    row_w = pcm.row_weights
    max_col = int(col_w.max()) if col_w.size else 0
    max_row = int(row_w.max()) if row_w.size else 0

    def padded(indices, width):
        values = [int(x) + 1 for x in indices] + [0] * (width - len(indices))
        return ' '.join(str(v) for v in values)

    out = [
        f"{pcm.n} {pcm.m}",
        f"{max_col} {max_row}",
        ' '.join(str(int(d)) for d in col_w),
        ' '.join(str(int(d)) for d in row_w),
    ]
    out.extend(padded(pcm.var_neighbors[j], max_col) for j in range(pcm.n))
    out.extend(padded(pcm.check_neighbors[i], max_row) for i in range(pcm.m))

    path = Path(path)
    path.write_text('\n'.join(out) + '\n')
    logger.info(f"已写入 alist: {path}")
