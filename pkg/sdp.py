"""
块结构 SDP 求解模块 - K 个小 PSD 块经线性等式耦合到共享标量 f，带盒约束与禁止集约束

求解采用过松弛 ADMM：
  x 步：在对角等式与耦合等式构成的仿射集上闭式求解
  z 步：逐块 PSD 投影、f 的盒投影、逐校验的奇偶多面体投影
"""
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Dict, Optional, Tuple, Union

import numpy as np
from scipy import sparse

from config_models import SimDefaults
from models import FsConstraint, SolverStatus
from storage.serializer import pack, unpack

logger = logging.getLogger(__name__)

DUMP_FORMAT = "block-sdp"
DUMP_VERSION = 1


class SdpStructureError(ValueError):
    """耦合或禁止集结构无效"""


@dataclass
class BlockSdpProblem:
    """
    min  Σ_k tr(C_k X_k) + cᵀf
    s.t. X_k ⪰ 0, diag(X_k) = 1
         X_k[j, d] = 1 - 2 f_n   （d 为块的最后一维，每个 f_n 恰好耦合一个 (k, j)）
         0 ≤ f ≤ 1, 禁止集约束
    """
    costs: np.ndarray  # (K, D, D)
    linear_cost: np.ndarray  # (N,)
    coupling_block: np.ndarray  # (N,) f_n 所在块
    coupling_row: np.ndarray  # (N,) f_n 在块内的行
    fs: List[FsConstraint] = field(default_factory=list)
    _fs_rows: Optional[Tuple[sparse.csr_matrix, np.ndarray]] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        costs = np.asarray(self.costs, dtype=float)
        if costs.ndim != 3 or costs.shape[1] != costs.shape[2]:
            raise SdpStructureError(f"代价矩阵必须为 (K, D, D): {costs.shape}")
        self.costs = 0.5 * (costs + costs.transpose(0, 2, 1))
        self.linear_cost = np.asarray(self.linear_cost, dtype=float).ravel()
        self.coupling_block = np.asarray(self.coupling_block, dtype=np.int64).ravel()
        self.coupling_row = np.asarray(self.coupling_row, dtype=np.int64).ravel()
        self.fs = list(self.fs)

        K, D = self.n_blocks, self.block_size
        N = self.linear_cost.size
        if self.coupling_block.size != N or self.coupling_row.size != N:
            raise SdpStructureError(f"耦合表长度必须等于 f 的维数 {N}")
        if N and (self.coupling_block.min() < 0 or self.coupling_block.max() >= K):
            raise SdpStructureError("耦合块下标越界")
        if N and (self.coupling_row.min() < 0 or self.coupling_row.max() >= D - 1):
            raise SdpStructureError("耦合行下标越界（不能耦合到对角元）")
        flat = self.coupling_block * D + self.coupling_row
        if np.unique(flat).size != N:
            raise SdpStructureError("多个 f 变量耦合到同一矩阵元")
        for c in self.fs:
            if max(c.support) >= N:
                raise SdpStructureError(f"校验 {c.check} 的禁止集下标越界")

    @property
    def n_blocks(self) -> int:
        return self.costs.shape[0]

    @property
    def block_size(self) -> int:
        return self.costs.shape[1]

    @property
    def n_vars(self) -> int:
        return self.linear_cost.size

    @property
    def n_fs_rows(self) -> int:
        return len(self.fs)

    @property
    def n_box_rows(self) -> int:
        return 2 * self.n_vars

    @property
    def n_coupling_rows(self) -> int:
        return self.n_vars

    @property
    def n_diag_rows(self) -> int:
        return self.n_blocks * self.block_size

    def scaled(self, alpha: float) -> 'BlockSdpProblem':
        return BlockSdpProblem(alpha * self.costs, alpha * self.linear_cost,
                               self.coupling_block, self.coupling_row, self.fs)

    def fs_matrix(self) -> Tuple[sparse.csr_matrix, np.ndarray]:
        """禁止集行 A f ≤ b（缓存）"""
        if self._fs_rows is not None:
            return self._fs_rows
        rows, cols, vals = [], [], []
        for r, c in enumerate(self.fs):
            for n, coef in c.coefficients().items():
                rows.append(r)
                cols.append(n)
                vals.append(coef)
        A = sparse.csr_matrix((vals, (rows, cols)), shape=(len(self.fs), self.n_vars))
        b = np.array([c.rhs for c in self.fs], dtype=float)
        self._fs_rows = (A, b)
        return A, b

    def check_groups(self) -> Dict[int, Tuple[int, ...]]:
        """
        校验 → 支撑集

        每个校验的禁止集必须完整（全部 2^{d-1} 个奇数子集），
        这样它与盒约束一起恰好刻画该校验的奇偶多面体。
        """
        supports: Dict[int, Tuple[int, ...]] = {}
        subsets: Dict[int, set] = defaultdict(set)
        for c in self.fs:
            if supports.setdefault(c.check, c.support) != c.support:
                raise SdpStructureError(f"校验 {c.check} 的禁止集支撑集不一致")
            subsets[c.check].add(frozenset(c.subset))
        for check, support in supports.items():
            expected = 2 ** (len(support) - 1)
            if len(subsets[check]) != expected:
                raise SdpStructureError(
                    f"校验 {check} 的禁止集不完整: {len(subsets[check])}/{expected}")
        return supports


@dataclass
class AdmmState:
    """
    ADMM 末次迭代的内部量

    x_blocks/x_f 为投影前的仿射步结果，prev_* 为上一次迭代的投影结果，
    u_* 为缩放对偶变量，penalty 为按代价尺度归一化后的罚参数。
    """
    x_blocks: np.ndarray
    x_f: np.ndarray
    prev_blocks: np.ndarray
    prev_f: np.ndarray
    checks: np.ndarray
    u_blocks: np.ndarray
    u_f: np.ndarray
    u_checks: np.ndarray
    penalty: float


@dataclass
class SdpSolution:
    """SDP 解"""
    blocks: np.ndarray  # (K, D, D)
    f: np.ndarray
    objective: float
    status: SolverStatus
    iterations: int
    primal_residual: float = float('nan')
    dual_residual: float = float('nan')
    gap: float = float('nan')
    rho: float = float('nan')
    state: Optional[AdmmState] = None

    @property
    def converged(self) -> bool:
        return self.status == SolverStatus.CONVERGED


@dataclass
class ResidualReport:
    """独立重算的残差"""
    diag: float
    coupling: float
    symmetry: float
    inequality: float
    psd: float
    objective: float
    objective_mismatch: float
    splitting: float
    dual: float
    gap: float

    @property
    def primal(self) -> float:
        return max(self.diag, self.coupling, self.symmetry, self.inequality, self.psd)

    def within(self, tol: float) -> bool:
        values = [self.primal, self.splitting, self.dual, self.gap]
        return all(not np.isnan(v) and v <= tol for v in values)

    def to_dict(self) -> Dict[str, float]:
        return {
            'diag': self.diag,
            'coupling': self.coupling,
            'symmetry': self.symmetry,
            'inequality': self.inequality,
            'psd': self.psd,
            'primal': self.primal,
            'objective': self.objective,
            'objective_mismatch': self.objective_mismatch,
            'splitting': self.splitting,
            'dual': self.dual,
            'gap': self.gap,
        }


def lift(x: np.ndarray, t: float = 1.0) -> np.ndarray:
    """秩一提升 [x; t][x; t]ᵀ"""
    v = np.append(np.asarray(x, dtype=float), t)
    return np.outer(v, v)


def objective(problem: BlockSdpProblem, blocks: np.ndarray, f: np.ndarray) -> float:
    return float(np.einsum('kij,kji->', problem.costs, blocks) + problem.linear_cost @ np.asarray(f, dtype=float))


def _max_abs(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(np.asarray(a, dtype=float) - b).max(initial=0.0))


def residuals(problem: BlockSdpProblem, solution: SdpSolution) -> ResidualReport:
    """
    由 (X, f) 直接重算各项残差，不读取求解器报告的数值

    splitting/dual/gap 依据解中保存的投影前迭代量与上一次迭代量计算；
    不带迭代状态的解（参考解、手工构造的点）只有一个点，三者记为 0。
    """
    X = np.asarray(solution.blocks, dtype=float)
    f = np.asarray(solution.f, dtype=float)
    K, D = problem.n_blocks, problem.block_size
    if X.shape != (K, D, D) or f.shape != (problem.n_vars,):
        raise ValueError(f"解的维度与问题不一致: X={X.shape}, f={f.shape}")

    diag = float(np.abs(np.diagonal(X, axis1=1, axis2=2) - 1.0).max()) if K else 0.0
    symmetry = float(np.abs(X - X.transpose(0, 2, 1)).max()) if K else 0.0

    coupling = 0.0
    if problem.n_vars:
        upper = X[problem.coupling_block, problem.coupling_row, D - 1]
        lower = X[problem.coupling_block, D - 1, problem.coupling_row]
        target = 1.0 - 2.0 * f
        coupling = float(max(np.abs(upper - target).max(), np.abs(lower - target).max()))

    box = float(np.maximum(np.maximum(-f, f - 1.0), 0.0).max()) if f.size else 0.0
    inequality = box
    if problem.fs:
        A, b = problem.fs_matrix()
        inequality = max(inequality, float(np.maximum(A @ f - b, 0.0).max()))

    sym = 0.5 * (X + X.transpose(0, 2, 1))
    psd = float(max(0.0, -np.linalg.eigvalsh(sym).min())) if K else 0.0

    obj = objective(problem, X, f)
    splitting = dual = gap = 0.0
    state = solution.state
    if state is not None:
        if state.x_blocks.shape != X.shape or state.x_f.shape != f.shape:
            raise ValueError("迭代状态与解的维度不一致")
        splitting = max(_max_abs(state.x_blocks, X), _max_abs(state.x_f, f))
        dual = state.penalty * max(_max_abs(X, state.prev_blocks), _max_abs(f, state.prev_f))
        gap = abs(objective(problem, state.x_blocks, state.x_f) - obj) / (1.0 + abs(obj))

    return ResidualReport(
        diag=diag,
        coupling=coupling,
        symmetry=symmetry,
        inequality=inequality,
        psd=psd,
        objective=obj,
        objective_mismatch=abs(obj - solution.objective),
        splitting=splitting,
        dual=dual,
        gap=gap,
    )


def project_psd(M: np.ndarray) -> np.ndarray:
    """逐块投影到 PSD 锥"""
    sym = 0.5 * (M + np.swapaxes(M, -1, -2))
    w, V = np.linalg.eigh(sym)
    out = (V * np.maximum(w, 0.0)[..., None, :]) @ np.swapaxes(V, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def project_simplex(v: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """逐行投影到 {w ≥ 0, Σw = radius}"""
    v = np.atleast_2d(np.asarray(v, dtype=float))
    d = v.shape[1]
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - radius
    ind = np.arange(1, d + 1)
    cond = u - css / ind > 0
    last = d - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(v.shape[0]), last] / (last + 1)
    return np.maximum(v - theta[:, None], 0.0)


def project_parity_polytope(v: np.ndarray) -> np.ndarray:
    """
    逐行投影到偶校验多面体 conv{x ∈ {0,1}^d : Σx 为偶数}

    先截断到单位超立方体；若最可能被违反的禁止集面确实被违反，
    则解位于该面上，换元后化为单纯形投影。
    """
    v = np.atleast_2d(np.asarray(v, dtype=float))
    rows = np.arange(v.shape[0])
    z = np.clip(v, 0.0, 1.0)

    theta = z > 0.5
    even = theta.sum(axis=1) % 2 == 0
    closest = np.argmin(np.abs(z - 0.5), axis=1)
    theta[rows[even], closest[even]] ^= True
    p = theta.sum(axis=1)

    violated = np.where(theta, z, -z).sum(axis=1) > p - 1 + 1e-12
    out = z
    if violated.any():
        th = theta[violated]
        flipped = np.where(th, v[violated], 1.0 - v[violated])
        w = project_simplex(1.0 - flipped)
        on_facet = 1.0 - w
        out = z.copy()
        out[violated] = np.where(th, on_facet, 1.0 - on_facet)
    return out


class AdmmSolver:
    """
    块结构 SDP 的过松弛 ADMM 求解器

    每 CHECK_EVERY 次迭代检查一次停止条件，并按原始残差与对偶残差之比调整罚参数，
    调整次数以 MAX_RESCALES 为上限。停止条件：原始残差、拆分残差、对偶残差与目标
    差距均不超过 tol（无穷范数，代价按其最大元素归一化）。
    """

    RESID_GAP = 10.0
    PENALTY_FACTOR = 2.0
    CHECK_EVERY = 10
    MAX_RESCALES = 50

    def __init__(self, problem: BlockSdpProblem, tol: float = SimDefaults.SDP_TOL,
                 max_iters: int = SimDefaults.SDP_MAX_ITERS, relaxation: float = 1.6):
        if not tol > 0:
            raise ValueError(f"容限必须为正: {tol}")
        if max_iters < 1:
            raise ValueError(f"最大迭代次数必须 ≥ 1: {max_iters}")
        if not 0 < relaxation < 2:
            raise ValueError(f"过松弛系数必须位于 (0, 2): {relaxation}")
        self.problem = problem
        self.tol = tol
        self.max_iters = max_iters
        self.alpha = relaxation

        supports = problem.check_groups()
        self.edge_var = np.array([n for s in supports.values() for n in s], dtype=np.int64)
        # 同度数的校验一起做多面体投影
        self.degree_groups: List[np.ndarray] = []
        by_degree: Dict[int, List[int]] = defaultdict(list)
        offset = 0
        for s in supports.values():
            by_degree[len(s)].append(offset)
            offset += len(s)
        for d, starts in sorted(by_degree.items()):
            self.degree_groups.append(np.asarray(starts)[:, None] + np.arange(d)[None, :])

        N = problem.n_vars
        self.copies = 1.0 + np.bincount(self.edge_var, minlength=N).astype(float)
        scale = max(np.abs(problem.costs).max(initial=0.0), np.abs(problem.linear_cost).max(initial=0.0))
        self.scale = scale if scale > 0 else 1.0

    def _x_update(self, Z, U, g, u_g, q, u_q, rho):
        p = self.problem
        D = p.block_size
        V = Z - U
        V = 0.5 * (V + V.transpose(0, 2, 1))
        X = V - p.costs / rho
        idx = np.arange(D)
        X[:, idx, idx] = 1.0

        blk, row = p.coupling_block, p.coupling_row
        if blk.size:
            a = self.copies
            w_bar = (g - u_g) + np.bincount(self.edge_var, weights=q - u_q, minlength=p.n_vars)
            w_bar = w_bar / a
            numer = (2.0 * rho * V[blk, row, D - 1] - 2.0 * p.costs[blk, row, D - 1]
                     + 0.5 * p.linear_cost + 0.25 * rho * a * (1.0 - 2.0 * w_bar))
            x = numer / (2.0 * rho + 0.25 * rho * a)
            X[blk, row, D - 1] = x
            X[blk, D - 1, row] = x
            f = 0.5 * (1.0 - x)
        else:
            f = np.zeros(0)
        return X, f

    def _project_checks(self, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(v)
        for positions in self.degree_groups:
            out[positions] = project_parity_polytope(v[positions])
        return out

    def _initial_state(self, warm_start: Optional[SdpSolution]):
        p = self.problem
        K, D, N = p.n_blocks, p.block_size, p.n_vars
        E = self.edge_var.size
        if warm_start is None:
            return (np.broadcast_to(np.eye(D), (K, D, D)).copy(), np.zeros((K, D, D)),
                    np.full(N, 0.5), np.zeros(N), np.full(E, 0.5), np.zeros(E), self.scale)

        Z = np.array(warm_start.blocks, dtype=float)
        g = np.clip(np.array(warm_start.f, dtype=float), 0.0, 1.0)
        if Z.shape != (K, D, D) or g.shape != (N,):
            raise ValueError(f"热启动解与问题维度不一致: X={Z.shape}, f={g.shape}")
        state = warm_start.state
        if state is None or state.checks.shape != (E,):
            return Z, np.zeros((K, D, D)), g, np.zeros(N), g[self.edge_var], np.zeros(E), self.scale
        return (Z, state.u_blocks.copy(), g, state.u_f.copy(), state.checks.copy(), state.u_checks.copy(),
                state.penalty * self.scale)

    def solve(self, warm_start: Optional[SdpSolution] = None) -> SdpSolution:
        """
        求解；warm_start 为同结构问题的已有解（通常是同一帧上一次 Turbo 迭代的解），
        其原始/对偶变量与罚参数作为初值
        """
        p = self.problem
        alpha = self.alpha
        Z, U, g, u_g, q, u_q, rho = self._initial_state(warm_start)
        E = self.edge_var.size

        best: Optional[SdpSolution] = None
        best_merit = np.inf
        rescales = 0
        r = dual = np.inf
        it = 0
        for it in range(1, self.max_iters + 1):
            X, f = self._x_update(Z, U, g, u_g, q, u_q, rho)

            X_hat = alpha * X + (1.0 - alpha) * Z
            g_hat = alpha * f + (1.0 - alpha) * g
            q_hat = alpha * f[self.edge_var] + (1.0 - alpha) * q

            Z_old, g_old, q_old = Z, g, q
            Z = project_psd(X_hat + U)
            g = np.clip(g_hat + u_g, 0.0, 1.0)
            q = self._project_checks(q_hat + u_q) if E else q

            U = U + X_hat - Z
            u_g = u_g + g_hat - g
            u_q = u_q + q_hat - q

            if it % self.CHECK_EVERY and it != self.max_iters:
                continue

            penalty = rho / self.scale
            r = max(_max_abs(X, Z), _max_abs(f, g), _max_abs(f[self.edge_var], q))
            dual = penalty * max(_max_abs(Z, Z_old), _max_abs(g, g_old), _max_abs(q, q_old))

            state = AdmmState(x_blocks=X, x_f=f, prev_blocks=Z_old, prev_f=g_old, checks=q.copy(),
                              u_blocks=U.copy(), u_f=u_g.copy(), u_checks=u_q.copy(), penalty=penalty)
            cand = SdpSolution(blocks=Z.copy(), f=g.copy(), objective=objective(p, Z, g),
                               status=SolverStatus.CONVERGED, iterations=it, primal_residual=r,
                               dual_residual=dual, rho=rho, state=state)
            report = residuals(p, cand)
            cand.gap = report.gap
            merit = max(report.primal, r, dual, report.gap)
            if merit < best_merit:
                best, best_merit = cand, merit
            if merit <= self.tol:
                logger.debug(f"ADMM 收敛: 迭代 {it} 次, r={r:.2e}, d={dual:.2e}, rho={rho:.3g}")
                return cand

            if rescales < self.MAX_RESCALES:
                if r > self.RESID_GAP * dual:
                    rho *= self.PENALTY_FACTOR
                    U, u_g, u_q = U / self.PENALTY_FACTOR, u_g / self.PENALTY_FACTOR, u_q / self.PENALTY_FACTOR
                    rescales += 1
                elif dual > self.RESID_GAP * r:
                    rho /= self.PENALTY_FACTOR
                    U, u_g, u_q = U * self.PENALTY_FACTOR, u_g * self.PENALTY_FACTOR, u_q * self.PENALTY_FACTOR
                    rescales += 1

        best.status = SolverStatus.MAXITER
        best.iterations = it
        logger.warning(f"ADMM 达到最大迭代次数 {self.max_iters}: r={r:.2e}, d={dual:.2e}, 返回最优迭代点")
        return best


def solve(problem: BlockSdpProblem, tol: float = SimDefaults.SDP_TOL,
          max_iters: int = SimDefaults.SDP_MAX_ITERS, relaxation: float = 1.6,
          warm_start: Optional[SdpSolution] = None) -> SdpSolution:
    return AdmmSolver(problem, tol=tol, max_iters=max_iters, relaxation=relaxation).solve(warm_start)


def solve_reference(problem: BlockSdpProblem, solver: Optional[str] = None) -> SdpSolution:
    """
    内点法参考解（cvxpy），仅用于小规模正确性校验
    """
    try:
        import cvxpy as cp
    except ImportError as e:
        raise ImportError("参考求解需要 cvxpy: pip install cvxpy") from e

    K, D, N = problem.n_blocks, problem.block_size, problem.n_vars
    Xs = [cp.Variable((D, D), symmetric=True) for _ in range(K)]
    f = cp.Variable(N)
    cons = [f >= 0, f <= 1]
    for k in range(K):
        cons += [Xs[k] >> 0, cp.diag(Xs[k]) == 1]
    for n in range(N):
        k, j = int(problem.coupling_block[n]), int(problem.coupling_row[n])
        cons.append(Xs[k][j, D - 1] == 1 - 2 * f[n])
    if problem.fs:
        A, b = problem.fs_matrix()
        cons.append(A @ f <= b)

    cost = sum(cp.trace(problem.costs[k] @ Xs[k]) for k in range(K)) + problem.linear_cost @ f
    prob = cp.Problem(cp.Minimize(cost), cons)
    if solver is None:
        solver = cp.CLARABEL if cp.CLARABEL in cp.installed_solvers() else cp.SCS
    prob.solve(solver=solver)
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise RuntimeError(f"参考求解失败: {prob.status}")

    blocks = np.stack([X.value for X in Xs])
    f_val = np.asarray(f.value, dtype=float).ravel() if N else np.zeros(0)
    return SdpSolution(blocks=blocks, f=f_val, objective=float(prob.value),
                       status=SolverStatus.CONVERGED, iterations=0, gap=0.0, dual_residual=0.0)


def dump_problem(problem: BlockSdpProblem, path: Union[str, Path]) -> None:
    """带版本号的 msgpack 容器"""
    payload = {
        'format': DUMP_FORMAT,
        'version': DUMP_VERSION,
        'costs': problem.costs,
        'linear_cost': problem.linear_cost,
        'coupling_block': problem.coupling_block,
        'coupling_row': problem.coupling_row,
        'fs': [[c.check, list(c.subset), list(c.support)] for c in problem.fs],
    }
    Path(path).write_bytes(pack(payload))
    logger.info(f"SDP 问题已导出: {path}")


def load_problem(path: Union[str, Path]) -> BlockSdpProblem:
    data = unpack(Path(path).read_bytes())
    if not isinstance(data, dict) or data.get('format') != DUMP_FORMAT:
        raise ValueError(f"不是 SDP 问题文件: {path}")
    if data.get('version') != DUMP_VERSION:
        raise ValueError(f"不支持的版本: {data.get('version')}")
    fs = [FsConstraint(check=c, subset=tuple(sub), support=tuple(sup)) for c, sub, sup in data['fs']]
    return BlockSdpProblem(data['costs'], data['linear_cost'], data['coupling_block'],
                           data['coupling_row'], fs)
