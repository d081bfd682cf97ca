#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
文件: core/potential.py
显式枚举的可逆链上的位势理论 - 调和函数、击中概率、容量、
Dirichlet / Thomson 变分界、平均击中时间、Laplace 泛函与 θ_β

μ 以对数形式相对参考态存放 (不计算配分函数)；
电导 c(x,y) = μ(x)r(x,y) 装配时减去全局尺度 max log μ 以免下溢。
"""

import logging
import math
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import LinearOperator, cg, spsolve

from core.lattice import (
    BOND, ClosureOverflowError, FlowError, ModelError, ModelParams, SolverError,
    SpinConfiguration, TorusLattice, flip_terms, run_length_decode, run_length_encode,
)
from core.dynamics import RateTable
from core.droplets import critical_size, gamma_c, make_spiral

logger = logging.getLogger(__name__)

DEFAULT_CLOSURE_CAP = 50_000_000
DENSE_LIMIT = 2000
CG_RTOL = 1e-12
REVERSIBILITY_RTOL = 1e-10
FLOW_TOLERANCE = 1e-9

StateKey = Hashable
StateSet = Iterable[StateKey]


class EnumeratedChain:
    """
    有限可逆连续时间马氏链

    states 为状态键列表 (自旋构型用 bytes)，edges 为有向边 (i, j, r(i,j))，
    log_mu 为相对 states[0] 的非归一化对数权重。构造后不可变。
    """

    def __init__(self, states: Sequence[StateKey], rows: Sequence[int], cols: Sequence[int],
                 rates: Sequence[float], log_mu: Sequence[float], check: bool = True):
        self.states = list(states)
        self.index = {key: i for i, key in enumerate(self.states)}
        if len(self.index) != len(self.states):
            raise ModelError("状态键重复")
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.rates = np.asarray(rates, dtype=float)
        self.log_mu = np.asarray(log_mu, dtype=float)
        if len(self.log_mu) != len(self.states):
            raise ModelError("log μ 的长度与状态数不符")
        if np.any(self.rates <= 0.0) or np.any(self.rows == self.cols):
            raise ModelError("边速率必须为正且不能有自环")
        self.reversible = False
        if check:
            self.check_reversibility()

    @classmethod
    def from_rates(cls, states: Sequence[StateKey],
                   rates: Union[Mapping[Tuple[int, int], float], Iterable[Tuple[int, int, float]]],
                   log_mu: Sequence[float], check: bool = True) -> "EnumeratedChain":
        """由显式速率表 {(i,j): r} 或 (i, j, r) 三元组构造"""
        items = rates.items() if isinstance(rates, Mapping) else ((
            (i, j), r) for i, j, r in rates)
        rows, cols, values = [], [], []
        for (i, j), r in items:
            if r > 0.0:
                rows.append(i)
                cols.append(j)
                values.append(r)
        return cls(states, rows, cols, values, log_mu, check)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_edges(self) -> int:
        return len(self.rates)

    @property
    def ref(self) -> StateKey:
        return self.states[0]

    def indices(self, keys: StateSet) -> np.ndarray:
        try:
            return np.array(sorted({self.index[k] for k in keys}), dtype=np.int64)
        except KeyError as e:
            raise ModelError(f"状态不在链中: {e.args[0]!r}") from e

    def mask(self, keys: StateSet) -> np.ndarray:
        m = np.zeros(self.n_states, dtype=bool)
        m[self.indices(keys)] = True
        return m

    @cached_property
    def rate_matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.rates, (self.rows, self.cols)), shape=(self.n_states,) * 2)

    @cached_property
    def holding_rates(self) -> np.ndarray:
        """λ(x) = Σ_y r(x,y)"""
        return np.bincount(self.rows, weights=self.rates, minlength=self.n_states)

    @cached_property
    def scale(self) -> float:
        return float(np.max(self.log_mu))

    @cached_property
    def scaled_mu(self) -> np.ndarray:
        """μ(x)·e^{-scale}"""
        return np.exp(self.log_mu - self.scale)

    @cached_property
    def conductance(self) -> sp.csr_matrix:
        """对称化的电导矩阵 c(x,y)·e^{-scale}"""
        values = np.exp(self.log_mu[self.rows] - self.scale) * self.rates
        c = sp.csr_matrix((values, (self.rows, self.cols)), shape=(self.n_states,) * 2)
        return ((c + c.T) * 0.5).tocsr()

    @cached_property
    def degree(self) -> np.ndarray:
        return np.asarray(self.conductance.sum(axis=1)).ravel()

    def check_reversibility(self, rtol: float = REVERSIBILITY_RTOL) -> bool:
        """μ(i)r(i,j) = μ(j)r(j,i)，且每条边都有反向边"""
        reverse = {}
        for k, (i, j) in enumerate(zip(self.rows.tolist(), self.cols.tolist())):
            reverse[(i, j)] = k
        for (i, j), k in reverse.items():
            back = reverse.get((j, i))
            if back is None:
                raise ModelError(f"边 {i}→{j} 没有反向边")
            lhs = self.log_mu[i] + math.log(self.rates[k])
            rhs = self.log_mu[j] + math.log(self.rates[back])
            if abs(lhs - rhs) > rtol * max(1.0, abs(lhs)):
                raise ModelError(f"细致平衡不成立: 边 {i}↔{j} 的 log 流量 {lhs!r} ≠ {rhs!r}")
        self.reversible = True
        return True

    def __repr__(self) -> str:
        return f"<EnumeratedChain states={self.n_states} edges={self.n_edges}>"


# ---------------------------------------------------------------------------
# 构造

@dataclass
class ClosureGraph:
    """
    闭包的组合结构，与 β 无关

    每个状态记录相对第一个种子的 (键能差, 磁化差)，每条边记录翻转的
    (bond_delta, spin_delta)，因此 ℍ 差 = 键能差 - h·磁化差 为精确整数组合。
    """
    lattice: TorusLattice
    states: List[bytes]
    bonds: np.ndarray
    magnetization: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    bond_deltas: np.ndarray
    spin_deltas: np.ndarray

    @property
    def n_states(self) -> int:
        return len(self.states)

    def configuration(self, i: int) -> SpinConfiguration:
        return SpinConfiguration(self.lattice, bytearray(self.states[i]))

    def select(self, predicate: Callable[[SpinConfiguration], bool]) -> List[bytes]:
        """满足谓词的状态键"""
        return [key for i, key in enumerate(self.states) if predicate(self.configuration(i))]

    def chain(self, p: ModelParams) -> EnumeratedChain:
        if p.lattice != self.lattice:
            raise ModelError("参数环面与闭包环面不符")
        table = RateTable(p)
        rates = [table.rate(int(b), int(s)) for b, s in zip(self.bond_deltas, self.spin_deltas)]
        log_mu = -p.beta * (self.bonds - p.h * self.magnetization)
        return EnumeratedChain(self.states, self.rows, self.cols, rates, log_mu)


def enumerate_closure_graph(seeds: Sequence[SpinConfiguration],
                            member: Callable[[SpinConfiguration], bool],
                            lattice: TorusLattice, cap: int = DEFAULT_CLOSURE_CAP) -> ClosureGraph:
    """自种子出发在 member 内对单点翻转做广度优先闭包"""
    if not seeds:
        raise ModelError("闭包至少需要一个种子构型")
    states: List[bytes] = []
    bonds: List[int] = []
    magnetization: List[int] = []
    index: Dict[bytes, int] = {}
    queue: deque = deque()
    rows, cols, bond_deltas, spin_deltas = [], [], [], []

    def visit(sigma: SpinConfiguration, b: int, m: int) -> int:
        key = sigma.key()
        i = index.get(key)
        if i is None:
            i = len(states)
            index[key] = i
            states.append(key)
            bonds.append(b)
            magnetization.append(m)
            queue.append((i, sigma.copy(), b, m))
            if len(states) > cap:
                raise ClosureOverflowError(len(states), cap)
        return i

    def terms(sigma: SpinConfiguration) -> Tuple[int, int]:
        b = sum(BOND[sigma.codes[x]][sigma.codes[y]] for x, y in lattice.pairs)
        return b, sigma.counts[2] - sigma.counts[0]

    ref_bonds, ref_mag = terms(seeds[0])
    for seed in seeds:
        if seed.lattice != lattice:
            raise ModelError("种子构型的环面与闭包环面不符")
        if not member(seed):
            raise ModelError("种子构型不满足闭包谓词")
        b, m = terms(seed)
        visit(seed, b - ref_bonds, m - ref_mag)

    while queue:
        i, sigma, b, m = queue.popleft()
        for site in range(lattice.size):
            for direction in (1, -1):
                bond_delta, spin_delta = flip_terms(sigma, site, direction)
                sigma.flip(site, direction)
                if member(sigma):
                    j = visit(sigma, b + bond_delta, m + spin_delta)
                    rows.append(i)
                    cols.append(j)
                    bond_deltas.append(bond_delta)
                    spin_deltas.append(spin_delta)
                sigma.flip(site, -direction)

    logger.info("闭包枚举完成: %d 个状态, %d 条有向边", len(states), len(rows))
    return ClosureGraph(
        lattice=lattice,
        states=states,
        bonds=np.asarray(bonds, dtype=float),
        magnetization=np.asarray(magnetization, dtype=float),
        rows=np.asarray(rows, dtype=np.int64),
        cols=np.asarray(cols, dtype=np.int64),
        bond_deltas=np.asarray(bond_deltas, dtype=np.int64),
        spin_deltas=np.asarray(spin_deltas, dtype=np.int64),
    )


def enumerate_closure(seeds: Sequence[SpinConfiguration], member: Callable[[SpinConfiguration], bool],
                      p: ModelParams, cap: int = DEFAULT_CLOSURE_CAP) -> EnumeratedChain:
    """
    自种子出发在 member 内对单点翻转做广度优先闭包

    速率取自动力学的 Metropolis 速率，μ 为相对第一个种子的 Gibbs 权重。
    """
    return enumerate_closure_graph(seeds, member, p.lattice, cap).chain(p)


def random_reversible_chain(n: int, rng: np.random.Generator, extra_edges: Optional[int] = None,
                            spread: float = 2.0) -> EnumeratedChain:
    """随机连通可逆链: 随机生成树 + 额外的边，电导和 log μ 取随机值"""
    if n < 2:
        raise ModelError(f"随机链至少需要2个状态: {n}")
    log_mu = rng.normal(0.0, spread, size=n)
    log_mu -= log_mu[0]
    order = rng.permutation(n)
    pairs = {tuple(sorted((int(order[k]), int(order[rng.integers(k)])))) for k in range(1, n)}
    extra = n if extra_edges is None else extra_edges
    for _ in range(extra):
        i, j = rng.choice(n, size=2, replace=False)
        pairs.add((int(min(i, j)), int(max(i, j))))
    rates = {}
    for i, j in sorted(pairs):
        log_c = rng.normal(min(log_mu[i], log_mu[j]), 1.0)
        rates[(i, j)] = math.exp(log_c - log_mu[i])
        rates[(j, i)] = math.exp(log_c - log_mu[j])
    return EnumeratedChain.from_rates(list(range(n)), rates, log_mu)


def birth_death_chain(up: Union[float, Sequence[float]], down: Union[float, Sequence[float]],
                      m: int) -> EnumeratedChain:
    """状态 0..m，k→k+1 速率 up，k+1→k 速率 down"""
    if m < 1:
        raise ModelError(f"生灭链至少需要2个状态: m={m}")
    ups = [float(up)] * m if np.isscalar(up) else [float(u) for u in up]
    downs = [float(down)] * m if np.isscalar(down) else [float(d) for d in down]
    if len(ups) != m or len(downs) != m:
        raise ModelError("速率序列长度必须等于 m")
    log_mu = [0.0]
    rates = {}
    for k in range(m):
        rates[(k, k + 1)] = ups[k]
        rates[(k + 1, k)] = downs[k]
        log_mu.append(log_mu[-1] + math.log(ups[k]) - math.log(downs[k]))
    return EnumeratedChain.from_rates(list(range(m + 1)), rates, log_mu)


# ---------------------------------------------------------------------------
# 线性求解

@dataclass
class HarmonicSolution:
    """调和函数或平均击中时间的解；undetermined 标记既不接触 A 也不接触 B 的分量"""
    values: np.ndarray
    undetermined: np.ndarray
    residual: float = 0.0

    @property
    def has_undetermined(self) -> bool:
        return bool(self.undetermined.any())


def _solve_spd(matrix: sp.csr_matrix, rhs: np.ndarray) -> np.ndarray:
    n = matrix.shape[0]
    if n == 0:
        return np.zeros(0)
    if n < DENSE_LIMIT:
        try:
            return scipy.linalg.solve(matrix.toarray(), rhs, assume_a="pos")
        except (np.linalg.LinAlgError, ValueError):
            return scipy.linalg.solve(matrix.toarray(), rhs)

    diagonal = matrix.diagonal()
    inverse = np.where(diagonal > 0.0, 1.0 / diagonal, 1.0)
    preconditioner = LinearOperator((n, n), matvec=lambda v: inverse * v)
    solution, info = cg(matrix, rhs, rtol=CG_RTOL, atol=0.0, maxiter=20 * n, M=preconditioner)
    if info == 0:
        return solution
    logger.warning("共轭梯度未收敛 (info=%d)，改用稀疏直接法", info)
    try:
        solution = spsolve(matrix.tocsc(), rhs)
    except RuntimeError as e:
        raise SolverError(f"稀疏直接法失败: {e}") from e
    if not np.all(np.isfinite(solution)):
        raise SolverError("线性方程组的解含有非有限值")
    return solution


def _solve_dirichlet(chain: EnumeratedChain, boundary: np.ndarray, boundary_values: np.ndarray,
                     source: Optional[np.ndarray] = None) -> HarmonicSolution:
    """
    电导形式的 Dirichlet 问题: 内部点上 Σ_y c(x,y)(u(x)-u(y)) = source(x)，边界上 u 给定
    """
    n = chain.n_states
    C = chain.conductance
    interior = np.flatnonzero(~boundary)
    values = np.where(boundary, boundary_values, 0.0).astype(float)
    undetermined = np.zeros(n, dtype=bool)
    if interior.size == 0:
        return HarmonicSolution(values, undetermined)

    C_II = C[interior][:, interior].tocsr()
    C_IB = C[interior][:, np.flatnonzero(boundary)]
    boundary_conductance = np.asarray(C_IB.sum(axis=1)).ravel()

    # 不接触边界的内部分量无法确定
    n_comp, labels = connected_components(C_II, directed=False)
    touches = np.zeros(n_comp, dtype=bool)
    touches[labels[boundary_conductance > 0.0]] = True
    solvable = touches[labels]
    undetermined[interior[~solvable]] = True
    values[interior[~solvable]] = np.nan

    keep = np.flatnonzero(solvable)
    if keep.size:
        idx = interior[keep]
        sub = C_II[keep][:, keep]
        laplacian = (sp.diags(chain.degree[idx]) - sub).tocsr()
        rhs = C_IB[keep] @ boundary_values[boundary]
        if source is not None:
            rhs = rhs + source[idx]
        values[idx] = _solve_spd(laplacian, np.asarray(rhs, dtype=float).ravel())

    finite = np.where(undetermined, 0.0, values)
    flux = chain.degree * finite - C @ finite
    if source is not None:
        flux = flux - source
    rate_residual = np.abs(flux[interior[solvable]]) / np.maximum(chain.scaled_mu[interior[solvable]], 1e-300)
    residual = float(rate_residual.max()) if rate_residual.size else 0.0
    return HarmonicSolution(values, undetermined, residual)


def harmonic_solve(chain: EnumeratedChain, A: StateSet, B: StateSet) -> HarmonicSolution:
    """h(x) = P_x[H_A < H_B]: A 上为1，B 上为0，其余点调和"""
    a, b = chain.mask(A), chain.mask(B)
    if not a.any() or not b.any():
        raise ModelError("A 与 B 都必须非空")
    if (a & b).any():
        raise ModelError("A 与 B 必须不相交")
    solution = _solve_dirichlet(chain, a | b, a.astype(float))

    lam_max = float(chain.holding_rates.max())
    if solution.residual > 1e-10 * lam_max:
        logger.warning("调和解残差偏大: %.3e (λ_max=%.3e)", solution.residual, lam_max)
    values = solution.values
    ok = ~solution.undetermined
    if np.any(values[ok] < -1e-9) or np.any(values[ok] > 1.0 + 1e-9):
        raise SolverError("调和解超出 [0,1]")
    values[ok] = np.clip(values[ok], 0.0, 1.0)
    return solution


def hitting_probability(chain: EnumeratedChain, x: StateKey, A: StateSet, B: StateSet) -> float:
    """P_x[H_A < H_B]"""
    return float(harmonic_solve(chain, A, B).values[chain.index[x]])


def _log_capacity(chain: EnumeratedChain, A: StateSet, B: StateSet) -> float:
    solution = harmonic_solve(chain, A, B)
    values = np.where(solution.undetermined, 0.0, solution.values)
    a = chain.indices(A)
    flux = chain.degree[a] * values[a] - (chain.conductance[a] @ values)
    total = float(np.sum(flux))
    if total <= 0.0:
        return -math.inf
    return chain.scale + math.log(total)


def capacity_exact(chain: EnumeratedChain, A: StateSet, B: StateSet) -> float:
    """
    cap(A,B) = Σ_{x∈A} μ(x)λ(x)P_x[H_B < H_A⁺]，以 μ(ref) 为单位

    逃逸概率由一步分解加调和解得到: Σ_y c(x,y)(1 - h(y))。
    """
    return math.exp(_log_capacity(chain, A, B))


def log_capacity(chain: EnumeratedChain, A: StateSet, B: StateSet) -> float:
    return _log_capacity(chain, A, B)


def escape_probability(chain: EnumeratedChain, x: StateKey, C: StateSet) -> float:
    """P_x[H_C < H_x⁺] = cap(x,C) / (μ(x)λ(x))"""
    i = chain.index[x]
    if i in set(chain.indices(C).tolist()):
        raise ModelError("起点不能属于目标集合")
    log_cap = _log_capacity(chain, [x], C)
    return math.exp(log_cap - chain.log_mu[i] - math.log(chain.holding_rates[i]))


def mean_hitting_times(chain: EnumeratedChain, A: StateSet) -> HarmonicSolution:
    """u(x) = E_x[H_A]; 到达不了 A 的分量被标记"""
    a = chain.mask(A)
    if not a.any():
        raise ModelError("目标集合不能为空")
    source = np.where(a, 0.0, chain.scaled_mu)
    return _solve_dirichlet(chain, a, np.zeros(chain.n_states), source)


def mean_hitting_time(chain: EnumeratedChain, x: StateKey, A: StateSet) -> float:
    solution = mean_hitting_times(chain, A)
    i = chain.index[x]
    if solution.undetermined[i]:
        logger.warning("状态 %r 无法到达目标集合", x)
        return math.nan
    return float(solution.values[i])


def exit_distribution(chain: EnumeratedChain, source: StateKey, B: StateSet) -> Dict[StateKey, float]:
    """
    P_source[H_σ = H_B]，σ ∈ B

    格林函数 G(s,z) = w(z)μ(z)，其中 K w = e_s，K 为内部的电导拉普拉斯；
    出口分布为 Σ_z w(z)c(z,σ)，一次求解。
    """
    b = chain.mask(B)
    s = chain.index[source]
    if b[s]:
        raise ModelError("起点不能属于出口集合")
    interior = np.flatnonzero(~b)
    position = {int(i): k for k, i in enumerate(interior)}
    C = chain.conductance
    C_II = C[interior][:, interior]
    laplacian = (sp.diags(chain.degree[interior]) - C_II).tocsr()
    rhs = np.zeros(interior.size)
    rhs[position[s]] = 1.0
    w = _solve_spd(laplacian, rhs)
    boundary = np.flatnonzero(b)
    weights = np.asarray(C[interior][:, boundary].T @ w).ravel()
    return {chain.states[int(j)]: float(v) for j, v in zip(boundary, weights) if v > 0.0}


def trace_rates(chain: EnumeratedChain, F: StateSet) -> Dict[Tuple[StateKey, StateKey], float]:
    """
    F 上迹过程的跳跃速率 r_F(x,y) = λ(x)P_x[H_F⁺ = H_y]
    = Σ_z r(x,z)·P_z[H_F = H_y]
    """
    f_idx = chain.indices(F)
    if f_idx.size < 2:
        raise ModelError("迹集合至少需要两个状态")
    R = chain.rate_matrix
    result = {}
    f_keys = [chain.states[int(i)] for i in f_idx]
    for y in f_keys:
        others = [k for k in f_keys if k != y]
        g = harmonic_solve(chain, [y], others).values
        g = np.where(np.isnan(g), 0.0, g)
        for x in others:
            i = chain.index[x]
            row = R.getrow(i)
            result[(x, y)] = float(row.data @ g[row.indices])
    return result


# ---------------------------------------------------------------------------
# 变分界

def _as_vector(chain: EnumeratedChain, f) -> np.ndarray:
    if isinstance(f, Mapping):
        vector = np.zeros(chain.n_states)
        for key, value in f.items():
            vector[chain.index[key]] = value
        return vector
    if callable(f):
        return np.array([f(key) for key in chain.states], dtype=float)
    vector = np.asarray(f, dtype=float)
    if vector.shape != (chain.n_states,):
        raise ModelError(f"测试函数长度 {vector.shape} 与状态数 {chain.n_states} 不符")
    return vector


def dirichlet_form(chain: EnumeratedChain, f) -> float:
    """D(f) = ½ Σ_{x,y} μ(x)r(x,y)(f(y)-f(x))²，以 μ(ref) 为单位"""
    v = _as_vector(chain, f)
    C = chain.conductance.tocoo()
    diff = v[C.col] - v[C.row]
    return 0.5 * float(np.sum(C.data * diff * diff)) * math.exp(chain.scale)


def dirichlet_upper(chain: EnumeratedChain, A: StateSet, B: StateSet, f_test) -> float:
    """测试函数在 A 上为1、B 上为0、取值于 [0,1] 时给出 cap(A,B) 的上界"""
    v = _as_vector(chain, f_test)
    a, b = chain.indices(A), chain.indices(B)
    if np.any(v < -1e-12) or np.any(v > 1.0 + 1e-12):
        raise ModelError("测试函数必须取值于 [0,1]")
    if not np.allclose(v[a], 1.0) or not np.allclose(v[b], 0.0):
        raise ModelError("测试函数必须在 A 上为1、B 上为0")
    return dirichlet_form(chain, v)


@dataclass
class UnitFlow:
    """从 A 到 B 的单位流，反对称地存放在有向边上"""
    values: Dict[Tuple[int, int], float]
    sources: List[int]
    sinks: List[int]

    @classmethod
    def from_edges(cls, chain: EnumeratedChain, A: StateSet, B: StateSet,
                   edges: Iterable[Tuple[StateKey, StateKey, float]]) -> "UnitFlow":
        values: Dict[Tuple[int, int], float] = {}
        for x, y, phi in edges:
            i, j = chain.index[x], chain.index[y]
            values[(i, j)] = values.get((i, j), 0.0) + phi
            values[(j, i)] = values.get((j, i), 0.0) - phi
        return cls(values, chain.indices(A).tolist(), chain.indices(B).tolist())

    def divergence(self, n: int) -> np.ndarray:
        div = np.zeros(n)
        for (i, _), phi in self.values.items():
            div[i] += phi
        return div

    def validate(self, chain: EnumeratedChain, tolerance: float = FLOW_TOLERANCE):
        if set(self.sources) & set(self.sinks):
            raise FlowError("流的源与汇必须不相交")
        edges = set(zip(chain.rows.tolist(), chain.cols.tolist()))
        for (i, j), phi in self.values.items():
            if (i, j) not in edges and phi != 0.0:
                raise FlowError(f"流经过了链中不存在的边 {i}→{j}")
            if abs(phi + self.values.get((j, i), 0.0)) > tolerance:
                raise FlowError(f"流在边 {i}↔{j} 上不反对称")
        div = self.divergence(chain.n_states)
        interior = np.ones(chain.n_states, dtype=bool)
        interior[self.sources] = False
        interior[self.sinks] = False
        if np.any(np.abs(div[interior]) > tolerance):
            bad = int(np.flatnonzero(np.abs(div) * interior > tolerance)[0])
            raise FlowError(f"状态 {bad} 处散度 {div[bad]!r} 不为零")
        if abs(div[self.sources].sum() - 1.0) > tolerance:
            raise FlowError(f"源处总散度 {div[self.sources].sum()!r} ≠ 1")
        if abs(div[self.sinks].sum() + 1.0) > tolerance:
            raise FlowError(f"汇处总散度 {div[self.sinks].sum()!r} ≠ -1")


def thomson_lower(chain: EnumeratedChain, flow: UnitFlow) -> float:
    """[½ Σ φ(x,y)²/(μ(x)r(x,y))]⁻¹ ≤ cap(A,B)"""
    flow.validate(chain)
    C = chain.conductance
    total = 0.0
    for (i, j), phi in flow.values.items():
        if phi != 0.0:
            total += phi * phi / C[i, j]
    return math.exp(chain.scale) / (0.5 * total)


def spiral_flow(chain: EnumeratedChain, p: ModelParams,
                sinks: Optional[StateSet] = None) -> UnitFlow:
    """
    螺旋单位流: 从全 -1 向每个 ζ_{x,1} 输送 1/|Λ|，
    再沿 ζ_{x,k} → ζ_{x,k+1} 一直送到 Rᵃ 中的 ζ_{x,n₀(n₀+1)+1}
    """
    lattice = p.lattice
    minus = SpinConfiguration.uniform(lattice, -1).key()
    if minus not in chain.index:
        raise FlowError("链中缺少全 -1 构型")
    last = critical_size(p.n0) + 1
    mass = 1.0 / lattice.size
    edges = []
    ends = []
    for x in range(lattice.size):
        previous = minus
        for k in range(1, last + 1):
            key = make_spiral(p, x, k).key()
            if key not in chain.index:
                raise FlowError(f"链中缺少螺旋构型 ζ_(x={x},k={k})")
            edges.append((previous, key, mass))
            previous = key
        ends.append(previous)
    flow = UnitFlow.from_edges(chain, [minus], ends if sinks is None else sinks, edges)
    flow.validate(chain)
    return flow


# ---------------------------------------------------------------------------
# Laplace 泛函与 θ_β

def laplace_functional(n: int, eps: float, theta: float) -> float:
    """
    生灭链 (k→k+1 速率 ε，k→k-1 速率 1) 上 f(k) = E_k[e^{-θH_n}] 在 0 处的值

    在 {0,…,n-1} 上解 (Lf)(k) = θf(k)，f(n) = 1。
    """
    if n < 1 or not eps > 0.0 or not theta > 0.0:
        raise ModelError(f"要求 n ≥ 1, ε > 0, θ > 0: n={n}, ε={eps}, θ={theta}")
    down = np.ones(n)
    down[0] = 0.0
    banded = np.zeros((3, n))
    banded[0, 1:] = -eps
    banded[1, :] = eps + down + theta
    banded[2, :-1] = -down[1:]
    rhs = np.zeros(n)
    rhs[-1] = eps
    f = scipy.linalg.solve_banded((1, 1), banded, rhs)
    return float(f[0])


def theta_beta(chain: EnumeratedChain, p: ModelParams, targets: StateSet,
               source: Optional[StateKey] = None) -> float:
    """θ_β = μ(-1) / cap(-1, targets)"""
    if source is None:
        source = SpinConfiguration.uniform(p.lattice, -1).key()
    if source not in chain.index:
        raise ModelError("链中缺少全 -1 构型")
    log_cap = _log_capacity(chain, [source], targets)
    return math.exp(chain.log_mu[chain.index[source]] - log_cap)


def theta_beta_asymptotic(p: ModelParams) -> float:
    """3/(4(2n₀+1))·|Λ|⁻¹·e^{aβ}"""
    _, barrier = gamma_c(p)
    prefactor = 3.0 / (4.0 * (2 * p.n0 + 1))
    return prefactor / p.volume * math.exp(barrier * p.beta)


# ---------------------------------------------------------------------------
# 链的文本格式

def _key_token(key: StateKey) -> str:
    if isinstance(key, (bytes, bytearray)):
        return run_length_encode(key)
    if isinstance(key, (int, np.integer)):
        return str(int(key))
    raise ModelError(f"无法导出的状态键类型: {type(key).__name__}")


def _parse_key(token: str) -> StateKey:
    if token.lstrip("-").isdigit():
        return int(token)
    return bytes(run_length_decode(token))


def export_chain(chain: EnumeratedChain) -> str:
    lines = [f"STATES {chain.n_states} EDGES {chain.n_edges} REF {_key_token(chain.ref)}"]
    for i, (key, lm) in enumerate(zip(chain.states, chain.log_mu)):
        lines.append(f"{i} {lm:.17g} {_key_token(key)}")
    for i, j, r in zip(chain.rows.tolist(), chain.cols.tolist(), chain.rates.tolist()):
        lines.append(f"{i} {j} {r:.17g}")
    return "\n".join(lines) + "\n"


def import_chain(text: str) -> EnumeratedChain:
    lines = [line for line in text.splitlines() if line.strip()]
    header = lines[0].split() if lines else []
    if len(header) != 6 or header[0] != "STATES" or header[2] != "EDGES" or header[4] != "REF":
        raise ModelError("链文件头格式应为 'STATES n EDGES m REF key'")
    n, m = int(header[1]), int(header[3])
    if len(lines) != 1 + n + m:
        raise ModelError(f"链文件行数 {len(lines)} 与声明的 {1 + n + m} 不符")
    states, log_mu = [], []
    for line in lines[1:1 + n]:
        _, lm, token = line.split()
        log_mu.append(float(lm))
        states.append(_parse_key(token))
    rows, cols, rates = [], [], []
    for line in lines[1 + n:]:
        i, j, r = line.split()
        rows.append(int(i))
        cols.append(int(j))
        rates.append(float(r))
    return EnumeratedChain(states, rows, cols, rates, log_mu)


# 使用示例
if __name__ == "__main__":
    series = birth_death_chain(up=2.0, down=1.0, m=2)
    print(f"cap(0,2) = {capacity_exact(series, [0], [2]):.6f}")
    print(f"P_1[H_0 < H_2] = {hitting_probability(series, 1, [0], [2]):.6f}")
    print(f"Laplace 泛函 f(0) = {laplace_functional(3, 0.1, 0.01):.6e}")
