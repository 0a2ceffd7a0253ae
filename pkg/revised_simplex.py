"""
稠密修正单纯形法

求解标准形线性规划：

    min  c^T x
    s.t. A x = b
         x >= 0

特点：
- 显式维护基矩阵的逆 B^-1，每次换基做乘积形式更新，每 refactor_every 次换基重新求逆
- 进基与出基均采用 Bland 规则防止循环；连续退化换基过多时出基改用字典序规则
- 没有给定可行初始基时，先用人工变量求解第一阶段问题
- 返回最优基与对偶价格 y = c_B^T B^-1
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np


logger = logging.getLogger('IABSim.simplex')


class LPError(Exception):
    """线性规划求解失败"""


class InfeasibleError(LPError):
    """问题不可行"""


class UnboundedError(LPError):
    """问题无界"""


@dataclass(frozen=True)
class SimplexResult:
    """
    单纯形求解结果

    Attributes:
        x: 最优解
        objective: 最优目标值 c^T x
        basis: 最优基（每一行对应的基变量列号）
        duals: 对偶价格 y = c_B^T B^-1，长度等于约束数
        pivots: 换基次数（两个阶段合计）
    """
    x: np.ndarray
    objective: float
    basis: Tuple[int, ...]
    duals: np.ndarray
    pivots: int


class RevisedSimplex:
    """
    稠密修正单纯形求解器

    Args:
        A: 约束矩阵 (m, n)
        b: 右端项 (m,)
        c: 目标系数 (n,)
        tolerance: 检验数的最优性容差
        feasibility_tol: x >= 0 的可行性容差
        pivot_tol: 主元绝对值下限
        refactor_every: 重新求逆的换基间隔
        stall_limit: 连续退化换基达到该次数后改用字典序出基规则
        max_pivots: 换基次数上限
    """

    def __init__(self, A, b, c, tolerance: float = 1e-9, feasibility_tol: float = 1e-10,
                 pivot_tol: float = 1e-11, refactor_every: int = 50,
                 stall_limit: Optional[int] = None, max_pivots: int = 50000):
        A = np.array(A, dtype=float)
        b = np.array(b, dtype=float)
        self.m, self.n = A.shape
        # 保证右端项非负，方便人工变量构成可行初始基
        self.row_sign = np.where(b < 0, -1.0, 1.0)
        self.A = A * self.row_sign[:, None]
        self.b = b * self.row_sign
        self.c = np.array(c, dtype=float)
        if self.c.shape != (self.n,) or self.b.shape != (self.m,):
            raise ValueError("A、b、c 的维度不一致")

        # 扩展矩阵：[A | I]，后 m 列为人工变量
        self.A_ext = np.hstack([self.A, np.eye(self.m)])
        self.tolerance = tolerance
        self.feasibility_tol = feasibility_tol
        self.pivot_tol = pivot_tol
        self.refactor_every = refactor_every
        self.stall_limit = stall_limit if stall_limit is not None else 5 * max(self.m, 1)
        self.max_pivots = max_pivots

        self.basis = np.arange(self.n, self.n + self.m)
        self.Binv = np.eye(self.m)
        self.pivots = 0
        self._since_refactor = 0
        self._degenerate_run = 0

    # ---------- 基本操作 ----------

    def _refactor(self):
        try:
            self.Binv = np.linalg.inv(self.A_ext[:, self.basis])
        except np.linalg.LinAlgError as e:
            raise LPError(f"基矩阵奇异: {e}")
        self._since_refactor = 0

    def _pivot(self, row: int, col: int, direction: np.ndarray):
        pivot_row = self.Binv[row] / direction[row]
        self.Binv -= np.outer(direction, pivot_row)
        self.Binv[row] = pivot_row
        self.basis[row] = col
        self.pivots += 1
        self._since_refactor += 1
        if self._since_refactor >= self.refactor_every:
            self._refactor()

    def _basic_values(self) -> np.ndarray:
        return self.Binv @ self.b

    def _leaving_row(self, x_B: np.ndarray, direction: np.ndarray) -> Optional[int]:
        """最小比值检验，并列时按 Bland 规则（或字典序规则）选择出基行"""
        rows = np.flatnonzero(direction > self.pivot_tol)
        if rows.size == 0:
            return None
        ratios = np.maximum(x_B[rows], 0.0) / direction[rows]
        best = ratios.min()
        tied = rows[ratios <= best + self.feasibility_tol * max(1.0, best)]
        self._degenerate_run = self._degenerate_run + 1 if best <= self.feasibility_tol else 0
        if len(tied) == 1:
            return int(tied[0])
        if self._degenerate_run > self.stall_limit:
            return self._lexicographic_row(tied, direction)
        return int(tied[np.argmin(self.basis[tied])])

    def _lexicographic_row(self, rows: np.ndarray, direction: np.ndarray) -> int:
        best_row, best_key = None, None
        for r in rows:
            key = tuple(self.Binv[r] / direction[r])
            if best_key is None or key < best_key:
                best_row, best_key = int(r), key
        return best_row

    def _iterate(self, cost: np.ndarray, enterable: np.ndarray, phase: str):
        """对给定目标反复换基直到最优"""
        while True:
            if self.pivots >= self.max_pivots:
                raise LPError(f"{phase}: 换基次数超过上限 {self.max_pivots}")
            x_B = self._basic_values()
            y = cost[self.basis] @ self.Binv
            reduced = cost - y @ self.A_ext
            in_basis = np.zeros(self.A_ext.shape[1], dtype=bool)
            in_basis[self.basis] = True
            candidates = np.flatnonzero(enterable & ~in_basis & (reduced < -self.tolerance))
            if candidates.size == 0:
                return
            col = int(candidates[0])
            direction = self.Binv @ self.A_ext[:, col]
            row = self._leaving_row(x_B, direction)
            if row is None:
                raise UnboundedError(f"{phase}: 第 {col} 列方向无界")
            logger.debug(f"{phase} 换基: 第 {col} 列进基, 第 {int(self.basis[row])} 列出基")
            self._pivot(row, col, direction)

    # ---------- 两阶段 ----------

    def _phase_one(self):
        cost = np.concatenate([np.zeros(self.n), np.ones(self.m)])
        enterable = np.concatenate([np.ones(self.n, dtype=bool), np.zeros(self.m, dtype=bool)])
        self._iterate(cost, enterable, '第一阶段')
        x_B = self._basic_values()
        infeasibility = float(np.sum(x_B[self.basis >= self.n]))
        if infeasibility > self.feasibility_tol * max(1.0, float(np.abs(self.b).max(initial=0.0))):
            raise InfeasibleError(f"第一阶段目标值 {infeasibility:.3e} > 0，问题不可行")
        self._drive_out_artificials()

    def _drive_out_artificials(self):
        """把取值为 0 的人工变量换出基；若所在行冗余则保留"""
        for row in range(self.m):
            if self.basis[row] < self.n:
                continue
            tableau_row = self.Binv[row] @ self.A
            in_basis = set(int(j) for j in self.basis)
            for col in range(self.n):
                if col not in in_basis and abs(tableau_row[col]) > self.pivot_tol:
                    self._pivot(row, col, self.Binv @ self.A_ext[:, col])
                    break

    def _warm_start(self, basis: Sequence[int]) -> bool:
        basis = np.array(basis, dtype=int)
        if basis.shape != (self.m,) or len(set(basis.tolist())) != self.m or basis.max(initial=0) >= self.n:
            return False
        self.basis = basis.copy()
        try:
            self._refactor()
        except LPError:
            return False
        return bool(np.all(self._basic_values() >= -self.feasibility_tol))

    def solve(self, basis: Optional[Sequence[int]] = None) -> SimplexResult:
        """
        求解线性规划

        Args:
            basis: 可选的可行初始基（列号序列），不可用时回退到第一阶段

        Returns:
            SimplexResult

        Raises:
            InfeasibleError: 问题不可行
            UnboundedError: 问题无界
        """
        if basis is None or not self._warm_start(basis):
            if basis is not None:
                logger.debug("给定的初始基不可行，改用第一阶段求解")
            self.basis = np.arange(self.n, self.n + self.m)
            self.Binv = np.eye(self.m)
            self._phase_one()

        cost = np.concatenate([self.c, np.zeros(self.m)])
        enterable = np.concatenate([np.ones(self.n, dtype=bool), np.zeros(self.m, dtype=bool)])
        self._iterate(cost, enterable, '第二阶段')
        self._refactor()

        x_B = self._basic_values()
        x = np.zeros(self.n)
        for row, col in enumerate(self.basis):
            if col < self.n:
                x[col] = max(x_B[row], 0.0) if x_B[row] > -self.feasibility_tol else x_B[row]
        duals = (cost[self.basis] @ self.Binv) * self.row_sign
        return SimplexResult(
            x=x,
            objective=float(self.c @ x),
            basis=tuple(int(j) for j in self.basis),
            duals=duals,
            pivots=self.pivots,
        )
