#!/usr/bin/env python3
"""
修正单纯形法测试

测试两阶段求解、对偶价格、不可行/无界检测、退化问题与热启动
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np

from revised_simplex import InfeasibleError, RevisedSimplex, UnboundedError
from testkit import run_tests


def small_lp():
    # min -x1 - x2  s.t.  x1 + 2x2 <= 4,  3x1 + x2 <= 6
    A = [[1.0, 2.0, 1.0, 0.0], [3.0, 1.0, 0.0, 1.0]]
    b = [4.0, 6.0]
    c = [-1.0, -1.0, 0.0, 0.0]
    return A, b, c


def test_optimum_and_duals():
    """最优解、目标值与对偶价格"""
    A, b, c = small_lp()
    result = RevisedSimplex(A, b, c).solve()
    assert np.allclose(result.x, [1.6, 1.2, 0.0, 0.0], atol=1e-12), result.x
    assert abs(result.objective + 2.8) < 1e-12
    assert np.allclose(result.duals, [-0.4, -0.2], atol=1e-12), result.duals


def test_strong_duality():
    """y·b 等于最优目标值"""
    A, b, c = small_lp()
    result = RevisedSimplex(A, b, c).solve()
    assert abs(float(result.duals @ np.array(b)) - result.objective) < 1e-9


def test_negative_rhs_duals():
    """右端项为负时返回原问题的对偶价格"""
    result = RevisedSimplex([[-1.0, -1.0]], [-2.0], [1.0, 2.0]).solve()
    assert np.allclose(result.x, [2.0, 0.0])
    assert abs(result.duals[0] + 1.0) < 1e-12
    assert abs(float(result.duals @ np.array([-2.0])) - result.objective) < 1e-12


def test_infeasible():
    """不可行问题抛出 InfeasibleError"""
    try:
        RevisedSimplex([[1.0, 1.0]], [-1.0], [1.0, 1.0]).solve()
    except InfeasibleError:
        return
    raise AssertionError("没有抛出 InfeasibleError")


def test_unbounded():
    """无界问题抛出 UnboundedError"""
    try:
        RevisedSimplex([[1.0, -1.0]], [1.0], [-1.0, 0.0]).solve()
    except UnboundedError:
        return
    raise AssertionError("没有抛出 UnboundedError")


def test_degenerate_problem_terminates():
    """经典的退化循环例子能正确终止"""
    A = [
        [1, 0, 0, 0.25, -8, -1, 9],
        [0, 1, 0, 0.5, -12, -0.5, 3],
        [0, 0, 1, 0, 0, 1, 0],
    ]
    b = [0, 0, 1]
    c = [0, 0, 0, -0.75, 20, -0.5, 6]
    result = RevisedSimplex(A, b, c).solve()
    assert abs(result.objective + 1.25) < 1e-12, result.objective
    assert np.all(result.x >= 0)
    assert np.allclose(np.array(A, dtype=float) @ result.x, b, atol=1e-12)


def test_warm_start_needs_no_pivots():
    """用最优基热启动时不需要换基"""
    A, b, c = small_lp()
    first = RevisedSimplex(A, b, c).solve()
    second = RevisedSimplex(A, b, c).solve(basis=first.basis)
    assert second.pivots == 0
    assert np.allclose(second.x, first.x)


def test_bad_warm_start_falls_back():
    """不合法的初始基回退到第一阶段"""
    A, b, c = small_lp()
    result = RevisedSimplex(A, b, c).solve(basis=[0])
    assert abs(result.objective + 2.8) < 1e-12
    result = RevisedSimplex(A, b, c).solve(basis=[0, 0])
    assert abs(result.objective + 2.8) < 1e-12


def test_dimension_mismatch():
    """维度不一致时报错"""
    try:
        RevisedSimplex([[1.0, 1.0]], [1.0, 2.0], [1.0, 1.0])
    except ValueError:
        return
    raise AssertionError("没有抛出 ValueError")


def test_refactorization_keeps_accuracy():
    """频繁重新求逆不影响结果"""
    rng = np.random.default_rng(11)
    m, n = 6, 12
    A = rng.uniform(0.1, 1.0, size=(m, n))
    x0 = rng.uniform(0.5, 1.0, size=n)
    b = A @ x0
    c = rng.uniform(0.0, 1.0, size=n)
    a = RevisedSimplex(A, b, c, refactor_every=1).solve()
    z = RevisedSimplex(A, b, c, refactor_every=50).solve()
    assert abs(a.objective - z.objective) < 1e-9
    assert abs(float(a.duals @ b) - a.objective) < 1e-9


if __name__ == '__main__':
    run_tests("修正单纯形法测试", globals())
