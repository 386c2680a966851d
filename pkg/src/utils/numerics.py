"""
数值工具函数
补偿求和、可复现随机流与蒙特卡洛统计量
"""

import math
from typing import Sequence, Tuple

import numpy as np


def compensated_sum(terms: np.ndarray, axis: int = -1) -> np.ndarray:
    """
    沿指定轴做 Kahan 补偿求和

    Args:
        terms: 待求和的数组
        axis: 求和轴

    Returns:
        去掉该轴后的和
    """
    terms = np.moveaxis(np.asarray(terms, dtype=float), axis, 0)
    total = np.zeros(terms.shape[1:], dtype=float)
    carry = np.zeros_like(total)
    for term in terms:
        y = term - carry
        t = total + y
        carry = (t - total) - y
        total = t
    return total


def series_eval(basis_values: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """按模态对 basis_values[..., k] * coeffs[k] 做补偿求和"""
    return compensated_sum(basis_values * coeffs, axis=-1)


def replica_rng(master_seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """由主种子与副本编号派生独立随机流，与并行度无关"""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(stream), int(index)))
    return np.random.Generator(np.random.PCG64(seq))


def mean_and_stderr(values: Sequence[float]) -> Tuple[float, float]:
    """
    样本均值与标准误（精确舍入求和，结果与顺序无关）

    Returns:
        (均值, 标准误)；样本数小于 2 时标准误为 0
    """
    values = [float(v) for v in values]
    m = len(values)
    if m == 0:
        raise ValueError("空样本无法估计均值")
    mean = math.fsum(values) / m
    if m < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (m - 1)
    return mean, math.sqrt(var / m)
