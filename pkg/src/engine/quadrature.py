"""
复合 Gauss-Legendre 求积
所有 ∫…dx 型数值基准都走这里
"""

from dataclasses import dataclass, field
from typing import Callable, Tuple

import numpy as np

from engine.geometry import Domain

DEFAULT_NODES_PER_AXIS = 256
NODES_PER_PANEL = 32


def composite_gauss_legendre(a: float, b: float, nodes: int = DEFAULT_NODES_PER_AXIS) -> Tuple[np.ndarray, np.ndarray]:
    """
    一维复合 Gauss-Legendre 节点与权重

    Args:
        a, b: 积分区间
        nodes: 节点总数，按每段 32 个节点分段

    Returns:
        (节点, 权重)
    """
    per_panel = min(NODES_PER_PANEL, nodes)
    panels = max(1, nodes // per_panel)
    ref_x, ref_w = np.polynomial.legendre.leggauss(per_panel)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    x = (mid[:, None] + half[:, None] * ref_x[None, :]).ravel()
    w = (half[:, None] * ref_w[None, :]).ravel()
    return x, w


@dataclass(frozen=True)
class QuadratureRule:
    """区域上的张量积求积规则"""
    domain: Domain
    nodes_per_axis: int = DEFAULT_NODES_PER_AXIS
    points: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        axes = [
            composite_gauss_legendre(lo, hi, self.nodes_per_axis)
            for lo, hi in zip(self.domain.lower, self.domain.upper)
        ]
        if len(axes) == 1:
            points = axes[0][0][:, None]
            weights = axes[0][1]
        else:
            (x1, w1), (x2, w2) = axes
            g1, g2 = np.meshgrid(x1, x2, indexing="ij")
            points = np.column_stack([g1.ravel(), g2.ravel()])
            weights = np.outer(w1, w2).ravel()
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """∫ f dx，f 接受 (m, d) 点阵"""
        return float(np.dot(self.weights, f(self.points)))

    def integrate_values(self, values: np.ndarray) -> np.ndarray:
        """对已在节点上求值的数组积分（首轴为节点）"""
        return np.tensordot(self.weights, values, axes=(0, 0))
