"""
区域几何
有界区域 D：区间 (d=1) 或轴对齐矩形 (d=2)
"""

from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Tuple

import numpy as np

from engine.exceptions import GeometryError


class DomainKind(Enum):
    """区域类型"""
    INTERVAL = "interval"
    RECTANGLE = "rectangle"


@dataclass(frozen=True)
class Domain:
    """
    有界区域

    构造后不可变，可在并发副本间共享。
    """
    kind: DomainKind
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        expected = 1 if self.kind is DomainKind.INTERVAL else 2
        if len(self.lower) != expected or len(self.upper) != expected:
            raise GeometryError(f"{self.kind.value} 需要 {expected} 组上下界")
        for lo, hi in zip(self.lower, self.upper):
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise GeometryError(f"非法边界: ({lo}, {hi})")

    @classmethod
    def interval(cls, a: float, b: float) -> "Domain":
        return cls(DomainKind.INTERVAL, (float(a),), (float(b),))

    @classmethod
    def rectangle(cls, a1: float, b1: float, a2: float, b2: float) -> "Domain":
        return cls(DomainKind.RECTANGLE, (float(a1), float(a2)), (float(b1), float(b2)))

    @classmethod
    def from_bounds(cls, kind: str, bounds: Sequence[float]) -> "Domain":
        """按配置文件中的 kind + bounds 构造"""
        kind_enum = DomainKind(kind)
        if kind_enum is DomainKind.INTERVAL:
            if len(bounds) != 2:
                raise GeometryError("interval 需要 bounds=[a, b]")
            return cls.interval(*bounds)
        if len(bounds) != 4:
            raise GeometryError("rectangle 需要 bounds=[a1, b1, a2, b2]")
        return cls.rectangle(*bounds)

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def lengths(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.lengths))

    def as_point(self, x) -> np.ndarray:
        """把标量/元组规范成长度 d 的 float64 数组"""
        point = np.atleast_1d(np.asarray(x, dtype=float))
        if point.shape != (self.dimension,):
            raise GeometryError(f"点维数 {point.shape} 与区域维数 {self.dimension} 不匹配")
        return point

    def contains(self, x) -> bool:
        point = self.as_point(x)
        return bool(np.all(point > self.lower) and np.all(point < self.upper))

    def contains_many(self, points: np.ndarray) -> np.ndarray:
        """(m, d) 点阵的逐点开区域判定"""
        points = np.asarray(points, dtype=float).reshape(-1, self.dimension)
        lower = np.asarray(self.lower)
        upper = np.asarray(self.upper)
        return np.all((points > lower) & (points < upper), axis=1)

    def face_gaps(self, points: np.ndarray) -> np.ndarray:
        """
        到各面的有符号距离，列顺序为 (lo_1, hi_1, lo_2, hi_2, ...)
        """
        points = np.asarray(points, dtype=float).reshape(-1, self.dimension)
        gaps = np.empty((points.shape[0], 2 * self.dimension))
        gaps[:, 0::2] = points - np.asarray(self.lower)
        gaps[:, 1::2] = np.asarray(self.upper) - points
        return gaps

    def dist_to_boundary(self, x) -> float:
        """inf_{b∈∂D} |b - x|；矩形即四个坐标间隙的最小值"""
        point = self.as_point(x)
        if not self.contains(point):
            raise GeometryError(f"点 {point} 不在区域内")
        return float(self.face_gaps(point).min())

    def dist_to_boundary_many(self, points: np.ndarray) -> np.ndarray:
        """向量化版本，区域外的点返回 0"""
        return np.clip(self.face_gaps(points).min(axis=1), 0.0, None)

    def project_to_boundary(self, x_prev, x_next) -> np.ndarray:
        """
        线段 [x_prev, x_next] 与 ∂D 的交点中离 x_prev 最近者

        Args:
            x_prev: 区域内的起点
            x_next: 区域外的终点

        Returns:
            边界点（命中坐标精确等于边界值）
        """
        start = self.as_point(x_prev)
        end = self.as_point(x_next)
        return self._segment_exit(start, end)[0]

    def segment_exit_fraction(self, x_prev, x_next) -> float:
        """线段出区域时的参数 s ∈ (0, 1]"""
        return self._segment_exit(self.as_point(x_prev), self.as_point(x_next))[1]

    def _segment_exit(self, start: np.ndarray, end: np.ndarray) -> Tuple[np.ndarray, float]:
        delta = end - start
        best_s, best_axis, best_bound = 1.0, None, None
        for axis in range(self.dimension):
            lo, hi = self.lower[axis], self.upper[axis]
            if end[axis] <= lo:
                bound = lo
            elif end[axis] >= hi:
                bound = hi
            else:
                continue
            s = (bound - start[axis]) / delta[axis] if delta[axis] != 0 else 0.0
            if best_axis is None or s < best_s:
                best_s, best_axis, best_bound = s, axis, bound
        if best_axis is None:
            raise GeometryError("终点仍在区域内，线段与边界无交点")
        hit = start + best_s * delta
        hit[best_axis] = best_bound
        return hit, float(best_s)

    def face_point(self, x_prev, x_next, face: int) -> Tuple[np.ndarray, float]:
        """
        桥修正命中时的边界点与时间比例

        face 编号与 face_gaps 的列一致；比例按两端到该面的距离线性插值。
        """
        start = self.as_point(x_prev)
        end = self.as_point(x_next)
        axis, is_upper = divmod(face, 2)
        bound = self.upper[axis] if is_upper else self.lower[axis]
        a = abs(start[axis] - bound)
        b = abs(end[axis] - bound)
        s = a / (a + b) if a + b > 0 else 0.0
        hit = start + s * (end - start)
        hit[axis] = bound
        return hit, float(s)

    def on_boundary(self, x, tol: float = 1e-12) -> bool:
        point = self.as_point(x)
        inside_closed = np.all(point >= np.asarray(self.lower) - tol) and np.all(point <= np.asarray(self.upper) + tol)
        gaps = np.abs(self.face_gaps(point)).min()
        return bool(inside_closed and gaps <= tol)

    def sample_uniform(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """区域内均匀采样 (size, d)"""
        u = rng.random((size, self.dimension))
        return np.asarray(self.lower) + u * self.lengths

    def grid(self, points_per_axis: int) -> np.ndarray:
        """内部中点网格，用于条件检查"""
        axes = [lo + (np.arange(points_per_axis) + 0.5) * (hi - lo) / points_per_axis
                for lo, hi in zip(self.lower, self.upper)]
        if self.dimension == 1:
            return axes[0][:, None]
        g1, g2 = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([g1.ravel(), g2.ravel()])

    def to_dict(self):
        bounds = []
        for lo, hi in zip(self.lower, self.upper):
            bounds.extend([lo, hi])
        return {"kind": self.kind.value, "bounds": bounds}
