"""
状态空间 E 上的测度与泛函
经验测度、边界坍缩度量 r、配对 (h_k, μ)、柱函数与离散生成元 ½𝔏
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from engine.exceptions import GeometryError, SpectralError
from engine.geometry import Domain
from engine.spectral import DensityMeasure, SpectralBasis


class _BoundaryPoint:
    """坍缩后的边界 ∂D，作为单个点"""
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "BOUNDARY"

    def __reduce__(self):
        return (_BoundaryPoint, ())


BOUNDARY = _BoundaryPoint()


def metric_r(domain: Domain, x, y) -> float:
    """
    r(x,y) = |x-y| ∧ (dist(x,∂D) + dist(y,∂D))，r(∂D,∂D) = 0

    x、y 为区域内的点或 BOUNDARY。
    """
    x_is_b = x is BOUNDARY
    y_is_b = y is BOUNDARY
    if x_is_b and y_is_b:
        return 0.0
    if x_is_b:
        return domain.dist_to_boundary(y)
    if y_is_b:
        return domain.dist_to_boundary(x)
    px, py = domain.as_point(x), domain.as_point(y)
    direct = float(np.linalg.norm(px - py))
    return min(direct, domain.dist_to_boundary(px) + domain.dist_to_boundary(py))


def metric_r_many(domain: Domain, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """逐行向量化的 r，区域外（含边界上）的点视为 ∂D"""
    xs = np.asarray(xs, dtype=float).reshape(-1, domain.dimension)
    ys = np.asarray(ys, dtype=float).reshape(-1, domain.dimension)
    dx = domain.dist_to_boundary_many(xs)
    dy = domain.dist_to_boundary_many(ys)
    direct = np.linalg.norm(xs - ys, axis=1)
    both_boundary = (dx == 0) & (dy == 0)
    return np.where(both_boundary, 0.0, np.minimum(direct, dx + dy))


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """
    经验测度 (1/n)Σδ_{z_j}

    boundary 为真的原子代表坍缩后的 ∂D；positions 中对应行保留命中点坐标，仅用于记录。
    """
    domain: Domain
    positions: np.ndarray
    boundary: np.ndarray = field(default=None)

    def __post_init__(self):
        positions = np.array(self.positions, dtype=float).reshape(-1, self.domain.dimension)
        if positions.shape[0] == 0:
            raise GeometryError("经验测度至少需要一个原子")
        boundary = (np.zeros(positions.shape[0], dtype=bool) if self.boundary is None
                    else np.array(self.boundary, dtype=bool).reshape(-1))
        if boundary.shape[0] != positions.shape[0]:
            raise GeometryError("边界标记与原子个数不一致")
        positions.setflags(write=False)
        boundary.setflags(write=False)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "boundary", boundary)

    @property
    def n(self) -> int:
        return int(self.positions.shape[0])

    @property
    def has_boundary_atom(self) -> bool:
        return bool(self.boundary.any())

    @property
    def interior_positions(self) -> np.ndarray:
        return self.positions[~self.boundary]

    def atoms(self) -> List[Union[np.ndarray, _BoundaryPoint]]:
        return [BOUNDARY if b else p.copy() for p, b in zip(self.positions, self.boundary)]

    def with_atom(self, index: int, point, on_boundary: bool = False) -> "EmpiricalMeasure":
        positions = self.positions.copy()
        boundary = self.boundary.copy()
        positions[index] = self.domain.as_point(point)
        boundary[index] = on_boundary
        return EmpiricalMeasure(self.domain, positions, boundary)

    def others(self, index: int) -> np.ndarray:
        """去掉第 index 个原子后的位置"""
        return np.delete(self.positions, index, axis=0)

    def integrate(self, fn, boundary_value: float = 0.0) -> float:
        """∫ f dμ，边界原子取 f 的边界值"""
        values = np.zeros(self.n)
        interior = ~self.boundary
        if interior.any():
            values[interior] = np.asarray(fn(self.positions[interior]), dtype=float)
        values[self.boundary] = boundary_value
        return math.fsum(values) / self.n

    def pair_vector(self, basis: SpectralBasis, modes: Sequence[int]) -> np.ndarray:
        """((h_{m_1},μ), …, (h_{m_r},μ))，边界原子贡献 0"""
        interior = self.positions[~self.boundary]
        if interior.shape[0] == 0:
            return np.zeros(len(modes))
        values = basis.evaluate(interior, modes)
        return np.array([math.fsum(col) for col in values.T]) / self.n

    def to_frame(self) -> pd.DataFrame:
        """每个原子一行：x1[,x2], boundary"""
        data = {f"x{axis + 1}": self.positions[:, axis] for axis in range(self.domain.dimension)}
        data["boundary"] = self.boundary.astype(int)
        return pd.DataFrame(data)

    @classmethod
    def from_frame(cls, domain: Domain, frame: pd.DataFrame) -> "EmpiricalMeasure":
        columns = [f"x{axis + 1}" for axis in range(domain.dimension)]
        missing = [c for c in columns + ["boundary"] if c not in frame.columns]
        if missing:
            raise GeometryError(f"经验测度表缺少列: {missing}")
        return cls(domain, frame[columns].to_numpy(dtype=float), frame["boundary"].to_numpy().astype(bool))


def pair(k: int, mu: Union[EmpiricalMeasure, DensityMeasure], basis: Optional[SpectralBasis] = None) -> float:
    """
    (h_k, μ)

    密度测度直接取系数 c_k；经验测度为原子平均，边界原子贡献 0。
    """
    if isinstance(mu, DensityMeasure):
        return mu.pair(k)
    if basis is None:
        raise SpectralError("经验测度的配对需要提供谱基")
    return float(mu.pair_vector(basis, [k])[0])


def pair_vector(modes: Sequence[int], mu: Union[EmpiricalMeasure, DensityMeasure],
                basis: Optional[SpectralBasis] = None) -> np.ndarray:
    if isinstance(mu, DensityMeasure):
        mu.basis._check_modes(modes)
        return mu.coeffs[np.asarray(modes, dtype=int) - 1].copy()
    if basis is None:
        raise SpectralError("经验测度的配对需要提供谱基")
    return mu.pair_vector(basis, modes)


@dataclass(frozen=True)
class PolynomialPhi:
    """
    多项式 φ(x) = Σ coef·Π x_i^{p_i}

    梯度与 Hessian 解析给出，可序列化后送入进程池。
    """
    terms: Tuple[Tuple[float, Tuple[int, ...]], ...]

    def __post_init__(self):
        terms = tuple((float(c), tuple(int(p) for p in powers)) for c, powers in self.terms)
        if not terms:
            raise ValueError("多项式至少需要一项")
        widths = {len(p) for _, p in terms}
        if len(widths) != 1:
            raise ValueError("各项的变量个数不一致")
        if any(p < 0 for _, powers in terms for p in powers):
            raise ValueError("幂次必须非负")
        object.__setattr__(self, "terms", terms)

    @property
    def r(self) -> int:
        return len(self.terms[0][1])

    @property
    def degree(self) -> int:
        return max(sum(p) for _, p in self.terms)

    @classmethod
    def constant(cls, value: float, r: int = 1) -> "PolynomialPhi":
        return cls(((value, (0,) * r),))

    @classmethod
    def linear(cls, r: int = 1, index: int = 0, coef: float = 1.0) -> "PolynomialPhi":
        powers = [0] * r
        powers[index] = 1
        return cls(((coef, tuple(powers)),))

    @classmethod
    def square(cls, r: int = 1, index: int = 0) -> "PolynomialPhi":
        powers = [0] * r
        powers[index] = 2
        return cls(((1.0, tuple(powers)),))

    def __call__(self, x: Sequence[float]) -> float:
        x = np.asarray(x, dtype=float)
        return math.fsum(c * float(np.prod(x ** np.asarray(p))) for c, p in self.terms)

    def gradient(self, x: Sequence[float]) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        grad = np.zeros(self.r)
        for c, powers in self.terms:
            p = np.asarray(powers)
            for i in range(self.r):
                if p[i] == 0:
                    continue
                q = p.copy()
                q[i] -= 1
                grad[i] += c * p[i] * float(np.prod(x ** q))
        return grad

    def hessian(self, x: Sequence[float]) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        hess = np.zeros((self.r, self.r))
        for c, powers in self.terms:
            p = np.asarray(powers)
            for i in range(self.r):
                for j in range(self.r):
                    q = p.copy()
                    factor = q[i]
                    q[i] -= 1
                    if factor == 0:
                        continue
                    factor *= q[j]
                    q[j] -= 1
                    if factor == 0:
                        continue
                    hess[i, j] += c * factor * float(np.prod(x ** q))
        return hess


@dataclass(frozen=True)
class CylinderFunction:
    """柱函数 f(μ) = φ((h_{m_1},μ), …, (h_{m_r},μ))"""
    phi: PolynomialPhi
    mode_indices: Tuple[int, ...]
    name: str = ""

    def __post_init__(self):
        modes = tuple(int(m) for m in self.mode_indices)
        if len(modes) != self.phi.r:
            raise ValueError(f"φ 的变量个数 {self.phi.r} 与模态个数 {len(modes)} 不一致")
        if any(m < 1 for m in modes):
            raise ValueError("模态编号从 1 开始")
        object.__setattr__(self, "mode_indices", modes)
        if not self.name:
            object.__setattr__(self, "name", "f_" + "_".join(str(m) for m in modes))

    @property
    def r(self) -> int:
        return len(self.mode_indices)

    @classmethod
    def mode_pairing(cls, k: int) -> "CylinderFunction":
        """线性泛函 (h_k, ·)"""
        return cls(PolynomialPhi.linear(), (k,), name=f"h_{k}")

    @classmethod
    def mode_square(cls, k: int) -> "CylinderFunction":
        return cls(PolynomialPhi.square(), (k,), name=f"h_{k}_sq")

    @classmethod
    def constant_one(cls) -> "CylinderFunction":
        return cls(PolynomialPhi.constant(1.0), (1,), name="one")

    def arguments(self, mu, basis: Optional[SpectralBasis] = None) -> np.ndarray:
        return pair_vector(self.mode_indices, mu, basis)

    def __call__(self, mu, basis: Optional[SpectralBasis] = None) -> float:
        return self.phi(self.arguments(mu, basis))

    def gradient(self, args: Sequence[float]) -> np.ndarray:
        return self.phi.gradient(args)

    def hessian(self, args: Sequence[float]) -> np.ndarray:
        return self.phi.hessian(args)

    def lifted(self, basis: SpectralBasis, points: np.ndarray) -> float:
        """D^n 上的提升函数 φ((1/n)Σ h(z_j))，z 全部在区域内部"""
        return self(EmpiricalMeasure(basis.domain, points), basis)

    def bounds_on_box(self, basis: SpectralBasis, rng: np.random.Generator,
                      samples: int = 2000) -> dict:
        """
        在可达参数盒 [-‖h‖∞, ‖h‖∞]^r 上抽样估计 |φ|、|∇φ|、‖∇²φ‖ 的上确界
        """
        idx = np.asarray(self.mode_indices) - 1
        box = basis.sup_norms[idx]
        draws = rng.uniform(-1.0, 1.0, size=(samples, self.r)) * box
        corners = np.array(np.meshgrid(*[[-b, b] for b in box])).reshape(self.r, -1).T
        draws = np.vstack([draws, corners])
        values = np.array([abs(self.phi(x)) for x in draws])
        grads = np.array([np.abs(self.phi.gradient(x)).max() for x in draws])
        hessians = np.array([np.abs(self.phi.hessian(x)).max() for x in draws])
        return {
            "sup_phi": float(values.max()),
            "sup_grad": float(grads.max()),
            "sup_hessian": float(hessians.max()),
        }


def discrete_generator(f: CylinderFunction, mu: EmpiricalMeasure, basis: SpectralBasis) -> float:
    """
    ½𝔏f(μ) = Σ λ_i ∂φ/∂x_i (h_i,μ) + (1/2n) ΣΣ ∂²φ/∂x_i∂x_j (∇h_i·∇h_j, μ)

    即提升函数在 D^n 上的 ½Δ。
    """
    if mu.has_boundary_atom:
        raise GeometryError("离散生成元要求全部原子在区域内部")
    args = mu.pair_vector(basis, f.mode_indices)
    idx = np.asarray(f.mode_indices) - 1
    grad = f.gradient(args)
    hess = f.hessian(args)
    first = math.fsum(basis.eigenvalues[idx] * grad * args)
    grads = basis.gradient(mu.positions, f.mode_indices)        # (n, r, d)
    gram = np.einsum("nid,njd->ij", grads, grads) / mu.n        # (∇h_i·∇h_j, μ)
    second = math.fsum((hess * gram).ravel()) / (2.0 * mu.n)
    return first + second


class AtomCutoffFunction:
    """
    逐原子截断之积 f(μ) = Π_j min(1, dist(z_j,∂D)/width)

    任一原子位于 ∂D 时取 0。
    """

    def __init__(self, width: float):
        if width <= 0:
            raise ValueError("截断宽度必须为正")
        self.width = float(width)
        self.name = f"cutoff_{width:g}"

    def __call__(self, mu: EmpiricalMeasure, basis: Optional[SpectralBasis] = None) -> float:
        if mu.has_boundary_atom:
            return 0.0
        ratios = np.minimum(1.0, mu.domain.dist_to_boundary_many(mu.positions) / self.width)
        return float(np.exp(np.sum(np.log(ratios))))


class EigenTestFunction:
    """clip(h_k / Lip(h_k), -1, 1)，关于 r 为 1-Lipschitz，边界值 0"""

    def __init__(self, basis: SpectralBasis, k: int):
        basis._check_modes([k])
        self.basis = basis
        self.k = k
        self.scale = 1.0 / float(basis.lipschitz[k - 1])

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.clip(self.basis.evaluate(points, [self.k])[:, 0] * self.scale, -1.0, 1.0)


class TentTestFunction:
    """max(0, min(w - |x-c|, dist(x,∂D)))，关于 r 为 1-Lipschitz，边界值 0"""

    def __init__(self, domain: Domain, center: Sequence[float], width: float):
        self.domain = domain
        self.center = domain.as_point(center)
        self.width = float(width)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.domain.dimension)
        bump = self.width - np.linalg.norm(points - self.center, axis=1)
        return np.maximum(0.0, np.minimum(bump, self.domain.dist_to_boundary_many(points)))


def default_bl_dictionary(basis: SpectralBasis, eigen_count: int = 8, tent_count: int = 8) -> list:
    """前 8 个缩放特征函数 + 8 个帐篷函数"""
    domain = basis.domain
    dictionary: list = [EigenTestFunction(basis, k) for k in range(1, min(eigen_count, basis.truncation_K) + 1)]
    width = min(1.0, float(domain.lengths.min()) / 4.0)
    if domain.dimension == 1:
        centers = domain.grid(tent_count)
    else:
        side = int(math.ceil(math.sqrt(tent_count)))
        centers = domain.grid(side)[:tent_count]
    dictionary.extend(TentTestFunction(domain, c, width) for c in centers)
    return dictionary


def integrate_test_function(fn, mu: Union[EmpiricalMeasure, DensityMeasure]) -> float:
    if isinstance(mu, EmpiricalMeasure):
        return mu.integrate(fn, boundary_value=0.0)
    return mu.basis.quadrature.integrate(lambda pts: fn(pts) * mu.evaluate(pts))


def bl_distance(mu1, mu2, dictionary: Sequence) -> float:
    """
    字典上的有界 Lipschitz 距离 max_f |∫f dμ1 - ∫f dμ2|（真实 BL 距离的下界）
    """
    if len(dictionary) == 0:
        raise ValueError("BL 字典为空")
    return max(abs(integrate_test_function(fn, mu1) - integrate_test_function(fn, mu2)) for fn in dictionary)
