"""
谱方法模块
½Δ 的 Dirichlet 特征对、截断热核级数、u/z/v 变换、极限流 U⁺ 以及极限生成元 A = B + C
"""

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from engine.exceptions import FlowBlowUpError, SpectralError
from engine.geometry import Domain, DomainKind
from engine.quadrature import DEFAULT_NODES_PER_AXIS, QuadratureRule
from utils.numerics import compensated_sum, series_eval

DEFAULT_TRUNCATION = 64
OVERFLOW_GUARD = 1e12
SMALL_TIME = 1e-3


@dataclass(frozen=True)
class Mode:
    """单个特征模态：多重指标与特征值 λ（½Δh = λh）"""
    index: Tuple[int, ...]
    eigenvalue: float


class EigenFunction:
    """可调用的 h_k"""

    def __init__(self, basis: "SpectralBasis", k: int):
        self.basis = basis
        self.k = k

    def __call__(self, x) -> np.ndarray:
        points = np.asarray(x, dtype=float).reshape(-1, self.basis.domain.dimension)
        values = self.basis.evaluate(points, modes=[self.k])[:, 0]
        return values[0] if np.ndim(x) <= (1 if self.basis.domain.dimension > 1 else 0) else values


class SpectralBasis:
    """
    区间/矩形上 ½Δ 的 Dirichlet 特征基

    模态按 λ 降序排列（0 > λ_1 > λ_2 ≥ …），对外使用从 1 开始的编号 k。
    区间 (a,b)：h_k = √(2/L)·sin(kπ(x-a)/L)，λ_k = -(kπ/L)²/2；
    矩形为两个方向的张量积。
    """

    def __init__(self, domain: Domain, truncation_K: int = DEFAULT_TRUNCATION,
                 quadrature_nodes: int = DEFAULT_NODES_PER_AXIS):
        if truncation_K < 1:
            raise SpectralError("截断模态数必须为正")
        self.domain = domain
        self.truncation_K = int(truncation_K)
        self.quadrature_nodes = int(quadrature_nodes)
        self.modes: List[Mode] = self._enumerate_modes(domain, self.truncation_K)
        self.multi_index = np.array([m.index for m in self.modes], dtype=int)
        self.eigenvalues = np.array([m.eigenvalue for m in self.modes])
        self.integrals = self._axis_product(self._axis_integral)
        self.sup_norms = np.full(self.truncation_K, math.sqrt(2.0 ** domain.dimension / domain.volume))
        self.lipschitz = self._lipschitz_constants()

    def __getstate__(self):
        state = self.__dict__.copy()
        state.pop("quadrature", None)
        return state

    @staticmethod
    def _enumerate_modes(domain: Domain, K: int) -> List[Mode]:
        lengths = domain.lengths
        if domain.kind is DomainKind.INTERVAL:
            L = lengths[0]
            return [Mode((k,), -0.5 * (k * math.pi / L) ** 2) for k in range(1, K + 1)]
        J = int(math.ceil(math.sqrt(2 * K))) + 2
        while True:
            candidates = []
            for j in range(1, J + 1):
                for k in range(1, J + 1):
                    lam = -0.5 * math.pi ** 2 * ((j / lengths[0]) ** 2 + (k / lengths[1]) ** 2)
                    candidates.append(Mode((j, k), lam))
            candidates.sort(key=lambda m: (-m.eigenvalue, m.index))
            chosen = candidates[:K]
            # 网格外的模态中 λ 最大者为 (J+1,1) 或 (1,J+1)，截断必须严格优于它
            worst = chosen[-1].eigenvalue
            edge = max(
                -0.5 * math.pi ** 2 * (((J + 1) / lengths[0]) ** 2 + (1.0 / lengths[1]) ** 2),
                -0.5 * math.pi ** 2 * ((1.0 / lengths[0]) ** 2 + ((J + 1) / lengths[1]) ** 2),
            )
            if worst > edge:
                return chosen
            J *= 2

    def _axis_product(self, axis_fn: Callable[[int, np.ndarray], np.ndarray]) -> np.ndarray:
        result = np.ones(self.truncation_K)
        for axis in range(self.domain.dimension):
            result = result * axis_fn(axis, self.multi_index[:, axis])
        return result

    def _axis_integral(self, axis: int, ks: np.ndarray) -> np.ndarray:
        L = self.domain.lengths[axis]
        return math.sqrt(2.0 / L) * (L / (ks * math.pi)) * (1.0 - np.cos(ks * math.pi))

    def _lipschitz_constants(self) -> np.ndarray:
        amp = self.sup_norms
        freq_sq = np.zeros(self.truncation_K)
        for axis in range(self.domain.dimension):
            freq_sq = freq_sq + (self.multi_index[:, axis] * math.pi / self.domain.lengths[axis]) ** 2
        return amp * np.sqrt(freq_sq)

    def _check_modes(self, modes: Optional[Sequence[int]]) -> np.ndarray:
        if modes is None:
            return np.arange(self.truncation_K)
        idx = np.asarray(list(modes), dtype=int) - 1
        if idx.size and (idx.min() < 0 or idx.max() >= self.truncation_K):
            raise SpectralError(f"模态编号越界: {list(modes)}，截断 K={self.truncation_K}")
        return idx

    def _axis_factors(self, points: np.ndarray, idx: np.ndarray):
        """各方向的 (sin 因子, cos 因子·频率)"""
        sines, cosines = [], []
        for axis in range(self.domain.dimension):
            L = self.domain.lengths[axis]
            a = self.domain.lower[axis]
            freq = self.multi_index[idx, axis] * math.pi / L
            phase = np.outer(points[:, axis] - a, freq)
            amp = math.sqrt(2.0 / L)
            sines.append(amp * np.sin(phase))
            cosines.append(amp * freq * np.cos(phase))
        return sines, cosines

    def evaluate(self, points: np.ndarray, modes: Optional[Sequence[int]] = None) -> np.ndarray:
        """
        特征函数取值

        Args:
            points: (m, d) 点阵
            modes: 从 1 开始的模态编号，None 表示全部

        Returns:
            (m, len(modes)) 数组
        """
        idx = self._check_modes(modes)
        points = np.asarray(points, dtype=float).reshape(-1, self.domain.dimension)
        sines, _ = self._axis_factors(points, idx)
        values = sines[0]
        for extra in sines[1:]:
            values = values * extra
        return values

    def gradient(self, points: np.ndarray, modes: Optional[Sequence[int]] = None) -> np.ndarray:
        """∇h_k，形状 (m, len(modes), d)"""
        idx = self._check_modes(modes)
        points = np.asarray(points, dtype=float).reshape(-1, self.domain.dimension)
        sines, cosines = self._axis_factors(points, idx)
        d = self.domain.dimension
        grads = np.empty(sines[0].shape + (d,))
        for axis in range(d):
            term = cosines[axis]
            for other in range(d):
                if other != axis:
                    term = term * sines[other]
            grads[..., axis] = term
        return grads

    def eigenpair(self, k: int) -> Tuple[float, EigenFunction]:
        """返回 (λ_k, h_k)"""
        self._check_modes([k])
        return float(self.eigenvalues[k - 1]), EigenFunction(self, k)

    @cached_property
    def quadrature(self) -> QuadratureRule:
        return QuadratureRule(self.domain, self.quadrature_nodes)

    @cached_property
    def h1_l1_norm(self) -> float:
        """‖h_1‖_{L¹}，h_1 > 0 故等于 (h_1, 𝟙)"""
        return float(self.integrals[0])

    def heat_kernel(self, t: float, x, y) -> np.ndarray:
        """
        截断热核 p(t,x,y) = Σ e^{λ_k t} h_k(x) h_k(y)

        x 为单点；y 可以是单点或 (m, d) 点阵。
        """
        if t <= 0:
            raise SpectralError(f"热核要求 t > 0，收到 t={t}")
        if t < SMALL_TIME:
            logger.warning(f"t={t} 小于 {SMALL_TIME}，截断误差上界 {self.truncation_error_bound(t):.3e}")
        x_point = self.domain.as_point(x)
        y_points = np.asarray(y, dtype=float).reshape(-1, self.domain.dimension)
        hx = self.evaluate(x_point[None, :])[0]
        hy = self.evaluate(y_points)
        values = series_eval(hy, np.exp(self.eigenvalues * t) * hx)
        return float(values[0]) if np.ndim(y) <= (1 if self.domain.dimension > 1 else 0) else values

    def survival_probability(self, t: float, x) -> np.ndarray:
        """P_x(τ > t) = Σ e^{λ_k t} h_k(x)(h_k, 𝟙)"""
        if t <= 0:
            raise SpectralError(f"生存概率级数要求 t > 0，收到 t={t}")
        points = np.asarray(x, dtype=float).reshape(-1, self.domain.dimension)
        values = series_eval(self.evaluate(points), np.exp(self.eigenvalues * t) * self.integrals)
        return values

    def face_flux(self, face: int) -> np.ndarray:
        """
        ∫_face ∂h_k/∂n ds（内法向），face 编号同 Domain.face_gaps 列
        """
        d = self.domain.dimension
        if not 0 <= face < 2 * d:
            raise SpectralError(f"面编号越界: {face}")
        axis, is_upper = divmod(face, 2)
        L = self.domain.lengths[axis]
        ks = self.multi_index[:, axis]
        normal = math.sqrt(2.0 / L) * (ks * math.pi / L)
        if is_upper:
            normal = normal * -np.cos(ks * math.pi)
        flux = normal
        for other in range(d):
            if other != axis:
                flux = flux * self._axis_integral(other, self.multi_index[:, other])
        return flux

    def exit_density(self, t: float, x, face: int) -> np.ndarray:
        """(τ, 出口面) 的联合密度 ½ Σ e^{λ_k t} h_k(x) ∫_face ∂_n h_k"""
        if t <= 0:
            raise SpectralError(f"出口密度要求 t > 0，收到 t={t}")
        points = np.asarray(x, dtype=float).reshape(-1, self.domain.dimension)
        return 0.5 * series_eval(self.evaluate(points), np.exp(self.eigenvalues * t) * self.face_flux(face))

    def exit_side_probability(self, x, face: int) -> np.ndarray:
        """出口面概率 ½ Σ h_k(x) ∫_face ∂_n h_k / (-λ_k)（级数收敛慢，宜配合较大截断）"""
        points = np.asarray(x, dtype=float).reshape(-1, self.domain.dimension)
        return 0.5 * series_eval(self.evaluate(points), self.face_flux(face) / (-self.eigenvalues))

    def truncation_error_bound(self, t: float, extra_modes: int = 4096) -> float:
        """截断热核的尾项上界 Σ_{k>K} e^{λ_k t} ‖h_k‖²_∞"""
        if t <= 0:
            return math.inf
        extended = SpectralBasis(self.domain, self.truncation_K + extra_modes, self.quadrature_nodes)
        tail = extended.eigenvalues[self.truncation_K:]
        sup_sq = extended.sup_norms[self.truncation_K:] ** 2
        return float(math.fsum(np.exp(tail * t) * sup_sq))

    def with_truncation(self, K: int) -> "SpectralBasis":
        return SpectralBasis(self.domain, K, self.quadrature_nodes)


@dataclass(frozen=True, eq=False)
class DensityMeasure:
    """
    密度测度 μ = h dx，以谱系数 c_k = (h_k, h) 表示

    解析族可额外携带精确的逐点密度与 ½Δh，用于独立基准。
    """
    basis: SpectralBasis
    coeffs: np.ndarray
    l1_mass: float
    density_fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    half_laplacian_fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)

    @classmethod
    def from_coefficients(cls, basis: SpectralBasis, coeffs: Sequence[float],
                          l1_mass: Optional[float] = None) -> "DensityMeasure":
        full = np.zeros(basis.truncation_K)
        given = np.asarray(coeffs, dtype=float)
        if given.size > basis.truncation_K:
            raise SpectralError(f"系数个数 {given.size} 超过截断 K={basis.truncation_K}")
        full[:given.size] = given
        measure = cls(basis, full, 1.0)
        if l1_mass is None:
            l1_mass = measure.quadrature_l1()
        return cls(basis, full, float(l1_mass))

    @classmethod
    def from_function(cls, basis: SpectralBasis, density: Callable[[np.ndarray], np.ndarray],
                      half_laplacian: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> "DensityMeasure":
        """按求积投影得到系数，并保留精确函数"""
        rule = basis.quadrature
        values = density(rule.points)
        coeffs = rule.integrate_values(values[:, None] * basis.evaluate(rule.points))
        l1 = float(rule.integrate_values(np.abs(values)))
        return cls(basis, np.asarray(coeffs), l1, density, half_laplacian)

    @classmethod
    def zero(cls, basis: SpectralBasis) -> "DensityMeasure":
        return cls(basis, np.zeros(basis.truncation_K), 0.0)

    @classmethod
    def h1_normalized(cls, basis: SpectralBasis) -> "DensityMeasure":
        """μ0 = h_1/‖h_1‖_{L¹} dx，极限流的不动点"""
        coeffs = np.zeros(basis.truncation_K)
        coeffs[0] = 1.0 / basis.h1_l1_norm
        return cls(basis, coeffs, 1.0)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coeffs) and self.density_fn is None

    @property
    def active_modes(self) -> np.ndarray:
        return np.flatnonzero(self.coeffs) + 1

    @property
    def total_integral(self) -> float:
        """∫h dx = Σ c_k (h_k, 𝟙)"""
        return float(compensated_sum(self.coeffs * self.basis.integrals))

    def pair(self, k: int) -> float:
        self.basis._check_modes([k])
        return float(self.coeffs[k - 1])

    def series_evaluate(self, points: np.ndarray) -> np.ndarray:
        modes = self.active_modes
        points = np.asarray(points, dtype=float).reshape(-1, self.basis.domain.dimension)
        if modes.size == 0:
            return np.zeros(points.shape[0])
        return series_eval(self.basis.evaluate(points, modes), self.coeffs[modes - 1])

    def series_half_laplacian(self, points: np.ndarray) -> np.ndarray:
        """½Δh = Σ λ_k c_k h_k"""
        modes = self.active_modes
        points = np.asarray(points, dtype=float).reshape(-1, self.basis.domain.dimension)
        if modes.size == 0:
            return np.zeros(points.shape[0])
        weights = self.coeffs[modes - 1] * self.basis.eigenvalues[modes - 1]
        return series_eval(self.basis.evaluate(points, modes), weights)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        if self.density_fn is not None:
            return np.asarray(self.density_fn(np.asarray(points, dtype=float).reshape(-1, self.basis.domain.dimension)))
        return self.series_evaluate(points)

    def half_laplacian(self, points: np.ndarray) -> np.ndarray:
        if self.half_laplacian_fn is not None:
            return np.asarray(self.half_laplacian_fn(np.asarray(points, dtype=float).reshape(-1, self.basis.domain.dimension)))
        return self.series_half_laplacian(points)

    def quadrature_l1(self) -> float:
        rule = self.basis.quadrature
        return float(rule.integrate_values(np.abs(self.evaluate(rule.points))))

    def h_norm(self) -> float:
        """H(0) 范数代理 (Σ λ_k² c_k²)^{1/2}"""
        return float(np.sqrt(compensated_sum((self.basis.eigenvalues * self.coeffs) ** 2)))

    def scaled(self, factor: float) -> "DensityMeasure":
        density_fn = _Scaled(self.density_fn, factor) if self.density_fn is not None else None
        lap_fn = _Scaled(self.half_laplacian_fn, factor) if self.half_laplacian_fn is not None else None
        return DensityMeasure(self.basis, self.coeffs * factor, abs(factor) * self.l1_mass, density_fn, lap_fn)

    def normalized(self) -> "DensityMeasure":
        total = self.total_integral
        if total <= 0:
            raise SpectralError("密度积分非正，无法归一化")
        return self.scaled(1.0 / total)


@dataclass(frozen=True)
class _Scaled:
    """可序列化的函数缩放包装"""
    fn: Callable[[np.ndarray], np.ndarray]
    factor: float

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.factor * np.asarray(self.fn(points))


def _evolved_coefficients(mu: DensityMeasure, t: float) -> np.ndarray:
    """e^{λ_k t} c_k，逆向时做溢出保护"""
    if t == 0:
        return mu.coeffs.copy()
    active = mu.coeffs != 0
    with np.errstate(over="ignore", invalid="ignore"):
        factors = np.exp(mu.basis.eigenvalues * t)
        evolved = np.where(active, mu.coeffs * factors, 0.0)
    if t < 0:
        if not np.all(np.isfinite(evolved)) or np.any(np.abs(evolved) > OVERFLOW_GUARD):
            raise FlowBlowUpError(f"逆向演化 t={t} 系数超过保护阈值 {OVERFLOW_GUARD:g}")
    return evolved


def u_z_v(mu: DensityMeasure, t: float) -> Tuple[np.ndarray, float, DensityMeasure]:
    """
    u(t,·) 的系数、z(μ,t) 与 v(t,·)

    z = Σ e^{λ_k t} c_k (h_k,𝟙) / |μ|(D)，v = u / z。
    零密度约定：u = v = 0，z = 1。
    """
    if mu.is_zero:
        return np.zeros(mu.basis.truncation_K), 1.0, DensityMeasure.zero(mu.basis)
    u = _evolved_coefficients(mu, t)
    z = float(compensated_sum(u * mu.basis.integrals)) / mu.l1_mass
    if not z > 0:
        raise SpectralError(f"z(μ,{t}) = {z} 非正，μ 不在流的定义域内")
    v = DensityMeasure(mu.basis, u / z, mu.l1_mass)
    return u, z, v


def z_prime_zero(mu: DensityMeasure) -> float:
    """z'(μ,0) = ∫½Δh dy / |μ|(D) = Σ λ_k c_k (h_k,𝟙) / |μ|(D)"""
    if mu.is_zero:
        return 0.0
    return float(compensated_sum(mu.basis.eigenvalues * mu.coeffs * mu.basis.integrals)) / mu.l1_mass


def z_prime_bound(mu: DensityMeasure) -> float:
    """|z'(μ,0)| 的上界 ½|D|^{1/2}‖Δh‖ / |μ|(D)"""
    if mu.is_zero:
        return 0.0
    return math.sqrt(mu.basis.domain.volume) * mu.h_norm() / mu.l1_mass


def flow(mu: DensityMeasure, t: float) -> DensityMeasure:
    """
    极限流 U⁺(t, μ) = z(μ,t)^{-1} Σ e^{λ_j t}(h_j, μ) h_j dy

    t ∈ [-1, 0) 时为逆向演化，超过保护阈值即报错。
    """
    if t < -1:
        raise FlowBlowUpError(f"逆向流只在 t ≥ -1 上定义，收到 t={t}")
    if t == 0:
        return mu
    return u_z_v(mu, t)[2]


def _cylinder_terms(f, mu: DensityMeasure) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(∂φ/∂x_i, (h_{m_i}, μ), λ_{m_i})"""
    idx = np.asarray(f.mode_indices, dtype=int) - 1
    mu.basis._check_modes(f.mode_indices)
    args = mu.coeffs[idx]
    return np.asarray(f.gradient(args), dtype=float), args, mu.basis.eigenvalues[idx]


def operator_B(f, mu: DensityMeasure) -> float:
    """Bf(μ) = Σ ∂φ/∂x_i · λ_i (h_i, μ)"""
    grad, args, lams = _cylinder_terms(f, mu)
    return float(math.fsum(grad * lams * args))


def operator_C(f, mu: DensityMeasure) -> float:
    """Cf(μ) = -z'(μ,0) · Σ ∂φ/∂x_i · (h_i, μ)"""
    grad, args, _ = _cylinder_terms(f, mu)
    return -z_prime_zero(mu) * float(math.fsum(grad * args))


def generator_A(f, mu: DensityMeasure) -> float:
    """Af(μ) = Σ ∂φ/∂x_i · (h_i, μ)(λ_i - z'(μ,0))"""
    grad, args, lams = _cylinder_terms(f, mu)
    return float(math.fsum(grad * args * (lams - z_prime_zero(mu))))


def operator_B_linear(k_coeffs: Sequence[float], mu: DensityMeasure) -> float:
    """线性泛函 f = (k, ·) 的 Bf = (k, ½Δμ) = Σ λ_j (h_j,k)(h_j,μ)"""
    k_full = np.zeros(mu.basis.truncation_K)
    k_given = np.asarray(k_coeffs, dtype=float)
    k_full[:k_given.size] = k_given
    return float(compensated_sum(mu.basis.eigenvalues * k_full * mu.coeffs))


def operator_C_linear(k_coeffs: Sequence[float], mu: DensityMeasure) -> float:
    """线性泛函 f = (k, ·) 的 Cf = -z'(0)(k, μ)"""
    k_full = np.zeros(mu.basis.truncation_K)
    k_given = np.asarray(k_coeffs, dtype=float)
    k_full[:k_given.size] = k_given
    return -z_prime_zero(mu) * float(compensated_sum(k_full * mu.coeffs))


def delta_Af_identity(mu: DensityMeasure) -> Tuple[float, float]:
    """
    (Σ λ_k (h_k,d)(h_k,𝟙), ∫½Δd dx)

    右端用逐点 ½Δd 做求积，对解析族即为与谱系数无关的独立计算。
    """
    lhs = float(compensated_sum(mu.basis.eigenvalues * mu.coeffs * mu.basis.integrals))
    rhs = mu.basis.quadrature.integrate(mu.half_laplacian)
    return lhs, float(rhs)


def flow_coefficient_table(mu: DensityMeasure, times: Sequence[float]) -> List[Tuple[float, float, np.ndarray]]:
    """(t, z(t), v(t) 系数) 列表，供命令行导出"""
    rows = []
    for t in times:
        if t < -1:
            raise FlowBlowUpError(f"逆向流只在 t ≥ -1 上定义，收到 t={t}")
        _, z, v = u_z_v(mu, t)
        rows.append((float(t), z, v.coeffs.copy()))
    return rows
