"""
可容许密度类 Ĥ、有限混合初始律 ν 与重定位核 η
以及边界跳跃分解估计量所需的正测度 -½Δm̃ₙ dx 的采样器
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy.special import logsumexp

from engine.exceptions import AdmissibilityError, SamplingError
from engine.geometry import Domain
from engine.measures import EmpiricalMeasure
from engine.spectral import DensityMeasure, SpectralBasis

VALIDATION_GRID = 512
MAX_PROPOSALS = 1_000_000
MAX_SEARCH_CONSTANT = 10.0
NORMALIZATION_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class AdmissibleDensity:
    """
    Ĥ 中的概率密度 d

    h_1/c ≤ d ≤ c·h_1 且 (-λ_1)h_1/c ≤ -½Δd ≤ (-λ_1)c·h_1；K = ∫(-½Δd)dx > 0。
    """
    density: DensityMeasure
    c: float
    K: float
    label: str = ""

    @property
    def basis(self) -> SpectralBasis:
        return self.density.basis

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return self.density.evaluate(points)

    def neg_half_laplacian(self, points: np.ndarray) -> np.ndarray:
        return -self.density.half_laplacian(points)


def _first_mode(basis: SpectralBasis, points: np.ndarray) -> np.ndarray:
    return basis.evaluate(points, [1])[:, 0]


def _ratio_families(d: DensityMeasure, grid_points: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(网格, d/h_1, (-½Δd)/((-λ_1)h_1))"""
    basis = d.basis
    grid = basis.domain.grid(grid_points)
    h1 = _first_mode(basis, grid)
    lam1 = -float(basis.eigenvalues[0])
    density_ratio = d.evaluate(grid) / h1
    laplacian_ratio = -d.half_laplacian(grid) / (lam1 * h1)
    return grid, density_ratio, laplacian_ratio


def admissibility_constant(d: DensityMeasure, grid_points: int = VALIDATION_GRID) -> float:
    """网格上满足可容许条件的最小 c；若某比值非正则为 inf"""
    _, r1, r2 = _ratio_families(d, grid_points)
    ratios = np.concatenate([r1, r2])
    if np.any(ratios <= 0) or not np.all(np.isfinite(ratios)):
        return math.inf
    return float(max(ratios.max(), (1.0 / ratios).max(), 1.0))


def validate_admissible(d: DensityMeasure, c: float, grid_points: int = VALIDATION_GRID,
                        label: str = "") -> AdmissibleDensity:
    """
    检查可容许条件并返回 AdmissibleDensity

    Raises:
        AdmissibilityError: c ≤ 1、非概率密度或网格上越界
    """
    if not c > 1:
        raise AdmissibilityError(f"可容许常数必须大于 1，收到 c={c}")
    total = d.total_integral
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise AdmissibilityError(f"密度积分为 {total:.12g}，不是概率密度")
    grid, r1, r2 = _ratio_families(d, grid_points)
    violations = []
    checks = (
        ("d < h_1/c", r1 < 1.0 / c),
        ("d > c·h_1", r1 > c),
        ("-½Δd < (-λ_1)h_1/c", r2 < 1.0 / c),
        ("-½Δd > (-λ_1)c·h_1", r2 > c),
    )
    for what, mask in checks:
        for point in grid[mask]:
            violations.append((what, tuple(float(v) for v in point)))
    if violations:
        raise AdmissibilityError(f"可容许条件在 {len(violations)} 个网格点不成立 (c={c})", violations)
    K = -float(np.sum(d.basis.eigenvalues * d.coeffs * d.basis.integrals))
    if not K > 0:
        raise AdmissibilityError(f"K = ∫(-½Δd)dx = {K} 非正")
    return AdmissibleDensity(d, float(c), K, label)


def spectral_perturbation(basis: SpectralBasis, coefficients: Union[Mapping[int, float], Sequence[float]],
                          c: Optional[float] = None, grid_points: int = VALIDATION_GRID) -> AdmissibleDensity:
    """
    d ∝ h_1 + Σ_{k≥2} a_k h_k，归一化为概率密度

    Args:
        coefficients: {k: a_k} 或 (a_2, a_3, …)
        c: 可容许常数；为空时自动取网格上的最小值，超过 10 则拒绝
    """
    if isinstance(coefficients, Mapping):
        extra = {int(k): float(a) for k, a in coefficients.items()}
    else:
        extra = {k + 2: float(a) for k, a in enumerate(coefficients)}
    raw = np.zeros(basis.truncation_K)
    raw[0] = 1.0
    for k, a in extra.items():
        if k < 2 or k > basis.truncation_K:
            raise AdmissibilityError(f"扰动模态编号 {k} 不在 [2, {basis.truncation_K}] 内")
        raw[k - 1] = a
    mass = float(np.sum(raw * basis.integrals))
    if not mass > 0:
        raise AdmissibilityError("扰动后的总质量非正")
    d = DensityMeasure(basis, raw / mass, 1.0)
    label = "h1" + "".join(f"{a:+g}h{k}" for k, a in sorted(extra.items()) if a != 0)
    if c is None:
        best = admissibility_constant(d, grid_points)
        if best > MAX_SEARCH_CONSTANT:
            raise AdmissibilityError(f"{label} 所需的最小 c={best:.4g} 超过 {MAX_SEARCH_CONSTANT:g}")
        c = best * (1.0 + 1e-9) if best > 1.0 else 1.0 + 1e-9
        logger.debug(f"{label} 自动确定可容许常数 c={c:.6g}")
    return validate_admissible(d, c, grid_points, label)


@dataclass(frozen=True)
class TiltedProfile:
    """
    倾斜解析族 sin(πu)·e^{b cos(πu)} 的逐点值与 ½Δ

    u = (x-a)/L；矩形上取两个方向的乘积。
    """
    domain: Domain
    tilt: float
    half_laplacian: bool = False

    def _axis(self, x: np.ndarray, axis: int) -> Tuple[np.ndarray, np.ndarray]:
        a = self.domain.lower[axis]
        L = self.domain.lengths[axis]
        b = self.tilt
        theta = math.pi * (x - a) / L
        s, co = np.sin(theta), np.cos(theta)
        norm = (L / math.pi) * (2.0 * math.sinh(b) / b if b != 0 else 2.0)
        g = s * np.exp(b * co) / norm
        half_lap = 0.5 * (math.pi / L) ** 2 * g * (b * b * s * s - 3.0 * b * co - 1.0)
        return g, half_lap

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.domain.dimension)
        factors = [self._axis(points[:, axis], axis) for axis in range(self.domain.dimension)]
        if not self.half_laplacian:
            return np.prod([g for g, _ in factors], axis=0)
        if len(factors) == 1:
            return factors[0][1]
        (g1, l1), (g2, l2) = factors
        return l1 * g2 + g1 * l2


def tilted_density(basis: SpectralBasis, tilt: float, c: Optional[float] = None,
                   grid_points: int = VALIDATION_GRID) -> AdmissibleDensity:
    """解析 Ĥ 族，½Δd 为闭式，作为谱重构的独立基准"""
    domain = basis.domain
    d = DensityMeasure.from_function(basis, TiltedProfile(domain, tilt),
                                     TiltedProfile(domain, tilt, half_laplacian=True))
    d = DensityMeasure(basis, d.coeffs, 1.0, d.density_fn, d.half_laplacian_fn)
    if c is None:
        best = admissibility_constant(d, grid_points)
        if best > MAX_SEARCH_CONSTANT:
            raise AdmissibilityError(f"倾斜参数 {tilt} 所需的最小 c={best:.4g} 超过 {MAX_SEARCH_CONSTANT:g}")
        c = best * (1.0 + 1e-9)
    return validate_admissible(d, c, grid_points, label=f"tilt{tilt:+g}")


def fixed_point_density(basis: SpectralBasis) -> AdmissibleDensity:
    """μ0 = h_1/‖h_1‖_{L¹}"""
    return spectral_perturbation(basis, {})


@dataclass(frozen=True, eq=False)
class InitialLaw:
    """有限混合 ν = Σ w_m δ_{d_m dx}"""
    components: Tuple[Tuple[float, AdmissibleDensity], ...]

    def __post_init__(self):
        if not self.components:
            raise AdmissibilityError("初始律至少需要一个分量")
        weights = np.array([w for w, _ in self.components], dtype=float)
        if np.any(weights < 0) or not weights.sum() > 0:
            raise AdmissibilityError(f"混合权重非法: {weights.tolist()}")
        weights = weights / weights.sum()
        bases = {(d.basis.domain, d.basis.truncation_K) for _, d in self.components}
        if len(bases) != 1:
            raise AdmissibilityError("所有分量必须共享同一谱基")
        object.__setattr__(self, "components",
                           tuple((float(w), d) for w, (_, d) in zip(weights, self.components)))

    @classmethod
    def single(cls, density: AdmissibleDensity) -> "InitialLaw":
        return cls(((1.0, density),))

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components])

    @property
    def densities(self) -> List[AdmissibleDensity]:
        return [d for _, d in self.components]

    @property
    def basis(self) -> SpectralBasis:
        return self.components[0][1].basis

    @property
    def domain(self) -> Domain:
        return self.basis.domain

    @property
    def max_constant(self) -> float:
        return max(d.c for d in self.densities)

    @property
    def K_values(self) -> np.ndarray:
        return np.array([d.K for d in self.densities])


def sample_first_mode(domain: Domain, rng: np.random.Generator, size: int) -> np.ndarray:
    """
    按 h_1/‖h_1‖_{L¹} 采样

    一维逆 CDF：x = a + L·arccos(1-2U)/π；矩形为各方向独立抽样之积。
    """
    u = rng.random((size, domain.dimension))
    return np.asarray(domain.lower) + domain.lengths * np.arccos(1.0 - 2.0 * u) / math.pi


def _rejection_sample(domain: Domain, target, envelope_scale: float, rng: np.random.Generator,
                      size: int, what: str) -> np.ndarray:
    """
    以 envelope_scale·h_1 为包络的拒绝采样

    proposals 超过 MAX_PROPOSALS·⌈size/1000⌉ 时报错。
    """
    basis_h1 = _H1Evaluator(domain)
    budget = MAX_PROPOSALS * max(1, math.ceil(size / 1000))
    accepted: List[np.ndarray] = []
    have = 0
    proposals = 0
    while have < size:
        batch = max(16, int(1.2 * (size - have) * envelope_scale) + 1)
        if proposals + batch > budget:
            batch = budget - proposals
        if batch <= 0:
            raise SamplingError(f"{what} 拒绝采样在 {proposals} 次提议后仍未完成")
        x = sample_first_mode(domain, rng, batch)
        u = rng.random(batch)
        proposals += batch
        ratio = target(x) / (envelope_scale * basis_h1(x))
        keep = x[u <= np.minimum(ratio, 1.0)]
        accepted.append(keep)
        have += keep.shape[0]
    result = np.concatenate(accepted)[:size]
    logger.debug(f"{what} 拒绝采样接受率 {size / proposals:.3f}")
    return result


@dataclass(frozen=True)
class _H1Evaluator:
    """h_1 的闭式取值，不依赖谱基实例"""
    domain: Domain

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.domain.dimension)
        value = np.ones(points.shape[0])
        for axis in range(self.domain.dimension):
            L = self.domain.lengths[axis]
            value = value * math.sqrt(2.0 / L) * np.sin(math.pi * (points[:, axis] - self.domain.lower[axis]) / L)
        return value


def sample_from_density(d: AdmissibleDensity, rng: np.random.Generator, size: int) -> np.ndarray:
    """按 d 采样，包络 c·h_1"""
    return _rejection_sample(d.basis.domain, d.evaluate, d.c, rng, size, f"d[{d.label}]")


def sample_from_neg_laplacian(d: AdmissibleDensity, rng: np.random.Generator, size: int) -> np.ndarray:
    """按 (-½Δd)/K 采样，包络 (-λ_1)c·h_1"""
    lam1 = -float(d.basis.eigenvalues[0])
    return _rejection_sample(d.basis.domain, d.neg_half_laplacian, lam1 * d.c, rng, size, f"-½Δd[{d.label}]")


def choose_component(law: InitialLaw, rng: np.random.Generator) -> int:
    return int(rng.choice(len(law.components), p=law.weights))


def sample_nu_n(law: InitialLaw, n: int, rng: np.random.Generator) -> EmpiricalMeasure:
    """先按权重抽分量 m，再独立抽 n 个 d_m 样本"""
    if n < 1:
        raise SamplingError(f"粒子数必须至少为 1，收到 n={n}")
    m = choose_component(law, rng)
    return EmpiricalMeasure(law.domain, sample_from_density(law.densities[m], rng, n))


@dataclass(frozen=True)
class EtaMixture:
    """
    重新归一化后的 η = Σ ρ_m d_m

    pre_normalization_mass = Σ π_m ℒ_m/K_m，π_m ∝ w_m K_m Π_j d_m(z_j)
    """
    weights: np.ndarray
    pre_normalization_mass: float


def eta_mixture(law: InitialLaw, others: np.ndarray) -> EtaMixture:
    """按构型后验计算混合权重，乘积在对数空间完成"""
    others = np.asarray(others, dtype=float).reshape(-1, law.domain.dimension)
    if others.shape[0] == 0:
        raise SamplingError("混合后验核至少需要一个存活粒子")
    n = others.shape[0] + 1
    with np.errstate(divide="ignore"):
        log_w = np.log(law.weights)
    log_num = np.empty(len(law.components))
    log_den = np.empty(len(law.components))
    for m, d in enumerate(law.densities):
        dens = d.evaluate(others)
        log_prod = float(np.sum(np.log(dens)))
        ell = math.fsum(d.neg_half_laplacian(others) / dens) / n
        log_num[m] = log_w[m] + math.log(ell) + log_prod
        log_den[m] = log_w[m] + math.log(d.K) + log_prod
    rho = np.exp(log_num - logsumexp(log_num))
    pre_mass = float(np.exp(logsumexp(log_num) - logsumexp(log_den)))
    logger.debug(f"η 归一化前质量 {pre_mass:.6f} (n={n})")
    return EtaMixture(rho, pre_mass)


def eta_lll(law: InitialLaw, others: np.ndarray, x) -> np.ndarray:
    """
    η_{n,z{i}}(x)，已归一化

    x 为单点时返回标量。
    """
    mixture = eta_mixture(law, others)
    points = np.asarray(x, dtype=float).reshape(-1, law.domain.dimension)
    values = sum(rho * d.evaluate(points) for rho, d in zip(mixture.weights, law.densities))
    single = np.ndim(x) <= (1 if law.domain.dimension > 1 else 0)
    return float(values[0]) if single else values


@dataclass(frozen=True)
class _MixtureFunction:
    functions: Tuple
    weights: Tuple[float, ...]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return sum(w * fn(points) for w, fn in zip(self.weights, self.functions))


def eta_lll_measure(law: InitialLaw, others: np.ndarray) -> DensityMeasure:
    """η dx 作为密度测度（各分量的凸组合）"""
    mixture = eta_mixture(law, others)
    coeffs = sum(rho * d.density.coeffs for rho, d in zip(mixture.weights, law.densities))
    weights = tuple(float(w) for w in mixture.weights)
    density_fn = _MixtureFunction(tuple(d.evaluate for d in law.densities), weights)
    lap_fn = _MixtureFunction(tuple(d.density.half_laplacian for d in law.densities), weights)
    return DensityMeasure(law.basis, np.asarray(coeffs), 1.0, density_fn, lap_fn)


class KernelKind(Enum):
    """重定位核类型"""
    UNIFORM_SURVIVOR = "uniform_survivor"
    FIXED_H1 = "fixed_h1"
    MIXTURE_POSTERIOR = "mixture_posterior"


@dataclass(frozen=True, eq=False)
class RelocationKernel:
    """
    重定位核

    UNIFORM_SURVIVOR 复制一个随机存活粒子；FIXED_H1 按 h_1/‖h_1‖ 采样；
    MIXTURE_POSTERIOR 按其余 n-1 个粒子对各分量的后验构造 η。
    """
    kind: KernelKind
    domain: Domain
    law: Optional[InitialLaw] = None
    c1: Optional[float] = None

    @classmethod
    def uniform_survivor(cls, domain: Domain) -> "RelocationKernel":
        return cls(KernelKind.UNIFORM_SURVIVOR, domain)

    @classmethod
    def fixed_h1(cls, basis: SpectralBasis) -> "RelocationKernel":
        norm = basis.h1_l1_norm
        return cls(KernelKind.FIXED_H1, basis.domain, c1=max(norm, 1.0 / norm))

    @classmethod
    def mixture_posterior(cls, law: InitialLaw) -> "RelocationKernel":
        return cls(KernelKind.MIXTURE_POSTERIOR, law.domain, law=law, c1=law.max_constant ** 3)

    @classmethod
    def from_kind(cls, kind: Union[str, KernelKind], law: InitialLaw) -> "RelocationKernel":
        kind = KernelKind(kind)
        if kind is KernelKind.UNIFORM_SURVIVOR:
            return cls.uniform_survivor(law.domain)
        if kind is KernelKind.FIXED_H1:
            return cls.fixed_h1(law.basis)
        return cls.mixture_posterior(law)

    def density(self, others: np.ndarray, points: np.ndarray) -> np.ndarray:
        """η 的逐点值（UNIFORM_SURVIVOR 无密度）"""
        if self.kind is KernelKind.FIXED_H1:
            h1 = _H1Evaluator(self.domain)
            pts = np.asarray(points, dtype=float).reshape(-1, self.domain.dimension)
            norm = float(np.prod(2.0 * np.sqrt(2.0 / self.domain.lengths) * self.domain.lengths / math.pi))
            return h1(pts) / norm
        if self.kind is KernelKind.MIXTURE_POSTERIOR:
            return np.atleast_1d(eta_lll(self.law, others, np.asarray(points, dtype=float).reshape(-1, self.domain.dimension)))
        raise SamplingError("UNIFORM_SURVIVOR 核是离散分布，没有密度")

    def k1_violations(self, others: np.ndarray, grid_points: int = VALIDATION_GRID) -> List[Tuple[float, ...]]:
        """可比性条件：c1^{-1}h_1 ≤ η ≤ c1·h_1 在网格上的违例点"""
        grid = self.domain.grid(grid_points)
        ratio = self.density(others, grid) / _H1Evaluator(self.domain)(grid)
        bad = (ratio < 1.0 / self.c1) | (ratio > self.c1)
        return [tuple(float(v) for v in p) for p in grid[bad]]


def sample_relocation(kernel: RelocationKernel, others: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    为命中边界的粒子抽取新位置

    Args:
        kernel: 重定位核
        others: 其余 n-1 个粒子的位置 (n-1, d)
        rng: 该副本的随机流
    """
    others = np.asarray(others, dtype=float).reshape(-1, kernel.domain.dimension)
    if kernel.kind is KernelKind.UNIFORM_SURVIVOR:
        if others.shape[0] == 0:
            raise SamplingError("n=1 时没有存活粒子可供复制")
        return others[int(rng.integers(others.shape[0]))].copy()
    if kernel.kind is KernelKind.FIXED_H1:
        return sample_first_mode(kernel.domain, rng, 1)[0]
    mixture = eta_mixture(kernel.law, others)
    m = int(rng.choice(len(mixture.weights), p=mixture.weights))
    return sample_from_density(kernel.law.densities[m], rng, 1)[0]


def sample_m_bold_n(law: InitialLaw, n: int, rng: np.random.Generator) -> Tuple[EmpiricalMeasure, float]:
    """
    按 -½Δm̃ₙ dx / 总质量 采样一个 n 粒子构型

    m ∝ w_m K_m，i 均匀，z_i ∝ -½Δd_m，其余 z_j 独立服从 d_m；总质量 n·Σ w_m K_m。
    """
    if n < 1:
        raise SamplingError(f"粒子数必须至少为 1，收到 n={n}")
    weighted = law.weights * law.K_values
    total_mass = n * math.fsum(weighted)
    m = int(rng.choice(len(weighted), p=weighted / weighted.sum()))
    i = int(rng.integers(n))
    d = law.densities[m]
    positions = sample_from_density(d, rng, n)
    positions[i] = sample_from_neg_laplacian(d, rng, 1)[0]
    return EmpiricalMeasure(law.domain, positions), total_mass


def law_summary(law: InitialLaw) -> Dict[str, object]:
    """日志与清单用的初始律摘要"""
    return {
        "components": [
            {"weight": w, "label": d.label, "c": d.c, "K": d.K}
            for w, d in law.components
        ],
    }
