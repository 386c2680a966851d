"""
运行配置
JSON 配置文件的模式校验（pydantic）、预设合并、覆盖项与配置哈希
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config.preset_configs import preset_manager
from engine.exceptions import AdmissibilityError, ConfigError, GeometryError
from engine.geometry import Domain
from engine.kernels import (
    InitialLaw,
    KernelKind,
    RelocationKernel,
    spectral_perturbation,
    tilted_density,
)
from engine.measures import CylinderFunction, PolynomialPhi
from engine.spectral import SpectralBasis
from utils.file_utils import content_hash, read_json


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainSpec(_Strict):
    kind: Literal["interval", "rectangle"]
    bounds: List[float]

    @model_validator(mode="after")
    def _check_bounds(self):
        expected = 2 if self.kind == "interval" else 4
        if len(self.bounds) != expected:
            raise ValueError(f"{self.kind} 需要 {expected} 个边界值")
        pairs = zip(self.bounds[0::2], self.bounds[1::2])
        if any(not lo < hi for lo, hi in pairs):
            raise ValueError(f"边界必须满足 a < b: {self.bounds}")
        return self


class ComponentSpec(_Strict):
    """混合分量：谱扰动系数 {k: a_k}，或解析倾斜族 tilt"""
    weight: float = Field(ge=0.0)
    coefficients: Dict[int, float] = Field(default_factory=dict)
    c: Optional[float] = Field(default=None, gt=1.0)
    tilt: Optional[float] = None

    @model_validator(mode="after")
    def _one_family(self):
        if self.tilt is not None and self.coefficients:
            raise ValueError("tilt 与 coefficients 不能同时给出")
        if any(k < 2 for k in self.coefficients):
            raise ValueError("扰动系数的模态编号从 2 开始")
        return self


class TermSpec(_Strict):
    coef: float
    powers: List[int]


class ObservableSpec(_Strict):
    modes: List[int] = Field(min_length=1)
    terms: Optional[List[TermSpec]] = None
    name: Optional[str] = None

    @field_validator("modes")
    @classmethod
    def _positive_modes(cls, modes: List[int]) -> List[int]:
        if any(m < 1 for m in modes):
            raise ValueError("模态编号从 1 开始")
        return modes


class RunConfig(_Strict):
    """运行配置，未知字段一律拒绝"""
    preset: Optional[str] = None
    domain: DomainSpec
    truncation_K: int = Field(default=64, ge=1)
    quadrature_nodes: int = Field(default=256, ge=32)
    initial_law: List[ComponentSpec] = Field(min_length=1)
    kernel: KernelKind = KernelKind.MIXTURE_POSTERIOR
    n_list: List[int] = Field(default_factory=lambda: [50, 200, 800], min_length=1)
    replicas: int = Field(default=200, ge=1)
    dt: float = Field(default=1e-4, gt=0.0)
    horizon: float = Field(default=1.0, gt=0.0)
    output_stride: Optional[float] = Field(default=None, gt=0.0)
    t: float = Field(default=0.25, ge=0.0)
    beta: float = Field(default=2.0, gt=0.0)
    flow_times: List[float] = Field(default_factory=lambda: [0.0, 0.25, 0.5, 1.0])
    observables: List[ObservableSpec] = Field(default_factory=list)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    output_dir: str = "outputs"
    calibration_paths: int = Field(default=100_000, ge=1)
    calibration_dt: float = Field(default=1e-3, gt=0.0)

    @field_validator("n_list")
    @classmethod
    def _valid_n(cls, n_list: List[int]) -> List[int]:
        if any(n < 1 for n in n_list):
            raise ValueError(f"粒子数必须至少为 1: {n_list}")
        if any(b <= a for a, b in zip(n_list, n_list[1:])):
            raise ValueError(f"n_list 必须严格递增: {n_list}")
        return n_list

    @field_validator("flow_times")
    @classmethod
    def _valid_times(cls, times: List[float]) -> List[float]:
        if any(t < -1 for t in times):
            raise ValueError("流的时间必须不小于 -1")
        return times

    @model_validator(mode="after")
    def _check_observables(self):
        for obs in self.observables:
            if obs.terms and any(len(term.powers) != len(obs.modes) for term in obs.terms):
                raise ValueError(f"观测量 {obs.modes} 的幂次长度与模态个数不一致")
            if any(m > self.truncation_K for m in obs.modes):
                raise ValueError(f"观测量模态 {obs.modes} 超过截断 K={self.truncation_K}")
        if self.output_stride is not None and self.output_stride > self.horizon:
            raise ValueError("output_stride 不能大于 horizon")
        return self


def _deep_merge(base: Dict[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def resolve_run_config(data: Mapping[str, Any], *overrides: Mapping[str, Any]) -> RunConfig:
    """
    按 预设 < 文件 < 环境变量 < 命令行 的顺序合并并校验

    Raises:
        ConfigError: 模式或语义校验失败
    """
    data = dict(data)
    preset = data.get("preset")
    merged: Dict[str, Any] = {}
    if preset is not None:
        try:
            merged = preset_manager.defaults(preset)
        except KeyError as e:
            raise ConfigError(str(e.args[0])) from e
        merged["preset"] = preset
    merged = _deep_merge(merged, data)
    for layer in overrides:
        merged = _deep_merge(merged, {k: v for k, v in layer.items() if v is not None})
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigError(f"运行配置校验失败:\n{e}") from e


def load_run_config(path: Optional[Path], *overrides: Mapping[str, Any], preset: Optional[str] = None) -> RunConfig:
    """
    读取 JSON 配置文件

    path 为空时所有字段来自 preset；命令行给出的 preset 覆盖文件中的 preset。
    """
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            data = read_json(Path(path))
        except FileNotFoundError as e:
            raise ConfigError(f"配置文件不存在: {path}") from e
        except ValueError as e:
            raise ConfigError(f"配置文件不是合法 JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError("配置文件顶层必须是对象")
    if preset is not None:
        data["preset"] = preset
    return resolve_run_config(data, *overrides)


def config_hash(cfg: RunConfig) -> str:
    return content_hash(cfg.model_dump(mode="json"))


@dataclass
class RunSetup:
    """由配置构造出的不可变数值对象"""
    config: RunConfig
    domain: Domain
    basis: SpectralBasis
    law: InitialLaw
    kernel: RelocationKernel
    observables: List[CylinderFunction]


def build_observable(spec: ObservableSpec) -> CylinderFunction:
    r = len(spec.modes)
    if spec.terms:
        phi = PolynomialPhi(tuple((term.coef, tuple(term.powers)) for term in spec.terms))
    else:
        phi = PolynomialPhi.linear(r) if r == 1 else PolynomialPhi(((1.0, (1,) * r),))
    name = spec.name or ("h_" + "_".join(str(m) for m in spec.modes))
    return CylinderFunction(phi, tuple(spec.modes), name=name)


def build_setup(cfg: RunConfig) -> RunSetup:
    """
    构造谱基、初始律、重定位核与观测量

    Raises:
        ConfigError: 区域或分量不合法
    """
    try:
        domain = Domain.from_bounds(cfg.domain.kind, cfg.domain.bounds)
        basis = SpectralBasis(domain, cfg.truncation_K, cfg.quadrature_nodes)
        components = []
        for spec in cfg.initial_law:
            if spec.tilt is not None:
                density = tilted_density(basis, spec.tilt, spec.c)
            else:
                density = spectral_perturbation(basis, spec.coefficients, spec.c)
            components.append((spec.weight, density))
        law = InitialLaw(tuple(components))
    except (GeometryError, AdmissibilityError) as e:
        raise ConfigError(f"初始律构造失败: {e}") from e
    kernel = RelocationKernel.from_kind(cfg.kernel, law)
    observables = [build_observable(spec) for spec in cfg.observables]
    if not observables:
        observables = [CylinderFunction.mode_pairing(k) for k in range(1, min(4, cfg.truncation_K) + 1)]
    logger.debug(f"运行配置已构造: {domain.kind.value}, K={cfg.truncation_K}, {len(components)} 个分量")
    return RunSetup(cfg, domain, basis, law, kernel, observables)
