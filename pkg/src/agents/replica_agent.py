"""
副本代理
按主种子派生独立随机流，在进程池中并行运行蒙特卡洛副本，并给出半群/预解式估计与极限目标
"""

import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from loguru import logger
from tqdm import tqdm

from engine.geometry import Domain
from engine.kernels import InitialLaw, RelocationKernel, sample_m_bold_n, sample_nu_n, sample_relocation
from engine.measures import CylinderFunction
from engine.quadrature import composite_gauss_legendre
from engine.simulator import ParticleConfig, first_exit, run
from engine.spectral import flow
from utils.numerics import mean_and_stderr, replica_rng

# 各类估计量使用互不重叠的随机流编号
STREAM_SIMULATE = 0
STREAM_SEMIGROUP = 1
STREAM_RESOLVENT = 2
STREAM_PROP45A = 3
STREAM_PROP45BC = 4
STREAM_CONVERGENCE = 5
STREAM_RELOCATION = 6
STREAM_CALIBRATION = 7
STREAM_IDENTITY = 8

RESOLVENT_HORIZON_FACTOR = 12.0


def stream_for(kind: int, n: int = 0) -> int:
    """同一估计量在不同 n 上使用不同的流"""
    return kind * 1_000_000 + int(n)


@dataclass(frozen=True)
class Estimate:
    """蒙特卡洛估计值"""
    mean: float
    stderr: float
    samples: int


@dataclass(frozen=True)
class ResolventEstimate(Estimate):
    """∫₀^{T_cut} e^{-βt} g(X_t) dt 的估计，附截断尾项上界"""
    beta: float = 1.0
    horizon: float = 0.0
    tail_bound: float = 0.0

    @property
    def scaled(self) -> float:
        """βG_β g"""
        return self.beta * self.mean


def _run_chunk(worker: Callable[[Any, np.random.Generator], Any], payload: Any,
               seed: int, stream: int, indices: Sequence[int]) -> List[tuple]:
    return [(i, worker(payload, replica_rng(seed, i, stream))) for i in indices]


def _progress_enabled(flag: Optional[bool]) -> bool:
    if flag is not None:
        return flag
    return sys.stderr.isatty()


class ReplicaAgent:
    """副本池"""

    def __init__(self, seed: int = 0, jobs: Optional[int] = None, progress: Optional[bool] = None):
        self.seed = int(seed)
        self.jobs = max(1, int(jobs or os.cpu_count() or 1))
        self.progress = _progress_enabled(progress)

    def map(self, worker: Callable[[Any, np.random.Generator], Any], payload: Any, M: int,
            stream: int, desc: str = "副本") -> List[Any]:
        """
        运行 M 个副本

        Args:
            worker: 模块级函数 worker(payload, rng)
            payload: 只读输入，会被序列化到各进程
            M: 副本数
            stream: 随机流编号
            desc: 进度条描述

        Returns:
            按副本编号排序的结果列表（与并行度无关）
        """
        if M < 1:
            raise ValueError(f"副本数必须为正，收到 M={M}")
        results: Dict[int, Any] = {}
        bar = tqdm(total=M, desc=desc, disable=not self.progress, leave=False)
        try:
            if self.jobs == 1:
                for i in range(M):
                    results[i] = worker(payload, replica_rng(self.seed, i, stream))
                    bar.update(1)
            else:
                chunk = max(1, math.ceil(M / (self.jobs * 4)))
                batches = [list(range(s, min(M, s + chunk))) for s in range(0, M, chunk)]
                with ProcessPoolExecutor(max_workers=self.jobs) as pool:
                    futures = [pool.submit(_run_chunk, worker, payload, self.seed, stream, b) for b in batches]
                    for future in as_completed(futures):
                        part = future.result()
                        for i, value in part:
                            results[i] = value
                        bar.update(len(part))
        except Exception as e:
            logger.error(f"{desc} 副本计算失败: {e}")
            raise
        finally:
            bar.close()
        return [results[i] for i in range(M)]

    def semigroup_estimate(self, law: InitialLaw, g: CylinderFunction, psi: CylinderFunction,
                           t: float, n: int, M: int, dt: float, kernel: RelocationKernel) -> Estimate:
        """⟨T_{n,t}g, ψ⟩_n 的估计：g(X^n_t)·ψ(X^n_0) 的副本均值"""
        if M < 2:
            raise ValueError("半群估计至少需要 2 个副本")
        payload = (law, g, psi, t, n, dt, kernel)
        values = self.map(_semigroup_replica, payload, M, stream_for(STREAM_SEMIGROUP, n), f"半群 n={n}")
        mean, se = mean_and_stderr(values)
        return Estimate(mean, se, M)

    def resolvent_estimate(self, law: InitialLaw, g: CylinderFunction, beta: float, n: int, M: int,
                           dt: float, kernel: RelocationKernel, sample_stride: Optional[float] = None) -> ResolventEstimate:
        """
        G_{n,β}g = E∫₀^∞ e^{-βt} g(X^n_t) dt，截断到 T_cut = 12/β
        """
        if not beta > 0:
            raise ValueError(f"β 必须为正，收到 β={beta}")
        horizon, stride = resolvent_grid(beta, dt, sample_stride)
        payload = (law, g, beta, n, dt, kernel, horizon, stride)
        values = self.map(_resolvent_replica, payload, M, stream_for(STREAM_RESOLVENT, n), f"预解式 n={n}")
        mean, se = mean_and_stderr(values)
        g_sup = g.bounds_on_box(law.basis, replica_rng(self.seed, 0, STREAM_RESOLVENT))["sup_phi"]
        tail = g_sup * math.exp(-beta * horizon) / beta
        return ResolventEstimate(mean, se, M, beta=beta, horizon=horizon, tail_bound=tail)


def resolvent_grid(beta: float, dt: float, sample_stride: Optional[float] = None):
    """(T_cut, 采样间隔)，两者都取 dt 的整数倍"""
    steps = math.ceil(RESOLVENT_HORIZON_FACTOR / beta / dt - 1e-9)
    if sample_stride is None:
        sample_stride = min(0.01, 0.1 / beta)
    stride_steps = max(1, int(round(sample_stride / dt)))
    steps = math.ceil(steps / stride_steps) * stride_steps
    return steps * dt, stride_steps * dt


def exponential_trapezoid(times: np.ndarray, values: np.ndarray, beta: float) -> float:
    """对分段线性 g 精确积分 ∫ e^{-βt} g(t) dt"""
    t0, t1 = times[:-1], times[1:]
    g0, g1 = values[:-1], values[1:]
    h = t1 - t0
    e0, e1 = np.exp(-beta * t0), np.exp(-beta * t1)
    i0 = (e0 - e1) / beta
    i1 = (e0 - e1 * (1.0 + beta * h)) / beta ** 2
    pieces = g0 * i0 + (g1 - g0) / h * i1
    return math.fsum(pieces)


def _evolve_observable(domain: Domain, positions: np.ndarray, rng: np.random.Generator, T: float, dt: float,
                       kernel: RelocationKernel, observables: Sequence[CylinderFunction], basis,
                       stride: Optional[float] = None):
    cfg = ParticleConfig(domain, positions, rng)
    return run(cfg, T, dt, kernel, observables, basis, output_stride=stride if stride is not None else T)


def _semigroup_replica(payload, rng: np.random.Generator) -> float:
    law, g, psi, t, n, dt, kernel = payload
    x0 = sample_nu_n(law, n, rng)
    psi_value = psi(x0, law.basis)
    if t == 0:
        return g(x0, law.basis) * psi_value
    trajectory = _evolve_observable(law.domain, x0.positions, rng, t, dt, kernel, [g], law.basis)
    return float(trajectory.values[-1, 0]) * psi_value


def _resolvent_replica(payload, rng: np.random.Generator) -> float:
    law, g, beta, n, dt, kernel, horizon, stride = payload
    x0 = sample_nu_n(law, n, rng)
    trajectory = _evolve_observable(law.domain, x0.positions, rng, horizon, dt, kernel, [g], law.basis, stride)
    return exponential_trapezoid(trajectory.times, trajectory.values[:, 0], beta)


def _moments_replica(payload, rng: np.random.Generator) -> np.ndarray:
    law, modes, t, n, dt, kernel = payload
    observables = [CylinderFunction.mode_pairing(k) for k in modes]
    x0 = sample_nu_n(law, n, rng)
    if t == 0:
        return np.array([f(x0, law.basis) for f in observables])
    trajectory = _evolve_observable(law.domain, x0.positions, rng, t, dt, kernel, observables, law.basis)
    return trajectory.values[-1].copy()


def _prop45a_replica(payload, rng: np.random.Generator) -> float:
    """mass/n · f̃(y)，y 为从 x ~ 𝐦̃ₙ/mass 出发的首次出界构型"""
    law, f, n, dt = payload
    x, mass = sample_m_bold_n(law, n, rng)
    exit_ = first_exit(law.domain, x.positions, dt, rng)
    return mass / n * f(exit_.configuration, law.basis)


def _prop45bc_replica(payload, rng: np.random.Generator) -> dict:
    """
    耦合样本 x → y → z

    z 只在命中粒子上与 y 不同；返回 f̃ 在三个构型上的值与跳跃距离。
    """
    law, f, n, dt, kernel = payload
    x, mass = sample_m_bold_n(law, n, rng)
    exit_ = first_exit(law.domain, x.positions, dt, rng)
    y = exit_.configuration
    i = exit_.particle_index
    target = sample_relocation(kernel, y.others(i), rng)
    z = y.with_atom(i, target)
    changed = np.any(z.positions != y.positions, axis=1) | (z.boundary != y.boundary)
    if int(changed.sum()) != 1 or not changed[i]:
        raise AssertionError("耦合构型 z 与 y 应恰好在命中粒子上不同")
    return {
        "mass": mass,
        "fx": f(x, law.basis),
        "fy": f(y, law.basis),
        "fz": f(z, law.basis),
        "r": law.domain.dist_to_boundary(target),
    }


def _relocation_replica(payload, rng: np.random.Generator) -> float:
    f, kernel, y, index, basis = payload
    target = sample_relocation(kernel, y.others(index), rng)
    return f(y.with_atom(index, target), basis)


def semigroup_limit(law: InitialLaw, g: CylinderFunction, psi: CylinderFunction, t: float) -> float:
    """⟨T_t g, ψ⟩ = Σ_m w_m g(U⁺(t, d_m dx)) ψ(d_m dx)"""
    return math.fsum(w * g(flow(d.density, t)) * psi(d.density) for w, d in law.components)


def resolvent_limit(law: InitialLaw, g: CylinderFunction, beta: float, horizon: Optional[float] = None,
                    nodes: int = 256) -> float:
    """G_β g(ν) = Σ_m w_m ∫₀^{T_cut} e^{-βt} g(U⁺(t, d_m dx)) dt，Gauss-Legendre 求积"""
    horizon = horizon if horizon is not None else RESOLVENT_HORIZON_FACTOR / beta
    ts, ws = composite_gauss_legendre(0.0, horizon, nodes)
    total = []
    for w, d in law.components:
        values = np.array([g(flow(d.density, float(t))) for t in ts])
        total.append(w * float(np.dot(ws, np.exp(-beta * ts) * values)))
    return math.fsum(total)


def moment_targets(law: InitialLaw, modes: Sequence[int], t: float) -> np.ndarray:
    """Σ_m w_m (h_k, U⁺(t, d_m dx))，按分量分别演化后平均"""
    rows = [w * flow(d.density, t).coeffs[np.asarray(modes) - 1] for w, d in law.components]
    return np.array([math.fsum(col) for col in np.array(rows).T])
