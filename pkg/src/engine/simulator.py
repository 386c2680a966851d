"""
n 粒子 Fleming-Viot 过程
布朗增量、带桥修正的出界检测、瞬时重定位与跳跃日志
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from engine.geometry import Domain
from engine.kernels import RelocationKernel, sample_relocation
from engine.measures import CylinderFunction, EmpiricalMeasure
from engine.spectral import SpectralBasis

DEFAULT_DT = 1e-4


@dataclass(frozen=True)
class JumpEvent:
    """一次边界命中与重定位"""
    time: float
    particle_index: int
    jump_off: Tuple[float, ...]
    target: Tuple[float, ...]
    jump_distance: float


@dataclass
class ParticleConfig:
    """
    粒子构型

    positions 在每个提交时刻都位于区域内部；rng 为该副本独占的随机流。
    """
    domain: Domain
    positions: np.ndarray
    rng: np.random.Generator
    time: float = 0.0
    jump_log: List[JumpEvent] = field(default_factory=list)

    def __post_init__(self):
        self.positions = np.array(self.positions, dtype=float).reshape(-1, self.domain.dimension)

    @property
    def n(self) -> int:
        return int(self.positions.shape[0])

    def empirical(self) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.domain, self.positions)


def bridge_crossing_probability(a, b, dt: float):
    """两端距边界 a、b 的布朗桥在 dt 内触界的概率 exp(-2ab/dt)"""
    return np.exp(-2.0 * np.asarray(a) * np.asarray(b) / dt)


def _exit_fractions(domain: Domain, prev: np.ndarray, new: np.ndarray,
                    uniforms: np.ndarray, dt: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    逐粒子判定本步是否触界

    穿过某面时比例为 a/(a+|b|)；桥检验命中时比例同样按两端距离插值。
    每个粒子每个面固定消耗一个均匀数。

    Returns:
        (是否触界, 面编号, 时间比例 s)
    """
    gap_prev = domain.face_gaps(prev)
    gap_new = domain.face_gaps(new)
    crossed = gap_new <= 0
    prob = np.where(crossed, 0.0, bridge_crossing_probability(gap_prev, np.clip(gap_new, 0.0, None), dt))
    fired = (~crossed) & (uniforms < prob)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = gap_prev / (gap_prev + np.abs(gap_new))
    frac = np.where(crossed | fired, frac, np.inf)
    face = np.argmin(frac, axis=1)
    s = frac[np.arange(frac.shape[0]), face]
    return np.isfinite(s), face, s


def _advance(domain: Domain, positions: np.ndarray, time: float, dt: float,
             kernel: RelocationKernel, rng: np.random.Generator, log: List[JumpEvent]) -> np.ndarray:
    """推进一步，返回新位置；跳跃事件追加到 log"""
    prev = positions
    new = prev + rng.normal(0.0, math.sqrt(dt), size=prev.shape)
    uniforms = rng.random((prev.shape[0], 2 * domain.dimension))
    exiting, faces, fracs = _exit_fractions(domain, prev, new, uniforms, dt)
    hits = np.flatnonzero(exiting)
    if hits.size == 0:
        return new
    current = new.copy()
    pending = np.zeros(prev.shape[0], dtype=bool)
    pending[hits] = True
    events = []
    # 同一步内多个命中按粒子编号依次处理，尚未处理的命中粒子取步前位置
    for i in hits:
        pending[i] = False
        hit, s = domain.face_point(prev[i], new[i], int(faces[i]))
        snapshot = np.where(pending[:, None], prev, current)
        others = np.delete(snapshot, i, axis=0)
        target = sample_relocation(kernel, others, rng)
        current[i] = target
        events.append(JumpEvent(
            time=time + float(fracs[i]) * dt,
            particle_index=int(i),
            jump_off=tuple(float(v) for v in hit),
            target=tuple(float(v) for v in target),
            jump_distance=float(np.linalg.norm(target - hit)),
        ))
    # 日志按命中时刻排序，保证时间单调
    events.sort(key=lambda e: (e.time, e.particle_index))
    log.extend(events)
    return current


def step(cfg: ParticleConfig, dt: float, kernel: RelocationKernel) -> ParticleConfig:
    """
    推进一个时间步

    Args:
        cfg: 当前构型（不会被修改，随机流除外）
        dt: 步长
        kernel: 重定位核

    Returns:
        新构型
    """
    if not dt > 0:
        raise ValueError(f"步长必须为正，收到 dt={dt}")
    log = list(cfg.jump_log)
    positions = _advance(cfg.domain, cfg.positions, cfg.time, dt, kernel, cfg.rng, log)
    return ParticleConfig(cfg.domain, positions, cfg.rng, cfg.time + dt, log)


@dataclass
class Trajectory:
    """固定输出网格上的观测值轨迹"""
    times: np.ndarray
    values: np.ndarray
    jump_counts: np.ndarray
    observable_names: List[str]
    jump_log: List[JumpEvent]
    final: ParticleConfig

    def to_frame(self) -> pd.DataFrame:
        data = {"time": self.times}
        for j, name in enumerate(self.observable_names):
            data[name] = self.values[:, j]
        data["jump_count"] = self.jump_counts
        return pd.DataFrame(data)

    def jump_frame(self) -> pd.DataFrame:
        return jump_log_frame(self.jump_log, self.final.domain.dimension)


def jump_log_frame(events: Sequence[JumpEvent], dimension: int) -> pd.DataFrame:
    """跳跃日志表：time, i, y1[,y2], z1[,z2], distance"""
    columns = {"time": [e.time for e in events], "i": [e.particle_index for e in events]}
    for axis in range(dimension):
        columns[f"y{axis + 1}"] = [e.jump_off[axis] for e in events]
    for axis in range(dimension):
        columns[f"z{axis + 1}"] = [e.target[axis] for e in events]
    columns["distance"] = [e.jump_distance for e in events]
    return pd.DataFrame(columns)


def _steps_for(horizon: float, dt: float) -> int:
    steps = int(round(horizon / dt))
    if steps < 1 or abs(steps * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"时间跨度 {horizon} 不是步长 {dt} 的整数倍")
    return steps


def run(cfg0: ParticleConfig, T: float, dt: float, kernel: RelocationKernel,
        observables: Sequence[CylinderFunction], basis: SpectralBasis,
        output_stride: Optional[float] = None) -> Trajectory:
    """
    模拟到 T，并在输出网格上计算观测值

    output_stride 为空时每步输出。
    """
    if not T > 0:
        raise ValueError(f"时间跨度必须为正，收到 T={T}")
    total_steps = _steps_for(T, dt)
    stride_steps = 1 if output_stride is None else _steps_for(output_stride, dt)
    if total_steps % stride_steps:
        raise ValueError(f"输出间隔 {output_stride} 不能整除时间跨度 {T}")
    rows = total_steps // stride_steps + 1
    times = np.empty(rows)
    values = np.empty((rows, len(observables)))
    counts = np.zeros(rows, dtype=int)

    positions = cfg0.positions.copy()
    log: List[JumpEvent] = list(cfg0.jump_log)
    start_jumps = len(log)
    time = cfg0.time

    def record(row: int):
        mu = EmpiricalMeasure(cfg0.domain, positions)
        times[row] = time
        values[row] = [f(mu, basis) for f in observables]
        counts[row] = len(log) - start_jumps

    record(0)
    for k in range(1, total_steps + 1):
        positions = _advance(cfg0.domain, positions, time, dt, kernel, cfg0.rng, log)
        time = cfg0.time + k * dt
        if k % stride_steps == 0:
            record(k // stride_steps)
    logger.debug(f"轨迹完成: n={cfg0.n}, T={T}, 跳跃 {len(log) - start_jumps} 次")
    final = ParticleConfig(cfg0.domain, positions, cfg0.rng, time, log)
    return Trajectory(times, values, counts, [f.name for f in observables], log, final)


@dataclass(frozen=True)
class ExitResult:
    """首次出界：命中构型 y（命中粒子记为边界原子）、时刻与粒子编号"""
    configuration: EmpiricalMeasure
    tau: float
    particle_index: int
    hit_point: Tuple[float, ...]


def first_exit(domain: Domain, x: np.ndarray, dt: float, rng: np.random.Generator,
               max_time: float = math.inf) -> ExitResult:
    """
    不做重定位地推进全部粒子，直到第一个粒子触界

    其余粒子按同一时间比例线性插值（区域为凸集，插值点仍在内部）。
    """
    positions = np.array(x, dtype=float).reshape(-1, domain.dimension)
    if not np.all(domain.contains_many(positions)):
        raise ValueError("首次出界模拟要求初始构型位于区域内部")
    time = 0.0
    while time < max_time:
        new = positions + rng.normal(0.0, math.sqrt(dt), size=positions.shape)
        uniforms = rng.random((positions.shape[0], 2 * domain.dimension))
        exiting, faces, fracs = _exit_fractions(domain, positions, new, uniforms, dt)
        if exiting.any():
            # 并列时取编号最小者
            i = int(np.argmin(np.where(exiting, fracs, np.inf)))
            s = float(fracs[i])
            hit, _ = domain.face_point(positions[i], new[i], int(faces[i]))
            at_hit = positions + s * (new - positions)
            at_hit[i] = hit
            boundary = np.zeros(positions.shape[0], dtype=bool)
            boundary[i] = True
            return ExitResult(EmpiricalMeasure(domain, at_hit, boundary), time + s * dt, i,
                              tuple(float(v) for v in hit))
        positions = new
        time += dt
    raise ValueError(f"在 {max_time} 时间内未发生出界")


def killed_exit_batch(domain: Domain, starts: np.ndarray, dt: float, rng: np.random.Generator,
                      t_max: float = math.inf) -> Tuple[np.ndarray, np.ndarray]:
    """
    相互独立的吸收布朗运动批量模拟

    Returns:
        (出界时刻, 出界面编号)；t_max 前未出界者时刻为 inf、面编号为 -1
    """
    positions = np.array(starts, dtype=float).reshape(-1, domain.dimension)
    m = positions.shape[0]
    tau = np.full(m, np.inf)
    face = np.full(m, -1, dtype=int)
    alive = np.arange(m)
    time = 0.0
    while alive.size and time < t_max:
        prev = positions[alive]
        new = prev + rng.normal(0.0, math.sqrt(dt), size=prev.shape)
        uniforms = rng.random((alive.size, 2 * domain.dimension))
        exiting, faces, fracs = _exit_fractions(domain, prev, new, uniforms, dt)
        done = alive[exiting]
        tau[done] = time + fracs[exiting] * dt
        face[done] = faces[exiting]
        positions[alive] = new
        alive = alive[~exiting]
        time += dt
    return tau, face
