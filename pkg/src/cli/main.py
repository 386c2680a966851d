"""
flemvi 命令行入口
子命令: simulate | verify | flow
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger

from agents.replica_agent import STREAM_RELOCATION, STREAM_SIMULATE, ReplicaAgent
from agents.verification_agent import (
    Status,
    TestReport,
    VerificationAgent,
    apply_bonferroni,
    reports_table,
)
from config.preset_configs import list_all_presets
from config.run_config import RunSetup, build_setup, config_hash, load_run_config
from config.run_settings import RunSettings
from engine.exceptions import ConfigError
from engine.kernels import law_summary, sample_nu_n
from engine.measures import CylinderFunction, EmpiricalMeasure
from engine.simulator import ParticleConfig, run
from engine.spectral import flow_coefficient_table
from utils.file_utils import build_manifest, read_csv, write_csv, write_json
from utils.numerics import replica_rng

LOG_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} - {name} - {level} - {message}"
SUITES = ("identities", "prop45", "convergence", "mosco", "calibration", "all")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3


def setup_logging(level: str = "INFO", log_file: Optional[str] = None):
    """唯一配置 loguru sink 的地方"""
    logger.remove()
    logger.add(sys.stderr, level=level, format=LOG_FORMAT)
    if log_file:
        logger.add(log_file, level=level, format=LOG_FORMAT, encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON 运行配置文件")
    common.add_argument("--preset", help="预设场景（配置文件中的 preset 优先级更低）")
    common.add_argument("--seed", type=int, help="主种子（64 位无符号整数）")
    common.add_argument("--jobs", type=int, help="并行进程数，默认 CPU 核数")
    common.add_argument("--out", type=Path, help="输出目录")
    common.add_argument("--log-level", help="日志级别")

    parser = argparse.ArgumentParser(prog="flemvi", description="Fleming-Viot 粒子模拟与极限流验证")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", parents=[common], help="模拟单条轨迹并写出 CSV")
    simulate.add_argument("--n", type=int, help="粒子数，默认 n_list 的第一个值")
    simulate.add_argument("--init", type=Path, help="起始构型 CSV（x1[,x2], boundary），替代 ν_n 抽样")

    verify = sub.add_parser("verify", parents=[common], help="运行验证套件")
    verify.add_argument("--suite", choices=SUITES, default="all")

    flow_cmd = sub.add_parser("flow", parents=[common], help="导出极限流系数")
    flow_cmd.add_argument("--times", type=float, nargs="+", help="覆盖配置中的 flow_times")

    sub.add_parser("presets", help="列出预设场景")
    return parser


def _cli_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {"seed": args.seed}
    if args.out is not None:
        overrides["output_dir"] = str(args.out)
    if getattr(args, "times", None):
        overrides["flow_times"] = list(args.times)
    return overrides


def _load(args: argparse.Namespace, settings: RunSettings) -> RunSetup:
    if args.config is None and args.preset is None:
        raise ConfigError("必须给出 --config 或 --preset")
    cfg = load_run_config(args.config, settings.config_overrides(), _cli_overrides(args), preset=args.preset)
    return build_setup(cfg)


def _write_manifest(setup: RunSetup, command: str, out: Path, artifacts: List[str],
                    extra: Optional[Dict[str, Any]] = None) -> Path:
    cfg = setup.config
    manifest = build_manifest(command, cfg.seed, config_hash(cfg), artifacts,
                              {"law": law_summary(setup.law), "config": cfg.model_dump(mode="json"), **(extra or {})})
    return write_json(manifest, out / f"{command}_manifest.json")


def load_initial_configuration(setup: RunSetup, path: Path) -> EmpiricalMeasure:
    """读取起始构型 CSV（x1[,x2], boundary），原子必须全部位于区域内部"""
    x0 = EmpiricalMeasure.from_frame(setup.domain, read_csv(path))
    if x0.has_boundary_atom or not setup.domain.contains_many(x0.positions).all():
        raise ConfigError(f"起始构型 {path} 含有边界或区域外的原子")
    return x0


def cmd_simulate(setup: RunSetup, n: Optional[int] = None, init: Optional[Path] = None) -> int:
    """一条轨迹：观测值 CSV、跳跃日志 CSV、起止构型 CSV 与清单"""
    cfg = setup.config
    rng = replica_rng(cfg.seed, 0, STREAM_SIMULATE)
    if init is not None:
        x0 = load_initial_configuration(setup, init)
        if n is not None and n != x0.n:
            raise ConfigError(f"--n={n} 与起始构型的原子数 {x0.n} 不一致")
        n = x0.n
    else:
        n = cfg.n_list[0] if n is None else n
        if n < 1:
            raise ConfigError(f"粒子数必须至少为 1，收到 n={n}")
        x0 = sample_nu_n(setup.law, n, rng)
    logger.info(f"开始模拟: n={n}, T={cfg.horizon}, dt={cfg.dt}, 核={cfg.kernel.value}")
    trajectory = run(ParticleConfig(setup.domain, x0.positions, rng), cfg.horizon, cfg.dt, setup.kernel,
                     setup.observables, setup.basis, output_stride=cfg.output_stride)

    out = Path(cfg.output_dir)
    artifacts = {
        "trajectory.csv": trajectory.to_frame(),
        "jump_log.csv": trajectory.jump_frame(),
        "initial_config.csv": x0.to_frame(),
        "final_config.csv": trajectory.final.empirical().to_frame(),
    }
    for name, frame in artifacts.items():
        write_csv(frame, out / name)
    _write_manifest(setup, "simulate", out, list(artifacts),
                    {"n": n, "jumps": len(trajectory.jump_log), "init": None if init is None else str(init)})
    logger.info(f"模拟完成: 跳跃 {len(trajectory.jump_log)} 次，输出目录 {out}")
    return EXIT_OK


def _prop45_reports(agent: VerificationAgent, setup: RunSetup) -> List[TestReport]:
    cfg = setup.config
    law, n, M, dt = setup.law, cfg.n_list[0], cfg.replicas, cfg.dt
    reports = [agent.prop45a(law, CylinderFunction.constant_one(), n, M, dt)]
    for f in setup.observables:
        reports.append(agent.prop45a(law, f, n, M, dt))
        b, c = agent.prop45bc(law, f, n, M, dt, setup.kernel)
        reports.extend([b, c, agent.prop45bc_sum_check(b)])
    reports.append(agent.prop45a_cutoff_diagnostic(law, cfg.n_list, M, dt))
    if n >= 2:
        # 边界均值：把一个 ν_n 样本的第 0 个原子放到 ∂D 上
        rng = replica_rng(cfg.seed, 0, STREAM_RELOCATION)
        y = sample_nu_n(law, n, rng)
        hit = np.asarray(setup.domain.lower) + 0.5 * setup.domain.lengths
        hit[0] = setup.domain.lower[0]
        y = y.with_atom(0, hit, on_boundary=True)
        reports.append(agent.relocation_mean_check(law, setup.observables[0], setup.kernel, y, 0, M))
    return reports


def _suite_reports(agent: VerificationAgent, setup: RunSetup, suite: str) -> List[TestReport]:
    cfg = setup.config
    selected = SUITES[:-1] if suite == "all" else (suite,)
    reports: List[TestReport] = []
    for name in selected:
        logger.info(f"运行验证套件: {name}")
        if name == "identities":
            reports.extend(agent.identity_suite(setup.basis, setup.law))
        elif name == "prop45":
            reports.extend(_prop45_reports(agent, setup))
        elif name == "convergence":
            modes = sorted({k for f in setup.observables for k in f.mode_indices})
            reports.extend(agent.convergence_experiment(setup.law, cfg.t, cfg.n_list, cfg.replicas, cfg.dt,
                                                        setup.kernel, modes=modes))
        elif name == "mosco":
            reports.append(agent.mosco_operational_check(setup.law, setup.observables[0],
                                                         CylinderFunction.constant_one(), cfg.t, cfg.beta,
                                                         cfg.n_list, cfg.replicas, cfg.dt, setup.kernel))
        elif name == "calibration":
            reports.extend(agent.calibration_suite(setup.basis, cfg.calibration_paths, cfg.calibration_dt))
    return reports


def cmd_verify(setup: RunSetup, suite: str, jobs: Optional[int] = None, progress: Optional[bool] = None) -> int:
    """运行套件，写出报告 JSON；任一 FAIL 时返回 1"""
    if suite not in SUITES:
        raise ConfigError(f"未知的验证套件: {suite}（可选: {', '.join(SUITES)}）")
    cfg = setup.config
    agent = VerificationAgent(ReplicaAgent(cfg.seed, jobs, progress))
    reports = _suite_reports(agent, setup, suite)
    k_sigma = apply_bonferroni(reports)

    print(reports_table(reports))
    out = Path(cfg.output_dir)
    report_name = f"verify_{suite}.json"
    write_json({
        "suite": suite,
        "seed": cfg.seed,
        "config_hash": config_hash(cfg),
        "k_sigma": k_sigma,
        "reports": [r.to_dict() for r in reports],
    }, out / report_name)
    _write_manifest(setup, "verify", out, [report_name], {"suite": suite})

    failed = [r.name for r in reports if r.status is Status.FAIL]
    underpowered = [r.name for r in reports if r.status is Status.UNDERPOWERED]
    if underpowered:
        logger.warning(f"统计功效不足: {', '.join(underpowered)}")
    if failed:
        logger.error(f"验证失败: {', '.join(failed)}")
        return EXIT_FAILED
    logger.info(f"验证通过: {len(reports)} 项，k={k_sigma:.3f}")
    return EXIT_OK


def flow_frame(setup: RunSetup, times: Sequence[float]) -> pd.DataFrame:
    """每个混合分量一块：component, t, z, c_1..c_K"""
    K = setup.basis.truncation_K
    rows = []
    for m, density in enumerate(setup.law.densities):
        for t, z, coeffs in flow_coefficient_table(density.density, times):
            rows.append([m, t, z, *np.asarray(coeffs, dtype=float)])
    columns = ["component", "t", "z"] + [f"c_{k}" for k in range(1, K + 1)]
    return pd.DataFrame(rows, columns=columns)


def cmd_flow(setup: RunSetup) -> int:
    cfg = setup.config
    out = Path(cfg.output_dir)
    write_csv(flow_frame(setup, cfg.flow_times), out / "flow.csv")
    _write_manifest(setup, "flow", out, ["flow.csv"], {"times": list(cfg.flow_times)})
    logger.info(f"极限流系数已写出: {out / 'flow.csv'}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    settings = RunSettings()
    errors, warnings = settings.validate_config()
    setup_logging(args.log_level.upper() if getattr(args, "log_level", None) else settings.log_level,
                  settings.log_file)
    for warning in warnings:
        logger.warning(warning)
    if errors:
        for error in errors:
            logger.error(error)
        return EXIT_CONFIG

    if args.command == "presets":
        for preset in list_all_presets():
            print(f"{preset['type']:<12} {preset['name']}: {preset['description']}")
        return EXIT_OK

    jobs = args.jobs if args.jobs is not None else settings.jobs
    if jobs is not None and jobs < 1:
        parser.print_usage(sys.stderr)
        logger.error(f"--jobs 必须为正，收到 {jobs}")
        return EXIT_CONFIG

    try:
        setup = _load(args, settings)
        if args.command == "simulate":
            return cmd_simulate(setup, args.n, args.init)
        if args.command == "verify":
            return cmd_verify(setup, args.suite, jobs, settings.progress)
        return cmd_flow(setup)
    except ValueError as e:
        logger.error(f"配置或输入无效: {e}")
        return EXIT_CONFIG
    except OSError as e:
        logger.error(f"读写失败: {e}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
