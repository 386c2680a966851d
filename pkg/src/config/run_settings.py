"""
运行环境配置
从环境变量（及 .env）读取 FLEMVI_ 前缀的覆盖项
"""

import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from dotenv import load_dotenv
from loguru import logger

ENV_PREFIX = "FLEMVI_"


class RunSettings:
    """环境变量覆盖项管理器"""

    def __init__(self, env_file: Optional[Path] = None, load_env: bool = True):
        if load_env:
            self._load_env_file(env_file)
        self._load_settings()

    @staticmethod
    def _load_env_file(env_file: Optional[Path]):
        path = Path(env_file) if env_file else Path(".env")
        if path.exists():
            load_dotenv(path, override=False)
            logger.debug(f"已加载环境变量文件: {path}")

    @staticmethod
    def _raw(key: str) -> Optional[str]:
        """读取环境变量并清理注释（# 后面的内容）"""
        value = os.getenv(ENV_PREFIX + key)
        if value is None:
            return None
        if "#" in value:
            value = value.split("#")[0]
        value = value.strip()
        return value or None

    def _parse_int_env(self, key: str) -> Optional[int]:
        value = self._raw(key)
        return int(value) if value is not None else None

    def _parse_float_env(self, key: str) -> Optional[float]:
        value = self._raw(key)
        return float(value) if value is not None else None

    def _parse_bool_env(self, key: str) -> Optional[bool]:
        value = self._raw(key)
        if value is None:
            return None
        return value.lower() in ("1", "true", "yes", "on")

    def _load_settings(self):
        """加载配置"""
        self.errors: List[str] = []
        self.seed = self._safe(self._parse_int_env, "SEED")
        self.jobs = self._safe(self._parse_int_env, "JOBS")
        self.dt = self._safe(self._parse_float_env, "DT")
        self.replicas = self._safe(self._parse_int_env, "REPLICAS")
        self.output_dir = self._raw("OUT")

        # 日志配置
        self.log_level = (self._raw("LOG_LEVEL") or "INFO").upper()
        self.log_file = self._raw("LOG_FILE")
        self.progress = self._parse_bool_env("PROGRESS")

    def _safe(self, parser, key: str):
        try:
            return parser(key)
        except ValueError:
            self.errors.append(f"{ENV_PREFIX}{key} 的值无法解析: {os.getenv(ENV_PREFIX + key)!r}")
            return None

    def validate_config(self) -> Tuple[List[str], List[str]]:
        """
        验证配置

        Returns:
            (错误列表, 警告列表)
        """
        errors = list(self.errors)
        warnings = []
        if self.seed is not None and not 0 <= self.seed < 2 ** 64:
            errors.append(f"{ENV_PREFIX}SEED 必须是 64 位无符号整数")
        if self.jobs is not None and self.jobs < 1:
            errors.append(f"{ENV_PREFIX}JOBS 必须为正")
        if self.dt is not None and not self.dt > 0:
            errors.append(f"{ENV_PREFIX}DT 必须为正")
        if self.replicas is not None and self.replicas < 1:
            errors.append(f"{ENV_PREFIX}REPLICAS 必须为正")
        if self.dt is not None and self.dt > 1e-2:
            warnings.append(f"{ENV_PREFIX}DT={self.dt} 偏大，出界检测误差会明显增加")
        if self.log_level not in ("TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL"):
            warnings.append(f"未知的日志级别 {self.log_level}，将使用 INFO")
            self.log_level = "INFO"
        return errors, warnings

    def config_overrides(self) -> Dict[str, Any]:
        """需要覆盖到运行配置上的字段"""
        overrides: Dict[str, Any] = {}
        if self.seed is not None:
            overrides["seed"] = self.seed
        if self.dt is not None:
            overrides["dt"] = self.dt
        if self.replicas is not None:
            overrides["replicas"] = self.replicas
        if self.output_dir is not None:
            overrides["output_dir"] = self.output_dir
        return overrides
