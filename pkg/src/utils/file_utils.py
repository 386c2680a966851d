"""
文件处理工具函数
CSV/JSON 产物写出、配置哈希与运行清单
"""

import hashlib
import json
import subprocess
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd
from loguru import logger

CSV_FLOAT_FORMAT = "%.17g"


def content_hash(content: Any) -> str:
    """规范 JSON（sort_keys）的 md5"""
    return hashlib.md5(json.dumps(content, sort_keys=True).encode()).hexdigest()


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    """17 位有效数字、'.' 小数点、\\n 换行，保证逐字节可复现"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    except OSError as e:
        logger.error(f"写入 CSV 失败 {path}: {e}")
        raise
    logger.debug(f"已写入 {path} ({len(frame)} 行)")
    return path


def write_json(data: Any, path: Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(data, f, sort_keys=True, indent=2, ensure_ascii=False)
            f.write("\n")
    except OSError as e:
        logger.error(f"写入 JSON 失败 {path}: {e}")
        raise
    return path


def read_csv(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path)
    except OSError as e:
        logger.error(f"读取 CSV 失败 {path}: {e}")
        raise


def read_json(path: Path) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def git_describe(cwd: Optional[Path] = None) -> str:
    """git describe --always --dirty，不可用时返回 unknown"""
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=cwd or Path(__file__).resolve().parent,
            capture_output=True, text=True, timeout=10, check=False,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return result.stdout.strip() if result.returncode == 0 and result.stdout.strip() else "unknown"


def build_manifest(command: str, seed: int, config_hash: str, artifacts: List[str],
                   extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """运行清单；不含时间戳与耗时"""
    manifest = {
        "command": command,
        "seed": seed,
        "config_hash": config_hash,
        "build": git_describe(),
        "artifacts": sorted(artifacts),
    }
    if extra:
        manifest.update(extra)
    return manifest
