#!/usr/bin/env python3
"""
flemvi 启动脚本
检查运行环境后把参数交给命令行入口；未安装为包时也可直接运行
"""

import importlib.util
import shutil
import sys
from pathlib import Path

# 添加 src 到路径
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root / "src"))

REQUIRED_PACKAGES = {
    "numpy": "numpy",
    "scipy": "scipy",
    "pandas": "pandas",
    "pydantic": "pydantic",
    "dotenv": "python-dotenv",
    "loguru": "loguru",
    "tqdm": "tqdm",
}


def check_python_version():
    """检查Python版本"""
    if sys.version_info < (3, 9):
        print("需要Python 3.9或更高版本", file=sys.stderr)
        sys.exit(2)


def check_dependencies():
    """检查依赖包，缺失时给出安装命令而不是自动安装"""
    missing = [pkg for module, pkg in REQUIRED_PACKAGES.items() if importlib.util.find_spec(module) is None]
    if missing:
        print(f"缺少依赖包: {', '.join(missing)}", file=sys.stderr)
        print("请执行: pip install -e .[dev]", file=sys.stderr)
        sys.exit(2)


def check_env_file():
    """.env 不存在时从模板创建"""
    env_file = project_root / ".env"
    template = project_root / "env_template.txt"
    if not env_file.exists() and template.exists():
        shutil.copy(template, env_file)
        print("已从 env_template.txt 创建 .env", file=sys.stderr)


def main():
    """主函数"""
    check_python_version()
    check_dependencies()
    check_env_file()

    from cli.main import main as cli_main

    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
