"""
异常定义
所有异常同时继承 ValueError，调用方按 ValueError 捕获依然有效
"""

from typing import List, Optional, Sequence


class FlemviError(Exception):
    """项目基础异常"""


class GeometryError(FlemviError, ValueError):
    """几何错误：维数不匹配、点不在区域内"""


class SpectralError(FlemviError, ValueError):
    """谱计算错误：模态越界、时间参数非法"""


class FlowBlowUpError(SpectralError):
    """逆向流系数溢出"""


class AdmissibilityError(FlemviError, ValueError):
    """密度不满足可容许条件"""

    def __init__(self, message: str, violations: Optional[Sequence] = None):
        self.violations: List = list(violations or [])[:10]
        if self.violations:
            preview = ", ".join(str(v) for v in self.violations)
            message = f"{message}; 违规网格点: {preview}"
        super().__init__(message)


class SamplingError(FlemviError, ValueError):
    """采样失败"""


class ConfigError(FlemviError, ValueError):
    """运行配置错误"""
