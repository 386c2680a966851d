"""
预设配置管理器
定义常用的实验场景，运行配置可以只写 preset 名称，其余字段取预设值
"""

import copy
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional


class PresetType(Enum):
    """预设配置类型"""
    FIXED_POINT = "fixed_point"    # 区间 (0,π) 上的不动点 μ0
    PERTURBED = "perturbed"        # μ ∝ h_1 + 0.1 h_2
    MIXTURE = "mixture"            # 两分量混合
    RECTANGLE = "rectangle"        # 正方形上的不动点


@dataclass
class PresetConfig:
    """预设配置"""
    name: str
    description: str
    settings: Dict[str, Any]


PI = 3.141592653589793

_COMMON: Dict[str, Any] = {
    "truncation_K": 64,
    "quadrature_nodes": 256,
    "kernel": "mixture_posterior",
    "n_list": [50, 200, 800],
    "replicas": 200,
    "dt": 1e-4,
    "horizon": 1.0,
    "output_stride": 0.01,
    "t": 0.25,
    "beta": 2.0,
    "flow_times": [0.0, 0.25, 0.5, 1.0],
    "observables": [
        {"modes": [1], "terms": [{"coef": 1.0, "powers": [1]}], "name": "h_1"},
        {"modes": [2], "terms": [{"coef": 1.0, "powers": [1]}], "name": "h_2"},
    ],
    "seed": 20240501,
    "output_dir": "outputs",
}


class PresetConfigManager:
    """预设配置管理器"""

    def __init__(self):
        self.presets = self._init_presets()

    def _init_presets(self) -> Dict[PresetType, PresetConfig]:
        """初始化预设配置"""
        return {
            PresetType.FIXED_POINT: self._get_fixed_point_config(),
            PresetType.PERTURBED: self._get_perturbed_config(),
            PresetType.MIXTURE: self._get_mixture_config(),
            PresetType.RECTANGLE: self._get_rectangle_config(),
        }

    def _get_fixed_point_config(self) -> PresetConfig:
        return PresetConfig(
            name="不动点",
            description="区间 (0,π)，初始律为 h_1 归一化的不动点，极限流静止",
            settings={
                **_COMMON,
                "domain": {"kind": "interval", "bounds": [0.0, PI]},
                "initial_law": [{"weight": 1.0, "coefficients": {}}],
            },
        )

    def _get_perturbed_config(self) -> PresetConfig:
        return PresetConfig(
            name="谱扰动",
            description="区间 (0,π)，μ ∝ h_1 + 0.1 h_2，弱收敛实验的默认场景",
            settings={
                **_COMMON,
                "domain": {"kind": "interval", "bounds": [0.0, PI]},
                "initial_law": [{"weight": 1.0, "coefficients": {"2": 0.1}}],
            },
        )

    def _get_mixture_config(self) -> PresetConfig:
        return PresetConfig(
            name="两分量混合",
            description="区间 (0,π)，两个谱扰动密度的等权混合，目标按分量分别演化",
            settings={
                **_COMMON,
                "domain": {"kind": "interval", "bounds": [0.0, PI]},
                "initial_law": [
                    {"weight": 0.5, "coefficients": {"2": 0.1}},
                    {"weight": 0.5, "coefficients": {"2": -0.1, "3": 0.02}},
                ],
            },
        )

    def _get_rectangle_config(self) -> PresetConfig:
        return PresetConfig(
            name="正方形不动点",
            description="(0,π)² 上的二维不动点，作为光滑边界的桌面规模替代",
            settings={
                **_COMMON,
                "domain": {"kind": "rectangle", "bounds": [0.0, PI, 0.0, PI]},
                "initial_law": [{"weight": 1.0, "coefficients": {}}],
                "n_list": [25, 50, 100],
            },
        )

    def get_preset(self, preset_type: PresetType) -> PresetConfig:
        return self.presets[preset_type]

    def get_preset_by_name(self, preset_name: str) -> Optional[PresetConfig]:
        try:
            return self.presets[PresetType(preset_name)]
        except ValueError:
            return None

    def defaults(self, preset_name: str) -> Dict[str, Any]:
        """预设的字段字典（深拷贝）"""
        preset = self.get_preset_by_name(preset_name)
        if preset is None:
            known = ", ".join(p.value for p in PresetType)
            raise KeyError(f"未知的预设配置: {preset_name}（可选: {known}）")
        return copy.deepcopy(preset.settings)

    def list_presets(self) -> List[Dict[str, str]]:
        return [
            {"type": preset_type.value, "name": preset.name, "description": preset.description}
            for preset_type, preset in self.presets.items()
        ]


# 全局实例
preset_manager = PresetConfigManager()


def list_all_presets() -> List[Dict]:
    """列出所有预设配置的便捷函数"""
    return preset_manager.list_presets()
