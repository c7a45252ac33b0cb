"""
动力系统插件基础类模块

定义基准动力系统插件的接口和注册机制。每个插件给出向量场、默认参数
以及数据生成协议（初值区域、时间区间、步长、轨迹条数）。
"""

from typing import Dict, List, Any, Optional, Type
from abc import ABC, abstractmethod
import importlib
import inspect
import logging
import pkgutil

import numpy as np

logger = logging.getLogger(__name__)


class SystemPlugin(ABC):
    """动力系统插件基类，所有基准系统必须继承此类"""

    name = ""
    description = ""
    state_dim = 0
    input_dim = 0
    default_params: Dict[str, Any] = {}
    # 数据生成协议，键见 DataConfig
    protocol: Dict[str, Any] = {}

    def __init__(self, name: Optional[str] = None, description: Optional[str] = None):
        """
        初始化插件

        Args:
            name: 插件名称，默认使用类属性
            description: 插件描述
        """
        self.name = name or type(self).name
        self.description = description or type(self).description

    @abstractmethod
    def rhs(self, h: np.ndarray, x: Optional[np.ndarray], params: Dict[str, Any]) -> np.ndarray:
        """
        向量场

        h的最后一维是状态分量，前面的维度是批量维度。

        Args:
            h: ...×d_h 状态
            x: ...×d_x 输入，无输入系统为None
            params: 系统参数

        Returns:
            np.ndarray: 与h形状相同的导数
        """
        pass

    def merged_params(self, overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """默认参数与覆盖参数合并"""
        params = dict(self.default_params)
        if overrides:
            unknown = set(overrides) - set(params)
            if unknown and params:
                raise ValueError(f"系统{self.name}没有参数: {', '.join(sorted(unknown))}")
            params.update(overrides)
        return params

    def dims(self, params: Dict[str, Any]):
        """返回 (state_dim, input_dim)，参数决定维度的系统可以重写"""
        return self.state_dim, self.input_dim


class SystemRegistry:
    """系统插件注册表，负责插件的发现、注册和查找"""

    def __init__(self):
        """初始化注册表"""
        self.plugins: Dict[str, SystemPlugin] = {}
        self.aliases: Dict[str, str] = {}

    def register_plugin_class(self, plugin_class: Type[SystemPlugin]) -> None:
        """
        注册插件类

        Args:
            plugin_class: 插件类
        """
        if issubclass(plugin_class, SystemPlugin) and not inspect.isabstract(plugin_class):
            instance = plugin_class()
            self.plugins[instance.name] = instance
            for alias in getattr(plugin_class, "aliases", ()):
                self.aliases[alias] = instance.name

    def discover_plugins(self, package: str = __package__) -> None:
        """
        发现插件包中的所有插件

        Args:
            package: 插件包名，默认为本包
        """
        module = importlib.import_module(package)
        for info in pkgutil.iter_modules(module.__path__):
            if info.name.startswith("_") or info.name == "base":
                continue
            try:
                submodule = importlib.import_module(f"{package}.{info.name}")
            except ImportError as e:
                logger.warning("加载插件模块 %s 时出错: %s", info.name, e)
                continue
            for _, obj in inspect.getmembers(submodule, inspect.isclass):
                if issubclass(obj, SystemPlugin) and obj is not SystemPlugin:
                    self.register_plugin_class(obj)

    def get_plugin(self, name: str) -> Optional[SystemPlugin]:
        """
        获取插件

        Args:
            name: 插件名称或别名

        Returns:
            Optional[SystemPlugin]: 插件实例，如果未找到则返回None
        """
        if name in self.plugins:
            return self.plugins[name]
        if name in self.aliases:
            return self.plugins[self.aliases[name]]
        return None

    def get_all_plugins(self) -> List[SystemPlugin]:
        """
        获取所有已注册的插件

        Returns:
            List[SystemPlugin]: 插件列表
        """
        return list(self.plugins.values())


_registry: Optional[SystemRegistry] = None


def get_registry() -> SystemRegistry:
    """返回全局注册表，首次调用时自动发现插件"""
    global _registry
    if _registry is None:
        _registry = SystemRegistry()
        _registry.discover_plugins()
    return _registry


def get_system_plugin(kind: str) -> SystemPlugin:
    """
    按名称查找系统插件

    Raises:
        ValueError: 未找到系统
    """
    plugin = get_registry().get_plugin(kind)
    if plugin is None:
        names = ", ".join(sorted(get_registry().plugins))
        raise ValueError(f"未找到系统: {kind}，可选: {names}")
    return plugin
