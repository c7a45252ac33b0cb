"""
异常定义模块

所有数值核心、实验流程和命令行使用的异常类型。
"""

from typing import Optional


class SampledRNNError(Exception):
    """本项目所有异常的基类"""


class DimensionError(SampledRNNError, ValueError):
    """矩阵或向量维度不一致"""


class NonFiniteError(SampledRNNError, ValueError):
    """输入中包含NaN或Inf"""


class DegenerateDataError(SampledRNNError, ValueError):
    """数据退化（例如所有点相同、方差为零）"""


class SamplingError(SampledRNNError, ValueError):
    """权重采样失败（点对不足、缺少目标值等）"""


class EmbeddingError(SampledRNNError, ValueError):
    """时间延迟嵌入或时间特征失败"""


class ModelFormatError(SampledRNNError, ValueError):
    """模型文件损坏或版本不匹配"""


class ConfigError(SampledRNNError, ValueError):
    """实验配置无效"""


class ConvergenceError(SampledRNNError, RuntimeError):
    """迭代算法未收敛"""


class ControlError(SampledRNNError, RuntimeError):
    """控制器构造或闭环运行失败"""


class IntegrationError(SampledRNNError, RuntimeError):
    """ODE积分发散"""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step


class StageError(SampledRNNError, RuntimeError):
    """实验流程中某一阶段失败，记录阶段名称和随机种子"""

    def __init__(self, stage: str, seed: Optional[int], cause: BaseException):
        self.stage = stage
        self.seed = seed
        self.cause = cause
        super().__init__(f"[stage={stage}, seed={seed}] {type(cause).__name__}: {cause}")
