"""
SampledRNN - 无梯度下降的采样循环神经网络

隐藏层权重由数据点对采样得到，外层矩阵由Koopman/EDMD最小二乘求解。
包含基准系统生成、闭环预测、LQR/MPC控制、评价指标和实验命令行工具。
"""

__version__ = "0.1.0"
__author__ = "SampledRNN开发团队"
