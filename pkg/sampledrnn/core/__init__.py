"""
核心模块包含采样RNN的数值功能：
- 数值内核（最小二乘、伪逆、特征值、PCA）
- 隐藏层采样
- 动力系统与轨迹数据
- 延迟嵌入
- 模型拟合与预测
- 控制与评价指标
- 实验流程
"""
