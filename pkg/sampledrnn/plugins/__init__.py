"""
插件模块提供基准动力系统

每个插件给出向量场、默认参数和数据生成协议。
"""
