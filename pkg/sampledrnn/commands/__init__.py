"""
命令模块处理命令行子命令

此模块包含子命令的注册和执行，每个子命令对应一个实验阶段。
"""
