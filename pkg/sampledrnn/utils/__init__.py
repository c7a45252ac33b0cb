"""
工具函数包

包含实验配置的查找、读写等功能。
"""
