"""
命令基础类模块

提供子命令定义、注册和执行的基础架构。
"""

import argparse
from typing import Dict, List, Any, Optional
from abc import ABC, abstractmethod


class Command(ABC):
    """命令基类，所有子命令都应继承此类"""

    name = ""
    description = ""
    aliases: tuple = ()

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        """
        添加子命令特有的参数

        Args:
            parser: 子命令的参数解析器
        """

    @abstractmethod
    def execute(self, args: argparse.Namespace) -> Any:
        """
        执行命令

        应由子类实现实际的执行逻辑

        Args:
            args: 解析后的命令行参数

        Returns:
            Any: 命令执行结果
        """
        pass


class CommandManager:
    """命令管理器，负责命令的注册和查找"""

    def __init__(self):
        """初始化命令管理器"""
        self.commands: Dict[str, Command] = {}
        self.aliases: Dict[str, str] = {}

    def register_command(self, command: Command) -> None:
        """
        注册命令及其别名

        Args:
            command: 要注册的命令对象
        """
        self.commands[command.name] = command
        for alias in command.aliases:
            self.register_alias(alias, command.name)

    def register_alias(self, alias: str, command_name: str) -> bool:
        """
        注册命令别名

        Args:
            alias: 别名
            command_name: 对应的命令名称

        Returns:
            bool: 是否成功注册别名
        """
        if command_name in self.commands:
            self.aliases[alias] = command_name
            return True
        return False

    def get_command(self, name: str) -> Optional[Command]:
        """
        获取命令对象

        Args:
            name: 命令名称或别名

        Returns:
            Optional[Command]: 命令对象，如果未找到则返回None
        """
        if name in self.commands:
            return self.commands[name]

        if name in self.aliases:
            return self.commands[self.aliases[name]]

        return None

    def execute_command(self, name: str, args: argparse.Namespace) -> Any:
        """
        执行命令

        Args:
            name: 命令名称或别名
            args: 解析后的命令行参数

        Returns:
            Any: 命令执行结果

        Raises:
            ValueError: 如果命令未找到
        """
        command = self.get_command(name)
        if command:
            return command.execute(args)

        raise ValueError(f"未找到命令: {name}")

    def get_all_commands(self) -> List[Command]:
        """
        获取所有注册的命令

        Returns:
            List[Command]: 命令列表
        """
        return list(self.commands.values())

    def add_subparsers(self, parser: argparse.ArgumentParser,
                       common: Optional[argparse.ArgumentParser] = None) -> None:
        """
        为每个命令创建子解析器

        Args:
            parser: 主解析器
            common: 所有子命令共享的父解析器
        """
        subparsers = parser.add_subparsers(dest="command", metavar="<command>")
        parents = [common] if common is not None else []
        for command in self.get_all_commands():
            sub = subparsers.add_parser(command.name, aliases=list(command.aliases),
                                        help=command.description, parents=parents)
            command.add_arguments(sub)
