import glob
import importlib
import os
from inspect import signature, Parameter
from Errors import UsageError


class Commands:
    """Registry of the command-line operations found in ``commands/*.py``.

    Every module there defines a class named like the module that subclasses
    Commands and maps command names to bound methods in ``self.commands``.
    """

    def __init__(self):
        self.commands = self.load_commands()

    def load_command_files(self):
        package_dir = os.path.join(os.path.dirname(__file__), "commands")
        return sorted(glob.glob(os.path.join(package_dir, "*.py")))

    def load_commands(self):
        commands = []
        for command_file in self.load_command_files():
            module_name = os.path.splitext(os.path.basename(command_file))[0]
            if module_name == "__init__":
                continue
            module = importlib.import_module(f"commands.{module_name}")
            command_class = getattr(module, module_name, None)
            if command_class is None or not issubclass(command_class, Commands):
                continue
            instance = command_class()
            for command_name, command_function in getattr(instance, "commands", {}).items():
                commands.append(
                    (
                        command_name,
                        instance,
                        command_function.__name__,
                        self.get_command_params(command_function),
                    )
                )
        return commands

    def get_command_params(self, func):
        params = {}
        for name, param in signature(func).parameters.items():
            if param.default == Parameter.empty:
                params[name] = None
            else:
                params[name] = param.default
        return params

    def find_command(self, command_name: str):
        for name, instance, function_name, params in self.commands:
            if name == command_name:
                return getattr(instance, function_name), dict(params)
        return None, None

    def execute_command(self, command_name: str, command_args: dict):
        command_function, params = self.find_command(command_name)
        if command_function is None:
            raise UsageError(f"Unknown command '{command_name}'")
        for name, value in command_args.items():
            if name in params and value is not None:
                params[name] = value
        return command_function(**params)
