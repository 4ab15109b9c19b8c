from rich.console import Console

console = Console()
# stage failures
error_console = Console(stderr=True)
