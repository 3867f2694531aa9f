from .commands import (cli,
                       run,
                       compare,
                       execute_run,
                       RunOutcome)

__all__ = [
    'cli',
    'run',
    'compare',
    'execute_run',
    'RunOutcome'
]
