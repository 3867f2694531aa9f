from .exceptions import (StratumError,
                         InputError,
                         DefinitenessError,
                         ConvergenceError,
                         ConfigError,
                         TableParseError)
from .helpers import (TABLE_HEADER,
                      output_dir,
                      read_config,
                      load_run_config,
                      write_table,
                      read_table,
                      fit_slope,
                      dofs_for_error,
                      compare_tables,
                      rate_summary)

__all__ = [
    'StratumError',
    'InputError',
    'DefinitenessError',
    'ConvergenceError',
    'ConfigError',
    'TableParseError',
    'TABLE_HEADER',
    'output_dir',
    'read_config',
    'load_run_config',
    'write_table',
    'read_table',
    'fit_slope',
    'dofs_for_error',
    'compare_tables',
    'rate_summary'
]
