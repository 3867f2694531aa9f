from .space import (FeSpace,
                    Prolongation,
                    build_space,
                    build_prolongation,
                    prolongate,
                    interpolate,
                    evaluate)
from .assembly import (QuadRule,
                       AssembledSystem,
                       quad_rule,
                       local_A,
                       local_B,
                       assemble_system)
from .solver import (SaddleSolution,
                     factor_spd,
                     solve_saddle,
                     y_norm,
                     discrete_x_norm,
                     infsup_constant)
from .adapt import (IndicatorField,
                    StudyResult,
                    local_indicators,
                    dorfler_mark,
                    adaptive_solve,
                    uniform_solve)
from .problems import (ProblemDef,
                       PROBLEMS,
                       get_problem)

__all__ = [
    'FeSpace',
    'Prolongation',
    'build_space',
    'build_prolongation',
    'prolongate',
    'interpolate',
    'evaluate',
    'QuadRule',
    'AssembledSystem',
    'quad_rule',
    'local_A',
    'local_B',
    'assemble_system',
    'SaddleSolution',
    'factor_spd',
    'solve_saddle',
    'y_norm',
    'discrete_x_norm',
    'infsup_constant',
    'IndicatorField',
    'StudyResult',
    'local_indicators',
    'dorfler_mark',
    'adaptive_solve',
    'uniform_solve',
    'ProblemDef',
    'PROBLEMS',
    'get_problem'
]
