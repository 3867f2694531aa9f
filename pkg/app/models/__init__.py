from .schemas import (ProblemKind,
                      BoundaryTag,
                      BcSelector,
                      AdaptiveConfig,
                      RunRecord,
                      RunConfig,
                      ComparisonReport)

__all__ = [
    'ProblemKind',
    'BoundaryTag',
    'BcSelector',
    'AdaptiveConfig',
    'RunRecord',
    'RunConfig',
    'ComparisonReport'
]
