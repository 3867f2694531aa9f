from enum import Enum, IntEnum
from typing import FrozenSet, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

PROBLEM_NAMES = (
    "poisson_lshape",
    "heat_smooth",
    "heat_discontinuous",
    "heat_incompatible",
    "wave_smooth",
    "wave_incompatible",
)
OUTPUT_FLAGS = ("table", "svg_meshes", "infsup")


class ProblemKind(str, Enum):
    POISSON = "poisson"
    HEAT = "heat"
    WAVE = "wave"


class BoundaryTag(IntEnum):
    """Boundary edge tags. Sides of rectangles are (x, t) sides for space-time domains."""
    LEFT = 1
    RIGHT = 2
    BOTTOM = 3
    TOP = 4
    DIRICHLET = 5


class BcSelector(BaseModel):
    """Boundary tags on which nodal values are constrained."""
    model_config = ConfigDict(frozen=True)

    constrained_tags: FrozenSet[int] = frozenset()


class AdaptiveConfig(BaseModel):
    theta: float = Field(0.5, gt=0.0, le=1.0)
    max_levels: int = Field(8, ge=1)
    max_dofs: int = Field(200_000, ge=1)
    refine_ratio: Literal["half", "quarter"] = "half"
    solver_tol: float = Field(1e-10, gt=0.0, le=1e-6)
    infsup: bool = False
    progress: bool = False

    @property
    def fine_levels(self) -> int:
        """Uniform refinements taking the coarse mesh to the test mesh."""
        return 1 if self.refine_ratio == "half" else 2


class RunRecord(BaseModel):
    """One row of a convergence table."""
    level: int = Field(ge=0)
    total_dofs_coarse: int = Field(ge=0)
    free_dofs_coarse: int = Field(ge=0)
    free_dofs_fine: int = Field(ge=0)
    error_l2: Optional[float] = None
    error_energy: Optional[float] = None
    estimator: float = Field(ge=0.0)
    infsup: Optional[float] = None
    solver_iterations: int = 0

    @property
    def effectivity(self) -> Optional[float]:
        if not self.error_energy:
            return None
        return self.estimator / self.error_energy


class RunConfig(BaseModel):
    """A batch run as read from a flat key=value config file."""
    model_config = ConfigDict(extra="forbid")

    name: Optional[str] = None
    problem: Literal[PROBLEM_NAMES]
    mode: Literal["uniform", "adaptive"] = "uniform"
    theta: Optional[float] = Field(None, gt=0.0, le=1.0)
    refine_ratio: Literal["half", "quarter"] = "half"
    max_levels: int = Field(6, ge=1)
    max_dofs: int = Field(200_000, ge=1)
    initial_mesh: Optional[Tuple[int, int]] = None
    solver_tol: float = Field(1e-10, gt=0.0, le=1e-6)
    outputs: FrozenSet[Literal[OUTPUT_FLAGS]] = frozenset({"table"})

    @field_validator("initial_mesh", mode="before")
    @classmethod
    def _parse_grid(cls, value):
        if isinstance(value, str):
            parts = value.lower().replace(" ", "").split("x")
            if len(parts) != 2 or not all(p.isdigit() for p in parts):
                raise ValueError(f"expected grid dimensions like '2x4', got '{value}'")
            value = (int(parts[0]), int(parts[1]))
        if value is not None and min(value) < 1:
            raise ValueError("grid dimensions must be positive")
        return value

    @field_validator("outputs", mode="before")
    @classmethod
    def _parse_outputs(cls, value):
        if isinstance(value, str):
            return frozenset(v.strip() for v in value.split(",") if v.strip())
        return value

    @property
    def stem(self) -> str:
        return self.name or f"{self.problem}_{self.mode}"

    def adaptive_config(self, default_theta: float, progress: bool = False) -> AdaptiveConfig:
        return AdaptiveConfig(
            theta=self.theta if self.theta is not None else default_theta,
            max_levels=self.max_levels,
            max_dofs=self.max_dofs,
            refine_ratio=self.refine_ratio,
            solver_tol=self.solver_tol,
            infsup="infsup" in self.outputs,
            progress=progress,
        )


class ComparisonReport(BaseModel):
    """
    Rate comparison of two convergence tables. `dofs_a` is what table a
    needs to reach the final error of table b, `dofs_b` the reverse.
    """
    column: str
    slope_a: float
    slope_b: float
    final_error_a: float
    final_error_b: float
    dofs_a: float
    dofs_b: float
    target_error: float
    matched_dofs_a: float
    matched_dofs_b: float

    @property
    def dof_ratio(self) -> float:
        """DOFs table b needs over DOFs table a needs, both at the smaller final error."""
        return self.matched_dofs_b / self.matched_dofs_a
