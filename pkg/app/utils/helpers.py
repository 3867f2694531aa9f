import logging
import math
import os
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from dotenv import load_dotenv
from pydantic import ValidationError

from app.models.schemas import ComparisonReport, RunConfig, RunRecord
from app.utils.exceptions import ConfigError, TableParseError

logger = logging.getLogger(__name__)
load_dotenv()

TABLE_COLUMNS = ("L", "nv", "ndof", "errL2_u", "errH1_u", "L2_dxph", "infsup")
TABLE_HEADER = "\t".join(TABLE_COLUMNS)
RATE_WINDOW = 3


def output_dir(override: Optional[Union[str, Path]] = None) -> Path:
    """Directory for result tables and meshes, from STRATUM_OUTPUT_DIR unless overridden."""
    if override is not None:
        return Path(override)
    return Path(os.getenv("STRATUM_OUTPUT_DIR", "output"))


def read_config(file_path: Union[str, Path]) -> Dict[str, str]:
    """
    Read a flat `key = value` file. Blank lines and `#` comments are skipped,
    a key given twice is an error.
    """
    file_path = Path(file_path)
    if not file_path.exists():
        raise ConfigError("path", f"config file not found: {file_path}")

    values: Dict[str, str] = {}
    for number, raw in enumerate(file_path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}", f"expected 'key = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {number}", "missing key")
        if key in values:
            raise ConfigError(key, f"given twice (line {number})")
        values[key] = value
    return values


def load_run_config(file_path: Union[str, Path]) -> RunConfig:
    values = read_config(file_path)
    try:
        return RunConfig(**values)
    except ValidationError as e:
        error = e.errors()[0]
        field = ".".join(str(part) for part in error["loc"]) or "config"
        raise ConfigError(field, error["msg"])


def _format(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "nan"
    return f"{value:.3e}"


def format_row(record: RunRecord) -> str:
    return "\t".join([
        str(record.level),
        str(record.total_dofs_coarse),
        str(record.free_dofs_coarse),
        _format(record.error_l2),
        _format(record.error_energy),
        _format(record.estimator),
        _format(record.infsup),
    ])


def write_table(records: Sequence[RunRecord], file_path: Union[str, Path]) -> Path:
    """Write a convergence table, one row per level, `nan` for missing columns."""
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    lines = [TABLE_HEADER] + [format_row(r) for r in records]
    file_path.write_text("\n".join(lines) + "\n")
    logger.info(f"Wrote {len(records)} rows to {file_path}")
    return file_path


def read_table(file_path: Union[str, Path]) -> np.ndarray:
    """Parse a convergence table into an (n, 7) float array."""
    file_path = Path(file_path)
    if not file_path.exists():
        raise TableParseError(str(file_path), 0, "file not found")
    lines = file_path.read_text().splitlines()
    if not lines or lines[0].split() != list(TABLE_COLUMNS):
        raise TableParseError(str(file_path), 1, f"expected header '{TABLE_HEADER}'")

    rows: List[List[float]] = []
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != len(TABLE_COLUMNS):
            raise TableParseError(str(file_path), number,
                                  f"expected {len(TABLE_COLUMNS)} fields, got {len(fields)}")
        try:
            rows.append([float(v) for v in fields])
        except ValueError as e:
            raise TableParseError(str(file_path), number, str(e))
    if not rows:
        raise TableParseError(str(file_path), len(lines), "table has no data rows")
    return np.array(rows)


def fit_slope(dofs: Sequence[float], errors: Sequence[float], window: int = RATE_WINDOW) -> float:
    """Least-squares slope of log(error) against log(dofs) over the last `window` points."""
    dofs = np.asarray(dofs, dtype=float)[-window:]
    errors = np.asarray(errors, dtype=float)[-window:]
    if len(dofs) < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(dofs), np.log(errors), 1)
    return float(slope)


def dofs_for_error(dofs: Sequence[float], errors: Sequence[float], target: float) -> float:
    """
    DOF count at which a convergence curve reaches `target`, by log-log
    interpolation between levels. Below the last error the curve is
    extrapolated with the slope of the last levels.
    """
    dofs = np.asarray(dofs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if target >= errors[0]:
        return float(dofs[0])
    for k in range(1, len(errors)):
        if errors[k] <= target:
            a, b = np.log(errors[k - 1]), np.log(errors[k])
            if a == b:
                return float(dofs[k])
            w = (np.log(target) - a) / (b - a)
            return float(np.exp((1.0 - w) * np.log(dofs[k - 1]) + w * np.log(dofs[k])))
    slope = fit_slope(dofs, errors)
    if not np.isfinite(slope) or slope >= 0.0:
        return float("inf")
    return float(dofs[-1] * (target / errors[-1]) ** (1.0 / slope))


def _comparison_column(table_a: np.ndarray, table_b: np.ndarray) -> int:
    energy = TABLE_COLUMNS.index("errH1_u")
    if np.all(np.isfinite(table_a[:, energy])) and np.all(np.isfinite(table_b[:, energy])):
        return energy
    return TABLE_COLUMNS.index("L2_dxph")


def compare_tables(path_a: Union[str, Path], path_b: Union[str, Path]) -> ComparisonReport:
    """
    Fitted rates of two tables, the DOFs each needs to reach the other's
    final error, and both DOF counts at the smaller final error (energy
    error when both tables have it, else the estimator).
    """
    table_a, table_b = read_table(path_a), read_table(path_b)
    column = _comparison_column(table_a, table_b)
    nv = TABLE_COLUMNS.index("nv")
    dofs_a, err_a = table_a[:, nv], table_a[:, column]
    dofs_b, err_b = table_b[:, nv], table_b[:, column]
    target = float(min(err_a[-1], err_b[-1]))
    return ComparisonReport(
        column=TABLE_COLUMNS[column],
        slope_a=fit_slope(dofs_a, err_a),
        slope_b=fit_slope(dofs_b, err_b),
        final_error_a=float(err_a[-1]),
        final_error_b=float(err_b[-1]),
        dofs_a=dofs_for_error(dofs_a, err_a, float(err_b[-1])),
        dofs_b=dofs_for_error(dofs_b, err_b, float(err_a[-1])),
        target_error=target,
        matched_dofs_a=dofs_for_error(dofs_a, err_a, target),
        matched_dofs_b=dofs_for_error(dofs_b, err_b, target),
    )


def rate_summary(records: Sequence[RunRecord]) -> str:
    """Fitted slopes over the last levels and the final effectivity."""
    if not records:
        return "no levels computed"
    dofs = [r.total_dofs_coarse for r in records]
    columns = {
        "errL2_u": [r.error_l2 for r in records],
        "errH1_u": [r.error_energy for r in records],
        "L2_dxph": [r.estimator for r in records],
    }
    lines = [f"levels: {len(records)}, final nv: {dofs[-1]}"]
    for name, values in columns.items():
        if any(v is None or v <= 0.0 for v in values[-RATE_WINDOW:]):
            continue
        lines.append(f"slope {name}: {fit_slope(dofs, values):.3f}")
    effectivity = records[-1].effectivity
    if effectivity is not None:
        lines.append(f"effectivity: {effectivity:.3f}")
    return "\n".join(lines)
