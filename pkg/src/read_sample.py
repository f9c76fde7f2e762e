import re
from pathlib import Path
from typing import List

import numpy as np
import pandas as pd

from src.user_errors import DataFormatError
from src.user_types import Sample


def _numbered_columns(header: List[str], prefix: str) -> List[str]:
    """The columns prefix1, prefix2, ... up to the largest index present, all required."""
    indexes = [int(m[1]) for m in (re.fullmatch(rf"{prefix}(\d+)", name) for name in header) if m]
    expected = [f"{prefix}{i}" for i in range(1, max(indexes, default=1) + 1)]
    for name in expected:
        if name not in header:
            raise DataFormatError(f"Missing column '{name}'.")
    return expected


def read_sample(path: Path) -> Sample:
    """
    Read a CSV file with a header row, covariates in x1..xd and responses in y1..yk.

    Other columns are ignored. Only the decimal point is accepted.

    Raises:
        DataFormatError: unreadable file, missing column, empty or non-numeric cell. The message
            gives the line and column of the first offending cell.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except FileNotFoundError:
        raise DataFormatError(f"{path}: no such file.")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataFormatError(f"{path}: {e}")
    header = [str(name).strip() for name in frame.columns]
    frame.columns = header
    x_columns = _numbered_columns(header, "x")
    y_columns = _numbered_columns(header, "y")
    if frame.empty:
        raise DataFormatError(f"{path}: no data row.")
    values = {}
    for name in x_columns + y_columns:
        numbers = pd.to_numeric(frame[name].str.strip(), errors="coerce")
        bad = np.flatnonzero(~np.isfinite(numbers.to_numpy(dtype=float)))
        if bad.size:
            (line, column) = (bad[0] + 2, header.index(name) + 1)  # line 1 is the header
            raise DataFormatError(
                f"{path}:{line}:{column}: non-numeric value '{frame[name].iloc[bad[0]]}' in column '{name}'."
            )
        values[name] = numbers.to_numpy(dtype=float)
    X = np.column_stack([values[name] for name in x_columns])
    Y = np.column_stack([values[name] for name in y_columns])
    return Sample(X, Y)
