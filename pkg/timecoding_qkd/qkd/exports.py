"""
CSV and JSON artifact writers.

Payloads are deterministic: floats are formatted with one fixed format,
JSON keys are sorted, CSV uses ',' and LF line endings. The only
run-dependent content, the creation time, lives in the JSON ``metadata``
block.
"""

import csv
import io
import json
import logging
import math
from collections.abc import Iterable
from collections.abc import Mapping
from collections.abc import Sequence
from enum import Enum
from pathlib import Path
from typing import Any
from typing import Dict
from typing import Optional

import numpy as np
from django.utils import timezone

from timecoding_qkd import __version__

logger = logging.getLogger(__name__)

DEFAULT_FLOAT_FORMAT = ".10g"


def format_cell(value: Any, float_format: str = DEFAULT_FLOAT_FORMAT) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return "nan"
        return format(float(value), float_format)
    return str(value)


def csv_text(rows: Iterable[Mapping[str, Any]], columns: Optional[Sequence[str]] = None, float_format: str = DEFAULT_FLOAT_FORMAT) -> str:
    """
    Render rows as CSV with a header row.

    Args:
        rows: One mapping per row
        columns: Column order; defaults to the keys of the first row

    Returns:
        CSV text with LF line endings
    """
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    buffer = io.StringIO()
    writer = csv.writer(buffer, delimiter=",", lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_cell(row.get(column), float_format) for column in columns])
    return buffer.getvalue()


def write_csv(
    path: str | Path,
    rows: Iterable[Mapping[str, Any]],
    columns: Optional[Sequence[str]] = None,
    float_format: str = DEFAULT_FLOAT_FORMAT,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(csv_text(rows, columns, float_format))
    logger.debug(f"Wrote {path}")
    return path


def to_plain(value: Any, float_format: str = DEFAULT_FLOAT_FORMAT) -> Any:
    """Convert numpy types, enums, tuples and NaN into JSON-safe values with fixed float formatting."""
    if isinstance(value, Mapping):
        return {str(k.value if isinstance(k, Enum) else k): to_plain(v, float_format) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [to_plain(v, float_format) for v in value]
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            return None
        return float(format(float(value), float_format))
    return value


def json_text(data: Any, float_format: str = DEFAULT_FLOAT_FORMAT) -> str:
    return json.dumps(to_plain(data, float_format), indent=2, sort_keys=True) + "\n"


def metadata(command: str, **extra: Any) -> Dict[str, Any]:
    return {
        "command": command,
        "created": timezone.now().isoformat(),
        "version": __version__,
        **extra,
    }


def write_json(
    path: str | Path,
    data: Any,
    meta: Optional[Mapping[str, Any]] = None,
    float_format: str = DEFAULT_FLOAT_FORMAT,
) -> Path:
    """
    Write ``{"data": ..., "metadata": ...}``.

    Everything that must be reproducible goes in ``data``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {"data": data, "metadata": dict(meta or {})}
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(json_text(document, float_format))
    logger.debug(f"Wrote {path}")
    return path


def read_json_data(path: str | Path) -> Any:
    """The ``data`` block of an artifact written by ``write_json``."""
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)["data"]
