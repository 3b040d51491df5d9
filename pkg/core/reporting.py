"""
Artifact writers: JSON/YAML reports, unit-annotated CSV tables and run manifests.
"""

import csv
import dataclasses
import enum
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from core import __version__
from utils.error_handling import MalformedDataError, validate_file_path

MANIFEST_NAME = "manifest.json"

# column formats: frequencies in GHz to the kHz, probabilities to 6 significant digits
FREQUENCY_FORMAT = "{:.6f}"
PROBABILITY_FORMAT = "{:.5e}"


def to_serializable(obj: Any) -> Any:
    """
    Convert results into plain JSON/YAML types.

    Dataclasses become dicts, numpy scalars and arrays become Python numbers
    and lists, complex numbers become [re, im], non-finite floats become None.
    """
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_serializable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): to_serializable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_serializable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_serializable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_serializable(float(obj.real)), to_serializable(float(obj.imag))]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def format_report(data: Any, format_name: str = "json") -> str:
    """
    Render a report as JSON or YAML.

    Args:
        data: Result object or mapping
        format_name: 'json' or 'yaml'

    Returns:
        Formatted string
    """
    plain = to_serializable(data)
    if format_name == "json":
        return json.dumps(plain, indent=2, ensure_ascii=False)
    if format_name == "yaml":
        return yaml.dump(plain, default_flow_style=False, allow_unicode=True, sort_keys=False)
    raise ValueError(f"Unsupported format: {format_name}")


def atomic_write_text(path: Path, text: str) -> Path:
    """Write text next to path, then rename over it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_report(path: Path, data: Any, format_name: str = "json") -> Path:
    return atomic_write_text(path, format_report(data, format_name) + "\n")


def _format_cell(value: Any, kind: str) -> str:
    if value is None:
        return ""
    if kind == "f":
        return FREQUENCY_FORMAT.format(float(value))
    if kind == "p":
        return PROBABILITY_FORMAT.format(float(value))
    if kind == "i":
        return str(int(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]],
              units: str, kinds: Optional[Sequence[str]] = None) -> Path:
    """
    Write a CSV table with a leading '# units' comment line and a header row.

    Args:
        path: Output file
        header: Column names
        rows: Table rows
        units: Unit description for the comment line
        kinds: Per-column format: 'f' frequency, 'p' probability, 'i' integer, 's' verbatim

    Returns:
        Path written
    """
    kinds = list(kinds) if kinds is not None else ["s"] * len(header)
    if len(kinds) != len(header):
        raise ValueError("kinds must match header length")
    lines = [f"# units: {units}", ",".join(header)]
    for row in rows:
        lines.append(",".join(_format_cell(v, k) for v, k in zip(row, kinds)))
    return atomic_write_text(path, "\n".join(lines) + "\n")


@dataclass
class RunManifest:
    command: str
    config_path: str
    parameters: Dict[str, Any]
    output_dir: str
    seed: Optional[int] = None
    tool_version: str = __version__
    outputs: List[str] = field(default_factory=list)

    def write(self) -> Path:
        return write_report(Path(self.output_dir) / MANIFEST_NAME, self)


def read_manifest(path: Path) -> RunManifest:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return RunManifest(**data)


def load_series_csv(path: Path) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """
    Read a (depth, value[, shots]) series. Comment lines start with '#'; a
    non-numeric first row is taken as the header.

    Raises:
        MalformedDataError: If a row has fewer than two columns or a
            non-numeric cell
    """
    path = validate_file_path(str(path))
    with open(path, "r", encoding="utf-8", newline="") as handle:
        rows = [row for row in csv.reader(handle) if row and not row[0].lstrip().startswith("#")]
    if rows:
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]
    if not rows:
        raise MalformedDataError(f"{path}: no data rows")
    x, y, shots = [], [], []
    for i, row in enumerate(rows, start=1):
        if len(row) < 2:
            raise MalformedDataError(f"{path}: row {i} has {len(row)} columns, expected at least 2")
        try:
            x.append(float(row[0]))
            y.append(float(row[1]))
            if len(row) > 2 and row[2].strip():
                shots.append(int(float(row[2])))
        except ValueError as e:
            raise MalformedDataError(f"{path}: row {i} is not numeric ({e})")
    return np.array(x), np.array(y), (np.array(shots) if len(shots) == len(x) else None)
