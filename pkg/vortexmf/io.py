"""CSV and JSON readers/writers for fields, tabular series and reports."""
import csv
import dataclasses
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Union

import numpy as np

from vortexmf.core.errors import ConfigurationError
from vortexmf.domain import DomainMesh, ScalarField

logger = logging.getLogger(__name__)

FIELD_COLUMNS = ["node_id", "x", "y", "weight", "value"]

PathLike = Union[str, Path]


def to_jsonable(obj: Any) -> Any:
    """Plain JSON types; non-finite floats become strings so output stays valid JSON"""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if hasattr(obj, "model_dump"):
        return to_jsonable(obj.model_dump())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        if math.isfinite(value):
            return value
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return obj


def dumps(payload: Any) -> str:
    return json.dumps(to_jsonable(payload), sort_keys=True, indent=2)


def write_json(path: PathLike, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(payload) + "\n", encoding="utf-8")
    logger.debug(f"Wrote {path}")
    return path


def read_json(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigurationError(f"file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"invalid JSON in {path}: {str(e)}") from e


def write_rows_csv(path: PathLike, rows: Iterable[Dict[str, Any]]) -> Path:
    rows = list(rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns: List[str] = []
    for row in rows:
        columns.extend(k for k in row if k not in columns)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: to_jsonable(v) for k, v in row.items()})
    return path


def write_field_csv(path: PathLike, field: ScalarField) -> Path:
    """Dump a nodal field as (node_id, x, y, weight, value)"""
    mesh = field.mesh
    rows = (
        {"node_id": i, "x": repr(float(mesh.x[i])), "y": repr(float(mesh.y[i])),
         "weight": repr(float(mesh.weights[i])), "value": repr(float(field.values[i]))}
        for i in range(mesh.n_nodes)
    )
    return write_rows_csv(path, rows)


def read_field_csv(path: PathLike, mesh: DomainMesh) -> ScalarField:
    """Read a field written by write_field_csv and check it against the mesh"""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != FIELD_COLUMNS:
                raise ConfigurationError(f"{path} does not have the columns {FIELD_COLUMNS}")
            data = [[float(row[c]) for c in FIELD_COLUMNS] for row in reader]
    except FileNotFoundError as e:
        raise ConfigurationError(f"field file not found: {path}") from e
    table = np.array(data, dtype=float).reshape(-1, len(FIELD_COLUMNS))
    if table.shape[0] != mesh.n_nodes:
        raise ConfigurationError(f"{path} has {table.shape[0]} rows, mesh has {mesh.n_nodes} nodes")
    order = np.argsort(table[:, 0])
    table = table[order]
    if not (np.allclose(table[:, 1], mesh.x, atol=1e-12) and np.allclose(table[:, 2], mesh.y, atol=1e-12)):
        raise ConfigurationError(f"node coordinates in {path} do not match the mesh")
    return ScalarField(mesh, table[:, 4])
