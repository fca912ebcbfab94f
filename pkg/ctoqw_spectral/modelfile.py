"""Model and density files (JSON, `format: 1`).

Unknown keys are rejected. Matrix entries are real numbers or [re, im] pairs.
See docs/model-format.md for the full dialect.
"""

import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from .dynamics import DensityOperator
from .errors import DensityError, DimensionError, ModelFileError
from .lindblad import Boundary, CTOQWModel, OperatorTable, VertexKind

FORMAT_VERSION = 1

MODEL_KEYS = {"format", "name", "description", "internal_dim", "vertices", "boundary", "operators"}
VERTEX_KEYS = {"kind", "sites"}
OPERATOR_NAMES = ("up", "down", "stay", "hamiltonian")
TABLE_KEYS = {"default", "sites"}
DENSITY_KEYS = {"format", "rho", "description"}


def _read_json(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ModelFileError(f"cannot read {path}: {e}") from e
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFileError(f"invalid JSON in {path.name}: {e.msg}", line=e.lineno, column=e.colno) from e
    if not isinstance(document, dict):
        raise ModelFileError("top level must be an object")
    return document


def _check_keys(obj, allowed: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise ModelFileError("expected an object", key=where or "<root>")
    for key in obj:
        if key not in allowed:
            raise ModelFileError("unknown key", key=f"{where}.{key}" if where else key)


def _require(obj: dict, key: str, where: str = ""):
    if key not in obj:
        raise ModelFileError("missing required key", key=f"{where}.{key}" if where else key)
    return obj[key]


def _check_format(document: dict) -> None:
    version = _require(document, "format")
    if version != FORMAT_VERSION:
        raise ModelFileError(f"unsupported format {version!r}, expected {FORMAT_VERSION}", key="format")


def parse_entry(value, where: str) -> complex:
    if isinstance(value, bool):
        raise ModelFileError("matrix entry must be a number or [re, im]", key=where)
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, list) and len(value) == 2 and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        return complex(value[0], value[1])
    raise ModelFileError("matrix entry must be a number or [re, im]", key=where)


def parse_matrix(value, dim: int, where: str) -> np.ndarray:
    if not isinstance(value, list) or len(value) != dim:
        raise ModelFileError(f"expected {dim} rows", key=where)
    rows = []
    for i, row in enumerate(value):
        if not isinstance(row, list) or len(row) != dim:
            raise ModelFileError(f"expected {dim} entries", key=f"{where}[{i}]")
        rows.append([parse_entry(v, f"{where}[{i}][{j}]") for j, v in enumerate(row)])
    return np.array(rows, dtype=np.complex128)


def encode_matrix(m: np.ndarray) -> list:
    """Inverse of parse_matrix; real entries are written as plain numbers."""
    return [[float(v.real) if v.imag == 0 else [float(v.real), float(v.imag)] for v in row] for row in np.asarray(m, dtype=complex)]


def _parse_table(obj, dim: int, where: str) -> OperatorTable:
    _check_keys(obj, TABLE_KEYS, where)
    default = parse_matrix(_require(obj, "default", where), dim, f"{where}.default")
    overrides = {}
    sites = obj.get("sites", {})
    if not isinstance(sites, dict):
        raise ModelFileError("expected an object", key=f"{where}.sites")
    for label, matrix in sites.items():
        try:
            n = int(label)
        except ValueError:
            raise ModelFileError("site index must be an integer", key=f"{where}.sites.{label}") from None
        overrides[n] = parse_matrix(matrix, dim, f"{where}.sites.{label}")
    return OperatorTable(default, overrides)


def parse_model(document: dict) -> CTOQWModel:
    _check_keys(document, MODEL_KEYS, "")
    _check_format(document)
    dim = _require(document, "internal_dim")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise ModelFileError("internal_dim must be a positive integer", key="internal_dim")

    vertices = _require(document, "vertices")
    _check_keys(vertices, VERTEX_KEYS, "vertices")
    try:
        kind = VertexKind(_require(vertices, "kind", "vertices"))
    except ValueError:
        raise ModelFileError("kind must be finite, halfline or line", key="vertices.kind") from None
    sites = vertices.get("sites")
    if kind == VertexKind.FINITE:
        if not isinstance(sites, int) or isinstance(sites, bool) or sites < 1:
            raise ModelFileError("finite vertex sets need a positive integer site count", key="vertices.sites")
    elif sites is not None:
        raise ModelFileError(f"{kind} vertex sets take no site count", key="vertices.sites")

    try:
        boundary = Boundary(document.get("boundary", Boundary.REFLECTING))
    except ValueError:
        raise ModelFileError("boundary must be reflecting or absorbing", key="boundary") from None

    operators = _require(document, "operators")
    _check_keys(operators, set(OPERATOR_NAMES), "operators")
    tables = {
        name: _parse_table(operators[name], dim, f"operators.{name}") if name in operators else OperatorTable.zeros(dim)
        for name in OPERATOR_NAMES
    }
    try:
        return CTOQWModel(dim=dim, kind=kind, sites=sites, boundary=boundary, name=document.get("name", ""), **tables)
    except DimensionError as e:
        raise ModelFileError(str(e), key="operators") from e


def load_model(path: str | Path) -> CTOQWModel:
    model = parse_model(_read_json(path))
    if not model.name:
        model = replace(model, name=Path(path).stem)
    return model


def model_document(model: CTOQWModel, description: str = "") -> dict:
    """JSON-ready document for a model."""
    vertices = {"kind": str(model.kind)}
    if model.kind == VertexKind.FINITE:
        vertices["sites"] = model.sites
    operators = {}
    for name in OPERATOR_NAMES:
        table: OperatorTable = getattr(model, name)
        entry = {"default": encode_matrix(table.default)}
        if table.overrides:
            entry["sites"] = {str(n): encode_matrix(m) for n, m in sorted(table.overrides.items())}
        operators[name] = entry
    document = {"format": FORMAT_VERSION, "name": model.name}
    if description:
        document["description"] = description
    document |= {"internal_dim": model.dim, "vertices": vertices, "boundary": str(model.boundary), "operators": operators}
    return document


def load_density(path: str | Path, dim: int | None = None) -> DensityOperator:
    document = _read_json(path)
    _check_keys(document, DENSITY_KEYS, "")
    _check_format(document)
    rho = _require(document, "rho")
    # the document shape is a file error, the matrix inside it a density error
    if not isinstance(rho, list) or not rho:
        raise DensityError("rho must be a non-empty square matrix")
    size = len(rho)
    if dim is not None and size != dim:
        raise DensityError(f"density file is {size}x{size}, model needs {dim}x{dim}")
    try:
        matrix = parse_matrix(rho, size, "rho")
    except ModelFileError as exc:
        raise DensityError(str(exc)) from exc
    return DensityOperator(matrix)
