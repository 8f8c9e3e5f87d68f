"""Versioned JSON documents for datasets, models, traces, scores, and configs.

Every document starts with a ``schema`` tag.  Arrays are stored flat in
row-major order next to the dimensions needed to reshape them.  Writers sort
keys and use a fixed layout so that equal content gives identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np

from moxi.greedy import SelectionTrace
from moxi.tasks import PatchClassifierModel, PatchGridInstance, SetSumGame

DATASET_SCHEMA = "moxi-dataset/1"
MODEL_SCHEMA = "moxi-model/1"
TRACE_SCHEMA = "moxi-trace/1"
SCORES_SCHEMA = "moxi-scores/1"
CONFIG_SCHEMA = "moxi-config/1"
MANIFEST_SCHEMA = "moxi-manifest/1"


class FormatError(ValueError):
    """A document could not be parsed; carries the file, line, and field when known."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None, fieldname: str | None = None):
        where = []
        if path:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if fieldname:
            where.append(f"field '{fieldname}'")
        super().__init__(f"{': '.join(where) + ': ' if where else ''}{message}")
        self.path = path
        self.line = line
        self.fieldname = fieldname


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def digest(doc: Any) -> str:
    """SHA-256 of the canonical JSON encoding of ``doc``."""
    return hashlib.sha256(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def load_json(path: str | Path, schema: str | None = None) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, str(path), exc.lineno) from exc
    if not isinstance(doc, dict):
        raise FormatError("top level must be an object", str(path), 1)
    if schema is not None and doc.get("schema") != schema:
        raise FormatError(f"expected schema {schema!r}, found {doc.get('schema')!r}", str(path), fieldname="schema")
    return doc


def _get(doc: dict, key: str, where: str, path: str | None):
    if key not in doc:
        raise FormatError("missing", path, fieldname=f"{where}{key}")
    return doc[key]


# datasets ---------------------------------------------------------------

def dataset_to_dict(instances, kind: str | None = None) -> dict:
    if kind is None:
        kind = "setsum" if instances and isinstance(instances[0], SetSumGame) else "patch-grid"
    rows = []
    for x in instances:
        if kind == "setsum":
            rows.append({"id": str(x.id), "grid": list(x.grid or (1, x.n)), "values": list(x.values), "label": x.label})
        else:
            rows.append({
                "id": str(x.id),
                "grid": list(x.grid),
                "label": int(x.label),
                "d": int(x.d),
                "features": [float(v) for v in x.features.reshape(-1)],
            })
    return {"schema": DATASET_SCHEMA, "kind": kind, "instances": rows}


def dataset_from_dict(doc: dict, path: str | None = None) -> list:
    kind = _get(doc, "kind", "", path)
    rows = _get(doc, "instances", "", path)
    if not isinstance(rows, list):
        raise FormatError("must be a list", path, fieldname="instances")
    out = []
    for k, row in enumerate(rows):
        where = f"instances[{k}]."
        try:
            grid = tuple(int(g) for g in _get(row, "grid", where, path))
            ident = str(row.get("id", k))
            if kind == "setsum":
                game = SetSumGame(tuple(int(v) for v in _get(row, "values", where, path)), id=ident, grid=grid)
                if "label" in row and int(row["label"]) != game.label:
                    raise FormatError(f"label {row['label']} is not the distinct sum {game.label}", path,
                                      fieldname=where + "label")
                out.append(game)
            elif kind == "patch-grid":
                d = int(_get(row, "d", where, path))
                feats = np.asarray(_get(row, "features", where, path), dtype=np.float64)
                if feats.size != grid[0] * grid[1] * d:
                    raise FormatError(f"expected {grid[0] * grid[1] * d} values, got {feats.size}", path,
                                      fieldname=where + "features")
                out.append(PatchGridInstance(grid, feats.reshape(grid[0] * grid[1], d),
                                             int(_get(row, "label", where, path)), ident))
            else:
                raise FormatError(f"unknown dataset kind {kind!r}", path, fieldname="kind")
        except FormatError:
            raise
        except (TypeError, ValueError) as exc:
            raise FormatError(str(exc), path, fieldname=where.rstrip(".")) from exc
    return out


def load_dataset(path: str | Path) -> list:
    return dataset_from_dict(load_json(path, DATASET_SCHEMA), str(path))


# models -----------------------------------------------------------------

def model_to_dict(model: PatchClassifierModel) -> dict:
    return {
        "schema": MODEL_SCHEMA,
        "d": model.d,
        "C": model.n_classes,
        "weights": [float(v) for v in model.weights.reshape(-1)],
        "bias": [float(v) for v in model.bias],
        "mask_fill": [float(v) for v in model.mask_fill],
        "coupling": None if model.coupling is None else [float(v) for v in model.coupling.reshape(-1)],
    }


def model_from_dict(doc: dict, path: str | None = None) -> PatchClassifierModel:
    try:
        d = int(_get(doc, "d", "", path))
        c = int(_get(doc, "C", "", path))
        weights = np.asarray(_get(doc, "weights", "", path), dtype=np.float64)
        if weights.size != c * d:
            raise FormatError(f"expected {c * d} values, got {weights.size}", path, fieldname="weights")
        coupling = doc.get("coupling")
        if coupling is not None:
            coupling = np.asarray(coupling, dtype=np.float64)
            if coupling.size != c * d * d:
                raise FormatError(f"expected {c * d * d} values, got {coupling.size}", path, fieldname="coupling")
            coupling = coupling.reshape(c, d, d)
        return PatchClassifierModel(weights.reshape(c, d), _get(doc, "bias", "", path),
                                    doc.get("mask_fill"), coupling)
    except FormatError:
        raise
    except (TypeError, ValueError) as exc:
        raise FormatError(str(exc), path) from exc


def load_model(path: str | Path) -> PatchClassifierModel:
    return model_from_dict(load_json(path, MODEL_SCHEMA), str(path))


# traces -----------------------------------------------------------------

def trace_to_dict(trace: SelectionTrace, **meta) -> dict:
    doc = {"schema": TRACE_SCHEMA}
    doc.update(trace.to_dict())
    doc.update(meta)
    return doc


def trace_from_dict(doc: dict, path: str | None = None) -> SelectionTrace:
    try:
        return SelectionTrace.from_dict(doc)
    except KeyError as exc:
        raise FormatError("missing", path, fieldname=str(exc.args[0])) from exc
    except (TypeError, ValueError) as exc:
        raise FormatError(str(exc), path) from exc


def load_trace(path: str | Path) -> tuple[SelectionTrace, dict]:
    doc = load_json(path, TRACE_SCHEMA)
    return trace_from_dict(doc, str(path)), doc


def write_text(path: str | Path, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
