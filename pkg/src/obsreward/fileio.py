"""File formats: dataset JSONL, model/fit JSON, reports, config schema, ingestion."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Mapping, Optional, Sequence

import jsonschema
import numpy as np

from .errors import ConfigError, InputError
from .model import Dataset, DgpConfig, Item, PreferencePair, SCENARIOS

ITEMS_FILE = "items.jsonl"
PAIRS_FILE = "pairs.jsonl"


def atomic_write(path, text: str) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, Mapping):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps(obj, indent: Optional[int] = None) -> str:
    if indent is None:
        return json.dumps(clean(obj), separators=(",", ":"), allow_nan=False)
    return json.dumps(clean(obj), indent=indent, allow_nan=False, sort_keys=True)


# ---- datasets ---------------------------------------------------------------

def item_to_json(it: Item, split: str) -> dict:
    out = {
        "id": it.id,
        "embedding": list(it.embedding),
        "confounders": dict(sorted(it.confounders.items())),
        "instruments": dict(sorted(it.instruments.items())),
    }
    if it.latent is not None:
        out["latent"] = dict(sorted(it.latent.items()))
    out["outcome"] = it.outcome
    if it.time_month is not None:
        out["month"] = it.time_month
    if it.time_weekday is not None:
        out["weekday"] = it.time_weekday
    out["split"] = split
    if it.context_id is not None:
        out["context_id"] = it.context_id
    return out


def item_from_json(d: Mapping, where: str = "") -> tuple:
    try:
        item = Item(
            id=str(d["id"]),
            embedding=d["embedding"],
            outcome=d["outcome"],
            confounders=d.get("confounders") or {},
            instruments=d.get("instruments") or {},
            latent=d.get("latent"),
            time_month=d.get("month"),
            time_weekday=d.get("weekday"),
            context_id=d.get("context_id"),
        )
    except KeyError as e:
        raise InputError(f"{where}: missing field {e.args[0]!r}") from None
    except (TypeError, ValueError) as e:
        raise InputError(f"{where}: {e}") from None
    return item, d.get("split", "train")


def pair_to_json(p: PreferencePair) -> dict:
    return {"context_id": p.context_id, "winner_id": p.winner_id, "loser_id": p.loser_id, "margin": p.margin}


def dataset_lines(ds: Dataset) -> tuple:
    items = "".join(dumps(item_to_json(it, ds.split_of(it.id))) + "\n" for it in ds.items)
    pairs = "".join(dumps(pair_to_json(p)) + "\n" for p in ds.pairs)
    return items, pairs


def write_dataset(ds: Dataset, directory) -> None:
    directory = Path(directory)
    items, pairs = dataset_lines(ds)
    atomic_write(directory / ITEMS_FILE, items)
    atomic_write(directory / PAIRS_FILE, pairs)


def _read_jsonl(path: Path) -> list:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise InputError(f"{path}:{lineno}: invalid JSON ({e.msg})") from None
    return rows


def read_dataset(directory) -> Dataset:
    directory = Path(directory)
    items, split = [], {}
    for k, row in enumerate(_read_jsonl(directory / ITEMS_FILE), 1):
        item, s = item_from_json(row, f"{ITEMS_FILE} line {k}")
        items.append(item)
        split[item.id] = s
    pairs = []
    pairs_path = directory / PAIRS_FILE
    if pairs_path.exists():
        for k, row in enumerate(_read_jsonl(pairs_path), 1):
            try:
                pairs.append(PreferencePair(str(row["context_id"]), str(row["winner_id"]), str(row["loser_id"]), float(row["margin"])))
            except KeyError as e:
                raise InputError(f"{PAIRS_FILE} line {k}: missing field {e.args[0]!r}") from None
    return Dataset(items, pairs, split)


# ---- ingestion --------------------------------------------------------------

def _cell(value, row: int, column: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise InputError(f"row {row}, column {column!r}: not a number ({value!r})") from None
    if not math.isfinite(v):
        raise InputError(f"row {row}, column {column!r}: non-finite value ({value!r})")
    return v


def ingest(path, fmt: str, mapping: Mapping) -> Dataset:
    """Build a validated dataset from CSV or JSONL rows.

    ``mapping`` keys: ``embedding`` (list of columns, or one field holding a
    list), ``outcome``; optional ``id``, ``confounders`` / ``instruments``
    (name -> column), ``month``, ``weekday``, ``split``, ``context``. Rows are
    numbered from 1, excluding any CSV header.
    """
    from .model import validate

    if fmt not in ("csv", "jsonl"):
        raise ConfigError(f"format must be csv or jsonl, got {fmt!r}", "format")
    for key in ("embedding", "outcome"):
        if key not in mapping:
            raise ConfigError(f"column mapping needs {key!r}", key)
    path = Path(path)
    if fmt == "csv":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    else:
        rows = _read_jsonl(path)
    emb_spec = mapping["embedding"]
    items, split = [], {}
    for r, row in enumerate(rows, 1):
        def get(col):
            if col not in row:
                raise InputError(f"row {r}: missing column {col!r}")
            return row[col]

        if isinstance(emb_spec, str):
            raw = get(emb_spec)
            if isinstance(raw, str):
                raw = json.loads(raw)
            emb = [_cell(v, r, emb_spec) for v in raw]
        else:
            emb = [_cell(get(c), r, c) for c in emb_spec]
        item_id = str(get(mapping["id"])) if "id" in mapping else f"row-{r:07d}"
        conf = {n: _cell(get(c), r, c) for n, c in (mapping.get("confounders") or {}).items()}
        inst = {n: _cell(get(c), r, c) for n, c in (mapping.get("instruments") or {}).items()}
        month = int(_cell(get(mapping["month"]), r, mapping["month"])) if "month" in mapping else None
        weekday = int(_cell(get(mapping["weekday"]), r, mapping["weekday"])) if "weekday" in mapping else None
        ctx = str(get(mapping["context"])) if "context" in mapping else None
        items.append(Item(item_id, emb, _cell(get(mapping["outcome"]), r, mapping["outcome"]), conf, inst, None, month, weekday, ctx))
        split[item_id] = str(get(mapping["split"])) if "split" in mapping else "train"
    ds = Dataset(items, (), split)
    problems = validate(ds)
    if problems:
        raise InputError("ingested data invalid: " + "; ".join(problems[:10]))
    return ds


# ---- reports ----------------------------------------------------------------

def config_hash(config: Mapping) -> str:
    return hashlib.sha256(json.dumps(clean(config), sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def csv_text(rows: Sequence[Mapping], columns: Sequence[str], metadata: Optional[Mapping] = None) -> str:
    lines = []
    for k, v in (metadata or {}).items():
        lines.append(f"# {k}={json.dumps(clean(v), sort_keys=True)}")
    lines.append(",".join(columns))
    for row in rows:
        cells = []
        for c in columns:
            v = row.get(c, "")
            if isinstance(v, (float, np.floating)):
                cells.append(repr(float(v)))
            else:
                cells.append(str(clean(v)))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_csv(path, rows, columns, metadata=None) -> None:
    atomic_write(path, csv_text(rows, columns, metadata))


def write_json(path, obj) -> None:
    atomic_write(path, dumps(obj, indent=2) + "\n")


def read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as e:
            raise InputError(f"{path}: invalid JSON ({e.msg})") from None


# ---- config -----------------------------------------------------------------

_NUM = {"type": "number"}
_INT = {"type": "integer"}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["dgp"],
    "properties": {
        "dgp": {
            "type": "object",
            "additionalProperties": False,
            "required": ["scenario", "n", "seed"],
            "properties": {
                "scenario": {"enum": list(SCENARIOS)},
                "n": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "coef_confounder": _NUM,
                "coef_entangle": _NUM,
                "region_levels": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
                "noise_outcome_sd": {"type": "number", "minimum": 0},
                "noise_confounder_sd": {"type": "number", "minimum": 0},
                "d": {"type": ["integer", "null"], "minimum": 1},
                "nuisance_dims": {"type": "integer", "minimum": 0},
                "region_prob": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 4, "maxItems": 4},
                "context_size": {"type": "integer", "minimum": 0},
                "pair_cap": {"type": "integer", "minimum": 1},
                "month_effects": {"type": ["array", "null"], "items": _NUM, "minItems": 12, "maxItems": 12},
                "month_trace": _NUM,
                "month_trace_noise": {"type": "number", "minimum": 0},
                "skew": {"type": "number", "minimum": 0, "maximum": 1},
                "min_context": {"type": "integer", "minimum": 2},
                "max_context": {"type": "integer", "minimum": 2},
            },
        },
        "fit": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lambda": {"type": "number", "minimum": 0},
                "max_iters": {"type": "integer", "minimum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "intercept_penalized": {"type": "boolean"},
                "fit_intercept": {"type": "boolean"},
            },
        },
        "deconfound": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["ols", "iv", "dml"]},
                "confounder": {"type": "string"},
                "instruments": {"type": "array", "items": {"type": "string"}},
                "folds": {"type": "integer", "minimum": 2},
            },
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "arms": {"type": "array", "items": {"type": "string"}},
                "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "candidate_k": {"type": "integer", "minimum": 1},
                "n_valid": {"type": "integer", "minimum": 2},
                "n_candidate_sets": {"type": "integer", "minimum": 1},
                "grid": {"type": "string"},
                "skew": {"type": "number", "minimum": 0, "maximum": 1},
                "split_fractions": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 3, "maxItems": 3},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}},
        },
    },
}


def load_config(path) -> dict:
    """Read and schema-check a config file; returns the parsed document."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e.msg})") from None
    return check_config(doc)


def check_config(doc) -> dict:
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        where = ".".join(str(p) for p in e.absolute_path) or "<root>"
        field = e.absolute_path[-1] if e.absolute_path else None
        if e.validator == "required":
            field = e.message.split("'")[1]
        raise ConfigError(f"config error at {where}: {e.message}", field) from None
    DgpConfig.from_dict(doc["dgp"])
    return doc
