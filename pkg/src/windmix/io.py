"""File formats: sample/label/grid CSVs and model/report JSON.

Every CSV written here starts with one ``#`` metadata line of ``key=value``
pairs (tool version, seed, config hash, ...); readers skip leading ``#``
lines. JSON is written with sorted keys so identical inputs give identical
bytes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import jsonschema
import numpy as np
import pandas as pd

from windmix import __version__
from windmix.dirichlet import DirichletComponent
from windmix.saem import MixtureModel
from windmix.windows import BinSpec, TimeSeries

SERIES_HEADER = ["timestamp", "speed_mps"]
MODEL_FORMAT = "windmix-model"


class InputFormatError(ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class ModelMismatchError(ValueError):
    pass


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def format_meta(meta: dict) -> str:
    items = {"tool": "windmix", "version": __version__, **meta}
    return "# " + " ".join(f"{k}={v}" for k, v in items.items())


def read_meta(path) -> dict:
    """``key=value`` pairs from the leading ``#`` lines of a CSV."""
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            for token in line[1:].split():
                if "=" in token:
                    k, v = token.split("=", 1)
                    meta[k] = v
    return meta


def _leading_comments(path) -> int:
    n = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            n += 1
    return n


def _read_table(path, required: list[str]) -> tuple[pd.DataFrame, int]:
    path = Path(path)
    try:
        skip = _leading_comments(path)
        df = pd.read_csv(path, skiprows=skip, dtype=str, skip_blank_lines=False, keep_default_na=False)
    except (OSError, UnicodeDecodeError) as exc:
        raise InputFormatError(f"cannot read {path}: {exc}") from exc
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise InputFormatError(f"{path}: {exc}") from exc
    header = [c.strip() for c in df.columns]
    missing = [c for c in required if c not in header]
    if missing:
        raise InputFormatError(f"{path}: header must contain {required}, got {header}", skip + 1)
    df.columns = header
    # first data row sits on line skip + 2
    return df, skip + 2


def _numeric(df: pd.DataFrame, col: str, first_line: int, path) -> np.ndarray:
    raw = df[col].str.strip()
    values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        i = int(bad[0])
        raise InputFormatError(f"{Path(path).name}: missing or non-numeric {col} {raw.iloc[i]!r}", first_line + i)
    return values


def read_series_csv(path) -> TimeSeries:
    df, first = _read_table(path, SERIES_HEADER)
    t = _numeric(df, "timestamp", first, path)
    v = _numeric(df, "speed_mps", first, path)
    neg = np.flatnonzero(v < 0)
    if neg.size:
        raise InputFormatError(f"negative speed {v[neg[0]]}", first + int(neg[0]))
    back = np.flatnonzero(np.diff(t) < 0)
    if back.size:
        raise InputFormatError("timestamps must be non-decreasing", first + int(back[0]) + 1)
    return TimeSeries(t, v)


def write_series_csv(path, series: TimeSeries, meta: dict):
    df = pd.DataFrame({"timestamp": series.timestamps, "speed_mps": series.values})
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_meta(meta) + "\n")
        df.to_csv(fh, index=False, float_format="%.6f", lineterminator="\n")


def write_table_csv(path, columns: dict, meta: dict, float_format: str = "%.17g"):
    """Columns of equal length; floats at full round-trip precision by default."""
    df = pd.DataFrame(columns)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_meta(meta) + "\n")
        df.to_csv(fh, index=False, float_format=float_format, lineterminator="\n")


def write_responsibilities_csv(path, t: np.ndarray, labels: np.ndarray, meta: dict, start: int = 0):
    cols = {"window_index": np.arange(start, start + t.shape[0])}
    for k in range(t.shape[1]):
        cols[f"t_{k + 1}"] = t[:, k]
    cols["label"] = labels
    write_table_csv(path, cols, meta)


def read_labels_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Window indices, labels and the ``t_k`` posterior columns (possibly none)."""
    df, first = _read_table(path, ["label"])
    labels = _numeric(df, "label", first, path)
    if np.any(labels != np.round(labels)) or np.any(labels < 1):
        i = int(np.flatnonzero((labels != np.round(labels)) | (labels < 1))[0])
        raise InputFormatError(f"label must be a positive integer, got {labels[i]}", first + i)
    t_cols = sorted((c for c in df.columns if c.startswith("t_")), key=lambda c: int(c[2:]))
    t = np.column_stack([_numeric(df, c, first, path) for c in t_cols]) if t_cols else np.empty((labels.size, 0))
    idx = _numeric(df, "window_index", first, path) if "window_index" in df.columns else np.arange(labels.size)
    return idx.astype(int), labels.astype(int), t


def _json_dump(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


MODEL_SCHEMA = {
    "type": "object",
    "required": ["format", "bins", "K", "weights", "alpha", "smoothing_epsilon", "seed",
                 "gamma_schedule", "iterations", "final_log_likelihood", "window_len", "stride"],
    "properties": {
        "format": {"const": MODEL_FORMAT},
        "bins": {"type": "object", "required": ["edges"],
                 "properties": {"edges": {"type": "array", "items": {"type": "number"}, "minItems": 3}}},
        "K": {"type": "integer", "minimum": 1},
        "weights": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "alpha": {"type": "array", "items": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}}},
        "smoothing_epsilon": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer"},
        "gamma_schedule": {"type": "object", "required": ["burnin", "exponent"]},
        "iterations": {"type": "integer", "minimum": 0},
        "final_log_likelihood": {"type": "number"},
        "window_len": {"type": "integer", "minimum": 2},
        "stride": {"type": "integer", "minimum": 1},
    },
}


def model_to_dict(model: MixtureModel, *, epsilon: float, window_len: int, stride: int,
                  gamma_burnin: int, gamma_exponent: float, extra: dict | None = None) -> dict:
    meta = model.meta
    d = {
        "format": MODEL_FORMAT,
        "tool_version": __version__,
        "bins": {"edges": model.bins.edges.tolist()},
        "K": model.n_classes,
        "weights": model.weights.tolist(),
        "alpha": model.alphas.tolist(),
        "smoothing_epsilon": epsilon,
        "seed": int(meta.get("seed", 0)),
        "gamma_schedule": {"burnin": gamma_burnin, "exponent": gamma_exponent},
        "iterations": int(meta.get("iterations", 0)),
        "restarts": int(meta.get("restarts", 0)),
        "converged": bool(meta.get("converged", False)),
        "final_log_likelihood": float(meta.get("final_log_likelihood", 0.0)),
        "window_len": window_len,
        "stride": stride,
    }
    if extra:
        d.update(extra)
    return d


def save_model(path, model: MixtureModel, **kwargs):
    _json_dump(path, model_to_dict(model, **kwargs))


def load_model(path) -> tuple[MixtureModel, dict]:
    """Model plus the raw JSON document (for window/smoothing settings)."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputFormatError(f"cannot read model {path}: {exc}") from exc
    try:
        jsonschema.validate(doc, MODEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise InputFormatError(f"model {path} is invalid: {exc.message}") from exc
    if len(doc["weights"]) != doc["K"] or len(doc["alpha"]) != doc["K"]:
        raise InputFormatError(f"model {path}: K disagrees with weights/alpha")
    bins = BinSpec(doc["bins"]["edges"])
    if any(len(a) != bins.n_bins for a in doc["alpha"]):
        raise ModelMismatchError(f"model {path}: alpha rows do not match {bins.n_bins} bins")
    try:
        comps = tuple(DirichletComponent(a) for a in doc["alpha"])
        model = MixtureModel(comps, doc["weights"], bins, {
            "seed": doc["seed"], "iterations": doc["iterations"],
            "final_log_likelihood": doc["final_log_likelihood"],
        })
    except ValueError as exc:
        raise InputFormatError(f"model {path} is invalid: {exc}") from exc
    return model, doc


_NUM = {"type": "number"}
_NUM_OR_NULL = {"type": ["number", "null"]}
_FIT_SCHEMA = {
    "type": "object",
    "required": ["class", "family", "params", "ks_statistic", "ks_pvalue"],
    "properties": {
        "class": {"type": "integer", "minimum": 1},
        "family": {"enum": ["gaussian", "gram_charlier", "biweibull"]},
        "params": {"type": ["object", "null"]},
        "ks_statistic": _NUM_OR_NULL,
        "ks_pvalue": _NUM_OR_NULL,
        "skipped": {"type": ["string", "null"]},
    },
}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["tool_version", "seed", "config_hash", "n_windows", "classes"],
    "properties": {
        "tool_version": {"type": "string"},
        "seed": {"type": "integer"},
        "config_hash": {"type": "string"},
        "n_windows": {"type": "integer", "minimum": 0},
        "classes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["class", "weight", "n_windows", "mean_pdf", "fits"],
                "properties": {
                    "class": {"type": "integer", "minimum": 1},
                    "weight": _NUM,
                    "n_windows": {"type": "integer", "minimum": 0},
                    "mean_pdf": {"type": "array", "items": _NUM},
                    "fits": {"type": "array", "items": _FIT_SCHEMA},
                },
            },
        },
    },
}

SEQUENCE_SCHEMA = {
    "type": "object",
    "required": ["tool_version", "labels_file", "n_windows", "K", "transition_counts",
                 "transition_probabilities", "residence"],
    "properties": {
        "transition_counts": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
        "transition_probabilities": {"type": "array", "items": {"type": "array", "items": _NUM}},
        "residence": {"type": "array"},
    },
}


def save_report(path, report: dict, schema: dict = REPORT_SCHEMA):
    jsonschema.validate(report, schema)
    _json_dump(path, report)
