"""Artifact I/O: schema-versioned JSON with 17 significant digits, and plain CSV."""

import hashlib
import json
import math
import os

import numpy as np

from . import SCHEMA_VERSION, __version__
from .errors import SchemaError


def _fmt_float(v):
    if not math.isfinite(v):
        return "null"
    s = format(v, ".17g")
    if s.lstrip("-").isdigit():
        s += ".0"
    return s


def _plain(obj):
    """Convert numpy scalars and arrays, tuples and dataclass-like objects to JSON types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if hasattr(obj, "to_dict"):
        return _plain(obj.to_dict())
    return obj


def dumps(obj, indent=2):
    """Deterministic JSON: sorted keys, floats with 17 significant digits, NaN as null."""
    obj = _plain(obj)
    out = []

    def emit(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if o is None:
            out.append("null")
        elif o is True:
            out.append("true")
        elif o is False:
            out.append("false")
        elif isinstance(o, int):
            out.append(str(o))
        elif isinstance(o, float):
            out.append(_fmt_float(o))
        elif isinstance(o, str):
            out.append(json.dumps(o, ensure_ascii=False))
        elif isinstance(o, list):
            if not o:
                out.append("[]")
                return
            if all(not isinstance(v, (list, dict)) for v in o):
                out.append("[")
                for i, v in enumerate(o):
                    if i:
                        out.append(", ")
                    emit(v, level + 1)
                out.append("]")
                return
            out.append("[\n")
            for i, v in enumerate(o):
                out.append(pad)
                emit(v, level + 1)
                out.append(",\n" if i < len(o) - 1 else "\n")
            out.append(end + "]")
        elif isinstance(o, dict):
            if not o:
                out.append("{}")
                return
            out.append("{\n")
            keys = sorted(o)
            for i, k in enumerate(keys):
                out.append(pad + json.dumps(k, ensure_ascii=False) + ": ")
                emit(o[k], level + 1)
                out.append(",\n" if i < len(keys) - 1 else "\n")
            out.append(end + "}")
        else:
            raise TypeError(f"cannot serialise {type(o).__name__}")

    emit(obj, 0)
    return "".join(out) + "\n"


def envelope(kind, data, config=None):
    return {"schema_version": SCHEMA_VERSION, "code_version": __version__, "kind": kind,
            "config": config or {}, "data": data}


def write_text(path, text):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)
    return path


def write_json(path, kind, data, config=None):
    return write_text(path, dumps(envelope(kind, data, config)))


def read_json(path, kind=None):
    """Load an artifact, rejecting a different schema major version or kind."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    check_schema(doc, kind)
    return doc


def check_schema(doc, kind=None):
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise SchemaError("artifact has no schema_version")
    major = str(doc["schema_version"]).split(".")[0]
    if major != SCHEMA_VERSION.split(".")[0]:
        raise SchemaError(f"schema major version {doc['schema_version']} does not match "
                          f"{SCHEMA_VERSION}")
    if kind is not None and doc.get("kind") != kind:
        raise SchemaError(f"expected a {kind!r} artifact, found {doc.get('kind')!r}")
    return doc


def csv_text(header, rows):
    """CSV with '.' decimals, no thousands separators and LF line endings."""
    def cell(v):
        if isinstance(v, (float, np.floating)):
            return _fmt_float(float(v)) if math.isfinite(v) else "nan"
        return str(v)
    lines = [",".join(header)] + [",".join(cell(v) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows):
    return write_text(path, csv_text(header, rows))


def digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def tree_digests(root, exclude=("timings.json",)):
    """SHA-256 of every JSON/CSV artifact under root, keyed by relative path."""
    out = {}
    for base, _, files in sorted(os.walk(root)):
        for f in sorted(files):
            if f in exclude or not f.endswith((".json", ".csv")):
                continue
            p = os.path.join(base, f)
            out[os.path.relpath(p, root)] = digest(p)
    return out


__all__ = ["dumps", "envelope", "write_json", "read_json", "check_schema", "csv_text",
           "write_csv", "write_text", "digest", "tree_digests"]
