"""Canonical text serialization shared by scenario files and reports.

JSON with floats rendered at 17 significant digits so every binary float
round-trips exactly, keys in insertion order, scalar arrays kept on one line.
"""
from __future__ import annotations

import json
import math

import numpy as np


def _scalar(x):
    if x is None:
        return "null"
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x) or math.isinf(x):
            # JSON has no literal for these; reports keep them as strings
            return json.dumps(repr(x))
        return format(x, ".17g")
    if isinstance(x, str):
        return json.dumps(x, ensure_ascii=False)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _is_flat(x):
    if isinstance(x, np.ndarray):
        return True
    if isinstance(x, (list, tuple)):
        return all(_is_flat(v) if isinstance(v, (list, tuple, np.ndarray))
                   else not isinstance(v, dict) for v in x)
    return False


def _inline(x):
    if isinstance(x, np.ndarray):
        x = x.tolist()
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_inline(v) for v in x) + "]"
    if isinstance(x, dict):
        return "{" + ", ".join(f"{_scalar(str(k))}: {_inline(v)}" for k, v in x.items()) + "}"
    return _scalar(x)


def _small_dict(x):
    return isinstance(x, dict) and len(x) <= 8 and all(
        not isinstance(v, dict) and (not isinstance(v, (list, tuple, np.ndarray)) or _is_flat(v))
        for v in x.values())


def dumps(obj, indent=0) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{_scalar(str(k))}: {dumps(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if _is_flat(obj):
            return _inline(obj)
        if all(_small_dict(v) for v in obj):
            return "[\n" + ",\n".join(inner + _inline(v) for v in obj) + "\n" + pad + "]"
        return "[\n" + ",\n".join(inner + dumps(v, indent + 1) for v in obj) + "\n" + pad + "]"
    return _scalar(obj)


def dump_bytes(obj) -> bytes:
    return (dumps(obj) + "\n").encode("utf-8")


def loads(text):
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("utf-8")
    return json.loads(text)
