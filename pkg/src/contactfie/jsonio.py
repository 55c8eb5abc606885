"""Deterministic JSON text with every float written to 17 significant digits."""
from __future__ import annotations

import json
import math

import numpy as np


def _num(x):
    x = float(x)
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def dumps(obj, indent=None, _level=0):
    """Serialize ``obj``; NaN/inf become ``null``, numpy values are unwrapped.

    Output depends only on the value, so equal inputs give identical bytes.
    """
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if obj is None or obj is True or obj is False:
        return json.dumps(obj)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = [(json.dumps(str(k)), v) for k, v in obj.items()]
        if indent is None:
            return "{" + ", ".join(f"{k}: {dumps(v)}" for k, v in items) + "}"
        if not items:
            return "{}"
        pad = " " * (indent * (_level + 1))
        body = (",\n").join(f"{pad}{k}: {dumps(v, indent, _level + 1)}" for k, v in items)
        return "{\n" + body + "\n" + " " * (indent * _level) + "}"
    if isinstance(obj, (list, tuple)):
        if indent is None or all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        pad = " " * (indent * (_level + 1))
        body = ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj)
        return "[\n" + body + "\n" + " " * (indent * _level) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write(path, obj, indent=2):
    with open(path, "w") as fh:
        fh.write(dumps(obj, indent) + "\n")
