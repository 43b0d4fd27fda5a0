"""Canonical JSON formatting and atomic file writes.

Every artifact the engine writes goes through ``canonical_dumps`` so that
repeated runs with the same seed produce byte-identical files: keys sorted,
no whitespace variation, floats in shortest round-trip form, and no NaN or
Infinity tokens (unbounded values are encoded as null by their owners).
"""

import json
import os
import tempfile
from typing import Any


def canonical_dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def write_canonical(path: str, obj: Any) -> None:
    atomic_write_text(path, canonical_dumps(obj))


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path: str) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
