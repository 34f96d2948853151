"""Shared helpers: error types, canonical serialization, checksums."""

from __future__ import annotations

import hashlib
import json
import math
from typing import Any


class GeometryError(ValueError):
    """Domain error: an operation was asked outside its valid inputs."""


class ConfigError(ValueError):
    """A configuration value is inconsistent or unknown."""


class ValidationError(ValueError):
    """A document (scenario spec, serialized surface) fails schema validation.

    Carries the offending field path for diagnostics.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def float_repr(x: float) -> str:
    """Shortest round-trip decimal for a finite float."""
    if not math.isfinite(x):
        raise ValueError(f"non-finite value not representable: {x}")
    return repr(float(x))


def canonical_dumps(obj: Any) -> str:
    """Deterministic JSON text: sorted keys, no whitespace, round-trip floats."""
    _check_finite(obj, "$")
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _check_finite(obj: Any, path: str) -> None:
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValidationError(path, "NaN/Inf forbidden")
    elif isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{path}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _check_finite(v, f"{path}[{i}]")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def format_csv_cell(v: Any) -> str:
    """Canonical CSV cell: floats via shortest round-trip repr."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return float_repr(v)
    if v is None:
        return ""
    return str(v)


def write_csv(path, header: list[str], rows: list[list]) -> None:
    """Write CSV with deterministic bytes: '\\n' endings, canonical floats."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_csv_cell(c) for c in row))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
