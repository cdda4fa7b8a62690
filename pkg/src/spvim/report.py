"""Result reports: a validated, exactly round-tripping JSON document.

Reports carry the estimates with their inference, run diagnostics, and
provenance (seed, config, config hash, package version, wall time).
``schema_version`` bumps on any field change.  JSON float serialization
is shortest-round-trip, so reloading a report reproduces every stored
number exactly.
"""

from __future__ import annotations

import hashlib
import json

import jsonschema

from . import __version__
from .errors import DataError
from .pipeline import EstimationConfig, SpvimResult

SCHEMA_VERSION = 1

_NUMBER_ARRAY = {"type": "array", "items": {"type": "number"}}
_NULLABLE_NUMBER_ARRAY = {
    "anyOf": [{"type": "null"}, _NUMBER_ARRAY],
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": [
        "schema_version", "labels", "estimates", "std_errors",
        "ci_lower", "ci_upper", "alpha", "test_statistics", "p_values",
        "test_rejections", "diagnostics", "provenance",
    ],
    "additionalProperties": True,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "labels": {"type": "array", "items": {"type": "string"}},
        "estimates": _NUMBER_ARRAY,
        "std_errors": _NUMBER_ARRAY,
        "ci_lower": _NUMBER_ARRAY,
        "ci_upper": _NUMBER_ARRAY,
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "lagrange_multipliers": _NUMBER_ARRAY,
        "test_statistics": _NULLABLE_NUMBER_ARRAY,
        "p_values": _NULLABLE_NUMBER_ARRAY,
        "test_rejections": {
            "anyOf": [
                {"type": "null"},
                {"type": "array", "items": {"type": "boolean"}},
            ]
        },
        "diagnostics": {
            "type": "object",
            "required": ["n", "p", "m", "n_unique_subsets", "subset_values"],
        },
        "provenance": {
            "type": "object",
            "required": ["seed", "config", "config_hash", "version", "wall_time_s"],
            "properties": {
                "seed": {"type": "integer"},
                "config": {"type": "object"},
                "config_hash": {"type": "string"},
                "version": {"type": "string"},
                "wall_time_s": {"type": "number"},
            },
        },
    },
}


def config_hash(config: EstimationConfig) -> str:
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def build_report(result: SpvimResult, config: EstimationConfig, wall_time_s: float) -> dict:
    report = {"schema_version": SCHEMA_VERSION}
    report.update(result.to_dict())
    report["provenance"] = {
        "seed": config.seed,
        "config": config.to_dict(),
        "config_hash": config_hash(config),
        "version": __version__,
        "wall_time_s": float(wall_time_s),
    }
    validate_report(report)
    return report


def validate_report(report: dict) -> None:
    try:
        jsonschema.validate(report, REPORT_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise DataError(f"report does not match schema: {exc.message}") from exc


def dump_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def write_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_report(report))


def load_report(path) -> dict:
    with open(path) as fh:
        report = json.load(fh)
    validate_report(report)
    return report


def strip_volatile(report: dict) -> dict:
    """Copy of a report without fields expected to vary across runs."""
    out = json.loads(json.dumps(report))
    out.get("provenance", {}).pop("wall_time_s", None)
    return out
