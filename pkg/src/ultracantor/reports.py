"""Report envelopes: run configuration, deterministic JSON, schema checks.

A report is ``{"kind", "version", "config", "result"}``. Serialization sorts
keys and writes floats with ``repr`` so an identical configuration gives
byte-identical output. Wall-clock data never enters a report; the CLI writes
it to a separate metadata file on request.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import __version__

# kinds whose result schema lives in schemas/<kind>.json
KINDS = (
    "tree_validate",
    "tree_reduce",
    "tree_telescope",
    "embed_check",
    "embed_map",
    "embed_schoenberg",
    "dim_estimate",
    "dim_kraft",
    "sadic_check",
    "sadic_tree",
    "sturmian_verdict",
    "sturmian_tree",
    "sturmian_witness",
    "gw_simulate",
    "gw_solve",
    "pipeline",
    "error",
)


@dataclass
class RunConfig:
    """Everything needed to rerun a command: subcommand, inputs, parameters, seed."""

    subcommand: str
    inputs: list[str] = field(default_factory=list)
    params: dict[str, Any] = field(default_factory=dict)
    seed: int | None = None
    output: str | None = None
    format: str = "json"
    input_digests: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "inputs": list(self.inputs),
            "input_digests": dict(self.input_digests),
            "params": clean(self.params),
            "seed": self.seed,
            "output": self.output,
            "format": self.format,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return cls(
            subcommand=data["subcommand"],
            inputs=list(data.get("inputs", [])),
            params=dict(data.get("params", {})),
            seed=data.get("seed"),
            output=data.get("output"),
            format=data.get("format", "json"),
            input_digests=dict(data.get("input_digests", {})),
        )


def digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def clean(obj: Any) -> Any:
    """Plain JSON types only: numpy scalars unwrapped, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def make_report(kind: str, config: RunConfig, result: dict) -> dict:
    return {"kind": kind, "version": __version__, "config": config.to_dict(), "result": clean(result)}


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _schema(name: str) -> dict:
    text = resources.files("ultracantor").joinpath("schemas", f"{name}.json").read_text()
    return json.loads(text)


def validate_report(report: dict) -> None:
    """Check the envelope, then the result against the schema for its kind."""
    jsonschema.validate(report, _schema("envelope"))
    kind = report["kind"]
    if kind not in KINDS:
        raise jsonschema.ValidationError(f"unknown report kind {kind!r}")
    jsonschema.validate(report["result"], _schema(kind))


def tolerances(kind: str) -> dict[str, float]:
    """Numeric tolerances for golden comparisons, from ``x-tolerance`` annotations."""
    props = _schema(kind).get("properties", {})
    return {k: float(v["x-tolerance"]) for k, v in props.items() if "x-tolerance" in v}


def compare_to_golden(report: dict, golden: dict) -> list[str]:
    """Differences between two reports, allowing the annotated numeric tolerance per field."""
    problems = []
    if report["kind"] != golden["kind"]:
        return [f"kind {report['kind']} != {golden['kind']}"]
    tol = tolerances(report["kind"])

    def walk(a: Any, b: Any, path: str, eps: float) -> None:
        if isinstance(a, dict) and isinstance(b, dict):
            if set(a) != set(b):
                problems.append(f"{path}: keys differ")
                return
            for k in a:
                walk(a[k], b[k], f"{path}.{k}", tol.get(k, eps) if path == "result" else eps)
        elif isinstance(a, list) and isinstance(b, list):
            if len(a) != len(b):
                problems.append(f"{path}: length {len(a)} != {len(b)}")
                return
            for i, (x, y) in enumerate(zip(a, b)):
                walk(x, y, f"{path}[{i}]", eps)
        elif isinstance(a, float) or isinstance(b, float):
            if not (isinstance(a, (int, float)) and isinstance(b, (int, float))) or abs(a - b) > eps:
                problems.append(f"{path}: {a!r} != {b!r}")
        elif a != b:
            problems.append(f"{path}: {a!r} != {b!r}")

    walk(report["result"], golden["result"], "result", 0.0)
    return problems
