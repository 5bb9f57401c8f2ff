"""Versioned JSON reports and plot-ready CSV tables.

Every report embeds the resolved configuration, the package version and a
schema version, so a file on disk can be interpreted without the process
that wrote it.  Serialization is deterministic (sorted keys, repr floats,
no timestamps): identical config and seed give byte-identical output.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from . import __version__

SCHEMA_VERSION = 1


def _plain(obj):
    """Recursively convert numpy scalars and arrays to builtin types."""
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def make_report(kind: str, config: Mapping, results: Mapping,
                passed: bool) -> dict:
    """Assemble a self-describing report dict."""
    return {
        "schema_version": SCHEMA_VERSION,
        "code_version": __version__,
        "kind": str(kind),
        "config": _plain(dict(config)),
        "results": _plain(dict(results)),
        "passed": bool(passed),
    }


def dump_report(report: Mapping) -> str:
    return json.dumps(_plain(dict(report)), sort_keys=True, indent=2) + "\n"


def write_report(report: Mapping, path) -> None:
    Path(path).write_text(dump_report(report), encoding="utf-8")


def load_report(path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"{path}: report must be a JSON object")
    return data


def _csv_cell(value) -> str:
    value = _plain(value)
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "%.12g" % value
    return str(value)


def write_csv(path, header: Sequence[str],
              rows: Sequence[Sequence]) -> None:
    """Write a sweep table; floats go through %.12g so reruns match."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([_csv_cell(v) for v in row])


def _numeric_leaves(obj, prefix: str = "") -> Iterator[tuple[str, float]]:
    # dotted key paths of scalar numbers; lists are detail, not summary
    if isinstance(obj, Mapping):
        for key, val in obj.items():
            yield from _numeric_leaves(val, f"{prefix}{key}.")
        return
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        return
    if math.isfinite(obj):
        yield prefix[:-1], float(obj)


def report_merge(reports: Sequence[Mapping]) -> dict:
    """Aggregate reports into pass counts, worst ratios and a slope table.

    The summary depends only on the set of reports, not their order.
    Mixing schema versions is refused.
    """
    plain = [_plain(dict(r)) for r in reports]
    for rep in plain:
        ver = rep.get("schema_version")
        if ver != SCHEMA_VERSION:
            raise ValueError(
                f"schema version mismatch: got {ver!r}, "
                f"expected {SCHEMA_VERSION}")
    plain.sort(key=lambda r: json.dumps(r, sort_keys=True))

    counts: dict[str, dict[str, int]] = {}
    ratios: dict[str, float] = {}
    slopes: list[dict] = []
    n_pass = 0
    for rep in plain:
        kind = str(rep.get("kind", "unknown"))
        entry = counts.setdefault(kind, {"total": 0, "passed": 0})
        entry["total"] += 1
        if rep.get("passed"):
            entry["passed"] += 1
            n_pass += 1
        for key, val in _numeric_leaves(rep.get("results", {})):
            leaf = key.rsplit(".", 1)[-1]
            if "ratio" in leaf:
                label = f"{kind}:{key}"
                if label not in ratios or val > ratios[label]:
                    ratios[label] = val
            elif "slope" in leaf:
                slopes.append({"kind": kind, "field": key, "slope": val})
    slopes.sort(key=lambda row: (row["kind"], row["field"], row["slope"]))

    return {
        "schema_version": SCHEMA_VERSION,
        "code_version": __version__,
        "kind": "merge-summary",
        "config": {"report_count": len(plain)},
        "results": {
            "counts": counts,
            "worst_ratios": ratios,
            "slopes": slopes,
        },
        "passed": bool(n_pass == len(plain)),
    }
