"""Deterministic file output with embedded provenance.

Every artifact carries the fully resolved configuration: CSV files as
'# ' comment lines ahead of the column header, JSON reports under a
"config" key.  Floats are written with shortest round-trip formatting,
'.' decimals and LF endings, so identical runs produce identical bytes.
"""

from __future__ import annotations

import json

import numpy as np


def _fmt(x):
    if isinstance(x, np.floating):
        x = float(x)
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def write_csv(path, columns, rows, metadata=None):
    lines = []
    if metadata:
        blob = json.dumps(metadata, sort_keys=True)
        lines.append(f"# config: {blob}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_json(path, obj):
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
