"""Artifact writers: CSV tables and JSON documents, written atomically.

CSVs are UTF-8 with LF line endings, a mandatory header row and ``.``
decimal separators; floats use ``repr`` so re-runs are byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np


def atomic_write_text(path, text: str) -> Path:
    """Write ``text`` to a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return str(x)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} cells, header has {len(header)}")
        writer.writerow([_cell(c) for c in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> Path:
    return atomic_write_text(path, csv_text(list(header), list(rows)))


def write_dict_rows(path, rows: list[dict]) -> Path:
    """CSV from a list of dicts sharing the keys of the first row."""
    if not rows:
        raise ValueError("no rows to write")
    header = list(rows[0])
    return write_csv(path, header, [[r[h] for h in header] for r in rows])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        data = list(csv.reader(fh))
    return data[0], data[1:]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):  # enums
        return obj.value
    return obj


def write_json(path, obj) -> Path:
    return atomic_write_text(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


# --- module-specific tables ------------------------------------------------------


def write_bid_function(path, bf) -> Path:
    """Columns ``q, bid`` from a tabulated :class:`BidFunction`."""
    return write_csv(path, ["q", "bid"], zip(bf.grid, bf.bids))


def write_estimation_reports(path, reports) -> Path:
    return write_dict_rows(path, [r.row() for r in reports])


def write_revenue_curve(path, est) -> Path:
    """Columns ``q, v_true, v_hat, R_true, R_hat, rel_err``."""
    return write_dict_rows(path, list(est.rows()))


def write_auction(path, auction) -> Path:
    """One row per rank: ``k, weight, alpha``."""
    return write_csv(path, ["k", "weight", "alpha"],
                     [(k + 1, w, a) for k, (w, a) in enumerate(zip(auction.weights, auction.alpha))])
