"""Plot-ready CSV series and the raw value dump.

Raw binary layout (all little-endian)::

    b"LSUM" | version:u16 | per set: set_index:u32 realized_k:u32 count:u32 values:u64[count]

``realized_k`` is 0 when the set has no single summand count (layer 3).
"""

from __future__ import annotations

import csv
import io
import struct
from pathlib import Path

import numpy as np

from .analysis import histogram

MAGIC = b"LSUM"
RAW_VERSION = 1
_SET_HEADER = struct.Struct("<III")

HISTOGRAM_COLUMNS = ("set_index", "bin_lo", "bin_hi", "count")
BOXPLOT_COLUMNS = ("set_index", "min", "q1", "median", "q3", "max", "outliers")
STDDEV_COLUMNS = ("set_index", "pct_std")
RAW_CSV_COLUMNS = ("set_index", "value")


def _check_path(path) -> Path:
    if path is None or str(path) == "":
        raise FileNotFoundError("empty output path")
    return Path(path)


def twelve_sets(total_sets: int) -> list:
    """Twelve evenly spaced set indices from 1 to S (all of them if S <= 12)."""
    if total_sets <= 12:
        return list(range(1, total_sets + 1))
    return sorted({int(round(v)) for v in np.linspace(1, total_sets, 12)})


class RawWriter:
    """Streams sets into a raw dump, binary or CSV."""

    def __init__(self, path, mode: str = "bin"):
        if mode not in ("bin", "csv"):
            raise ValueError(f"unknown raw mode {mode!r}")
        self.path = _check_path(path)
        self.mode = mode
        if mode == "bin":
            self._fh = open(self.path, "wb")
            self._fh.write(MAGIC + struct.pack("<H", RAW_VERSION))
        else:
            self._fh = open(self.path, "w", newline="")
            self._fh.write(",".join(RAW_CSV_COLUMNS) + "\n")

    def write(self, result) -> None:
        values = np.asarray(result.values, dtype="<u8")
        if self.mode == "bin":
            self._fh.write(_SET_HEADER.pack(result.set_index, result.realized_k or 0, values.size))
            self._fh.write(values.tobytes())
        else:
            prefix = f"{result.set_index},"
            self._fh.write("".join(f"{prefix}{v}\n" for v in values.tolist()))

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def dump_raw(results, path, mode: str = "bin") -> Path:
    with RawWriter(path, mode) as writer:
        for result in results:
            writer.write(result)
    return writer.path


def read_raw(path) -> list:
    """Read a binary dump back as ``[(set_index, realized_k, values), ...]``."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a raw dump (bad magic)")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != RAW_VERSION:
        raise ValueError(f"{path}: unsupported raw format version {version}")
    pos = 6
    sets = []
    while pos < len(data):
        set_index, realized_k, count = _SET_HEADER.unpack_from(data, pos)
        pos += _SET_HEADER.size
        values = np.frombuffer(data, dtype="<u8", count=count, offset=pos).astype(np.uint64)
        pos += 8 * count
        sets.append((set_index, realized_k, values))
    return sets


def _write_csv(path, columns, rows) -> Path:
    path = _check_path(path)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    path.write_text(buf.getvalue())
    return path


def write_stddev_percent(summaries, path) -> Path:
    return _write_csv(path, STDDEV_COLUMNS,
                      ((s.set_index, "" if s.pct_std is None else repr(s.pct_std)) for s in summaries))


def write_boxplot(summaries, path, selection: str = "twelve") -> Path:
    if selection == "all":
        chosen = summaries
    else:
        wanted = set(twelve_sets(len(summaries)))
        chosen = [s for s in summaries if s.set_index in wanted]
    rows = ((s.set_index, repr(s.min), repr(s.q1), repr(s.median), repr(s.q3), repr(s.max),
             s.outlier_count) for s in chosen)
    return _write_csv(path, BOXPLOT_COLUMNS, rows)


def write_histograms(values_by_set: dict, path, bins: int, integer: bool = False) -> Path:
    rows = []
    for set_index in sorted(values_by_set):
        h = histogram(values_by_set[set_index], bins, integer=integer)
        edges = h.bin_edges.tolist()
        for i, count in enumerate(h.counts.tolist()):
            rows.append((set_index, repr(edges[i]), repr(edges[i + 1]), count))
    return _write_csv(path, HISTOGRAM_COLUMNS, rows)
