"""Proxy records, frozen networks, quality screens and the predictor matrix.

A network is stored as two CSV tables: ``metadata.csv`` with
``id,kind,core_count,flags,resolution`` and ``values.csv`` in wide format
``year,<id1>,<id2>,...`` with blanks for missing. Loading is atomic: the
pair describes one frozen network.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import DuplicateId, FormatError
from .ioutil import atomic_write_text, fnum
from .timeseries import DEFAULT_DECADE_ANCHOR, TimeSeries, block_start_for

KINDS = ("tree_ring", "lake_sediment", "ice_core", "coral", "documentary", "other")
RESOLUTIONS = ("annual", "decadal")

# Instrumental overlap used throughout as the default fit window.
DEFAULT_CALIBRATION = (1856, 1980)


@dataclass(frozen=True)
class ProxyRecord:
    """One proxy series plus its screening metadata.

    ``core_count`` is only meaningful for tree-ring chronologies (number
    of contributing cores); ``None`` means unknown. ``flags`` carries
    contamination markers such as ``"tiljander"``.
    """

    id: str
    series: TimeSeries
    kind: str
    core_count: int | None = None
    flags: frozenset[str] = frozenset()
    resolution: str = "annual"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown proxy kind {self.kind!r}")
        if self.resolution not in RESOLUTIONS:
            raise ValueError(f"unknown resolution {self.resolution!r}")
        if self.core_count is not None:
            if self.kind != "tree_ring":
                raise ValueError("core_count only applies to tree_ring records")
            if self.core_count < 0:
                raise ValueError("core_count must be nonnegative")
        object.__setattr__(self, "flags", frozenset(self.flags))
        if self.resolution == "decadal":
            self._check_decadal()

    def _check_decadal(self):
        s = self.series
        starts = np.unique(
            [block_start_for(int(y), DEFAULT_DECADE_ANCHOR) for y in s.years[s.mask]]
        )
        if starts.size < s.n_available:
            raise ValueError(
                f"record {self.id!r}: decadal resolution allows at most one value per decade block"
            )


def covers_network_start(record: ProxyRecord, frozen_at: int) -> bool:
    """Whether a record reaches back to the network start year.

    A decadal-resolution record stores one value per block (at the
    block-end year), so it covers ``frozen_at`` when its first block
    does, even though its first stored year is later.
    """
    start = record.series.start_year
    if start <= frozen_at:
        return True
    return record.resolution == "decadal" and block_start_for(start) <= frozen_at


@dataclass(frozen=True)
class ProxyNetwork:
    """Frozen, ordered collection of records sharing a start year."""

    records: tuple[ProxyRecord, ...]
    frozen_at: int

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DuplicateId(f"duplicate record ids: {', '.join(dupes)}")
        for r in self.records:
            if not covers_network_start(r, self.frozen_at):
                raise ValueError(
                    f"record {r.id!r} starts {r.series.start_year}, after frozen_at {self.frozen_at}"
                )

    def __len__(self) -> int:
        return len(self.records)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.records)

    def record(self, record_id: str) -> ProxyRecord:
        for r in self.records:
            if r.id == record_id:
                return r
        raise KeyError(record_id)


class Rejection(NamedTuple):
    id: str
    reason: str


class ProxyMatrix(NamedTuple):
    """Predictor matrix: rows are years, columns follow network order."""

    years: np.ndarray
    values: np.ndarray
    ids: tuple[str, ...]

    @property
    def start_year(self) -> int:
        return int(self.years[0])

    def rows_for(self, start: int, end: int) -> np.ndarray:
        return (self.years >= start) & (self.years <= end)


def screen_replication(net: ProxyNetwork, min_cores: int = 8) -> ProxyNetwork:
    """Drop tree-ring records below the core replication bar.

    A record that exists has at least one contributing core, so unknown
    ``core_count`` counts as 1: it survives ``min_cores=1`` but fails any
    stricter bar (replication cannot be verified). Order is preserved.
    """
    if min_cores < 1:
        raise ValueError("min_cores must be >= 1")
    kept = tuple(
        r
        for r in net.records
        if r.kind != "tree_ring" or (r.core_count if r.core_count is not None else 1) >= min_cores
    )
    return replace(net, records=kept)


def exclude_flagged(net: ProxyNetwork, flag: str) -> ProxyNetwork:
    """Drop records carrying ``flag``; idempotent, order preserving."""
    return replace(net, records=tuple(r for r in net.records if flag not in r.flags))


def network_matrix(net: ProxyNetwork, start: int, end: int) -> ProxyMatrix:
    """Assemble the raw predictor matrix over [start, end].

    Missing values and years outside a record's span propagate as NaN.
    No standardization is applied here.
    """
    if start > end:
        raise ValueError("start must not exceed end")
    years = np.arange(start, end + 1)
    values = np.full((years.size, len(net)), np.nan)
    for j, rec in enumerate(net.records):
        s = rec.series
        lo = max(start, s.start_year)
        hi = min(end, s.end_year)
        if lo > hi:
            continue
        values[lo - start : hi - start + 1, j] = s.values[lo - s.start_year : hi - s.start_year + 1]
    return ProxyMatrix(years, values, net.ids)


def load_network(
    path: str | os.PathLike,
    frozen_at: int,
    require_through: int | None = DEFAULT_CALIBRATION[0],
) -> tuple[ProxyNetwork, list[Rejection]]:
    """Load a network directory (``metadata.csv`` + ``values.csv``).

    Records whose series do not cover ``frozen_at`` through
    ``require_through`` are dropped and reported in the rejection list.
    Parse failures raise :class:`FormatError` with the offending line.
    """
    meta_path = os.path.join(path, "metadata.csv")
    values_path = os.path.join(path, "values.csv")
    for p in (meta_path, values_path):
        if not os.path.exists(p):
            raise FormatError(f"missing network file: {p}")
    meta = _read_metadata(meta_path)
    years, columns = _read_values(values_path, expected_ids=list(meta))

    records: list[ProxyRecord] = []
    rejections: list[Rejection] = []
    for rec_id, fields in meta.items():
        series = _column_series(years, columns[rec_id])
        if series is None:
            rejections.append(Rejection(rec_id, "no data values"))
            continue
        record = ProxyRecord(id=rec_id, series=series, **fields)
        if not covers_network_start(record, frozen_at):
            rejections.append(
                Rejection(rec_id, f"starts {series.start_year}, after network start {frozen_at}")
            )
        elif require_through is not None and series.end_year < require_through:
            rejections.append(
                Rejection(rec_id, f"ends {series.end_year}, before required year {require_through}")
            )
        else:
            records.append(record)
    return ProxyNetwork(tuple(records), frozen_at), rejections


def _read_metadata(path) -> dict[str, dict]:
    meta: dict[str, dict] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("empty metadata file", line=1) from None
        if [c.strip() for c in header] != ["id", "kind", "core_count", "flags", "resolution"]:
            raise FormatError("expected header 'id,kind,core_count,flags,resolution'", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or not any(c.strip() for c in row):
                continue
            if len(row) != 5:
                raise FormatError(f"expected 5 fields, got {len(row)}", line=lineno)
            rec_id, kind, cores_raw, flags_raw, resolution = (c.strip() for c in row)
            if rec_id in meta:
                raise DuplicateId(f"duplicate record id {rec_id!r} (line {lineno})")
            if kind not in KINDS:
                raise FormatError(f"unknown kind {kind!r}", line=lineno)
            if resolution not in RESOLUTIONS:
                raise FormatError(f"unknown resolution {resolution!r}", line=lineno)
            if cores_raw:
                try:
                    core_count = int(cores_raw)
                except ValueError:
                    raise FormatError(f"bad core_count {cores_raw!r}", line=lineno) from None
            else:
                core_count = None
            flags = frozenset(f for f in flags_raw.split(";") if f)
            meta[rec_id] = dict(
                kind=kind, core_count=core_count, flags=flags, resolution=resolution
            )
    if not meta:
        raise FormatError("metadata file has no records", line=2)
    return meta


def _read_values(path, expected_ids: list[str]) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [c.strip() for c in next(reader)]
        except StopIteration:
            raise FormatError("empty values file", line=1) from None
        if not header or header[0] != "year":
            raise FormatError("expected wide header 'year,<id>,...'", line=1)
        ids = header[1:]
        if sorted(ids) != sorted(expected_ids):
            missing = sorted(set(expected_ids) - set(ids))
            extra = sorted(set(ids) - set(expected_ids))
            raise FormatError(
                f"values columns do not match metadata (missing {missing}, extra {extra})", line=1
            )
        years: list[int] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or not any(c.strip() for c in row):
                continue
            if len(row) != len(ids) + 1:
                raise FormatError(f"expected {len(ids)+1} fields, got {len(row)}", line=lineno)
            try:
                year = int(row[0])
            except ValueError:
                raise FormatError(f"bad year {row[0]!r}", line=lineno) from None
            if years and year <= years[-1]:
                raise FormatError("years must be strictly ascending", line=lineno)
            vals = []
            for cell in row[1:]:
                cell = cell.strip()
                if cell == "":
                    vals.append(np.nan)
                else:
                    try:
                        vals.append(float(cell))
                    except ValueError:
                        raise FormatError(f"bad value {cell!r}", line=lineno) from None
            years.append(year)
            rows.append(vals)
    if not years:
        raise FormatError("values file has no data rows", line=2)
    start, end = years[0], years[-1]
    data = np.full((end - start + 1, len(ids)), np.nan)
    data[np.asarray(years) - start] = rows
    return np.arange(start, end + 1), {i: data[:, k] for k, i in enumerate(ids)}


def _column_series(years: np.ndarray, column: np.ndarray) -> TimeSeries | None:
    ok = np.isfinite(column)
    if not ok.any():
        return None
    i, j = np.flatnonzero(ok)[[0, -1]]
    return TimeSeries(int(years[i]), column[i : j + 1])


def save_network(net: ProxyNetwork, path: str | os.PathLike) -> None:
    """Write ``metadata.csv`` + ``values.csv`` (inverse of load_network)."""
    os.makedirs(path, exist_ok=True)
    meta_buf = io.StringIO()
    meta_buf.write("id,kind,core_count,flags,resolution\n")
    for r in net.records:
        cores = "" if r.core_count is None else str(r.core_count)
        flags = ";".join(sorted(r.flags))
        meta_buf.write(f"{r.id},{r.kind},{cores},{flags},{r.resolution}\n")
    atomic_write_text(os.path.join(path, "metadata.csv"), meta_buf.getvalue())

    start = min(r.series.start_year for r in net.records)
    end = max(r.series.end_year for r in net.records)
    matrix = network_matrix(net, start, end)
    buf = io.StringIO()
    buf.write("year," + ",".join(net.ids) + "\n")
    for i, year in enumerate(matrix.years):
        cells = [
            fnum(v) if np.isfinite(v) else "" for v in matrix.values[i]
        ]
        buf.write(f"{year}," + ",".join(cells) + "\n")
    atomic_write_text(os.path.join(path, "values.csv"), buf.getvalue())


def write_rejections(rejections: list[Rejection], path: str | os.PathLike) -> None:
    lines = ["id,reason\n"] + [f"{rej.id},{rej.reason}\n" for rej in rejections]
    atomic_write_text(path, "".join(lines))
