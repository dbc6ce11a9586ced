"""Annual time series with missing-value mask, plus the shared transforms.

All series live on a contiguous annual year axis. Missing entries are
carried as NaN in ``values`` and False in ``mask``; the two encodings are
kept consistent at construction. Operations are pure functions returning
new series.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import butter, filtfilt

from .errors import (
    DegenerateBaseline,
    FormatError,
    MissingDataError,
    NoCompleteBlock,
    NoOverlap,
)
from .ioutil import atomic_write_text, fnum

# Decade blocks end in years ending in 6, so 1997-2006 is a block.
DEFAULT_DECADE_ANCHOR = 1997


@dataclass(frozen=True)
class TimeSeries:
    """Annual-resolution series on a contiguous year axis.

    Parameters
    ----------
    start_year : int
        Calendar year of the first entry.
    values : array_like
        Real values; NaN marks missing entries.
    mask : array_like of bool, optional
        True where a value is available. Defaults to ``isfinite(values)``.
        Entries that are masked out are stored as NaN regardless of the
        value passed in.
    """

    start_year: int
    values: np.ndarray
    mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).copy()
        if values.ndim != 1 or values.size < 1:
            raise ValueError("values must be a 1-d sequence of length >= 1")
        if self.mask is None:
            mask = np.isfinite(values)
        else:
            mask = np.asarray(self.mask, dtype=bool).copy()
            if mask.shape != values.shape:
                raise ValueError("mask and values must have equal length")
            mask &= np.isfinite(values)
        values[~mask] = np.nan
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "start_year", int(self.start_year))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    def __len__(self) -> int:
        return self.values.size

    @property
    def end_year(self) -> int:
        return self.start_year + len(self) - 1

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.start_year, self.start_year + len(self))

    @property
    def n_available(self) -> int:
        return int(self.mask.sum())

    def index_of(self, year: int) -> int:
        if not self.start_year <= year <= self.end_year:
            raise KeyError(f"year {year} outside [{self.start_year}, {self.end_year}]")
        return int(year - self.start_year)

    def value_at(self, year: int) -> float:
        return float(self.values[self.index_of(year)])

    def crop(self, start: int, end: int) -> "TimeSeries":
        """Restrict to the intersection of [start, end] with the span."""
        lo = max(start, self.start_year)
        hi = min(end, self.end_year)
        if lo > hi:
            raise NoOverlap(f"[{start}, {end}] does not meet [{self.start_year}, {self.end_year}]")
        i, j = lo - self.start_year, hi - self.start_year + 1
        return TimeSeries(lo, self.values[i:j], self.mask[i:j])

    def with_values(self, values: np.ndarray, mask: np.ndarray | None = None) -> "TimeSeries":
        return TimeSeries(self.start_year, values, self.mask if mask is None else mask)

    def mean(self) -> float:
        """Mean over available entries."""
        if not self.mask.any():
            return float("nan")
        return float(np.nanmean(self.values))

    def std(self, ddof: int = 1) -> float:
        return float(np.nanstd(self.values, ddof=ddof))


@dataclass(frozen=True)
class BandPair:
    """Complementary frequency bands: ``low + high`` rebuilds the input."""

    low: TimeSeries
    high: TimeSeries


def align(a: TimeSeries, b: TimeSeries) -> tuple[TimeSeries, TimeSeries]:
    """Restrict both series to their common year range.

    Raises :class:`NoOverlap` when the spans are disjoint. Masks are
    preserved; identical axes come back unchanged.
    """
    lo = max(a.start_year, b.start_year)
    hi = min(a.end_year, b.end_year)
    if lo > hi:
        raise NoOverlap(
            f"[{a.start_year}, {a.end_year}] and [{b.start_year}, {b.end_year}] are disjoint"
        )
    return a.crop(lo, hi), b.crop(lo, hi)


def to_anomaly(s: TimeSeries, base_start: int, base_end: int) -> TimeSeries:
    """Subtract the mean over the base window (available entries only)."""
    lo = max(base_start, s.start_year)
    hi = min(base_end, s.end_year)
    if lo > hi:
        raise DegenerateBaseline(f"base window [{base_start}, {base_end}] misses the series")
    window = s.crop(lo, hi)
    if window.n_available < 2:
        raise DegenerateBaseline(
            f"base window [{base_start}, {base_end}] has {window.n_available} usable values"
        )
    return s.with_values(s.values - window.mean())


def block_start_for(year: int, anchor: int = DEFAULT_DECADE_ANCHOR) -> int:
    """First year of the 10-year block containing ``year``."""
    return year - (year - anchor) % 10


def decade_blocks(
    s: TimeSeries, anchor: int = DEFAULT_DECADE_ANCHOR
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Complete 10-year blocks inside the span.

    Returns (block start years, block means over available entries,
    available counts). Raises :class:`NoCompleteBlock` when no block fits.
    """
    first = block_start_for(s.start_year, anchor)
    if first < s.start_year:
        first += 10
    starts = np.arange(first, s.end_year - 8, 10)
    if starts.size == 0:
        raise NoCompleteBlock(
            f"no complete decade block inside [{s.start_year}, {s.end_year}]"
        )
    means = np.empty(starts.size)
    counts = np.empty(starts.size, dtype=int)
    for k, b in enumerate(starts):
        i = b - s.start_year
        chunk = s.values[i : i + 10]
        n = int(np.isfinite(chunk).sum())
        counts[k] = n
        means[k] = np.nanmean(chunk) if n else np.nan
    return starts, means, counts


def decadal_average(
    s: TimeSeries, decade_anchor: int = DEFAULT_DECADE_ANCHOR, min_count: int = 5
) -> TimeSeries:
    """Average complete 10-year blocks.

    The result stays on the annual axis with one value per block, placed
    at the block-end year, everything else masked (the storage convention
    for decadal-resolution records). Blocks with fewer than ``min_count``
    available entries are masked missing.
    """
    starts, means, counts = decade_blocks(s, decade_anchor)
    start = int(starts[0])
    end = int(starts[-1]) + 9
    values = np.full(end - start + 1, np.nan)
    for b, m, n in zip(starts, means, counts):
        if n >= min_count:
            values[b + 9 - start] = m
    return TimeSeries(start, values)


def interpolate_linear(s: TimeSeries) -> TimeSeries:
    """Fill interior gaps by linear interpolation.

    Leading and trailing gaps are left missing; callers that need a fully
    complete series must crop to the observed span first.
    """
    if s.mask.all() or not s.mask.any():
        return s
    idx = np.flatnonzero(s.mask)
    values = s.values.copy()
    interior = np.arange(idx[0], idx[-1] + 1)
    values[interior] = np.interp(interior, idx, s.values[idx])
    return TimeSeries(s.start_year, values)


def split_bands(s: TimeSeries, split_period_years: float = 20.0) -> BandPair:
    """Split into complementary low and high frequency bands.

    Low band: zero-phase (forward-backward) Butterworth low-pass at
    1/``split_period_years`` cycles per year with reflective padding.
    High band is the residual, so ``low + high`` equals the input exactly.
    """
    if split_period_years <= 2:
        raise ValueError("split_period_years must exceed 2 (Nyquist limit)")
    if not s.mask.all():
        raise MissingDataError("split_bands requires a gap-free series")
    x = s.values
    n = x.size
    if n < 4 or np.ptp(x) == 0.0:
        # Too short to filter, or constant: the whole series is low band.
        low = x.copy()
    else:
        b, a = butter(4, 1.0 / split_period_years, btype="low", fs=1.0)
        padlen = min(3 * max(len(a), len(b)), n - 1)
        low = filtfilt(b, a, x, padtype="even", padlen=padlen)
    high = x - low
    return BandPair(TimeSeries(s.start_year, low), TimeSeries(s.start_year, high))


def loess_smooth(s: TimeSeries, span: float) -> TimeSeries:
    """Locally weighted linear regression over the year axis.

    Degree-1 fits with tricube weights over the ``ceil(span * n)``
    nearest available neighbours of each year, evaluated at that year.
    Output keeps the input mask; years whose window holds fewer than 4
    points come back missing.
    """
    if not 0 < span <= 1:
        raise ValueError("span must lie in (0, 1]")
    years = s.years.astype(float)
    avail = np.flatnonzero(s.mask)
    out = np.full(len(s), np.nan)
    if avail.size == 0:
        return TimeSeries(s.start_year, out)
    q = min(int(np.ceil(span * avail.size)), avail.size)
    xs = years[avail]
    ys = s.values[avail]
    for i in avail:
        t = years[i]
        d = np.abs(xs - t)
        if q < 4:
            continue
        cut = np.argpartition(d, q - 1)[:q]
        dq = d[cut]
        h = dq.max()
        if h == 0:
            out[i] = ys[cut][0]
            continue
        w = (1.0 - np.minimum(dq / h, 1.0) ** 3) ** 3
        xw = xs[cut] - t  # center on the evaluation year
        yw = ys[cut]
        sw = w.sum()
        sx = (w * xw).sum()
        sxx = (w * xw * xw).sum()
        sy = (w * yw).sum()
        sxy = (w * xw * yw).sum()
        det = sw * sxx - sx * sx
        if det <= 0 or not np.isfinite(det):
            out[i] = sy / sw
        else:
            # Intercept of the centered fit is the value at t.
            out[i] = (sxx * sy - sx * sxy) / det
    return TimeSeries(s.start_year, out, s.mask)


def read_series_csv(text_or_path) -> TimeSeries:
    """Read a ``year,value`` CSV; empty value field means missing.

    Years must be strictly ascending; holes in the axis become missing
    entries. Accepts a path or an open text stream.
    """
    if hasattr(text_or_path, "read"):
        stream = text_or_path
        return _read_series(stream)
    with open(text_or_path, newline="") as fh:
        return _read_series(fh)


def _read_series(fh) -> TimeSeries:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError("empty series file", line=1) from None
    if [c.strip().lower() for c in header[:2]] != ["year", "value"]:
        raise FormatError("expected header 'year,value'", line=1)
    years: list[int] = []
    vals: list[float] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        try:
            year = int(row[0])
        except ValueError:
            raise FormatError(f"bad year {row[0]!r}", line=lineno) from None
        if years and year <= years[-1]:
            raise FormatError("years must be strictly ascending", line=lineno)
        raw = row[1].strip() if len(row) > 1 else ""
        if raw == "":
            val = np.nan
        else:
            try:
                val = float(raw)
            except ValueError:
                raise FormatError(f"bad value {raw!r}", line=lineno) from None
        years.append(year)
        vals.append(val)
    if not years:
        raise FormatError("series file has no data rows", line=2)
    start, end = years[0], years[-1]
    values = np.full(end - start + 1, np.nan)
    values[np.asarray(years) - start] = vals
    return TimeSeries(start, values)


def write_series_csv(s: TimeSeries, path_or_stream) -> None:
    """Write the ``year,value`` CSV format (missing as empty field)."""
    if hasattr(path_or_stream, "write"):
        _write_series(s, path_or_stream)
    else:
        buf = io.StringIO()
        _write_series(s, buf)
        atomic_write_text(path_or_stream, buf.getvalue())


def _write_series(s: TimeSeries, fh) -> None:
    fh.write("year,value\n")
    for year, value, ok in zip(s.years, s.values, s.mask):
        fh.write(f"{year},{fnum(value)}\n" if ok else f"{year},\n")
