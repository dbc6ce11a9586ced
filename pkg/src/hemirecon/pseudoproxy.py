"""Pseudoproxy benchmarking: synthetic truth fields, red-noise proxies,
and the method-comparison harness.

The harness accepts any gridded truth field; the bundled generator is a
desk-scale stand-in for millennium-length climate-model output. Each
pseudoproxy is a randomly chosen site series plus stationary AR(1)
noise whose standard deviation is anchored to that site's own signal:
``sigma_noise = std(site) / snr`` with SNR the amplitude
(standard-deviation) ratio, so SNR = 0.4 means noise 2.5 times the
signal.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from .errors import FormatError, SpecError
from .ioutil import atomic_write_text, fnum
from .pipeline import MethodConfig, reconstruct_with
from .proxies import ProxyNetwork, ProxyRecord
from .seeding import derive_seed
from .timeseries import TimeSeries
from .verification import SkillReport, score

DEFAULT_CALIBRATION = (1856, 1980)
STANDARD_NETWORK_SIZES = (59, 104)


@dataclass(frozen=True)
class TruthField:
    """Complete gridded field with site coordinates.

    ``values`` has one row per year and one column per site; no missing
    entries are allowed anywhere.
    """

    ids: tuple[str, ...]
    lats: np.ndarray
    lons: np.ndarray
    start_year: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(self.ids):
            raise ValueError("values must be years x sites matching ids")
        if not np.isfinite(values).all():
            raise ValueError("truth field must be complete")
        lats = np.asarray(self.lats, dtype=float)
        lons = np.asarray(self.lons, dtype=float)
        if lats.size != len(self.ids) or lons.size != len(self.ids):
            raise ValueError("lats and lons must match ids")
        if np.any(np.abs(lats) > 90):
            raise ValueError("latitudes must lie in [-90, 90]")
        for arr in (values, lats, lons):
            arr.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "lats", lats)
        object.__setattr__(self, "lons", lons)
        object.__setattr__(self, "ids", tuple(self.ids))

    @property
    def n_sites(self) -> int:
        return len(self.ids)

    @property
    def n_years(self) -> int:
        return self.values.shape[0]

    @property
    def end_year(self) -> int:
        return self.start_year + self.n_years - 1

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.start_year, self.start_year + self.n_years)

    def site_series(self, index: int) -> TimeSeries:
        return TimeSeries(self.start_year, self.values[:, index])

    def hemisphere_mean(self) -> TimeSeries:
        """Area-weighted (cos latitude) mean over all sites."""
        w = np.cos(np.radians(self.lats))
        return TimeSeries(self.start_year, self.values @ (w / w.sum()))


@dataclass(frozen=True)
class PseudoproxySpec:
    """Sampling recipe for one pseudoproxy network."""

    n_sites: int
    rho: float = 0.32
    snr: float = 0.4
    seed: int = 0
    calibration: tuple[int, int] = DEFAULT_CALIBRATION

    def __post_init__(self):
        if self.n_sites < 1:
            raise SpecError("n_sites must be >= 1")
        if not 0 <= self.rho < 1:
            raise SpecError("rho must lie in [0, 1)")
        if not self.snr > 0:
            raise SpecError("snr must be positive (infinity for noise-free)")


@dataclass(frozen=True)
class TruthConfig:
    """Knobs of the synthetic truth generator.

    The common forced signal is a slow random walk plus a late linear
    ramp standing in for anthropogenic forcing; sites add spatially
    correlated AR(1) weather on top.
    """

    walk_std: float = 0.02
    ramp_start_year: int = 1900
    ramp_amplitude: float = 1.0
    weather_std: float = 0.6
    weather_rho: float = 0.35
    corr_length: float = 1.2  # unit-sphere chord distance scale


def generate_truth(
    n_sites: int,
    years: tuple[int, int],
    config: TruthConfig = TruthConfig(),
    seed: int = 0,
) -> TruthField:
    """Synthetic hemispheric truth field, deterministic in ``seed``."""
    start, end = years
    n_years = end - start + 1
    if n_years < 200:
        raise ValueError("truth field needs at least 200 years")
    rng = np.random.default_rng(seed)

    # Sites uniform over the northern hemisphere.
    lats = np.degrees(np.arcsin(rng.uniform(0.0, 1.0, n_sites)))
    lons = rng.uniform(-180.0, 180.0, n_sites)

    walk = np.cumsum(rng.normal(0.0, config.walk_std, n_years))
    signal = walk - walk.mean()
    year_axis = np.arange(start, end + 1)
    ramp_years = year_axis >= config.ramp_start_year
    if ramp_years.any() and config.ramp_amplitude != 0.0:
        ramp_span = max(int(ramp_years.sum()) - 1, 1)
        signal = signal + np.where(
            ramp_years,
            config.ramp_amplitude * (year_axis - config.ramp_start_year) / ramp_span,
            0.0,
        )

    weather = np.zeros((n_years, n_sites))
    if config.weather_std > 0:
        chord = _chord_distances(lats, lons)
        corr = np.exp(-chord / config.corr_length)
        chol = np.linalg.cholesky(corr + 1e-10 * np.eye(n_sites))
        shocks = rng.standard_normal((n_years, n_sites)) @ chol.T
        rho = config.weather_rho
        weather[0] = config.weather_std * shocks[0]
        innov_scale = config.weather_std * math.sqrt(1.0 - rho**2)
        for t in range(1, n_years):
            weather[t] = rho * weather[t - 1] + innov_scale * shocks[t]

    values = signal[:, None] + weather
    values -= values.mean(axis=0)  # site series as anomalies
    ids = tuple(f"site_{i:03d}" for i in range(n_sites))
    return TruthField(ids=ids, lats=lats, lons=lons, start_year=start, values=values)


def _chord_distances(lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
    lat = np.radians(lats)
    lon = np.radians(lons)
    xyz = np.stack(
        [np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=1
    )
    diff = xyz[:, None, :] - xyz[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


def ar1_noise(n: int, rho: float, sigma: float, seed) -> TimeSeries:
    """Stationary AR(1) draw of length ``n`` with marginal std ``sigma``.

    ``x[t] = rho * x[t-1] + eps[t]`` with innovation variance
    ``sigma^2 (1 - rho^2)``; ``x[0]`` comes from the stationary
    distribution. ``seed`` may be an int, SeedSequence or Generator.
    """
    if not abs(rho) < 1:
        raise ValueError("|rho| must be below 1")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    rng = np.random.default_rng(seed)
    x0 = rng.normal(0.0, sigma)
    if n == 1:
        return TimeSeries(0, np.array([x0]))
    eps = rng.normal(0.0, sigma * math.sqrt(1.0 - rho**2), n - 1)
    rest, _ = lfilter([1.0], [1.0, -rho], eps, zi=np.array([rho * x0]))
    return TimeSeries(0, np.concatenate([[x0], rest]))


def make_pseudoproxies(field: TruthField, spec: PseudoproxySpec) -> ProxyNetwork:
    """Sample sites and add red noise at the prescribed SNR.

    The signal passes through untouched: each record is exactly
    ``site series + noise``, no rescaling afterwards. Stream layout is
    fixed so results are reproducible: ``SeedSequence(spec.seed)`` is
    spawned into ``n_sites + 1`` children, child 0 drives the site
    draw and child ``k + 1`` the noise of the k-th selected record.
    """
    if spec.n_sites > field.n_sites:
        raise SpecError(f"{spec.n_sites} sites requested from a {field.n_sites}-site grid")
    children = np.random.SeedSequence(spec.seed).spawn(spec.n_sites + 1)
    picks = np.random.default_rng(children[0]).choice(
        field.n_sites, size=spec.n_sites, replace=False
    )
    records = []
    for k, site in enumerate(picks):
        signal = field.values[:, site]
        if math.isinf(spec.snr):
            noise = np.zeros(field.n_years)
        else:
            sigma = float(np.std(signal, ddof=1)) / spec.snr
            noise = ar1_noise(field.n_years, spec.rho, sigma, children[k + 1]).values
        records.append(
            ProxyRecord(
                id=f"pp_{field.ids[site]}",
                series=TimeSeries(field.start_year, signal + noise),
                kind="other",
                resolution="annual",
            )
        )
    return ProxyNetwork(tuple(records), frozen_at=field.start_year)


@dataclass(frozen=True)
class BenchmarkRow:
    method: str
    replicate: int
    report: SkillReport | None
    error: str | None = None


@dataclass(frozen=True)
class BenchmarkResult:
    rows: tuple[BenchmarkRow, ...]
    window: tuple[int, int]

    def reports_for(self, method: str) -> list[SkillReport]:
        return [r.report for r in self.rows if r.method == method and r.report is not None]

    def median(self, method: str, metric: str) -> float:
        reports = self.reports_for(method)
        if not reports:
            return float("nan")
        return float(np.median([getattr(r, metric) for r in reports]))


def run_benchmark(
    field: TruthField,
    spec: PseudoproxySpec,
    methods: list[MethodConfig],
    replicates: int,
    base_seed: int,
) -> BenchmarkResult:
    """Score every method on fresh pseudoproxy networks.

    Each replicate draws new sites and noise from a seed derived from
    ``base_seed`` and the replicate index, fits every method on the
    calibration window against the hemispheric mean, and scores the
    pre-calibration reconstruction against the true hemispheric mean.
    Per-method fit failures are recorded, not fatal.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    cal_start, cal_end = spec.calibration
    if not (field.start_year < cal_start and cal_end <= field.end_year):
        raise SpecError("calibration window must sit inside the field years")
    truth = field.hemisphere_mean()
    cal_mean = truth.crop(cal_start, cal_end).mean()
    window = (field.start_year, cal_start - 1)

    rows: list[BenchmarkRow] = []
    for rep in range(replicates):
        rep_spec = replace(spec, seed=derive_seed(base_seed, "replicate", rep))
        net = make_pseudoproxies(field, rep_spec)
        for cfg in methods:
            label = cfg.label()
            try:
                recon = reconstruct_with(cfg, net, truth, spec.calibration)
                report = score(recon.series, truth, cal_mean, window)
                rows.append(BenchmarkRow(label, rep, report))
            except Exception as exc:  # recorded per replicate
                rows.append(BenchmarkRow(label, rep, None, error=str(exc)))
    return BenchmarkResult(tuple(rows), window)


def write_benchmark_csv(result: BenchmarkResult, fh) -> None:
    """Per-replicate rows: ``method,replicate,rmse,re,ce,r2,var_ratio``."""
    fh.write("method,replicate,rmse,re,ce,r2,var_ratio\n")
    for row in result.rows:
        if row.report is None:
            fh.write(f"{row.method},{row.replicate},,,,,\n")
        else:
            r = row.report
            fh.write(
                f"{row.method},{row.replicate},{fnum(r.rmse)},{fnum(r.re)},{fnum(r.ce)},"
                f"{fnum(r.r2)},{fnum(r.var_ratio)}\n"
            )


def write_benchmark_summary_csv(result: BenchmarkResult, fh) -> None:
    """Median metrics per method, failures counted."""
    fh.write("method,n_ok,n_failed,rmse,re,ce,r2,var_ratio\n")
    seen: list[str] = []
    for row in result.rows:
        if row.method not in seen:
            seen.append(row.method)
    for method in seen:
        n_ok = len(result.reports_for(method))
        n_all = sum(1 for r in result.rows if r.method == method)
        cells = ",".join(
            fnum(result.median(method, m)) for m in ("rmse", "re", "ce", "r2", "var_ratio")
        )
        fh.write(f"{method},{n_ok},{n_all - n_ok},{cells}\n")


def save_field(field_: TruthField, path: str | os.PathLike) -> None:
    """Write ``sites.csv`` + ``values.csv`` to a directory."""
    os.makedirs(path, exist_ok=True)
    buf = io.StringIO()
    buf.write("site_id,lat,lon\n")
    for sid, lat, lon in zip(field_.ids, field_.lats, field_.lons):
        buf.write(f"{sid},{fnum(lat)},{fnum(lon)}\n")
    atomic_write_text(os.path.join(path, "sites.csv"), buf.getvalue())
    buf = io.StringIO()
    buf.write("year," + ",".join(field_.ids) + "\n")
    for i, year in enumerate(field_.years):
        buf.write(f"{year}," + ",".join(fnum(v) for v in field_.values[i]) + "\n")
    atomic_write_text(os.path.join(path, "values.csv"), buf.getvalue())


def load_field(path: str | os.PathLike) -> TruthField:
    """Read a gridded field directory written by :func:`save_field`."""
    sites_path = os.path.join(path, "sites.csv")
    values_path = os.path.join(path, "values.csv")
    for p in (sites_path, values_path):
        if not os.path.exists(p):
            raise FormatError(f"missing field file: {p}")
    ids: list[str] = []
    lats: list[float] = []
    lons: list[float] = []
    with open(sites_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["site_id", "lat", "lon"]:
            raise FormatError("expected header 'site_id,lat,lon'", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or not any(c.strip() for c in row):
                continue
            if len(row) != 3:
                raise FormatError(f"expected 3 fields, got {len(row)}", line=lineno)
            ids.append(row[0].strip())
            try:
                lats.append(float(row[1]))
                lons.append(float(row[2]))
            except ValueError:
                raise FormatError("bad coordinate", line=lineno) from None
    with open(values_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0].strip() != "year" or [c.strip() for c in header[1:]] != ids:
            raise FormatError("values columns must match sites.csv order", line=1)
        years: list[int] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or not any(c.strip() for c in row):
                continue
            try:
                year = int(row[0])
                vals = [float(c) for c in row[1:]]
            except ValueError:
                raise FormatError("bad field row", line=lineno) from None
            if len(vals) != len(ids):
                raise FormatError(f"expected {len(ids)} values", line=lineno)
            if years and year != years[-1] + 1:
                raise FormatError("field years must be contiguous", line=lineno)
            years.append(year)
            rows.append(vals)
    if not years:
        raise FormatError("values file has no data rows", line=2)
    return TruthField(
        ids=tuple(ids),
        lats=np.asarray(lats),
        lons=np.asarray(lons),
        start_year=years[0],
        values=np.asarray(rows),
    )
