"""Verification statistics and hold-out block validation.

The two headline diagnostics follow the standard dendroclimatology
definitions, spelled out here to remove any ambiguity:

* reduction of error
  ``RE = 1 - SSE / sum((truth - calibration_mean)^2)``
  benchmarks the reconstruction against a constant forecast at the
  calibration-period mean;
* coefficient of efficiency
  ``CE = 1 - SSE / sum((truth - verification_mean)^2)``
  benchmarks against the verification-period mean.

Both are at most 1; CE never exceeds RE, with equality when the two
benchmark means coincide over the window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTruth
from .pipeline import MethodConfig, reconstruct_with
from .proxies import DEFAULT_CALIBRATION, ProxyNetwork
from .timeseries import TimeSeries, align

HOLDOUT_MODES = ("early", "late", "sliding")
SLIDING_STEP = 10


@dataclass(frozen=True)
class SkillReport:
    """Skill of a reconstruction against truth over one window."""

    re: float
    ce: float
    rmse: float
    r2: float
    var_ratio: float
    window: tuple[int, int]
    n: int

    def __post_init__(self):
        if self.rmse < 0 or self.var_ratio < 0:
            raise ValueError("rmse and var_ratio must be nonnegative")
        if self.re > 1 + 1e-12 or self.ce > 1 + 1e-12:
            raise ValueError("re and ce cannot exceed 1")
        if self.ce > self.re + 1e-9:
            raise ValueError("ce cannot exceed re")


def score(
    recon: TimeSeries,
    truth: TimeSeries,
    calibration_mean: float,
    window: tuple[int, int],
) -> SkillReport:
    """Score a reconstruction against truth over [start, end]."""
    start, end = window
    a, b = align(recon.crop(start, end), truth.crop(start, end))
    ok = a.mask & b.mask
    n = int(ok.sum())
    if n < 5:
        raise ValueError(f"only {n} overlapping years in [{start}, {end}] (need >= 5)")
    r = a.values[ok]
    t = b.values[ok]
    sse = float(np.sum((r - t) ** 2))
    tbar = float(t.mean())
    ss_verif = float(np.sum((t - tbar) ** 2))
    if ss_verif == 0.0:
        raise DegenerateTruth(f"truth is constant over [{start}, {end}]")
    ss_cal = float(np.sum((t - calibration_mean) ** 2))
    rvar = float(np.var(r, ddof=1))
    corr = 0.0
    if rvar > 0:
        corr = float(np.corrcoef(r, t)[0, 1])
    return SkillReport(
        re=1.0 - sse / ss_cal,
        ce=1.0 - sse / ss_verif,
        rmse=float(np.sqrt(sse / n)),
        r2=min(corr * corr, 1.0),
        var_ratio=rvar / float(np.var(t, ddof=1)),
        window=(start, end),
        n=n,
    )


def _mask_window(s: TimeSeries, start: int, end: int) -> TimeSeries:
    values = s.values.copy()
    lo = max(start, s.start_year)
    hi = min(end, s.end_year)
    if lo <= hi:
        values[lo - s.start_year : hi - s.start_year + 1] = np.nan
    return TimeSeries(s.start_year, values)


def holdout_blocks(
    calibration: tuple[int, int], block_length: int, mode: str
) -> list[tuple[int, int]]:
    """Hold-out windows inside the instrumental overlap."""
    start, end = calibration
    span = end - start + 1
    if block_length >= span:
        raise ValueError(f"block_length {block_length} must be below the {span}-year overlap")
    if span - block_length < 30:
        raise ValueError("remaining calibration would fall below 30 years")
    if mode == "early":
        return [(start, start + block_length - 1)]
    if mode == "late":
        return [(end - block_length + 1, end)]
    if mode == "sliding":
        return [
            (b, b + block_length - 1)
            for b in range(start, end - block_length + 2, SLIDING_STEP)
        ]
    raise ValueError(f"mode must be one of {HOLDOUT_MODES}")


def holdout_validate(
    net: ProxyNetwork,
    target: TimeSeries,
    config: MethodConfig,
    block_length: int,
    mode: str = "sliding",
    calibration: tuple[int, int] = DEFAULT_CALIBRATION,
) -> list[tuple[tuple[int, int], SkillReport]]:
    """Fit on the overlap minus each block, score on the block.

    The held-out years are blanked in the target (never in the proxies),
    so interior blocks simply leave a two-piece fitting window. Fit
    errors propagate per block.
    """
    reports = []
    for block in holdout_blocks(calibration, block_length, mode):
        masked = _mask_window(target, *block)
        recon = reconstruct_with(config, net, masked, calibration)
        fit_part = _mask_window(target.crop(*calibration), *block)
        reports.append((block, score(recon.series, target, fit_part.mean(), block)))
    return reports
