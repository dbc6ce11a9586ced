"""Regularized EM imputation and the two-band (hybrid) reconstruction.

The reconstruction problem is cast as missing-data imputation: proxies
and target form one joint matrix in which the target column is blank
outside the calibration window, and EM alternates between

* E step: impute missing entries from the current mean and covariance,
  with the regression of missing on available variables ridge
  regularized (scalar parameter on the correlation scale, either fixed
  or picked each iteration by generalized cross-validation), and
* M step: refresh mean and covariance from the completed matrix,

until the relative change of the imputed values drops below tolerance.

Sparse (decadal-resolution) records need no special casing here: their
off-block years are just more missing entries. The hybrid variant fits
the low and high frequency bands separately and sums the band
reconstructions, with decadal records entering the low band only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, MissingDataError
from .proxies import ProxyMatrix, ProxyNetwork, network_matrix
from .regression import ReconModel, Reconstruction
from .timeseries import TimeSeries, interpolate_linear, split_bands

REGEM_TOL = 1e-6
REGEM_MAX_ITER = 200

_TINY = 1e-12


@dataclass
class RegemResult:
    """Completed matrix plus convergence diagnostics."""

    completed: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    rel_changes: list[float]
    iterations: int
    ridge_used: float | None


def _ridge_solve(r_aa: np.ndarray, r_am: np.ndarray, h: float) -> np.ndarray:
    lam, q = np.linalg.eigh(r_aa)
    lam = np.maximum(lam, 0.0)
    t = q.T @ r_am
    return q @ (t / (lam + h)[:, None])


_GCV_DOF_FRACTION = 0.5


def _gcv_ridge(r_aa: np.ndarray, r_am: np.ndarray, n_rows: int) -> float:
    """Scalar ridge minimizing the GCV criterion for this pattern.

    Candidates whose effective dof exceed half the sample size are
    excluded: GCV degenerates toward zero regularization once the
    regression can nearly interpolate.
    """
    lam, q = np.linalg.eigh(r_aa)
    lam = np.maximum(lam, 0.0)
    t2 = (q.T @ r_am) ** 2
    lam_max = max(lam[-1], _TINY)
    candidates = lam_max * np.geomspace(1e-9, 10.0, 40)
    best_h, best_g = float(candidates[-1]), np.inf
    for h in candidates:
        f = 1.0 / (lam + h)
        trace = float(np.sum(lam * f))
        if trace > _GCV_DOF_FRACTION * n_rows:
            continue
        resid = r_am.shape[1] - float(np.sum(t2 * (2.0 * f - lam * f * f)[:, None]))
        g = n_rows * max(resid, 0.0) / (n_rows - trace) ** 2
        if g < best_g:
            best_g, best_h = g, float(h)
    return best_h


def regem_impute(
    data: np.ndarray,
    ridge: float | None = None,
    tol: float = REGEM_TOL,
    max_iter: int = REGEM_MAX_ITER,
    gcv_rows: int | None = None,
) -> RegemResult:
    """Impute NaN entries of ``data`` by regularized EM.

    ``ridge=None`` selects the parameter by GCV per iteration and
    missingness pattern; ``gcv_rows`` overrides the sample size GCV
    assumes (use the effective number of independent rows when the
    data are low-pass filtered, since GCV under serial correlation
    otherwise picks far too little regularization). A complete matrix
    is returned unchanged after zero iterations; hitting the iteration
    cap raises :class:`ConvergenceError` carrying the last relative
    change.

    The convergence measure per sweep is the RMS change the E step asks
    for, each entry standardized by its column's current std. Because
    the sweep map contracts slowly when the missing fraction is large,
    Anderson acceleration (short residual history, safeguarded) is
    applied to the imputed-value vector; the fixed point itself is
    untouched and convergence is judged on the plain sweep residual.
    """
    x = np.array(data, dtype=float)
    if x.ndim != 2:
        raise ValueError("data must be 2-d")
    missing = ~np.isfinite(x)
    n, p = x.shape
    if not missing.any():
        mu = x.mean(axis=0)
        cov = np.cov(x, rowvar=False, ddof=1) if n > 1 else np.zeros((p, p))
        return RegemResult(x, mu, np.atleast_2d(cov), [], 0, ridge)
    if missing.all(axis=0).any():
        raise ValueError("a column has no observed values")
    if missing.all(axis=1).any():
        raise ValueError("a row has no observed values")

    # Initial fill with column means of the observed entries.
    col_means = np.nanmean(np.where(missing, np.nan, x), axis=0)
    x[missing] = np.broadcast_to(col_means, x.shape)[missing]

    patterns, row_groups = _pattern_groups(missing)
    col_of_missing = np.nonzero(missing)[1]
    entry_of = np.cumsum(missing.ravel()) - 1
    pattern_entries = []
    for pat, rows in zip(patterns, row_groups):
        m = np.flatnonzero(pat)
        pattern_entries.append(entry_of[(rows[:, None] * p + m[None, :]).ravel()])
    rel_changes: list[float] = []
    last_ridge: float | None = ridge
    n_gcv = n if gcv_rows is None else max(int(gcv_rows), 3)
    mu = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))

    memory = 8
    dx_hist: list[np.ndarray] = []
    df_hist: list[np.ndarray] = []
    x_prev: np.ndarray | None = None
    f_prev: np.ndarray | None = None
    prev_norm = np.inf
    for iteration in range(1, max_iter + 1):
        mu = x.mean(axis=0)
        cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
        d = np.sqrt(np.maximum(np.diag(cov), _TINY))
        corr = cov / np.outer(d, d)
        np.fill_diagonal(corr, 1.0)

        x_cur = x[missing]
        sweep = np.empty_like(x_cur)
        for pat, rows, entries in zip(patterns, row_groups, pattern_entries):
            m = np.flatnonzero(pat)
            a = np.flatnonzero(~pat)
            if a.size == 0:
                new = np.broadcast_to(mu[m], (rows.size, m.size))
            else:
                r_aa = corr[np.ix_(a, a)]
                r_am = corr[np.ix_(a, m)]
                h = ridge if ridge is not None else _gcv_ridge(r_aa, r_am, n_gcv)
                last_ridge = h
                b = _ridge_solve(r_aa, r_am, h)
                z_a = (x[np.ix_(rows, a)] - mu[a]) / d[a]
                new = mu[m] + (z_a @ b) * d[m]
            sweep[entries] = np.asarray(new).ravel()

        f = sweep - x_cur
        rel = float(np.sqrt(np.mean((f / d[col_of_missing]) ** 2)))
        rel_changes.append(rel)
        if rel < tol:
            x[missing] = sweep
            return RegemResult(x, mu, cov, rel_changes, iteration, last_ridge)

        norm = float(np.linalg.norm(f))
        if norm > 5.0 * prev_norm:
            # Accelerated step degraded the residual: restart history.
            dx_hist.clear()
            df_hist.clear()
            x_prev = f_prev = None
        prev_norm = norm
        if x_prev is not None:
            dx_hist.append(x_cur - x_prev)
            df_hist.append(f - f_prev)
            if len(dx_hist) > memory:
                dx_hist.pop(0)
                df_hist.pop(0)
        x_prev, f_prev = x_cur, f

        if df_hist:
            df_mat = np.stack(df_hist, axis=1)
            gamma, *_ = np.linalg.lstsq(df_mat, f, rcond=None)
            dx_mat = np.stack(dx_hist, axis=1)
            x[missing] = sweep - (dx_mat + df_mat) @ gamma
        else:
            x[missing] = sweep
    raise ConvergenceError(
        f"EM hit the {max_iter}-iteration cap", last_change=rel_changes[-1]
    )


def _pattern_groups(missing: np.ndarray):
    """Group incomplete rows by their missingness pattern."""
    incomplete = np.flatnonzero(missing.any(axis=1))
    pats, inverse = np.unique(missing[incomplete], axis=0, return_inverse=True)
    groups = [incomplete[inverse == k] for k in range(pats.shape[0])]
    return list(pats), groups


def _joint_matrix(matrix: ProxyMatrix, target: TimeSeries, calibration) -> np.ndarray:
    start, end = calibration
    t_col = np.full(matrix.years.size, np.nan)
    lo = max(start, target.start_year, int(matrix.years[0]))
    hi = min(end, target.end_year, int(matrix.years[-1]))
    if lo <= hi:
        rows = (matrix.years >= lo) & (matrix.years <= hi)
        t_col[rows] = target.values[matrix.years[rows] - target.start_year]
    if np.isfinite(t_col).sum() < 3:
        raise ValueError("target has fewer than 3 observed calibration years on the matrix axis")
    return np.column_stack([matrix.values, t_col])


def _final_target_model(
    result: RegemResult, ridge: float | None, calibration
) -> ReconModel:
    """Express the converged target regression as model coefficients."""
    cov = result.cov
    p = cov.shape[0] - 1
    d = np.sqrt(np.maximum(np.diag(cov), _TINY))
    corr = cov / np.outer(d, d)
    np.fill_diagonal(corr, 1.0)
    a = np.arange(p)
    h = result.ridge_used if result.ridge_used is not None else 0.0
    b_std = _ridge_solve(corr[np.ix_(a, a)], corr[np.ix_(a, [p])], h)[:, 0]
    beta = b_std * d[p] / d[:p]
    intercept = float(result.mean[p] - beta @ result.mean[:p])
    cond_var = float(max(1.0 - b_std @ corr[np.ix_(a, [p])][:, 0], 0.0) * d[p] ** 2)
    return ReconModel(
        method="regem",
        calibration=tuple(calibration),
        coefficients=beta,
        intercept=intercept,
        residual_variance=cond_var,
        ridge=result.ridge_used,
    )


def fit_regem(
    matrix: ProxyMatrix,
    target: TimeSeries,
    ridge: float | None,
    calibration: tuple[int, int],
    tol: float = REGEM_TOL,
    max_iter: int = REGEM_MAX_ITER,
    gcv_rows: int | None = None,
    label: str = "regem",
) -> Reconstruction:
    """Reconstruct the target by EM over the joint proxy+target matrix.

    The target column is kept only inside the calibration window; the
    imputed column over the full matrix axis is the reconstruction
    (observed values pass through unchanged inside calibration).
    """
    joint = _joint_matrix(matrix, target, calibration)
    result = regem_impute(joint, ridge=ridge, tol=tol, max_iter=max_iter, gcv_rows=gcv_rows)
    series = TimeSeries(int(matrix.years[0]), result.completed[:, -1])
    model = _final_target_model(result, ridge, calibration)
    return Reconstruction(series=series, model=model, label=label)


def _band_split_columns(
    matrix: ProxyMatrix,
    annual: np.ndarray,
    split_period: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Split annual columns into (low, high) matrices on the shared axis.

    Each annual record is split over its own observed span (interior
    gaps interpolated first); outside that span both bands stay missing.
    """
    n, _ = matrix.values.shape
    low = np.full((n, int(annual.sum())), np.nan)
    high = np.full_like(low, np.nan)
    for out_j, j in enumerate(np.flatnonzero(annual)):
        col = matrix.values[:, j]
        ok = np.isfinite(col)
        i0, i1 = np.flatnonzero(ok)[[0, -1]]
        piece = interpolate_linear(TimeSeries(int(matrix.years[i0]), col[i0 : i1 + 1]))
        if not piece.mask.all():
            raise MissingDataError(
                f"annual record {matrix.ids[j]!r} still has gaps after interpolation"
            )
        bands = split_bands(piece, split_period)
        low[i0 : i1 + 1, out_j] = bands.low.values
        high[i0 : i1 + 1, out_j] = bands.high.values
    return low, high


def reconstruct_hybrid(
    net: ProxyNetwork,
    target: TimeSeries,
    split_period: float,
    ridge: float | None,
    calibration: tuple[int, int],
    end_year: int | None = None,
    tol: float = REGEM_TOL,
    max_iter: int = REGEM_MAX_ITER,
    label: str = "regem_hybrid",
) -> Reconstruction:
    """Frequency-band calibration: fit each band with EM, sum the bands.

    Decadal-resolution records carry no sub-decadal information, so they
    join the low-band matrix unfiltered and are absent from the high
    band. With no annual records at all the high band is empty and the
    output is the low-band reconstruction alone.
    """
    last = max(r.series.end_year for r in net.records)
    end = min(end_year, last) if end_year is not None else last
    matrix = network_matrix(net, net.frozen_at, end)
    annual = np.array([r.resolution == "annual" for r in net.records])

    t = target.crop(max(target.start_year, net.frozen_at), min(target.end_year, end))
    t = interpolate_linear(t)
    obs = np.flatnonzero(t.mask)
    t = t.crop(int(t.years[obs[0]]), int(t.years[obs[-1]]))
    if not t.mask.all():
        raise MissingDataError("target still has gaps after interpolation")
    t_bands = split_bands(t, split_period)

    if annual.any():
        low_annual, high_annual = _band_split_columns(matrix, annual, split_period)
    else:
        low_annual = np.empty((matrix.values.shape[0], 0))
        high_annual = np.empty((matrix.values.shape[0], 0))

    annual_ids = tuple(np.asarray(matrix.ids)[annual])
    decadal_ids = tuple(np.asarray(matrix.ids)[~annual])
    low_values = np.column_stack([low_annual, matrix.values[:, ~annual]])
    low_matrix = ProxyMatrix(matrix.years, low_values, annual_ids + decadal_ids)
    # GCV sample sizes per band: a band carrying the fraction f of the
    # spectrum has about f * n independent rows.
    n_years = matrix.years.size
    low_rows = max(int(round(n_years * 2.0 / split_period)), 10)
    high_rows = max(n_years - low_rows, 10)
    low_recon = fit_regem(
        low_matrix,
        t_bands.low,
        ridge,
        calibration,
        tol=tol,
        max_iter=max_iter,
        gcv_rows=low_rows,
        label=label,
    )

    combined = low_recon.series.values.copy()
    residual_variance = low_recon.model.residual_variance
    if annual.any():
        high_matrix = ProxyMatrix(matrix.years, high_annual, annual_ids)
        high_recon = fit_regem(
            high_matrix,
            t_bands.high,
            ridge,
            calibration,
            tol=tol,
            max_iter=max_iter,
            gcv_rows=high_rows,
            label=label,
        )
        combined = combined + high_recon.series.values
        residual_variance += high_recon.model.residual_variance

    model = ReconModel(
        method="regem_hybrid",
        calibration=tuple(calibration),
        coefficients=low_recon.model.coefficients,
        intercept=low_recon.model.intercept,
        residual_variance=residual_variance,
        ridge=low_recon.model.ridge,
    )
    return Reconstruction(
        series=TimeSeries(int(matrix.years[0]), combined), model=model, label=label
    )
