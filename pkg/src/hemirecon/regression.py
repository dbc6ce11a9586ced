"""Calibration-period regression methods: PCA, OLS on retained PCs, lasso.

Conventions fixed here (not claimed to be anyone else's):

* predictor standardization uses mean and sample std over the
  calibration window only, so pre-instrumental variance never leaks
  into the scaling;
* lasso minimizes ``0.5 * ||y - X b||^2 + lam * ||b||_1`` on the
  standardized predictors, intercept unpenalized;
* component count and lasso penalty are selected by cross-validation
  over contiguous decadal blocks of the calibration window, ties
  broken toward the simpler model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ioutil import fnum
from .errors import (
    ConvergenceError,
    DegenerateColumn,
    InsufficientCalibration,
    SingularFit,
)
from .proxies import ProxyMatrix
from .timeseries import TimeSeries

METHODS = ("ols_pc", "lasso", "regem", "regem_hybrid")

LASSO_TOL = 1e-8
LASSO_MAX_ITER = 100_000


@dataclass(frozen=True)
class Standardization:
    """Per-column location/scale estimated over a fit window."""

    means: np.ndarray
    scales: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.means) / self.scales


@dataclass(frozen=True)
class PCABasis:
    """SVD principal components of the standardized proxy matrix.

    ``loadings`` columns are orthonormal; ``scores`` cover the fit window
    and extend to any window via :meth:`scores_for`.
    """

    loadings: np.ndarray
    scores: np.ndarray
    explained_variance: np.ndarray
    standardization: Standardization
    fit_years: np.ndarray
    ids: tuple[str, ...] = ()

    @property
    def n_components(self) -> int:
        return self.loadings.shape[1]

    def scores_for(self, values: np.ndarray) -> np.ndarray:
        """Project rows of a raw proxy matrix onto the basis.

        Rows with any missing predictor come back as NaN rows.
        """
        z = self.standardization.apply(values)
        scores = z @ self.loadings
        bad = ~np.isfinite(values).all(axis=1)
        scores[bad] = np.nan
        return scores


@dataclass(frozen=True)
class ReconModel:
    """A fitted reconstruction method.

    ``coefficients`` live on the raw predictor scale (scores for
    ``ols_pc``, proxy units for ``lasso``), so prediction is a plain dot
    product plus intercept.
    """

    method: str
    calibration: tuple[int, int]
    coefficients: np.ndarray
    intercept: float
    residual_variance: float
    K: int | None = None
    lam: float | None = None
    ridge: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "ols_pc":
            if self.K is None or self.K < 1 or len(self.coefficients) != self.K:
                raise ValueError("ols_pc model needs K >= 1 matching its coefficients")
        if self.residual_variance < 0:
            raise ValueError("residual_variance must be >= 0")

    def dump(self) -> str:
        """Key-value text dump of the fitted model."""
        lines = [
            f"method = {self.method}",
            f"calibration = {self.calibration[0]}:{self.calibration[1]}",
            f"intercept = {fnum(self.intercept)}",
            f"residual_variance = {fnum(self.residual_variance)}",
        ]
        if self.K is not None:
            lines.append(f"K = {self.K}")
        if self.lam is not None:
            lines.append(f"lambda = {fnum(self.lam)}")
        if self.ridge is not None:
            lines.append(f"ridge = {fnum(self.ridge)}")
        lines.append("coefficients = " + ",".join(fnum(c) for c in self.coefficients))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Reconstruction:
    """Full-period output series of a fitted model."""

    series: TimeSeries
    model: ReconModel
    label: str = ""


def standardize_columns(values: np.ndarray, ids=(), ddof: int = 1) -> Standardization:
    """Column standardization; zero variance raises DegenerateColumn."""
    means = values.mean(axis=0)
    scales = values.std(axis=0, ddof=ddof)
    bad = np.flatnonzero(~(scales > 0))
    if bad.size:
        name = ids[bad[0]] if len(ids) > bad[0] else f"column {bad[0]}"
        raise DegenerateColumn(str(name))
    return Standardization(means, scales)


def fit_pca(matrix: ProxyMatrix, fit_start: int, fit_end: int) -> PCABasis:
    """PCA of the column-standardized matrix over the fit window.

    The window must be gap-free (infill upstream). Loading signs are
    fixed so each component's largest-magnitude loading is positive,
    which keeps outputs reproducible across linear-algebra backends.
    """
    rows = matrix.rows_for(fit_start, fit_end)
    fit = matrix.values[rows]
    if fit.shape[1] < 2:
        raise ValueError("PCA needs at least 2 records")
    if not np.isfinite(fit).all():
        raise ValueError("fit window contains missing entries; infill first")
    standardization = standardize_columns(fit, matrix.ids)
    z = standardization.apply(fit)
    _, svals, vt = np.linalg.svd(z, full_matrices=False)
    loadings = vt.T
    flip = np.sign(loadings[np.abs(loadings).argmax(axis=0), np.arange(loadings.shape[1])])
    flip[flip == 0] = 1.0
    loadings = loadings * flip
    var = svals**2
    explained = var / var.sum()
    scores = z @ loadings
    return PCABasis(
        loadings=loadings,
        scores=scores,
        explained_variance=explained,
        standardization=standardization,
        fit_years=matrix.years[rows],
        ids=matrix.ids,
    )


def _ols(design: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Least squares with an explicit singularity check."""
    n, p = design.shape
    gram = design.T @ design
    if p and (np.linalg.matrix_rank(gram) < p or np.linalg.cond(gram) > 1e12):
        raise SingularFit(f"design of shape {design.shape} is rank deficient")
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    sse = float(np.sum((y - design @ beta) ** 2))
    return beta, sse


def fit_ols_pc(
    basis: PCABasis,
    target: TimeSeries,
    K: int,
    calibration: tuple[int, int],
) -> ReconModel:
    """OLS of the target on the first K scores plus intercept."""
    if not 1 <= K <= basis.n_components:
        raise ValueError(f"K={K} outside 1..{basis.n_components}")
    scores, y = calibration_design(basis, target, calibration)
    n = y.size
    if n < K + 2:
        raise InsufficientCalibration(f"{n} calibration years for K={K} (need >= K + 2)")
    design = np.column_stack([np.ones(n), scores[:, :K]])
    beta, sse = _ols(design, y)
    dof = n - K - 1
    return ReconModel(
        method="ols_pc",
        calibration=calibration,
        coefficients=beta[1:],
        intercept=float(beta[0]),
        residual_variance=sse / dof,
        K=K,
    )


def calibration_design(basis: PCABasis, target: TimeSeries, calibration):
    """Score rows and target values usable for fitting over the window."""
    start, end = calibration
    t = target.crop(start, end)
    years = np.arange(start, end + 1)
    in_fit = np.isin(basis.fit_years, years)
    scores = basis.scores[in_fit]
    score_years = basis.fit_years[in_fit]
    ok = np.isfinite(scores).all(axis=1)
    tvals = np.full(score_years.size, np.nan)
    inside = (score_years >= t.start_year) & (score_years <= t.end_year)
    tvals[inside] = t.values[score_years[inside] - t.start_year]
    ok &= np.isfinite(tvals)
    if ok.sum() < 3:
        raise InsufficientCalibration(f"only {int(ok.sum())} usable calibration years")
    return scores[ok], tvals[ok]


def decadal_cv_blocks(n: int, block: int = 10, min_blocks: int = 3) -> list[np.ndarray]:
    """Contiguous block index sets for leave-block-out cross-validation."""
    if n // block < min_blocks:
        raise InsufficientCalibration(
            f"{n} calibration years give {n // block} blocks (need >= {min_blocks})"
        )
    edges = list(range(0, n, block))
    blocks = [np.arange(lo, min(lo + block, n)) for lo in edges]
    # Fold a short trailing remainder into the last full block.
    if len(blocks) > 1 and blocks[-1].size <= block // 2:
        blocks[-2] = np.concatenate([blocks[-2], blocks[-1]])
        blocks.pop()
    return blocks


def select_K(
    basis: PCABasis,
    target: TimeSeries,
    max_K: int,
    calibration: tuple[int, int],
) -> int:
    """Component count minimizing leave-decade-out CV RMSE.

    Ties resolve toward smaller K, where "tied" means within one
    standard error of the CV minimum: differences below the sampling
    noise of the CV estimate itself are not evidence for extra
    components.
    """
    if max_K > basis.n_components:
        raise ValueError(f"max_K={max_K} exceeds {basis.n_components} components")
    scores, y = calibration_design(basis, target, calibration)
    blocks = decadal_cv_blocks(y.size)
    mse = np.empty((max_K, len(blocks)))
    for K in range(1, max_K + 1):
        design = np.column_stack([np.ones(y.size), scores[:, :K]])
        for b, held in enumerate(blocks):
            keep = np.setdiff1d(np.arange(y.size), held)
            beta, _ = _ols(design[keep], y[keep])
            resid = y[held] - design[held] @ beta
            mse[K - 1, b] = float(resid @ resid) / held.size
    cv = mse.mean(axis=1)
    imin = int(np.argmin(cv))
    se = float(mse[imin].std(ddof=1) / np.sqrt(len(blocks)))
    return int(np.flatnonzero(cv <= cv[imin] + se + 1e-12)[0]) + 1


def soft_threshold(z: float, lam: float) -> float:
    return np.sign(z) * max(abs(z) - lam, 0.0)


def _coordinate_descent(
    x: np.ndarray, y: np.ndarray, lam: float, tol: float, max_iter: int
) -> np.ndarray:
    n, p = x.shape
    norms = (x * x).sum(axis=0)
    beta = np.zeros(p)
    resid = y.copy()
    for _ in range(max_iter):
        delta = 0.0
        for j in range(p):
            if norms[j] == 0.0:
                continue
            old = beta[j]
            rho = x[:, j] @ resid + norms[j] * old
            new = soft_threshold(rho, lam) / norms[j]
            if new != old:
                resid += x[:, j] * (old - new)
                beta[j] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            return beta
    raise ConvergenceError(
        f"lasso coordinate descent hit the {max_iter}-iteration cap", last_change=delta
    )


def fit_lasso(
    matrix: ProxyMatrix,
    target: TimeSeries,
    lam: float | None,
    calibration: tuple[int, int],
    tol: float = LASSO_TOL,
    max_iter: int = LASSO_MAX_ITER,
) -> ReconModel:
    """Lasso on the standardized full network.

    ``lam`` applies on the standardized predictor scale; ``None`` selects
    it by leave-decade-out CV on a geometric grid below ``lam_max``.
    Coefficients are returned mapped back to raw proxy units.
    """
    start, end = calibration
    rows = matrix.rows_for(start, end)
    x_raw = matrix.values[rows]
    years = matrix.years[rows]
    t = target.crop(start, end)
    y = np.full(years.size, np.nan)
    inside = (years >= t.start_year) & (years <= t.end_year)
    y[inside] = t.values[years[inside] - t.start_year]
    ok = np.isfinite(y) & np.isfinite(x_raw).all(axis=1)
    x_raw, y = x_raw[ok], y[ok]
    if y.size < 3:
        raise InsufficientCalibration(f"only {y.size} usable calibration years")
    standardization = standardize_columns(x_raw, matrix.ids)
    x = standardization.apply(x_raw)
    ybar = float(y.mean())
    yc = y - ybar

    if lam is None:
        lam = _cv_lambda(x, yc, tol, max_iter)
    if lam < 0:
        raise ValueError("lam must be >= 0")

    beta_std = _coordinate_descent(x, yc, lam, tol, max_iter)
    sse = float(np.sum((yc - x @ beta_std) ** 2))
    beta = beta_std / standardization.scales
    intercept = ybar - float(beta @ standardization.means)
    dof = max(y.size - 1 - int(np.count_nonzero(beta_std)), 1)
    return ReconModel(
        method="lasso",
        calibration=calibration,
        coefficients=beta,
        intercept=intercept,
        residual_variance=sse / dof,
        lam=float(lam),
    )


def lambda_max(x: np.ndarray, yc: np.ndarray) -> float:
    """Smallest penalty that zeroes every coefficient.

    Computed with the same per-column dot products the coordinate
    sweeps use, so the threshold is exact to the last bit.
    """
    return max(abs(float(x[:, j] @ yc)) for j in range(x.shape[1]))


def _cv_lambda(x: np.ndarray, yc: np.ndarray, tol: float, max_iter: int) -> float:
    """Leave-decade-out CV with the one-standard-error rule.

    The raw CV curve is flat and noisy near its minimum, so the argmin
    under-penalizes; picking the largest penalty within one standard
    error of the minimum (the usual lasso convention) keeps the model
    honestly sparse.
    """
    lmax = lambda_max(x, yc)
    if lmax == 0.0:
        return 0.0
    grid = lmax * np.geomspace(1.0, 1e-3, 25)
    blocks = decadal_cv_blocks(yc.size)
    mse = np.zeros((grid.size, len(blocks)))
    for b, held in enumerate(blocks):
        keep = np.setdiff1d(np.arange(yc.size), held)
        xk, yk = x[keep], yc[keep]
        offset = float(yk.mean())
        beta = np.zeros(x.shape[1])
        for i, lam in enumerate(grid):  # warm starts down the path
            beta = _cd_warm(xk, yk - offset, lam, beta, tol, max_iter)
            resid = yc[held] - offset - x[held] @ beta
            mse[i, b] = float(resid @ resid) / held.size
    cv = mse.mean(axis=1)
    se = mse.std(axis=1, ddof=1) / np.sqrt(len(blocks))
    imin = int(np.argmin(cv))
    # Grid descends from lam_max: the first index within one SE is the
    # largest acceptable penalty.
    pick = int(np.flatnonzero(cv <= cv[imin] + se[imin])[0])
    return float(grid[pick])


def _cd_warm(x, y, lam, beta0, tol, max_iter):
    n, p = x.shape
    norms = (x * x).sum(axis=0)
    beta = beta0.copy()
    resid = y - x @ beta
    for _ in range(max_iter):
        delta = 0.0
        for j in range(p):
            if norms[j] == 0.0:
                continue
            old = beta[j]
            rho = x[:, j] @ resid + norms[j] * old
            new = soft_threshold(rho, lam) / norms[j]
            if new != old:
                resid += x[:, j] * (old - new)
                beta[j] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            return beta
    raise ConvergenceError("lasso CV fold hit the iteration cap", last_change=delta)


def predict(
    model: ReconModel,
    predictors: np.ndarray,
    years: np.ndarray,
    label: str = "",
) -> Reconstruction:
    """Apply fitted coefficients over a year axis.

    ``predictors`` rows align with ``years`` (scores for ``ols_pc``, raw
    proxy values for ``lasso``). Rows with missing predictors yield
    masked output years.
    """
    predictors = np.asarray(predictors, dtype=float)
    if predictors.ndim == 1:
        predictors = predictors[:, None]
    k = model.coefficients.size
    cols = predictors[:, :k] if predictors.shape[1] >= k else None
    if cols is None:
        raise ValueError(
            f"model expects {k} predictors, matrix has {predictors.shape[1]} columns"
        )
    ok = np.isfinite(cols).all(axis=1)
    values = np.full(years.size, np.nan)
    values[ok] = cols[ok] @ model.coefficients + model.intercept
    years = np.asarray(years)
    if years.size > 1 and not (np.diff(years) == 1).all():
        raise ValueError("years must be a contiguous annual axis")
    series = TimeSeries(int(years[0]), values)
    return Reconstruction(series=series, model=model, label=label)
