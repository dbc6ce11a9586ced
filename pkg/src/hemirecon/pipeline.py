"""Method dispatch shared by the CLI, the benchmark and hold-out validation.

``MethodConfig`` names one reconstruction method plus its knobs, with
``None`` meaning "choose automatically" (cross-validated K or lasso
penalty, GCV ridge). ``reconstruct_with`` turns a network + target into
a full-period reconstruction under one method.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .proxies import DEFAULT_CALIBRATION, ProxyMatrix, ProxyNetwork, network_matrix
from .regem import fit_regem, reconstruct_hybrid
from .regression import (
    PCABasis,
    Reconstruction,
    fit_lasso,
    fit_ols_pc,
    fit_pca,
    predict,
    select_K,
)
from .timeseries import TimeSeries, interpolate_linear

DEFAULT_MAX_K = 10


@dataclass(frozen=True)
class MethodConfig:
    """One reconstruction method and its (possibly automatic) parameters."""

    method: str
    K: int | None = None
    max_K: int = DEFAULT_MAX_K
    lam: float | None = None
    ridge: float | None = None
    split_period: float = 20.0

    def __post_init__(self):
        if self.method not in ("ols_pc", "lasso", "regem", "regem_hybrid"):
            raise ValueError(f"unknown method {self.method!r}")

    def label(self) -> str:
        if self.method == "ols_pc":
            return f"ols_pc(K={self.K if self.K is not None else 'auto'})"
        if self.method == "lasso":
            return f"lasso(lam={self.lam if self.lam is not None else 'auto'})"
        ridge = "gcv" if self.ridge is None else self.ridge
        if self.method == "regem_hybrid":
            return f"regem_hybrid(ridge={ridge},split={self.split_period:g})"
        return f"regem(ridge={ridge})"


def infilled_matrix(matrix: ProxyMatrix) -> ProxyMatrix:
    """Interpolate interior gaps per record; span edges stay missing."""
    filled = np.empty_like(matrix.values)
    for j in range(matrix.values.shape[1]):
        col = TimeSeries(matrix.start_year, matrix.values[:, j])
        filled[:, j] = interpolate_linear(col).values if col.mask.any() else np.nan
    return ProxyMatrix(matrix.years, filled, matrix.ids)


def complete_over(matrix: ProxyMatrix, start: int, end: int) -> ProxyMatrix:
    """Drop columns that are not gap-free over [start, end]."""
    rows = matrix.rows_for(start, end)
    keep = np.isfinite(matrix.values[rows]).all(axis=0)
    if not keep.any():
        raise ValueError(f"no record is complete over [{start}, {end}]")
    ids = tuple(np.asarray(matrix.ids)[keep])
    return ProxyMatrix(matrix.years, matrix.values[:, keep], ids)


def pca_basis_for(
    net: ProxyNetwork,
    calibration: tuple[int, int] = DEFAULT_CALIBRATION,
    end_year: int | None = None,
) -> tuple[PCABasis, ProxyMatrix]:
    """Infilled network matrix and its calibration-window PCA."""
    last = max(r.series.end_year for r in net.records)
    end = min(end_year, last) if end_year is not None else last
    matrix = infilled_matrix(network_matrix(net, net.frozen_at, end))
    matrix = complete_over(matrix, *calibration)
    return fit_pca(matrix, *calibration), matrix


def reconstruct_with(
    config: MethodConfig,
    net: ProxyNetwork,
    target: TimeSeries,
    calibration: tuple[int, int] = DEFAULT_CALIBRATION,
    end_year: int | None = None,
) -> Reconstruction:
    """Fit one method over the calibration window, predict the full span."""
    if config.method == "regem_hybrid":
        return reconstruct_hybrid(
            net,
            target,
            split_period=config.split_period,
            ridge=config.ridge,
            calibration=calibration,
            end_year=end_year,
            label=config.label(),
        )
    if config.method == "regem":
        last = max(r.series.end_year for r in net.records)
        end = min(end_year, last) if end_year is not None else last
        matrix = network_matrix(net, net.frozen_at, end)
        return fit_regem(
            matrix, target, config.ridge, calibration, label=config.label()
        )

    basis, matrix = pca_basis_for(net, calibration, end_year)
    if config.method == "ols_pc":
        K = config.K
        if K is None:
            K = select_K(basis, target, min(config.max_K, basis.n_components), calibration)
        model = fit_ols_pc(basis, target, K, calibration)
        scores = basis.scores_for(matrix.values)
        return predict(model, scores, matrix.years, label=f"ols_pc(K={K})")
    if config.method == "lasso":
        model = fit_lasso(matrix, target, config.lam, calibration)
        return predict(
            model, matrix.values, matrix.years, label=f"lasso(lam={model.lam:.6g})"
        )
    raise AssertionError(config.method)
