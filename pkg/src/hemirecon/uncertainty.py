"""Coefficient-uncertainty ensembles and the warmest-decade probability.

Coefficient draws come from the exact conjugate posterior of the OLS
regression under the Jeffreys prior p(beta, sigma^2) proportional to
1/sigma^2: the noise variance has a scaled inverse chi-square marginal
with n - K - 1 degrees of freedom, and beta given sigma^2 is Gaussian
around the least-squares estimate with covariance sigma^2 (X'X)^-1.
Exact sampling sidesteps MCMC chain-convergence questions while
targeting the same posterior.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_triangular

from .ioutil import fnum
from .errors import BlockMismatch, SingularFit
from .regression import ReconModel, Reconstruction
from .timeseries import DEFAULT_DECADE_ANCHOR, TimeSeries, block_start_for

NOISE_MODES = ("coefficients_only", "plus_residual_noise")

_EXACT_FIT_REL = 1e-20


class CoefficientDraws(NamedTuple):
    """Posterior draws: one row per draw."""

    coefficients: np.ndarray
    intercepts: np.ndarray
    sigma2: np.ndarray

    @property
    def n_draws(self) -> int:
        return self.intercepts.size


@dataclass(frozen=True)
class Ensemble:
    """Monte Carlo reconstructions: draws x years, no missing entries."""

    draws: np.ndarray
    start_year: int
    label: str = ""
    seed: int = 0

    def __post_init__(self):
        draws = np.asarray(self.draws, dtype=float)
        if draws.ndim != 2 or draws.shape[0] < 1:
            raise ValueError("draws must be a 2-d matrix with at least one row")
        if not np.isfinite(draws).all():
            raise ValueError("ensemble draws must have no missing entries")
        draws = draws.copy()
        draws.setflags(write=False)
        object.__setattr__(self, "draws", draws)
        object.__setattr__(self, "start_year", int(self.start_year))

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.start_year, self.start_year + self.draws.shape[1])

    @property
    def end_year(self) -> int:
        return self.start_year + self.draws.shape[1] - 1

    def mean_series(self) -> TimeSeries:
        return TimeSeries(self.start_year, self.draws.mean(axis=0))


def sample_coefficients(
    model: ReconModel,
    design: np.ndarray,
    target: np.ndarray,
    n_draws: int,
    seed: int,
) -> CoefficientDraws:
    """Exact conjugate-posterior draws for an ``ols_pc`` model.

    ``design`` holds the calibration-period scores (rows match
    ``target``); the intercept column is added internally. An exact fit
    collapses the posterior: every draw equals the OLS estimate.
    """
    if model.method != "ols_pc":
        raise ValueError("coefficient sampling applies to ols_pc models")
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    design = np.asarray(design, dtype=float)
    y = np.asarray(target, dtype=float)
    k = model.K
    x = np.column_stack([np.ones(y.size), design[:, :k]])
    n, p = x.shape
    if n <= p:
        raise SingularFit(f"{n} rows cannot identify {p} coefficients")
    gram = x.T @ x
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        raise SingularFit("X'X is singular") from None
    beta_hat = np.linalg.lstsq(x, y, rcond=None)[0]
    sse = float(np.sum((y - x @ beta_hat) ** 2))
    dof = n - p

    rng = np.random.default_rng(seed)
    if sse <= _EXACT_FIT_REL * max(float(y @ y), 1.0):
        betas = np.tile(beta_hat, (n_draws, 1))
        sigma2 = np.zeros(n_draws)
    else:
        sigma2 = sse / rng.chisquare(dof, n_draws)
        z = rng.standard_normal((p, n_draws))
        deviations = solve_triangular(chol, z, trans="T", lower=True)
        betas = beta_hat[None, :] + (deviations * np.sqrt(sigma2)[None, :]).T
    return CoefficientDraws(
        coefficients=betas[:, 1:], intercepts=betas[:, 0], sigma2=sigma2
    )


def build_ensemble(
    draws: CoefficientDraws,
    scores: np.ndarray,
    start_year: int,
    noise: str = "coefficients_only",
    seed: int = 0,
    label: str = "",
) -> Ensemble:
    """One reconstruction per coefficient draw over the score axis.

    ``plus_residual_noise`` adds independent Gaussian noise with each
    draw's own sigma^2, widening the envelope beyond coefficient
    uncertainty alone.
    """
    if noise not in NOISE_MODES:
        raise ValueError(f"noise must be one of {NOISE_MODES}")
    scores = np.asarray(scores, dtype=float)
    if scores.ndim == 1:
        scores = scores[:, None]
    if not np.isfinite(scores).all():
        raise ValueError("score matrix must span the period with no missing rows")
    k = draws.coefficients.shape[1]
    matrix = draws.coefficients @ scores[:, :k].T + draws.intercepts[:, None]
    if noise == "plus_residual_noise":
        rng = np.random.default_rng(seed)
        matrix = matrix + rng.standard_normal(matrix.shape) * np.sqrt(
            draws.sigma2
        )[:, None]
    return Ensemble(draws=matrix, start_year=start_year, label=label, seed=seed)


def splice_observed(ensemble: Ensemble, observed: TimeSeries) -> Ensemble:
    """Overwrite ensemble years with observed values where available.

    Extends the axis when the observed series runs past the ensemble;
    every year of the union axis must be covered by one of the two.
    """
    start = min(ensemble.start_year, observed.start_year)
    end = max(ensemble.end_year, observed.end_year)
    n_years = end - start + 1
    out = np.full((ensemble.n_draws, n_years), np.nan)
    lo = ensemble.start_year - start
    out[:, lo : lo + ensemble.draws.shape[1]] = ensemble.draws
    obs_idx = observed.years[observed.mask] - start
    out[:, obs_idx] = observed.values[observed.mask]
    if not np.isfinite(out).all():
        raise ValueError("splice leaves years covered by neither ensemble nor observations")
    return Ensemble(out, start, label=ensemble.label, seed=ensemble.seed)


def _complete_blocks(start_year: int, end_year: int, anchor: int) -> np.ndarray:
    first = block_start_for(start_year, anchor)
    if first < start_year:
        first += 10
    return np.arange(first, end_year - 8, 10)


def prob_warmest_decade(
    ensemble: Ensemble,
    decade: tuple[int, int],
    anchor: int = DEFAULT_DECADE_ANCHOR,
) -> float:
    """Fraction of draws whose stated decade beats every other decade.

    Draws are decadally averaged with the standard block anchoring; the
    stated decade must be one of the complete blocks. The comparison is
    strict, so the result is an exact count over draws.
    """
    starts = _complete_blocks(ensemble.start_year, ensemble.end_year, anchor)
    if starts.size < 2:
        raise BlockMismatch("ensemble span holds fewer than two complete decade blocks")
    d_start, d_end = decade
    if d_end != d_start + 9 or d_start not in starts:
        raise BlockMismatch(
            f"decade {d_start}-{d_end} is not a complete block "
            f"(anchoring puts block starts at years ending in {anchor % 10})"
        )
    means = np.stack(
        [
            ensemble.draws[:, b - ensemble.start_year : b - ensemble.start_year + 10].mean(axis=1)
            for b in starts
        ],
        axis=1,
    )
    target_col = int(np.flatnonzero(starts == d_start)[0])
    target = means[:, target_col]
    others = np.delete(means, target_col, axis=1)
    wins = int(np.sum(target > others.max(axis=1)))
    return wins / ensemble.n_draws


def ensemble_quantiles(ensemble: Ensemble, qs=(0.05, 0.5, 0.95)) -> np.ndarray:
    """Per-year quantiles, rows ordered as ``qs``."""
    return np.quantile(ensemble.draws, qs, axis=0)


def write_ensemble_csv(ensemble: Ensemble, fh) -> None:
    """Long-format dump: ``draw,year,value``."""
    fh.write("draw,year,value\n")
    years = ensemble.years
    for d in range(ensemble.n_draws):
        row = ensemble.draws[d]
        for year, value in zip(years, row):
            fh.write(f"{d},{year},{fnum(value)}\n")


def write_ensemble_summary_csv(ensemble: Ensemble, fh) -> None:
    """Summary dump: ``year,mean,q05,q50,q95``."""
    mean = ensemble.draws.mean(axis=0)
    q05, q50, q95 = ensemble_quantiles(ensemble)
    fh.write("year,mean,q05,q50,q95\n")
    for year, m, a, b, c in zip(ensemble.years, mean, q05, q50, q95):
        fh.write(f"{year},{fnum(m)},{fnum(a)},{fnum(b)},{fnum(c)}\n")
