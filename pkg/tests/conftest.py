"""Shared fixtures: synthetic networks, targets and fields."""

from __future__ import annotations

import numpy as np
import pytest

from hemirecon import ProxyNetwork, ProxyRecord, TimeSeries, save_network
from hemirecon.timeseries import write_series_csv

SPAN = (1000, 2006)
CAL = (1856, 1980)


def make_signal(n_years: int, seed: int = 7, walk_std: float = 0.02) -> np.ndarray:
    """Red common signal with a late ramp, centered."""
    rng = np.random.default_rng(seed)
    walk = np.cumsum(rng.normal(0.0, walk_std, n_years))
    ramp = np.linspace(0.0, 1.0, 110)
    out = walk - walk.mean()
    out[-110:] += ramp
    return out - out.mean()


def synthetic_record(
    rec_id: str,
    signal: np.ndarray,
    rng: np.random.Generator,
    kind: str = "tree_ring",
    core_count: int | None = 12,
    flags=(),
    resolution: str = "annual",
    start: int = SPAN[0],
) -> ProxyRecord:
    gain = rng.uniform(0.5, 1.5)
    noise = rng.normal(0.0, 0.4, signal.size)
    values = gain * signal + noise
    if resolution == "decadal":
        keep = np.zeros(signal.size, dtype=bool)
        years = np.arange(start, start + signal.size)
        keep[(years - 2006) % 10 == 0] = True
        values = np.where(keep, values, np.nan)
    if kind != "tree_ring":
        core_count = None
    return ProxyRecord(
        id=rec_id,
        series=TimeSeries(start, values),
        kind=kind,
        core_count=core_count,
        flags=frozenset(flags),
        resolution=resolution,
    )


def build_screening_network(seed: int = 7) -> ProxyNetwork:
    """95 records: 36 under-replicated tree rings, 4 flagged, 55 clean.

    Mirrors the screening arithmetic 95 -> 59 -> 55.
    """
    n_years = SPAN[1] - SPAN[0] + 1
    signal = make_signal(n_years, seed=seed)
    rng = np.random.default_rng(seed + 1)
    records: list[ProxyRecord] = []
    for i in range(36):  # fail the 8-core bar; a few with unknown counts
        cores = None if i % 9 == 0 else int(rng.integers(1, 8))
        records.append(
            synthetic_record(f"tr_low_{i:02d}", signal, rng, core_count=cores)
        )
    for i in range(4):  # flagged lake sediments
        records.append(
            synthetic_record(
                f"lake_til_{i}", signal, rng, kind="lake_sediment", flags=("tiljander",)
            )
        )
    for i in range(30):  # well replicated tree rings
        records.append(
            synthetic_record(
                f"tr_ok_{i:02d}", signal, rng, core_count=int(rng.integers(8, 40))
            )
        )
    for i in range(19):  # other archives, annual
        kind = ("ice_core", "coral", "documentary", "other")[i % 4]
        records.append(synthetic_record(f"oth_{i:02d}", signal, rng, kind=kind))
    for i in range(6):  # decadal-resolution records
        records.append(
            synthetic_record(
                f"dec_{i}", signal, rng, kind="lake_sediment", resolution="decadal"
            )
        )
    assert len(records) == 95
    return ProxyNetwork(tuple(records), frozen_at=SPAN[0])


def make_target(seed: int = 7) -> TimeSeries:
    """Instrumental-style target over 1856-2006, matching the signal."""
    n_years = SPAN[1] - SPAN[0] + 1
    signal = make_signal(n_years, seed=seed)
    rng = np.random.default_rng(seed + 2)
    full = signal + rng.normal(0.0, 0.05, n_years)
    return TimeSeries(1856, full[1856 - SPAN[0] :])


@pytest.fixture(scope="session")
def screening_network() -> ProxyNetwork:
    return build_screening_network()


@pytest.fixture(scope="session")
def target_series() -> TimeSeries:
    return make_target()


@pytest.fixture()
def network_dir(tmp_path, screening_network):
    path = tmp_path / "network95"
    save_network(screening_network, path)
    return path


@pytest.fixture()
def target_csv(tmp_path, target_series):
    path = tmp_path / "target.csv"
    write_series_csv(target_series, path)
    return path
