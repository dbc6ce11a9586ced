import numpy as np
import pytest

from hemirecon import (
    DuplicateId,
    FormatError,
    ProxyNetwork,
    ProxyRecord,
    TimeSeries,
    exclude_flagged,
    load_network,
    network_matrix,
    save_network,
    screen_replication,
)
from conftest import SPAN


def record(rec_id, start=1000, n=1010, kind="other", **kw):
    return ProxyRecord(rec_id, TimeSeries(start, np.ones(n)), kind, **kw)


class TestProxyRecord:
    def test_core_count_only_for_tree_rings(self):
        with pytest.raises(ValueError):
            record("a", kind="ice_core", core_count=5)
        record("a", kind="tree_ring", core_count=5)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            record("a", kind="satellite")

    def test_decadal_mask_rule(self):
        values = np.full(40, np.nan)
        values[6] = 1.0  # 2006-style block end for anchor
        values[16] = 2.0
        ProxyRecord("d", TimeSeries(2000, values), "lake_sediment", resolution="decadal")
        bad = np.full(40, np.nan)
        bad[5] = 1.0
        bad[6] = 2.0  # 2005 and 2006 sit in the same 1997-2006 block
        with pytest.raises(ValueError):
            ProxyRecord("d", TimeSeries(2000, bad), "lake_sediment", resolution="decadal")


class TestNetwork:
    def test_duplicate_ids_rejected(self):
        with pytest.raises(DuplicateId):
            ProxyNetwork((record("a"), record("a")), frozen_at=1000)

    def test_record_must_cover_frozen_at(self):
        with pytest.raises(ValueError):
            ProxyNetwork((record("late", start=1200),), frozen_at=1000)

    def test_fixture_counts(self, screening_network):
        assert len(screening_network) == 95


class TestScreening:
    def test_paper_counts_95_59_55(self, screening_network):
        replicated = screen_replication(screening_network, 8)
        assert len(replicated) == 59
        cleaned = exclude_flagged(replicated, "tiljander")
        assert len(cleaned) == 55

    def test_min_cores_one_is_identity(self, screening_network):
        assert screen_replication(screening_network, 1).ids == screening_network.ids

    def test_monotone_in_min_cores(self, screening_network):
        at8 = set(screen_replication(screening_network, 8).ids)
        at10 = set(screen_replication(screening_network, 10).ids)
        assert at10 <= at8

    def test_never_adds_records(self, screening_network):
        for k in (1, 5, 8, 20):
            assert len(screen_replication(screening_network, k)) <= len(screening_network)
        assert len(exclude_flagged(screening_network, "tiljander")) <= len(screening_network)

    def test_order_preserved(self, screening_network):
        kept = screen_replication(screening_network, 8).ids
        original = [i for i in screening_network.ids if i in set(kept)]
        assert list(kept) == original

    def test_screens_commute(self, screening_network):
        a = exclude_flagged(screen_replication(screening_network, 8), "tiljander")
        b = screen_replication(exclude_flagged(screening_network, "tiljander"), 8)
        assert a.ids == b.ids

    def test_exclude_idempotent(self, screening_network):
        once = exclude_flagged(screening_network, "tiljander")
        twice = exclude_flagged(once, "tiljander")
        assert once.ids == twice.ids

    def test_exclude_absent_flag_is_identity(self, screening_network):
        assert exclude_flagged(screening_network, "nosuch").ids == screening_network.ids

    def test_unknown_core_count_fails_strict_bar(self):
        net = ProxyNetwork(
            (record("u", kind="tree_ring", core_count=None),), frozen_at=1000
        )
        assert len(screen_replication(net, 8)) == 0
        assert len(screen_replication(net, 1)) == 1


class TestNetworkMatrix:
    def test_dimensions(self, screening_network):
        m = network_matrix(screening_network, 1000, 2006)
        assert m.values.shape == (1007, 95)
        assert m.years[0] == 1000 and m.years[-1] == 2006

    def test_single_record_column(self):
        rng = np.random.default_rng(3)
        vals = rng.standard_normal(50)
        net = ProxyNetwork(
            (ProxyRecord("x", TimeSeries(1000, vals), "other"),), frozen_at=1000
        )
        m = network_matrix(net, 1000, 1049)
        np.testing.assert_array_equal(m.values[:, 0], vals)

    def test_columns_match_records(self, screening_network):
        m = network_matrix(screening_network, 1100, 1400)
        for j, rec in enumerate(screening_network.records):
            s = rec.series.crop(1100, 1400)
            np.testing.assert_array_equal(
                np.isfinite(m.values[:, j]), s.mask
            )
            np.testing.assert_array_equal(m.values[s.mask, j], s.values[s.mask])

    def test_decadal_column_sparsity(self, screening_network):
        m = network_matrix(screening_network, 1000, 2006)
        j = screening_network.ids.index("dec_0")
        col = m.values[:, j]
        assert np.isfinite(col).sum() <= np.ceil(1007 / 10)

    def test_outside_span_missing(self):
        net = ProxyNetwork((record("a", n=500),), frozen_at=1000)
        m = network_matrix(net, 1000, 2006)
        assert np.isfinite(m.values[:500, 0]).all()
        assert not np.isfinite(m.values[500:, 0]).any()


class TestNetworkIO:
    def test_roundtrip(self, tmp_path, screening_network):
        save_network(screening_network, tmp_path / "net")
        back, rejections = load_network(tmp_path / "net", 1000)
        assert rejections == []
        assert back.ids == screening_network.ids
        for a, b in zip(back.records, screening_network.records):
            assert a.kind == b.kind
            assert a.core_count == b.core_count
            assert a.flags == b.flags
            assert a.resolution == b.resolution
            np.testing.assert_allclose(
                a.series.values[a.series.mask], b.series.values[b.series.mask]
            )

    def test_rejects_short_records(self, tmp_path):
        net = ProxyNetwork(
            (record("good", n=900), record("late", start=1200, n=700)), frozen_at=1200
        )
        save_network(net, tmp_path / "net")
        loaded, rejections = load_network(tmp_path / "net", 1000)
        assert loaded.ids == ("good",)
        assert rejections[0].id == "late"

    def test_requires_coverage_through_calibration(self, tmp_path):
        net = ProxyNetwork(
            (record("short", n=500), record("full", n=1007)), frozen_at=1000
        )
        save_network(net, tmp_path / "net")
        loaded, rejections = load_network(tmp_path / "net", 1000, require_through=1856)
        assert loaded.ids == ("full",)
        assert rejections[0].id == "short"

    def test_missing_files(self, tmp_path):
        with pytest.raises(FormatError):
            load_network(tmp_path / "absent", 1000)

    def test_empty_metadata(self, tmp_path):
        d = tmp_path / "net"
        d.mkdir()
        (d / "metadata.csv").write_text("")
        (d / "values.csv").write_text("year,a\n1000,1.0\n")
        with pytest.raises(FormatError):
            load_network(d, 1000)

    def test_malformed_metadata_line_number(self, tmp_path):
        d = tmp_path / "net"
        d.mkdir()
        (d / "metadata.csv").write_text(
            "id,kind,core_count,flags,resolution\na,tree_ring,not_a_number,,annual\n"
        )
        (d / "values.csv").write_text("year,a\n1000,1.0\n")
        with pytest.raises(FormatError) as err:
            load_network(d, 1000)
        assert err.value.line == 2

    def test_duplicate_metadata_id(self, tmp_path):
        d = tmp_path / "net"
        d.mkdir()
        (d / "metadata.csv").write_text(
            "id,kind,core_count,flags,resolution\na,other,,,annual\na,other,,,annual\n"
        )
        (d / "values.csv").write_text("year,a\n1000,1.0\n")
        with pytest.raises(DuplicateId):
            load_network(d, 1000)

    def test_values_columns_must_match(self, tmp_path):
        d = tmp_path / "net"
        d.mkdir()
        (d / "metadata.csv").write_text("id,kind,core_count,flags,resolution\na,other,,,annual\n")
        (d / "values.csv").write_text("year,b\n1000,1.0\n")
        with pytest.raises(FormatError):
            load_network(d, 1000)
