import json
import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from envclass.features import (
    ALL72_NAMES, LAYOUTS, BandGroup, FeatureError, FeatureSetId, FeatureVector, Technology,
    apply_normalizer, classify_band, extract_all72, extract_features, extract_matrix, fit_normalizer,
    load_normalizer, normalize_matrix, project, projection_indices, read_matrix_csv, save_normalizer,
    summarize, write_matrix_csv,
)
from envclass.ingest import GpsFix, Label, LteObservation, NrObservation, RawRecord, SimOperator, WifiObservation

T0 = datetime(2024, 3, 1, tzinfo=timezone.utc)
IDX = {n: i for i, n in enumerate(ALL72_NAMES)}


def rec(i=0, **kw):
    fields = dict(timestamp=T0 + timedelta(seconds=5 * i), sim_operator=SimOperator.ATT)
    fields.update(kw)
    return RawRecord(**fields)


class TestBands:
    @pytest.mark.parametrize("mhz, tech, want", [
        (725, Technology.CELLULAR, BandGroup.CELL_LOW),
        (999.9, Technology.CELLULAR, BandGroup.CELL_LOW),
        (1000, Technology.CELLULAR, BandGroup.CELL_MID),
        (3700.02, Technology.CELLULAR, BandGroup.CELL_MID),
        (10000, Technology.CELLULAR, BandGroup.CELL_MID),
        (2437, Technology.WIFI, BandGroup.WIFI_24),
        (5180, Technology.WIFI, BandGroup.WIFI_5),
        (5875, Technology.WIFI, BandGroup.WIFI_5),
        (5925, Technology.WIFI, BandGroup.WIFI_6),
        (5955, Technology.WIFI, BandGroup.WIFI_6),
        (7125, Technology.WIFI, BandGroup.WIFI_6),
    ])
    def test_membership(self, mhz, tech, want):
        assert classify_band(mhz, tech) is want

    @pytest.mark.parametrize("mhz, tech", [
        (5900, Technology.WIFI), (7200, Technology.WIFI), (900, Technology.WIFI),
        (10001, Technology.CELLULAR), (0, Technology.CELLULAR),
    ])
    def test_gaps(self, mhz, tech):
        assert classify_band(mhz, tech) is None

    @given(st.floats(0, 12000, allow_nan=False))
    def test_at_most_one_group(self, f):
        wifi = classify_band(f, Technology.WIFI)
        cell = classify_band(f, Technology.CELLULAR)
        assert wifi in (None, BandGroup.WIFI_24, BandGroup.WIFI_5, BandGroup.WIFI_6)
        assert cell in (None, BandGroup.CELL_LOW, BandGroup.CELL_MID)


class TestSummarize:
    def test_three_values(self):
        s = summarize([-40, -50, -60])
        oracle = math.sqrt(((-40 + 50) ** 2 + (-50 + 50) ** 2 + (-60 + 50) ** 2) / 3)
        assert (s.min, s.max, s.avg) == (-60, -40, -50)
        assert s.std == pytest.approx(oracle, rel=1e-12)
        assert s.std == pytest.approx(8.1650, abs=5e-5)

    def test_singleton(self):
        s = summarize([-70])
        assert (s.min, s.max, s.avg, s.std, s.count) == (-70, -70, -70, 0, 1)

    def test_empty(self):
        s = summarize([], sentinel=-100.0)
        assert (s.min, s.max, s.avg, s.std, s.count) == (-100.0, -100.0, -100.0, 0.0, 0)

    @given(arrays(np.float64, st.integers(1, 30), elements=st.floats(-140, 0)))
    def test_order_properties(self, values):
        s = summarize(values)
        assert s.min <= s.avg + 1e-9 and s.avg <= s.max + 1e-9
        assert s.std >= 0
        assert s.std <= (s.max - s.min) / 2 + 1e-9


class TestExtraction:
    def test_two_5ghz_aps(self):
        v = extract_all72([rec(wifi=(WifiObservation("a", 5180, -40.0), WifiObservation("b", 5745, -60.0)))])
        assert [v[IDX[f"wifi5_rssi_{s}"]] for s in ("min", "max", "avg", "std")] == [-60, -40, -50, 10]
        assert v[IDX["wifi5_unique_bssid"]] == 2

    def test_missing_6ghz_uses_sentinel(self):
        v = extract_all72([rec(wifi=(WifiObservation("a", 5180, -40.0),))])
        assert [v[IDX[f"wifi6_rssi_{s}"]] for s in ("min", "max", "avg")] == [-100.0] * 3
        assert v[IDX["wifi6_rssi_std"]] == 0.0
        assert v[IDX["wifi6_unique_bssid"]] == 0

    def test_pooled_max_of_maxima(self):
        maxima = [-50, -48, -55, -60, -47, -52]
        records = [rec(i, wifi=(WifiObservation(f"a{i}", 5180, float(m)), WifiObservation(f"b{i}", 5180, m - 7.0)))
                   for i, m in enumerate(maxima)]
        assert extract_all72(records)[IDX["wifi5_rssi_max"]] == -47

    def test_cellular_in_khz(self):
        v = extract_all72([rec(lte=(LteObservation(5, 739000, -90.0, -9.0, rssi_dbm=-60.0),
                                    LteObservation(6, 2132500, -100.0, -11.0)),
                               nr=(NrObservation(9, 627000, -95.0, -10.0, 12.0),))])
        assert v[IDX["lte_low_rsrp_max"]] == -90 and v[IDX["lte_mid_rsrp_max"]] == -100
        assert v[IDX["lte_low_rssi_avg"]] == -60
        assert v[IDX["lte_mid_rssi_avg"]] == -120  # no RSSI reported in that band
        assert v[IDX["nr_low_sinr_min"]] == 12 and v[IDX["nr_mid_unique_pci"]] == 0
        assert v[IDX["nr_present"]] == 1
        assert v[IDX["sim_code"]] == 1

    def test_gps_missing_policy(self):
        v = extract_all72([rec(wifi=(WifiObservation("a", 2437, -50.0),))])
        assert (v[IDX["horizontal_accuracy"]], v[IDX["vertical_accuracy"]], v[IDX["altitude"]]) == (-1, -1, 0)
        g = extract_all72([rec(gps=GpsFix(0, 0, 200.0, 4.0, 9.0))])
        assert (g[IDX["horizontal_accuracy"]], g[IDX["vertical_accuracy"]]) == (4.0, 9.0)

    def test_duplicate_bssids_count_once_when_pooled(self):
        r = [rec(i, wifi=(WifiObservation("same", 5180, -50.0),)) for i in range(6)]
        single = extract_all72(r[:1])
        pooled = extract_all72(r)
        assert np.array_equal(single, pooled)

    def test_mixed_sim_rejected(self):
        with pytest.raises(FeatureError):
            extract_all72([rec(0), rec(1, sim_operator=SimOperator.VERIZON)])

    def test_empty_pool_rejected(self):
        with pytest.raises(FeatureError):
            extract_all72([])

    def test_extract_features_projects(self):
        r = rec(wifi=(WifiObservation("a", 5180, -40.0),), gps=GpsFix(0, 0, 1, 3.0, 7.0), label=Label.O)
        v = extract_features(r, FeatureSetId.BEST4)
        assert v.values.tolist() == [7.0, 3.0, 1.0, -40.0]
        assert v.label is Label.O
        assert not v.values.flags.writeable


class TestLayouts:
    def test_dimensions(self):
        assert [len(LAYOUTS[l]) for l in FeatureSetId] == [72, 67, 40, 4]
        assert len(set(ALL72_NAMES)) == 72

    def test_best4_names(self):
        assert LAYOUTS[FeatureSetId.BEST4] == (
            "vertical_accuracy", "horizontal_accuracy", "wifi5_unique_bssid", "wifi5_rssi_max")

    def test_drop_sets(self):
        assert not any(n.startswith("wifi6") for n in LAYOUTS[FeatureSetId.NO6GHZ67])
        assert not any(n.startswith(("wifi6", "nr_")) for n in LAYOUTS[FeatureSetId.NO6GHZ_NONR40])

    @given(arrays(np.float64, 72, elements=st.floats(-200, 200)))
    def test_projection_composes(self, x):
        v = FeatureVector(x, FeatureSetId.ALL72)
        assert np.array_equal(project(project(v, "no6ghz67"), "no6ghz-nonr40").values,
                              project(v, "no6ghz-nonr40").values)
        assert np.array_equal(project(project(v, "no6ghz67"), "best4").values, project(v, "best4").values)

    def test_projection_never_invents_features(self):
        with pytest.raises(FeatureError):
            projection_indices(FeatureSetId.NO6GHZ_NONR40, FeatureSetId.NO6GHZ67)

    def test_vector_validation(self):
        with pytest.raises(FeatureError):
            FeatureVector(np.zeros(5), FeatureSetId.BEST4)
        with pytest.raises(FeatureError):
            FeatureVector([0, 0, np.nan, 0], FeatureSetId.BEST4)


class TestNormalization:
    def _fit(self, cols):
        m = np.array(cols, dtype=float).T
        return fit_normalizer(m, FeatureSetId.BEST4), m

    def test_fit_and_degenerate(self):
        p, _ = self._fit([[2, 4, 6], [5, 5, 5], [0, 1, 2], [-140, -80, -20]])
        assert (p.mins[0], p.maxs[0]) == (2, 6)
        assert p.degenerate.tolist() == [False, True, False, False]

    def test_endpoints_midpoint_and_clamp(self):
        p, m = self._fit([[2, 4, 6], [5, 5, 5], [0, 1, 2], [-140, -80, -20]])
        out = normalize_matrix(m, p)
        assert out[:, 0].tolist() == [0, 0.5, 1]
        assert out[:, 3].tolist() == [0, 0.5, 1]
        assert out[:, 1].tolist() == [0, 0, 0]
        held_out = normalize_matrix(np.array([[0.0, 9.0, 7.0, -150.0]]), p)
        assert held_out.tolist() == [[0.0, 0.0, 1.0, 0.0]]

    @given(arrays(np.float64, (5, 4), elements=st.floats(-1e3, 1e3)),
           arrays(np.float64, (3, 4), elements=st.floats(-1e4, 1e4)))
    def test_range(self, train, test):
        p = fit_normalizer(train, FeatureSetId.BEST4)
        out = normalize_matrix(test, p)
        assert np.all((out >= 0) & (out <= 1))

    def test_layout_mismatch(self):
        p, _ = self._fit([[2, 4], [5, 5], [0, 1], [-1, 0]])
        with pytest.raises(FeatureError):
            apply_normalizer(FeatureVector(np.zeros(72), FeatureSetId.ALL72), p)

    def test_sidecar_round_trip(self, tmp_path):
        p, _ = self._fit([[2, 4.25], [5, 5], [0, 1], [-1, 0]])
        save_normalizer(p, tmp_path / "n.json")
        doc = json.loads((tmp_path / "n.json").read_text())
        assert doc["format"] == "envclass-normalizer" and doc["version"] == 1 and doc["layout"] == "best4"
        q = load_normalizer(tmp_path / "n.json")
        assert np.array_equal(q.mins, p.mins) and np.array_equal(q.maxs, p.maxs)

    def test_needs_two_rows(self):
        with pytest.raises(FeatureError):
            fit_normalizer(np.zeros((1, 4)), FeatureSetId.BEST4)


def test_matrix_csv_round_trip(tmp_path, small_sessions):
    m = extract_matrix(small_sessions, FeatureSetId.NO6GHZ67)
    write_matrix_csv(m, tmp_path / "m.csv")
    back = read_matrix_csv(tmp_path / "m.csv")
    assert back.layout_id is FeatureSetId.NO6GHZ67
    assert np.array_equal(back.values, m.values)
    assert back.labels == m.labels and back.session_ids == m.session_ids and back.record_index == m.record_index
