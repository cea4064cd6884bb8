import pytest

from hybridtsn.clock import DriftingClock
from hybridtsn.metrics import (OFFSET_COLUMNS, jitter, offset_series, read_csv, reliability,
                               write_csv)


def test_periodic_series_has_zero_jitter():
    assert jitter([5 + 1000 * k for k in range(10)], 1000) == 0


def test_peak_to_peak():
    assert jitter([0, 1000 + 1000, 2000 - 1000], 1000) == 2000


def test_gaps_use_sequence_numbers():
    assert jitter([0, 3000, 4000], 1000, seqs=[0, 3, 4]) == 0


def test_single_sample_undefined():
    assert jitter([7], 1000) is None


def test_reliability_definition():
    assert reliability([1] * 9999 + [20], 10_000, 10) == pytest.approx(0.9999)


def test_reliability_all_dropped():
    assert reliability([], 50, 10) == 0


def test_reliability_rejects_bad_deadline():
    with pytest.raises(ValueError):
        reliability([1], 1, 0)


def test_self_reference_is_zero():
    clocks = {"a": DriftingClock(30e-6)}
    assert all(s.offset_ns == 0 for s in offset_series(clocks, "a", ["a"], range(0, 10**7, 10**6)))


def test_unsynchronized_offset_grows_linearly():
    clocks = {"gnb": DriftingClock(-10e-6), "ue": DriftingClock(30e-6)}
    samples = offset_series(clocks, "gnb", ["ue"], [k * 10**6 for k in range(1, 11)])
    for k, s in enumerate(samples, start=1):
        assert abs(s.offset_ns - 40 * k) <= 1


def test_csv_roundtrip(tmp_path):
    p = tmp_path / "o.csv"
    write_csv(p, "offsets", OFFSET_COLUMNS,
              [{"run_id": "r", "t_ns": 1, "node_id": "a", "reference_id": "b", "offset_ns": -3}])
    assert p.read_text().startswith("# schema: offsets v1\n")
    assert read_csv(p) == [{"run_id": "r", "t_ns": "1", "node_id": "a", "reference_id": "b",
                            "offset_ns": "-3"}]
