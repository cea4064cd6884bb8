from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from hybridtsn.engine import NS_PER_MS, NS_PER_S, RandomStream
from hybridtsn.urllc import (AdmissionError, CellReceiver, DcchChannel, SlotGrid, Transmission,
                             period_in_slots, propagation_delay, reserve_uplink, slot_duration)

PMU_PERIOD = Fraction(NS_PER_S, 60)


@pytest.mark.parametrize("mu,ns", [(0, 1_000_000), (2, 250_000), (4, 62_500)])
def test_slot_duration(mu, ns):
    assert slot_duration(mu) == ns


def test_slot_duration_range():
    with pytest.raises(ValueError):
        slot_duration(5)


def test_propagation_delay():
    assert propagation_delay(0) == 0
    assert propagation_delay(300) == pytest.approx(1_000, abs=2)
    assert propagation_delay(150) == pytest.approx(500, abs=1)


def test_empty_grid_grants_preferred_offset():
    g = SlotGrid(4)
    assert g.reserve_uplink("a", PMU_PERIOD, 5).slot_offset == 5


def test_second_ue_shifted_to_next_free_slot():
    g = SlotGrid(4)
    g.reserve_uplink("a", PMU_PERIOD, 0)
    assert g.reserve_uplink("b", PMU_PERIOD, 0).slot_offset == 1


def test_sixty_hz_on_short_slots():
    res = SlotGrid(4).reserve_uplink("a", PMU_PERIOD)
    assert res.period_slots == 267
    assert res.period_slots * res.slot == 16_687_500
    assert period_in_slots(PMU_PERIOD, 62_500) == 267
    # 800 slots per 3 periods: grants never drift away from their boundary
    assert (res.hyperperiod_slots, res.grants_per_hyperperiod) == (800, 3)
    for k in range(1, 200):
        assert 0 <= res.grant_start(k) - res.boundary(k) < res.slot


def test_reservations_disjoint():
    g = SlotGrid(4)
    taken = set()
    for i in range(16):
        occ = g.reserve_uplink(f"u{i}", PMU_PERIOD).occupied()
        assert not occ & taken
        taken |= occ


def test_duplicate_reservation_rejected():
    g = SlotGrid(4)
    reserve_uplink(g, "a", PMU_PERIOD)
    with pytest.raises(AdmissionError):
        reserve_uplink(g, "a", PMU_PERIOD)


def test_saturated_grid_rejected():
    g = SlotGrid(0)  # 1 ms slots: 50 slots per 50 ms hyperperiod
    for i in range(16):
        g.reserve_uplink(f"u{i}", PMU_PERIOD)
    with pytest.raises(AdmissionError, match="saturated"):
        g.reserve_uplink("late", PMU_PERIOD)


def test_dcch_default_delivery(sim):
    chan = DcchChannel(sim, 62_500, 1_000)
    got = []

    class M:
        dst = "ue"

    assert chan.deliver("dl", M(), lambda m: got.append(sim.now)) == 63_500
    sim.run_until(NS_PER_MS)
    assert got == [63_500]


def test_dcch_fifo(sim):
    chan = DcchChannel(sim, 62_500, 1_000)
    got = []

    class M:
        dst = "ue"

        def __init__(self, n):
            self.n = n

    chan.deliver("dl", M(1), lambda m: got.append(m.n))
    chan.deliver("dl", M(2), lambda m: got.append(m.n))
    sim.run_until(NS_PER_MS)
    assert got == [1, 2]


def test_dcch_loss(sim):
    chan = DcchChannel(sim, 10, 0, loss=0.5, stream=RandomStream(1, "dcch"))

    class M:
        dst = "ue"

    for _ in range(200):
        chan.deliver("ul", M(), lambda m: None)
    assert 50 < chan.counters["lost"] < 150


def _cell(sim):
    ok, bad = [], []
    return CellReceiver(sim, 62_500, on_success=ok.append, on_collision=bad.append), ok, bad


def test_overlapping_transmissions_collide(sim):
    cell, ok, bad = _cell(sim)
    sim.schedule(0, cell.begin, Transmission("a", 0, 62_500, None))
    sim.schedule(10_000, cell.begin, Transmission("b", 10_000, 72_500, None))
    sim.run_until(NS_PER_MS)
    assert {t.ue_id for t in bad} == {"a", "b"} and ok == []


def test_sub_symbol_overlap_tolerated(sim):
    cell, ok, bad = _cell(sim)
    sim.schedule(0, cell.begin, Transmission("a", 0, 62_500, None))
    sim.schedule(60_000, cell.begin, Transmission("b", 60_000, 122_500, None))
    sim.run_until(NS_PER_MS)
    assert len(ok) == 2 and bad == []


@given(st.integers(0, 200_000), st.integers(0, 200_000))
def test_collision_iff_overlap_exceeds_symbol(a, b):
    from hybridtsn.engine import Simulator
    sim = Simulator()
    cell, ok, bad = _cell(sim)
    for name, s in sorted([("a", a), ("b", b)], key=lambda x: x[1]):
        sim.schedule(s, cell.begin, Transmission(name, s, s + 62_500, None))
    sim.run_until(NS_PER_MS)
    overlap = 62_500 - abs(a - b)
    assert (len(bad) == 2) == (overlap > 62_500 // 14)
