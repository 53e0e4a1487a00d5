import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lora_alloc.medium import Outcome, RadioMedium, SirMatrix, Transmission, default_thresholds, overlaps, resolve
from lora_alloc.phy import TransmissionParams

from oracles import pairwise_oracle

D, L = Outcome.DELIVERED, Outcome.LOST


def tx(ch, sf, rssi, start, end, ed=0):
    return Transmission(ed, TransmissionParams(ch, sf), start, end, rssi)


def test_overlaps_examples():
    assert overlaps(tx(0, 7, -100, 0, 1), tx(0, 7, -100, 0.5, 1.5))
    assert not overlaps(tx(0, 7, -100, 0, 1), tx(1, 7, -100, 0, 1))
    assert not overlaps(tx(0, 7, -100, 0, 1), tx(0, 7, -100, 1, 2))


def test_capture_co_sf():
    out = resolve([tx(0, 7, -90, 0, 1), tx(0, 7, -100, 0.2, 1.2)], SirMatrix())
    assert out == [D, L]


def test_equal_power_co_sf_both_lost():
    assert resolve([tx(0, 9, -100, 0, 1), tx(0, 9, -100, 0, 1)], SirMatrix()) == [L, L]


def test_different_channels_both_delivered():
    assert resolve([tx(0, 7, -100, 0, 1), tx(1, 7, -100, 0, 1)], SirMatrix()) == [D, D]


def test_inter_sf_partial_orthogonality():
    assert resolve([tx(0, 7, -100, 0, 1), tx(0, 9, -102, 0, 1)], SirMatrix()) == [D, D]
    # a 10 dB stronger other-SF packet breaks the -8 dB floor
    assert resolve([tx(0, 7, -110, 0, 1), tx(0, 9, -100, 0, 1)], SirMatrix()) == [L, D]


def test_lone_packet_delivered():
    assert resolve([tx(3, 12, -136, 5, 7)], SirMatrix()) == [D]


def test_pre_lost_stays_lost_but_interferes():
    weak = tx(0, 7, -100, 0, 1)
    strong = tx(0, 7, -99, 0, 1)
    strong.outcome = Outcome.LOST
    assert resolve([weak, strong], SirMatrix()) == [L, L]


def test_sir_matrix_validation():
    with pytest.raises(ValueError):
        SirMatrix(default_thresholds(co_sf_db=-10.0, inter_sf_db=-8.0))
    with pytest.raises(ValueError):
        SirMatrix([[0.0] * 5] * 5)
    m = SirMatrix()
    assert m.threshold(7, 7) == 6.0 and m.threshold(7, 12) == -8.0


def test_aggregate_mode_stricter_than_pairwise():
    # two interferers each 7 dB weaker pass pairwise but their sum is only ~4 dB weaker
    pkts = [tx(0, 7, -100, 0, 1), tx(0, 7, -107, 0, 1), tx(0, 7, -107, 0, 1)]
    assert resolve(pkts, SirMatrix())[0] is D
    assert resolve(pkts, SirMatrix(), aggregate=True)[0] is L


def test_jamming():
    m = RadioMedium(2)
    m.jam(1, 100.0)
    pkts = [tx(1, 7, -90, 99, 100), tx(1, 7, -90, 100, 101), tx(0, 7, -90, 100, 101)]
    assert m.resolve(pkts) == [D, L, D]
    with pytest.raises(ValueError):
        m.jam(2)
    m.clear_jamming()
    assert m.jammed_channels == {}


def test_jam_from_zero_denies_channel():
    m = RadioMedium(2)
    m.jam(1, 0.0)
    assert not m.decodes(-50.0, 7, 1, 0.0, [])
    assert m.decodes(-50.0, 7, 0, 0.0, [])


def test_transmission_needs_duration():
    with pytest.raises(ValueError):
        tx(0, 7, -90, 1.0, 1.0)


def random_instance(rng, n_max=10):
    n = rng.randint(1, n_max)
    out = []
    for i in range(n):
        start = rng.uniform(0, 5)
        out.append(tx(rng.randrange(3), rng.randint(7, 12), rng.uniform(-137, -80), start,
                      start + rng.uniform(0.05, 2.5), ed=i))
    return out


def test_collision_oracle_equivalence_1000():
    rng = random.Random(2024)
    thr = default_thresholds().tolist()
    for _ in range(1000):
        pkts = random_instance(rng)
        want = pairwise_oracle([(p.channel, p.sf, p.rssi_dbm, p.start_s, p.end_s) for p in pkts], thr)
        got = [o is D for o in resolve(pkts, SirMatrix())]
        assert got == want


packets = st.lists(
    st.tuples(st.integers(0, 2), st.integers(7, 12), st.floats(-137, -80), st.floats(0, 5), st.floats(0.05, 2.5)),
    min_size=1, max_size=10)


@given(packets, st.randoms(use_true_random=False))
def test_resolve_permutation_invariant(rows, rnd):
    pkts = [tx(c, s, r, a, a + d, ed=i) for i, (c, s, r, a, d) in enumerate(rows)]
    base = dict(zip((p.ed_id for p in pkts), resolve(pkts, SirMatrix())))
    shuffled = list(pkts)
    rnd.shuffle(shuffled)
    assert dict(zip((p.ed_id for p in shuffled), resolve(shuffled, SirMatrix()))) == base


@given(packets, st.tuples(st.integers(0, 2), st.integers(7, 12), st.floats(-137, -80), st.floats(0, 5),
                          st.floats(0.05, 2.5)))
def test_adding_interferer_never_helps(rows, extra):
    pkts = [tx(c, s, r, a, a + d, ed=i) for i, (c, s, r, a, d) in enumerate(rows)]
    before = resolve(pkts, SirMatrix())
    c, s, r, a, d = extra
    after = resolve(pkts + [tx(c, s, r, a, a + d, ed=99)], SirMatrix())[:-1]
    for b, f in zip(before, after):
        assert not (b is L and f is D)
