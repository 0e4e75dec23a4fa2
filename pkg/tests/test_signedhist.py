import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from signedchord.signedhist import (EdgeMismatch, MomentAccumulator, SignedHistogram, Tally,
                                    ZeroCharge, binwise_z, merge, moment, normalize, read_csv,
                                    two_sample_test)

EDGES = np.linspace(0.0, 4.0, 9)


def test_accumulate_examples():
    h = SignedHistogram([0.0, 1.0])
    h.accumulate(0.5, +1)
    assert h.charge_per_bin[0] == 1
    h.accumulate(0.5, -1)
    assert h.charge_per_bin[0] == 0 and h.n_plus == h.n_minus == 1
    h.accumulate(3.0, +1)
    assert h.overflow_charge == 1


def test_edges_validation():
    with pytest.raises(ValueError):
        SignedHistogram([0.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        SignedHistogram([0.0, 1.0, 3.0])
    with pytest.raises(ValueError):
        SignedHistogram(EDGES).fill([-1.0])


def test_normalize_examples():
    h = SignedHistogram([0.0, 1.0]).fill([0.5])
    assert h.normalize().density[0] == 1.0
    h = SignedHistogram([0.0, 1.0]).fill([0.2, 0.4, 0.6, 0.8], [1, 1, 1, -1])
    t = h.normalize(2.0)
    assert t.density[0] == 1.0
    with pytest.raises(ZeroCharge):
        SignedHistogram([0.0, 1.0]).fill([0.5, 0.5], [1, -1]).normalize()
    with pytest.raises(ZeroCharge):
        h.normalize(0.0)


samples = st.lists(st.tuples(st.floats(0, 6, allow_nan=False), st.sampled_from([1, -1])),
                   max_size=40)


def _hist(s):
    h = SignedHistogram(EDGES)
    if s:
        h.fill([x for x, _ in s], [q for _, q in s])
    return h


def _state(h):
    return (h._charge.tolist(), h._sq.tolist(), h._cross.tolist(), h._plus.tolist(),
            h._minus.tolist(), h.total_sq, h.n_events)


@given(samples, samples, samples)
def test_merge_associative_commutative_and_replay(a, b, c):
    ha, hb, hc = _hist(a), _hist(b), _hist(c)
    assert _state(merge(ha, hb)) == _state(merge(hb, ha))
    assert _state(merge(merge(ha, hb), hc)) == _state(merge(ha, merge(hb, hc)))
    assert _state(merge(ha, SignedHistogram(EDGES))) == _state(ha)
    # replay oracle: one sample per event, all in one histogram
    assert _state(merge(merge(ha, hb), hc)) == _state(_hist(a + b + c))


@given(samples)
def test_counts_and_charge_conservation(s):
    h = _hist(s)
    assert h.n_plus - h.n_minus == h.total_charge
    if h.total_charge != 0:
        t = normalize(h)
        assert abs(t.density.sum() * t.width + t.overflow_fraction - 1) < 1e-12


def test_merge_edge_mismatch():
    with pytest.raises(EdgeMismatch):
        SignedHistogram(EDGES).merge(SignedHistogram(np.linspace(0, 4, 5)))


def test_csv_roundtrip():
    h = SignedHistogram(EDGES).fill([0.1, 0.7, 2.5, 9.0], [1, 1, -1, 1])
    t = h.normalize()
    text = t.to_csv({"seed": 7})
    assert text.splitlines()[0] == "bin_lo,bin_hi,density,stderr,charge,n_plus,n_minus"
    assert "# seed=7" in text and "# total_charge=2" in text and "# n_events=4" in text
    back, meta = read_csv(text)
    assert np.allclose(back.density, t.density) and meta["seed"] == "7"


def test_moment_examples():
    acc = MomentAccumulator().fill([1.0, 2.0, 3.0], [1, 1, -1])
    assert moment(acc, 0) == (1.0, pytest.approx(acc.moment(0)[1]))
    assert acc.moment(1)[0] == 0.0  # (1 + 2 - 3) / 1
    assert acc.moment(2, normalizer=2.0)[0] == (1 + 4 - 9) / 2
    with pytest.raises(ValueError):
        acc.moment(5)
    with pytest.raises(ZeroCharge):
        MomentAccumulator().fill([1.0, 2.0], [1, -1]).moment(1)


def test_moment_zero_is_one_for_unit_charge_events():
    # each event (ray) carries charges summing to +1
    lengths = [0.3, 0.5, 0.9, 0.4]
    acc = MomentAccumulator().fill(lengths, [1, -1, 1, 1], events=[0, 0, 0, 1])
    assert acc.moment(0) == (1.0, 0.0)


def test_moment_merge_exact():
    a = MomentAccumulator().fill([0.1, 0.2])
    b = MomentAccumulator().fill([0.3])
    c = MomentAccumulator().fill([0.1, 0.2, 0.3], events=[0, 1, 2])
    m = a.merge(b)
    assert m.s == c.s and m.ss == c.ss and m.n_events == 3


def test_clustered_stderr_matches_replication_spread():
    # the stderr of a ratio of clustered signed sums should match its spread over replicas
    rng = np.random.default_rng(11)
    values, errors = [], []
    for _ in range(200):
        n = 400
        k = rng.integers(1, 4, n)
        ev = np.repeat(np.arange(n), 2 * k - 1)
        lengths = rng.random(ev.size)
        first = np.repeat(np.cumsum(2 * k - 1) - (2 * k - 1), 2 * k - 1)
        charges = np.where((np.arange(ev.size) - first) % 2 == 0, 1.0, -1.0)
        v, e = MomentAccumulator().fill(lengths, charges, ev).moment(1)
        values.append(v)
        errors.append(e)
    ratio = np.std(values, ddof=1) / np.mean(errors)
    assert 0.8 < ratio < 1.2


def test_tally_ratio_and_mean():
    t = Tally().fill([1.0, 2.0, 3.0])
    assert t.mean() == (2.0, pytest.approx(math.sqrt(1.0 / 3.0)))
    r = Tally().fill([2.0, 4.0], [1.0, 1.0]).merge(Tally().fill([6.0], [1.0]))
    assert r.ratio()[0] == 4.0
    with pytest.raises(ZeroCharge):
        Tally().ratio()


def test_two_sample_and_binwise():
    rng = np.random.default_rng(3)
    a = SignedHistogram(EDGES).fill(rng.uniform(0, 4, 20000))
    b = SignedHistogram(EDGES).fill(rng.uniform(0, 4, 20000))
    c = SignedHistogram(EDGES).fill(rng.triangular(0, 4, 4, 20000))
    assert two_sample_test(a, b)[2] > 1e-3
    assert two_sample_test(a, c)[2] < 1e-6
    z = binwise_z(a.normalize(), b.normalize())
    assert np.all(np.abs(z) < 5)
