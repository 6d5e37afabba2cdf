import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vedsa.core import (
    BinnedCascade,
    Cascade,
    Label,
    ViralityConfig,
    bin_cascade,
    censor,
    label_and_bin,
    label_cascade,
    viral_state_sequence,
)
from vedsa.errors import DomainError


def brute_bins(events, L, span):
    # oracle: walk the events one at a time
    k = int(np.ceil(span / L - 1e-12))
    out = [0] * k
    for t in events:
        if t < span:
            out[int(t // L)] += 1
    return out


cascades = st.lists(st.floats(0.0, 50.0, allow_nan=False), max_size=60).map(
    lambda xs: Cascade("h", np.sort(np.concatenate([[0.0], xs])))
)


def test_bin_examples():
    assert bin_cascade(Cascade("a", [0, 0.5, 1.2, 1.9, 3.4]), 1.0, 4.0).counts.tolist() == [2, 2, 0, 1]
    assert bin_cascade(Cascade("a", [0.0]), 1.0, 1.0).counts.tolist() == [1]
    assert bin_cascade(Cascade("a", [0, 0.5, 1.2]), 2.0, 2.0).counts.tolist() == [3]


def test_bin_boundary_is_half_open():
    assert bin_cascade(Cascade("a", [0, 1.0, 2.0]), 1.0, 2.0).counts.tolist() == [1, 1]


def test_label_examples():
    cfg = ViralityConfig(10, 100)
    assert label_cascade(Cascade("a", np.zeros(5)), cfg) is Label.NON_VIRAL
    assert label_cascade(Cascade("a", np.zeros(200)), cfg) is Label.VIRAL
    assert label_cascade(Cascade("a", np.zeros(50)), cfg) is Label.INTERMEDIATE


def test_viral_state_example():
    # per-bin counts 3, 4, 5, 6 with zeta2 = 10: cumulative 3, 7, 12, 18
    events = np.concatenate([np.full(3, 0.0), np.full(4, 1.5), np.full(5, 2.5), np.full(6, 3.5)])
    sigma, tv = viral_state_sequence(Cascade("a", events), ViralityConfig(5, 10), 1.0, 4)
    assert tv == 2
    assert sigma.tolist() == [0, 0, 1, 1]


def test_viral_state_non_viral_and_immediate():
    sigma, tv = viral_state_sequence(Cascade("a", [0, 0.5]), ViralityConfig(5, 10), 1.0, 3)
    assert tv is None and sigma.tolist() == [0, 0, 0]
    sigma, tv = viral_state_sequence(Cascade("a", [0, 0.5]), ViralityConfig(1, 1), 1.0, 3)
    assert tv == 0 and sigma.tolist() == [1, 1, 1]


def test_viral_state_rejects_intermediate():
    with pytest.raises(DomainError):
        viral_state_sequence(Cascade("a", np.zeros(7)), ViralityConfig(5, 10), 1.0, 3)


def test_censor_examples():
    c = Cascade("a", [0, 1, 2, 3])
    assert censor(c, 2.5).events.tolist() == [0, 1, 2]
    assert censor(c, 10.0) == c
    assert censor(Cascade("a", [0.0]), 0.5).events.tolist() == [0.0]
    with pytest.raises(DomainError):
        censor(c, 0.0)


def test_cascade_validation():
    with pytest.raises(DomainError):
        Cascade("a", [])
    with pytest.raises(DomainError):
        Cascade("a", [1.0, 2.0])
    with pytest.raises(DomainError):
        Cascade("a", [0.0, 2.0, 1.0])
    c = Cascade.from_times("x", [7200.0, 3600.0])
    assert c.events.tolist() == [0.0, 3600.0]
    with pytest.raises(ValueError):
        c.events[0] = 1.0


def test_viral_time_may_exceed_horizon():
    # crosses zeta2 only at hour 30, after the 24-bin window
    events = np.concatenate([[0.0], np.full(12, 30.0)])
    lc = label_and_bin(Cascade("a", events), ViralityConfig(5, 10, 24), 1.0)
    assert lc.label is Label.VIRAL
    assert lc.viral_time == 30
    assert lc.sigma.sum() == 0
    assert lc.binned.counts.size == 24


def test_label_and_bin_drops_intermediate():
    assert label_and_bin(Cascade("a", np.zeros(7)), ViralityConfig(5, 10), 1.0) is None


def test_prefix():
    b = BinnedCascade(np.array([1, 2, 3]), 1.0, 3)
    assert b.prefix(2).counts.tolist() == [1, 2]


@settings(max_examples=200, deadline=None)
@given(cascades, st.sampled_from([0.25, 0.5, 1.0, 2.0]), st.integers(1, 30))
def test_binning_matches_oracle(c, L, k):
    span = k * L
    counts = bin_cascade(c, L, span).counts
    assert counts.tolist() == brute_bins(c.events, L, span)
    assert counts.sum() == np.sum(c.events < span)


@settings(max_examples=200, deadline=None)
@given(cascades, st.floats(0.01, 60.0), st.floats(0.01, 60.0))
def test_censor_composes_to_min(c, t1, t2):
    assert censor(censor(c, t1), t2) == censor(c, min(t1, t2))


@settings(max_examples=200, deadline=None)
@given(cascades, st.integers(1, 40), st.integers(1, 60))
def test_sigma_monotone_and_consistent(c, num_bins, zeta2):
    cfg = ViralityConfig(max(zeta2 // 2, 1), zeta2)
    lab = label_cascade(c, cfg)
    if lab is Label.INTERMEDIATE:
        return
    sigma, tv = viral_state_sequence(c, cfg, 1.0, num_bins)
    assert np.all(np.diff(sigma) >= 0)
    if lab is Label.NON_VIRAL:
        assert tv is None and sigma.sum() == 0
    else:
        assert tv is not None
        assert sigma.tolist() == [int(j >= tv) for j in range(num_bins)]


@settings(max_examples=200, deadline=None)
@given(cascades, st.sampled_from([0.5, 1.0]), st.integers(1, 20), st.integers(20, 40))
def test_censored_binning_is_prefix(c, L, k, total):
    full = bin_cascade(c, L, total * L).counts
    assert bin_cascade(censor(c, k * L), L, k * L).counts.tolist() == full[:k].tolist()
