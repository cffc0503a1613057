"""Labeled particle-system state: construction, rates, events, cleanup."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coagsens import kernels
from coagsens.ensemble import CoupledState, Label, make_stream

ADD = kernels.build_majorant("additive", 1.0, 0.06)
ADD0 = kernels.build_majorant("additive", 1.0, 0.0)
SOOT = kernels.build_majorant("soot", 2.1, 0.03)


@pytest.fixture(scope="module", autouse=True)
def _warm(engine):
    return engine


def from_parts(parts, n_scale=None, majorant=ADD):
    if n_scale is None:
        n_scale = len(parts)
    return CoupledState.from_particles(majorant, n_scale, parts)


# ---------------------------------------------------------------------------
# construction


def test_monodisperse_two_common_particles():
    stt = CoupledState.monodisperse(2, ADD)
    assert stt.t == 0.0
    assert stt.class_counts().common == 2
    assert stt.class_counts().plus == 0
    assert stt.class_counts().minus == 0
    assert sorted(stt.masses(Label.COMMON).tolist()) == [1, 1]


def test_monodisperse_mass_bookkeeping():
    stt = CoupledState.monodisperse(5, ADD)
    assert stt.system_mass("+") == 5
    assert stt.system_mass("-") == 5
    stt.validate()


def test_monodisperse_rejects_tiny_n():
    with pytest.raises(ValueError):
        CoupledState.monodisperse(1, ADD)


def test_from_particles_roundtrip():
    stt = from_parts([(1, Label.PLUS), (2, Label.COMMON), (3, Label.MINUS)])
    assert stt.masses(Label.PLUS).tolist() == [1]
    assert stt.masses(Label.COMMON).tolist() == [2]
    assert stt.masses(Label.MINUS).tolist() == [3]
    assert stt.system_mass("+") == 3
    assert stt.system_mass("-") == 5
    with pytest.raises(ValueError):
        from_parts([])
    with pytest.raises(ValueError):
        from_parts([(0, Label.COMMON)])


# ---------------------------------------------------------------------------
# class rates


def test_class_rates_two_common_unit_masses():
    # diagonal-included pair rate: (1/2N) * sum over terms of S_f * S_g
    stt = CoupledState.monodisperse(2, ADD)
    rates = stt.class_rates()
    assert rates.common_pair == pytest.approx(2.06, rel=1e-12)
    assert rates.plus_common == 0.0
    assert rates.minus_common == 0.0
    assert rates.plus_pair == 0.0
    assert rates.minus_pair == 0.0
    assert rates.total == pytest.approx(2.06, rel=1e-12)


def test_class_rates_five_common_unit_masses():
    stt = CoupledState.monodisperse(5, ADD)
    assert stt.class_rates().common_pair == pytest.approx(5.15, rel=1e-12)


def test_class_rates_three_particles_eps_zero():
    stt = CoupledState.monodisperse(3, ADD0)
    assert stt.class_rates().common_pair == pytest.approx(3.0, rel=1e-12)


def test_class_rates_cross_class():
    stt = from_parts([(1, Label.COMMON), (1, Label.PLUS)], n_scale=2)
    rates = stt.class_rates()
    assert rates.plus_common == pytest.approx(2.06 / 2, rel=1e-12)
    assert rates.minus_common == 0.0
    assert rates.common_pair > 0.0      # diagonal surplus of the lone pair
    assert rates.minus_pair == 0.0


def test_class_rates_empty_classes_zero():
    stt = CoupledState.monodisperse(4, ADD)
    rates = stt.class_rates()
    assert rates.plus_common == rates.minus_common == 0.0
    assert rates.plus_pair == rates.minus_pair == 0.0


# ---------------------------------------------------------------------------
# pair sampling


def test_sample_pair_two_particle_distribution():
    # ordered proposals are drawn proportionally to the majorant value;
    # self-draws surface as None (the fictitious outcome)
    stt = from_parts([(1, Label.COMMON), (2, Label.COMMON)], n_scale=2)
    stream = make_stream(2024)
    n_draws = 100_000
    khat = {(a, b): ADD.value(a, b) for a in (1, 2) for b in (1, 2)}
    z = sum(khat.values())
    counts = {"12": 0, "21": 0, "fict": 0}
    for _ in range(n_draws):
        drawn = stt.sample_pair(Label.COMMON, Label.COMMON, stream)
        if drawn is None:
            counts["fict"] += 1
            continue
        i, j = drawn
        mi = int(stt.mass[int(Label.COMMON), i])
        mj = int(stt.mass[int(Label.COMMON), j])
        counts["12" if (mi, mj) == (1, 2) else "21"] += 1
    probs = {"12": khat[(1, 2)] / z, "21": khat[(2, 1)] / z,
             "fict": (khat[(1, 1)] + khat[(2, 2)]) / z}
    for key, p in probs.items():
        sigma = np.sqrt(p * (1 - p) * n_draws)
        assert abs(counts[key] - p * n_draws) <= 3 * sigma, (key, counts)


def test_sample_pair_single_particle_always_fictitious():
    stt = from_parts([(1, Label.COMMON), (5, Label.PLUS)], n_scale=2)
    stream = make_stream(7)
    for _ in range(50):
        assert stt.sample_pair(Label.COMMON, Label.COMMON, stream) is None


def test_sample_pair_rejects_empty_class():
    stt = CoupledState.monodisperse(3, ADD)
    with pytest.raises(ValueError):
        stt.sample_pair(Label.PLUS, Label.COMMON, make_stream(1))


# ---------------------------------------------------------------------------
# events


def test_event_1a_merges_common():
    stt = CoupledState.monodisperse(2, ADD)
    slots = stt.live_slots(Label.COMMON)
    stt.apply_event("1a", slots[:2])
    assert stt.masses(Label.COMMON).tolist() == [2]
    assert stt.snapshot("+").counts == {2: 1}
    assert stt.snapshot("-").counts == {2: 1}
    stt.validate()


def test_event_1b_demotes_pair_and_grows_plus():
    stt = from_parts([(1, Label.COMMON), (2, Label.COMMON)], n_scale=2)
    stt.apply_event("1b", stt.live_slots(Label.COMMON))
    assert stt.masses(Label.PLUS).tolist() == [3]
    assert sorted(stt.masses(Label.MINUS).tolist()) == [1, 2]
    assert stt.snapshot("+").counts == {3: 1}
    assert stt.snapshot("-").counts == {1: 1, 2: 1}
    assert stt.system_mass("+") == 3
    assert stt.system_mass("-") == 3
    stt.validate()


def test_event_1c_mirrors_1b():
    stt = from_parts([(1, Label.COMMON), (2, Label.COMMON)], n_scale=2)
    stt.apply_event("1c", stt.live_slots(Label.COMMON))
    assert stt.masses(Label.MINUS).tolist() == [3]
    assert sorted(stt.masses(Label.PLUS).tolist()) == [1, 2]
    stt.validate()


def test_event_2a_triple_update():
    stt = from_parts([(1, Label.PLUS), (2, Label.COMMON), (3, Label.MINUS)])
    stt.apply_event("2a", (0, 0, 0))
    assert stt.masses(Label.PLUS).tolist() == [3]
    assert stt.masses(Label.COMMON).tolist() == []
    assert stt.masses(Label.MINUS).tolist() == [5]
    assert stt.system_mass("+") == 3
    assert stt.system_mass("-") == 5


def test_event_2b_grows_plus_demotes_common():
    stt = from_parts([(1, Label.PLUS), (2, Label.COMMON)], n_scale=2)
    stt.apply_event("2b", (0, 0))
    assert stt.masses(Label.PLUS).tolist() == [3]
    assert stt.masses(Label.MINUS).tolist() == [2]
    assert stt.system_mass("+") == 3
    assert stt.system_mass("-") == 2


def test_event_2c_grows_minus_demotes_common():
    stt = from_parts([(3, Label.MINUS), (2, Label.COMMON)], n_scale=2)
    stt.apply_event("2c", (0, 0))
    assert stt.masses(Label.MINUS).tolist() == [5]
    assert stt.masses(Label.PLUS).tolist() == [2]


def test_events_3a_3b_same_class_merges():
    stt = from_parts([(1, Label.PLUS), (4, Label.PLUS)], n_scale=2)
    stt.apply_event("3a", (0, 1))
    assert stt.masses(Label.PLUS).tolist() == [5]
    stt = from_parts([(2, Label.MINUS), (2, Label.MINUS)], n_scale=2)
    stt.apply_event("3b", (0, 1))
    assert stt.masses(Label.MINUS).tolist() == [4]


def test_apply_event_auto_annihilates_new_overlap():
    # the merged particle born from 1b meets a waiting opposite-label
    # particle of the same mass and both collapse to a common one
    stt = from_parts([(1, Label.COMMON), (2, Label.COMMON),
                      (3, Label.MINUS)])
    stt.apply_event("1b", stt.live_slots(Label.COMMON))
    assert stt.masses(Label.COMMON).tolist() == [3]
    assert sorted(stt.masses(Label.MINUS).tolist()) == [1, 2]
    assert stt.masses(Label.PLUS).tolist() == []
    stt.validate()


def test_apply_event_rejects_bad_input():
    stt = CoupledState.monodisperse(3, ADD)
    slots = stt.live_slots(Label.COMMON)
    with pytest.raises(ValueError):
        stt.apply_event("fictitious", slots[:2])
    with pytest.raises(ValueError):
        stt.apply_event("1a", slots[:1])
    with pytest.raises(ValueError):
        stt.apply_event("1a", (slots[0], slots[0]))
    with pytest.raises(ValueError):
        stt.apply_event("2b", (0, slots[0]))   # plus class is empty
    with pytest.raises(ValueError):
        stt.apply_event("warp", slots[:2])


# ---------------------------------------------------------------------------
# cleanup


def test_cleanup_annihilates_equal_masses():
    stt = from_parts([(4, Label.PLUS), (4, Label.MINUS)], n_scale=2)
    merged = stt.cleanup([4])
    assert merged == 1
    assert stt.masses(Label.COMMON).tolist() == [4]
    assert stt.masses(Label.PLUS).tolist() == []
    assert stt.masses(Label.MINUS).tolist() == []


def test_cleanup_multiset_intersection():
    stt = from_parts([(4, Label.PLUS), (4, Label.PLUS), (4, Label.MINUS)],
                     n_scale=3)
    assert stt.cleanup([4]) == 1
    assert stt.masses(Label.COMMON).tolist() == [4]
    assert stt.masses(Label.PLUS).tolist() == [4]
    assert stt.masses(Label.MINUS).tolist() == []


def test_cleanup_no_partner_is_noop():
    stt = from_parts([(4, Label.PLUS)], n_scale=1)
    assert stt.cleanup([4]) == 0
    assert stt.masses(Label.PLUS).tolist() == [4]


def test_cleanup_preserves_system_measures():
    stt = from_parts([(2, Label.PLUS), (2, Label.MINUS), (7, Label.COMMON)],
                     n_scale=3)
    before = (stt.snapshot("+").counts, stt.snapshot("-").counts)
    stt.cleanup([2, 7])
    assert (stt.snapshot("+").counts, stt.snapshot("-").counts) == before
    stt.validate()


# ---------------------------------------------------------------------------
# snapshots and validation


def test_snapshot_scaling_and_overflow():
    stt = from_parts([(1, Label.COMMON), (1, Label.COMMON),
                      (50, Label.PLUS)], n_scale=4)
    snap = stt.snapshot("+", t=2.5)
    assert snap.t == 2.5
    assert snap.number(1) == 2
    assert snap.density(1) == pytest.approx(0.5)
    assert snap.total_number() == 3
    assert snap.total_mass() == 52
    dens = snap.density_array(8)
    assert dens[1] == pytest.approx(0.5)
    assert dens[0] == 0.0
    assert snap.overflow_number(8) == 1
    assert stt.snapshot("-").total_mass() == 2


def test_validate_flags_noncanonical_state():
    stt = from_parts([(4, Label.PLUS), (4, Label.MINUS)], n_scale=2)
    with pytest.raises(Exception):
        stt.validate()


def test_consistency_and_rebuild():
    stt = from_parts([(1, Label.COMMON), (2, Label.COMMON),
                      (5, Label.PLUS), (3, Label.MINUS)], majorant=SOOT)
    assert stt.consistency_error() <= 1e-9
    before = stt.class_rates()
    stt.rebuild()
    after = stt.class_rates()
    assert after.total == pytest.approx(before.total, rel=1e-12)


def test_make_stream_deterministic():
    a, b = make_stream(5), make_stream(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(make_stream(6), a)


# ---------------------------------------------------------------------------
# property checks


@settings(max_examples=60, deadline=None)
@given(st.lists(
    st.tuples(st.integers(min_value=1, max_value=30),
              st.sampled_from([Label.PLUS, Label.COMMON, Label.MINUS])),
    min_size=1, max_size=10))
def test_from_particles_accounting(parts):
    stt = from_parts(list(parts), majorant=SOOT)
    want_plus = sorted(m for m, lb in parts if lb != Label.MINUS)
    want_minus = sorted(m for m, lb in parts if lb != Label.PLUS)
    got_plus = sorted(stt.masses(Label.COMMON).tolist()
                      + stt.masses(Label.PLUS).tolist())
    got_minus = sorted(stt.masses(Label.COMMON).tolist()
                       + stt.masses(Label.MINUS).tolist())
    assert got_plus == want_plus
    assert got_minus == want_minus
    assert stt.system_mass("+") == sum(want_plus)
    assert stt.system_mass("-") == sum(want_minus)
    assert stt.consistency_error() <= 1e-9


@settings(max_examples=60, deadline=None)
@given(st.lists(
    st.tuples(st.integers(min_value=1, max_value=12),
              st.sampled_from([Label.PLUS, Label.COMMON, Label.MINUS])),
    min_size=1, max_size=12))
def test_cleanup_reaches_canonical_form(parts):
    stt = from_parts(list(parts))
    before = (stt.snapshot("+").counts, stt.snapshot("-").counts)
    stt.cleanup(range(1, 13))
    overlap = set(stt.masses(Label.PLUS).tolist()) & \
        set(stt.masses(Label.MINUS).tolist())
    assert overlap == set()
    assert (stt.snapshot("+").counts, stt.snapshot("-").counts) == before
    stt.validate()
