import math

import pytest
from hypothesis import given, settings, strategies as st

from trisieve import aasim as A
from trisieve.rng import stream


def test_rounds_needed_examples():
    for delta in (0.5, 1e-3, 2.0**-20):
        assert A.rounds_needed(1.0, delta, eta=1) == math.ceil(math.log2(1 / delta))
    assert A.rounds_needed(0.25, 2.0**-10, eta=1) == 20
    with pytest.raises(A.InfiniteRounds):
        A.rounds_needed(0.0, 1e-3)


def test_zero_mass_flags_zero_and_charges():
    ledger = A.QueryLedger()
    out = A.ideal_amplify(A.AmplifiableState(0.0, 2.0, 3.0), 100, 1e-3, ledger)
    assert out.flag == 0
    assert ledger.total_steps == 100 * 5


@settings(max_examples=50)
@given(r=st.integers(1, 10_000))
def test_zero_mass_never_flags(r):
    assert A.ideal_amplify(A.AmplifiableState(0.0), r, 1e-3, A.QueryLedger(), stream(1, "z")).flag == 0


def test_threshold_rounds_always_succeed():
    r = A.rounds_needed(0.3, 1e-3)
    assert A.ideal_amplify(A.AmplifiableState(0.3), r, 1e-3, A.QueryLedger()).flag == 1


def test_sub_threshold_is_marked_heuristic():
    out = A.ideal_amplify(A.AmplifiableState(0.01), 1, 1e-3, A.QueryLedger(), stream(1, "h"))
    assert out.heuristic


def test_nested_ledger_arithmetic():
    inner = A.QueryLedger()
    g = stream(1, "nest")
    A.ideal_amplify(A.AmplifiableState(0.5, 2, 3), 7, 1e-3, inner, g)
    inner.add_steps(11)
    outer = A.QueryLedger()
    A.ideal_amplify(A.AmplifiableState(0.5, inner.total_steps, 4), 5, 1e-3, outer, g)
    assert outer.total_steps == 5 * (7 * 5 + 11 + 4)
    assert A.nested_total(7, 2, 3, 11, 0, 0, 0, 5, 4) == outer.total_steps


def test_invalid_mass_rejected():
    with pytest.raises(ValueError):
        A.AmplifiableState(1.5)


def test_fidelity_one_for_full_mass():
    for r in range(1, 30):
        assert A.numeric_fixed_point_aa(1.0, r, 1e-3) == pytest.approx(1.0, abs=1e-12)


def test_quarter_mass_reaches_target():
    r = A.rounds_needed(2 / 8, 1e-3)
    assert A.numeric_fixed_point_aa(2 / 8, r, 1e-3) ** 2 >= 0.999


@settings(max_examples=40, deadline=None)
@given(mass=st.sampled_from([1.0, 0.5, 0.25, 1 / 64]), extra=st.integers(0, 64))
def test_fidelity_never_degrades_past_threshold(mass, extra):
    r = A.rounds_needed(mass, 1e-3)
    assert A.numeric_fixed_point_aa(mass, r + extra, 1e-3) >= 1 - 1e-3


@settings(max_examples=40, deadline=None)
@given(mass=st.floats(1e-3, 1.0), L=st.integers(0, 40).map(lambda k: 2 * k + 1), delta=st.sampled_from([0.1, 1e-3]))
def test_simulation_matches_chebyshev_form(mass, L, delta):
    amp = abs(A.simulate_schedule(mass, L, delta)) ** 2
    assert amp == pytest.approx(A.closed_form_success(mass, L, delta), abs=1e-9)


def test_ledger_to_dict_levels():
    ledger = A.QueryLedger()
    ledger.charge(3, 1, 2, "x")
    d = ledger.to_dict()
    assert d["total_steps"] == 9 and d["levels"][0]["r"] == 3
