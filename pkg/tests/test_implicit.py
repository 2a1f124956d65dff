from fractions import Fraction as Fr

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmsafe.core import InvalidInstance, SafeBox
from mmsafe.implicit import (
    BuildingSpec,
    ModeCursor,
    Setting,
    ZoneSpec,
    all_choices,
    choice_id,
    materialize_mode,
    modes_up_to,
    next_cheapest,
    parse_choice_id,
    sorted_enumeration,
)


def building(powers, cap=None):
    zones = tuple(ZoneSpec(1, 10, tuple(Setting(1, 20 + p, p) for p in ps)) for ps in powers)
    n = len(zones)
    return BuildingSpec(zones, SafeBox((18,) * n, (22,) * n), cap)


def test_prices_in_order():
    b = building([(1, 3), (2,)])
    prices = [m.price for m in ModeCursor(b)]
    assert prices == [0, 1, 2, 3, 3, 5]


def test_ties_broken_by_lex_rank():
    b = building([(1, 3), (2,)])
    ids = [m.id for m in ModeCursor(b)]
    # price 3: zone 1 on its cheapest with zone 2 on ("1-1") ranks before zone 1 on its second ("2-0")
    assert ids == ["0-0", "1-0", "0-1", "1-1", "2-0", "2-1"]


def test_choice_ids_round_trip():
    for c in [(None, 0, 2), (1,), (None, None)]:
        assert parse_choice_id(choice_id(c)) == c
    assert choice_id((None, 0, 2)) == "0-1-3"


def test_materialized_mode_coefficients():
    b = building([(1, 3), (2,)])
    m = materialize_mode(b, (1, None))
    assert m.a == (1, 1) and m.b == (23, 10) and m.price == 3
    with pytest.raises(InvalidInstance):
        materialize_mode(b, (1,))


def test_cap_limits_active_heaters():
    b = building([(1,), (1,), (1,)], cap=1)
    ids = [m.id for m in ModeCursor(b)]
    assert ids == ["0-0-0", "0-0-1", "0-1-0", "1-0-0"]
    assert b.space_size() == 4
    with pytest.raises(InvalidInstance):
        materialize_mode(b, (0, 0, None))


def test_modes_up_to_and_exhaustion():
    b = building([(1, 3), (2,)])
    assert [m.price for m in modes_up_to(b, 2)] == [0, 1, 2]
    assert len(modes_up_to(b, float("inf"))) == 6
    cur = ModeCursor(b)
    for _ in range(6):
        assert next_cheapest(cur) is not None
    assert next_cheapest(cur) is None


def test_equal_power_settings_keep_index_order():
    b = building([(2, 1, 2)])
    assert [m.id for m in ModeCursor(b)] == ["0", "2", "1", "3"]


power = st.sampled_from([Fr(1, 2), Fr(1), Fr(3, 2), Fr(2), Fr(3)])


@settings(max_examples=80, deadline=None)
@given(
    st.lists(st.lists(power, min_size=0, max_size=3), min_size=1, max_size=4),
    st.one_of(st.none(), st.integers(0, 4)),
)
def test_cursor_matches_sorted_enumeration(powers, cap):
    b = building(powers, cap)
    got = [m.id for m in ModeCursor(b)]
    want = [m.id for m in sorted_enumeration(b)]
    assert got == want
    assert len(set(got)) == len(got) == sum(1 for _ in all_choices(b))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(power, min_size=1, max_size=3), min_size=1, max_size=4), power)
def test_partial_enumeration_is_lazy(powers, p):
    b = building(powers)
    cur = ModeCursor(b)
    got = modes_up_to(b, p, cur)
    want = [m for m in sorted_enumeration(b) if m.price <= p]
    assert [m.id for m in got] == [m.id for m in want]
    assert cur.materialized <= len(want) + cur.frontier_size
