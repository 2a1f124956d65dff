from fractions import Fraction as Fr

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmsafe.core import InvalidInstance, MmsInstance, Mode, PeriodicController, SafeBox, TimedAction
from mmsafe.optimizer import (
    CostWeights,
    ModePool,
    avg_cost_of,
    min_avg_cost,
    min_peak,
    min_peak_then_avg,
    optimize_full_scan,
    optimize_weighted,
    peak_cost_of,
)
from mmsafe.simulate import periodic_safety

from instances import example1, example2


def test_example2_min_peak():
    inst, box, x0 = example2()
    res = min_peak(inst, box, x0)
    assert res.p_min == 3 and res.mode_set == ("m1", "m2", "m3")


def test_example2_average_infima():
    inst, box, _ = example2()
    low = min_avg_cost(inst.restrict(["m1", "m2", "m3"]), box)
    assert low.infimum == 2
    full = min_avg_cost(inst, box)
    # summing the two lower-bound rows gives 8 f4 >= 2 f1 - f2 - f3 ... the optimum is 2/3
    assert full.infimum == Fr(2, 3)
    assert full.optimum_vector["m1"] == Fr(5, 6) and full.optimum_vector["m4"] == Fr(1, 6)


def test_realized_average_is_within_epsilon():
    inst, box, _ = example2()
    eps = Fr(1, 1000)
    full = min_avg_cost(inst, box, eps)
    assert Fr(2, 3) < full.realized <= Fr(2, 3) + eps
    with pytest.raises(ValueError):
        min_avg_cost(inst, box, 0)


def test_peak_then_average_and_weighted():
    inst, box, x0 = example2()
    r = min_peak_then_avg(inst, box, x0)
    assert r.verdict == "solution" and r.peak == 3 and r.avg_infimum == 2
    w = optimize_weighted(inst, box, x0, CostWeights(1, 1))
    assert w.chosen_peak_level == 4 and w.weighted_infimum == 4 + Fr(2, 3)
    assert w.peak == peak_cost_of(w.controller, inst) == 4
    assert abs(avg_cost_of(w.controller, inst) - Fr(2, 3)) <= w.epsilon
    assert periodic_safety(inst, box, x0, w.controller).ok


def test_peak_only_weights_stop_at_min_peak():
    inst, box, x0 = example2()
    w = optimize_weighted(inst, box, x0, CostWeights(0, 1))
    assert w.chosen_peak_level == 3 and w.weighted_infimum == 3


def test_infeasible_gives_no_controller():
    inst, box, x0 = example1()
    priced = MmsInstance(2, tuple(Mode(m.id, m.a, m.b, 1) for m in inst.restrict(["m1"]).modes))
    assert min_peak(priced, box, x0) is None
    assert min_peak_then_avg(priced, box, x0).verdict == "no_controller"
    assert optimize_weighted(priced, box, x0, CostWeights(1, 1)).verdict == "no_controller"


def test_weights_and_prices_are_validated():
    with pytest.raises(InvalidInstance):
        CostWeights(0, 0)
    with pytest.raises(InvalidInstance):
        CostWeights(-1, 1)
    inst, box, x0 = example1()
    with pytest.raises(InvalidInstance):
        min_avg_cost(inst, box)


def test_cost_of_controller():
    inst, _, _ = example2()
    c = PeriodicController((TimedAction("m1", 3), TimedAction("m4", 1), TimedAction("m2", 0)))
    assert avg_cost_of(c, inst) == 1
    # zero-dwell actions do not count towards the peak
    assert peak_cost_of(c, inst) == 4


def test_pool_levels():
    inst, _, _ = example2()
    pool = ModePool.explicit(inst)
    assert pool.count_upto(0) == 1 and pool.count_upto(3) == 3
    assert pool.max_level() == 4 and pool.covers_all(4) and not pool.covers_all(3)
    assert pool.levels_between(0, 4, include_lo=False) == [3, 4]


coef = st.integers(-4, 4).map(Fr)
price = st.integers(0, 5).map(Fr)


@st.composite
def priced_instances(draw, max_modes=5):
    n = draw(st.integers(1, 2))
    k = draw(st.integers(1, max_modes))
    modes = tuple(
        Mode(f"m{j}", (1,) * n, tuple(draw(coef) for _ in range(n)), draw(price)) for j in range(k)
    )
    return MmsInstance(n, modes), SafeBox((Fr(0),) * n, (Fr(1),) * n)


@settings(max_examples=40, deadline=None)
@given(priced_instances(), st.sampled_from([(1, 1), (1, 0), (0, 1), (2, 1), (1, 3)]))
def test_narrowing_matches_full_scan(case, mu):
    inst, box = case
    x0 = (Fr(1, 2),) * inst.num_vars
    w = CostWeights(*mu)
    a = optimize_weighted(inst, box, x0, w)
    b = optimize_full_scan(inst, box, x0, w)
    assert a.verdict == b.verdict
    if a.feasible:
        assert a.weighted_infimum == b.weighted_infimum
        assert a.chosen_peak_level == b.chosen_peak_level


@settings(max_examples=40, deadline=None)
@given(priced_instances(max_modes=4))
def test_average_infimum_decreases_as_modes_are_added(case):
    inst, box = case
    prev = None
    ids = inst.mode_ids
    for k in range(1, len(ids) + 1):
        cur = min_avg_cost(inst.restrict(ids[:k]), box)
        if prev is not None:
            assert cur is not None and cur.infimum <= prev.infimum
        prev = cur if cur is not None else prev
