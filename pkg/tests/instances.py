"""Hand-built instances shared by several test modules."""

from fractions import Fraction as Fr

from mmsafe.core import MmsInstance, Mode, SafeBox


def uniform_modes(b_rows, prices=None):
    n = len(b_rows[0])
    return tuple(
        Mode(f"m{k + 1}", (1,) * n, tuple(b), None if prices is None else prices[k])
        for k, b in enumerate(b_rows)
    )


def example1():
    """Two rooms, one heater that heats at most one room at a time."""
    modes = uniform_modes([(12, 12), (30, 12), (12, 30)])
    return MmsInstance(2, modes), SafeBox((18, 18), (22, 22)), (Fr(20), Fr(20))


def example2():
    """Four priced modes on the unit square where the cheapest peak is not the best trade-off."""
    modes = uniform_modes([(-1, -1), (2, -1), (-1, 2), (5, 5)], prices=(0, 3, 3, 4))
    return MmsInstance(2, modes), SafeBox((0, 0), (1, 1)), (Fr(1, 2), Fr(1, 2))
