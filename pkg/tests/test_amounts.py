import pytest

from blindcash import amounts
from blindcash.errors import AmountOverflow


def test_check_bounds():
    assert amounts.check(0) == 0
    assert amounts.check(amounts.MAX_AMOUNT) == amounts.MAX_AMOUNT
    with pytest.raises(AmountOverflow):
        amounts.check(-1)
    with pytest.raises(AmountOverflow):
        amounts.check(amounts.MAX_AMOUNT + 1)
    with pytest.raises(AmountOverflow):
        amounts.check(1.5)
    with pytest.raises(AmountOverflow):
        amounts.check(True)


def test_add_overflow_checked():
    assert amounts.add(2, 3) == 5
    with pytest.raises(AmountOverflow):
        amounts.add(amounts.MAX_AMOUNT, 1)


def test_sub_underflow_checked():
    assert amounts.sub(5, 3) == 2
    with pytest.raises(AmountOverflow):
        amounts.sub(3, 5)
