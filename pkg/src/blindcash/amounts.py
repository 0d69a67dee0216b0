"""Currency amounts as overflow-checked 64-bit integer minor units."""

from __future__ import annotations

from .errors import AmountOverflow

# Signed-64 ceiling so sums stay representable in common storage layers.
MAX_AMOUNT = 2**63 - 1


def check(amount: int) -> int:
    if not isinstance(amount, int) or isinstance(amount, bool):
        raise AmountOverflow(f"amount must be an int, got {type(amount).__name__}")
    if amount < 0 or amount > MAX_AMOUNT:
        raise AmountOverflow(f"amount {amount} outside [0, {MAX_AMOUNT}]")
    return amount


def add(a: int, b: int) -> int:
    return check(check(a) + check(b))


def sub(a: int, b: int) -> int:
    check(a)
    check(b)
    if b > a:
        raise AmountOverflow(f"subtraction underflow: {a} - {b}")
    return a - b
