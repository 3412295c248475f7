"""Discount functions, their tail sums and effective horizons."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from uailab.errors import UndefinedHorizon


@dataclass(frozen=True)
class DiscountSchedule:
    """Either geometric ``gamma(i) = g**i`` or a finite table ``gamma(1..n)``.

    Time indices start at 1.  ``Gamma(t)`` is the tail sum over ``i >= t``.
    """

    kind: str
    base: Fraction = Fraction(1, 2)
    table: tuple[Fraction, ...] = ()

    def __post_init__(self):
        if self.kind == "geometric":
            g = Fraction(self.base)
            if not 0 < g < 1:
                raise ValueError("geometric base must lie in (0, 1)")
            object.__setattr__(self, "base", g)
        elif self.kind == "table":
            tab = tuple(Fraction(v) for v in self.table)
            if any(v < 0 for v in tab):
                raise ValueError("discount values must be >= 0")
            object.__setattr__(self, "table", tab)
        else:
            raise ValueError(f"unknown discount kind {self.kind!r}")

    @classmethod
    def geometric(cls, base=Fraction(1, 2)) -> DiscountSchedule:
        return cls("geometric", Fraction(base))

    @classmethod
    def finite(cls, values) -> DiscountSchedule:
        return cls("table", table=tuple(values))

    @classmethod
    def parse(cls, spec: str) -> DiscountSchedule:
        """``geometric:1/2`` or ``table:1,1,1,1``."""
        kind, _, arg = spec.partition(":")
        if kind == "geometric":
            return cls.geometric(Fraction(arg or "1/2"))
        if kind == "table":
            return cls.finite(Fraction(v) for v in arg.split(",") if v)
        raise ValueError(f"bad discount spec {spec!r}")

    def __str__(self) -> str:
        if self.kind == "geometric":
            return f"geometric:{self.base}"
        return "table:" + ",".join(str(v) for v in self.table)

    @property
    def stationary(self) -> bool:
        """Whether ``gamma(t)/Gamma(t)`` and ``Gamma(t+1)/Gamma(t)`` are constant."""
        return self.kind == "geometric"

    def gamma(self, t: int) -> Fraction:
        if t < 1:
            raise ValueError("time starts at 1")
        if self.kind == "geometric":
            return self.base**t
        return self.table[t - 1] if t <= len(self.table) else Fraction(0)

    def Gamma(self, t: int) -> Fraction:
        if t < 1:
            raise ValueError("time starts at 1")
        if self.kind == "geometric":
            return self.base**t / (1 - self.base)
        return sum(self.table[t - 1 :], Fraction(0))

    def step_weights(self, t: int) -> tuple[Fraction, Fraction]:
        """``(gamma(t)/Gamma(t), Gamma(t+1)/Gamma(t))``, or zeros if ``Gamma(t) = 0``."""
        if self.kind == "geometric":
            return 1 - self.base, self.base
        total = self.Gamma(t)
        if total == 0:
            return Fraction(0), Fraction(0)
        return self.gamma(t) / total, self.Gamma(t + 1) / total


def effective_horizon(d: DiscountSchedule, t: int, eps) -> int:
    """Smallest ``k`` with ``Gamma(t+k) / Gamma(t) <= eps``.

    Closed form for geometric discounting, a scan over the table otherwise.
    ``eps >= 1`` gives 0.
    """
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    total = d.Gamma(t)
    if total == 0:
        raise UndefinedHorizon(f"Gamma({t}) = 0")
    if eps >= 1:
        return 0
    if d.kind == "geometric":
        # smallest k with base**k <= eps
        k = max(0, math.floor(math.log(eps) / math.log(d.base)) - 1)
        while d.base**k > eps:
            k += 1
        while k > 0 and d.base ** (k - 1) <= eps:
            k -= 1
        return k
    k = 0
    while d.Gamma(t + k) / total > eps:
        k += 1
    return k


def effective_horizon_scan(d: DiscountSchedule, t: int, eps) -> int:
    """Reference scan of the definition, used to cross-check the closed form."""
    eps = Fraction(eps)
    total = d.Gamma(t)
    if total == 0:
        raise UndefinedHorizon(f"Gamma({t}) = 0")
    k = 0
    while d.Gamma(t + k) / total > eps:
        k += 1
    return k
