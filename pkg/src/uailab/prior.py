"""Anytime rational brackets for Solomonoff's prior and its relatives.

All quantities are exact :class:`~fractions.Fraction` values.  ``bracket_M``
is a two-sided certificate: the lower end is the mass of minimal programs
already seen to print ``x``; the upper end adds the mass of programs that
are still undecided.  Both ends move monotonically as the budget grows.

The measure mixture (mass of programs producing infinite output) only gets a
finite-budget approximant, :func:`approx_MM`.  It is not limit computable
for every machine, so no convergent routine for it exists here.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

from uailab.errors import InsufficientBudget, ResourceLimitError
from uailab.machine import (
    MachineSpec,
    PrefixPartition,
    Status,
    check_budget,
    enumerate_prefixes,
)

MAX_MM_TERMS = 2**12
MAX_ORACLE_LEN = 20


@dataclass(frozen=True)
class ProbabilityBracket:
    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        object.__setattr__(self, "lo", Fraction(self.lo))
        object.__setattr__(self, "hi", Fraction(self.hi))
        if not 0 <= self.lo <= self.hi <= 1:
            raise ValueError(f"invalid bracket [{self.lo}, {self.hi}]")

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    @property
    def midpoint(self) -> Fraction:
        return (self.lo + self.hi) / 2

    def __contains__(self, value) -> bool:
        return self.lo <= value <= self.hi

    def to_json(self) -> dict:
        return {"lo": _frac_str(self.lo), "hi": _frac_str(self.hi)}


def _frac_str(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


@dataclass(frozen=True)
class BudgetSchedule:
    """Maps a budget index ``j`` to ``(max_prefix_len, step_budget)``.

    The default phase rule is ``(j, j * 2**j)``: both components grow without
    bound, so every (program, step) pair is eventually covered.
    """

    rule: Callable[[int], tuple[int, int]] = lambda j: (j, j * 2**j)

    def __call__(self, j: int) -> tuple[int, int]:
        if j < 0:
            raise ValueError("budget index must be >= 0")
        return self.rule(j)


DEFAULT_SCHEDULE = BudgetSchedule()

Budget = int | tuple[int, int]


def _resolve(budget: Budget, schedule: BudgetSchedule) -> tuple[int, int]:
    if isinstance(budget, tuple):
        return budget
    return schedule(budget)


def _partition(machine, x, budget, schedule) -> PrefixPartition:
    max_len, steps = _resolve(budget, schedule)
    return enumerate_prefixes(machine, x, max_len, steps)


def bracket_M(
    machine: MachineSpec,
    x: str,
    budget: Budget,
    schedule: BudgetSchedule = DEFAULT_SCHEDULE,
) -> ProbabilityBracket:
    """Bracket ``M(x)`` after dovetailing up to the given budget.

    ``budget`` is a schedule index or an explicit ``(L, k)`` pair.
    """
    part = _partition(machine, x, budget, schedule)
    lo = part.confirmed_mass
    return ProbabilityBracket(lo, lo + part.unresolved_mass)


def bracket_conditional_M(
    machine: MachineSpec,
    x: str,
    y: str,
    budget: Budget,
    schedule: BudgetSchedule = DEFAULT_SCHEDULE,
) -> ProbabilityBracket:
    """Bracket ``M(xy | x) = M(xy) / M(x)`` from the two joint brackets."""
    bx = bracket_M(machine, x, budget, schedule)
    if bx.lo == 0:
        raise InsufficientBudget(f"no program confirmed {x!r} yet")
    bxy = bracket_M(machine, x + y, budget, schedule)
    return ProbabilityBracket(bxy.lo / bx.hi, min(Fraction(1), bxy.hi / bx.lo))


def _ratio_bracket(num: ProbabilityBracket, rest: list[ProbabilityBracket]):
    # u / (u + v) is increasing in u and decreasing in v
    rest_lo = sum((b.lo for b in rest), Fraction(0))
    rest_hi = sum((b.hi for b in rest), Fraction(0))
    if num.lo + rest_lo == 0:
        return None
    lo = num.lo / (num.lo + rest_hi) if num.lo else Fraction(0)
    hi = num.hi / (num.hi + rest_lo) if num.hi else Fraction(0)
    return lo, hi


def bracket_Mnorm(
    machine: MachineSpec,
    x: str,
    budget: Budget,
    schedule: BudgetSchedule = DEFAULT_SCHEDULE,
) -> ProbabilityBracket:
    """Bracket the Solomonoff-normalized prior ``M_norm(x)``.

    ``M_norm(x_1:n)`` is the product of ``M(x_1:i) / sum_b M(x_<i b)``;
    every factor is bracketed monotonically from the joint brackets.
    """
    lo = hi = Fraction(1)
    cache: dict[str, ProbabilityBracket] = {}

    def m(s: str) -> ProbabilityBracket:
        if s not in cache:
            cache[s] = bracket_M(machine, s, budget, schedule)
        return cache[s]

    for i in range(len(x)):
        prefix, a = x[:i], x[i]
        others = [m(prefix + b) for b in machine.alphabet if b != a]
        r = _ratio_bracket(m(prefix + a), others)
        if r is None:
            raise InsufficientBudget(
                f"no one-symbol extension of {prefix!r} is witnessed yet"
            )
        lo *= r[0]
        hi *= r[1]
    return ProbabilityBracket(lo, hi)


def approx_MM(
    machine: MachineSpec,
    x: str,
    depth: int,
    budget: Budget,
    schedule: BudgetSchedule = DEFAULT_SCHEDULE,
) -> Fraction:
    """Return ``sum_{|y| = depth} bracket_M(xy).lo`` at a fixed budget.

    The value is nonincreasing in ``depth`` for a fixed budget, but there is
    no convergence guarantee as depth and budget grow together: on some
    universal machines the measure mixture is not limit computable, so no
    schedule of (depth, budget) pairs can be promised to approach it.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    terms = len(machine.alphabet) ** depth
    if terms > MAX_MM_TERMS:
        raise ResourceLimitError(f"{terms} extensions exceed cap {MAX_MM_TERMS}")
    total = Fraction(0)
    for ys in itertools.product(machine.alphabet, repeat=depth):
        total += bracket_M(machine, x + "".join(ys), budget, schedule).lo
    return total


@dataclass(frozen=True)
class AdversarialSequence:
    bits: str
    decided: tuple[bool, ...]
    conditionals: tuple[ProbabilityBracket, ...]

    @property
    def all_decided(self) -> bool:
        return all(self.decided)


def adversarial_sequence(
    machine: MachineSpec,
    t: int,
    budget: Budget,
    schedule: BudgetSchedule = DEFAULT_SCHEDULE,
) -> AdversarialSequence:
    """Build ``z_1:t`` with ``z_i = 0`` iff ``M(1 | z_<i) > 1/2``.

    A bit is decided when the bracket for ``M(z_<i 1 | z_<i)`` lies strictly
    above 1/2 or entirely at or below it.  Otherwise the midpoint decides
    and the bit is flagged as undecided.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    half = Fraction(1, 2)
    z = ""
    decided = []
    conds = []
    for _ in range(t):
        c = bracket_conditional_M(machine, z, "1", budget, schedule)
        if c.lo > half:
            bit, ok = "0", True
        elif c.hi <= half:
            bit, ok = "1", True
        else:
            bit, ok = ("0" if c.midpoint > half else "1"), False
        z += bit
        decided.append(ok)
        conds.append(c)
    return AdversarialSequence(z, tuple(decided), tuple(conds))


def exact_M_oracle(machine: MachineSpec, x: str, max_len: int) -> ProbabilityBracket:
    """Brute-force bracket for ``M(x)`` from all ``2**max_len`` programs.

    Every program of length exactly ``max_len`` is run flat (no prefix tree,
    no dovetailing) with a step budget large enough for machines that run at
    most one instruction per two input bits, e.g. :class:`ToyMachine`.
    """
    if max_len > MAX_ORACLE_LEN:
        raise ResourceLimitError(f"oracle length {max_len} exceeds cap {MAX_ORACLE_LEN}")
    steps = max_len + 1
    check_budget(steps)
    confirmed = pending = 0
    for i in range(2**max_len):
        q = format(i, f"0{max_len}b") if max_len else ""
        res = machine.run(q, steps)
        if res.output.startswith(x):
            confirmed += 1
        elif x.startswith(res.output) and res.status in (
            Status.NEEDS_INPUT,
            Status.RUNNING,
        ):
            pending += 1
    scale = Fraction(1, 2**max_len)
    return ProbabilityBracket(confirmed * scale, (confirmed + pending) * scale)
