"""Monotone machines with budgeted execution and prefix enumeration.

Three machine families live here:

* :class:`ReferenceMachine` -- a small stack machine whose op-codes form a
  prefix-free code read lazily from the input tape.  Output is a binary
  string that only ever grows.
* :class:`ToyMachine` -- three 2-bit instructions and no loops, so every
  program of length ``2n`` has decided its first ``n`` output bits.  Used as
  ground truth in tests.
* :class:`DispatchMachine` -- routes ``1^(n+1)0`` to a probe program, ``00p``
  to the base machine and ``01p`` to the base machine with inverted output.

Machines never raise on bad programs: an invalid op-code, a stack underflow or
a work-tape overflow is reported as ``Status.CRASHED``.
"""

from __future__ import annotations

import enum
import os
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator

from uailab.errors import ResourceLimitError

MAX_PREFIX_LEN = 24
DEFAULT_MAX_STEPS = 10_000_000


def max_steps() -> int:
    """Global hard cap on any single step budget (``UAILAB_MAX_STEPS``)."""
    raw = os.environ.get("UAILAB_MAX_STEPS")
    if raw is None:
        return DEFAULT_MAX_STEPS
    return int(raw)


def check_budget(budget: int, max_len: int | None = None) -> None:
    if budget < 0:
        raise ValueError(f"budget must be >= 0, got {budget}")
    cap = max_steps()
    if budget > cap:
        raise ResourceLimitError(f"step budget {budget} exceeds cap {cap}")
    if max_len is not None:
        if max_len < 0:
            raise ValueError(f"max_len must be >= 0, got {max_len}")
        if max_len > MAX_PREFIX_LEN:
            raise ResourceLimitError(
                f"prefix length {max_len} exceeds cap {MAX_PREFIX_LEN}"
            )


class Status(enum.Enum):
    NEEDS_INPUT = "NeedsMoreInput"
    RUNNING = "Running"
    HALTED = "Halted"
    CRASHED = "Crashed"

    @property
    def final(self) -> bool:
        return self in (Status.HALTED, Status.CRASHED)


@dataclass(frozen=True)
class Program:
    """A finite binary input tape."""

    bits: str = ""

    def __post_init__(self):
        if any(c not in "01" for c in self.bits):
            raise ValueError(f"program must be a 0/1 string, got {self.bits!r}")

    def __len__(self) -> int:
        return len(self.bits)

    def __str__(self) -> str:
        return self.bits


@dataclass(frozen=True)
class ExecutionOutcome:
    output: str
    status: Status
    steps_used: int

    def to_json(self) -> dict:
        return {
            "output": self.output,
            "status": self.status.value,
            "steps_used": self.steps_used,
        }


def _bits(p: Program | str) -> str:
    return p.bits if isinstance(p, Program) else Program(p).bits


class MachineSpec(ABC):
    """A monotone machine over the binary output alphabet."""

    identifier: str = "abstract"
    alphabet: str = "01"

    @abstractmethod
    def run(self, program: Program | str, budget: int) -> ExecutionOutcome:
        """Run ``program`` for at most ``budget`` steps.

        Deterministic.  A larger budget yields an output extending the one
        for a smaller budget, and ``Halted``/``Crashed`` are final.
        """

    @property
    def dispatch_table(self) -> tuple[tuple[str, str], ...]:
        return ()

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.identifier}>"


class _InputExhausted(Exception):
    pass


class _Tape:
    def __init__(self, bits: str):
        self.bits = bits
        self.pos = 0

    def read(self) -> str:
        if self.pos >= len(self.bits):
            raise _InputExhausted
        b = self.bits[self.pos]
        self.pos += 1
        return b


# op-code table of the reference machine; the codewords are prefix-free
REFERENCE_OPCODES = {
    "00": "OUT0",
    "01": "OUT1",
    "100": "PUSH",  # operand: the next input bit
    "101": "POPOUT",
    "1100": "DUP",
    "1101": "NOT",
    "1110": "JNZ",  # pop; jump to instruction 0 if the popped bit is 1
    "11110": "HALT",
    "11111": "INVALID",
}


class ReferenceMachine(MachineSpec):
    """Stack machine with lazily decoded, self-delimiting instructions.

    Instructions are decoded from the input the first time the program
    counter reaches them; ``JNZ`` jumps back to instruction 0 and re-executes
    already decoded code without consuming input.  Each fetch-decode-execute
    cycle is one step.
    """

    identifier = "reference"

    def __init__(self, stack_cap: int = 64):
        if stack_cap <= 0:
            raise ValueError("stack_cap must be positive")
        self.stack_cap = stack_cap

    def _decode(self, tape: _Tape) -> tuple[str, str | None]:
        code = ""
        while code not in REFERENCE_OPCODES:
            code += tape.read()
        op = REFERENCE_OPCODES[code]
        arg = tape.read() if op == "PUSH" else None
        return op, arg

    def run(self, program: Program | str, budget: int) -> ExecutionOutcome:
        check_budget(budget)
        tape = _Tape(_bits(program))
        code: list[tuple[str, str | None]] = []
        stack: list[str] = []
        out: list[str] = []
        pc = 0
        steps = 0

        def done(status: Status) -> ExecutionOutcome:
            return ExecutionOutcome("".join(out), status, steps)

        while steps < budget:
            if pc == len(code):
                try:
                    code.append(self._decode(tape))
                except _InputExhausted:
                    return done(Status.NEEDS_INPUT)
            op, arg = code[pc]
            steps += 1
            pc += 1
            if op == "OUT0":
                out.append("0")
            elif op == "OUT1":
                out.append("1")
            elif op == "PUSH":
                if len(stack) >= self.stack_cap:
                    return done(Status.CRASHED)
                stack.append(arg)
            elif op == "HALT":
                return done(Status.HALTED)
            elif op == "INVALID":
                return done(Status.CRASHED)
            else:
                if not stack:
                    return done(Status.CRASHED)
                if op == "POPOUT":
                    out.append(stack.pop())
                elif op == "DUP":
                    if len(stack) >= self.stack_cap:
                        return done(Status.CRASHED)
                    stack.append(stack[-1])
                elif op == "NOT":
                    stack[-1] = "1" if stack[-1] == "0" else "0"
                elif op == "JNZ":
                    if stack.pop() == "1":
                        pc = 0
        return done(Status.RUNNING)


class ToyMachine(MachineSpec):
    """Three instructions, 2 bits each: ``00`` emit 0, ``01`` emit 1,
    ``10`` repeat the last emitted bit.  ``11`` (and ``10`` before any
    output) crashes.  There is no halt and no loop.
    """

    identifier = "toy"

    def run(self, program: Program | str, budget: int) -> ExecutionOutcome:
        check_budget(budget)
        bits = _bits(program)
        out = ""
        steps = 0
        pos = 0
        while steps < budget:
            if pos + 2 > len(bits):
                return ExecutionOutcome(out, Status.NEEDS_INPUT, steps)
            op = bits[pos : pos + 2]
            pos += 2
            steps += 1
            if op == "00":
                out += "0"
            elif op == "01":
                out += "1"
            elif op == "10" and out:
                out += out[-1]
            else:
                return ExecutionOutcome(out, Status.CRASHED, steps)
        return ExecutionOutcome(out, Status.RUNNING, steps)


# relation S(n, k, i) queried by probe programs
Relation = Callable[[int, int, int], bool]


@dataclass(frozen=True)
class ProbeProgram:
    """Emits ``1^(n+1)0``, then one ``0`` per ``k`` with a witness ``i``.

    For ``k = 0, 1, ...`` it searches ``i = 0, 1, ...`` until
    ``relation(n, k, i)`` holds; every query costs one step.  If some ``k``
    has no witness the program runs forever without further output.
    """

    n: int
    relation: Relation = field(compare=False)

    def run(self, budget: int) -> ExecutionOutcome:
        check_budget(budget)
        if budget == 0:
            return ExecutionOutcome("", Status.RUNNING, 0)
        out = ["1" * (self.n + 1) + "0"]
        steps = 1
        k = i = 0
        while steps < budget:
            steps += 1
            if self.relation(self.n, k, i):
                out.append("0")
                k += 1
                i = 0
            else:
                i += 1
        return ExecutionOutcome("".join(out), Status.RUNNING, steps)


def make_probe_program(n: int, relation: Relation) -> ProbeProgram:
    if n < 0:
        raise ValueError("n must be a natural number")
    return ProbeProgram(n, relation)


def _invert(s: str) -> str:
    return s.translate(str.maketrans("01", "10"))


class DispatchMachine(MachineSpec):
    """``U'`` built from a base machine and a family of probe programs.

    ``1^(n+1)0`` runs probe ``n`` (the rest of the input is never read),
    ``00p`` runs the base machine on ``p`` and ``01p`` does the same with
    every output bit flipped.  Routing consumes no steps.
    """

    def __init__(self, base: MachineSpec, probes: Callable[[int], ProbeProgram]):
        self.base = base
        self.probes = probes
        self.identifier = f"dispatch({base.identifier})"

    @property
    def dispatch_table(self) -> tuple[tuple[str, str], ...]:
        return (
            ("1^(n+1)0", "probe n"),
            ("00", f"{self.base.identifier}"),
            ("01", f"invert({self.base.identifier})"),
        )

    def run(self, program: Program | str, budget: int) -> ExecutionOutcome:
        check_budget(budget)
        bits = _bits(program)
        if bits.startswith("1"):
            n = 0
            while n + 1 < len(bits) and bits[n + 1] == "1":
                n += 1
            if n + 1 >= len(bits):
                return ExecutionOutcome("", Status.NEEDS_INPUT, 0)
            return self.probes(n).run(budget)
        if len(bits) < 2:
            return ExecutionOutcome("", Status.NEEDS_INPUT, 0)
        inner = self.base.run(bits[2:], budget)
        if bits[1] == "1":
            return ExecutionOutcome(_invert(inner.output), inner.status, inner.steps_used)
        return inner


def build_dispatch_machine(
    base: MachineSpec, probes: Callable[[int], ProbeProgram]
) -> DispatchMachine:
    return DispatchMachine(base, probes)


def _even_relation(n: int, k: int, i: int) -> bool:
    return n % 2 == 0


MACHINES: dict[str, Callable[[], MachineSpec]] = {
    "reference": ReferenceMachine,
    "toy": ToyMachine,
    # demo U': probes for even n emit 1^(n+1)0^oo, odd n stall after 1^(n+1)0
    "dispatch": lambda: DispatchMachine(
        ReferenceMachine(), lambda n: make_probe_program(n, _even_relation)
    ),
}


def get_machine(identifier: str) -> MachineSpec:
    try:
        return MACHINES[identifier]()
    except KeyError:
        raise ValueError(
            f"unknown machine {identifier!r}; choose from {sorted(MACHINES)}"
        ) from None


def run_program(machine: MachineSpec, p: Program | str, budget: int) -> ExecutionOutcome:
    return machine.run(p, budget)


def _consistent(a: str, b: str) -> bool:
    return a.startswith(b) or b.startswith(a)


@dataclass(frozen=True)
class PrefixPartition:
    """Minimal decidable prefixes for target ``x`` at a fixed ``(L, k)``.

    ``confirmed`` prefixes produced an output extending ``x``; ``refuted``
    ones produced a contradicting output or finished (halted/crashed) before
    matching; ``unresolved`` ones are still consistent with ``x`` but ran out
    of steps or reached length ``L`` while asking for more input.
    """

    x: str
    max_len: int
    budget: int
    confirmed: tuple[str, ...]
    refuted: tuple[str, ...]
    unresolved: tuple[str, ...]

    @staticmethod
    def _mass(prefixes: tuple[str, ...]) -> Fraction:
        return sum((Fraction(1, 2 ** len(p)) for p in prefixes), Fraction(0))

    @property
    def confirmed_mass(self) -> Fraction:
        return self._mass(self.confirmed)

    @property
    def refuted_mass(self) -> Fraction:
        return self._mass(self.refuted)

    @property
    def unresolved_mass(self) -> Fraction:
        return self._mass(self.unresolved)


def _classify(machine: MachineSpec, p: str, x: str, max_len: int, budget: int) -> str:
    res = machine.run(p, budget)
    if res.output.startswith(x):
        return "confirmed"
    if not x.startswith(res.output) or res.status.final:
        return "refuted"
    if res.status is Status.NEEDS_INPUT and len(p) < max_len:
        return "split"
    return "unresolved"


def enumerate_prefixes(
    machine: MachineSpec,
    x: str,
    max_len: int,
    budget: int,
    workers: int = 1,
) -> PrefixPartition:
    """Partition the program tree below length ``max_len`` for target ``x``.

    The tree is expanded breadth first; a prefix is only split when the
    machine asked for an input bit it does not have, so every counted
    prefix is minimal and the confirmed masses sum to at most 1.
    """
    check_budget(budget, max_len)
    if any(c not in machine.alphabet for c in x):
        raise ValueError(f"target {x!r} is not over alphabet {machine.alphabet!r}")
    groups: dict[str, list[str]] = {"confirmed": [], "refuted": [], "unresolved": []}
    frontier = [""]
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        while frontier:
            if pool is None:
                kinds = [_classify(machine, p, x, max_len, budget) for p in frontier]
            else:
                kinds = list(
                    pool.map(lambda p: _classify(machine, p, x, max_len, budget), frontier)
                )
            nxt = []
            for p, kind in zip(frontier, kinds):
                if kind == "split":
                    nxt.extend((p + "0", p + "1"))
                else:
                    groups[kind].append(p)
            frontier = nxt
    finally:
        if pool is not None:
            pool.shutdown()
    key = lambda p: (len(p), p)  # noqa: E731
    return PrefixPartition(
        x,
        max_len,
        budget,
        tuple(sorted(groups["confirmed"], key=key)),
        tuple(sorted(groups["refuted"], key=key)),
        tuple(sorted(groups["unresolved"], key=key)),
    )


def all_programs(max_len: int) -> Iterator[str]:
    """Every bit string of length ``<= max_len`` in length-lexicographic order."""
    for n in range(max_len + 1):
        for i in range(2**n):
            yield format(i, f"0{n}b") if n else ""
