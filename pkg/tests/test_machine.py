from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uailab.errors import ResourceLimitError
from uailab.machine import (
    DispatchMachine,
    Program,
    ReferenceMachine,
    Status,
    ToyMachine,
    all_programs,
    build_dispatch_machine,
    check_budget,
    enumerate_prefixes,
    get_machine,
    make_probe_program,
    run_program,
)

bits = st.text(alphabet="01", max_size=14)
MACHINES = [ReferenceMachine(), ToyMachine(), get_machine("dispatch")]


def test_empty_program_produces_nothing():
    for m in MACHINES:
        res = run_program(m, Program(""), 1000)
        assert res.output == ""
        assert res.status in (Status.NEEDS_INPUT, Status.HALTED)


@given(bits)
def test_zero_budget_runs_nothing(p):
    for m in MACHINES:
        res = m.run(p, 0)
        assert res.output == ""
        assert res.steps_used == 0


@given(bits, st.integers(0, 40), st.integers(0, 40))
def test_output_only_grows_with_budget(p, k1, k2):
    lo, hi = sorted((k1, k2))
    for m in MACHINES:
        a, b = m.run(p, lo), m.run(p, hi)
        assert b.output.startswith(a.output)
        assert a.steps_used <= lo
        if a.status.final:
            assert b == a


@given(bits, st.integers(0, 30))
def test_runs_are_deterministic(p, k):
    m = ReferenceMachine()
    assert m.run(p, k) == m.run(p, k)


def test_program_rejects_non_binary():
    with pytest.raises(ValueError):
        Program("012")


def _shortest_emitting(machine, target, max_len):
    # independent brute-force search in length-lexicographic order
    for n in range(max_len + 1):
        for i in range(2**n):
            p = format(i, f"0{n}b") if n else ""
            if machine.run(p, 10 * (n + 1)).output.startswith(target):
                return p
    return None


def test_shortest_reference_program_for_01():
    m = ReferenceMachine()
    p = _shortest_emitting(m, "01", 16)
    assert p == "0001"  # OUT0 then OUT1
    assert run_program(m, Program(p), 10_000).output.startswith("01")


def test_reference_loop_keeps_running():
    # OUT1; PUSH 1; JNZ -> back to instruction 0, forever
    p = "01" + "1001" + "1110"
    m = ReferenceMachine()
    short, long = m.run(p, 30), m.run(p, 300)
    assert short.status is Status.RUNNING
    assert set(long.output) == {"1"}
    assert len(long.output) > len(short.output) >= 10


def test_reference_crashes_are_values():
    m = ReferenceMachine()
    assert m.run("11111", 10).status is Status.CRASHED  # invalid op-code
    assert m.run("101", 10).status is Status.CRASHED  # pop from empty stack
    assert m.run("0011110", 10).status is Status.HALTED


def test_toy_machine_semantics():
    m = ToyMachine()
    assert m.run("000110", 10).output == "011"
    assert m.run("10", 10).status is Status.CRASHED
    assert m.run("0011", 10).output == "0"
    assert m.run("0011", 10).status is Status.CRASHED
    assert m.run("000", 10).status is Status.NEEDS_INPUT


def test_budget_caps(monkeypatch):
    with pytest.raises(ValueError):
        check_budget(-1)
    monkeypatch.setenv("UAILAB_MAX_STEPS", "50")
    with pytest.raises(ResourceLimitError):
        ToyMachine().run("00", 51)
    with pytest.raises(ResourceLimitError):
        enumerate_prefixes(ToyMachine(), "0", 30, 10)


def test_empty_target_refutes_only_crashes():
    m = ToyMachine()
    part = enumerate_prefixes(m, "", 6, 20)
    assert part.confirmed == ("",)
    assert part.refuted == ()
    # with a nonempty target the crashed prefixes show up as refuted
    part = enumerate_prefixes(m, "0", 6, 20)
    for p in part.refuted:
        res = m.run(p, 20)
        assert res.status is Status.CRASHED or not res.output.startswith("0")


@given(st.text(alphabet="01", max_size=3), st.integers(0, 8), st.integers(0, 12))
@settings(max_examples=40)
def test_confirmed_mass_nondecreasing(x, L, k):
    m = ReferenceMachine()
    a = enumerate_prefixes(m, x, L, k)
    b = enumerate_prefixes(m, x, L, k + 1)
    c = enumerate_prefixes(m, x, L + 1, k)
    assert b.confirmed_mass >= a.confirmed_mass
    assert c.confirmed_mass >= a.confirmed_mass
    assert set(a.refuted) <= set(b.refuted)


def test_toy_confirmed_mass_matches_flat_enumeration():
    m = ToyMachine()
    part = enumerate_prefixes(m, "0", 8, 64)
    # independent count over all 2^8 programs: fraction whose output starts with "0"
    hits = sum(m.run(format(i, "08b"), 64).output.startswith("0") for i in range(256))
    assert part.confirmed_mass == Fraction(hits, 256) == Fraction(1, 4)


@given(st.text(alphabet="01", max_size=3))
@settings(max_examples=20)
def test_counted_prefixes_are_prefix_free(x):
    part = enumerate_prefixes(ReferenceMachine(), x, 9, 20)
    counted = part.confirmed + part.refuted + part.unresolved
    for p in counted:
        assert not any(q != p and q.startswith(p) for q in counted)
    total = part.confirmed_mass + part.refuted_mass + part.unresolved_mass
    assert total == 1
    assert part.confirmed_mass <= 1


def test_parallel_enumeration_is_identical():
    m = ReferenceMachine()
    assert enumerate_prefixes(m, "01", 8, 20) == enumerate_prefixes(m, "01", 8, 20, workers=4)


def test_all_programs_order():
    assert list(all_programs(2)) == ["", "0", "1", "00", "01", "10", "11"]


def _always(n, k, i):
    return True


def _never(n, k, i):
    return False


def _diagonal(n, k, i):
    return i == k


def test_probe_with_total_relation():
    res = make_probe_program(2, _always).run(100)
    assert res.output.startswith("1110")
    assert len(res.output) > 4 and set(res.output[4:]) == {"0"}
    assert res.status is Status.RUNNING


def test_probe_without_witness():
    probe = make_probe_program(0, _never)
    for budget in (1, 10, 1000):
        res = probe.run(budget)
        assert res.output == "10"
        assert res.status is Status.RUNNING


def test_probe_diagonal_relation_count():
    res = make_probe_program(1, _diagonal).run(10**5)
    # the k-th zero costs k+1 queries after the initial step:
    # m zeros fit iff 1 + m(m+1)/2 <= budget
    m = max(m for m in range(1000) if 1 + m * (m + 1) // 2 <= 10**5)
    assert res.output == "110" + "0" * m
    assert m == 446


def test_dispatch_routes():
    base = ReferenceMachine()
    u = build_dispatch_machine(base, lambda n: make_probe_program(n, _always))
    for p in ("0001", "01", "1001101", ""):
        assert u.run("00" + p, 50) == base.run(p, 50)
        inv = u.run("01" + p, 50)
        ref = base.run(p, 50)
        assert inv.output == ref.output.translate(str.maketrans("01", "10"))
        assert inv.status == ref.status
    assert u.run("110" + "0101", 50).output.startswith("110")
    assert u.dispatch_table


@given(bits)
def test_dispatch_totality(p):
    u = get_machine("dispatch")
    assert isinstance(u, DispatchMachine)
    res = u.run(p, 30)
    if p.startswith("1"):
        n = len(p) - len(p.lstrip("1")) - 1
        if "0" in p:
            assert res.output.startswith("1" * (n + 1) + "0")
        else:
            assert res.output == ""
    elif len(p) < 2:
        assert res.output == ""


def test_unknown_machine():
    with pytest.raises(ValueError):
        get_machine("nope")
