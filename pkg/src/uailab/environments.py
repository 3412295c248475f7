"""Chronological conditional semimeasures and finite Bayesian mixtures.

Environments are queried through a small state interface: ``initial_state``
and ``step(state, action)``, which returns the conditional percept masses
and the successor state for each percept.  A per-step mass deficit is the
probability that the environment ends.  Everything is exact (Fraction).
"""

from __future__ import annotations

import json
import random
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Hashable, Iterable, Mapping, Sequence

import jsonschema

from uailab.errors import DeadEnd, SchemaError, ZeroEvidence

Action = str


@dataclass(frozen=True, order=True)
class Percept:
    observation: str
    reward: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "observation", str(self.observation))
        r = Fraction(self.reward)
        if not 0 <= r <= 1:
            raise ValueError(f"reward {r} outside [0, 1]")
        object.__setattr__(self, "reward", r)

    def __str__(self) -> str:
        return f"{self.observation}:{self.reward}"


HALT = None  # returned by sample_percept when the environment ends


@dataclass(frozen=True)
class History:
    """Alternating action/percept record, optionally ending after an action."""

    steps: tuple[tuple[Action, Percept], ...] = ()
    pending: Action | None = None

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def t(self) -> int:
        """The current time step: one past the number of completed cycles."""
        return len(self.steps) + 1

    @property
    def actions(self) -> tuple[Action, ...]:
        return tuple(a for a, _ in self.steps)

    @property
    def percepts(self) -> tuple[Percept, ...]:
        return tuple(e for _, e in self.steps)

    def act(self, action: Action) -> History:
        if self.pending is not None:
            raise ValueError("history already ends with an action")
        return History(self.steps, action)

    def perceive(self, percept: Percept) -> History:
        if self.pending is None:
            raise ValueError("percept without a preceding action")
        return History(self.steps + ((self.pending, percept),))

    def extend(self, action: Action, percept: Percept) -> History:
        if self.pending is not None:
            raise ValueError("history ends with an action")
        return History(self.steps + ((action, percept),))

    def __str__(self) -> str:
        return format_history(self)


def format_history(h: History) -> str:
    parts = [f"{a}:{e.observation}:{e.reward}" for a, e in h.steps]
    if h.pending is not None:
        parts.append(h.pending)
    return ",".join(parts)


def parse_history(text: str) -> History:
    """Parse ``action:obs:reward,...`` (reward optional, default 0)."""
    h = History()
    text = text.strip()
    if not text:
        return h
    for chunk in text.split(","):
        fields = chunk.strip().split(":")
        if len(fields) == 1:
            h = h.act(fields[0])
            continue
        if len(fields) not in (2, 3) or h.pending is not None:
            raise ValueError(f"malformed history item {chunk!r}")
        reward = Fraction(fields[2]) if len(fields) == 3 else Fraction(0)
        h = h.extend(fields[0], Percept(fields[1], reward))
    return h


StepMap = dict[Percept, tuple[Fraction, Hashable]]


class Environment(ABC):
    """A chronological conditional semimeasure with hashable internal state."""

    name: str
    actions: tuple[Action, ...]
    percepts: tuple[Percept, ...]

    @abstractmethod
    def initial_state(self) -> Hashable: ...

    @abstractmethod
    def step(self, state: Hashable, action: Action) -> StepMap:
        """Conditional masses (total <= 1) and successor states; zeros omitted."""

    @property
    def is_measure(self) -> bool:
        return False

    def replay(self, h: History) -> tuple[Fraction, Hashable | None]:
        """Return ``(nu(h), state after h)``; the state is ``None`` if the mass is 0."""
        mass = Fraction(1)
        state = self.initial_state()
        for a, e in h.steps:
            out = self.step(state, a).get(e)
            if out is None:
                return Fraction(0), None
            p, state = out
            mass *= p
        return mass, state

    def mass(self, h: History) -> Fraction:
        """Joint mass ``nu(e_1:t || a_1:t)`` of the history's percepts."""
        return self.replay(h)[0]

    def conditional(self, h: History, action: Action) -> dict[Percept, Fraction]:
        mass, state = self.replay(h)
        if mass == 0:
            return {}
        return {e: p for e, (p, _) in self.step(state, action).items()}


def _belief_key(belief: Mapping[str, Fraction]) -> tuple[tuple[str, Fraction], ...]:
    return tuple(sorted((s, p) for s, p in belief.items() if p))


@dataclass(frozen=True)
class Transition:
    state: str
    action: Action
    percept: Percept
    prob: Fraction
    next_state: str


class FiniteStateEnvironment(Environment):
    """Table-driven CCS: ``(state, action) -> [(percept, prob, next_state)]``.

    Several entries may share a percept with different successors; the
    internal state is then the posterior over hidden states (forward
    algorithm), kept as a sorted tuple so it can be hashed.
    """

    def __init__(
        self,
        name: str,
        actions: Sequence[Action],
        percepts: Sequence[Percept],
        transitions: Iterable[Transition],
        initial: str,
    ):
        self.name = name
        self.actions = tuple(actions)
        self.percepts = tuple(percepts)
        self.initial = initial
        self._steps: dict = {}  # step() is pure; results are cached
        self.table: dict[tuple[str, Action], list[Transition]] = {}
        for tr in transitions:
            if tr.action not in self.actions:
                raise ValueError(f"{name}: unknown action {tr.action!r}")
            if tr.percept not in self.percepts:
                raise ValueError(f"{name}: undeclared percept {tr.percept}")
            if not 0 <= tr.prob <= 1:
                raise ValueError(f"{name}: probability {tr.prob} outside [0, 1]")
            self.table.setdefault((tr.state, tr.action), []).append(tr)
        self.states = sorted(
            {initial}
            | {s for s, _ in self.table}
            | {tr.next_state for trs in self.table.values() for tr in trs}
        )
        for (s, a), trs in self.table.items():
            total = sum((tr.prob for tr in trs), Fraction(0))
            if total > 1:
                raise ValueError(f"{name}: mass {total} > 1 at ({s}, {a})")

    def initial_state(self):
        return ((self.initial, Fraction(1)),)

    def step(self, state, action) -> StepMap:
        key = (state, action)
        hit = self._steps.get(key)
        if hit is None:
            hit = self._steps[key] = self._step(state, action)
        return hit

    def _step(self, state, action) -> StepMap:
        masses: dict[Percept, dict[str, Fraction]] = {}
        for s, b in state:
            for tr in self.table.get((s, action), ()):
                if tr.prob == 0:
                    continue
                row = masses.setdefault(tr.percept, {})
                row[tr.next_state] = row.get(tr.next_state, Fraction(0)) + b * tr.prob
        out = {}
        for e in self.percepts:
            row = masses.get(e)
            if not row:
                continue
            total = sum(row.values(), Fraction(0))
            out[e] = (total, _belief_key({s: p / total for s, p in row.items()}))
        return out

    @property
    def is_measure(self) -> bool:
        return all(
            sum((tr.prob for tr in self.table.get((s, a), ())), Fraction(0)) == 1
            for s in self.states
            for a in self.actions
        )

    def __repr__(self) -> str:
        return f"<FiniteStateEnvironment {self.name}>"


@dataclass(frozen=True)
class MixtureNode:
    """Planning state of a mixture: member states plus posterior weights.

    ``weights`` are normalized to sum to 1 over members with positive mass;
    entries may be Fractions or floats.
    """

    states: tuple
    weights: tuple


@dataclass
class EnvironmentMixture:
    """Finite Bayesian mixture ``xi = sum_nu w_nu nu`` with positive weights."""

    members: list[Environment]
    weights: list[Fraction] | None = None
    actions: tuple[Action, ...] = field(default=())
    percepts: tuple[Percept, ...] = field(default=())

    def __post_init__(self):
        if not self.members:
            raise ValueError("a mixture needs at least one member")
        if self.weights is None:
            self.weights = [Fraction(1, len(self.members))] * len(self.members)
        self.weights = [Fraction(w) for w in self.weights]
        if len(self.weights) != len(self.members):
            raise ValueError("one weight per member required")
        if any(w <= 0 for w in self.weights):
            raise ValueError("mixture weights must be positive")
        if sum(self.weights) > 1:
            raise ValueError("mixture weights must sum to at most 1")
        if not self.actions:
            self.actions = self.members[0].actions
        if not self.percepts:
            seen: dict[Percept, None] = {}
            for m in self.members:
                seen.update(dict.fromkeys(m.percepts))
            self.percepts = tuple(seen)
        names = [m.name for m in self.members]
        if len(set(names)) != len(names):
            raise ValueError("member names must be unique")

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.members]

    def member(self, name: str) -> Environment:
        for m in self.members:
            if m.name == name:
                return m
        raise KeyError(f"no member named {name!r}")

    @property
    def is_measure(self) -> bool:
        """True if every member is a measure and the weights sum to 1."""
        return sum(self.weights) == 1 and all(m.is_measure for m in self.members)

    def mass(self, h: History) -> Fraction:
        """``xi(e_<t || a_<t) = sum_nu w_nu nu(e_<t || a_<t)``."""
        return sum((w * m.mass(h) for m, w in zip(self.members, self.weights)), Fraction(0))

    def normalized_mass(self, h: History) -> Fraction:
        """``xi_norm(e_<t || a_<t)``: product of normalized one-step conditionals."""
        value = Fraction(1)
        prefix = History()
        for a, e in h.steps:
            step = normalize_step(mixture_step(self, prefix, a))
            value *= step.get(e, Fraction(0))
            if value == 0:
                return value
            prefix = prefix.extend(a, e)
        return value

    def root(self, h: History, exact: bool = True) -> tuple[MixtureNode, Fraction]:
        """Planning node after ``h`` and the mass ``xi(h)``."""
        states, joint = [], []
        for m, w in zip(self.members, self.weights):
            mass, state = m.replay(h)
            states.append(state)
            joint.append(w * mass)
        total = sum(joint, Fraction(0))
        if total == 0:
            raise ZeroEvidence(f"mixture assigns zero mass to history {h}")
        post = [j / total for j in joint]
        if not exact:
            post = [float(p) for p in post]
        return MixtureNode(tuple(states), tuple(post)), total

    def expand(self, node: MixtureNode, action: Action, exact: bool = True):
        """One-step raw mixture conditional from ``node``.

        Returns ``[(percept, xi(e | path), child)]`` for percepts of positive
        mass, in declared percept order.
        """
        rows = []
        for m, s, w in zip(self.members, node.states, node.weights):
            rows.append(m.step(s, action) if w else {})
        out = []
        for e in self.percepts:
            parts = []
            for row, w in zip(rows, node.weights):
                hit = row.get(e)
                parts.append((w * (hit[0] if exact else float(hit[0])), hit[1]) if hit else (0, None))
            mass = sum(p for p, _ in parts)
            if not mass:
                continue
            child = MixtureNode(
                tuple(s for _, s in parts),
                tuple(p / mass for p, _ in parts),
            )
            out.append((e, mass, child))
        return out


def mixture_step(mix: EnvironmentMixture, h: History, a: Action) -> dict[Percept, Fraction]:
    """Unnormalized one-step mixture ``xi(e | h, a) = xi(h a e) / xi(h)``.

    An empty map is returned when the history itself has zero mass.
    """
    total = Fraction(0)
    acc: dict[Percept, Fraction] = {}
    for m, w in zip(mix.members, mix.weights):
        mass, state = m.replay(h)
        if mass == 0:
            continue
        total += w * mass
        for e, (p, _) in m.step(state, a).items():
            acc[e] = acc.get(e, Fraction(0)) + w * mass * p
    if total == 0:
        return {}
    return {e: acc[e] / total for e in mix.percepts if e in acc}


def normalize_step(step: Mapping[Percept, Fraction]) -> dict[Percept, Fraction]:
    total = sum(step.values(), Fraction(0))
    if total == 0:
        raise DeadEnd("one-step map has zero total mass")
    return {e: Fraction(p) / total for e, p in step.items()}


def posterior_weights(mix: EnvironmentMixture, h: History) -> dict[str, Fraction]:
    """Bayes posterior ``w_nu nu(h) / xi(h)``; sums to 1."""
    node, _ = mix.root(h)
    return dict(zip(mix.names, node.weights))


def sample_percept(env: Environment, h: History, a: Action, rng: random.Random):
    """Draw a percept from ``env``'s conditional, or ``HALT`` with the deficit mass."""
    u = Fraction(rng.random())
    acc = Fraction(0)
    for e, p in env.conditional(h, a).items():
        acc += p
        if u < acc:
            return e
    return HALT


def single_state_environment(
    name: str,
    actions: Sequence[Action],
    percepts: Sequence[Percept],
    table: Mapping[Action, Mapping[Percept, Fraction]],
) -> FiniteStateEnvironment:
    trs = [
        Transition("s", a, e, Fraction(p), "s")
        for a, row in table.items()
        for e, p in row.items()
    ]
    return FiniteStateEnvironment(name, actions, percepts, trs, "s")


def example1_class() -> EnvironmentMixture:
    """Two semimeasures that return a percept deterministically or end.

    Only ``alpha`` tells them apart: nu1 answers percept 0 and nu2 percept 1,
    each with mass 1/10.  ``beta`` yields percept 0 with mass 1/2 in both.
    """
    zero, one = Percept("0"), Percept("1")
    actions = ("alpha", "beta")
    nu1 = single_state_environment(
        "nu1", actions, (zero, one),
        {"alpha": {zero: Fraction(1, 10)}, "beta": {zero: Fraction(1, 2)}},
    )
    nu2 = single_state_environment(
        "nu2", actions, (zero, one),
        {"alpha": {one: Fraction(1, 10)}, "beta": {zero: Fraction(1, 2)}},
    )
    return EnvironmentMixture([nu1, nu2], [Fraction(1, 2), Fraction(1, 2)])


def benchmark_class() -> EnvironmentMixture:
    """Two-environment reward class used by the agent benchmark.

    ``left`` and ``right`` pay reward 1 with probability 3/5 or 2/5 (reward
    0 otherwise); which arm is better depends on the environment.  ``probe``
    pays nothing but shows a signal naming the better arm with probability
    9/10.  Arm pulls leak little information and probing costs reward, so a
    learner faces a genuine exploration/exploitation trade-off.
    """
    lose, win = Percept("0", 0), Percept("1", 1)
    sig_l, sig_r = Percept("L", 0), Percept("R", 0)
    actions = ("left", "probe", "right")
    percepts = (lose, win, sig_l, sig_r)
    hi, lo = Fraction(3, 5), Fraction(2, 5)
    sure, noise = Fraction(9, 10), Fraction(1, 10)
    lefty = single_state_environment(
        "lefty", actions, percepts,
        {
            "left": {win: hi, lose: 1 - hi},
            "right": {win: lo, lose: 1 - lo},
            "probe": {sig_l: sure, sig_r: noise},
        },
    )
    righty = single_state_environment(
        "righty", actions, percepts,
        {
            "left": {win: lo, lose: 1 - lo},
            "right": {win: hi, lose: 1 - hi},
            "probe": {sig_l: noise, sig_r: sure},
        },
    )
    return EnvironmentMixture([lefty, righty])


def machine_class(machine, actions: Sequence[Action], max_len: int, budget: int) -> EnvironmentMixture:
    """Deterministic environments read off machine programs.

    A minimal program whose output has at least ``len(actions)`` bits
    defines the environment where action ``i`` always yields observation
    ``output[i]`` with that bit as reward.  Programs producing the same table
    are merged and their ``2**-|p|`` weights added.
    """
    from uailab.machine import Status, check_budget

    check_budget(budget, max_len)
    need = len(actions)
    found: dict[str, Fraction] = {}
    frontier = [""]
    while frontier:
        nxt = []
        for p in frontier:
            res = machine.run(p, budget)
            if len(res.output) >= need:
                table = res.output[:need]
                found[table] = found.get(table, Fraction(0)) + Fraction(1, 2 ** len(p))
            elif res.status is Status.NEEDS_INPUT and len(p) < max_len:
                nxt.extend((p + "0", p + "1"))
        frontier = nxt
    if not found:
        raise ValueError("no program produced a full action table within the budget")
    percepts = (Percept("0", 0), Percept("1", 1))
    members, weights = [], []
    for table in sorted(found):
        rows = {a: {percepts[int(bit)]: Fraction(1)} for a, bit in zip(actions, table)}
        members.append(single_state_environment(f"tbl{table}", actions, percepts, rows))
        weights.append(found[table])
    return EnvironmentMixture(members, weights, tuple(actions), percepts)


CLASS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["actions", "percepts", "environments"],
    "properties": {
        "actions": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "percepts": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["obs"],
                "properties": {"obs": {"type": "string"}, "reward": {"type": "string"}},
            },
        },
        "environments": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name", "transitions"],
                "properties": {
                    "name": {"type": "string"},
                    "weight": {"type": "string"},
                    "initial": {"type": "string"},
                    "transitions": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["action", "obs", "prob"],
                            "properties": {
                                "state": {"type": "string"},
                                "action": {"type": "string"},
                                "obs": {"type": "string"},
                                "reward": {"type": "string"},
                                "prob": {"type": "string"},
                                "next": {"type": "string"},
                            },
                        },
                    },
                },
            },
        },
    },
}


def _frac(value: str, path: str) -> Fraction:
    try:
        return Fraction(value)
    except (ValueError, ZeroDivisionError):
        raise SchemaError(path, f"not a rational number: {value!r}") from None


def class_from_dict(data: Mapping) -> EnvironmentMixture:
    """Build a mixture from the environment-class JSON document."""
    try:
        jsonschema.validate(data, CLASS_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path)
        raise SchemaError(path, exc.message) from None
    actions = tuple(data["actions"])
    percepts = tuple(
        Percept(p["obs"], _frac(p.get("reward", "0"), f"percepts.{i}.reward"))
        for i, p in enumerate(data["percepts"])
    )
    by_key = {(p.observation, p.reward): p for p in percepts}
    members, weights = [], []
    for i, env in enumerate(data["environments"]):
        trs = []
        for j, tr in enumerate(env["transitions"]):
            where = f"environments.{i}.transitions.{j}"
            key = (tr["obs"], _frac(tr.get("reward", "0"), where + ".reward"))
            if key not in by_key:
                raise SchemaError(where, f"percept {key[0]}:{key[1]} is not declared")
            trs.append(
                Transition(
                    tr.get("state", "s"),
                    tr["action"],
                    by_key[key],
                    _frac(tr["prob"], where + ".prob"),
                    tr.get("next", tr.get("state", "s")),
                )
            )
        try:
            members.append(
                FiniteStateEnvironment(env["name"], actions, percepts, trs, env.get("initial", "s"))
            )
        except ValueError as exc:
            raise SchemaError(f"environments.{i}", str(exc)) from None
        if "weight" in env:
            weights.append(_frac(env["weight"], f"environments.{i}.weight"))
    if weights and len(weights) != len(members):
        raise SchemaError("environments", "give a weight for every environment or none")
    try:
        return EnvironmentMixture(members, weights or None, actions, percepts)
    except ValueError as exc:
        raise SchemaError("environments", str(exc)) from None


def load_class(path: str | Path) -> EnvironmentMixture:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError("", f"invalid JSON: {exc}") from None
    return class_from_dict(data)


def class_to_dict(mix: EnvironmentMixture) -> dict:
    """Serialize a mixture of :class:`FiniteStateEnvironment` members."""
    envs = []
    for m, w in zip(mix.members, mix.weights):
        if not isinstance(m, FiniteStateEnvironment):
            raise TypeError(f"{m.name} is not table-driven")
        trs = [
            {
                "state": tr.state,
                "action": tr.action,
                "obs": tr.percept.observation,
                "reward": str(tr.percept.reward),
                "prob": str(tr.prob),
                "next": tr.next_state,
            }
            for key in sorted(m.table)
            for tr in m.table[key]
        ]
        envs.append({"name": m.name, "weight": str(w), "initial": m.initial, "transitions": trs})
    return {
        "actions": list(mix.actions),
        "percepts": [{"obs": p.observation, "reward": str(p.reward)} for p in mix.percepts],
        "environments": envs,
    }


BUILTIN_CLASSES = {"example1": example1_class, "benchmark": benchmark_class}


def resolve_class(ref: str) -> EnvironmentMixture:
    """A built-in class name (``example1``, ``benchmark``) or a JSON file path."""
    if ref in BUILTIN_CLASSES:
        return BUILTIN_CLASSES[ref]()
    return load_class(ref)
