"""Exploration-phase agent over a finite Bayesian mixture, plus regret metrics.

At each step outside an exploration phase the agent computes the optimal
information-seeking value with lifetime ``t + H_t(eps_t) - 1``.  If it
exceeds ``eps_t`` an exploration phase of ``H_t(eps_t)`` steps starts, during
which the agent plays ``eps_t/2``-optimal information-seeking actions (the
lifetime stays fixed at the phase start; the action is re-planned against
the updated history each step).  Otherwise it plays one reward action that
is ``max(2^-t, 1e-12)``-optimal for the mixture.

The episode runner simulates a true environment ``mu`` from the class and
records, per step, ``V*_mu`` and the value of the action actually taken.
"""

from __future__ import annotations

import csv
import io
import json
import math
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction

from uailab.environments import (
    Action,
    Environment,
    EnvironmentMixture,
    History,
    MixtureNode,
    Percept,
)
from uailab.errors import UailabError
from uailab.values.discount import DiscountSchedule, effective_horizon
from uailab.values.planning import (
    MAX_TREE,
    Planner,
    as_mixture,
    certified_reward_action,
    ordered_actions,
)

EXPLOIT_FLOOR = 1e-12
SKIP_MARGIN = 1e-12


def epsilon_schedule(t: int) -> Fraction:
    """``t^(-1/2)`` rounded up to a multiple of ``2^-32``.

    Rounding up keeps the sequence nonincreasing and exact at perfect
    squares of powers of two (``t = 4 -> 1/2``).
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    target = 1 << 64  # q / 2^32 >= t^(-1/2)  <=>  q^2 t >= 2^64
    q = math.isqrt(target // t)
    while q * q * t < target:
        q += 1
    while q > 1 and (q - 1) * (q - 1) * t >= target:
        q -= 1
    return Fraction(q, 1 << 32)


@dataclass(frozen=True)
class AgentConfig:
    """Knobs of the agent.  ``epsilon`` replaces the schedule by a constant."""

    discount: DiscountSchedule = field(default_factory=DiscountSchedule.geometric)
    epsilon: Fraction | None = None
    exploit_floor: float = EXPLOIT_FLOOR
    eps_trunc: Fraction = Fraction(1, 1000)
    force_explore: bool = False
    exact: bool = False
    planner_nodes: int = MAX_TREE

    def eps(self, t: int) -> Fraction:
        return Fraction(self.epsilon) if self.epsilon is not None else epsilon_schedule(t)

    def exploit_eps(self, t: int) -> float:
        return max(2.0 ** -t if t < 1075 else 0.0, self.exploit_floor)

    def horizon(self, t: int, eps) -> int:
        if self.discount.Gamma(t) == 0:
            return 0
        return effective_horizon(self.discount, t, eps)


@dataclass
class _Belief:
    """Planning node after a history plus ``xi(h) / xi_norm(h)``."""

    t: int
    node: MixtureNode
    scale: float | Fraction


@dataclass(frozen=True)
class AgentState:
    mixture: EnvironmentMixture
    config: AgentConfig = field(default_factory=AgentConfig)
    mode: str = "exploit"
    steps_left: int = 0
    phase_end: int = 0
    phase_eps: Fraction = Fraction(1)
    planner: Planner | None = field(default=None, compare=False, repr=False)
    belief: _Belief | None = field(default=None, compare=False, repr=False)

    @classmethod
    def initial(cls, mixture: EnvironmentMixture, config: AgentConfig | None = None) -> AgentState:
        config = config or AgentConfig()
        return cls(mixture, config, planner=Planner(mixture, config.exact, config.planner_nodes))

    @classmethod
    def exploring(cls, mixture, steps_left: int, phase_end: int, phase_eps=Fraction(1),
                  config: AgentConfig | None = None) -> AgentState:
        base = cls.initial(mixture, config)
        return replace(base, mode="explore", steps_left=steps_left,
                       phase_end=phase_end, phase_eps=Fraction(phase_eps))


def _belief_from_history(state: AgentState, h: History) -> _Belief:
    planner = state.planner
    node, xi_h = state.mixture.root(h, exact=planner.exact)
    scale = xi_h / state.mixture.normalized_mass(h)
    if not planner.exact:
        scale = float(scale)
    return _Belief(h.t, planner.snap(node), scale)


def _ensure(state: AgentState, h: History) -> AgentState:
    if state.planner is None:
        state = replace(state, planner=Planner(state.mixture, state.config.exact, state.config.planner_nodes))
    if state.belief is None or state.belief.t != h.t:
        state = replace(state, belief=_belief_from_history(state, h))
    return state


def observe(state: AgentState, action: Action, percept: Percept) -> AgentState:
    """Advance the agent's posterior by one observed cycle."""
    b = state.belief
    out = state.planner.children(b.node, action)
    total = sum(p for _, p, _ in out)
    for e, _, child in out:
        if e == percept:
            return replace(state, belief=_Belief(b.t + 1, child, b.scale * total))
    raise UailabError(f"percept {percept} has zero mass under the mixture")


def posterior_entropy(weights) -> float:
    return -sum(float(w) * math.log2(w) for w in weights if w > 0)


def info_action_values(state: AgentState, depth: int) -> dict[Action, float]:
    """Per-action optimal information values at the current belief."""
    planner, b = state.planner, state.belief
    coeffs = tuple(w * b.scale for w in b.node.weights)
    one = planner._num(1)
    masses = tuple(one if c else 0 for c in coeffs)
    q = planner.info_q(b.node.states, coeffs, masses, one, depth)
    return {a: float(v) for a, v in q.items()}


def _least_within(q: dict[Action, float], eps: float) -> Action:
    top = max(q.values())
    for a in ordered_actions(q):
        if q[a] > top - eps:
            return a
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class StepDecision:
    action: Action
    mode: str
    v_info: float | None


def bayesexp_step(state: AgentState, h: History) -> tuple[Action, AgentState, str]:
    """One decision; returns ``(action, new state, mode tag)``."""
    action, state, decision = decide(state, h)
    return action, state, decision.mode


def decide(state: AgentState, h: History) -> tuple[Action, AgentState, StepDecision]:
    state = _ensure(state, h)
    cfg = state.config
    t = h.t
    if state.mode == "explore" and state.steps_left > 0:
        depth = max(1, state.phase_end - t + 1)
        q = info_action_values(state, depth)
        a = _least_within(q, float(state.phase_eps) / 2)
        left = state.steps_left - 1
        new = replace(state, steps_left=left, mode="explore" if left else "exploit")
        return a, new, StepDecision(a, "explore", None)

    eps = cfg.eps(t)
    length = max(1, cfg.horizon(t, eps))
    weights = state.belief.node.weights
    v_info = q = None
    explore = cfg.force_explore
    if not explore:
        # on measure classes V*_I is a mutual information between the
        # environment and future percepts, so the posterior entropy bounds it
        skip = (
            state.mixture.is_measure
            and posterior_entropy(weights) <= float(eps) - SKIP_MARGIN
        )
        if not skip:
            q = info_action_values(state, length)
            v_info = max(q.values())
            explore = v_info > eps
    if explore:
        if q is None:
            q = info_action_values(state, length)
        a = _least_within(q, float(eps) / 2)
        left = length - 1
        new = replace(
            state,
            mode="explore" if left else "exploit",
            steps_left=left,
            phase_end=t + length - 1,
            phase_eps=eps,
        )
        return a, new, StepDecision(a, "explore", v_info)
    if cfg.discount.Gamma(t) == 0:
        a = ordered_actions(state.mixture.actions)[0]
    else:
        a, _, _ = certified_reward_action(
            state.planner, state.belief.node, cfg.discount, t, cfg.exploit_eps(t)
        )
    return a, replace(state, mode="exploit", steps_left=0), StepDecision(a, "exploit", v_info)


# -- episodes and metrics ----------------------------------------------------


@dataclass(frozen=True)
class StepRecord:
    t: int
    mode: str
    action: Action
    percept: Percept | None
    v_star: float
    v_pi: float
    posterior: tuple[float, ...]
    v_info: float | None = None

    @property
    def regret(self) -> float:
        return self.v_star - self.v_pi


@dataclass
class EpisodeTrace:
    member_names: tuple[str, ...]
    true_env: str
    seed: int
    records: list[StepRecord] = field(default_factory=list)
    halted: bool = False

    def __len__(self) -> int:
        return len(self.records)

    def posterior_on_truth(self, t: int | None = None) -> float:
        rec = self.records[(t or len(self.records)) - 1]
        return rec.posterior[self.member_names.index(self.true_env)]


def _sample(row: dict, percepts, rng: random.Random):
    u = Fraction(rng.random())
    acc = Fraction(0)
    for e in percepts:
        hit = row.get(e)
        if hit is None:
            continue
        acc += hit[0]
        if u < acc:
            return e, hit[1]
    return None, None


def run_episode(state: AgentState, mu: Environment, steps: int, seed: int) -> EpisodeTrace:
    """Simulate the agent against ``mu`` for ``steps`` cycles.

    Deterministic in ``seed``.  Per step, ``v_star`` is ``V*_mu`` and
    ``v_pi`` the value of taking the chosen action and acting optimally for
    ``mu`` afterwards, both truncated at ``H_t(eps_trunc)``.  If ``mu``
    stops emitting percepts the trace ends with ``halted`` set.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    rng = random.Random(seed)
    cfg = state.config
    trace = EpisodeTrace(tuple(state.mixture.names), mu.name, seed)
    mu_planner = Planner(as_mixture(mu), exact=False)
    mu_state = mu.initial_state()
    h = History()
    state = _ensure(state, h)
    for t in range(1, steps + 1):
        action, state, info = decide(state, h)
        if cfg.discount.Gamma(t) == 0:
            v_star = v_pi = 0.0
        else:
            depth = effective_horizon(cfg.discount, t, cfg.eps_trunc)
            node = MixtureNode((mu_state,), (1.0,))
            q = mu_planner.reward_q(node, cfg.discount, t, depth) if depth else {action: 0.0}
            v_star, v_pi = float(max(q.values())), float(q[action])
        percept, mu_state = _sample(mu.step(mu_state, action), mu.percepts, rng)
        if percept is None:
            trace.records.append(
                StepRecord(t, info.mode, action, None, v_star, v_pi,
                           tuple(float(w) for w in state.belief.node.weights), info.v_info)
            )
            trace.halted = True
            break
        state = observe(state, action, percept)
        h = History(h.steps + ((action, percept),))
        trace.records.append(
            StepRecord(t, info.mode, action, percept, v_star, v_pi,
                       tuple(float(w) for w in state.belief.node.weights), info.v_info)
        )
    return trace


def wao_metric(trace: EpisodeTrace, up_to: int) -> float:
    """Cesaro mean of per-step regrets over the first ``up_to`` steps."""
    if not 1 <= up_to <= len(trace):
        raise ValueError(f"up_to must lie in [1, {len(trace)}]")
    return math.fsum(r.regret for r in trace.records[:up_to]) / up_to


def exploration_density(trace: EpisodeTrace, t: int) -> Fraction:
    if not 1 <= t <= len(trace):
        raise ValueError(f"t must lie in [1, {len(trace)}]")
    return Fraction(sum(r.mode == "explore" for r in trace.records[:t]), t)


def checkpoints(n: int) -> list[int]:
    """Powers of ten up to ``n``, plus ``n`` itself."""
    out, k = [], 1
    while k <= n:
        out.append(k)
        k *= 10
    if n and (not out or out[-1] != n):
        out.append(n)
    return out


CSV_COLUMNS = ("t", "mode", "action", "obs", "reward", "v_star", "v_pi", "regret", "v_info")


def trace_to_csv(trace: EpisodeTrace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS + tuple(f"post_{n}" for n in trace.member_names))
    for r in trace.records:
        writer.writerow(
            [
                r.t,
                r.mode,
                r.action,
                r.percept.observation if r.percept else "HALT",
                str(r.percept.reward) if r.percept else "",
                repr(r.v_star),
                repr(r.v_pi),
                repr(r.regret),
                "" if r.v_info is None else repr(r.v_info),
                *(repr(w) for w in r.posterior),
            ]
        )
    return buf.getvalue()


def trace_summary(trace: EpisodeTrace) -> dict:
    n = len(trace)
    points = checkpoints(n)
    return {
        "true_env": trace.true_env,
        "seed": trace.seed,
        "steps": n,
        "halted": trace.halted,
        "wao_metric": {str(k): wao_metric(trace, k) for k in points},
        "exploration_density": {
            str(k): _frac_str(exploration_density(trace, k)) for k in points
        },
        "posterior_on_truth": trace.posterior_on_truth() if n else None,
    }


def _frac_str(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


def summary_json(trace: EpisodeTrace) -> str:
    return json.dumps(trace_summary(trace), indent=2, sort_keys=True) + "\n"
