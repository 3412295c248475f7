"""Expectimax planning for entropy-, information- and reward-seeking values.

The planner walks the tree of future (action, percept) pairs from a
:class:`~uailab.environments.MixtureNode`.  Nodes are hashable, so identical
belief states reached along different paths share one evaluation.  With
``exact=True`` probabilities stay Fractions and only logarithms and the final
sums are floats; ``exact=False`` runs the same recursion in double precision.

Leaf functionals of the knowledge-seeking values are not additive over time
for semimeasures, so those recursions carry the path masses explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from uailab.environments import (
    Action,
    Environment,
    EnvironmentMixture,
    History,
    MixtureNode,
)
from uailab.errors import DeadEnd, ResourceLimitError
from uailab.values.discount import DiscountSchedule, effective_horizon

TIE_TOLERANCE = 1e-12
MIN_SLACK = 1e-12
MAX_TREE = 10**7
# float-mode posterior grid: paths reaching the same exact posterior share a
# memo entry, and weights below half a quantum are dropped
QUANTUM = 2.0**-48

Policy = Callable[[History], Action]


@dataclass(frozen=True)
class ValueKind:
    """Which value function to plan for.

    ``model`` is a mixture for entropy/information and an environment or a
    mixture for reward.  ``normalized`` selects ``xi_norm`` over raw ``xi``
    for the entropy value.
    """

    tag: str
    model: EnvironmentMixture | Environment
    normalized: bool = False
    discount: DiscountSchedule | None = None

    def __post_init__(self):
        if self.tag not in ("entropy", "info", "reward"):
            raise ValueError(f"unknown value kind {self.tag!r}")
        if self.tag in ("entropy", "info") and not isinstance(self.model, EnvironmentMixture):
            raise TypeError(f"{self.tag} value needs an EnvironmentMixture")
        if self.tag == "reward" and self.discount is None:
            raise ValueError("reward value needs a discount schedule")

    @classmethod
    def entropy(cls, mix, normalized=False) -> ValueKind:
        return cls("entropy", mix, normalized)

    @classmethod
    def info(cls, mix) -> ValueKind:
        return cls("info", mix)

    @classmethod
    def reward(cls, rho, discount) -> ValueKind:
        return cls("reward", rho, discount=discount)

    @property
    def mixture(self) -> EnvironmentMixture:
        if isinstance(self.model, EnvironmentMixture):
            return self.model
        return as_mixture(self.model)


_SINGLETONS: dict[int, EnvironmentMixture] = {}


def as_mixture(env: Environment) -> EnvironmentMixture:
    """View a single environment as a one-member mixture with weight 1."""
    key = id(env)
    mix = _SINGLETONS.get(key)
    if mix is None or mix.members[0] is not env:
        mix = EnvironmentMixture([env], [Fraction(1)], env.actions, env.percepts)
        _SINGLETONS[key] = mix
    return mix


@dataclass
class PlanResult:
    value: float
    best_action: Action
    per_action_values: dict[Action, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "best_action": self.best_action,
            "per_action_values": dict(self.per_action_values),
        }


def ordered_actions(actions) -> list[Action]:
    """Actions in tie-break order (lexicographic)."""
    return sorted(actions, key=str)


def pick_best(values: dict[Action, float]) -> Action:
    top = max(values.values())
    for a in ordered_actions(values):
        if values[a] >= top - TIE_TOLERANCE:
            return a
    raise AssertionError("unreachable")


def _log2(q) -> float:
    if isinstance(q, Fraction):
        return math.log2(q.numerator) - math.log2(q.denominator)
    return math.log2(q)


def _neg_plogp(p) -> float:
    return 0.0 if p == 0 else -float(p) * _log2(p)


class Planner:
    """Memoizing expectimax over one mixture.

    A planner may be reused across calls (the agent keeps one per run); the
    memo tables are keyed on complete belief states and remaining depth.
    """

    def __init__(self, mix: EnvironmentMixture, exact: bool = True, max_nodes: int = MAX_TREE):
        self.mix = mix
        self.exact = exact
        self.max_nodes = max_nodes
        self.actions = ordered_actions(mix.actions)
        self._memo: dict = {}
        self.expanded = 0

    def clear(self) -> None:
        self._memo.clear()

    def _tick(self) -> None:
        self.expanded += 1
        if self.expanded > self.max_nodes:
            raise ResourceLimitError(f"planner expanded more than {self.max_nodes} nodes")

    def _num(self, q):
        return q if self.exact else float(q)

    def snap(self, node: MixtureNode) -> MixtureNode:
        """Round float posterior weights onto the ``QUANTUM`` grid."""
        if self.exact:
            return node
        return MixtureNode(node.states, tuple(round(w / QUANTUM) * QUANTUM for w in node.weights))

    # -- tree expansion ---------------------------------------------------

    def children(self, node: MixtureNode, action: Action, normalized: bool = False):
        key = ("c", node, action)
        out = self._memo.get(key)
        if out is None:
            out = self.mix.expand(node, action, exact=self.exact)
            if not self.exact:
                out = [(e, p, self.snap(c)) for e, p, c in out]
            self._memo[key] = out
        if normalized:
            total = sum(p for _, p, _ in out)
            if not total:
                raise DeadEnd(f"normalizer vanishes under action {action!r}")
            out = [(e, p / total, c) for e, p, c in out]
        return out

    # -- reward -----------------------------------------------------------

    def reward_q(self, node, discount: DiscountSchedule, t: int, depth: int,
                 policy: Policy | None = None, history: History | None = None):
        """Per-action normalized truncated reward values at ``node``.

        ``Gamma_t V_t = gamma(t) r_t + Gamma_(t+1) V_(t+1)`` summed over
        ``depth`` steps.  With ``policy`` only its action is evaluated.
        """
        c_now, c_next = discount.step_weights(t)
        c_now, c_next = self._num(c_now), self._num(c_next)
        acts = [policy(history)] if policy is not None else self.actions
        q = {}
        for a in acts:
            total = 0
            for e, p, child in self.children(node, a):
                cont = 0
                if depth > 1 and c_next:
                    h2 = history.extend(a, e) if policy is not None else None
                    cont = self._reward_v(child, discount, t + 1, depth - 1, policy, h2)
                total += p * (c_now * self._num(e.reward) + c_next * cont)
            q[a] = total
        return q

    def _reward_v(self, node, discount, t, depth, policy=None, history=None):
        if depth <= 0:
            return 0
        if policy is not None:
            return self.reward_q(node, discount, t, depth, policy, history)[policy(history)]
        key = ("r", node, depth, None if discount.stationary else t)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        self._tick()
        v = max(self.reward_q(node, discount, t, depth).values())
        self._memo[key] = v
        return v

    # -- entropy ----------------------------------------------------------

    def entropy_q(self, node, depth: int, normalized: bool, mass=1,
                  policy: Policy | None = None, history: History | None = None):
        acts = [policy(history)] if policy is not None else self.actions
        q = {}
        for a in acts:
            total = 0.0
            for e, p, child in self.children(node, a, normalized):
                h2 = history.extend(a, e) if policy is not None else None
                total += self._entropy_w(child, mass * p, depth - 1, normalized, policy, h2)
            q[a] = total
        return q

    def _entropy_w(self, node, mass, depth, normalized, policy=None, history=None):
        if depth <= 0:
            return _neg_plogp(mass)
        if policy is not None:
            return self.entropy_q(node, depth, normalized, mass, policy, history)[policy(history)]
        key = ("h", node, mass, depth, normalized)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        self._tick()
        v = max(self.entropy_q(node, depth, normalized, mass).values())
        self._memo[key] = v
        return v

    # -- information ------------------------------------------------------

    def info_children(self, states, coeffs, masses, qmass, action):
        """Expand one action for the information value.

        ``masses[i]`` is member i's conditional mass of the path so far and
        ``qmass`` the normalized mixture's.  The raw mixture conditional uses
        posterior weights proportional to ``coeffs[i] * masses[i]``.
        """
        members = self.mix.members
        live = [c * m for c, m in zip(coeffs, masses)]
        rows = [
            members[i].step(states[i], action) if live[i] else {}
            for i in range(len(members))
        ]
        raw = []
        for e in self.mix.percepts:
            hits = [row.get(e) for row in rows]
            xe = sum(live[i] * self._num(h[0]) for i, h in enumerate(hits) if h)
            if xe:
                raw.append((e, xe, hits))
        norm = sum(xe for _, xe, _ in raw)
        if not norm:
            raise DeadEnd(f"normalizer vanishes under action {action!r}")
        out = []
        for e, xe, hits in raw:
            new_states = tuple(h[1] if h else None for h in hits)
            new_masses = tuple(
                masses[i] * self._num(h[0]) if h else 0 for i, h in enumerate(hits)
            )
            out.append((e, new_states, new_masses, qmass * xe / norm))
        return out

    def info_leaf(self, coeffs, masses, qmass) -> float:
        total = 0.0
        for c, m in zip(coeffs, masses):
            if c and m:
                total += float(c * m) * _log2(m / qmass)
        return total

    def info_q(self, states, coeffs, masses, qmass, depth,
               policy: Policy | None = None, history: History | None = None):
        acts = [policy(history)] if policy is not None else self.actions
        q = {}
        for a in acts:
            total = 0.0
            for e, st, ms, qm in self.info_children(states, coeffs, masses, qmass, a):
                h2 = history.extend(a, e) if policy is not None else None
                total += self._info_w(st, coeffs, ms, qm, depth - 1, policy, h2)
            q[a] = total
        return q

    def _info_w(self, states, coeffs, masses, qmass, depth, policy=None, history=None):
        if depth <= 0:
            return self.info_leaf(coeffs, masses, qmass)
        if policy is not None:
            return self.info_q(states, coeffs, masses, qmass, depth, policy, history)[
                policy(history)
            ]
        key = ("i", states, coeffs, masses, qmass, depth)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        self._tick()
        v = max(self.info_q(states, coeffs, masses, qmass, depth).values())
        self._memo[key] = v
        return v


def certified_reward_action(planner: Planner, node: MixtureNode, discount: DiscountSchedule,
                            t: int, eps) -> tuple[Action, dict[Action, float], int]:
    """Iterative deepening until some action is provably ``eps``-optimal.

    At depth ``d`` every action's infinite-horizon value lies in
    ``[Q_d(a), Q_d(a) + tail]`` with ``tail = Gamma_(t+d) / Gamma_t``.  The
    least action ``a`` with ``max_(b != a) (Q_d(b) + tail) - Q_d(a) < eps``
    is returned: no other action can beat it by ``eps`` or more.  The loop
    ends by ``d = H_t(eps/2)`` at the latest, where the leading action
    qualifies.  Returns ``(action, truncated values, depth)``.
    """
    eps = max(float(eps), MIN_SLACK)
    gamma_t = discount.Gamma(t)
    limit = max(1, effective_horizon(discount, t, Fraction(eps) / 2))
    for depth in range(1, limit + 1):
        q = {a: float(v) for a, v in planner.reward_q(node, discount, t, depth).items()}
        tail = float(discount.Gamma(t + depth) / gamma_t)
        for a in planner.actions:
            rival = max((q[b] for b in q if b != a), default=-math.inf)
            if rival + tail - q[a] < eps:
                return a, q, depth
    raise AssertionError("deepening must certify an action by H_t(eps/2)")


# -- public value functions --------------------------------------------------


def _check_depth(depth: int) -> int:
    if depth < 0:
        raise ValueError(f"lifetime ends before the current time step (depth {depth})")
    return depth


def info_coefficients(mix: EnvironmentMixture, h: History, exact: bool = True):
    """Root node and per-member factors ``w_nu nu(h) / xi_norm(h)``."""
    node, xi_h = mix.root(h)
    xi_norm_h = mix.normalized_mass(h)
    if xi_norm_h == 0:
        raise DeadEnd("xi_norm assigns zero mass to the history")
    coeffs = tuple(w * xi_h / xi_norm_h for w in node.weights)
    if not exact:
        coeffs = tuple(float(c) for c in coeffs)
    return node, coeffs


def _per_action(kind: ValueKind, h: History, depth: int, planner: Planner | None = None,
                policy: Policy | None = None, exact: bool = True) -> dict[Action, float]:
    mix = kind.mixture
    planner = planner or Planner(mix, exact=exact)
    t = h.t
    if kind.tag == "reward":
        if kind.discount.Gamma(t) == 0 or depth == 0:
            acts = [policy(h)] if policy else planner.actions
            return {a: 0.0 for a in acts}
        node = planner.snap(mix.root(h, exact=planner.exact)[0])
        q = planner.reward_q(node, kind.discount, t, depth, policy, h)
    elif kind.tag == "entropy":
        if depth == 0:
            return {a: 0.0 for a in ([policy(h)] if policy else planner.actions)}
        node = planner.snap(mix.root(h, exact=planner.exact)[0])
        q = planner.entropy_q(node, depth, kind.normalized, planner._num(1), policy, h)
    else:
        node, coeffs = info_coefficients(mix, h, planner.exact)
        if depth == 0:
            return {a: 0.0 for a in ([policy(h)] if policy else planner.actions)}
        one = planner._num(1)
        masses = tuple(one if c else 0 for c in coeffs)
        q = planner.info_q(node.states, coeffs, masses, one, depth, policy, h)
    return {a: float(v) for a, v in q.items()}


def optimal_value(kind: ValueKind, h: History, horizon: int,
                  planner: Planner | None = None, exact: bool = True) -> PlanResult:
    """Exact expectimax ``V* = sup_pi V^pi`` over ``horizon`` future steps."""
    q = _per_action(kind, h, _check_depth(horizon), planner, exact=exact)
    best = pick_best(q)
    return PlanResult(q[best] if horizon else 0.0, best, q)


def policy_value(kind: ValueKind, h: History, horizon: int, policy: Policy) -> float:
    """Value of an explicit policy over ``horizon`` future steps."""
    q = _per_action(kind, h, _check_depth(horizon), policy=policy)
    return next(iter(q.values()))


def entropy_value(mix: EnvironmentMixture, h: History, m: int,
                  policy: Policy | None = None, normalized: bool = False) -> float:
    """Entropy-seeking value with lifetime ``m``; optimal if no policy is given."""
    kind = ValueKind.entropy(mix, normalized)
    depth = _check_depth(m - h.t + 1)
    if policy is not None:
        return policy_value(kind, h, depth, policy)
    return optimal_value(kind, h, depth).value


def info_value(mix: EnvironmentMixture, h: History, m: int,
               policy: Policy | None = None) -> float:
    """Information-seeking value with lifetime ``m``; optimal if no policy is given."""
    kind = ValueKind.info(mix)
    depth = _check_depth(m - h.t + 1)
    if policy is not None:
        return policy_value(kind, h, depth, policy)
    return optimal_value(kind, h, depth).value


def reward_value(rho, discount: DiscountSchedule, h: History,
                 policy: Policy | None = None, eps_trunc=Fraction(1, 1000)) -> float:
    """Normalized discounted reward value truncated at ``H_t(eps_trunc)``.

    Rewards lie in [0, 1], so the dropped tail is at most ``eps_trunc``.
    Returns 0 when ``Gamma_t = 0``.
    """
    t = h.t
    if discount.Gamma(t) == 0:
        return 0.0
    kind = ValueKind.reward(rho, discount)
    depth = effective_horizon(discount, t, eps_trunc)
    if policy is not None:
        return policy_value(kind, h, depth, policy)
    return optimal_value(kind, h, depth).value


def eps_optimal_action(kind: ValueKind, h: History, eps, horizon: int | None = None,
                       planner: Planner | None = None, exact: bool = True) -> Action:
    """An action whose value is within ``eps`` of optimal.

    For the knowledge-seeking values and for reward with an explicit
    horizon the planner is exact and the least action with
    ``Q(a) > V* - eps`` is returned.  For reward without a horizon see
    :func:`certified_reward_action`.
    """
    eps = float(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if kind.tag == "reward" and horizon is None:
        d = kind.discount
        if d.Gamma(h.t) == 0:
            return ordered_actions(kind.mixture.actions)[0]
        planner = planner or Planner(kind.mixture, exact=exact)
        node = planner.snap(kind.mixture.root(h, exact=planner.exact)[0])
        return certified_reward_action(planner, node, d, h.t, eps)[0]
    if horizon is None:
        raise ValueError("knowledge-seeking values need an explicit horizon")
    q = _per_action(kind, h, _check_depth(horizon), planner, exact=exact)
    top = max(q.values())
    for a in ordered_actions(q):
        if q[a] > top - eps:
            return a
    raise AssertionError("unreachable")
