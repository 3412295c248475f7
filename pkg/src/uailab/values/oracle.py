"""Brute-force policy enumeration, independent of the expectimax planner.

Every deterministic policy over ``horizon`` steps is an assignment of one
action to each percept prefix of length ``0 .. horizon-1``.  For each action
sequence and percept sequence the literal value contribution is tabulated
from joint masses ``rho(h ae_1:k)`` (no conditional recursion), and all
policies are scored at once with numpy fancy indexing.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

from uailab.environments import EnvironmentMixture, History
from uailab.errors import ResourceLimitError
from uailab.values.planning import PlanResult, ValueKind, ordered_actions, pick_best

MAX_POLICIES = 2**16


def _extend(h: History, acts, percs) -> History:
    for a, e in zip(acts, percs):
        h = h.extend(a, e)
    return h


def _entropy_table(kind: ValueKind, h, acts_list, percs_list, k):
    mix: EnvironmentMixture = kind.model
    base = mix.normalized_mass(h) if kind.normalized else mix.mass(h)
    tab = np.zeros((len(acts_list), len(percs_list)))
    for i, acts in enumerate(acts_list):
        for j, percs in enumerate(percs_list):
            g = _extend(h, acts, percs)
            joint = mix.normalized_mass(g) if kind.normalized else mix.mass(g)
            p = Fraction(joint) / base
            if p:
                tab[i, j] = -float(p) * math.log2(p)
    return tab


def _info_table(kind: ValueKind, h, acts_list, percs_list, k):
    mix: EnvironmentMixture = kind.model
    norm_h = mix.normalized_mass(h)
    member_h = [m.mass(h) for m in mix.members]
    tab = np.zeros((len(acts_list), len(percs_list)))
    for i, acts in enumerate(acts_list):
        for j, percs in enumerate(percs_list):
            g = _extend(h, acts, percs)
            norm_g = mix.normalized_mass(g)
            total = 0.0
            for m, w, mh in zip(mix.members, mix.weights, member_h):
                mg = m.mass(g)
                if mg == 0 or mh == 0:
                    continue
                ratio = (mg / mh) / (norm_g / norm_h)
                total += float(w * mg / norm_h) * math.log2(ratio)
            tab[i, j] = total
    return tab


def _reward_table(kind: ValueKind, h, acts_list, percs_list, k):
    rho = kind.model
    disc = kind.discount
    t = h.t
    base = rho.mass(h)
    scale = disc.gamma(t + k - 1) / disc.Gamma(t)
    tab = np.zeros((len(acts_list), len(percs_list)))
    for i, acts in enumerate(acts_list):
        for j, percs in enumerate(percs_list):
            p = rho.mass(_extend(h, acts, percs)) / base
            tab[i, j] = float(p * scale * percs[-1].reward)
    return tab


def brute_force_oracle(kind: ValueKind, h: History, horizon: int) -> PlanResult:
    """Optimal value and per-first-action values by exhaustive policy search."""
    mix = kind.mixture
    actions = ordered_actions(mix.actions)
    percepts = list(mix.percepts)
    if horizon == 0:
        return PlanResult(0.0, actions[0], {a: 0.0 for a in actions})
    if kind.tag == "reward" and kind.discount.Gamma(h.t) == 0:
        return PlanResult(0.0, actions[0], {a: 0.0 for a in actions})
    nA, nE = len(actions), len(percepts)
    # decision nodes: percept prefixes of length < horizon, breadth first
    nodes = {(): 0}
    for k in range(1, horizon):
        for seq in itertools.product(range(nE), repeat=k):
            nodes[seq] = len(nodes)
    count = nA ** len(nodes)
    if count > MAX_POLICIES:
        raise ResourceLimitError(f"{count} policies exceed cap {MAX_POLICIES}")
    policies = np.array(list(itertools.product(range(nA), repeat=len(nodes))), dtype=np.int64)
    if policies.ndim == 1:
        policies = policies.reshape(-1, len(nodes))

    table_fn = {"entropy": _entropy_table, "info": _info_table, "reward": _reward_table}[kind.tag]
    scores = np.zeros(len(policies))
    ks = [horizon] if kind.tag != "reward" else range(1, horizon + 1)
    for k in ks:
        acts_list = list(itertools.product(actions, repeat=k))
        percs_idx = list(itertools.product(range(nE), repeat=k))
        percs_list = [tuple(percepts[i] for i in seq) for seq in percs_idx]
        tab = table_fn(kind, h, acts_list, percs_list, k)
        for j, seq in enumerate(percs_idx):
            aidx = np.zeros(len(policies), dtype=np.int64)
            for step in range(k):
                aidx = aidx * nA + policies[:, nodes[seq[:step]]]
            scores += tab[aidx, j]
    per_action = {a: float(scores[policies[:, 0] == i].max()) for i, a in enumerate(actions)}
    best = pick_best(per_action)
    return PlanResult(per_action[best], best, per_action)
