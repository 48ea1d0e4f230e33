"""Long-run average policy payoffs and the induced static payoff maps.

The average payoff of a policy u at a fixed state-action distribution is the
stationary-weighted reward sum(eta_u(s) * r(s, u(s), mu_sa)).  Stacking
these per class in canonical policy order gives the payoff map F(mu); the
steady-state payoff map evaluates F at the stationary lift of a policy
marginal, where each policy's mass is spread over states by its stationary
distribution.
"""

from __future__ import annotations

import numpy as np

from ._compile import compile_game
from .game import (
    GameSpec,
    MarginalPolicyDist,
    StateActionDist,
    StatePolicyDist,
    _readonly,
    aggregate_state_action,
)
from .markov import DeterministicPolicy


class PayoffVector:
    """Per-class payoff entries in canonical policy order."""

    def __init__(self, blocks):
        self.blocks = tuple(_readonly(b) for b in blocks)

    def block(self, c: int) -> np.ndarray:
        return self.blocks[c]

    def to_vector(self) -> np.ndarray:
        return np.concatenate(self.blocks)

    def __repr__(self):
        return f"PayoffVector({[b.tolist() for b in self.blocks]})"


def average_payoff(spec: GameSpec, c: int, u: DeterministicPolicy,
                   mu_sa: StateActionDist) -> float:
    """Long-run average reward of one policy at a fixed state-action dist."""
    comp = compile_game(spec)
    cc = comp.classes[c]
    table = cc.reward.table(mu_sa.blocks)
    eta = cc.eta[u.index]
    picks = table[np.arange(len(eta)), cc.assign[u.index]]
    return float(eta @ picks)


def payoff_map(mu: StatePolicyDist, spec: GameSpec) -> PayoffVector:
    """Payoff of every policy of every class at mu (through aggregation)."""
    mu_sa = aggregate_state_action(mu, spec)
    return payoff_map_sa(mu_sa, spec)


def payoff_map_sa(mu_sa: StateActionDist, spec: GameSpec) -> PayoffVector:
    comp = compile_game(spec)
    blocks = []
    for cc in comp.classes:
        table = cc.reward.table(mu_sa.blocks)
        p = table.shape[0]
        picks = table[np.arange(p)[None, :], cc.assign]  # (n, p)
        blocks.append(np.einsum("up,up->u", cc.eta, picks))
    return PayoffVector(blocks)


def stationary_lift(x: MarginalPolicyDist, spec: GameSpec) -> StatePolicyDist:
    """Spread each policy's marginal mass over states by its stationary law."""
    comp = compile_game(spec)
    blocks = []
    for c, cc in enumerate(comp.classes):
        blocks.append(_readonly(cc.eta.T * x.block(c)))  # (p, n)
    return StatePolicyDist(tuple(blocks))


def steady_state_payoff(x: MarginalPolicyDist, spec: GameSpec) -> PayoffVector:
    """Payoff map evaluated at the stationary lift of x."""
    return payoff_map(stationary_lift(x, spec), spec)


def excess_payoff(f_c: np.ndarray, sigma_c: np.ndarray, mass: float = 1.0) -> np.ndarray:
    """Payoffs relative to the sigma-weighted class average.

    The weighted mean of the output is zero: sigma @ result == 0.
    """
    f_c = np.asarray(f_c, dtype=float)
    sigma_c = np.asarray(sigma_c, dtype=float)
    if f_c.shape != sigma_c.shape:
        raise ValueError(
            f"payoff vector shape {f_c.shape} does not match marginal "
            f"shape {sigma_c.shape}"
        )
    return f_c - (f_c @ sigma_c) / mass
