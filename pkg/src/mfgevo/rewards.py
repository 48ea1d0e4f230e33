"""Single-stage reward families.

A reward is declared on a class as a :class:`RewardSpec` and compiled against
the class layout into a table evaluator: given the cross-class state-action
masses it returns the (state, action) reward table of the class.  The
serializable families are

``constant``
    the same value everywhere; params ``{"value": v}``.
``tabular``
    a fixed value per (state, action) pair, independent of the population;
    params ``{"values": {state: {action: v}}}``.
``congestion``
    each action uses a subset of shared resources and collects the sum of the
    per-resource rewards evaluated at the aggregate resource flows; params
    ``{"resources": [...], "usage": {action: [resource, ...]},
    "rewards": {resource: {"intercept": w0, "slope": w1}}}``.  Resource
    rewards may also be callables (then the spec is not serializable).
``mac``
    expected signal-to-interference-and-noise ratio of a transmission, minus
    a linear power cost; params ``{"powers": {action: P}, "sigma2": ...,
    "channel_gain": C, "power_cost": beta, "message_duration": T}``.  Only
    single-class games are supported.

A non-serializable ``custom`` family takes a callable
``fn(state_label, action_label, mu_sa_blocks, spec) -> float``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

FAMILIES = ("constant", "tabular", "congestion", "mac", "custom")

# numeric codes used by the compiled kernels; custom has no fast path
KIND_CONSTANT = 0
KIND_TABULAR = 1
KIND_CONGESTION = 2
KIND_MAC = 3
KIND_CUSTOM = -1


@dataclass(frozen=True, eq=False)
class RewardSpec:
    """Declarative reward attached to one class."""

    family: str
    params: dict = field(default_factory=dict)
    fn: Callable | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown reward family {self.family!r}")
        if self.family == "custom" and self.fn is None:
            raise ValueError("custom reward family requires fn")

    @property
    def serializable(self) -> bool:
        if self.family == "custom":
            return False
        if self.family == "congestion":
            return all(
                isinstance(w, dict) for w in self.params["rewards"].values()
            )
        return True


def constant_reward(value: float) -> RewardSpec:
    return RewardSpec("constant", {"value": float(value)})


def tabular_reward(values: dict) -> RewardSpec:
    return RewardSpec("tabular", {"values": values})


def congestion_reward(resources, usage, rewards) -> RewardSpec:
    return RewardSpec(
        "congestion",
        {"resources": list(resources), "usage": dict(usage), "rewards": dict(rewards)},
    )


def custom_reward(fn: Callable) -> RewardSpec:
    return RewardSpec("custom", {}, fn=fn)


def _affine(descr):
    """Resolve a per-resource reward descriptor into (value fn, antiderivative
    fn, affine coefficients or None)."""
    if isinstance(descr, dict):
        w0 = float(descr["intercept"])
        w1 = float(descr.get("slope", 0.0))
        value = lambda z: w0 + w1 * z
        integral = lambda z: w0 * z + 0.5 * w1 * z * z
        return value, integral, (w0, w1)
    if callable(descr):
        return descr, None, None
    raise ValueError(f"resource reward must be a dict or callable, got {descr!r}")


class CongestionStructure:
    """Cross-class congestion data shared by all compiled congestion rewards.

    Flows aggregate over every class whose reward family is congestion, so one
    shared structure is built per game.
    """

    def __init__(self, resources, rate):
        self.resources = list(resources)
        self.rate = float(rate)
        self.usage = {}          # class index -> (q_c, R) 0/1 float array
        self.value_fns = {}      # resource -> callable
        self.integral_fns = {}   # resource -> callable or None
        self.affine = {}         # resource -> (w0, w1) or None

    @property
    def n_resources(self):
        return len(self.resources)

    def add_class(self, class_index, n_actions, action_index, usage_map, rewards):
        mat = np.zeros((n_actions, self.n_resources))
        res_index = {r: k for k, r in enumerate(self.resources)}
        for action, used in usage_map.items():
            for r in used:
                mat[action_index[action], res_index[r]] = 1.0
        self.usage[class_index] = mat
        for r, descr in rewards.items():
            value, integral, affine = _affine(descr)
            if r in self.value_fns and self.affine.get(r) != affine:
                raise ValueError(
                    f"resource {r!r} has conflicting reward definitions across classes"
                )
            self.value_fns[r] = value
            self.integral_fns[r] = integral
            self.affine[r] = affine

    def flows(self, mu_sa_blocks):
        """Aggregate per-resource flows sigma_r at the given state-action masses."""
        sig = np.zeros(self.n_resources)
        for c, mat in self.usage.items():
            sig += mat.T @ mu_sa_blocks[c].sum(axis=0)
        return self.rate * sig

    def flows_from_action_mass(self, action_mass_by_class):
        sig = np.zeros(self.n_resources)
        for c, mat in self.usage.items():
            sig += mat.T @ action_mass_by_class[c]
        return self.rate * sig

    def resource_values(self, sig):
        return np.array(
            [self.value_fns[r](sig[k]) for k, r in enumerate(self.resources)]
        )

    def resource_integrals(self, sig):
        vals = np.empty(self.n_resources)
        for k, r in enumerate(self.resources):
            fn = self.integral_fns[r]
            if fn is None:
                # numeric antiderivative for callable resource rewards
                from scipy.integrate import quad

                vals[k], _ = quad(self.value_fns[r], 0.0, sig[k])
            else:
                vals[k] = fn(sig[k])
        return vals

    @property
    def all_affine(self):
        return all(self.affine[r] is not None for r in self.resources)


class CompiledReward:
    """Reward table evaluator for one class.

    ``table(mu_sa_blocks)`` returns the (p, q) reward table of the class at
    the given cross-class state-action masses.  ``partial_table`` returns the
    analytic derivative of that table with respect to one state-action mass
    entry, or None when no analytic form is available (custom family).
    """

    def __init__(self, spec, class_index, p, q, state_index, action_index,
                 structure=None, game=None):
        self.spec = spec
        self.class_index = class_index
        self.p = p
        self.q = q
        self.kind = {
            "constant": KIND_CONSTANT,
            "tabular": KIND_TABULAR,
            "congestion": KIND_CONGESTION,
            "mac": KIND_MAC,
            "custom": KIND_CUSTOM,
        }[spec.family]
        self.structure = structure
        self._game = game
        self._state_labels = sorted(state_index, key=state_index.get)
        self._action_labels = sorted(action_index, key=action_index.get)

        if spec.family == "constant":
            self.value = float(spec.params["value"])
            self.static_table = np.full((p, q), self.value)
        elif spec.family == "tabular":
            tab = np.zeros((p, q))
            for s, row in spec.params["values"].items():
                for a, v in row.items():
                    tab[state_index[s], action_index[a]] = float(v)
            self.static_table = tab
        elif spec.family == "mac":
            powers = np.zeros(q)
            for a, val in spec.params["powers"].items():
                powers[action_index[a]] = float(val)
            self.powers = powers
            self.sigma2 = float(spec.params["sigma2"])
            self.power_cost = float(spec.params["power_cost"])
            # lambda_d * T * C, the coupling coefficient of the interference term
            self.coupling = (
                float(spec.params["rate"])
                * float(spec.params["message_duration"])
                * float(spec.params["channel_gain"])
            )
            self.static_table = None
        else:
            self.static_table = None

    @property
    def is_static(self) -> bool:
        return self.static_table is not None

    def table(self, mu_sa_blocks) -> np.ndarray:
        if self.static_table is not None:
            return self.static_table.copy()
        if self.kind == KIND_CONGESTION:
            sig = self.structure.flows(mu_sa_blocks)
            per_action = self.structure.usage[self.class_index] @ \
                self.structure.resource_values(sig)
            return np.tile(per_action, (self.p, 1))
        if self.kind == KIND_MAC:
            total_power = float(self.powers @ mu_sa_blocks[self.class_index].sum(axis=0))
            den = self.sigma2 + self.coupling * total_power
            return self.powers / den - self.power_cost * self.powers \
                + np.zeros((self.p, 1))
        # custom
        out = np.empty((self.p, self.q))
        for si, s in enumerate(self._state_labels):
            for ai, a in enumerate(self._action_labels):
                out[si, ai] = self.spec.fn(s, a, mu_sa_blocks, self._game)
        return out

    def partial_table(self, mu_sa_blocks, d_class, d_state, d_action):
        """d table / d mu_sa[d_class][d_state, d_action], analytic."""
        if self.static_table is not None:
            return np.zeros((self.p, self.q))
        if self.kind == KIND_CONGESTION:
            if not self.structure.all_affine:
                return None
            slopes = np.array(
                [self.structure.affine[r][1] for r in self.structure.resources]
            )
            if d_class not in self.structure.usage:
                return np.zeros((self.p, self.q))
            u_other = self.structure.usage[d_class][d_action]
            per_action = self.structure.usage[self.class_index] @ \
                (slopes * self.structure.rate * u_other)
            return np.tile(per_action, (self.p, 1))
        if self.kind == KIND_MAC:
            if d_class != self.class_index:
                return np.zeros((self.p, self.q))
            total_power = float(self.powers @ mu_sa_blocks[self.class_index].sum(axis=0))
            den = self.sigma2 + self.coupling * total_power
            coef = -self.coupling * self.powers[d_action] / (den * den)
            return coef * self.powers + np.zeros((self.p, 1))
        return None
