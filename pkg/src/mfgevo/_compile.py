"""Derived numeric tables for a validated game, computed once and cached.

Compilation enumerates policy sets, builds policy kernels and stationary
distributions, compiles rewards, and packs everything into the flat padded
arrays consumed by the acceleration kernels.  The cache is keyed by spec
identity; GameSpec is immutable after validation so this is safe.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np

from . import markov
from .game import GameSpec, require_valid
from .rewards import (
    KIND_CONGESTION,
    KIND_MAC,
    CompiledReward,
    CongestionStructure,
)


@dataclass(eq=False)
class CompiledClass:
    index: int
    policy_set: markov.PolicySet
    assign: np.ndarray          # (n, p) action index per policy/state
    policy_kernels: np.ndarray  # (n, p, p) [policy, next, current]
    eta: np.ndarray             # (n, p) stationary distribution per policy
    reward: CompiledReward

    @property
    def n_policies(self) -> int:
        return len(self.policy_set)


@dataclass(eq=False)
class CompiledGame:
    spec: GameSpec
    classes: list[CompiledClass]
    congestion: CongestionStructure | None

    _pack = None

    @property
    def policy_counts(self) -> tuple[int, ...]:
        return tuple(c.n_policies for c in self.classes)

    @property
    def all_builtin_rewards(self) -> bool:
        return all(c.reward.kind >= 0 for c in self.classes)

    def pack(self):
        """Flat padded arrays for the acceleration kernels (built lazily)."""
        if self._pack is None:
            self._pack = _build_pack(self)
        return self._pack


_CACHE: "weakref.WeakKeyDictionary[GameSpec, CompiledGame]" = weakref.WeakKeyDictionary()


def compile_game(spec: GameSpec, policy_cap: int = markov.DEFAULT_POLICY_CAP) -> CompiledGame:
    comp = _CACHE.get(spec)
    if comp is not None:
        return comp
    require_valid(spec)

    structure = None
    cong = [c for c in spec.classes if c.reward.family == "congestion"]
    if cong:
        resources = []
        for cls in cong:
            for r in cls.reward.params["resources"]:
                if r not in resources:
                    resources.append(r)
        structure = CongestionStructure(resources, cong[0].action_rate)
        for cls in cong:
            structure.add_class(
                cls.index, cls.n_actions, cls.action_index,
                cls.reward.params["usage"], cls.reward.params["rewards"],
            )

    classes = []
    for cls in spec.classes:
        pset = markov.enumerate_policies(cls, cap=policy_cap)
        n, p = len(pset), cls.n_states
        kernels = np.empty((n, p, p))
        eta = np.empty((n, p))
        for u in pset:
            kernels[u.index] = markov.policy_kernel(cls, u)
            eta[u.index] = markov.stationary_distribution(cls, u).probs
        params = dict(cls.reward.params)
        if cls.reward.family == "mac":
            params.setdefault("rate", cls.action_rate)
        reward = CompiledReward(
            type(cls.reward)(cls.reward.family, params, cls.reward.fn),
            cls.index, p, cls.n_actions, cls.state_index, cls.action_index,
            structure=structure, game=spec,
        )
        kernels.setflags(write=False)
        eta.setflags(write=False)
        classes.append(
            CompiledClass(cls.index, pset, pset.assign, kernels, eta, reward)
        )
    comp = CompiledGame(spec, classes, structure)
    _CACHE[spec] = comp
    return comp


def _build_pack(comp: CompiledGame):
    """Pad per-class tables into the tuple of arrays the kernels unpack.

    Layout (C = number of classes, maxima over classes):
      p, q, n          int64[C]     state/action/policy counts
      mass, lam_d, lam_r float64[C]
      eta              (C, nmax, pmax)
      assign           int64 (C, nmax, pmax)
      kern             (C, qmax, pmax, pmax)   [class, action, next, current]
      kern_cum         same, cumulative over the next-state axis
      r_kind           int64[C]   0 const, 1 tabular, 2 congestion, 3 mac
      r_table          (C, pmax, qmax)  static tables (const/tabular)
      usage            (C, qmax, R)     congestion usage indicators
      w0, w1           float64[R]       affine resource rewards
      cong_rate        float64
      power            (C, qmax)        mac transmit powers
      mac_sig2, mac_coef, mac_beta  float64[C]
    """
    spec = comp.spec
    C = spec.n_classes
    p = np.array([c.n_states for c in spec.classes], dtype=np.int64)
    q = np.array([c.n_actions for c in spec.classes], dtype=np.int64)
    n = np.array([c.n_policies for c in comp.classes], dtype=np.int64)
    pmax, qmax, nmax = int(p.max()), int(q.max()), int(n.max())
    mass = np.array([c.mass for c in spec.classes])
    lam_d = np.array([c.action_rate for c in spec.classes])
    lam_r = np.array([c.revision_rate for c in spec.classes])

    eta = np.zeros((C, nmax, pmax))
    assign = np.zeros((C, nmax, pmax), dtype=np.int64)
    kern = np.zeros((C, qmax, pmax, pmax))
    for c, cc in enumerate(comp.classes):
        eta[c, : n[c], : p[c]] = cc.eta
        assign[c, : n[c], : p[c]] = cc.assign
        kern[c, : q[c], : p[c], : p[c]] = spec.classes[c].kernel_array
    kern_cum = np.cumsum(kern, axis=2)

    r_kind = np.empty(C, dtype=np.int64)
    r_table = np.zeros((C, pmax, qmax))
    power = np.zeros((C, qmax))
    mac_sig2 = np.zeros(C)
    mac_coef = np.zeros(C)
    mac_beta = np.zeros(C)
    n_res = comp.congestion.n_resources if comp.congestion is not None else 0
    usage = np.zeros((C, qmax, max(n_res, 1)))
    w0 = np.zeros(max(n_res, 1))
    w1 = np.zeros(max(n_res, 1))
    cong_rate = comp.congestion.rate if comp.congestion is not None else 0.0
    if comp.congestion is not None and comp.congestion.all_affine:
        for k, r in enumerate(comp.congestion.resources):
            w0[k], w1[k] = comp.congestion.affine[r]

    for c, cc in enumerate(comp.classes):
        rw = cc.reward
        r_kind[c] = rw.kind
        if rw.static_table is not None:
            r_table[c, : p[c], : q[c]] = rw.static_table
            # static tables are handled by the tabular branch in the kernels
            r_kind[c] = 1
        elif rw.kind == KIND_CONGESTION:
            if not comp.congestion.all_affine:
                r_kind[c] = -1  # callable resource rewards: no fast path
            else:
                usage[c, : q[c], :n_res] = comp.congestion.usage[c]
        elif rw.kind == KIND_MAC:
            power[c, : q[c]] = rw.powers
            mac_sig2[c] = rw.sigma2
            mac_coef[c] = rw.coupling
            mac_beta[c] = rw.power_cost

    arrays = (p, q, n, mass, lam_d, lam_r, eta, assign, kern, kern_cum,
              r_kind, r_table, usage, w0, w1, np.float64(cong_rate),
              power, mac_sig2, mac_coef, mac_beta)
    for a in arrays:
        if isinstance(a, np.ndarray):
            a.setflags(write=False)
    return arrays


def pack_protocols(spec: GameSpec, protocols) -> tuple:
    """Numeric protocol codes per class for the kernels.

    Returns (kind int64[C], param float64[C]).  kind: 0 none, 1
    dissatisfaction, 2 pairwise-proportional imitation, 3 bnn, 4 smith;
    -1 marks a protocol without a fast path (custom evaluator).
    """
    from .revision import KERNEL_KIND

    kind = np.zeros(spec.n_classes, dtype=np.int64)
    param = np.zeros(spec.n_classes)
    for c, proto in enumerate(protocols):
        k = KERNEL_KIND.get(proto.family, -1)
        kind[c] = k
        if proto.family == "dissatisfaction":
            param[c] = proto.params["K"]
    return kind, param
