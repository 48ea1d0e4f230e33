"""Deterministic policies and the Markov chains they induce.

Policies are total maps state -> admissible action, enumerated in canonical
order (lexicographic over states, actions in class action order within each
state).  The chain induced by a policy has kernel column s equal to the
kernel column of the action the policy picks at s, generator
``action_rate * (kernel - I)``, and — when it has exactly one recurrent
communicating class — a unique stationary distribution supported on it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import EnumerationCapError, MultipleRecurrentClassesError
from .game import ClassSpec

DEFAULT_POLICY_CAP = 4096
STATIONARY_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DeterministicPolicy:
    """A total state -> action assignment of one class."""

    class_index: int
    index: int
    actions: tuple[int, ...]  # action index per state index

    def action_at(self, state_index: int) -> int:
        return self.actions[state_index]

    def assignment_map(self, cls: ClassSpec | None = None) -> dict:
        if cls is None:
            return {s: a for s, a in enumerate(self.actions)}
        return {cls.states[s]: cls.actions[a] for s, a in enumerate(self.actions)}


@dataclass(frozen=True, eq=False)
class PolicySet:
    """All deterministic policies of a class, canonically ordered."""

    class_index: int
    policies: tuple[DeterministicPolicy, ...]

    def __len__(self) -> int:
        return len(self.policies)

    def __iter__(self):
        return iter(self.policies)

    def __getitem__(self, i: int) -> DeterministicPolicy:
        return self.policies[i]

    @property
    def assign(self) -> np.ndarray:
        """(n_policies, n_states) action-index table."""
        arr = np.array([u.actions for u in self.policies], dtype=np.int64)
        arr.setflags(write=False)
        return arr


@dataclass(frozen=True, eq=False)
class StationaryDistribution:
    """Stationary state law of a policy-induced chain."""

    class_index: int
    policy_index: int
    probs: np.ndarray
    recurrent: tuple[int, ...]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.probs, dtype=dtype)


def enumerate_policies(cls: ClassSpec, cap: int = DEFAULT_POLICY_CAP) -> PolicySet:
    """Enumerate every deterministic policy of a class.

    The count is the product of per-state admissible-set sizes; enumeration
    fails loudly above ``cap`` since downstream vectors are dense in it.
    """
    per_state = []
    cardinality = 1
    for s in cls.states:
        acts = [cls.action_index[a] for a in cls.admissible[s]]
        per_state.append(acts)
        cardinality *= len(acts)
    if cardinality > cap:
        raise EnumerationCapError(cls.index, cardinality, cap)
    policies = tuple(
        DeterministicPolicy(cls.index, i, combo)
        for i, combo in enumerate(itertools.product(*per_state))
    )
    return PolicySet(cls.index, policies)


def policy_kernel(cls: ClassSpec, u: DeterministicPolicy) -> np.ndarray:
    """Column-stochastic chain kernel induced by u: column s is the kernel
    column of the action u takes at s."""
    if u.class_index != cls.index:
        raise ValueError(
            f"policy belongs to class {u.class_index}, not {cls.index}"
        )
    p = cls.n_states
    kern = np.empty((p, p))
    arr = cls.kernel_array
    for s in range(p):
        kern[:, s] = arr[u.actions[s], :, s]
    return kern


def generator(cls: ClassSpec, u: DeterministicPolicy) -> np.ndarray:
    """Continuous-time rate matrix action_rate * (kernel - I); columns sum
    to zero, off-diagonal nonnegative."""
    kern = policy_kernel(cls, u)
    return cls.action_rate * (kern - np.eye(cls.n_states))


def recurrent_classes(kernel: np.ndarray) -> list[tuple[int, ...]]:
    """Closed communicating classes of the positive-support digraph.

    Decomposes the support graph (edge s -> s' iff kernel[s', s] > 0) into
    strongly connected components; a component is recurrent iff no support
    edge leaves it.  States outside the returned classes are transient.
    Support uses entries > 0 exactly: kernel entries are user data, not
    computed, so no thresholding.
    """
    kernel = np.asarray(kernel, dtype=float)
    p = kernel.shape[0]
    # graph[i, j] = edge i -> j; kernel[s', s] > 0 means s -> s'
    graph = sp.csr_matrix((kernel > 0).T)
    n_comp, labels = connected_components(graph, directed=True, connection="strong")
    comps = [[] for _ in range(n_comp)]
    for s, lab in enumerate(labels):
        comps[lab].append(s)
    out = []
    for lab, members in enumerate(comps):
        closed = True
        for s in members:
            targets = np.nonzero(kernel[:, s] > 0)[0]
            if any(labels[t] != lab for t in targets):
                closed = False
                break
        if closed:
            out.append(tuple(members))
    out.sort(key=lambda c: c[0])
    return out


def stationary_distribution(cls: ClassSpec, u: DeterministicPolicy) -> StationaryDistribution:
    """Unique stationary state distribution of the chain induced by u.

    Solves the balance equations restricted to the (single) recurrent class,
    with one balance row replaced by the normalization row; transient states
    carry exactly zero mass.  Raises when the chain has several recurrent
    classes, since the stationary law is then not unique.
    """
    kern = policy_kernel(cls, u)
    rec = recurrent_classes(kern)
    if len(rec) != 1:
        raise MultipleRecurrentClassesError(cls.index, u.index, len(rec))
    members = list(rec[0])
    sub = kern[np.ix_(members, members)]
    k = len(members)
    a = sub - np.eye(k)
    a[-1, :] = 1.0
    rhs = np.zeros(k)
    rhs[-1] = 1.0
    eta_rec = np.linalg.solve(a, rhs)
    eta = np.zeros(cls.n_states)
    eta[members] = eta_rec
    # tiny solver noise can leave harmless negatives on the order of eps
    eta = np.clip(eta, 0.0, None)
    eta /= eta.sum()
    residual = float(np.max(np.abs(cls.action_rate * (kern @ eta - eta))))
    if residual > STATIONARY_RESIDUAL_TOL:
        raise ArithmeticError(
            f"stationary solve residual {residual:.3e} exceeds "
            f"{STATIONARY_RESIDUAL_TOL:g} for policy {u.index} of class {cls.index}"
        )
    eta.setflags(write=False)
    return StationaryDistribution(cls.index, u.index, eta, rec[0])


def power_iteration_oracle(kernel: np.ndarray, steps: int = 100_000) -> np.ndarray:
    """Independent stationary-distribution oracle.

    Iterates the half-lazy jump chain (I + kernel)/2 from the uniform
    distribution.  The lazy chain is aperiodic with the same stationary
    vector, so the iteration converges geometrically even on periodic
    supports.
    """
    kernel = np.asarray(kernel, dtype=float)
    p = kernel.shape[0]
    lazy = 0.5 * (np.eye(p) + kernel)
    v = np.full(p, 1.0 / p)
    for _ in range(steps):
        v = lazy @ v
    return v
