"""Game model: classes, validation, and distribution bookkeeping.

A game is a set of player classes.  Each class has a mass, independent
action/revision clock rates, a finite state set, per-state admissible action
sets, a column-stochastic transition kernel per action, and a reward.  Kernel
matrices are indexed ``[next_state, current_state]`` so each column of
``kernel[a]`` is the next-state distribution after taking ``a`` in the column
state.

Population distributions are dense per-class arrays:

* :class:`StatePolicyDist`  -- blocks of shape (n_states, n_policies)
* :class:`StateActionDist`  -- blocks of shape (n_states, n_actions)
* :class:`MarginalPolicyDist` -- blocks of shape (n_policies,)

Each class block carries total mass equal to the class mass.  Flat vector
views enumerate cells policy-major: (s1,u1), (s2,u1), ..., (s1,u2), ...
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidGameError
from .rewards import RewardSpec

MASS_TOL = 1e-12
KERNEL_TOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ClassSpec:
    """One player class: clocks, states, admissible actions, kernel, reward."""

    index: int
    mass: float
    action_rate: float
    revision_rate: float
    states: tuple[str, ...]
    admissible: dict[str, tuple[str, ...]]
    kernel: dict[str, np.ndarray]
    reward: RewardSpec

    @cached_property
    def actions(self) -> tuple[str, ...]:
        """Class action labels, ordered by first appearance over the states."""
        seen = []
        for s in self.states:
            for a in self.admissible.get(s, ()):
                if a not in seen:
                    seen.append(a)
        return tuple(seen)

    @cached_property
    def state_index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.states)}

    @cached_property
    def action_index(self) -> dict[str, int]:
        return {a: i for i, a in enumerate(self.actions)}

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @cached_property
    def admissible_mask(self) -> np.ndarray:
        mask = np.zeros((self.n_states, self.n_actions), dtype=bool)
        for s, acts in self.admissible.items():
            for a in acts:
                mask[self.state_index[s], self.action_index[a]] = True
        mask.setflags(write=False)
        return mask

    @cached_property
    def kernel_array(self) -> np.ndarray:
        """Stacked kernels, shape (n_actions, p, p), [action, next, current]."""
        p = self.n_states
        arr = np.zeros((self.n_actions, p, p))
        for a, ai in self.action_index.items():
            if a in self.kernel:
                arr[ai] = np.asarray(self.kernel[a], dtype=np.float64)
        arr.setflags(write=False)
        return arr


def make_class(index, mass, action_rate, revision_rate, states, admissible,
               kernel, reward) -> ClassSpec:
    """Build a ClassSpec from plain containers (lists, nested lists)."""
    return ClassSpec(
        index=int(index),
        mass=float(mass),
        action_rate=float(action_rate),
        revision_rate=float(revision_rate),
        states=tuple(states),
        admissible={s: tuple(v) for s, v in admissible.items()},
        kernel={a: np.asarray(m, dtype=np.float64) for a, m in kernel.items()},
        reward=reward,
    )


@dataclass(frozen=True, eq=False)
class GameSpec:
    """Ordered collection of classes with population mass normalized to 1."""

    classes: tuple[ClassSpec, ...]

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def __iter__(self):
        return iter(self.classes)

    @property
    def masses(self) -> np.ndarray:
        return np.array([c.mass for c in self.classes])


@dataclass(frozen=True)
class ValidationReport:
    """Everything wrong with a game definition; empty means usable."""

    issues: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.issues

    def __str__(self) -> str:
        if self.ok:
            return "valid game definition"
        return "invalid game definition:\n  " + "\n  ".join(self.issues)


def validate_game(spec: GameSpec, policy_cap: int = 4096) -> ValidationReport:
    """Check every structural invariant of a game definition.

    Covers kernel stochasticity on admissible columns, nonempty action sets,
    positive rates and masses, total mass one, contiguous class indices,
    reward well-formedness, and — through the chain analysis — a unique
    recurrent communicating class for every enumerable deterministic policy.
    """
    from . import markov

    issues: list[str] = []
    total_mass = 0.0
    for pos, cls in enumerate(spec.classes):
        tag = f"classes[{pos}]"
        if cls.index != pos:
            issues.append(f"{tag}: index {cls.index} not contiguous (expected {pos})")
        if not cls.mass > 0:
            issues.append(f"{tag}: mass must be positive, got {cls.mass}")
        total_mass += cls.mass
        if not cls.action_rate > 0:
            issues.append(f"{tag}: action_rate must be positive, got {cls.action_rate}")
        if not cls.revision_rate > 0:
            issues.append(
                f"{tag}: revision_rate must be positive, got {cls.revision_rate}"
            )
        if not cls.states:
            issues.append(f"{tag}: empty state set")
            continue
        if len(set(cls.states)) != len(cls.states):
            issues.append(f"{tag}: duplicate state labels")
        for s in cls.states:
            acts = cls.admissible.get(s, ())
            if not acts:
                issues.append(f"{tag}: state {s!r} has an empty action set")
        p = cls.n_states
        for s in cls.states:
            for a in cls.admissible.get(s, ()):
                if a not in cls.kernel:
                    issues.append(f"{tag}.kernel: no matrix for action {a!r}")
                    continue
                mat = np.asarray(cls.kernel[a], dtype=float)
                if mat.shape != (p, p):
                    issues.append(
                        f"{tag}.kernel.{a}: shape {mat.shape}, expected {(p, p)}"
                    )
                    continue
                col = mat[:, cls.state_index[s]]
                if (col < 0).any():
                    issues.append(
                        f"{tag}.kernel.{a}: negative entry in column "
                        f"{cls.state_index[s]} (state {s!r})"
                    )
                csum = float(col.sum())
                if abs(csum - 1.0) > KERNEL_TOL:
                    issues.append(
                        f"{tag}.kernel.{a}: column {cls.state_index[s]} "
                        f"(state {s!r}) sums to {csum:.12g}, expected 1"
                    )
        issues.extend(_validate_reward(cls, spec, tag))

    if abs(total_mass - 1.0) > MASS_TOL:
        issues.append(f"total class mass is {total_mass:.17g}, expected 1")

    if not issues:
        # chain analysis: every deterministic policy must have exactly one
        # recurrent communicating class
        for cls in spec.classes:
            try:
                pset = markov.enumerate_policies(cls, cap=policy_cap)
            except Exception as exc:  # cap exceeded
                issues.append(f"classes[{cls.index}]: {exc}")
                continue
            for u in pset:
                kern = markov.policy_kernel(cls, u)
                rec = markov.recurrent_classes(kern)
                if len(rec) != 1:
                    issues.append(
                        f"classes[{cls.index}]: policy {u.index} "
                        f"({u.assignment_map()}) induces {len(rec)} recurrent "
                        f"communicating classes; exactly one is required"
                    )
    return ValidationReport(tuple(issues))


def _validate_reward(cls: ClassSpec, spec: GameSpec, tag: str) -> list[str]:
    issues = []
    r = cls.reward
    if r.family == "tabular":
        values = r.params.get("values", {})
        for s in cls.states:
            for a in cls.admissible.get(s, ()):
                if s not in values or a not in values[s]:
                    issues.append(
                        f"{tag}.reward: tabular values missing entry ({s!r}, {a!r})"
                    )
    elif r.family == "congestion":
        resources = set(r.params.get("resources", ()))
        usage = r.params.get("usage", {})
        for a in cls.actions:
            if a not in usage:
                issues.append(f"{tag}.reward: congestion usage missing action {a!r}")
            else:
                for res in usage[a]:
                    if res not in resources:
                        issues.append(
                            f"{tag}.reward: usage of {a!r} references "
                            f"undeclared resource {res!r}"
                        )
        for res in resources:
            if res not in r.params.get("rewards", {}):
                issues.append(f"{tag}.reward: no reward function for resource {res!r}")
        rates = {c.action_rate for c in spec.classes
                 if c.reward.family == "congestion"}
        if len(rates) > 1:
            issues.append(
                f"{tag}.reward: congestion requires a common action rate "
                f"across congestion classes, got {sorted(rates)}"
            )
    elif r.family == "mac":
        if spec.n_classes != 1:
            issues.append(f"{tag}.reward: mac reward supports single-class games only")
        powers = r.params.get("powers", {})
        for a in cls.actions:
            if a not in powers:
                issues.append(f"{tag}.reward: mac powers missing action {a!r}")
    return issues


def require_valid(spec: GameSpec) -> None:
    """Raise InvalidGameError unless the spec validates cleanly (cached)."""
    report = getattr(spec, "_validation_cache", None)
    if report is None:
        report = validate_game(spec)
        object.__setattr__(spec, "_validation_cache", report)
    if not report.ok:
        raise InvalidGameError(report.issues)


# ---------------------------------------------------------------------------
# distributions


def _check_blocks(blocks, masses, tol, what):
    out = []
    for c, (b, m) in enumerate(zip(blocks, masses)):
        b = np.asarray(b, dtype=np.float64)
        if (b < -tol).any():
            raise ValueError(
                f"{what}: class {c} has a negative entry ({b.min():.3e})"
            )
        total = float(b.sum())
        if abs(total - m) > tol:
            raise ValueError(
                f"{what}: class {c} mass {total:.17g} differs from {m:.17g} "
                f"by more than {tol:g}"
            )
        out.append(_readonly(b))
    return tuple(out)


@dataclass(frozen=True, eq=False)
class StatePolicyDist:
    """Per-class nonnegative mass over (state, policy) cells."""

    blocks: tuple[np.ndarray, ...]

    def block(self, c: int) -> np.ndarray:
        return self.blocks[c]

    def to_vector(self) -> np.ndarray:
        """Flat policy-major cell enumeration, classes concatenated."""
        return np.concatenate([b.ravel(order="F") for b in self.blocks])

    def copy_mutable(self):
        return [b.copy() for b in self.blocks]

    def allclose(self, other, atol=0.0, rtol=0.0):
        return all(
            np.allclose(a, b, atol=atol, rtol=rtol)
            for a, b in zip(self.blocks, other.blocks)
        )

    def max_abs_diff(self, other) -> float:
        return max(
            float(np.max(np.abs(a - b)))
            for a, b in zip(self.blocks, other.blocks)
        )


@dataclass(frozen=True, eq=False)
class StateActionDist:
    """Per-class nonnegative mass over (state, action) cells."""

    blocks: tuple[np.ndarray, ...]

    def block(self, c: int) -> np.ndarray:
        return self.blocks[c]

    def to_vector(self) -> np.ndarray:
        return np.concatenate([b.ravel(order="F") for b in self.blocks])


@dataclass(frozen=True, eq=False)
class MarginalPolicyDist:
    """Per-class mass over policies (state dimension summed out)."""

    blocks: tuple[np.ndarray, ...]

    def block(self, c: int) -> np.ndarray:
        return self.blocks[c]

    def to_vector(self) -> np.ndarray:
        return np.concatenate(self.blocks)


def state_policy_dist(spec: GameSpec, blocks, tol: float = MASS_TOL) -> StatePolicyDist:
    """Checked constructor: shapes against the policy sets, mass per class."""
    from ._compile import compile_game

    comp = compile_game(spec)
    blocks = [np.asarray(b, dtype=np.float64) for b in blocks]
    if len(blocks) != spec.n_classes:
        raise ValueError(f"expected {spec.n_classes} class blocks, got {len(blocks)}")
    for c, b in enumerate(blocks):
        want = (spec.classes[c].n_states, comp.classes[c].n_policies)
        if b.shape != want:
            raise ValueError(
                f"class {c} block has shape {b.shape}, expected {want}"
            )
    return StatePolicyDist(_check_blocks(blocks, spec.masses, tol, "state-policy dist"))


def state_policy_dist_from_vector(spec: GameSpec, vec, tol: float = MASS_TOL) -> StatePolicyDist:
    """Inverse of StatePolicyDist.to_vector (policy-major flat cells)."""
    from ._compile import compile_game

    comp = compile_game(spec)
    vec = np.asarray(vec, dtype=np.float64)
    blocks = []
    at = 0
    for c, cls in enumerate(spec.classes):
        p, n = cls.n_states, comp.classes[c].n_policies
        blocks.append(vec[at:at + p * n].reshape((p, n), order="F"))
        at += p * n
    if at != vec.size:
        raise ValueError(f"vector has {vec.size} entries, expected {at}")
    return state_policy_dist(spec, blocks, tol=tol)


def state_action_dist(spec: GameSpec, blocks, tol: float = MASS_TOL) -> StateActionDist:
    blocks = [np.asarray(b, dtype=np.float64) for b in blocks]
    for c, b in enumerate(blocks):
        cls = spec.classes[c]
        if b.shape != (cls.n_states, cls.n_actions):
            raise ValueError(
                f"class {c} block has shape {b.shape}, expected "
                f"{(cls.n_states, cls.n_actions)}"
            )
        bad = np.abs(b)[~cls.admissible_mask]
        if bad.size and bad.max() > 0:
            raise ValueError(
                f"class {c} places mass on an inadmissible (state, action) pair"
            )
    return StateActionDist(_check_blocks(blocks, spec.masses, tol, "state-action dist"))


def marginal_policy_dist(spec: GameSpec, blocks, tol: float = MASS_TOL) -> MarginalPolicyDist:
    from ._compile import compile_game

    comp = compile_game(spec)
    blocks = [np.asarray(b, dtype=np.float64) for b in blocks]
    for c, b in enumerate(blocks):
        if b.shape != (comp.classes[c].n_policies,):
            raise ValueError(
                f"class {c} marginal has shape {b.shape}, expected "
                f"({comp.classes[c].n_policies},)"
            )
    return MarginalPolicyDist(
        _check_blocks(blocks, spec.masses, tol, "policy marginal")
    )


def uniform_state_policy_dist(spec: GameSpec) -> StatePolicyDist:
    """Mass spread evenly over every (state, policy) cell of each class."""
    from ._compile import compile_game

    comp = compile_game(spec)
    blocks = []
    for c, cls in enumerate(spec.classes):
        p, n = cls.n_states, comp.classes[c].n_policies
        blocks.append(np.full((p, n), cls.mass / (p * n)))
    return StatePolicyDist(tuple(_readonly(b) for b in blocks))


# ---------------------------------------------------------------------------
# bookkeeping operations


def aggregate_state_action(mu: StatePolicyDist, spec: GameSpec) -> StateActionDist:
    """Project state-policy masses onto state-action cells.

    Linear in mu: the (s, a) mass is the sum of mu[s, u] over policies whose
    action at s is a.  Inadmissible pairs receive exactly zero.
    """
    from ._compile import compile_game

    comp = compile_game(spec)
    blocks = []
    for c, cls in enumerate(spec.classes):
        block = mu.block(c)
        if block.shape != (cls.n_states, comp.classes[c].n_policies):
            raise ValueError(
                f"class {c} block has shape {block.shape}, expected "
                f"{(cls.n_states, comp.classes[c].n_policies)}"
            )
        out = np.zeros((cls.n_states, cls.n_actions))
        assign = comp.classes[c].assign  # (n, p)
        for u in range(assign.shape[0]):
            for s in range(cls.n_states):
                out[s, assign[u, s]] += block[s, u]
        blocks.append(_readonly(out))
    return StateActionDist(tuple(blocks))


def marginal_policy(mu: StatePolicyDist) -> MarginalPolicyDist:
    """Sum out the state dimension of each class block."""
    return MarginalPolicyDist(
        tuple(_readonly(b.sum(axis=0)) for b in mu.blocks)
    )


def reward_eval(spec: GameSpec, c: int, state: str, action: str,
                mu_sa: StateActionDist) -> float:
    """Single-stage reward of class c at (state, action) under mu_sa."""
    from ._compile import compile_game

    comp = compile_game(spec)
    cls = spec.classes[c]
    if action not in cls.admissible.get(state, ()):
        raise ValueError(
            f"action {action!r} is not admissible in state {state!r} of class {c}"
        )
    table = comp.classes[c].reward.table(mu_sa.blocks)
    return float(table[cls.state_index[state], cls.action_index[action]])
