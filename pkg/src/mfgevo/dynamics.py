"""The coupled state/revision mean-field ODE.

The time derivative of the state-policy masses splits into a state flow
(each policy's mass moves along that policy's own chain at the action rate)
and a revision flow (mass moves across policies within each state at the
protocol switch rates):

    d mu[s,u]/dt = f_d[s,u] + f_r[s,u]
    f_d[s,u] = lam_d * (sum_s' kern_u[s, s'] mu[s',u] - mu[s,u])
    f_r[s,u] = sum_v mu[s,v] rho[v,u] - mu[s,u] sum_v rho[u,v]

State flows conserve each policy's mass; revision flows conserve each
state's mass; the sum V is the vector field integrated here with classical
fixed-step RK4 (the field is smooth and globally Lipschitz, stiffness is
absent at this scale).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ._compile import compile_game, pack_protocols
from ._kernels import get_backend
from .errors import IntegrationAbort
from .game import GameSpec, StatePolicyDist, _readonly
from .payoffs import PayoffVector, payoff_map
from .revision import RevisionProtocol, eval_rates, normalize_protocols

DEFAULT_CLIP_TOL = 1e-9
DEFAULT_REST_TOL = 1e-10


def dynamic_flow(mu: StatePolicyDist, spec: GameSpec) -> list[np.ndarray]:
    """State flow f_d per class; zero iff each policy's conditional state
    distribution is stationary for its own chain."""
    comp = compile_game(spec)
    out = []
    for c, cls in enumerate(spec.classes):
        block = mu.block(c)
        kerns = comp.classes[c].policy_kernels  # (n, p, p) = [u, next, cur]
        flow = np.einsum("ust,tu->su", kerns, block) - block
        out.append(cls.action_rate * flow)
    return out


def revision_flow(mu: StatePolicyDist, protocols, spec: GameSpec) -> list[np.ndarray]:
    """Revision flow f_r per class; per-state mass conserved across policies."""
    protocols = normalize_protocols(spec, protocols)
    F = payoff_map(mu, spec)
    out = []
    for c, cls in enumerate(spec.classes):
        block = mu.block(c)
        sigma = block.sum(axis=0)
        rho = eval_rates(protocols[c], F.block(c), sigma, cls.mass)
        out.append(block @ rho - block * rho.sum(axis=1)[None, :])
    return out


@dataclass(frozen=True, eq=False)
class FlowField:
    """State and revision flows plus their sum at one distribution."""

    dynamic: tuple[np.ndarray, ...]
    revision: tuple[np.ndarray, ...]
    payoffs: PayoffVector

    @property
    def total(self) -> tuple[np.ndarray, ...]:
        return tuple(d + r for d, r in zip(self.dynamic, self.revision))

    @property
    def residual(self) -> float:
        """Max |V| over all cells."""
        return max(float(np.max(np.abs(v))) for v in self.total)


def vector_field(mu: StatePolicyDist, protocols, spec: GameSpec) -> FlowField:
    protocols = normalize_protocols(spec, protocols)
    F = payoff_map(mu, spec)
    fd = dynamic_flow(mu, spec)
    fr = []
    for c, cls in enumerate(spec.classes):
        block = mu.block(c)
        sigma = block.sum(axis=0)
        rho = eval_rates(protocols[c], F.block(c), sigma, cls.mass)
        fr.append(block @ rho - block * rho.sum(axis=1)[None, :])
    return FlowField(tuple(fd), tuple(fr), F)


@dataclass(eq=False)
class TrajectoryRecord:
    """Time-sampled mean-dynamic trajectory with per-sample diagnostics."""

    spec: GameSpec
    times: np.ndarray
    states: list[StatePolicyDist]
    residuals: np.ndarray        # max |V| at each sample
    payoffs: np.ndarray          # (n_samples, total policies) concatenated
    method: str
    step: float
    backend: str

    @property
    def endpoint(self) -> StatePolicyDist:
        return self.states[-1]

    def to_csv(self, trajectory_path, diagnostics_path=None) -> None:
        """Write (t, class, state, policy, mass) rows; optionally a
        diagnostics file (t, residual, payoff entries)."""
        with open(trajectory_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "class", "state", "policy", "mass"])
            for t, dist in zip(self.times, self.states):
                for c, cls in enumerate(self.spec.classes):
                    block = dist.block(c)
                    for u in range(block.shape[1]):
                        for s in range(block.shape[0]):
                            w.writerow([
                                f"{t:.17g}", c, cls.states[s], u,
                                f"{block[s, u]:.17g}",
                            ])
        if diagnostics_path is None:
            return
        comp = compile_game(self.spec)
        header = ["t", "residual"]
        for c in range(self.spec.n_classes):
            for u in range(comp.classes[c].n_policies):
                header.append(f"payoff_c{c}_u{u}")
        with open(diagnostics_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k, t in enumerate(self.times):
                row = [f"{t:.17g}", f"{self.residuals[k]:.17g}"]
                row += [f"{v:.17g}" for v in self.payoffs[k]]
                w.writerow(row)


def read_trajectory_csv(path):
    """Load a trajectory CSV back into (times, {(class,state,policy): series})."""
    times: list[float] = []
    series: dict = {}
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        for row in rd:
            t = float(row["t"])
            if not times or t != times[-1]:
                times.append(t)
            key = (int(row["class"]), row["state"], int(row["policy"]))
            series.setdefault(key, []).append(float(row["mass"]))
    return np.array(times), {k: np.array(v) for k, v in series.items()}


def default_step(spec: GameSpec) -> float:
    """0.01 over the fastest clock; keeps per-step mass error far below 1e-9."""
    fastest = max(max(c.action_rate, c.revision_rate) for c in spec.classes)
    return 0.01 / fastest


def _mu_to_padded(mu: StatePolicyDist, comp) -> np.ndarray:
    spec = comp.spec
    pmax = max(c.n_states for c in spec.classes)
    nmax = max(c.n_policies for c in comp.classes)
    out = np.zeros((spec.n_classes, pmax, nmax))
    for c in range(spec.n_classes):
        b = mu.block(c)
        out[c, : b.shape[0], : b.shape[1]] = b
    return out


def _padded_to_mu(arr: np.ndarray, comp) -> StatePolicyDist:
    spec = comp.spec
    blocks = []
    for c in range(spec.n_classes):
        p = spec.classes[c].n_states
        n = comp.classes[c].n_policies
        blocks.append(_readonly(arr[c, :p, :n]))
    return StatePolicyDist(tuple(blocks))


def _has_fast_path(comp, protocols) -> bool:
    from .revision import KERNEL_KIND

    pack = comp.pack()
    if (pack[10] < 0).any():  # reward kinds
        return False
    return all(p.family in KERNEL_KIND for p in protocols)


def integrate(mu0: StatePolicyDist, protocols, spec: GameSpec, horizon: float,
              step: float | None = None, method: str = "rk4",
              n_samples: int = 200, clip_tol: float = DEFAULT_CLIP_TOL,
              backend: str | None = None) -> TrajectoryRecord:
    """Integrate the mean dynamic from mu0 over [0, horizon].

    The step is trimmed so that an integer number of steps lands exactly on
    the horizon and on every sample time.  Samples satisfy the distribution
    invariants to clip_tol; NaN payoffs or larger simplex violations abort
    with the failure time.
    """
    comp = compile_game(spec)
    protocols = normalize_protocols(spec, protocols)
    if step is None:
        step = default_step(spec)
    if method not in ("rk4", "euler"):
        raise ValueError(f"unknown method {method!r}")

    if horizon <= 0:
        ff = vector_field(mu0, protocols, spec)
        return TrajectoryRecord(
            spec, np.array([0.0]), [mu0], np.array([ff.residual]),
            ff.payoffs.to_vector()[None, :], method, step, "numpy",
        )

    n_steps = max(1, round(horizon / step))
    sample_every = max(1, n_steps // max(1, n_samples))
    n_steps = math.ceil(n_steps / sample_every) * sample_every
    step = horizon / n_steps
    n_rec = n_steps // sample_every + 1

    want = get_backend(backend)
    use_kernel = (
        method == "rk4" and want.name == "numba"
        and _has_fast_path(comp, protocols)
    )
    if use_kernel:
        pk, pp = pack_protocols(spec, protocols)
        mu = _mu_to_padded(mu0, comp)
        pmax, nmax = mu.shape[1], mu.shape[2]
        out_times = np.zeros(n_rec)
        out_mus = np.zeros((n_rec, spec.n_classes, pmax, nmax))
        out_resid = np.zeros(n_rec)
        out_pay = np.zeros((n_rec, spec.n_classes, nmax))
        status, t_fail = want.rk4_integrate(
            comp.pack(), pk, pp, mu, step, n_steps, sample_every, clip_tol,
            out_times, out_mus, out_resid, out_pay,
        )
        _raise_on_status(status, t_fail)
        states = [_padded_to_mu(out_mus[k], comp) for k in range(n_rec)]
        pay = np.concatenate(
            [out_pay[:, c, : comp.classes[c].n_policies]
             for c in range(spec.n_classes)], axis=1,
        )
        return TrajectoryRecord(spec, out_times, states, out_resid, pay,
                                method, step, want.name)

    return _integrate_numpy(mu0, protocols, spec, step, n_steps, sample_every,
                            method, clip_tol, comp)


def _raise_on_status(status, t_fail):
    from ._kernels import core as kcore

    if status == kcore.NAN_FIELD:
        raise IntegrationAbort(t_fail, "NaN payoff or rate in the field")
    if status == kcore.NEGATIVE_MASS:
        raise IntegrationAbort(
            t_fail, "negative mass beyond the clip tolerance"
        )


def _integrate_numpy(mu0, protocols, spec, step, n_steps, sample_every,
                     method, clip_tol, comp):
    masses = spec.masses

    def fieldv(blocks):
        dist = StatePolicyDist(tuple(blocks))
        try:
            ff = vector_field(dist, protocols, spec)
        except ValueError as exc:  # NaN payoffs raised by the protocol
            raise IntegrationAbort(t, str(exc)) from exc
        for c in range(spec.n_classes):
            if np.isnan(ff.payoffs.block(c)).any():
                raise IntegrationAbort(t, "NaN payoff in the field")
        return ff

    y = [b.copy() for b in mu0.blocks]
    times, states, resids, pays = [], [], [], []
    t = 0.0
    for k in range(n_steps + 1):
        ff = fieldv(y)
        if k % sample_every == 0:
            times.append(t)
            states.append(StatePolicyDist(tuple(_readonly(b.copy()) for b in y)))
            resids.append(ff.residual)
            pays.append(ff.payoffs.to_vector())
        if k == n_steps:
            break
        v1 = ff.total
        if method == "euler":
            ynew = [y[c] + step * v1[c] for c in range(len(y))]
        else:
            y2 = [y[c] + 0.5 * step * v1[c] for c in range(len(y))]
            v2 = fieldv(y2).total
            y3 = [y[c] + 0.5 * step * v2[c] for c in range(len(y))]
            v3 = fieldv(y3).total
            y4 = [y[c] + step * v3[c] for c in range(len(y))]
            v4 = fieldv(y4).total
            ynew = [
                y[c] + (step / 6.0) * (v1[c] + 2 * v2[c] + 2 * v3[c] + v4[c])
                for c in range(len(y))
            ]
        t = step * (k + 1)
        for c, b in enumerate(ynew):
            if np.isnan(b).any():
                raise IntegrationAbort(t, "NaN payoff or rate in the field")
            minv = float(b.min())
            if minv < -clip_tol:
                raise IntegrationAbort(
                    t, "negative mass beyond the clip tolerance"
                )
            np.clip(b, 0.0, None, out=b)
            b *= masses[c] / b.sum()
        y = ynew
    return TrajectoryRecord(
        spec, np.array(times), states, np.array(resids), np.array(pays),
        method, step, "numpy",
    )


@dataclass(frozen=True, eq=False)
class RestPointResult:
    point: StatePolicyDist
    residual: float
    converged: bool
    time: float


def find_rest_point(mu0: StatePolicyDist, protocols, spec: GameSpec,
                    tol: float = DEFAULT_REST_TOL, max_time: float = 200.0,
                    step: float | None = None,
                    backend: str | None = None) -> RestPointResult:
    """Integrate until the field residual drops below tol.

    Residuals are sampled along the grid; the first sample below tol is
    returned, or the endpoint with a non-convergence flag.
    """
    protocols = normalize_protocols(spec, protocols)
    chunk = max_time / 8.0
    mu = mu0
    elapsed = 0.0
    best = None
    while elapsed < max_time:
        rec = integrate(mu, protocols, spec, min(chunk, max_time - elapsed),
                        step=step, n_samples=32, backend=backend)
        hits = np.nonzero(rec.residuals < tol)[0]
        if hits.size:
            k = int(hits[0])
            return RestPointResult(rec.states[k], float(rec.residuals[k]),
                                   True, elapsed + float(rec.times[k]))
        mu = rec.endpoint
        best = float(rec.residuals[-1])
        elapsed += float(rec.times[-1])
    return RestPointResult(mu, best if best is not None else np.inf,
                           False, elapsed)
