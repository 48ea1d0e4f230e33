"""Hot numeric kernels, written once in an njit-compatible subset of Python.

``build(jit)`` defines every kernel under the given decorator and returns a
namespace; `jit` is either identity (pure-Python backend) or ``numba.njit``.
Both backends therefore execute the same statements in the same order, which
makes simulated trajectories bitwise identical across them.

Conventions shared by all kernels:

* The game pack ``g`` is the tuple built by ``_compile._build_pack`` —
  padded per-class arrays (states p, actions q, policies n, clock rates,
  stationary tables eta, policy action tables assign, stacked kernels and
  their column cumulative sums, and reward-family parameters).
* Protocol codes ``pk``/``pp``: 0 none, 1 dissatisfaction(K), 2 pairwise
  proportional imitation, 3 excess-payoff (bnn), 4 pairwise comparison
  (smith).
* Randomness is a splitmix64 counter stream: 64-bit state advanced by a
  fixed increment, output hashed from the state.  Replication streams are
  derived from (master seed, stream index), so runs are reproducible and
  replications are independent without shared state.
"""

from types import SimpleNamespace

import numpy as np

U64 = np.uint64
GOLD = U64(0x9E3779B97F4A7C15)
MIX1 = U64(0xBF58476D1CE4E5B9)
MIX2 = U64(0x94D049BB133111EB)
SH30 = U64(30)
SH27 = U64(27)
SH31 = U64(31)
SH11 = U64(11)
ONE = U64(1)
INV53 = np.float64(1.0 / 9007199254740992.0)  # 2**-53

# status codes returned by the integrators / simulators
OK = 0
NAN_FIELD = 1
NEGATIVE_MASS = 2
BOUND_VIOLATION = 3


def build(jit):
    @jit
    def mix64(z):
        z = U64((z ^ (z >> SH30)) * MIX1)
        z = U64((z ^ (z >> SH27)) * MIX2)
        return U64(z ^ (z >> SH31))

    @jit
    def stream_state(master, stream):
        s = mix64(U64(master))
        return mix64(U64(s + U64(stream) * GOLD + GOLD))

    @jit
    def next_unit(state):
        """Advance the stream; return (state, uniform in (0, 1])."""
        state = U64(state + GOLD)
        z = mix64(state)
        return state, np.float64((z >> SH11) + ONE) * INV53

    @jit
    def payoffs(g, sa, c, out):
        """Average payoff of every policy of class c at state-action masses
        sa (C, pmax, qmax); writes into out[:n_c]."""
        (p, q, n, mass, lam_d, lam_r, eta, assign, kern, kern_cum,
         r_kind, r_table, usage, w0, w1, cong_rate,
         power, mac_sig2, mac_coef, mac_beta) = g
        kind = r_kind[c]
        if kind == 1:  # static table (constant/tabular)
            for u in range(n[c]):
                acc = 0.0
                for s in range(p[c]):
                    acc += eta[c, u, s] * r_table[c, s, assign[c, u, s]]
                out[u] = acc
        elif kind == 2:  # congestion with affine resource rewards
            n_res = w0.shape[0]
            wval = np.zeros(n_res)
            for r in range(n_res):
                sig = 0.0
                for d in range(p.shape[0]):
                    if r_kind[d] == 2:
                        for s in range(p[d]):
                            for a in range(q[d]):
                                sig += usage[d, a, r] * sa[d, s, a]
                wval[r] = w0[r] + w1[r] * (cong_rate * sig)
            for u in range(n[c]):
                acc = 0.0
                for s in range(p[c]):
                    a = assign[c, u, s]
                    av = 0.0
                    for r in range(n_res):
                        av += usage[c, a, r] * wval[r]
                    acc += eta[c, u, s] * av
                out[u] = acc
        elif kind == 3:  # expected SINR minus linear power cost
            tot = 0.0
            for s in range(p[c]):
                for a in range(q[c]):
                    tot += power[c, a] * sa[c, s, a]
            den = mac_sig2[c] + mac_coef[c] * tot
            for u in range(n[c]):
                acc = 0.0
                for s in range(p[c]):
                    a = assign[c, u, s]
                    acc += eta[c, u, s] * (power[c, a] / den
                                           - mac_beta[c] * power[c, a])
                out[u] = acc
        else:
            for u in range(n[c]):
                out[u] = np.nan

    @jit
    def reward_single(g, sa, c, s, a):
        """One reward table entry of class c at state-action masses sa."""
        (p, q, n, mass, lam_d, lam_r, eta, assign, kern, kern_cum,
         r_kind, r_table, usage, w0, w1, cong_rate,
         power, mac_sig2, mac_coef, mac_beta) = g
        kind = r_kind[c]
        if kind == 1:
            return r_table[c, s, a]
        if kind == 2:
            n_res = w0.shape[0]
            val = 0.0
            for r in range(n_res):
                if usage[c, a, r] != 0.0:
                    sig = 0.0
                    for d in range(p.shape[0]):
                        if r_kind[d] == 2:
                            for s2 in range(p[d]):
                                for a2 in range(q[d]):
                                    sig += usage[d, a2, r] * sa[d, s2, a2]
                    val += w0[r] + w1[r] * (cong_rate * sig)
            return val
        if kind == 3:
            tot = 0.0
            for s2 in range(p[c]):
                for a2 in range(q[c]):
                    tot += power[c, a2] * sa[c, s2, a2]
            den = mac_sig2[c] + mac_coef[c] * tot
            return power[c, a] / den - mac_beta[c] * power[c, a]
        return np.nan

    @jit
    def rates_row(kind, param, F, sig, mass_c, u, out, n_c):
        """Off-diagonal switch rates out[v] = rho[u, v]; out[u] = 0."""
        for v in range(n_c):
            out[v] = 0.0
        if kind == 1:  # dissatisfaction; negative aspiration gaps clamp to 0
            base = param - F[u]
            if base < 0.0:
                base = 0.0
            for v in range(n_c):
                if v != u:
                    out[v] = base * sig[v] / mass_c
        elif kind == 2:  # pairwise proportional imitation
            for v in range(n_c):
                if v != u:
                    d = F[v] - F[u]
                    if d > 0.0:
                        out[v] = d * sig[v] / mass_c
        elif kind == 3:  # excess payoff, positive part
            mean = 0.0
            for v in range(n_c):
                mean += F[v] * sig[v]
            mean /= mass_c
            for v in range(n_c):
                if v != u:
                    d = F[v] - mean
                    if d > 0.0:
                        out[v] = d
        elif kind == 4:  # pairwise comparison, positive part
            for v in range(n_c):
                if v != u:
                    d = F[v] - F[u]
                    if d > 0.0:
                        out[v] = d

    @jit
    def field(g, pk, pp, mu, out, F_all, sa, rows):
        """Mean-dynamic vector field V at mu, written into out.

        mu/out: (C, pmax, nmax); F_all: (C, nmax) receives the payoff map;
        sa: (C, pmax, qmax) scratch; rows: (nmax, nmax) scratch.
        Returns a status code (NaN payoffs abort).
        """
        (p, q, n, mass, lam_d, lam_r, eta, assign, kern, kern_cum,
         r_kind, r_table, usage, w0, w1, cong_rate,
         power, mac_sig2, mac_coef, mac_beta) = g
        C = p.shape[0]
        for c in range(C):
            for s in range(p[c]):
                for a in range(q[c]):
                    sa[c, s, a] = 0.0
            for u in range(n[c]):
                for s in range(p[c]):
                    sa[c, s, assign[c, u, s]] += mu[c, s, u]
        for c in range(C):
            payoffs(g, sa, c, F_all[c])
            for u in range(n[c]):
                if not F_all[c, u] == F_all[c, u]:
                    return NAN_FIELD
        nmax = F_all.shape[1]
        sig = np.zeros(nmax)
        rowsum = np.zeros(nmax)
        for c in range(C):
            for u in range(n[c]):
                acc = 0.0
                for s in range(p[c]):
                    acc += mu[c, s, u]
                sig[u] = acc
            # state flow: mass moves along each policy's own chain
            for u in range(n[c]):
                for s2 in range(p[c]):
                    acc = 0.0
                    for s1 in range(p[c]):
                        acc += kern[c, assign[c, u, s1], s2, s1] * mu[c, s1, u]
                    out[c, s2, u] = lam_d[c] * (acc - mu[c, s2, u])
            # revision flow: mass moves across policies within each state
            if pk[c] != 0:
                for u in range(n[c]):
                    rates_row(pk[c], pp[c], F_all[c], sig, mass[c], u,
                              rows[u], n[c])
                    acc = 0.0
                    for v in range(n[c]):
                        acc += rows[u, v]
                    rowsum[u] = acc
                for s in range(p[c]):
                    for u in range(n[c]):
                        inflow = 0.0
                        for v in range(n[c]):
                            inflow += mu[c, s, v] * rows[v, u]
                        out[c, s, u] += inflow - mu[c, s, u] * rowsum[u]
        return OK

    @jit
    def axpy(y, a, x, out):
        C, P, N = y.shape
        for c in range(C):
            for s in range(P):
                for u in range(N):
                    out[c, s, u] = y[c, s, u] + a * x[c, s, u]

    @jit
    def rk4_integrate(g, pk, pp, mu, step, n_steps, sample_every, clip_tol,
                      out_times, out_mus, out_resid, out_payoffs):
        """Classical fixed-step RK4 on the mean dynamic; mu advances in place.

        Records state, field residual (max |V|) and payoff vectors every
        ``sample_every`` steps (n_steps must be a multiple).  After each step
        entries in [-clip_tol, 0) are clipped to zero and the class blocks
        rescaled to their masses; more negative entries abort.
        Returns (status, t_fail).
        """
        (p, q, n, mass, lam_d, lam_r, eta, assign, kern, kern_cum,
         r_kind, r_table, usage, w0, w1, cong_rate,
         power, mac_sig2, mac_coef, mac_beta) = g
        C, pmax, nmax = mu.shape
        qmax = kern.shape[1]
        k1 = np.zeros((C, pmax, nmax))
        k2 = np.zeros((C, pmax, nmax))
        k3 = np.zeros((C, pmax, nmax))
        k4 = np.zeros((C, pmax, nmax))
        yt = np.zeros((C, pmax, nmax))
        F = np.zeros((C, nmax))
        sa = np.zeros((C, pmax, qmax))
        rows = np.zeros((nmax, nmax))
        rec = 0
        t = 0.0
        for k in range(n_steps + 1):
            st = field(g, pk, pp, mu, k1, F, sa, rows)
            if st != OK:
                return st, t
            if k % sample_every == 0:
                out_times[rec] = t
                resid = 0.0
                for c in range(C):
                    for s in range(p[c]):
                        for u in range(n[c]):
                            out_mus[rec, c, s, u] = mu[c, s, u]
                            v = k1[c, s, u]
                            if v < 0.0:
                                v = -v
                            if v > resid:
                                resid = v
                for c in range(C):
                    for u in range(n[c]):
                        out_payoffs[rec, c, u] = F[c, u]
                out_resid[rec] = resid
                rec += 1
            if k == n_steps:
                break
            axpy(mu, 0.5 * step, k1, yt)
            st = field(g, pk, pp, yt, k2, F, sa, rows)
            if st != OK:
                return st, t
            axpy(mu, 0.5 * step, k2, yt)
            st = field(g, pk, pp, yt, k3, F, sa, rows)
            if st != OK:
                return st, t
            axpy(mu, step, k3, yt)
            st = field(g, pk, pp, yt, k4, F, sa, rows)
            if st != OK:
                return st, t
            sixth = step / 6.0
            for c in range(C):
                for s in range(p[c]):
                    for u in range(n[c]):
                        mu[c, s, u] += sixth * (
                            k1[c, s, u] + 2.0 * k2[c, s, u]
                            + 2.0 * k3[c, s, u] + k4[c, s, u]
                        )
            t = step * (k + 1)
            for c in range(C):
                minv = 0.0
                for s in range(p[c]):
                    for u in range(n[c]):
                        v = mu[c, s, u]
                        if v < minv:
                            minv = v
                        if not v == v:
                            return NAN_FIELD, t
                if minv < -clip_tol:
                    return NEGATIVE_MASS, t
                total = 0.0
                for s in range(p[c]):
                    for u in range(n[c]):
                        if mu[c, s, u] < 0.0:
                            mu[c, s, u] = 0.0
                        total += mu[c, s, u]
                scale = mass[c] / total
                if scale != 1.0:
                    for s in range(p[c]):
                        for u in range(n[c]):
                            mu[c, s, u] *= scale
        return OK, t

    @jit
    def simulate_events(g, pk, pp, class_off, s_of, u_of, counts, counts_sa,
                        counts_pol, sample_times, out_counts, act_counts,
                        master, stream, strict):
        """Exact event-driven simulation of the finite population.

        One exponential clock drives the whole population (superposition of
        the per-player action and revision clocks; the total rate is
        constant).  Each event picks a class proportionally to its total
        rate, a uniform player within it, then an action or revision clock
        proportionally to (lam_d, lam_r).  Action events draw the next state
        from the kernel column of the player's policy action; revision
        events switch policy u -> v with probability rho_uv / lam_r.

        counts (C,pmax,nmax), counts_sa (C,pmax,qmax) and counts_pol (C,nmax)
        are integer cell counts advanced in place and must match s_of/u_of
        on entry.  Snapshots of counts land in out_counts at each ascending
        sample time (population immediately before the first later event).
        act_counts[i] counts the action events of player i.

        Returns (status, t_fail, n_renormalized): when a revision row sum
        exceeds lam_r beyond float noise, strict mode aborts with status
        BOUND_VIOLATION; otherwise switch probabilities are renormalized and
        the occurrence counted.
        """
        (p, q, n, mass, lam_d, lam_r, eta, assign, kern, kern_cum,
         r_kind, r_table, usage, w0, w1, cong_rate,
         power, mac_sig2, mac_coef, mac_beta) = g
        C = p.shape[0]
        N = s_of.shape[0]
        inv_n = 1.0 / N
        n_samp = sample_times.shape[0]
        nmax = counts_pol.shape[1]
        qmax = counts_sa.shape[2]
        pmax = counts.shape[1]
        wtot = 0.0
        for c in range(C):
            nc = class_off[c + 1] - class_off[c]
            wtot += nc * (lam_d[c] + lam_r[c])
        F = np.zeros(nmax)
        row = np.zeros(nmax)
        sig = np.zeros(nmax)
        sa_f = np.zeros((C, pmax, qmax))
        state = stream_state(master, stream)
        t = 0.0
        si = 0
        renorm = 0
        while si < n_samp:
            state, u0 = next_unit(state)
            tn = t - np.log(u0) / wtot
            while si < n_samp and sample_times[si] <= tn:
                for c in range(C):
                    for s in range(pmax):
                        for u in range(nmax):
                            out_counts[si, c, s, u] = counts[c, s, u]
                si += 1
            if si >= n_samp:
                break
            t = tn
            state, u1 = next_unit(state)
            r = u1 * wtot
            c = 0
            acc = 0.0
            for d in range(C):
                nc = class_off[d + 1] - class_off[d]
                acc += nc * (lam_d[d] + lam_r[d])
                c = d
                if r <= acc:
                    break
            nc = class_off[c + 1] - class_off[c]
            state, u2 = next_unit(state)
            idx = int(u2 * nc)
            if idx >= nc:
                idx = nc - 1
            i = class_off[c] + idx
            state, u3 = next_unit(state)
            s = s_of[i]
            upol = u_of[i]
            if u3 * (lam_d[c] + lam_r[c]) <= lam_d[c]:
                # action clock: draw the next state
                act_counts[i] += 1
                a = assign[c, upol, s]
                state, u4 = next_unit(state)
                s2 = 0
                for s2 in range(p[c]):
                    if u4 <= kern_cum[c, a, s2, s]:
                        break
                if s2 != s:
                    counts[c, s, upol] -= 1
                    counts[c, s2, upol] += 1
                    counts_sa[c, s, a] -= 1
                    counts_sa[c, s2, assign[c, upol, s2]] += 1
                    s_of[i] = s2
            else:
                # revision clock: switch with probability rho/lam_r
                if pk[c] != 0:
                    for d in range(C):
                        for s2 in range(p[d]):
                            for a2 in range(q[d]):
                                sa_f[d, s2, a2] = counts_sa[d, s2, a2] * inv_n
                    payoffs(g, sa_f, c, F)
                    for v in range(n[c]):
                        sig[v] = counts_pol[c, v] * inv_n
                    rates_row(pk[c], pp[c], F, sig, mass[c], upol, row, n[c])
                    tot = 0.0
                    for v in range(n[c]):
                        tot += row[v]
                    scale = 1.0
                    if tot > lam_r[c]:
                        if tot > lam_r[c] * (1.0 + 1e-9):
                            if strict != 0:
                                return BOUND_VIOLATION, t, renorm
                            renorm += 1
                        scale = lam_r[c] / tot
                    state, u5 = next_unit(state)
                    thresh = u5 * lam_r[c]
                    accv = 0.0
                    newu = upol
                    hit = False
                    for v in range(n[c]):
                        accv += row[v] * scale
                        if thresh <= accv:
                            newu = v
                            hit = True
                            break
                    if hit and newu != upol:
                        counts[c, s, upol] -= 1
                        counts[c, s, newu] += 1
                        counts_pol[c, upol] -= 1
                        counts_pol[c, newu] += 1
                        a_old = assign[c, upol, s]
                        a_new = assign[c, newu, s]
                        if a_old != a_new:
                            counts_sa[c, s, a_old] -= 1
                            counts_sa[c, s, a_new] += 1
                        u_of[i] = newu
        return OK, t, renorm

    @jit
    def tagged_rewards(g, class_off, s_of, u_of, counts_sa, horizon, burn_in,
                       tagged, master, stream):
        """Event loop with revision disabled, collecting the tagged player's
        single-stage rewards at their own action instants after burn_in.

        Policies are fixed, so only the action clocks run (total rate
        sum_c N_c lam_d_c).  The reward is evaluated at the empirical
        state-action distribution immediately before the transition.
        Returns (reward_sum, n_samples).
        """
        (p, q, n, mass, lam_d, lam_r, eta, assign, kern, kern_cum,
         r_kind, r_table, usage, w0, w1, cong_rate,
         power, mac_sig2, mac_coef, mac_beta) = g
        C = p.shape[0]
        N = s_of.shape[0]
        inv_n = 1.0 / N
        qmax = counts_sa.shape[2]
        pmax = counts_sa.shape[1]
        wtot = 0.0
        for c in range(C):
            nc = class_off[c + 1] - class_off[c]
            wtot += nc * lam_d[c]
        sa_f = np.zeros((C, pmax, qmax))
        state = stream_state(master, stream)
        t = 0.0
        ssum = 0.0
        cnt = 0
        while True:
            state, u0 = next_unit(state)
            t = t - np.log(u0) / wtot
            if t > horizon:
                break
            state, u1 = next_unit(state)
            r = u1 * wtot
            c = 0
            acc = 0.0
            for d in range(C):
                nc = class_off[d + 1] - class_off[d]
                acc += nc * lam_d[d]
                c = d
                if r <= acc:
                    break
            nc = class_off[c + 1] - class_off[c]
            state, u2 = next_unit(state)
            idx = int(u2 * nc)
            if idx >= nc:
                idx = nc - 1
            i = class_off[c] + idx
            s = s_of[i]
            a = assign[c, u_of[i], s]
            if i == tagged and t >= burn_in:
                for d in range(C):
                    for s2 in range(p[d]):
                        for a2 in range(q[d]):
                            sa_f[d, s2, a2] = counts_sa[d, s2, a2] * inv_n
                ssum += reward_single(g, sa_f, c, s, a)
                cnt += 1
            state, u4 = next_unit(state)
            s2 = 0
            for s2 in range(p[c]):
                if u4 <= kern_cum[c, a, s2, s]:
                    break
            if s2 != s:
                counts_sa[c, s, a] -= 1
                counts_sa[c, s2, assign[c, u_of[i], s2]] += 1
                s_of[i] = s2
        return ssum, cnt

    return SimpleNamespace(
        mix64=mix64,
        stream_state=stream_state,
        next_unit=next_unit,
        payoffs=payoffs,
        reward_single=reward_single,
        rates_row=rates_row,
        field=field,
        rk4_integrate=rk4_integrate,
        simulate_events=simulate_events,
        tagged_rewards=tagged_rewards,
    )
