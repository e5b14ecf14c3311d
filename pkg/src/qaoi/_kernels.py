"""Loop kernels for policy evaluation, greedy improvement, and simulation.

Everything here works on the flat, 0-based arrays produced by
:func:`qaoi.model.kernel_arrays`.  The flat state index is
``((age-1)*(B+1) + tokens)*nE*nQ + err*nQ + query`` with ``err``/``query``
0-based, matching ``ModelConfig.state_index``.

Under the numba backend these compile with ``njit``; under the numpy
backend they stay plain Python and the solver/simulator modules switch to
the vectorized implementations instead.  The evaluation and value-sweep
kernels update the table in place while scanning states in descending
index order, which resolves the long age-ramp dependencies within a single
sweep; the fixed point is the same as for out-of-place sweeps.
"""

from __future__ import annotations

import math

from ._backend import maybe_jit


@maybe_jit(inline="always")
def _state_q(
    v, di, b, e, q, a, D, B, nE, nQ,
    eps, pe_ptr, pe_idx, pe_p, pq_ptr, pq_idx, pq_p, qmass, mu, lam, qapa,
):
    """Action value of (state, a) against the current table ``v``."""
    sE = nQ
    sB = nE * nQ
    sD = (B + 1) * sB
    om = 1.0 - mu
    ageup = di + 1 if di + 1 < D else D - 1
    p1 = (1.0 - eps[e]) if a == 1 else 0.0
    p2 = 1.0 - p1
    bu = b - a + 1
    if bu > B:
        bu = B
    bd = b - a
    acc = 0.0
    for ie in range(pe_ptr[e], pe_ptr[e + 1]):
        e2 = pe_idx[ie]
        we = pe_p[ie]
        fresh_u = bu * sB + e2 * sE
        fresh_d = bd * sB + e2 * sE
        stale_u = ageup * sD + fresh_u
        stale_d = ageup * sD + fresh_d
        for iq in range(pq_ptr[q], pq_ptr[q + 1]):
            q2 = pq_idx[iq]
            w = we * pq_p[iq]
            vn = p1 * (mu * v[fresh_u + q2] + om * v[fresh_d + q2]) + p2 * (
                mu * v[stale_u + q2] + om * v[stale_d + q2]
            )
            acc += w * vn
    ec = p1 + p2 * (ageup + 1.0)  # expected landing age
    if qapa:
        ec *= qmass[q]
    return ec + lam * acc


@maybe_jit()
def eval_sweep(
    v, policy, D, B,
    eps, pe_ptr, pe_idx, pe_p, pq_ptr, pq_idx, pq_p, qmass, mu, lam, qapa,
):
    """One in-place evaluation sweep of ``policy``; returns the sup-norm change."""
    nE = eps.shape[0]
    nQ = qmass.shape[0]
    resid = 0.0
    s = D * (B + 1) * nE * nQ - 1
    for di in range(D - 1, -1, -1):
        for b in range(B, -1, -1):
            for e in range(nE - 1, -1, -1):
                for q in range(nQ - 1, -1, -1):
                    qv = _state_q(
                        v, di, b, e, q, policy[s], D, B, nE, nQ,
                        eps, pe_ptr, pe_idx, pe_p, pq_ptr, pq_idx, pq_p,
                        qmass, mu, lam, qapa,
                    )
                    r = qv - v[s]
                    if r < 0.0:
                        r = -r
                    if r > resid:
                        resid = r
                    v[s] = qv
                    s -= 1
    return resid


@maybe_jit()
def vi_sweep(
    v, D, B,
    eps, pe_ptr, pe_idx, pe_p, pq_ptr, pq_idx, pq_p, qmass, mu, lam, qapa,
):
    """One in-place optimality sweep (min over admissible actions)."""
    nE = eps.shape[0]
    nQ = qmass.shape[0]
    resid = 0.0
    s = D * (B + 1) * nE * nQ - 1
    for di in range(D - 1, -1, -1):
        for b in range(B, -1, -1):
            for e in range(nE - 1, -1, -1):
                for q in range(nQ - 1, -1, -1):
                    qv = _state_q(
                        v, di, b, e, q, 0, D, B, nE, nQ,
                        eps, pe_ptr, pe_idx, pe_p, pq_ptr, pq_idx, pq_p,
                        qmass, mu, lam, qapa,
                    )
                    if b > 0:
                        q1 = _state_q(
                            v, di, b, e, q, 1, D, B, nE, nQ,
                            eps, pe_ptr, pe_idx, pe_p, pq_ptr, pq_idx, pq_p,
                            qmass, mu, lam, qapa,
                        )
                        if q1 < qv:
                            qv = q1
                    r = qv - v[s]
                    if r < 0.0:
                        r = -r
                    if r > resid:
                        resid = r
                    v[s] = qv
                    s -= 1
    return resid


@maybe_jit()
def greedy_sweep(
    v, out_policy, D, B,
    eps, pe_ptr, pe_idx, pe_p, pq_ptr, pq_idx, pq_p, qmass, mu, lam, qapa,
):
    """Fill ``out_policy`` with the greedy action per state (ties to 0)."""
    nE = eps.shape[0]
    nQ = qmass.shape[0]
    s = 0
    for di in range(D):
        for b in range(B + 1):
            for e in range(nE):
                for q in range(nQ):
                    a = 0
                    if b > 0:
                        q0 = _state_q(
                            v, di, b, e, q, 0, D, B, nE, nQ,
                            eps, pe_ptr, pe_idx, pe_p, pq_ptr, pq_idx, pq_p,
                            qmass, mu, lam, qapa,
                        )
                        q1 = _state_q(
                            v, di, b, e, q, 1, D, B, nE, nQ,
                            eps, pe_ptr, pe_idx, pe_p, pq_ptr, pq_idx, pq_p,
                            qmass, mu, lam, qapa,
                        )
                        if q1 < q0:
                            a = 1
                    out_policy[s] = a
                    s += 1


@maybe_jit()
def q_sweep(
    v, out_q0, out_q1, D, B,
    eps, pe_ptr, pe_idx, pe_p, pq_ptr, pq_idx, pq_p, qmass, mu, lam, qapa,
):
    """Fill both action-value tables; inadmissible entries get ``inf``."""
    nE = eps.shape[0]
    nQ = qmass.shape[0]
    s = 0
    for di in range(D):
        for b in range(B + 1):
            for e in range(nE):
                for q in range(nQ):
                    out_q0[s] = _state_q(
                        v, di, b, e, q, 0, D, B, nE, nQ,
                        eps, pe_ptr, pe_idx, pe_p, pq_ptr, pq_idx, pq_p,
                        qmass, mu, lam, qapa,
                    )
                    if b > 0:
                        out_q1[s] = _state_q(
                            v, di, b, e, q, 1, D, B, nE, nQ,
                            eps, pe_ptr, pe_idx, pe_p, pq_ptr, pq_idx, pq_p,
                            qmass, mu, lam, qapa,
                        )
                    else:
                        out_q1[s] = math.inf
                    s += 1


@maybe_jit(inline="always")
def _u01(rs, i, gammas):
    """Advance stream ``i`` and return one uniform in [0, 1)."""
    s = rs[i] + gammas[i]
    rs[i] = s
    z = s
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z = z ^ (z >> 31)
    return (z >> 11) * 1.1102230246251565e-16  # 2**-53


@maybe_jit(inline="always")
def _chain_step(ptr, idx, p, row, u):
    """CDF walk along one compressed row; safe against float slack near 1."""
    acc = 0.0
    nxt = idx[ptr[row]]
    for k in range(ptr[row], ptr[row + 1]):
        acc += p[k]
        nxt = idx[k]
        if u < acc:
            break
    return nxt


@maybe_jit()
def sim_loop(
    policy, D, B,
    eps, pe_ptr, pe_idx, pe_p, pq_ptr, pq_idx, pq_p, qflag, mu,
    horizon, burn_in, age0, tok0, e0, q0,
    rs, gammas,
    age_hist, qage_hist, tok_hist,
    record, tr_age, tr_tok, tr_err, tr_qry, tr_act, tr_del,
):
    """Run ``horizon`` slots; accumulate post-burn-in histograms.

    Draw order per slot is fixed (delivery, error-chain, token, query) so
    different policies under the same seed face identical randomness.
    ``qage_hist`` is the flattened ``(nQ, D+1)`` per-query-state age
    histogram.  Returns the scalar tallies.
    """
    nE = eps.shape[0]
    nQ = qflag.shape[0]
    sB = nE * nQ
    age = age0
    b = tok0
    e = e0
    q = q0
    aoi_sum = 0
    qaoi_sum = 0
    n_query = 0
    n_tx = 0
    n_del = 0
    for t in range(1, horizon + 1):
        a = policy[((age - 1) * (B + 1) + b) * sB + e * nQ + q]
        u_del = _u01(rs, 0, gammas)
        u_es = _u01(rs, 0, gammas)
        u_tok = _u01(rs, 1, gammas)
        u_qs = _u01(rs, 2, gammas)
        delivered = a == 1 and u_del < 1.0 - eps[e]
        if t > burn_in:
            age_hist[age] += 1
            qage_hist[q * (D + 1) + age] += 1
            tok_hist[b] += 1
            aoi_sum += age
            if qflag[q] == 1:
                qaoi_sum += age
                n_query += 1
            n_tx += a
            if delivered:
                n_del += 1
        if record:
            tr_age[t - 1] = age
            tr_tok[t - 1] = b
            tr_err[t - 1] = e + 1
            tr_qry[t - 1] = q + 1
            tr_act[t - 1] = a
            tr_del[t - 1] = 1 if delivered else 0
        age = 1 if delivered else (age + 1 if age < D else D)
        b = b - a + (1 if u_tok < mu else 0)
        if b > B:
            b = B
        e = _chain_step(pe_ptr, pe_idx, pe_p, e, u_es)
        q = _chain_step(pq_ptr, pq_idx, pq_p, q, u_qs)
    return aoi_sum, qaoi_sum, n_query, n_tx, n_del, age, b, e, q
