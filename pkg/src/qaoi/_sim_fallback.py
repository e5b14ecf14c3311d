"""Plain-Python simulator used under the numpy backend.

Reproduces :func:`qaoi._kernels.sim_loop` draw-for-draw: the uniforms are
pre-generated in vectorized blocks from the same SplitMix64 streams the
compiled kernel advances sequentially, so trajectories are bit-identical
across backends.  The slot loop itself stays in Python; this path is meant
for verification and modest horizons, not throughput.
"""

from __future__ import annotations

import numpy as np

from ._rng import stream_block

_BLOCK = 1 << 16


def _cum_rows(indptr, indices, probs):
    rows = []
    for i in range(len(indptr) - 1):
        lo, hi = int(indptr[i]), int(indptr[i + 1])
        cums = []
        acc = 0.0
        for k in range(lo, hi):
            acc += float(probs[k])
            cums.append((acc, int(indices[k])))
        rows.append(cums)
    return rows


def _step(row, u):
    nxt = row[0][1]
    for acc, j in row:
        nxt = j
        if u < acc:
            break
    return nxt


def sim_loop(
    policy, D, B,
    eps, pe_ptr, pe_idx, pe_p, pq_ptr, pq_idx, pq_p, qflag, mu,
    horizon, burn_in, age0, tok0, e0, q0,
    rs, gammas,
    age_hist, qage_hist, tok_hist,
    record, tr_age, tr_tok, tr_err, tr_qry, tr_act, tr_del,
):
    nE = len(eps)
    nQ = len(qflag)
    sB = nE * nQ
    eps_l = [float(x) for x in eps]
    qflag_l = [int(x) for x in qflag]
    pe_rows = _cum_rows(pe_ptr, pe_idx, pe_p)
    pq_rows = _cum_rows(pq_ptr, pq_idx, pq_p)
    pol = policy.tolist()
    mu = float(mu)

    age, b, e, q = int(age0), int(tok0), int(e0), int(q0)
    aoi_sum = qaoi_sum = n_query = n_tx = n_del = 0
    t = 0
    remaining = int(horizon)
    while remaining > 0:
        blk = min(_BLOCK, remaining)
        chan = stream_block(int(rs[0]), int(gammas[0]), 2 * blk)
        toks = stream_block(int(rs[1]), int(gammas[1]), blk)
        qrys = stream_block(int(rs[2]), int(gammas[2]), blk)
        with np.errstate(over="ignore"):
            rs[0] = rs[0] + np.uint64(2 * blk) * gammas[0]
            rs[1] = rs[1] + np.uint64(blk) * gammas[1]
            rs[2] = rs[2] + np.uint64(blk) * gammas[2]
        chan_l = chan.tolist()
        toks_l = toks.tolist()
        qrys_l = qrys.tolist()
        for k in range(blk):
            t += 1
            a = pol[((age - 1) * (B + 1) + b) * sB + e * nQ + q]
            u_del = chan_l[2 * k]
            u_es = chan_l[2 * k + 1]
            delivered = a == 1 and u_del < 1.0 - eps_l[e]
            if t > burn_in:
                age_hist[age] += 1
                qage_hist[q * (D + 1) + age] += 1
                tok_hist[b] += 1
                aoi_sum += age
                if qflag_l[q] == 1:
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
            b = b - a + (1 if toks_l[k] < mu else 0)
            if b > B:
                b = B
            e = _step(pe_rows[e], u_es)
            q = _step(pq_rows[q], qrys_l[k])
        remaining -= blk
    return aoi_sum, qaoi_sum, n_query, n_tx, n_del, age, b, e, q
