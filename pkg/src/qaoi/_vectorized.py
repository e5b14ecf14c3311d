"""Vectorized (pure numpy) counterparts of the solver kernels.

These carry the value table as a ``(delta_max, bucket_size+1, nE, nQ)``
array and express one backup as a handful of tensor contractions.  They
are the solve path under the numpy backend and double as an independent
implementation that the tests compare against the loop kernels.

Unlike the in-place loop sweeps these are Jacobi (out-of-place) sweeps;
both iterate to the same fixed point.
"""

from __future__ import annotations

import numpy as np

from .model import KernelArrays


def _dense(indptr, indices, probs, n):
    m = np.zeros((n, n))
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        m[i, indices[lo:hi]] = probs[lo:hi]
    return m


class VectorizedBackup:
    """Precomputed index maps for repeated backups on one model."""

    def __init__(self, ka: KernelArrays):
        self.ka = ka
        self.nE = len(ka.eps)
        self.nQ = len(ka.qflag)
        self.shape = (ka.delta_max, ka.bucket_size + 1, self.nE, self.nQ)
        self.pe = _dense(ka.pe_indptr, ka.pe_indices, ka.pe_probs, self.nE)
        self.pq = _dense(ka.pq_indptr, ka.pq_indices, ka.pq_probs, self.nQ)
        D, B = ka.delta_max, ka.bucket_size
        self.age_up = np.minimum(np.arange(D) + 1, D - 1)
        ages_next = np.minimum(np.arange(D) + 2, D).astype(np.float64)
        self.ages_next = ages_next[:, None, None, None]
        b = np.arange(B + 1)
        # token index after (gain, no-gain) for each action; the a=1 maps
        # are only read at b >= 1, the b=0 column is masked out later
        self.tok_up = {0: np.minimum(b + 1, B), 1: np.minimum(np.maximum(b - 1, 0) + 1, B)}
        self.tok_dn = {0: b, 1: np.maximum(b - 1, 0)}

    def expected_next(self, v4: np.ndarray) -> np.ndarray:
        """E[v(next err, next query)] contracted over both chains."""
        x = v4 @ self.pq.T
        return np.einsum("ef,dbfq->dbeq", self.pe, x)

    def action_values(self, v4: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Backed-up Q tables for both actions; Q1 is inf where b == 0."""
        ka = self.ka
        ev = self.expected_next(v4)
        out = []
        for a in (0, 1):
            mixed = ka.token_rate * ev[:, self.tok_up[a], :, :] + (
                1.0 - ka.token_rate
            ) * ev[:, self.tok_dn[a], :, :]
            p1 = (a * (1.0 - ka.eps))[None, None, :, None]
            nxt = p1 * mixed[:1, ...] + (1.0 - p1) * mixed[self.age_up, ...]
            ec = p1 * 1.0 + (1.0 - p1) * self.ages_next
            if ka.qapa:
                ec = ec * ka.qmass[None, None, None, :]
            out.append(ec + ka.discount * nxt)
        q0, q1 = out
        q1[:, 0, :, :] = np.inf
        return q0, q1

    def eval_step(self, v4: np.ndarray, policy4: np.ndarray) -> tuple[np.ndarray, float]:
        q0, q1 = self.action_values(v4)
        v_new = np.where(policy4 == 1, q1, q0)
        return v_new, float(np.max(np.abs(v_new - v4)))

    def vi_step(self, v4: np.ndarray) -> tuple[np.ndarray, float]:
        q0, q1 = self.action_values(v4)
        v_new = np.minimum(q0, q1)
        return v_new, float(np.max(np.abs(v_new - v4)))

    def greedy(self, v4: np.ndarray) -> np.ndarray:
        q0, q1 = self.action_values(v4)
        return (q1 < q0).astype(np.int8)
