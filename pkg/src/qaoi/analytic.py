"""Closed-form age distributions for feedback-free schedules.

These laws cover the tractable special case: a memoryless erasure channel
with rate ``epsilon``, queries exactly every ``query_period`` slots, and an
open-loop transmitter limited to a duty cycle of ``duty_cycle`` attempts
per slot on average.  Two canonical schedules are covered:

* equally spaced: one attempt every ``spacing`` slots, aligned so an
  attempt lands exactly on each query slot (``pmf_pq_*``),
* pre-query burst: all ``duty_cycle * query_period`` attempts packed into
  the slots just before each query (``pmf_qapa_*``).

``*_aoi`` laws give the age distribution over all slots, ``*_qaoi`` the
distribution sampled at query instants.  Every function takes the slot
value(s) ``t >= 1`` and a :class:`SimpleCaseParams`, vectorizes over
arrays, and returns probabilities.  The laws are exact; the Monte Carlo
suite checks :mod:`qaoi.simulate` against them.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class SimpleCaseParams:
    """Channel, query cadence, and duty cycle of the feedback-free case.

    ``spacing`` (slots between attempts of the equally-spaced schedule)
    defaults to ``1 / duty_cycle`` and must divide the query period so the
    schedule aligns with the queries.  ``offset`` delays every query by
    that many slots relative to the aligned schedules; it shifts the
    query-sampled laws and leaves the all-slot laws unchanged.
    """

    epsilon: float
    query_period: int
    duty_cycle: float
    spacing: int | None = None
    offset: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= float(self.epsilon) < 1.0:
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if int(self.query_period) < 1:
            raise ValueError(f"query_period must be >= 1, got {self.query_period}")
        if not 0.0 < float(self.duty_cycle) <= 1.0:
            raise ValueError(f"duty_cycle must lie in (0, 1], got {self.duty_cycle}")
        burst = float(self.duty_cycle) * int(self.query_period)
        if abs(burst - round(burst)) > 1e-9 or round(burst) < 1:
            raise ValueError(
                f"duty_cycle * query_period must be a positive integer, got {burst}"
            )
        if self.offset < 0:
            raise ValueError(f"offset must be >= 0, got {self.offset}")
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "query_period", int(self.query_period))
        object.__setattr__(self, "duty_cycle", float(self.duty_cycle))
        object.__setattr__(self, "offset", int(self.offset))
        if self.spacing is not None:
            object.__setattr__(self, "spacing", int(self.spacing))

    @property
    def burst(self) -> int:
        """Attempts per query period."""
        return round(self.duty_cycle * self.query_period)

    @property
    def resolved_spacing(self) -> int:
        """Attempt spacing of the equally-spaced schedule; must tile the period."""
        spacing = self.spacing
        if spacing is None:
            raw = 1.0 / self.duty_cycle
            spacing = round(raw)
            if abs(raw - spacing) > 1e-9:
                raise ValueError(
                    f"1/duty_cycle = {raw} is not a whole spacing; pass one explicitly"
                )
        if spacing < 1 or self.query_period % spacing != 0:
            raise ValueError(
                f"spacing {spacing} does not divide the period {self.query_period}"
            )
        if self.query_period // spacing != self.burst:
            raise ValueError(
                f"spacing {spacing} spends {self.query_period // spacing} attempts "
                f"per period, the duty cycle allows {self.burst}"
            )
        return spacing


def _as_ages(t) -> tuple[np.ndarray, bool]:
    arr = np.asarray(t)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if not np.issubdtype(arr.dtype, np.integer):
        rounded = np.rint(arr)
        if not np.all(np.isfinite(arr)) or np.any(np.abs(arr - rounded) > 0):
            raise ValueError("ages must be integers")
        arr = rounded
    arr = arr.astype(np.int64)
    if np.any(arr < 1):
        raise ValueError("ages start at 1")
    return arr, scalar


def _ret(p: np.ndarray, scalar: bool):
    return float(p[0]) if scalar else p


def pmf_pq_aoi(t, params: SimpleCaseParams):
    """Age over all slots under the equally-spaced schedule.

    Every slot sits some ``0..spacing-1`` slots past the newest landing
    opportunity, and the age grows by one spacing per consecutive failure:
    ``P(age = t) = (1 - eps) * eps**((t-1) // spacing) / spacing``.
    """
    ages, scalar = _as_ages(t)
    spacing = params.resolved_spacing
    eps = params.epsilon
    p = (1.0 - eps) * eps ** ((ages - 1) // spacing) / spacing
    return _ret(p, scalar)


def pmf_pq_qaoi(t, params: SimpleCaseParams):
    """Age at query instants under the equally-spaced schedule.

    Queries land ``offset`` slots after an attempt's landing slot, so the
    support is ``offset + 1 + k * spacing`` with weight
    ``(1 - eps) * eps**k``.
    """
    ages, scalar = _as_ages(t)
    spacing = params.resolved_spacing
    if not 0 <= params.offset < spacing:
        raise ValueError("offset must lie within one attempt spacing")
    eps = params.epsilon
    shifted = ages - params.offset
    k = (shifted - 1) // spacing
    on_support = (shifted >= 1) & ((shifted - 1) % spacing == 0)
    p = np.where(on_support, (1.0 - eps) * eps ** np.maximum(k, 0), 0.0)
    return _ret(p, scalar)


def pmf_qapa_qaoi(t, params: SimpleCaseParams):
    """Age at query instants under the pre-query burst schedule.

    The j-th burst slot before the query gives age j when it is the newest
    delivery; k whole periods of failed bursts add ``k * burst`` failures
    and ``k * query_period`` slots:
    ``P(age = offset + k*period + j) = (1 - eps) * eps**(k*burst + j - 1)``
    for ``j = 1..burst``.
    """
    ages, scalar = _as_ages(t)
    period = params.query_period
    m = params.burst
    if not 0 <= params.offset <= period - m:
        raise ValueError("offset must keep the burst within one period")
    eps = params.epsilon
    shifted = ages - params.offset
    k = np.maximum((shifted - 1) // period, 0)
    j = shifted - k * period
    on_support = (shifted >= 1) & (j >= 1) & (j <= m)
    p = np.where(on_support, (1.0 - eps) * eps ** (k * m + np.maximum(j, 1) - 1), 0.0)
    return _ret(p, scalar)


@lru_cache(maxsize=128)
def _burst_first_period(eps: float, period: int, m: int) -> np.ndarray:
    """P(age = 1..period) for the burst schedule, by landing-phase sweep.

    Phase 0 is the query slot; landings occur at phases
    ``{0, period-m+1, ..., period-1}``.  For each current phase the ages of
    past landing opportunities are enumerated oldest-first; the age ``a``
    opportunity is the newest delivery iff it succeeded and the ``c``
    opportunities fresher than it all failed.
    """
    landing = {0} | {period - m + r for r in range(1, m)}
    table = np.zeros(period + 1)
    for phi in range(period):
        c = 0
        for a in range(1, period + 1):
            if (phi - a + 1) % period in landing:
                table[a] += (1.0 - eps) * eps**c / period
                c += 1
    table.setflags(write=False)
    return table


def pmf_qapa_aoi(t, params: SimpleCaseParams):
    """Age over all slots under the pre-query burst schedule (exact).

    Within any window of ``query_period`` consecutive ages every phase
    passes exactly ``burst`` landing opportunities, so the law one period
    out is the current one scaled by ``eps**burst``; the first period is
    enumerated directly.
    """
    ages, scalar = _as_ages(t)
    period = params.query_period
    m = params.burst
    table = _burst_first_period(params.epsilon, period, m)
    k = (ages - 1) // period
    base = (ages - 1) % period + 1
    p = table[base] * (params.epsilon**m) ** k
    return _ret(p, scalar)


def pmf_qapa_aoi_compact(t, params: SimpleCaseParams):
    """Single-sum shortcut for the burst-schedule age over all slots.

    Sums a geometric block per current period:
    ``sum_{n=1}^{max(t - period*floor(t/period), burst)}
    (1-eps) * eps**(floor(t/period)*burst + n - 1) / period``.
    It undercounts fresh ages and misses cross-period carryover, so it does
    not normalize (the tests pin the gap); kept for comparison only, use
    :func:`pmf_qapa_aoi`.
    """
    ages, scalar = _as_ages(t)
    period = params.query_period
    m = params.burst
    eps = params.epsilon
    k = ages // period
    upper = np.maximum(ages - period * k, m)
    # geometric partial sum of the n-indexed terms
    p = (eps ** (k * m)) * (1.0 - eps**upper) / period
    return _ret(p, scalar)


def tabulate_pmf(pmf, params: SimpleCaseParams, t_max: int) -> np.ndarray:
    """``table[t] = pmf(t)`` for ``t = 1..t_max`` (index 0 is zero)."""
    table = np.zeros(t_max + 1)
    table[1:] = pmf(np.arange(1, t_max + 1), params)
    return table


def ccdf_from_pmf(table: np.ndarray) -> np.ndarray:
    """``ccdf[d] = P(X > d)`` from a pmf table indexed by value."""
    return 1.0 - np.cumsum(table)
