"""Nudge response model.

Three response shapes over the number ``n`` of nudges received in the
trailing window:

* ``decay_f``: largest with no nudges, decays exponentially.
* ``decay_g``: rises then fades (novelty followed by fatigue).
* ``decay_h``: rises with diminishing returns and saturates at ``c0``.

A user's activity response is ``alpha*f + beta*g + gamma*h``. It is turned
into an engagement multiplier ``sigma`` relative to the no-nudge response,
and ``sigma`` rescales the engagement part of every transient row of the
baseline transition matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .env_model import DecayParams, TransitionMatrix, UserModel

SINGULAR_TOL = 1e-9
SIGMA_MIN = 0.05
SIGMA_MAX = 20.0
P_OUT_FLOOR = 0.01


@dataclass(frozen=True)
class ActivityResponse:
    value: float
    n: int


@dataclass(frozen=True)
class EngagementMultiplier:
    sigma: float


def decay_f(n: float, p: DecayParams) -> float:
    return p.a0 * math.exp(-p.k_a * n)


def decay_g(n: float, p: DecayParams) -> float:
    ka, kb = p.k_a, p.k_b
    if abs(ka - kb) < SINGULAR_TOL:
        return p.b0 * ka * n * math.exp(-ka * n)
    return p.b0 * ka * (math.exp(-ka * n) - math.exp(-kb * n)) / (kb - ka)


def decay_h(n: float, p: DecayParams) -> float:
    ka, kb = p.k_a, p.k_b
    if abs(ka - kb) < SINGULAR_TOL:
        return p.c0 * (1.0 - math.exp(-ka * n) * (1.0 + ka * n))
    # expm1 keeps the small-n differences accurate
    return p.c0 * (ka * math.expm1(-kb * n) - kb * math.expm1(-ka * n)) / (kb - ka)


def activity_response(n: int, user: UserModel, p: DecayParams) -> ActivityResponse:
    value = user.alpha * decay_f(n, p) + user.beta * decay_g(n, p) + user.gamma * decay_h(n, p)
    return ActivityResponse(value, n)


def nudge_count(history, current_day: int, d: int) -> int:
    """Delivered nudges with day in ``(current_day - d, current_day]``.

    ``history`` is any iterable of ``(day, nudge_type, delivered)``.
    """
    lo = current_day - d
    return sum(1 for day, _, delivered in history if delivered and lo < day <= current_day)


def recent_nudge_count(history, current_day: int, d: int) -> int:
    """Same as ``nudge_count`` for a history appended in nondecreasing day order.

    Scans from the end and stops at the first entry older than the window.
    """
    lo = current_day - d
    count = 0
    for day, _, delivered in reversed(history):
        if day <= lo:
            break
        if delivered and day <= current_day:
            count += 1
    return count


def engagement_multiplier(user: UserModel, n: int, p: DecayParams) -> EngagementMultiplier:
    if n == 0:
        return EngagementMultiplier(1.0)
    base = activity_response(0, user, p).value
    now = activity_response(n, user, p).value
    sigma = (1.0 + now) / (1.0 + base)
    return EngagementMultiplier(min(SIGMA_MAX, max(SIGMA_MIN, sigma)))


def modulate_matrix(base: TransitionMatrix, sigma: float, p_out_floor: float = P_OUT_FLOOR) -> TransitionMatrix:
    """Scale every transient row's engagement mass by ``sigma``.

    The probability of leaving the app absorbs the difference. If the scaled
    engagement mass would leave less than ``p_out_floor`` for leaving, the
    engagement entries are rescaled to sum to ``1 - p_out_floor``.
    ``sigma == 1`` returns ``base`` itself.
    """
    if sigma == 1.0:
        return base
    out = base.out_index
    rows = []
    for i, row in enumerate(base.rows):
        if i == out:
            rows.append(row)
            continue
        engaged = math.fsum(p for j, p in enumerate(row) if j != out)
        # one factor per row keeps entries monotone in sigma under rounding
        factor = sigma
        if engaged > 0:
            factor = min(sigma, (1.0 - p_out_floor) / engaged)
        scaled = [0.0 if j == out else p * factor for j, p in enumerate(row)]
        scaled[out] = 1.0 - math.fsum(scaled)
        rows.append(tuple(scaled))
    return TransitionMatrix(base.states, tuple(rows), base.initial)
