"""Order-arrival model: execution intensity as a function of quote distance.

A quote posted at premium ``delta`` from the mid is hit at rate
``A * exp(-k * delta)``.  Per simulation step, fills on each side are
independent Bernoulli events with probability ``min(rate * dt, 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .quotes import QuotePair

__all__ = ["ArrivalParams", "FillCounter", "intensity", "fill_probability", "sample_fills"]


@dataclass(frozen=True)
class ArrivalParams:
    """Base intensity ``A`` (fills/time) and decay rate ``k`` (1/currency)."""

    A: float
    k: float

    def __post_init__(self):
        if not (math.isfinite(self.A) and math.isfinite(self.k)):
            raise ValueError("ArrivalParams fields must be finite")
        if self.A <= 0 or self.k <= 0:
            raise ValueError("A and k must be positive")


@dataclass
class FillCounter:
    """Diagnostic counter for probabilities clipped at 1."""

    clipped: int = field(default=0)


def intensity(delta, params: ArrivalParams):
    """Execution rate ``A * exp(-k * delta)``.  Negative premiums are allowed
    (a quote may cross the mid); non-finite premiums are rejected."""
    delta = np.asarray(delta, dtype=np.float64)
    if not np.all(np.isfinite(delta)):
        raise ValueError("delta must be finite")
    out = params.A * np.exp(-params.k * delta)
    return float(out) if out.ndim == 0 else out


def fill_probability(delta, params: ArrivalParams, dt: float):
    """Per-step fill probability ``min(intensity * dt, 1)`` and the number of
    entries that needed clipping."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    raw = intensity(delta, params) * dt
    raw = np.asarray(raw)
    n_clipped = int(np.count_nonzero(raw > 1.0))
    prob = np.minimum(raw, 1.0)
    return (float(prob) if prob.ndim == 0 else prob), n_clipped


def sample_fills(
    quotes: "QuotePair",
    params: ArrivalParams,
    dt: float,
    draws: tuple[float, float],
    counter: FillCounter | None = None,
) -> tuple[bool, bool]:
    """Sample one step of ask/bid fills from two uniform draws.

    At most one fill per side per step; the two sides are independent.  When a
    probability exceeds 1 it is clipped and ``counter`` (if given) records it.
    """
    p_ask, clip_a = fill_probability(quotes.delta_a, params, dt)
    p_bid, clip_b = fill_probability(quotes.delta_b, params, dt)
    if counter is not None:
        counter.clipped += clip_a + clip_b
    u_ask, u_bid = draws
    return bool(u_ask < p_ask), bool(u_bid < p_bid)
