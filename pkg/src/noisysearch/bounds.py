"""Closed-form performance constants for the search strategies.

Everything here is a deterministic formula of the problem parameters: the
per-round gain floor and query bound of the quantile-pair strategy, the
own-point response floor and gain floor of the k-interval strategy, and the
query-complexity lower bounds attached to the adversarial instance.  All
information quantities are in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .feedback import kl_bernoulli


@dataclass(frozen=True)
class BoundReport:
    """A named bound value plus the inputs it was computed from."""

    name: str
    value: float
    units: str  # "queries" | "bits" | "probability"
    inputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "units": self.units,
            "inputs": dict(self.inputs),
        }


def response_split(theta: float) -> tuple[float, float]:
    """Worst-case near/far response split of the quantile-pair strategy.

    Returns ``(rho, phi)``: the minimum probability of picking the nearer
    query point when the target sits at most half as far from it, and the
    midpoint mixture ``1/4 + rho/2`` used in the gain floor.
    """
    if theta <= 0.0:
        raise ValueError("theta must be positive")
    rho = 1.0 / (1.0 + 2.0**-theta)
    return rho, 0.25 + 0.5 * rho


def quantile_gain_floor(theta: float) -> float:
    """Guaranteed expected information per non-degenerate quantile-pair round."""
    rho, phi = response_split(theta)
    return 0.25 * (kl_bernoulli(rho, phi) + kl_bernoulli(0.5, phi))


def quantile_query_bound(n: int, theta: float) -> BoundReport:
    """Expected-query upper bound of the quantile-pair strategy (polynomial family)."""
    if n < 2:
        raise ValueError("n must be at least 2")
    floor = quantile_gain_floor(theta)
    rho, phi = response_split(theta)
    return BoundReport(
        name="quantile-pair-query-bound",
        value=4.0 * math.log2(n) / floor + 4.0,
        units="queries",
        inputs={"n": n, "theta": theta, "rho": rho, "phi": phi, "gain_floor": floor},
    )


def own_point_response_floor(theta: float, min_gap: float) -> float:
    """Minimum probability of picking one's own interval's query point.

    Holds for points closer to their own interval's query point than to any
    other under the exponential family; depends on the dataset's minimal gap
    and theta but not on k.  The inner exponential is the natural base.
    """
    u = theta * min_gap
    if u <= 0.0:
        raise ValueError("theta and min_gap must be positive")
    return 1.0 / (1.0 + 2.0 * math.exp(-u) * (1.0 + 1.0 / u))


def kary_gain_floor(beta: float, k: int) -> float:
    """Guaranteed expected information per successful k-interval round.

    ``beta`` is the own-point response floor.  Grows as ``beta * log2(k) / 28``
    for large k; exactly zero at the symmetric point ``beta = 1/k``.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    if k < 2:
        raise ValueError("k must be at least 2")
    val = beta * math.log2(beta * k) + (1.0 - beta) * math.log2(
        (1.0 - beta) * k / (k - 1.0)
    )
    return val / 28.0


def kary_gain_report(theta: float, min_gap: float, k: int) -> BoundReport:
    beta = own_point_response_floor(theta, min_gap)
    return BoundReport(
        name="k-interval-gain-floor",
        value=kary_gain_floor(beta, k),
        units="bits",
        inputs={"theta": theta, "min_gap": min_gap, "k": k, "beta": beta},
    )


def adversarial_horizon(n: int, k: int) -> tuple[float, float]:
    """Horizon tau and expected-query lower bound for the adversarial instance.

    Up to round tau the chance of having shown the (uniformly random) target
    stays below one half, so any algorithm needs at least ``tau / 2`` queries
    in expectation.  Requires ``k >= 3`` and ``n > 2k``.
    """
    if k < 3:
        raise ValueError("the lower bound needs k >= 3")
    if n <= 2 * k:
        raise ValueError("the lower bound needs n > 2k")
    tau = math.log2(n / (2.0 * k)) / (math.log2(math.log2(k)) + 2.0)
    return tau, tau / 2.0


def adversarial_lower_bound(n: int, k: int) -> BoundReport:
    tau, expected = adversarial_horizon(n, k)
    return BoundReport(
        name="adversarial-query-lower-bound",
        value=expected,
        units="queries",
        inputs={"n": n, "k": k, "horizon": tau},
    )


def adversarial_success_bound(n: int, k: int, t: int) -> float:
    """Upper bound on the chance the round-t query contains the target.

    For a uniformly random target on the adversarial instance the probability
    is at most ``(k/n) * (4 log2 k) ** (t-1)``, clamped to 1.
    """
    if k < 3:
        raise ValueError("the success bound needs k >= 3")
    if t < 1:
        raise ValueError("t must be at least 1")
    return min(1.0, (k / n) * (4.0 * math.log2(k)) ** (t - 1))
