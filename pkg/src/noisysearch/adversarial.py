"""Hard 1-D instances that suppress informative responses.

The points grow geometrically so that, under the polynomial similarity, every
point is at least half as similar to the far-left anchor as to any other
point.  Any sorted query then gets its j-th point chosen with probability at
most ``2/j`` regardless of the target, which caps how fast any algorithm can
localize a uniformly random target.

The generator realizes the defining ratio exactly; the verification helpers
check the construction and the response-decay bound exhaustively (or by
sampling, for large instances) and report the worst case found.  A violation
means an implementation bug, not an unlucky draw.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .feedback import Dataset, Query, SimilarityFamily, UserModel, response_matrix


@dataclass(frozen=True)
class AdversarialInstance:
    theta: float
    x1: float
    x2: float
    points: np.ndarray

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    def dataset(self) -> Dataset:
        return Dataset(self.points)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "theta": self.theta,
            "x1": self.x1,
            "x2": self.x2,
            "points": [float(p) for p in self.points],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdversarialInstance":
        pts = np.asarray(d["points"], dtype=float)
        if int(d["n"]) != pts.shape[0]:
            raise ValueError("instance header n disagrees with the point count")
        return cls(theta=float(d["theta"]), x1=float(d["x1"]), x2=float(d["x2"]), points=pts)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "AdversarialInstance":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _recurse_points(n: int, theta: float, x1: float, x2: float) -> np.ndarray | None:
    """Apply the recursion; None if any point overflows or stalls."""
    gamma = 2.0 ** (-1.0 / theta)
    pts = np.empty(n)
    pts[0], pts[1] = x1, x2
    with np.errstate(over="ignore"):
        for i in range(2, n):
            nxt = (pts[i - 1] - x1 * gamma) / (1.0 - gamma)
            if not math.isfinite(nxt) or nxt <= pts[i - 1]:
                return None
            pts[i] = nxt
    return pts


def max_feasible_n(theta: float, x1: float = 0.0, x2: float = 1.0) -> int:
    """Largest n whose last point is still finite in double precision."""
    gamma = 2.0 ** (-1.0 / theta)
    # x_i - x1 = (x2 - x1) / (1 - gamma)^(i - 2), so budget the exponent
    span = x2 - x1
    estimate = int(math.log(np.finfo(float).max / span) / -math.log1p(-gamma)) + 2
    if estimate > 1_000_000:  # far beyond anything generable in memory
        return estimate
    for n in range(estimate + 2, 2, -1):
        if _recurse_points(n, theta, x1, x2) is not None:
            return n
    return 2


def generate_instance(
    n: int, theta: float, x1: float = 0.0, x2: float = 1.0
) -> AdversarialInstance:
    """Generate the geometric instance; refuses n that would overflow.

    Each new point is placed so the gap to its predecessor, as a fraction of
    the distance back to the first point, is exactly ``2 ** (-1/theta)``.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if theta <= 0.0:
        raise ValueError("theta must be positive")
    if not x1 < x2:
        raise ValueError("need x1 < x2")
    pts = _recurse_points(n, theta, x1, x2)
    if pts is None:
        raise ValueError(
            f"points overflow for n={n}; the largest representable n for "
            f"theta={theta} from ({x1}, {x2}) is {max_feasible_n(theta, x1, x2)}"
        )
    return AdversarialInstance(theta=float(theta), x1=float(x1), x2=float(x2), points=pts)


def recursion_defect(instance: AdversarialInstance) -> float:
    """Worst relative deviation of the defining gap ratio from one half."""
    x = instance.points
    worst = 0.0
    for i in range(2, instance.n):
        ratio = (x[i] - x[i - 1]) / (x[i] - x[0])
        worst = max(worst, abs(ratio**instance.theta - 0.5) / 0.5)
    return worst


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of an exhaustive or sampled falsification run."""

    name: str
    passed: bool
    checked: int
    max_ratio: float
    worst_case: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "checked": self.checked,
            "max_ratio": self.max_ratio,
            "worst_case": dict(self.worst_case),
        }


def verify_similarity_dominance(instance: AdversarialInstance) -> VerificationReport:
    """Check that no point is more than twice as similar to any other point
    as to the first point.  Ratios are evaluated in log space."""
    x = instance.points
    theta = instance.theta
    n = instance.n
    with np.errstate(divide="ignore"):
        logd = np.log(np.abs(x[:, None] - x[None, :]))
    worst = -math.inf
    worst_case: dict = {}
    checked = 0
    for row in range(1, n):  # row 0 compares against itself at distance 0
        # log of S(x_row, x_i) / (2 S(x_row, x_1)) for all i != row
        excess = theta * (logd[row, 0] - logd[row]) - math.log(2.0)
        excess[row] = -math.inf
        checked += n - 1
        i = int(np.argmax(excess))
        if excess[i] > worst:
            worst = float(excess[i])
            worst_case = {"x_index": row, "other_index": i}
    max_ratio = math.exp(worst)
    return VerificationReport(
        name="similarity-dominance",
        passed=max_ratio <= 1.0 + 1e-9,
        checked=checked,
        max_ratio=max_ratio,
        worst_case=worst_case,
    )


def _decay_ratios(data: Dataset, model: UserModel, query: Query) -> np.ndarray:
    """probs[j] * (j+1) / 2 for every non-query target; at most 1 when the
    response-decay bound holds."""
    probs = response_matrix(data, model, query)
    mask = np.ones(data.n, dtype=bool)
    mask[list(query.indices)] = False
    scale = (np.arange(query.k) + 1.0) / 2.0
    return probs[mask] * scale[None, :]


def verify_response_decay(
    instance: AdversarialInstance,
    k: int,
    *,
    max_exhaustive: int = 500_000,
    samples: int = 100_000,
    rng: np.random.Generator | None = None,
) -> VerificationReport:
    """Check that the j-th query point is chosen with probability <= 2/j.

    Enumerates every sorted k-subset as a query when that is affordable,
    otherwise samples random queries.  Returns the worst observed ratio
    ``prob * j / 2`` and its location.
    """
    data = instance.dataset()
    model = UserModel(SimilarityFamily.POLYNOMIAL, instance.theta)
    n = instance.n
    total = math.comb(n, k) * max(n - k, 1)
    worst = -math.inf
    worst_case: dict = {}
    checked = 0

    def consider(query: Query) -> None:
        nonlocal worst, worst_case, checked
        ratios = _decay_ratios(data, model, query)
        checked += ratios.size
        j = np.unravel_index(int(np.argmax(ratios)), ratios.shape)
        if ratios[j] > worst:
            worst = float(ratios[j])
            targets = [i for i in range(n) if i not in query.indices]
            worst_case = {
                "query": list(query.indices),
                "target": targets[j[0]],
                "response": int(j[1]),
            }

    if total <= max_exhaustive:
        for comb in itertools.combinations(range(n), k):
            consider(Query(comb))
    else:
        rng = rng or np.random.default_rng(0)
        draws = max(1, samples // max(n - k, 1))
        for _ in range(draws):
            comb = np.sort(rng.choice(n, size=k, replace=False))
            consider(Query(tuple(int(c) for c in comb)))
    return VerificationReport(
        name="response-decay",
        passed=worst <= 1.0 + 1e-9,
        checked=checked,
        max_ratio=worst,
        worst_case=worst_case,
    )
