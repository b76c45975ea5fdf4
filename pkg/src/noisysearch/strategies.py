"""Query-selection policies mapping (dataset, posterior, model, k) to a query.

Three constructions carry guarantees:

* ``select_binary_quantile`` — splits the 1-D posterior at its quartiles and
  queries the endpoints of the interval next to the shortest one, away from
  the extremes.  Every point of the shortest interval is then at most half as
  far from the shared endpoint as from the other, which forces a constant
  expected information gain per non-degenerate round.
* ``select_dball`` — D-dimensional analogue: finds the smallest ball holding a
  fixed probability mass, queries a point inside it and the nearest
  positive-mass point outside a 7x guard ball, giving 3:1 / 2:1 distance
  separations for the inner and outer point groups.
* ``select_kary_intervals`` — for the exponential family, picks k disjoint
  minimal-length intervals each holding mass at least ``1/(14k-12)``,
  separated by at least the shorter neighbor's length, and queries one
  endpoint of each (the one with the lighter half of the interval behind it).

``select_topk_fallback``, ``select_random_baseline`` and
``select_median_bisection`` are control arms and the fallback for failed
interval constructions.

All selectors are pure functions of their inputs (the random baseline also of
the generator state) and return ``(Query, SelectionInfo)``.  Geometry checks
guarding the constructions run per call unless ``verify=False``; a failed
check raises ``InvariantViolation`` and indicates an implementation bug, not
an unlucky input.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import own_point_response_floor
from .feedback import (
    Dataset,
    Posterior,
    Query,
    SimilarityFamily,
    UserModel,
    quantile_index,
)

_REL_TOL = 1e-9
_ABS_TOL = 1e-12


class StrategyError(RuntimeError):
    """A selector cannot produce a legal query for the given state."""


class InvariantViolation(AssertionError):
    """A per-call geometry check failed; the construction is buggy."""


class StrategyKind(enum.Enum):
    BINARY_QUANTILE = "binary-quantile"
    DBALL = "dball"
    KARY_INTERVALS = "kary-intervals"
    TOPK_FALLBACK = "topk-fallback"
    RANDOM_BASELINE = "random-baseline"
    MEDIAN_BISECTION = "median-bisection"

    @classmethod
    def coerce(cls, value: "StrategyKind | str") -> "StrategyKind":
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower())


@dataclass(frozen=True)
class IntervalSet:
    """Disjoint index intervals with per-interval mass and gap guarantees."""

    bounds: tuple[tuple[int, int], ...]  # inclusive (lo, hi) index pairs
    mass_floor: float

    def __len__(self) -> int:
        return len(self.bounds)

    def __iter__(self):
        return iter(self.bounds)

    def __getitem__(self, item):
        return self.bounds[item]


@dataclass
class SelectionInfo:
    """Diagnostics attached to one selection."""

    degenerate: bool = False
    used_fallback: bool = False
    note: str | None = None
    intervals: IntervalSet | None = None
    min_own_response: float | None = None


def _positive_indices(posterior: Posterior) -> np.ndarray:
    return np.flatnonzero(posterior.mass > 0.0)


def _nearest_distinct(data: Dataset, posterior: Posterior, index: int) -> int:
    """Closest other point, preferring positive-mass candidates; ties go low."""
    d = data.distances_from(index)
    d[index] = math.inf
    pos = posterior.mass > 0.0
    pos[index] = False
    if pos.any():
        cand = np.flatnonzero(pos)
        return int(cand[np.argmin(d[cand])])
    return int(np.argmin(d))


def _pad_to_pair(data: Dataset, posterior: Posterior, chosen: list[int]) -> list[int]:
    # degenerate posteriors can leave a single legal point; a query still
    # needs two, so borrow the nearest other point
    if len(chosen) >= 2:
        return chosen
    if not chosen:
        raise StrategyError("no candidate points with positive mass")
    partner = _nearest_distinct(data, posterior, chosen[0])
    return sorted([chosen[0], partner])


def select_binary_quantile(
    data: Dataset, posterior: Posterior, *, verify: bool = True
) -> tuple[Query, SelectionInfo]:
    """Quartile-interval endpoint query (k = 2, 1-D).

    Marks the quartile points of the posterior, forming four position
    intervals.  The shortest interval (lowest index on ties) names its
    neighbor that avoids the extreme points; that neighbor's endpoints are the
    query.  If those endpoints coincide (a zero-length interval means a single
    point holds a quarter of the mass), the query is that heavy point plus its
    nearest distinct neighbor, which restarts the search if the heavy point is
    not the target.
    """
    if data.dimension != 1:
        raise StrategyError("binary-quantile needs 1-D data")
    if data.n < 2:
        raise StrategyError("need at least 2 points to query")
    x = data.points
    marks = (
        0,
        quantile_index(posterior, 0.25),
        quantile_index(posterior, 0.5),
        quantile_index(posterior, 0.75),
        data.n - 1,
    )
    lengths = [float(x[marks[s + 1]] - x[marks[s]]) for s in range(4)]
    smallest = int(np.argmin(lengths))
    chosen = (1, 2, 1, 2)[smallest]
    lo, hi = marks[chosen], marks[chosen + 1]
    degenerate = min(lengths) == 0.0
    if lo == hi:
        partner = _nearest_distinct(data, posterior, lo)
        pair = tuple(sorted((lo, partner)))
        return Query(pair), SelectionInfo(degenerate=True)
    if verify and not degenerate:
        shared, far = (lo, hi) if smallest < chosen else (hi, lo)
        seg = x[marks[smallest] : marks[smallest + 1] + 1]
        near_d = np.abs(seg - x[shared])
        far_d = np.abs(seg - x[far])
        if not np.all(2.0 * near_d <= far_d * (1.0 + _REL_TOL) + _ABS_TOL):
            raise InvariantViolation(
                "2:1 distance ratio failed for the shortest quartile interval"
            )
    return Query((lo, hi)), SelectionInfo(degenerate=degenerate)


def select_median_bisection(
    data: Dataset, posterior: Posterior
) -> tuple[Query, SelectionInfo]:
    """Noisy-bisection control: the two points straddling the posterior median."""
    if data.dimension != 1:
        raise StrategyError("median-bisection needs 1-D data")
    if data.n < 2:
        raise StrategyError("need at least 2 points to query")
    m = quantile_index(posterior, 0.5)
    if m >= data.n - 1:
        m = data.n - 2
    return Query((m, m + 1)), SelectionInfo()


def select_topk_fallback(
    posterior: Posterior, k: int, *, data: Dataset | None = None
) -> tuple[Query, SelectionInfo]:
    """The k highest-mass points (ties to the lower index).

    With fewer than k positive-mass points, queries all of them; a dataset may
    be supplied so a lone survivor can be paired with its nearest neighbor.
    """
    a = posterior.mass
    order = np.argsort(-a, kind="stable")
    pos = int((a > 0.0).sum())
    chosen = [int(i) for i in order[: min(k, pos)]]
    if len(chosen) < 2:
        if data is None:
            chosen = [int(i) for i in order[:2]]
        else:
            chosen = _pad_to_pair(data, posterior, chosen)
    return Query(tuple(sorted(chosen))), SelectionInfo()


def select_random_baseline(
    data: Dataset,
    posterior: Posterior,
    k: int,
    rng: np.random.Generator,
) -> tuple[Query, SelectionInfo]:
    """Control arm: k positive-mass points drawn uniformly without replacement."""
    cand = _positive_indices(posterior)
    if cand.size <= k:
        chosen = [int(i) for i in cand]
        chosen = _pad_to_pair(data, posterior, chosen)
    else:
        chosen = sorted(int(i) for i in rng.choice(cand, size=k, replace=False))
    return Query(tuple(chosen)), SelectionInfo()


# --- smallest mass-holding ball -------------------------------------------


def _min_mass_ball(data: Dataset, posterior: Posterior, mass_floor: float) -> tuple[int, float]:
    """Center index and radius of the smallest ball with the required mass.

    Candidate balls are centered on data points with radii from the pairwise
    distance multiset.  Radius ties break toward larger ball mass, then the
    lower center index.  Works column-block-wise over each center's
    distance-sorted neighbors so concentrated posteriors stay cheap.
    """
    dist_sorted, order = data.neighbor_table()
    a = posterior.mass
    n = data.n
    radius = np.full(n, np.nan)
    active = np.arange(n)
    cols = 32
    while active.size:
        j = min(cols, n)
        cum = np.cumsum(a[order[active, :j]], axis=1)
        hit = cum >= mass_floor - 1e-15
        reached = hit[:, -1]
        pos = np.argmax(hit, axis=1)
        rows = active[reached]
        radius[rows] = dist_sorted[rows, pos[reached]]
        rest = active[~reached]
        if rest.size and j < n:
            best = np.nanmin(radius) if not np.all(np.isnan(radius)) else np.inf
            rest = rest[dist_sorted[rest, j - 1] <= best]
        elif j >= n:
            rest = rest[:0]
        active = rest
        cols *= 4
    r_star = float(np.nanmin(radius))
    cands = np.flatnonzero(radius == r_star)
    if r_star == 0.0:
        # zero-radius balls hold exactly their center's mass (points are distinct)
        best = int(cands[np.argmax(a[cands])])
        return best, r_star
    best_key = None
    best_center = -1
    for c in cands:
        cnt = int(np.searchsorted(dist_sorted[c], r_star, side="right"))
        m = float(a[order[c, :cnt]].sum())
        key = (-m, int(c))
        if best_key is None or key < best_key:
            best_key, best_center = key, int(c)
    return best_center, r_star


def _check_ball_separation(
    data: Dataset,
    posterior: Posterior,
    center: int,
    radius: float,
    q1: int,
    q2: int,
) -> None:
    dc = data.distances_from(center)
    d1 = data.distances_from(q1)
    d2 = data.distances_from(q2)
    inside = dc <= radius
    if not np.all(3.0 * d1[inside] <= d2[inside] * (1.0 + _REL_TOL) + _ABS_TOL):
        raise InvariantViolation("in-ball points not 3x closer to the inner query point")
    outer = (dc > 7.0 * radius) & (posterior.mass > 0.0)
    if not np.all(2.0 * d1[outer] * (1.0 + _REL_TOL) + _ABS_TOL >= d2[outer]):
        raise InvariantViolation("outer points not 2x closer to the outer query point")


def select_dball(
    data: Dataset, posterior: Posterior, *, verify: bool = True
) -> tuple[Query, SelectionInfo]:
    """Smallest-mass-ball query (k = 2, any dimension).

    ``q1`` is the heaviest point inside the smallest ball holding mass at
    least ``(14 D)^-D / 2``; ``q2`` is the positive-mass point nearest ``q1``
    outside the concentric ball of 7x the radius.  Every in-ball point is then
    at least 3x closer to ``q1`` and every point beyond the guard ball at
    least 2x closer to ``q2``.  Should no positive-mass point lie outside the
    guard ball, falls back to the two heaviest points.
    """
    dim = data.dimension
    mass_floor = 0.5 * float((14.0 * dim) ** (-dim))
    center, radius = _min_mass_ball(data, posterior, mass_floor)
    a = posterior.mass
    dc = data.distances_from(center)
    inside = np.flatnonzero(dc <= radius)
    q1 = int(inside[np.argmax(a[inside])])
    outer = np.flatnonzero((dc > 7.0 * radius) & (a > 0.0))
    if outer.size == 0:
        order = np.argsort(-a, kind="stable")
        pair = (int(order[0]), int(order[1]))
        return Query(pair), SelectionInfo(
            used_fallback=True, note="no positive-mass point outside the guard ball"
        )
    d1 = data.distances_from(q1)
    q2 = int(outer[np.argmin(d1[outer])])
    if verify:
        _check_ball_separation(data, posterior, center, radius, q1, q2)
    return Query((q1, q2)), SelectionInfo()


# --- k disjoint minimal intervals ------------------------------------------


def interval_mass_floor(k: int) -> float:
    """Per-interval probability mass required by the k-interval construction."""
    if k < 2:
        raise ValueError("k must be at least 2")
    return 1.0 / (14.0 * k - 12.0)


def _build_intervals(x: np.ndarray, pref: np.ndarray, k: int, floor: float):
    """Left-to-right greedy: grow to the mass floor, shrink from the left,
    then skip past a gap of the finished interval's own length (which always
    satisfies the min-of-neighbors gap rule without lookahead)."""
    n = x.shape[0]
    cum = pref[1:]
    out: list[tuple[int, int]] = []
    start = 0
    while len(out) < k and start < n:
        end = int(np.searchsorted(cum, pref[start] + floor - _ABS_TOL, side="left"))
        if end >= n:
            break
        lo = int(np.searchsorted(pref, cum[end] - floor + _ABS_TOL, side="right")) - 1
        lo = min(max(lo, start), end)
        out.append((lo, end))
        length = float(x[end] - x[lo])
        nxt = int(np.searchsorted(x, x[end] + length, side="left"))
        start = max(end + 1, nxt)
    return out


def _check_interval_set(
    x: np.ndarray, pref: np.ndarray, ivals: list[tuple[int, int]], floor: float
) -> None:
    for lo, hi in ivals:
        if pref[hi + 1] - pref[lo] < floor - 1e-9:
            raise InvariantViolation("interval mass below the required floor")
        if not (pref[lo + 1] - pref[lo] > 0.0 and pref[hi + 1] - pref[hi] > 0.0):
            raise InvariantViolation("interval endpoint carries no mass")
    for (lo_a, hi_a), (lo_b, hi_b) in zip(ivals, ivals[1:]):
        if lo_b <= hi_a:
            raise InvariantViolation("intervals are not disjoint")
        gap = float(x[lo_b] - x[hi_a])
        shorter = min(float(x[hi_a] - x[lo_a]), float(x[hi_b] - x[lo_b]))
        if gap < shorter - _REL_TOL * max(abs(shorter), 1.0):
            raise InvariantViolation("interval gap below the shorter neighbor's length")


def _check_own_response_floor(
    data: Dataset,
    posterior: Posterior,
    model: UserModel,
    ivals: list[tuple[int, int]],
    qs: list[int],
) -> float:
    """Exponential-family check: interval points nearest their own query point
    answer with it with probability at least the own-point floor."""
    x = data.points
    beta = own_point_response_floor(model.theta, data.min_gap)
    pts = np.concatenate([np.arange(lo, hi + 1) for lo, hi in ivals])
    owner = np.concatenate(
        [np.full(hi - lo + 1, j, dtype=np.intp) for j, (lo, hi) in enumerate(ivals)]
    )
    d = np.abs(x[pts, None] - x[np.asarray(qs)][None, :])
    own_d = d[np.arange(pts.size), owner]
    rival = np.array(d)
    rival[np.arange(pts.size), owner] = np.inf
    member = own_d < rival.min(axis=1)
    if not member.any():
        return math.inf
    logits = -model.theta * d[member]
    w = np.exp(logits - logits.max(axis=1, keepdims=True))
    p_own = w[np.arange(int(member.sum())), owner[member]] / w.sum(axis=1)
    worst = float(p_own.min())
    if worst < beta - 1e-9:
        raise InvariantViolation(
            f"own-point response probability {worst:.6f} below floor {beta:.6f}"
        )
    return worst


def select_kary_intervals(
    data: Dataset,
    posterior: Posterior,
    k: int,
    model: UserModel,
    *,
    verify: bool = True,
) -> tuple[Query | None, SelectionInfo]:
    """k disjoint minimal-length intervals, one endpoint queried per interval.

    Per interval, the queried endpoint is the one whose half of the interval
    holds at least as much mass (ties keep the left endpoint).  Returns
    ``(None, info)`` when fewer than k intervals fit, signaling the caller to
    fall back to the top-k query; that only happens once few heavy points
    dominate the posterior.  Valid for any family but the own-point response
    floor is only checked for the exponential one.
    """
    if data.dimension != 1:
        raise StrategyError("kary-intervals needs 1-D data")
    if k < 2:
        raise StrategyError("kary-intervals needs k >= 2")
    x = data.points
    pref = np.concatenate(([0.0], posterior.cumulative))
    floor = interval_mass_floor(k)
    ivals = _build_intervals(x, pref, k, floor)
    if len(ivals) < k:
        return None, SelectionInfo(used_fallback=True, note="interval construction failed")
    qs: list[int] = []
    for lo, hi in ivals:
        mid = 0.5 * (float(x[lo]) + float(x[hi]))
        last_left = int(np.searchsorted(x, mid, side="right")) - 1
        first_right = int(np.searchsorted(x, mid, side="left"))
        first = float(pref[min(last_left, hi) + 1] - pref[lo]) if last_left >= lo else 0.0
        second = float(pref[hi + 1] - pref[max(first_right, lo)])
        qs.append(lo if first >= second else hi)
    info = SelectionInfo(intervals=IntervalSet(tuple(ivals), floor))
    if verify:
        _check_interval_set(x, pref, ivals, floor)
        if model.family is SimilarityFamily.EXPONENTIAL:
            info.min_own_response = _check_own_response_floor(
                data, posterior, model, ivals, qs
            )
    return Query(tuple(qs)), info


def select_query(
    kind: StrategyKind | str,
    data: Dataset,
    posterior: Posterior,
    *,
    k: int = 2,
    model: UserModel | None = None,
    rng: np.random.Generator | None = None,
    verify: bool = True,
) -> tuple[Query, SelectionInfo]:
    """Dispatch a strategy by kind, applying its k/dimension requirements.

    The k-interval strategy silently falls back to the top-k query when its
    construction fails; ``info.used_fallback`` records that.
    """
    kind = StrategyKind.coerce(kind)
    if kind is StrategyKind.BINARY_QUANTILE:
        if k != 2:
            raise StrategyError("binary-quantile requires k = 2")
        return select_binary_quantile(data, posterior, verify=verify)
    if kind is StrategyKind.MEDIAN_BISECTION:
        if k != 2:
            raise StrategyError("median-bisection requires k = 2")
        return select_median_bisection(data, posterior)
    if kind is StrategyKind.DBALL:
        if k != 2:
            raise StrategyError("dball requires k = 2")
        return select_dball(data, posterior, verify=verify)
    if kind is StrategyKind.KARY_INTERVALS:
        if model is None:
            raise StrategyError("kary-intervals needs the assumed user model")
        query, info = select_kary_intervals(data, posterior, k, model, verify=verify)
        if query is None:
            query, _ = select_topk_fallback(posterior, k, data=data)
            info.used_fallback = True
            return query, info
        return query, info
    if kind is StrategyKind.TOPK_FALLBACK:
        return select_topk_fallback(posterior, k, data=data)
    if kind is StrategyKind.RANDOM_BASELINE:
        if rng is None:
            raise StrategyError("random-baseline needs a random generator")
        return select_random_baseline(data, posterior, k, rng)
    raise StrategyError(f"unknown strategy kind: {kind}")
