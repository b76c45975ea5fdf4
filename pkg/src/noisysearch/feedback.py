"""Comparative-feedback response model and Bayesian posterior tracking.

The search target is one of ``n`` known points.  Each round the searcher
shows ``k >= 2`` distinct candidate points and the responder picks one with
probability proportional to its similarity to the hidden target.  Similarity
decays with distance either polynomially (``d ** -theta``) or exponentially
(``exp(-theta * d)``); ``theta > 0`` is the responder's sharpness.

The searcher maintains a posterior over which point is the target.  Observing
a response first conditions the posterior on the target not being among the
shown points (the protocol would have terminated otherwise), then applies the
Bayes rule for the response distribution.  All entropies and divergences are
in bits.  Indices are 0-based throughout.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

MASS_ATOL = 1e-9
_QUERY_MASS_EPS = 1e-12


class ProtocolError(RuntimeError):
    """An operation was invoked outside the search protocol's contract."""


class SimilarityFamily(enum.Enum):
    POLYNOMIAL = "polynomial"
    EXPONENTIAL = "exponential"

    @classmethod
    def coerce(cls, value: "SimilarityFamily | str") -> "SimilarityFamily":
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower())


@dataclass(frozen=True)
class UserModel:
    """Similarity family plus the responder sharpness ``theta``."""

    family: SimilarityFamily
    theta: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", SimilarityFamily.coerce(self.family))
        object.__setattr__(self, "theta", float(self.theta))
        if not (self.theta > 0.0 and math.isfinite(self.theta)):
            raise ValueError(f"theta must be positive and finite, got {self.theta}")


def _pnorm(diff: np.ndarray, order: float) -> np.ndarray:
    """Length of each row vector of ``diff`` under the given p-norm."""
    mag = np.abs(diff)
    if math.isinf(order):
        return mag.max(axis=-1)
    if order == 1.0:
        return mag.sum(axis=-1)
    if order == 2.0:
        return np.sqrt((mag * mag).sum(axis=-1))
    return (mag**order).sum(axis=-1) ** (1.0 / order)


class Dataset:
    """Finite candidate set with a distance function and its minimal gap.

    1-D points must be strictly increasing; higher-dimensional points use a
    p-norm distance (``norm_order`` in ``[1, inf]``).  ``min_gap`` is the true
    minimum pairwise distance, precomputed at construction.
    """

    __slots__ = ("points", "dimension", "norm_order", "min_gap", "_neighbors")

    def __init__(self, points, norm_order: float = 2.0, *, validate: bool = True):
        pts = np.array(points, dtype=float)
        if pts.ndim not in (1, 2):
            raise ValueError("points must be a 1-D sequence or an (n, D) array")
        if pts.shape[0] < 2:
            raise ValueError("a dataset needs at least 2 points")
        self.points = pts
        self.dimension = 1 if pts.ndim == 1 else int(pts.shape[1])
        self.norm_order = float(norm_order)
        if self.dimension > 1 and not (1.0 <= self.norm_order):
            raise ValueError("norm_order must satisfy 1 <= p <= inf")
        if validate:
            if not np.isfinite(pts).all():
                raise ValueError("points must be finite")
            if self.dimension == 1 and np.any(np.diff(pts) <= 0):
                raise ValueError("1-D points must be strictly increasing")
        self.min_gap = self._compute_min_gap()
        if self.min_gap <= 0.0:
            raise ValueError("points must be pairwise distinct")
        self.points.setflags(write=False)
        self._neighbors = None

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @classmethod
    def uniform_grid(cls, n: int, spacing: float = 1.0, origin: float = 0.0) -> "Dataset":
        return cls(origin + spacing * np.arange(n, dtype=float))

    @classmethod
    def random_uniform(
        cls,
        n: int,
        dimension: int,
        *,
        seed=None,
        low: float = 0.0,
        high: float = 1.0,
        norm_order: float = 2.0,
    ) -> "Dataset":
        rng = np.random.default_rng(seed)
        if dimension == 1:
            pts = np.sort(rng.uniform(low, high, size=n))
            return cls(pts)
        return cls(rng.uniform(low, high, size=(n, dimension)), norm_order=norm_order)

    def _compute_min_gap(self) -> float:
        if self.dimension == 1:
            return float(np.diff(self.points).min())
        best = math.inf
        n = self.n
        for s in range(0, n, 512):
            block = self.points[s : s + 512, None, :] - self.points[None, :, :]
            d = _pnorm(block, self.norm_order)
            rows = np.arange(d.shape[0])
            d[rows, s + rows] = math.inf
            best = min(best, float(d.min()))
        return best

    def distances_from(self, index: int) -> np.ndarray:
        """Distances from point ``index`` to every point (self included)."""
        if self.dimension == 1:
            return np.abs(self.points - self.points[index])
        return _pnorm(self.points - self.points[index], self.norm_order)

    def distance(self, i: int, j: int) -> float:
        if self.dimension == 1:
            return abs(float(self.points[i]) - float(self.points[j]))
        return float(_pnorm(self.points[i] - self.points[j], self.norm_order))

    def neighbor_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-point neighbors by increasing distance: (sorted distances, order).

        Materializes the full n x n distance matrix; guarded against large n.
        """
        if self._neighbors is None:
            if self.n > 8192:
                raise MemoryError("neighbor table limited to n <= 8192 points")
            d = np.empty((self.n, self.n))
            for i in range(self.n):
                d[i] = self.distances_from(i)
            order = np.argsort(d, axis=1, kind="stable").astype(np.intp)
            self._neighbors = (np.take_along_axis(d, order, axis=1), order)
        return self._neighbors


class Posterior:
    """Probability vector over the candidate points with cached cumulative sums."""

    __slots__ = ("mass", "_cumulative")

    def __init__(self, mass, *, validate: bool = True):
        m = np.array(mass, dtype=float)
        if validate:
            if m.ndim != 1 or m.shape[0] < 1:
                raise ValueError("posterior mass must be a 1-D vector")
            if np.any(m < 0.0):
                raise ValueError("posterior mass must be nonnegative")
            total = float(m.sum())
            if abs(total - 1.0) > MASS_ATOL:
                raise ValueError(f"posterior mass must sum to 1, got {total!r}")
        m.setflags(write=False)
        self.mass = m
        self._cumulative = None

    @property
    def n(self) -> int:
        return int(self.mass.shape[0])

    @property
    def cumulative(self) -> np.ndarray:
        if self._cumulative is None:
            c = np.cumsum(self.mass)
            c.setflags(write=False)
            self._cumulative = c
        return self._cumulative

    @classmethod
    def uniform(cls, n: int) -> "Posterior":
        return cls(np.full(n, 1.0 / n), validate=False)

    @classmethod
    def point_mass(cls, n: int, index: int) -> "Posterior":
        m = np.zeros(n)
        m[index] = 1.0
        return cls(m, validate=False)


@dataclass(frozen=True)
class Query:
    """Ordered set of ``k >= 2`` distinct point indices shown in one round."""

    indices: tuple[int, ...]

    def __post_init__(self) -> None:
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if len(idx) < 2:
            raise ValueError("a query needs at least 2 points")
        if len(set(idx)) != len(idx):
            raise ValueError(f"query indices must be distinct, got {idx}")
        if any(i < 0 for i in idx):
            raise ValueError("query indices must be nonnegative")

    @property
    def k(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class ResponseDistribution:
    """Probabilities of the ``k`` possible responses for one query."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or p.shape[0] < 2:
            raise ValueError("a response distribution needs k >= 2 entries")
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("response probabilities must lie in [0, 1]")
        if abs(float(p.sum()) - 1.0) > MASS_ATOL:
            raise ValueError("response probabilities must sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def k(self) -> int:
        return int(self.probs.shape[0])


def similarity(x, y, model: UserModel, *, norm_order: float = 2.0) -> float:
    """Similarity of two points; errors on coincident points.

    The polynomial similarity diverges at distance zero, so callers must never
    compare a point with itself.
    """
    dx = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    d = abs(float(dx)) if dx.ndim == 0 else float(_pnorm(dx, norm_order))
    if d <= 0.0:
        raise ProtocolError("similarity is undefined for coincident points")
    if model.family is SimilarityFamily.POLYNOMIAL:
        return d**-model.theta
    return math.exp(-model.theta * d)


def _check_query(query: Query, n: int) -> None:
    if max(query.indices) >= n:
        raise ValueError(f"query indices out of range for n={n}: {query.indices}")


def _query_logits(data: Dataset, model: UserModel, query: Query) -> np.ndarray:
    """(n, k) log-similarity of every point to each query point."""
    _check_query(query, data.n)
    d = np.stack([data.distances_from(i) for i in query.indices], axis=1)
    if model.family is SimilarityFamily.POLYNOMIAL:
        with np.errstate(divide="ignore"):
            return -model.theta * np.log(d)
    return -model.theta * d


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax; rows containing +inf collapse to an exact point mass."""
    top = logits.max(axis=1, keepdims=True)
    hot = np.isposinf(top[:, 0])
    out = np.empty_like(logits)
    if hot.any():
        out[hot] = np.isposinf(logits[hot]).astype(float)
    fin = ~hot
    if fin.any():
        e = np.exp(logits[fin] - top[fin])
        out[fin] = e / e.sum(axis=1, keepdims=True)
    return out


def response_matrix(data: Dataset, model: UserModel, query: Query) -> np.ndarray:
    """Response distribution for every possible target; one row per point.

    Rows for the query points themselves carry the zero-distance limit: a
    certain own-point response under the polynomial family, and the ordinary
    finite weights under the exponential family.
    """
    return _softmax_rows(_query_logits(data, model, query))


def response_probs(
    data: Dataset, model: UserModel, query: Query, target_index: int
) -> ResponseDistribution:
    """Response distribution for a fixed target outside the query.

    Computed in log space, so exponential-family weights stay normalized even
    for very large ``theta * distance``.
    """
    _check_query(query, data.n)
    target_index = int(target_index)
    if target_index in query.indices:
        raise ProtocolError(
            "target is one of the query points; the search should have terminated"
        )
    d = np.array([data.distance(target_index, q) for q in query.indices])
    if model.family is SimilarityFamily.POLYNOMIAL:
        with np.errstate(divide="ignore"):
            logits = -model.theta * np.log(d)
    else:
        logits = -model.theta * d
    return ResponseDistribution(_softmax_rows(logits[None, :])[0])


def sample_response(dist: ResponseDistribution, rng: np.random.Generator) -> int:
    """Draw a response index; deterministic for a given generator state."""
    cum = np.cumsum(dist.probs)
    r = int(np.searchsorted(cum, rng.random(), side="right"))
    return min(r, dist.k - 1)


def marginal_response_probs(
    data: Dataset, model: UserModel, query: Query, posterior: Posterior
) -> ResponseDistribution:
    """Response distribution marginalized over the posterior.

    The posterior must already carry zero mass on the queried indices; mass
    there means the caller skipped conditioning on non-termination.
    """
    a = posterior.mass
    q = np.asarray(query.indices, dtype=np.intp)
    if float(a[q].sum()) > _QUERY_MASS_EPS:
        raise ProtocolError("posterior carries mass on queried points")
    marg = a @ response_matrix(data, model, query)
    return ResponseDistribution(marg / marg.sum())


def condition_on_miss(posterior: Posterior, query: Query) -> Posterior:
    """Condition on the target not being among the queried points."""
    a = np.array(posterior.mass)
    a[np.asarray(query.indices, dtype=np.intp)] = 0.0
    total = float(a.sum())
    if total <= _QUERY_MASS_EPS:
        raise ProtocolError(
            "all posterior mass sits on the queried points; the caller should "
            "have terminated"
        )
    return Posterior(a / total, validate=False)


def posterior_update(
    posterior: Posterior,
    data: Dataset,
    model: UserModel,
    query: Query,
    response: int,
) -> Posterior:
    """Bayes update after observing ``response`` to ``query``.

    First zeroes the queried indices and renormalizes (a surviving response
    is evidence the target was not shown), then reweights by each point's
    probability of producing the observed response and renormalizes by the
    exact sum to stop drift over long episodes.
    """
    response = int(response)
    if not 0 <= response < query.k:
        raise ValueError(f"response must be in [0, {query.k}), got {response}")
    cond = condition_on_miss(posterior, query)
    w = cond.mass * response_matrix(data, model, query)[:, response]
    z = float(w.sum())
    if z <= 0.0:
        raise ProtocolError("observed response has zero probability under the model")
    return Posterior(w / z, validate=False)


def quantile_index(posterior: Posterior, p: float) -> int:
    """Smallest index whose cumulative mass reaches ``p`` (0 < p <= 1).

    A ``p`` equal to some cumulative value returns that index (the boundary
    goes left).
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"quantile level must be in (0, 1], got {p}")
    c = posterior.cumulative
    return min(int(np.searchsorted(c, p, side="left")), posterior.n - 1)


def entropy(dist) -> float:
    """Shannon entropy in bits, with the 0 * log 0 = 0 convention."""
    a = dist.mass if isinstance(dist, Posterior) else np.asarray(dist, dtype=float)
    nz = a[a > 0.0]
    return float(-(nz * np.log2(nz)).sum())


def kl_divergence(a, b) -> float:
    """KL divergence D(a || b) in bits; requires support(a) within support(b)."""
    av = a.mass if isinstance(a, Posterior) else np.asarray(a, dtype=float)
    bv = b.mass if isinstance(b, Posterior) else np.asarray(b, dtype=float)
    if av.shape != bv.shape:
        raise ValueError("distributions must have the same length")
    sup = av > 0.0
    if np.any(bv[sup] <= 0.0):
        raise ValueError("support of the first argument exceeds the second's")
    return float((av[sup] * np.log2(av[sup] / bv[sup])).sum())


def kl_bernoulli(p: float, q: float) -> float:
    """KL divergence between (p, 1-p) and (q, 1-q), in bits."""
    return kl_divergence(np.array([p, 1.0 - p]), np.array([q, 1.0 - q]))


def _mixture_gain(a: np.ndarray, probs: np.ndarray) -> float:
    """Weighted divergence of per-target responses from their mixture."""
    sup = a > 0.0
    w = a[sup]
    p = probs[sup]
    marg = w @ p
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log2(p / marg), 0.0)
    return float((w * terms.sum(axis=1)).sum())


def expected_info_gain(
    posterior: Posterior, data: Dataset, model: UserModel, query: Query
) -> float:
    """Expected entropy drop of one Bayes update, in bits.

    Equals the posterior-weighted divergence of each point's response
    distribution from the marginal.  Requires zero posterior mass on the
    queried indices.
    """
    a = posterior.mass
    q = np.asarray(query.indices, dtype=np.intp)
    if float(a[q].sum()) > _QUERY_MASS_EPS:
        raise ProtocolError("posterior carries mass on queried points")
    return _mixture_gain(a, response_matrix(data, model, query))


def expected_round_gain(
    posterior: Posterior, data: Dataset, model: UserModel, query: Query
) -> float:
    """Expected per-round information, counting mass still on the query points.

    Queried points respond with their zero-distance limit distributions, so
    this is the round's gain for the full pre-round posterior, termination
    branch included.  Used for per-round gain accounting in the harness.
    """
    return _mixture_gain(posterior.mass, response_matrix(data, model, query))
