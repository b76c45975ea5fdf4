"""Episode and experiment runners with seeded, replayable randomness.

An episode plays one full search: the strategy proposes queries from the
posterior it maintains with the *assumed* model, while responses are sampled
from the *true* model, so parameter-mismatch studies fall out naturally.  An
experiment expands a base configuration over a grid of field overrides and
aggregates per-cell query-count statistics, attaching the relevant analytic
bound.  Every episode's generator is derived from (master seed, cell index,
episode index), so results are independent of execution order and reruns are
byte-identical.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bounds as _bounds
from .adversarial import generate_instance
from .feedback import (
    Dataset,
    Posterior,
    ProtocolError,
    SimilarityFamily,
    UserModel,
    entropy,
    expected_round_gain,
    posterior_update,
    response_probs,
    sample_response,
)
from .strategies import StrategyError, StrategyKind, select_query

SPEC_VERSION = 1
RESULT_SCHEMA_VERSION = 1
DEFAULT_SEED = 1729


@dataclass
class DatasetSpec:
    """Declarative dataset description; `build()` materializes it."""

    kind: str  # uniform-grid | adversarial | random | explicit
    n: int = 0
    dimension: int = 1
    spacing: float = 1.0
    origin: float = 0.0
    norm_order: float = 2.0
    theta: float = 1.0
    x1: float = 0.0
    x2: float = 1.0
    seed: int = 0
    low: float = 0.0
    high: float = 1.0
    points: list | None = None

    def build(self) -> Dataset:
        if self.kind == "uniform-grid":
            return Dataset.uniform_grid(self.n, spacing=self.spacing, origin=self.origin)
        if self.kind == "adversarial":
            return generate_instance(self.n, self.theta, self.x1, self.x2).dataset()
        if self.kind == "random":
            return Dataset.random_uniform(
                self.n,
                self.dimension,
                seed=self.seed,
                low=self.low,
                high=self.high,
                norm_order=self.norm_order,
            )
        if self.kind == "explicit":
            if not self.points:
                raise ValueError("explicit dataset needs points")
            return Dataset(np.asarray(self.points, dtype=float), norm_order=self.norm_order)
        raise ValueError(f"unknown dataset kind: {self.kind}")

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "n": self.n,
            "dimension": self.dimension,
            "spacing": self.spacing,
            "origin": self.origin,
            "norm_order": self.norm_order if math.isfinite(self.norm_order) else "inf",
            "theta": self.theta,
            "x1": self.x1,
            "x2": self.x2,
            "seed": self.seed,
            "low": self.low,
            "high": self.high,
        }
        if self.points is not None:
            d["points"] = [list(p) if isinstance(p, (list, tuple)) else float(p) for p in self.points]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        d = dict(d)
        if d.get("norm_order") == "inf":
            d["norm_order"] = math.inf
        return cls(**d)


@dataclass
class ModelSpec:
    family: str = "polynomial"
    theta: float = 1.0

    def to_model(self) -> UserModel:
        return UserModel(SimilarityFamily.coerce(self.family), self.theta)

    def to_dict(self) -> dict:
        return {"family": self.family, "theta": self.theta}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


@dataclass
class EpisodeConfig:
    """One cell of a search experiment.

    ``user`` generates responses; ``algorithm`` is the model the searcher
    assumes for its posterior updates, so the two may disagree.
    """

    dataset: DatasetSpec
    user: ModelSpec = field(default_factory=ModelSpec)
    algorithm: ModelSpec = field(default_factory=ModelSpec)
    strategy: str = "binary-quantile"
    k: int = 2
    max_queries: int | None = None
    target_index: int | None = None
    record_transcript: bool = False
    record_gains: bool = True
    verify: bool = True

    def resolved_max_queries(self, n: int) -> int:
        if self.max_queries is not None:
            return self.max_queries
        return 50 * max(1, math.ceil(math.log2(max(n, 2))))

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset.to_dict(),
            "user": self.user.to_dict(),
            "algorithm": self.algorithm.to_dict(),
            "strategy": str(StrategyKind.coerce(self.strategy).value),
            "k": self.k,
            "max_queries": self.max_queries,
            "target_index": self.target_index,
            "record_transcript": self.record_transcript,
            "record_gains": self.record_gains,
            "verify": self.verify,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeConfig":
        d = dict(d)
        d["dataset"] = DatasetSpec.from_dict(d["dataset"])
        d["user"] = ModelSpec.from_dict(d.get("user", {}))
        d["algorithm"] = ModelSpec.from_dict(d.get("algorithm", {}))
        return cls(**d)


@dataclass
class EpisodeResult:
    target_index: int
    queries: int
    terminated: bool
    failed: bool = False
    failure: str | None = None
    initial_entropy: float = 0.0
    final_entropy: float = 0.0
    realized_gains: list[float] = field(default_factory=list)
    expected_gains: list[float] = field(default_factory=list)
    degenerate_rounds: list[bool] = field(default_factory=list)
    fallback_rounds: int = 0
    min_own_response: float = math.inf
    transcript: list | None = None

    def to_dict(self) -> dict:
        d = {
            "target_index": self.target_index,
            "queries": self.queries,
            "terminated": self.terminated,
            "failed": self.failed,
            "failure": self.failure,
            "initial_entropy": self.initial_entropy,
            "final_entropy": self.final_entropy,
            "fallback_rounds": self.fallback_rounds,
        }
        if self.transcript is not None:
            d["transcript"] = self.transcript
        return d


def episode_rng(master_seed: int, cell_index: int, episode_index: int) -> np.random.Generator:
    """Generator for one episode; parallel-safe and order-independent."""
    return np.random.default_rng([master_seed, cell_index, episode_index])


def run_episode(
    config: EpisodeConfig,
    rng: np.random.Generator,
    *,
    dataset: Dataset | None = None,
) -> EpisodeResult:
    """Play one search episode to termination or the query cap."""
    data = dataset if dataset is not None else config.dataset.build()
    n = data.n
    target = (
        int(config.target_index)
        if config.target_index is not None
        else int(rng.integers(n))
    )
    user = config.user.to_model()
    algo = config.algorithm.to_model()
    kind = StrategyKind.coerce(config.strategy)
    cap = config.resolved_max_queries(n)
    posterior = Posterior.uniform(n)
    h = entropy(posterior)
    result = EpisodeResult(
        target_index=target,
        queries=0,
        terminated=False,
        initial_entropy=h,
        final_entropy=h,
        transcript=[] if config.record_transcript else None,
    )
    for _ in range(cap):
        try:
            query, info = select_query(
                kind,
                data,
                posterior,
                k=config.k,
                model=algo,
                rng=rng,
                verify=config.verify,
            )
        except StrategyError as exc:
            result.failed = True
            result.failure = f"strategy: {exc}"
            break
        result.queries += 1
        if config.record_gains:
            result.expected_gains.append(expected_round_gain(posterior, data, algo, query))
            result.degenerate_rounds.append(bool(info.degenerate))
        if info.used_fallback:
            result.fallback_rounds += 1
        if info.min_own_response is not None:
            result.min_own_response = min(result.min_own_response, info.min_own_response)
        if target in query.indices:
            result.terminated = True
            if result.transcript is not None:
                result.transcript.append({"query": list(query.indices), "response": "found"})
            break
        r = sample_response(response_probs(data, user, query, target), rng)
        try:
            updated = posterior_update(posterior, data, algo, query, r)
        except ProtocolError as exc:
            result.failed = True
            result.failure = f"update: {exc}"
            break
        h_next = entropy(updated)
        result.realized_gains.append(h - h_next)
        h = h_next
        posterior = updated
        if result.transcript is not None:
            result.transcript.append({"query": list(query.indices), "response": int(r)})
    result.final_entropy = h
    return result


def _set_dotted(d: dict, path: str, value) -> None:
    keys = path.split(".")
    for key in keys[:-1]:
        d = d[key]
    d[keys[-1]] = value


@dataclass
class ExperimentSpec:
    """Grid of episode configurations plus per-cell episode count."""

    base: EpisodeConfig
    axes: dict[str, list] = field(default_factory=dict)
    episodes: int = 100
    master_seed: int = DEFAULT_SEED
    record_episodes: bool = False

    def cells(self) -> list[EpisodeConfig]:
        if not self.axes:
            return [EpisodeConfig.from_dict(self.base.to_dict())]
        names = list(self.axes.keys())
        out = []
        for combo in itertools.product(*(self.axes[name] for name in names)):
            d = self.base.to_dict()
            for name, value in zip(names, combo):
                _set_dotted(d, name, value)
            out.append(EpisodeConfig.from_dict(d))
        return out

    def to_dict(self) -> dict:
        return {
            "spec_version": SPEC_VERSION,
            "base": self.base.to_dict(),
            "axes": {k: list(v) for k, v in self.axes.items()},
            "episodes": self.episodes,
            "master_seed": self.master_seed,
            "record_episodes": self.record_episodes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        version = d.get("spec_version")
        if version != SPEC_VERSION:
            raise ValueError(f"unsupported spec_version {version!r}, expected {SPEC_VERSION}")
        return cls(
            base=EpisodeConfig.from_dict(d["base"]),
            axes={k: list(v) for k, v in d.get("axes", {}).items()},
            episodes=int(d.get("episodes", 100)),
            master_seed=int(d.get("master_seed", DEFAULT_SEED)),
            record_episodes=bool(d.get("record_episodes", False)),
        )

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        try:
            payload = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}") from exc
        return cls.from_dict(payload)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")


@dataclass
class CellResult:
    index: int
    config: EpisodeConfig
    episodes: int
    completed: int
    unterminated: int
    failed: int
    mean: float
    median: float
    p95: float
    stderr: float
    bound: _bounds.BoundReport | None = None
    query_counts: list[int] = field(default_factory=list)
    records: list[dict] | None = None

    def to_dict(self, *, with_counts: bool = True) -> dict:
        d = {
            "index": self.index,
            "config": self.config.to_dict(),
            "episodes": self.episodes,
            "completed": self.completed,
            "unterminated": self.unterminated,
            "failed": self.failed,
            "mean": self.mean,
            "median": self.median,
            "p95": self.p95,
            "stderr": self.stderr,
            "bound": self.bound.to_dict() if self.bound else None,
        }
        if with_counts:
            d["query_counts"] = list(self.query_counts)
        if self.records is not None:
            d["records"] = self.records
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CellResult":
        bound = d.get("bound")
        return cls(
            index=int(d["index"]),
            config=EpisodeConfig.from_dict(d["config"]),
            episodes=int(d["episodes"]),
            completed=int(d["completed"]),
            unterminated=int(d["unterminated"]),
            failed=int(d["failed"]),
            mean=float(d["mean"]),
            median=float(d["median"]),
            p95=float(d["p95"]),
            stderr=float(d["stderr"]),
            bound=_bounds.BoundReport(**bound) if bound else None,
            query_counts=[int(q) for q in d.get("query_counts", [])],
            records=d.get("records"),
        )


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    cells: list[CellResult]

    def to_dict(self) -> dict:
        return {
            "schema_version": RESULT_SCHEMA_VERSION,
            "spec": self.spec.to_dict(),
            "cells": [c.to_dict() for c in self.cells],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentResult":
        return cls(
            spec=ExperimentSpec.from_dict(d["spec"]),
            cells=[CellResult.from_dict(c) for c in d["cells"]],
        )


def bound_for_cell(config: EpisodeConfig) -> _bounds.BoundReport | None:
    """Analytic bound relevant to one cell, if any."""
    kind = StrategyKind.coerce(config.strategy)
    n = config.dataset.n
    if config.dataset.kind == "adversarial" and config.k >= 3 and n > 2 * config.k:
        return _bounds.adversarial_lower_bound(n, config.k)
    algo = config.algorithm
    if kind is StrategyKind.BINARY_QUANTILE and algo.family == "polynomial":
        return _bounds.quantile_query_bound(n, algo.theta)
    if kind is StrategyKind.KARY_INTERVALS and n >= 2 and config.k >= 2:
        return _bounds.BoundReport(
            name="k-interval-trend",
            value=math.log2(n) / math.log2(config.k) if config.k > 1 else math.inf,
            units="queries",
            inputs={"n": n, "k": config.k},
        )
    return None


def _aggregate_cell(
    index: int,
    config: EpisodeConfig,
    episode_results: list[EpisodeResult],
    record_episodes: bool,
) -> CellResult:
    ok = [r for r in episode_results if not r.failed]
    counts = np.array([r.queries for r in ok], dtype=float)
    if counts.size:
        mean = float(counts.mean())
        median = float(np.median(counts))
        p95 = float(np.percentile(counts, 95))
        stderr = float(counts.std(ddof=1) / math.sqrt(counts.size)) if counts.size > 1 else 0.0
    else:
        mean = median = p95 = stderr = float("nan")
    return CellResult(
        index=index,
        config=config,
        episodes=len(episode_results),
        completed=len(ok),
        unterminated=sum(1 for r in ok if not r.terminated),
        failed=sum(1 for r in episode_results if r.failed),
        mean=mean,
        median=median,
        p95=p95,
        stderr=stderr,
        bound=bound_for_cell(config),
        query_counts=[r.queries for r in ok],
        records=[r.to_dict() for r in episode_results] if record_episodes else None,
    )


def _run_cell_episodes(
    config: EpisodeConfig, master_seed: int, cell_index: int, episode_range: range
) -> list[EpisodeResult]:
    data = config.dataset.build()
    return [
        run_episode(config, episode_rng(master_seed, cell_index, ep), dataset=data)
        for ep in episode_range
    ]


def _worker(args) -> tuple[int, int, list[EpisodeResult]]:
    config_dict, master_seed, cell_index, start, stop = args
    config = EpisodeConfig.from_dict(config_dict)
    return cell_index, start, _run_cell_episodes(config, master_seed, cell_index, range(start, stop))


def default_workers() -> int:
    value = os.environ.get("NOISY_SEARCH_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def run_experiment(spec: ExperimentSpec, *, workers: int | None = None) -> ExperimentResult:
    """Run every cell; partial failures are recorded per cell, never raised.

    With ``workers > 1`` episodes run in separate processes; aggregation is
    ordered by (cell, episode) index regardless of completion order.
    """
    workers = default_workers() if workers is None else max(1, workers)
    cells = spec.cells()
    results: list[CellResult] = []
    if workers == 1:
        for ci, config in enumerate(cells):
            episodes = _run_cell_episodes(config, spec.master_seed, ci, range(spec.episodes))
            results.append(_aggregate_cell(ci, config, episodes, spec.record_episodes))
        return ExperimentResult(spec=spec, cells=results)
    tasks = []
    chunk = max(1, math.ceil(spec.episodes / workers))
    for ci, config in enumerate(cells):
        for start in range(0, spec.episodes, chunk):
            stop = min(start + chunk, spec.episodes)
            tasks.append((config.to_dict(), spec.master_seed, ci, start, stop))
    slots: dict[int, dict[int, list[EpisodeResult]]] = {ci: {} for ci in range(len(cells))}
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for ci, start, episode_results in pool.map(_worker, tasks):
            slots[ci][start] = episode_results
    for ci, config in enumerate(cells):
        ordered = [r for start in sorted(slots[ci]) for r in slots[ci][start]]
        results.append(_aggregate_cell(ci, config, ordered, spec.record_episodes))
    return ExperimentResult(spec=spec, cells=results)


def mismatch_sweep(
    base: EpisodeConfig,
    assumed_thetas: list[float],
    *,
    episodes: int,
    master_seed: int = DEFAULT_SEED,
    workers: int | None = None,
) -> ExperimentResult:
    """One cell per assumed sharpness; the true sharpness stays fixed.

    The grid must contain the true value so the matched cell is always
    available for comparison.
    """
    truth = base.user.theta
    if not any(t == truth for t in assumed_thetas):
        raise ValueError(f"assumed-theta grid must include the true value {truth}")
    spec = ExperimentSpec(
        base=base,
        axes={"algorithm.theta": list(assumed_thetas)},
        episodes=episodes,
        master_seed=master_seed,
    )
    return run_experiment(spec, workers=workers)


# --- persistence ------------------------------------------------------------


def save_result_json(result: ExperimentResult, path) -> None:
    Path(path).write_text(json.dumps(result.to_dict(), sort_keys=True, indent=2) + "\n")


def result_to_json_bytes(result: ExperimentResult) -> bytes:
    return (json.dumps(result.to_dict(), sort_keys=True, indent=2) + "\n").encode()


def load_result_json(path) -> ExperimentResult:
    """Load a results document; checks the schema version, round-trips exactly."""
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}") from exc
    version = payload.get("schema_version")
    if version != RESULT_SCHEMA_VERSION:
        raise ValueError(
            f"{path}: unsupported schema_version {version!r}, expected {RESULT_SCHEMA_VERSION}"
        )
    return ExperimentResult.from_dict(payload)


CSV_COLUMNS = [
    "strategy",
    "family",
    "n",
    "k",
    "theta_true",
    "theta_assumed",
    "episodes",
    "mean",
    "median",
    "p95",
    "stderr",
    "bound",
]


def save_result_csv(result: ExperimentResult, path) -> None:
    """One row per cell with the headline statistics."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for cell in result.cells:
            cfg = cell.config
            writer.writerow(
                [
                    str(StrategyKind.coerce(cfg.strategy).value),
                    cfg.algorithm.family,
                    cfg.dataset.n,
                    cfg.k,
                    cfg.user.theta,
                    cfg.algorithm.theta,
                    cell.episodes,
                    cell.mean,
                    cell.median,
                    cell.p95,
                    cell.stderr,
                    cell.bound.value if cell.bound else "",
                ]
            )
