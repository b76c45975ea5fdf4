"""Command-line entry point.

Subcommands: ``run`` (execute an experiment spec), ``verify`` (falsification
checks of the model identities and the adversarial construction),
``gen-adversarial`` (emit a hard instance as JSON), ``bounds`` (print the
analytic constants), ``serve`` (session service), ``demo`` (interactive
terminal session).

Exit codes: 0 success, 1 usage error, 2 a verification found a violation.
All randomness flows from ``--seed`` (printed, default fixed).  Output paths
are never overwritten without ``--force``.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import adversarial as adv
from . import bounds as bnd
from .feedback import (
    Dataset,
    Posterior,
    SimilarityFamily,
    UserModel,
    entropy,
    expected_info_gain,
    kl_divergence,
    marginal_response_probs,
    posterior_update,
)
from .harness import (
    DEFAULT_SEED,
    ExperimentSpec,
    default_workers,
    run_experiment,
    save_result_csv,
    save_result_json,
)
from .strategies import Query, StrategyKind, select_query

VERIFY_CHECKS = (
    "recursion",
    "similarity-dominance",
    "response-decay",
    "info-gain-identity",
    "mixture-bound",
)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _guard_out(path: str, force: bool) -> Path:
    out = Path(path)
    if out.exists() and not force:
        raise SystemExit(f"refusing to overwrite {out}; pass --force")
    return out


def _check_info_gain_identity(args) -> tuple[bool, str]:
    """Expected gain equals the response-weighted entropy drop, per instance."""
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.samples):
        n = int(rng.integers(3, 9))
        k = int(rng.integers(2, min(n, 4)))
        data = Dataset(np.sort(rng.uniform(0.0, 10.0, size=n)) + np.arange(n) * 1e-3)
        family = rng.choice([SimilarityFamily.POLYNOMIAL, SimilarityFamily.EXPONENTIAL])
        model = UserModel(family, float(rng.uniform(0.3, 2.5)))
        q = Query(tuple(int(i) for i in np.sort(rng.choice(n, size=k, replace=False))))
        mass = rng.uniform(0.05, 1.0, size=n)
        mass[list(q.indices)] = 0.0
        posterior = Posterior(mass / mass.sum())
        gain = expected_info_gain(posterior, data, model, q)
        # direct enumeration: sum_r Pr(R=r) * (H before - H after)
        h0 = entropy(posterior)
        a_marg = marginal_response_probs(data, model, q, posterior).probs
        direct = sum(
            a_marg[r] * (h0 - entropy(posterior_update(posterior, data, model, q, r)))
            for r in range(k)
        )
        worst = max(worst, abs(gain - direct))
    return worst <= 1e-9, f"max |identity defect| = {worst:.3e} over {args.samples} instances"


def _check_mixture_bound(args) -> tuple[bool, str]:
    """Weighted divergence from any reference is minimized by the mixture."""
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.samples):
        k = int(rng.integers(2, 9))
        m = int(rng.integers(1, 9))
        weights = rng.uniform(0.05, 3.0, size=m)
        comps = rng.dirichlet(np.ones(k), size=m)
        ref = rng.dirichlet(np.ones(k))
        mix = (weights[:, None] * comps).sum(axis=0) / weights.sum()
        lhs = sum(w * kl_divergence(c, ref) for w, c in zip(weights, comps))
        rhs = sum(w * kl_divergence(c, mix) for w, c in zip(weights, comps))
        worst = min(worst, lhs - rhs)
    return worst >= -1e-12, f"min slack = {worst:.3e} over {args.samples} triples"


def _cmd_verify(args) -> int:
    if args.check == "recursion":
        inst = adv.generate_instance(args.n, args.theta, args.x1, args.x2)
        defect = adv.recursion_defect(inst)
        ok = defect <= 1e-9
        print(f"recursion: max relative defect {defect:.3e} over n={args.n}")
    elif args.check == "similarity-dominance":
        inst = adv.generate_instance(args.n, args.theta, args.x1, args.x2)
        report = adv.verify_similarity_dominance(inst)
        ok = report.passed
        print(json.dumps(report.to_dict(), sort_keys=True))
    elif args.check == "response-decay":
        inst = adv.generate_instance(args.n, args.theta, args.x1, args.x2)
        report = adv.verify_response_decay(
            inst, args.k, samples=args.samples, rng=np.random.default_rng(args.seed)
        )
        ok = report.passed
        print(json.dumps(report.to_dict(), sort_keys=True))
    elif args.check == "info-gain-identity":
        ok, detail = _check_info_gain_identity(args)
        print(f"info-gain-identity: {detail}")
    elif args.check == "mixture-bound":
        ok, detail = _check_mixture_bound(args)
        print(f"mixture-bound: {detail}")
    else:  # pragma: no cover - argparse restricts choices
        return 1
    print("PASS" if ok else "FAIL")
    return 0 if ok else 2


def _cmd_bounds(args) -> int:
    rho, phi = bnd.response_split(args.theta)
    floor = bnd.quantile_gain_floor(args.theta)
    report = bnd.quantile_query_bound(args.n, args.theta)
    print(f"rho                      {rho:.6f}")
    print(f"phi                      {phi:.6f}")
    print(f"quantile gain floor      {floor:.6f} bits/query")
    print(f"quantile query bound     {report.value:.3f} queries (n={args.n})")
    beta = bnd.own_point_response_floor(args.theta, args.delta0)
    print(f"own-point floor beta     {beta:.6f} (min gap {args.delta0})")
    if args.k >= 2:
        print(f"k-interval gain floor    {bnd.kary_gain_floor(beta, args.k):.6f} bits/query (k={args.k})")
    if args.k >= 3 and args.n > 2 * args.k:
        tau, lower = bnd.adversarial_horizon(args.n, args.k)
        print(f"adversarial horizon      {tau:.4f} queries")
        print(f"adversarial lower bound  {lower:.4f} expected queries")
    return 0


def _cmd_gen_adversarial(args) -> int:
    out = _guard_out(args.out, args.force)
    inst = adv.generate_instance(args.n, args.theta, args.x1, args.x2)
    inst.save(out)
    print(f"wrote {out} (n={inst.n}, span {inst.points[0]:g}..{inst.points[-1]:g})")
    return 0


def _cmd_run(args) -> int:
    spec = ExperimentSpec.load(args.spec)
    if args.seed is not None:
        spec.master_seed = args.seed
    print(f"master seed: {spec.master_seed}")
    result = run_experiment(spec, workers=args.workers)
    if args.out:
        save_result_json(result, _guard_out(args.out, args.force))
        print(f"wrote {args.out}")
    else:
        print(json.dumps(result.to_dict(), sort_keys=True, indent=2))
    if args.csv:
        save_result_csv(result, _guard_out(args.csv, args.force))
        print(f"wrote {args.csv}")
    for cell in result.cells:
        bound = f" bound={cell.bound.value:.2f}" if cell.bound else ""
        print(
            f"cell {cell.index}: mean={cell.mean:.2f} median={cell.median:.1f} "
            f"p95={cell.p95:.1f} stderr={cell.stderr:.3f} "
            f"unterminated={cell.unterminated} failed={cell.failed}{bound}"
        )
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(frontend_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _render_strip(posterior: Posterior, query: Query, width: int = 64) -> str:
    n = posterior.n
    edges = np.linspace(0, n, width + 1).astype(int)
    glyphs = " .:-=+*#%@"
    cells = []
    for b in range(width):
        m = float(posterior.mass[edges[b] : edges[b + 1]].sum()) * width
        cells.append(glyphs[min(int(m * (len(glyphs) - 1)), len(glyphs) - 1)])
    strip = "".join(cells)
    markers = [" "] * width
    for i in query.indices:
        markers[min(int(i * width / n), width - 1)] = "^"
    return strip + "\n" + "".join(markers)


def _cmd_demo(args) -> int:
    data = Dataset.uniform_grid(args.n)
    model = UserModel(SimilarityFamily.coerce(args.family), args.theta)
    rng = np.random.default_rng(args.seed)
    posterior = Posterior.uniform(data.n)
    kind = StrategyKind.coerce(args.strategy)
    print(
        f"Think of a point on the 0..{args.n - 1} grid. Each round, answer with "
        f"the number of the query point closest to it, or 'f' when your point "
        f"is shown. Ctrl-D quits."
    )
    for round_no in range(1, 200):
        query, _ = select_query(kind, data, posterior, k=args.k, model=model, rng=rng)
        print(f"\nround {round_no}  entropy {entropy(posterior):.2f} bits")
        print(_render_strip(posterior, query))
        for slot, i in enumerate(query.indices, start=1):
            print(f"  [{slot}] point {i} at position {data.points[i]:g}")
        try:
            raw = input("closest (1..k) or f: ").strip().lower()
        except EOFError:
            print()
            return 0
        if raw in {"f", "found"}:
            print(f"found in {round_no} rounds")
            return 0
        try:
            r = int(raw) - 1
            posterior = posterior_update(posterior, data, model, query, r)
        except Exception as exc:
            print(f"  ({exc}); try again")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="noisysearch", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="run an experiment spec")
    p_run.add_argument("spec", help="experiment spec JSON path")
    p_run.add_argument("--out", help="results JSON path")
    p_run.add_argument("--csv", help="results CSV path")
    p_run.add_argument("--seed", type=int, default=None, help="override the master seed")
    p_run.add_argument("--workers", type=int, default=None, help="parallel worker processes")
    p_run.add_argument("--force", action="store_true", help="overwrite existing outputs")

    p_ver = sub.add_parser("verify", help="run a falsification check")
    p_ver.add_argument("check", choices=VERIFY_CHECKS)
    p_ver.add_argument("--n", type=int, default=12)
    p_ver.add_argument("--k", type=int, default=3)
    p_ver.add_argument("--theta", type=float, default=1.0)
    p_ver.add_argument("--x1", type=float, default=0.0)
    p_ver.add_argument("--x2", type=float, default=1.0)
    p_ver.add_argument("--samples", type=int, default=1000)
    p_ver.add_argument("--seed", type=int, default=DEFAULT_SEED)

    p_gen = sub.add_parser("gen-adversarial", help="generate a hard instance")
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--theta", type=float, default=1.0)
    p_gen.add_argument("--x1", type=float, default=0.0)
    p_gen.add_argument("--x2", type=float, default=1.0)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--force", action="store_true")

    p_bounds = sub.add_parser("bounds", help="print the analytic constants")
    p_bounds.add_argument("--n", type=int, default=1024)
    p_bounds.add_argument("--k", type=int, default=2)
    p_bounds.add_argument("--theta", type=float, default=1.0)
    p_bounds.add_argument("--delta0", type=float, default=1.0)

    p_serve = sub.add_parser("serve", help="run the session service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--ui", default=None, help="static frontend directory to mount")

    p_demo = sub.add_parser("demo", help="interactive terminal session")
    p_demo.add_argument("--n", type=int, default=64)
    p_demo.add_argument("--strategy", default="binary-quantile")
    p_demo.add_argument("--k", type=int, default=2)
    p_demo.add_argument("--theta", type=float, default=1.0)
    p_demo.add_argument("--family", default="polynomial")
    p_demo.add_argument("--seed", type=int, default=DEFAULT_SEED)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage()
        return 1
    handlers = {
        "run": _cmd_run,
        "verify": _cmd_verify,
        "gen-adversarial": _cmd_gen_adversarial,
        "bounds": _cmd_bounds,
        "serve": _cmd_serve,
        "demo": _cmd_demo,
    }
    try:
        return handlers[args.command](args)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 1
        raise
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
