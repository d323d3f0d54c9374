"""Command line front end: validate, sample, joint, image and verify.

Exit codes: 0 success, 1 unreadable or malformed input, 2 infeasible spec or a
failed check, 3 enumeration too large.
"""

from __future__ import annotations

import argparse
import itertools
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .consistency import CliqueSpec, check_permutation
from .errors import (
    ExplosionGuard,
    FieldError,
    HatPiMismatch,
    InvalidOrderHint,
    NotAGrid,
    RegularityViolation,
    SpecFormatError,
    ZeroBaseMarginal,
)
from .feasibility import validate_spec
from .graph import build_valid_setup
from .io import LoadedSpec, load_spec, pgm_bytes, samples_csv, write_json
from .oracle import (
    covariance_of,
    enumerate_joint,
    enumerate_markov,
    marginal_of,
    markov_builder,
    markov_residual_details,
    one_pass_builder,
    permutation_residual,
)
from .sampler import RNG_NAME, SampleRun, inpaint, order_rng, resolve_threads, sample_markov, sample_one_pass

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_GUARD = 0, 1, 2, 3
ORACLE_TOL = 1e-10
SUITES = ("marginals", "covariances", "markov", "permutation")


def _emit(obj, out: Optional[str]) -> None:
    if out:
        write_json(obj, out)
    else:
        sys.stdout.write(write_json(obj))


def _draw(loaded: LoadedSpec, mode: str, seed: int, n: int, route: str, threads: int) -> np.ndarray:
    spec = loaded.spec
    if mode == "markov":
        return sample_markov(spec, loaded.order, seed, n, threads)
    setup = loaded.setup()
    if loaded.known:
        return inpaint(spec, setup, loaded.known, seed, n, loaded.component_policy, threads)
    return sample_one_pass(SampleRun(spec, setup, seed, n), route, loaded.component_policy, threads)


def _sample_stats(loaded: LoadedSpec, samples: np.ndarray) -> dict:
    spec = loaded.spec
    values = np.empty(samples.shape)
    for s in range(spec.n_sites):
        values[:, s] = np.asarray(spec.states(s))[samples[:, s]]
    mean_gap = max(abs(values[:, s].mean() - spec.pi[s].mean) for s in range(spec.n_sites))
    stats = {"n_samples": int(samples.shape[0]), "max_mean_gap": float(mean_gap)}
    if samples.shape[0] > 1:
        setup = loaded.setup()
        gaps = []
        for s, t in sorted(setup.cov_pairs):
            cov = float(np.cov(values[:, s], values[:, t], bias=True)[0, 1])
            gaps.append(abs(cov - spec.beta_of(s, t)))
        stats["max_covariance_gap"] = float(max(gaps, default=0.0))
    return stats


def cmd_validate(args) -> int:
    loaded = load_spec(args.spec)
    spec = loaded.spec
    if args.field == "markov":
        order = loaded.order or tuple(range(spec.n_sites))
        report = validate_spec(spec, mode=args.mode, markov_order=order, seed=args.seed)
    else:
        report = validate_spec(spec, loaded.setup(), mode=args.mode, route=args.route, seed=args.seed)
    out = {"feasibility": report.to_json(), "permutation": None}
    n = spec.n_sites
    if n >= 3 and spec.graph.is_clique():
        out["permutation"] = check_permutation(CliqueSpec.from_field(spec, range(n))).to_json()
    _emit(out, args.out)
    return EXIT_OK if report.passed else EXIT_INFEASIBLE


def cmd_sample(args) -> int:
    loaded = load_spec(args.spec)
    threads = resolve_threads(args.threads)
    start = time.perf_counter()
    samples = _draw(loaded, args.mode, args.seed, args.n, args.route, threads)
    runtime = time.perf_counter() - start
    Path(args.out).write_text(samples_csv(loaded.spec, samples, loaded.labels()))
    meta = {
        "seed": args.seed,
        "rng": RNG_NAME,
        "spec_sha256": loaded.digest,
        "runtime_seconds": runtime,
        "mode": args.mode,
        "route": args.route,
        "n_samples": args.n,
        "threads": threads,
        "version": __version__,
    }
    write_json(meta, str(args.out) + ".meta.json")
    sys.stdout.write(write_json(_sample_stats(loaded, samples)))
    return EXIT_OK


def cmd_joint(args) -> int:
    loaded = load_spec(args.spec)
    spec = loaded.spec
    if args.mode == "markov":
        table = enumerate_markov(spec, loaded.order or tuple(range(spec.n_sites)))
    else:
        setup = loaded.setup()
        table = enumerate_joint(spec, setup, args.route, loaded.component_policy, loaded.known or None)
    labels = [spec.graph.label(s) for s in table.sites]
    Path(args.out).write_text(table.to_csv(labels))
    return EXIT_OK


def cmd_image(args) -> int:
    loaded = load_spec(args.spec)
    if loaded.grid is None:
        raise NotAGrid("the image command needs a grid spec")
    sample = _draw(loaded, args.mode, args.seed, 1, args.route, 1)[0]
    Path(args.out).write_bytes(pgm_bytes(loaded.spec, loaded.grid, sample))
    return EXIT_OK


def _random_valid_orders(loaded: LoadedSpec, count: int, seed: int) -> List[tuple]:
    """Valid one-pass orders: exhaustive for small graphs, otherwise random greedy growth."""
    graph = loaded.spec.graph
    n = graph.n_sites
    if n <= 5:
        orders = []
        for perm in itertools.permutations(range(n)):
            try:
                build_valid_setup(graph, order_hint=perm)
                orders.append(perm)
            except InvalidOrderHint:
                pass
        return orders
    rng = order_rng(seed)
    orders = []
    for _ in range(count):
        placed = [int(rng.integers(n))]
        while len(placed) < n:
            touching = sorted({t for s in placed for t in graph.neighbors(s)} - set(placed))
            placed.append(touching[int(rng.integers(len(touching)))])
        orders.append(tuple(placed))
    return orders


def _suite(name: str, loaded: LoadedSpec, args) -> dict:
    spec = loaded.spec
    if name in ("marginals", "covariances"):
        setup = loaded.setup()
        table = enumerate_joint(spec, setup, args.route, loaded.component_policy, loaded.known or None)
        if name == "marginals":
            residual = max(
                float(np.abs(marginal_of(table, [s]).probs - spec.pi_p[s]).max()) for s in setup.order
            )
            result = {"residual": residual, "passed": residual <= ORACLE_TOL}
            if args.samples > 0 and not loaded.known:
                samples = sample_one_pass(SampleRun(spec, setup, args.seed, args.samples), args.route)
                worst = 0.0
                for s in range(spec.n_sites):
                    freq = np.bincount(samples[:, s], minlength=spec.sizes[s]) / args.samples
                    se = np.sqrt(spec.pi_p[s] * (1 - spec.pi_p[s]) / args.samples)
                    worst = max(worst, float((np.abs(freq - spec.pi_p[s]) / se).max()))
                result["sampler_max_standard_errors"] = worst
                result["passed"] = result["passed"] and worst <= 4.0
            return result
        pairs = [p for p in sorted(setup.cov_pairs) if p[0] in table.sites and p[1] in table.sites]
        gaps = {f"{s}-{t}": abs(covariance_of(table, s, t) - spec.beta_of(s, t)) for s, t in pairs}
        residual = max(gaps.values(), default=0.0)
        return {"residual": residual, "passed": residual <= ORACLE_TOL, "pairs": gaps}
    if name == "markov":
        if not spec.hat_equals_pi():
            return {"passed": True, "skipped": "hat differs from pi, so the Markov mode does not apply"}
        rng = order_rng(args.seed)
        orders = [loaded.order or tuple(range(spec.n_sites))]
        orders += [tuple(int(s) for s in rng.permutation(spec.n_sites)) for _ in range(4)]
        residual, skipped = markov_residual_details(enumerate_markov(spec, orders[0]), spec.graph)
        order_gap = permutation_residual(markov_builder(spec), orders)
        return {
            "residual": residual,
            "skipped_events": skipped,
            "order_residual": order_gap,
            "passed": residual <= ORACLE_TOL and order_gap <= ORACLE_TOL,
        }
    if name == "permutation":
        orders = _random_valid_orders(loaded, 24, args.seed)
        gap = permutation_residual(one_pass_builder(spec, args.route, loaded.component_policy), orders)
        result = {"residual": gap, "orderings": len(orders), "passed": gap <= ORACLE_TOL}
        if spec.n_sites >= 3 and spec.graph.is_clique():
            result["analysis"] = check_permutation(CliqueSpec.from_field(spec, range(spec.n_sites))).to_json()
        return result
    raise SpecFormatError(f"unknown suite {name!r}")


def cmd_verify(args) -> int:
    loaded = load_spec(args.spec)
    names = SUITES if args.suite == "all" else (args.suite,)
    report = {name: _suite(name, loaded, args) for name in names}
    report["passed"] = all(r["passed"] for r in report.values())
    _emit(report, args.out)
    return EXIT_OK if report["passed"] else EXIT_INFEASIBLE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quickfield", description="One-pass correlated discrete random fields.")
    parser.add_argument("--version", action="version", version=f"quickfield {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("spec", help="path to a JSON spec")
        p.add_argument("--route", choices=("recursive", "multiplication"), default="recursive",
                       help="how base-set probabilities are computed")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("validate", help="check every conditional row for regularity")
    common(p)
    p.add_argument("--mode", choices=("exhaustive", "spot"), default="exhaustive")
    p.add_argument("--field", choices=("one-pass", "markov"), default="one-pass")
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sample", help="draw fields and write them as CSV")
    common(p)
    p.add_argument("-n", type=int, default=1, help="number of replicates")
    p.add_argument("--mode", choices=("one-pass", "markov"), default="one-pass")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=None, help="worker threads (KNW_THREADS overrides)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("joint", help="enumerate the joint pmf as CSV")
    common(p, seed=False)
    p.add_argument("--mode", choices=("one-pass", "markov"), default="one-pass")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_joint)

    p = sub.add_parser("image", help="render one grid sample as a binary PGM")
    common(p)
    p.add_argument("--mode", choices=("one-pass", "markov"), default="one-pass")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_image)

    p = sub.add_parser("verify", help="run oracle checks")
    common(p)
    p.add_argument("--suite", choices=SUITES + ("all",), default="all")
    p.add_argument("--samples", type=int, default=0, help="also compare this many sampler draws to the targets")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ExplosionGuard as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (RegularityViolation, ZeroBaseMarginal, HatPiMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (FieldError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
