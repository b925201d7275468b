"""Command-line interface: ``breadth {test,batch,calibrate,bench,sample}``.

Exit codes: 0 success, 1 internal error, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import run_bench
from .errors import InputError
from .geometry import normalize_rows
from .io import read_cloud, read_matrix, write_cloud
from .permutation import (
    DEFAULT_ALPHA,
    DEFAULT_B,
    DEFAULT_BLOCK_SIZE,
    TestConfig,
    run_batch,
    run_pair,
    subsample,
    subsample_rng,
)
from .synthetic import (
    VmfSpec,
    power_experiment,
    random_direction,
    sample_vmf,
    split_half_check,
    type1_experiment,
)

SEED_ENV = "BREADTH_SEED"


def resolve_seed(flag: int | None) -> int:
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"{SEED_ENV}={env!r} is not an integer") from None
    return 0


def _config(args) -> TestConfig:
    return TestConfig(
        n_permutations=args.b,
        block_size=args.block_size,
        alternative=args.alt,
        seed=resolve_seed(args.seed),
        alpha=args.alpha,
    )


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj) + "\n")


def _load_pair(x_path, y_path, args, index: int):
    if args.subsample is None:
        return read_cloud(x_path, not args.no_normalize), read_cloud(y_path, not args.no_normalize)
    seed = resolve_seed(args.seed)
    x = subsample(read_matrix(x_path), args.subsample, subsample_rng(seed, index, 0))
    y = subsample(read_matrix(y_path), args.subsample, subsample_rng(seed, index, 1))
    if args.no_normalize:
        return x.astype(np.float64), y.astype(np.float64)
    return normalize_rows(x), normalize_rows(y)


def cmd_test(args) -> int:
    config = _config(args)
    x, y = _load_pair(args.x, args.y, args, 0)
    result = run_pair(x, y, config, baseline=args.baseline, normalize=False)
    _emit(result.to_dict())
    return 0


def read_manifest(path) -> list[tuple[Path, Path]]:
    """Pairs of cloud paths, two whitespace-separated per line, relative to the manifest."""
    base = Path(path).parent
    pairs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 2:
            raise InputError(f"{path}:{lineno}: expected two paths, got {len(fields)} fields")
        pairs.append((base / fields[0], base / fields[1]))
    return pairs


def cmd_batch(args) -> int:
    config = _config(args)
    entries = read_manifest(args.manifest)
    pairs = [_load_pair(x, y, args, i) for i, (x, y) in enumerate(entries)]
    results = run_batch(pairs, config, baseline=args.baseline, normalize=False)
    for (x_path, y_path), result in zip(entries, results):
        _emit({"x": str(x_path), "y": str(y_path), **result.to_dict()})
    return 0


def cmd_calibrate(args) -> int:
    config = _config(args)
    if args.mode == "type1":
        report = type1_experiment(args.dim, args.n, args.kappa, args.angle, args.trials, config)
    elif args.mode == "power":
        kx = args.kappa_x if args.kappa_x is not None else args.kappa
        ky = args.kappa_y if args.kappa_y is not None else args.kappa
        if kx == ky:
            raise InputError("power mode needs --kappa-x different from --kappa-y")
        report = power_experiment(args.dim, args.n, kx, ky, args.trials, config, angle_deg=args.angle)
    else:
        if args.input:
            cloud = read_cloud(args.input, not args.no_normalize)
        else:
            rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(4,)))
            cloud = sample_vmf(VmfSpec(random_direction(args.dim, rng), args.kappa, 2 * args.n), rng)
        report = split_half_check(cloud, args.trials, config)
    _emit(report.to_dict(include_pvalues=args.pvalues))
    return 0


def cmd_bench(args) -> int:
    report = run_bench(args.N, args.dim, args.b, args.block_size, args.repeats, resolve_seed(args.seed))
    _emit(report.to_dict())
    return 0


def cmd_sample(args) -> int:
    seed = resolve_seed(args.seed)
    rng = np.random.default_rng(seed)
    if args.direction_seed is not None:
        mu = random_direction(args.dim, np.random.default_rng(args.direction_seed))
    else:
        mu = random_direction(args.dim, rng)
    cloud = sample_vmf(VmfSpec(mu, args.kappa, args.n), rng)
    write_cloud(args.out, cloud, args.format)
    return 0


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _add_test_flags(p: argparse.ArgumentParser, default_b: int = DEFAULT_B) -> None:
    p.add_argument("--b", type=_positive_int, default=default_b, help="number of permutations")
    p.add_argument("--block-size", type=_positive_int, default=DEFAULT_BLOCK_SIZE,
                   help="permutations per sign block")
    p.add_argument("--alt", choices=["greater", "two-sided"], default="greater")
    p.add_argument("--seed", type=int, default=None, help=f"RNG seed (falls back to ${SEED_ENV}, then 0)")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--no-normalize", action="store_true", help="trust input rows to be unit norm")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="breadth",
        description="Householder-aligned permutation test for dispersion of unit-vector clouds.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="test whether cloud X is broader than cloud Y")
    p.add_argument("x")
    p.add_argument("y")
    _add_test_flags(p)
    p.add_argument("--baseline", action="store_true", help="skip the Householder alignment")
    p.add_argument("--subsample", type=_positive_int, default=None, help="subsample both clouds to N rows")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("batch", help="test every pair in a manifest, sharing sign blocks")
    p.add_argument("manifest", help="text file with two cloud paths per line")
    _add_test_flags(p)
    p.add_argument("--baseline", action="store_true")
    p.add_argument("--subsample", type=_positive_int, default=None)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("calibrate", help="synthetic vMF calibration experiments")
    p.add_argument("--mode", choices=["type1", "power", "split-half"], default="type1")
    _add_test_flags(p)
    p.add_argument("--dim", type=_positive_int, default=32)
    p.add_argument("--n", type=_positive_int, default=200, help="rows per group (split-half: half size)")
    p.add_argument("--kappa", type=float, default=50.0)
    p.add_argument("--kappa-x", type=float, default=None)
    p.add_argument("--kappa-y", type=float, default=None)
    p.add_argument("--angle", type=float, default=60.0, help="angle between mean directions, degrees")
    p.add_argument("--trials", type=_positive_int, default=500)
    p.add_argument("--input", default=None, help="split-half: cloud file instead of a synthetic cloud")
    p.add_argument("--pvalues", action="store_true", help="include per-trial p-values")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("bench", help="time the naive loop against the batched engine")
    p.add_argument("--N", type=_positive_int, default=2000, help="pooled rows")
    p.add_argument("--dim", type=_positive_int, default=256)
    p.add_argument("--b", type=_positive_int, default=20000)
    p.add_argument("--block-size", type=_positive_int, default=DEFAULT_BLOCK_SIZE)
    p.add_argument("--repeats", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sample", help="write a synthetic vMF cloud")
    p.add_argument("out")
    p.add_argument("--dim", type=_positive_int, default=32)
    p.add_argument("--n", type=_positive_int, default=200)
    p.add_argument("--kappa", type=float, default=50.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--direction-seed", type=int, default=None,
                   help="seed for the mean direction, to share it across files")
    p.add_argument("--format", choices=["binary", "tsv"], default="binary")
    p.set_defaults(func=cmd_sample)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, OSError) as exc:
        print(f"breadth: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"breadth: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
