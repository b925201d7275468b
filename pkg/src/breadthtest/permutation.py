"""Fixed-space permutation test on an aligned pooled cloud.

Two engines compute the same thing:

* :func:`naive_test` loops over permutations and recomputes both group
  means from the selected rows.
* :func:`engine_run` encodes a block of permutations as a ``B0 x N`` sign
  matrix ``S`` (``+1`` for group 1, ``-1`` for group 2) and gets every
  signed group difference from one product ``U = S Z``. With the column sum
  ``t`` of ``Z``, the group sums are ``(t + U) / 2`` and ``(t - U) / 2``.

Both consume the same stream of sign blocks. Block ``k`` is drawn from its
own substream ``SeedSequence(seed, spawn_key=(0, k))``, so results are a
function of ``(seed, block_size)`` only, and blocks could be processed in
any order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

from .dispersion import R_MIN, breadth, log_breadth, mrl, statistic_from_mrl
from .errors import DegenerateBreadth, DimensionMismatch, InputError, MixedShapes
from .geometry import align_to, as_cloud, normalize_rows

ALTERNATIVES = ("greater", "two-sided")
DEFAULT_B = 5000
DEFAULT_BLOCK_SIZE = 1024
DEFAULT_ALPHA = 0.05

# Relative tolerance for ties between a permuted statistic and the observed
# one; the observed split recurs among permutations and the two engines round
# differently in the last bits.
TIE_RTOL = 1e-12

_SIGN_STREAM = 0
_SUBSAMPLE_STREAM = 1


def normalize_alternative(alternative: str) -> str:
    alt = alternative.replace("_", "-").lower()
    if alt not in ALTERNATIVES:
        raise InputError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")
    return alt


@dataclass(frozen=True)
class TestConfig:
    """Permutation test settings.

    ``block_size`` larger than ``n_permutations`` is clamped. ``alpha`` only
    matters for reporting.
    """

    __test__ = False

    n_permutations: int = DEFAULT_B
    block_size: int = DEFAULT_BLOCK_SIZE
    alternative: str = "greater"
    seed: int = 0
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if self.n_permutations < 1:
            raise InputError("n_permutations must be >= 1")
        if self.block_size < 1:
            raise InputError("block_size must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise InputError("alpha must lie in (0, 1)")
        if self.seed < 0 or self.seed >= 2**64:
            raise InputError("seed must be a non-negative 64-bit integer")
        object.__setattr__(self, "alternative", normalize_alternative(self.alternative))

    @property
    def effective_block_size(self) -> int:
        return min(self.block_size, self.n_permutations)


@dataclass
class TestResult:
    __test__ = False

    t_obs: float
    p_value: float
    exceedances: int
    b_used: int
    alternative: str
    dim: int
    seed: int | None = None
    r_x: float | None = None
    r_y: float | None = None
    aligned: bool = True
    is_identity: bool = False
    statistics: np.ndarray | None = field(default=None, repr=False)

    @property
    def v_x(self) -> float | None:
        return None if self.r_x is None else _safe_breadth(self.r_x, self.dim)

    @property
    def v_y(self) -> float | None:
        return None if self.r_y is None else _safe_breadth(self.r_y, self.dim)

    def to_dict(self) -> dict:
        return {
            "t_obs": self.t_obs,
            "p_value": self.p_value,
            "exceedances": self.exceedances,
            "b": self.b_used,
            "alternative": self.alternative,
            "aligned": self.aligned,
            "r_x": self.r_x,
            "r_y": self.r_y,
            "v_x": self.v_x,
            "v_y": self.v_y,
            "seed": self.seed,
        }


def _safe_breadth(r: float, dim: int) -> float:
    try:
        return breadth(r, dim)
    except DegenerateBreadth:
        return math.inf


def p_value(exceedances: int, n_permutations: int) -> float:
    """Monte Carlo permutation p-value with the +1 correction."""
    if not 0 <= exceedances <= n_permutations:
        raise InputError(f"exceedances {exceedances} outside [0, {n_permutations}]")
    return (1 + exceedances) / (n_permutations + 1)


def count_exceedances(stats: np.ndarray, t_obs: float, alternative: str) -> int:
    """Count permuted statistics at least as extreme as ``t_obs``."""
    tol = TIE_RTOL * max(1.0, abs(t_obs))
    if alternative == "greater":
        return int(np.count_nonzero(stats >= t_obs - tol))
    return int(np.count_nonzero(np.abs(stats) >= abs(t_obs) - tol))


# --------------------------------------------------------------------------
# sign blocks


def block_rng(seed: int, block_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_SIGN_STREAM, block_index)))


def generate_sign_block(n: int, m: int, rows: int, rng: np.random.Generator) -> np.ndarray:
    """``rows x (n+m)`` int8 matrix of +-1 with exactly ``n`` +1 entries per row.

    Each row takes the ``n`` smallest of ``n+m`` iid uniform keys, which is a
    uniformly random ``n``-subset.
    """
    if n < 1 or m < 1:
        raise InputError(f"group sizes must be >= 1, got n={n}, m={m}")
    if rows < 1:
        raise InputError("rows must be >= 1")
    total = n + m
    keys = rng.random((rows, total))
    plus = np.argpartition(keys, n - 1, axis=1)[:, :n]
    signs = np.full((rows, total), -1, dtype=np.int8)
    np.put_along_axis(signs, plus, 1, axis=1)
    return signs


def iter_sign_blocks(n: int, m: int, config: TestConfig) -> Iterator[np.ndarray]:
    """The sign stream for ``config``: ``ceil(B / B0)`` blocks, the last one short."""
    b0 = config.effective_block_size
    remaining = config.n_permutations
    k = 0
    while remaining > 0:
        rows = min(b0, remaining)
        yield generate_sign_block(n, m, rows, block_rng(config.seed, k))
        remaining -= rows
        k += 1


def _chunk_signs(signs: np.ndarray, n: int, block_size: int) -> Iterator[np.ndarray]:
    signs = np.asarray(signs)
    if signs.ndim != 2:
        raise InputError("signs must be a 2-D (permutations, N) array")
    for start in range(0, signs.shape[0], block_size):
        yield signs[start:start + block_size]


def _check_block(block: np.ndarray, n: int, total: int) -> None:
    if block.shape[1] != total:
        raise DimensionMismatch(f"sign rows have length {block.shape[1]}, pooled cloud has {total} rows")
    if not np.all((block == 1) | (block == -1)):
        raise InputError("sign entries must be +1 or -1")
    bad = np.flatnonzero(np.count_nonzero(block == 1, axis=1) != n)
    if bad.size:
        raise InputError(f"sign row {int(bad[0])} does not have exactly {n} entries equal to +1")


def _blocks(n: int, m: int, config: TestConfig, signs) -> Iterator[np.ndarray]:
    source = iter_sign_blocks(n, m, config) if signs is None else _chunk_signs(signs, n, config.block_size)
    for block in source:
        _check_block(block, n, n + m)
        yield block


# --------------------------------------------------------------------------
# engines


def pool(x_aligned, y) -> tuple[np.ndarray, int, int]:
    """Stack ``X'`` rows above ``Y`` rows. The result is read-only."""
    x_arr = as_cloud(x_aligned)
    y_arr = as_cloud(y)
    if x_arr.shape[1] != y_arr.shape[1]:
        raise DimensionMismatch(f"clouds have dimensions {x_arr.shape[1]} and {y_arr.shape[1]}")
    z = np.concatenate([x_arr, y_arr], axis=0)
    z.setflags(write=False)
    return z, x_arr.shape[0], y_arr.shape[0]


def _check_pooled(z, n: int, m: int) -> np.ndarray:
    z = as_cloud(z)
    if n < 1 or m < 1 or z.shape[0] != n + m:
        raise InputError(f"pooled cloud has {z.shape[0]} rows, expected n + m = {n} + {m}")
    return z


def _result(t_obs, exceedances, b_used, config, dim, stats) -> TestResult:
    return TestResult(
        t_obs=float(t_obs),
        p_value=p_value(exceedances, b_used),
        exceedances=exceedances,
        b_used=b_used,
        alternative=config.alternative,
        dim=dim,
        seed=config.seed,
        statistics=None if stats is None else np.concatenate(stats),
    )


def naive_test(z, n: int, m: int, t_obs: float, config: TestConfig, *,
               signs: np.ndarray | None = None, keep_stats: bool = False) -> TestResult:
    """Reference loop: one permutation at a time, group means from row subsets.

    Parameters
    ----------
    z : (n + m, d) array
        Pooled aligned cloud, ``X'`` rows first.
    t_obs : float
        Statistic of the observed split.
    signs : (B, n + m) array of +-1, optional
        Explicit partitions. Defaults to the sign stream of ``config``.
    keep_stats : bool
        Keep every permuted statistic on the result (``statistics``).
    """
    z = _check_pooled(z, n, m)
    dim = z.shape[1]
    count = 0
    b_used = 0
    kept = [] if keep_stats else None
    for block in _blocks(n, m, config, signs):
        block_stats = np.empty(block.shape[0])
        for i, row in enumerate(block):
            r1 = np.linalg.norm(z[row > 0].mean(axis=0))
            r2 = np.linalg.norm(z[row < 0].mean(axis=0))
            block_stats[i] = statistic_from_mrl(r1, r2, dim)
        count += count_exceedances(block_stats, t_obs, config.alternative)
        b_used += block.shape[0]
        if kept is not None:
            kept.append(block_stats)
    return _result(t_obs, count, b_used, config, dim, kept)


def block_statistics(z: np.ndarray, total: np.ndarray, n: int, m: int, block: np.ndarray) -> np.ndarray:
    """Permuted statistics for one sign block via a single matrix product."""
    u = block.astype(np.float64) @ z
    sigma1 = (total + u) * 0.5
    sigma2 = (total - u) * 0.5
    r1 = np.linalg.norm(sigma1, axis=1) / n
    r2 = np.linalg.norm(sigma2, axis=1) / m
    return statistic_from_mrl(r1, r2, z.shape[1])


def engine_run(z, n: int, m: int, t_obs: float, config: TestConfig, *,
               signs: np.ndarray | None = None, keep_stats: bool = False) -> TestResult:
    """Batched sign-matrix engine; same contract as :func:`naive_test`.

    Working memory beyond ``z`` is one sign block plus a few ``B0 x d``
    arrays; permuted statistics are folded into the exceedance count and
    dropped unless ``keep_stats`` is set.
    """
    z = _check_pooled(z, n, m)
    total = z.sum(axis=0)
    count = 0
    b_used = 0
    kept = [] if keep_stats else None
    for block in _blocks(n, m, config, signs):
        block_stats = block_statistics(z, total, n, m, block)
        count += count_exceedances(block_stats, t_obs, config.alternative)
        b_used += block.shape[0]
        if kept is not None:
            kept.append(block_stats)
    return _result(t_obs, count, b_used, config, z.shape[1], kept)


# --------------------------------------------------------------------------
# end to end


@dataclass(frozen=True)
class PreparedPair:
    """Pooled aligned cloud and observed statistic for one pair."""

    z: np.ndarray
    n: int
    m: int
    t_obs: float
    r_x: float
    r_y: float
    aligned: bool
    is_identity: bool
    axis: np.ndarray | None = None


def prepare_pair(x_raw, y_raw, *, baseline: bool = False, normalize: bool = True) -> PreparedPair:
    """Normalize, align ``X`` onto ``Y``'s mean direction (unless ``baseline``), pool."""
    x = normalize_rows(x_raw) if normalize else as_cloud(x_raw)
    y = normalize_rows(y_raw) if normalize else as_cloud(y_raw)
    if x.shape[1] != y.shape[1]:
        raise DimensionMismatch(f"clouds have dimensions {x.shape[1]} and {y.shape[1]}")
    axis = None
    is_identity = False
    if not baseline:
        x, alignment = align_to(x, y)
        axis, is_identity = alignment.axis, alignment.is_identity
    r_x, r_y = mrl(x), mrl(y)
    for name, r in (("X", r_x), ("Y", r_y)):
        if r < R_MIN:
            raise DegenerateBreadth(f"{name} has zero mean resultant length")
    dim = x.shape[1]
    t_obs = log_breadth(r_x, dim) - log_breadth(r_y, dim)
    z, n, m = pool(x, y)
    return PreparedPair(z=z, n=n, m=m, t_obs=float(t_obs), r_x=r_x, r_y=r_y,
                        aligned=not baseline, is_identity=is_identity, axis=axis)


def _finish(prepared: PreparedPair, result: TestResult) -> TestResult:
    return replace(result, r_x=prepared.r_x, r_y=prepared.r_y,
                   aligned=prepared.aligned, is_identity=prepared.is_identity)


def run_pair(x_raw, y_raw, config: TestConfig | None = None, *, baseline: bool = False,
             normalize: bool = True, keep_stats: bool = False) -> TestResult:
    """Full test for one pair: normalize, align X, observe, pool, permute.

    ``baseline=True`` skips the alignment and gives the plain permutation
    test on the unit-normalized clouds.
    """
    config = config or TestConfig()
    prepared = prepare_pair(x_raw, y_raw, baseline=baseline, normalize=normalize)
    result = engine_run(prepared.z, prepared.n, prepared.m, prepared.t_obs, config, keep_stats=keep_stats)
    return _finish(prepared, result)


def run_batch(pairs: Sequence[tuple], config: TestConfig | None = None, *, baseline: bool = False,
              normalize: bool = True) -> list[TestResult]:
    """Test many pairs sharing ``(n, m)``, generating each sign block once.

    Results equal independent :func:`run_pair` calls with the same config.
    """
    config = config or TestConfig()
    prepared = [prepare_pair(x, y, baseline=baseline, normalize=normalize) for x, y in pairs]
    if not prepared:
        return []
    shapes = {(p.n, p.m) for p in prepared}
    if len(shapes) > 1:
        raise MixedShapes(f"pairs have differing group sizes: {sorted(shapes)}")
    n, m = prepared[0].n, prepared[0].m
    totals = [p.z.sum(axis=0) for p in prepared]
    counts = [0] * len(prepared)
    b_used = 0
    for block in _blocks(n, m, config, None):
        for i, p in enumerate(prepared):
            stats = block_statistics(p.z, totals[i], n, m, block)
            counts[i] += count_exceedances(stats, p.t_obs, config.alternative)
        b_used += block.shape[0]
    return [
        _finish(p, _result(p.t_obs, c, b_used, config, p.z.shape[1], None))
        for p, c in zip(prepared, counts)
    ]


def subsample(cloud, size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform subsample of ``size`` rows without replacement, original order kept."""
    arr = as_cloud(cloud)
    if not 1 <= size <= arr.shape[0]:
        raise InputError(f"cannot subsample {size} rows from a cloud of {arr.shape[0]}")
    idx = np.sort(rng.choice(arr.shape[0], size=size, replace=False))
    return arr[idx]


def subsample_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_SUBSAMPLE_STREAM, *key)))
