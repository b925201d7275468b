"""Naive loop vs batched engine timing on identical input and sign stream."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from .errors import EquivalenceFailure, InputError
from .permutation import PreparedPair, TestConfig, engine_run, naive_test, prepare_pair
from .synthetic import VmfSpec, direction_pair, sample_vmf


@dataclass
class BenchReport:
    n_total: int
    dim: int
    b: int
    block_size: int
    repeats: int
    seed: int
    exceedances: int
    naive_total_ms: float
    engine_total_ms: float

    @property
    def naive_per_perm_ms(self) -> float:
        return self.naive_total_ms / self.b

    @property
    def engine_per_perm_ms(self) -> float:
        return self.engine_total_ms / self.b

    @property
    def speedup(self) -> float:
        return self.naive_total_ms / self.engine_total_ms

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(
            naive_per_perm_ms=self.naive_per_perm_ms,
            engine_per_perm_ms=self.engine_per_perm_ms,
            speedup=self.speedup,
        )
        return out


def bench_input(n_total: int, dim: int, seed: int, kappa: float = 50.0, angle_deg: float = 60.0) -> PreparedPair:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(5,)))
    n = n_total // 2
    mu1, mu2 = direction_pair(dim, angle_deg, rng)
    x = sample_vmf(VmfSpec(mu1, kappa, n), rng)
    y = sample_vmf(VmfSpec(mu2, kappa, n_total - n), rng)
    return prepare_pair(x, y)


def _timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, (time.perf_counter() - start) * 1e3


def run_bench(n_total: int = 2000, dim: int = 256, b: int = 20000, block_size: int = 1024,
              repeats: int = 1, seed: int = 0) -> BenchReport:
    """Time both engines; refuse to report unless their exceedance counts match.

    Each total is the best of ``repeats`` runs.
    """
    if n_total < 2 or dim < 2 or b < 1 or block_size < 1 or repeats < 1:
        raise InputError("bench parameters must be positive (N >= 2, d >= 2)")
    pair = bench_input(n_total, dim, seed)
    config = TestConfig(n_permutations=b, block_size=block_size, seed=seed)

    def naive():
        return naive_test(pair.z, pair.n, pair.m, pair.t_obs, config)

    def engine():
        return engine_run(pair.z, pair.n, pair.m, pair.t_obs, config)

    naive_times, engine_times = [], []
    for _ in range(repeats):
        ref, t_naive = _timed(naive)
        fast, t_engine = _timed(engine)
        if ref.exceedances != fast.exceedances:
            raise EquivalenceFailure(
                f"naive engine counted {ref.exceedances} exceedances, batched engine {fast.exceedances}"
            )
        naive_times.append(t_naive)
        engine_times.append(t_engine)
    return BenchReport(
        n_total=n_total, dim=dim, b=b, block_size=config.effective_block_size, repeats=repeats,
        seed=seed, exceedances=fast.exceedances,
        naive_total_ms=min(naive_times), engine_total_ms=min(engine_times),
    )
