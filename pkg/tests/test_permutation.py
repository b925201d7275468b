import math
import tracemalloc

import numpy as np
import pytest

from breadthtest import (
    DimensionMismatch,
    InputError,
    MixedShapes,
    TestConfig,
    engine_run,
    generate_sign_block,
    naive_test,
    p_value,
    pool,
    run_batch,
    run_pair,
    subsample,
)
from breadthtest.permutation import (
    block_rng,
    block_statistics,
    count_exceedances,
    iter_sign_blocks,
    prepare_pair,
)

from oracles import all_sign_rows, enumerate_splits, random_unit


def concentrated(rng, n, d, spread=0.8):
    x = random_unit(rng, d) + spread * rng.standard_normal((n, d)) / math.sqrt(d)
    return x / np.linalg.norm(x, axis=1, keepdims=True)


@pytest.mark.parametrize("count, b, expected", [(0, 99, 0.01), (99, 99, 1.0), (49, 99, 0.5)])
def test_p_value_examples(count, b, expected):
    assert p_value(count, b) == pytest.approx(expected)


def test_p_value_range_checked():
    with pytest.raises(InputError):
        p_value(100, 99)


def test_pool():
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal((2, 4)), rng.standard_normal((3, 4))
    z, n, m = pool(x, y)
    assert z.shape == (5, 4) and (n, m) == (2, 3)
    np.testing.assert_array_equal(z[:2], x)
    np.testing.assert_array_equal(z[2:], y)
    np.testing.assert_allclose(z.sum(0), x.sum(0) + y.sum(0), atol=1e-12)
    assert not z.flags.writeable
    with pytest.raises(DimensionMismatch):
        pool(x, rng.standard_normal((3, 5)))


def test_config_validation():
    with pytest.raises(InputError):
        TestConfig(n_permutations=0)
    with pytest.raises(InputError):
        TestConfig(alternative="less")
    assert TestConfig(alternative="two_sided").alternative == "two-sided"
    assert TestConfig(n_permutations=99, block_size=1024).effective_block_size == 99


def test_sign_block_row_constraint():
    block = generate_sign_block(2, 1, 100, np.random.default_rng(0))
    assert block.dtype == np.int8 and block.shape == (100, 3)
    assert np.all((block == 1).sum(1) == 2)
    assert np.all((block == -1).sum(1) == 1)


def test_sign_block_deterministic():
    a = generate_sign_block(5, 7, 64, block_rng(42, 3))
    b = generate_sign_block(5, 7, 64, block_rng(42, 3))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, generate_sign_block(5, 7, 64, block_rng(42, 4)))


def test_sign_block_positions_uniform():
    block = generate_sign_block(1, 2, 10000, np.random.default_rng(123))
    freq = (block == 1).sum(0)
    sigma = math.sqrt(10000 * (1 / 3) * (2 / 3))
    assert np.all(np.abs(freq - 10000 / 3) < 3 * sigma)


def test_sign_stream_prefix_and_blocks():
    cfg = TestConfig(n_permutations=2500, block_size=1000, seed=9)
    blocks = list(iter_sign_blocks(3, 4, cfg))
    assert [b.shape[0] for b in blocks] == [1000, 1000, 500]
    # a short block is the prefix of the full block from the same substream
    np.testing.assert_array_equal(blocks[2], generate_sign_block(3, 4, 1000, block_rng(9, 2))[:500])


def test_naive_extremes():
    rng = np.random.default_rng(1)
    z, n, m = pool(concentrated(rng, 10, 5), concentrated(rng, 12, 5))
    cfg = TestConfig(n_permutations=99, seed=3)
    assert naive_test(z, n, m, 1e300, cfg).p_value == pytest.approx(0.01)
    assert naive_test(z, n, m, -1e300, cfg).p_value == 1.0
    assert engine_run(z, n, m, 1e300, cfg).exceedances == 0


# Exhaustive N=4 case, frozen from oracles.enumerate_splits on this data.
N4_DATA = np.array([[0.6, 0.8], [1.0, 0.0], [0.0, 1.0], [-0.28, 0.96]])
N4_EXACT = {"greater": 1, "two-sided": 2}


def test_n4_frozen_oracle_values():
    for alt, frozen in N4_EXACT.items():
        count, total, _ = enumerate_splits(N4_DATA, 2, alt)
        assert (count, total) == (frozen, 6)


@pytest.mark.parametrize("alternative", ["greater", "two-sided"])
def test_n4_monte_carlo_matches_enumeration(alternative):
    z, n, m = pool(N4_DATA[:2], N4_DATA[2:])
    _, _, t_obs = enumerate_splits(N4_DATA, 2, alternative)
    cfg = TestConfig(n_permutations=10000, alternative=alternative, seed=4)
    exact = N4_EXACT[alternative] / 6
    assert naive_test(z, n, m, t_obs, cfg).p_value == pytest.approx(exact, abs=0.02)
    assert engine_run(z, n, m, t_obs, cfg).p_value == pytest.approx(exact, abs=0.02)


@pytest.mark.parametrize("alternative", ["greater", "two-sided"])
def test_n4_explicit_sign_rows(alternative):
    z, n, m = pool(N4_DATA[:2], N4_DATA[2:])
    _, _, t_obs = enumerate_splits(N4_DATA, 2, alternative)
    signs = all_sign_rows(4, 2)
    cfg = TestConfig(n_permutations=6, block_size=4, alternative=alternative)
    assert engine_run(z, n, m, t_obs, cfg, signs=signs).exceedances == N4_EXACT[alternative]
    assert naive_test(z, n, m, t_obs, cfg, signs=signs).exceedances == N4_EXACT[alternative]


def test_explicit_signs_validated():
    z, n, m = pool(N4_DATA[:2], N4_DATA[2:])
    cfg = TestConfig(n_permutations=1)
    with pytest.raises(InputError):
        engine_run(z, n, m, 0.0, cfg, signs=np.array([[1, 1, 1, -1]]))
    with pytest.raises(InputError):
        engine_run(z, n, m, 0.0, cfg, signs=np.array([[1, 0, 1, -1]]))
    with pytest.raises(DimensionMismatch):
        engine_run(z, n, m, 0.0, cfg, signs=np.array([[1, 1, -1]]))


def test_recovery_identity():
    rng = np.random.default_rng(5)
    z, n, m = pool(concentrated(rng, 30, 8), concentrated(rng, 20, 8))
    t = z.sum(0)
    block = generate_sign_block(n, m, 50, rng)
    u = block.astype(float) @ z
    np.testing.assert_allclose((t + u) / 2 + (t - u) / 2, np.broadcast_to(t, u.shape), atol=1e-9)
    np.testing.assert_allclose((t + u) / 2, (block == 1).astype(float) @ z, atol=1e-9)


def test_engines_agree_per_permutation():
    rng = np.random.default_rng(200)
    p = prepare_pair(concentrated(rng, 100, 32), concentrated(rng, 100, 32))
    for alt in ("greater", "two-sided"):
        cfg = TestConfig(n_permutations=1000, block_size=256, seed=11, alternative=alt)
        a = naive_test(p.z, p.n, p.m, p.t_obs, cfg, keep_stats=True)
        b = engine_run(p.z, p.n, p.m, p.t_obs, cfg, keep_stats=True)
        assert np.max(np.abs(a.statistics - b.statistics)) < 1e-9
        assert a.exceedances == b.exceedances


def test_degenerate_permuted_group_counts_as_exceedance():
    z = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    signs = np.array([[1, 1, -1, -1]], dtype=np.int8)
    cfg = TestConfig(n_permutations=1)
    for engine in (naive_test, engine_run):
        res = engine(z, 2, 2, 5.0, cfg, signs=signs, keep_stats=True)
        assert res.statistics[0] == math.inf
        assert res.exceedances == 1


def test_two_sided_counts_absolute_values():
    stats = np.array([-3.0, -1.0, 0.5, 2.0, 3.0])
    assert count_exceedances(stats, 2.0, "greater") == 2
    assert count_exceedances(stats, 2.0, "two-sided") == 3
    assert count_exceedances(stats, -2.0, "two-sided") == 3


def test_blocks_are_order_independent():
    # block k depends only on (seed, k): summing counts in any order gives the total
    rng = np.random.default_rng(8)
    p = prepare_pair(concentrated(rng, 40, 6), concentrated(rng, 40, 6))
    cfg = TestConfig(n_permutations=3000, block_size=500, seed=77)
    total = p.z.sum(0)
    counts = []
    for k in reversed(range(6)):
        block = generate_sign_block(p.n, p.m, 500, block_rng(77, k))
        counts.append(count_exceedances(block_statistics(p.z, total, p.n, p.m, block), p.t_obs, "greater"))
    assert sum(counts) == engine_run(p.z, p.n, p.m, p.t_obs, cfg).exceedances


def _peak_bytes(fn):
    tracemalloc.start()
    tracemalloc.reset_peak()
    fn()
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    return peak


def test_memory_scales_with_block_not_b():
    rng = np.random.default_rng(3)
    p = prepare_pair(concentrated(rng, 300, 64), concentrated(rng, 300, 64))

    def run(b, b0):
        cfg = TestConfig(n_permutations=b, block_size=b0, seed=1)
        return _peak_bytes(lambda: engine_run(p.z, p.n, p.m, p.t_obs, cfg))

    small, large = run(4096, 256), run(4096, 1024)
    per_row = 8 * (600 + 64)
    # the float64 copy of the sign block dominates: roughly B0 * (N + d) * 8 bytes
    assert 3.0 < large / small < 5.0
    assert large < 3 * 1024 * per_row
    assert run(8192, 256) < 1.2 * small


def test_run_pair_metadata_and_determinism():
    rng = np.random.default_rng(12)
    x, y = concentrated(rng, 40, 10), concentrated(rng, 50, 10, spread=1.2)
    cfg = TestConfig(n_permutations=499, seed=5)
    a = run_pair(x, y, cfg)
    b = run_pair(x, y, cfg)
    assert a.to_dict() == b.to_dict()
    assert a.aligned and not a.is_identity
    assert a.b_used == 499
    assert 1 / 500 <= a.p_value <= 1
    assert a.p_value == pytest.approx((1 + a.exceedances) / 500)
    base = run_pair(x, y, cfg, baseline=True)
    assert not base.aligned
    # alignment does not change either resultant length, hence not t_obs
    assert base.t_obs == pytest.approx(a.t_obs, abs=1e-9)


def test_run_pair_same_cloud_halves_not_extreme():
    rng = np.random.default_rng(21)
    cloud = concentrated(rng, 200, 16)
    ok = 0
    for seed in range(20):
        order = np.random.default_rng(seed).permutation(200)
        res = run_pair(cloud[order[:100]], cloud[order[100:]], TestConfig(n_permutations=499, seed=seed))
        ok += res.p_value >= 0.05
    assert ok >= 18


def test_run_batch_identical_pairs():
    rng = np.random.default_rng(2)
    x, y = concentrated(rng, 25, 6), concentrated(rng, 25, 6)
    results = run_batch([(x, y)] * 3, TestConfig(n_permutations=300, block_size=64, seed=1))
    assert len(results) == 3
    assert results[0].to_dict() == results[1].to_dict() == results[2].to_dict()


@pytest.mark.parametrize("baseline", [False, True])
def test_run_batch_matches_sequential(baseline):
    rng = np.random.default_rng(4)
    pairs = [(concentrated(rng, 30, 8), concentrated(rng, 20, 8, spread=s)) for s in (0.5, 0.8, 1.5)]
    cfg = TestConfig(n_permutations=1000, block_size=128, seed=99, alternative="two-sided")
    batch = run_batch(pairs, cfg, baseline=baseline)
    for (x, y), res in zip(pairs, batch):
        single = run_pair(x, y, cfg, baseline=baseline)
        assert res.exceedances == single.exceedances
        assert res.to_dict() == single.to_dict()


def test_run_batch_mixed_shapes():
    rng = np.random.default_rng(4)
    pairs = [(concentrated(rng, 30, 8), concentrated(rng, 20, 8)),
             (concentrated(rng, 31, 8), concentrated(rng, 20, 8))]
    with pytest.raises(MixedShapes):
        run_batch(pairs, TestConfig(n_permutations=10))


def test_subsample():
    cloud = np.arange(40.0).reshape(20, 2)
    out = subsample(cloud, 5, np.random.default_rng(0))
    assert out.shape == (5, 2)
    assert np.all(np.diff(out[:, 0]) > 0)
    np.testing.assert_array_equal(out, subsample(cloud, 5, np.random.default_rng(0)))
    with pytest.raises(InputError):
        subsample(cloud, 21, np.random.default_rng(0))
