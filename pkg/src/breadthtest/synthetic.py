"""Von Mises-Fisher clouds and desk-scale calibration experiments.

Each trial draws its data from ``SeedSequence(seed, spawn_key=(3, t))`` and
its sign stream from a seed derived from ``(2, t)``. Baseline and aligned
tests within a trial share the sign stream, so their rejection rates are a
paired comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InputError
from .geometry import as_cloud
from .permutation import TestConfig, run_pair

_TRIAL_SEED_STREAM = 2
_TRIAL_DATA_STREAM = 3

MODES = ("null_same_dispersion", "alternative_diff_dispersion", "split_half")


@dataclass(frozen=True)
class VmfSpec:
    mean_direction: np.ndarray
    concentration: float
    n_samples: int
    seed: int = 0

    def __post_init__(self):
        if self.concentration < 0:
            raise InputError("concentration must be >= 0")
        if self.n_samples < 1:
            raise InputError("n_samples must be >= 1")
        mu = np.asarray(self.mean_direction, dtype=np.float64)
        if mu.ndim != 1 or mu.size < 2:
            raise InputError("mean_direction must be a vector of length >= 2")
        if self.concentration > 0 and abs(np.linalg.norm(mu) - 1.0) > 1e-6:
            raise InputError("mean_direction must be unit norm")
        object.__setattr__(self, "mean_direction", mu)


def _uniform_sphere(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    x = rng.standard_normal((n, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _wood_cosines(kappa: float, dim: int, n: int, rng: np.random.Generator) -> np.ndarray:
    # Wood (1994) rejection sampler for w = mu^T x
    d1 = dim - 1.0
    b = d1 / (2.0 * kappa + np.sqrt(4.0 * kappa * kappa + d1 * d1))
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + d1 * np.log(1.0 - x0 * x0)
    out = np.empty(n)
    filled = 0
    while filled < n:
        want = n - filled
        z = rng.beta(d1 / 2.0, d1 / 2.0, size=want)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.random(want)
        ok = kappa * w + d1 * np.log(1.0 - x0 * w) - c >= np.log(u)
        acc = w[ok]
        out[filled:filled + acc.size] = acc
        filled += acc.size
    return out


def sample_vmf(spec: VmfSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw ``spec.n_samples`` unit vectors from vMF(mean_direction, concentration).

    Zero concentration gives the uniform distribution on the sphere. ``rng``
    overrides ``spec.seed`` when given.
    """
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    mu = spec.mean_direction
    dim = mu.size
    if spec.concentration == 0:
        return _uniform_sphere(spec.n_samples, dim, rng)
    mu = mu / np.linalg.norm(mu)
    w = _wood_cosines(float(spec.concentration), dim, spec.n_samples, rng)
    v = rng.standard_normal((spec.n_samples, dim))
    v -= np.outer(v @ mu, mu)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return w[:, None] * mu + np.sqrt(np.clip(1.0 - w * w, 0.0, None))[:, None] * v


def random_direction(dim: int, rng: np.random.Generator) -> np.ndarray:
    return _uniform_sphere(1, dim, rng)[0]


def direction_pair(dim: int, angle_deg: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors at ``angle_deg`` from each other in a random 2-plane."""
    mu1 = random_direction(dim, rng)
    w = rng.standard_normal(dim)
    w -= (w @ mu1) * mu1
    w /= np.linalg.norm(w)
    theta = np.deg2rad(angle_deg)
    return mu1, np.cos(theta) * mu1 + np.sin(theta) * w


def trial_seed(seed: int, trial: int) -> int:
    state = np.random.SeedSequence(seed, spawn_key=(_TRIAL_SEED_STREAM, trial)).generate_state(1, np.uint64)
    return int(state[0])


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_TRIAL_DATA_STREAM, trial)))


@dataclass
class CalibrationReport:
    mode: str
    trials: int
    alpha: float
    rejection_rate_baseline: float
    rejection_rate_aligned: float
    p_baseline: np.ndarray = field(repr=False)
    p_aligned: np.ndarray = field(repr=False)
    params: dict = field(default_factory=dict)

    @property
    def mean_abs_p_diff(self) -> float:
        return float(np.mean(np.abs(self.p_baseline - self.p_aligned)))

    @property
    def max_abs_p_diff(self) -> float:
        return float(np.max(np.abs(self.p_baseline - self.p_aligned)))

    def to_dict(self, include_pvalues: bool = False) -> dict:
        out = {
            "mode": self.mode,
            "trials": self.trials,
            "alpha": self.alpha,
            "rejection_rate_baseline": self.rejection_rate_baseline,
            "rejection_rate_aligned": self.rejection_rate_aligned,
            "mean_abs_p_diff": self.mean_abs_p_diff,
            "max_abs_p_diff": self.max_abs_p_diff,
            "params": self.params,
        }
        if include_pvalues:
            out["p_baseline"] = self.p_baseline.tolist()
            out["p_aligned"] = self.p_aligned.tolist()
        return out


def _paired_pvalues(x, y, config: TestConfig, trial: int) -> tuple[float, float]:
    cfg = replace(config, seed=trial_seed(config.seed, trial))
    p_base = run_pair(x, y, cfg, baseline=True).p_value
    p_aligned = run_pair(x, y, cfg).p_value
    return p_base, p_aligned


def _report(mode, p_base, p_aligned, config, params) -> CalibrationReport:
    p_base = np.asarray(p_base)
    p_aligned = np.asarray(p_aligned)
    return CalibrationReport(
        mode=mode,
        trials=p_base.size,
        alpha=config.alpha,
        rejection_rate_baseline=float(np.mean(p_base <= config.alpha)),
        rejection_rate_aligned=float(np.mean(p_aligned <= config.alpha)),
        p_baseline=p_base,
        p_aligned=p_aligned,
        params=params,
    )


def _two_cloud_experiment(mode, dim, n, m, kappa_x, kappa_y, angle_deg, trials, config) -> CalibrationReport:
    if dim < 2 or n < 2 or m < 2 or trials < 1:
        raise InputError("need dim >= 2, group sizes >= 2 and trials >= 1")
    p_base, p_aligned = [], []
    for t in range(trials):
        rng = trial_rng(config.seed, t)
        mu1, mu2 = direction_pair(dim, angle_deg, rng)
        x = sample_vmf(VmfSpec(mu1, kappa_x, n), rng)
        y = sample_vmf(VmfSpec(mu2, kappa_y, m), rng)
        pb, pa = _paired_pvalues(x, y, config, t)
        p_base.append(pb)
        p_aligned.append(pa)
    params = {
        "dim": dim, "n": n, "m": m, "kappa_x": kappa_x, "kappa_y": kappa_y,
        "angle_deg": angle_deg, "b": config.n_permutations,
        "alternative": config.alternative, "seed": config.seed,
    }
    return _report(mode, p_base, p_aligned, config, params)


def type1_experiment(dim: int, n: int, kappa: float, angle_deg: float, trials: int = 500,
                     config: TestConfig | None = None, m: int | None = None) -> CalibrationReport:
    """Same concentration, means ``angle_deg`` apart: rejection rates estimate Type-I error."""
    config = config or TestConfig()
    return _two_cloud_experiment("null_same_dispersion", dim, n, m or n, kappa, kappa,
                                 angle_deg, trials, config)


def power_experiment(dim: int, n: int, kappa_x: float, kappa_y: float, trials: int = 500,
                     config: TestConfig | None = None, angle_deg: float = 60.0,
                     m: int | None = None) -> CalibrationReport:
    """Different concentrations: rejection rates estimate power.

    With ``alternative="greater"`` the test targets X broader than Y, i.e.
    ``kappa_x < kappa_y``.
    """
    config = config or TestConfig()
    return _two_cloud_experiment("alternative_diff_dispersion", dim, n, m or n, kappa_x, kappa_y,
                                 angle_deg, trials, config)


def split_half_check(cloud, trials: int = 100, config: TestConfig | None = None) -> CalibrationReport:
    """Split one cloud into random halves repeatedly and test each split both ways."""
    config = config or TestConfig()
    arr = as_cloud(cloud)
    if arr.shape[0] < 20:
        raise InputError(f"split-half check needs at least 20 rows, got {arr.shape[0]}")
    half = arr.shape[0] // 2
    p_base, p_aligned = [], []
    for t in range(trials):
        order = trial_rng(config.seed, t).permutation(arr.shape[0])
        pb, pa = _paired_pvalues(arr[order[:half]], arr[order[half:]], config, t)
        p_base.append(pb)
        p_aligned.append(pa)
    params = {
        "rows": int(arr.shape[0]), "dim": int(arr.shape[1]), "b": config.n_permutations,
        "alternative": config.alternative, "seed": config.seed,
    }
    return _report("split_half", p_base, p_aligned, config, params)
