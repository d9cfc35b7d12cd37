"""Monte Carlo estimators for moments, mgfs and survival probabilities.

Samples are drawn in fixed-size batches, each batch on its own
counter-based stream, so estimates are bitwise reproducible for a given
(master seed, batch size) regardless of worker count.  Reduction happens
on the concatenated sample array in batch order.

Free and two-sided integrals are truncated at a finite horizon.  For
first moments the estimator adds the closed-form Green potential of the
terminal position, which removes the truncation bias of the mean entirely
(tower property); the correction is optional and applies only where it is
unbiased.  The mgf estimator applies the same correction inside the
exponent, which cancels the first-order truncation bias and leaves a
documented second-order one.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .gaussian import transition_density
from .path_sim import (
    BATCH_SIZE,
    BridgeSpec,
    TimeGrid,
    bridge_integral_batch,
    free_integral_batch,
    stream,
)
from .potentials import (
    BoundsReport,
    Potential,
    green_potential,
    green_potential_radial,
)

__all__ = [
    "McEstimate",
    "MgfCurve",
    "ReactionEstimate",
    "EstimatorConfig",
    "draw_integrals",
    "mc_moment",
    "mc_mgf",
    "reaction_probability",
    "bloch_green",
]

_KINDS = ("bridge", "free", "two_sided")


@dataclass(frozen=True)
class McEstimate:
    """Sample mean with plug-in standard error and a dominance diagnostic.

    ``max_sample_share`` is the fraction of sum |x_i| carried by the
    single largest |x_i|; values near 1 mean the estimate is a fluke of
    one path, the empirical signature of a diverging mgf.
    """

    mean: float
    std_error: float
    n: int
    max_sample_share: float = 0.0

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("standard error must be nonnegative")
        if self.n >= 2 and not (0.0 <= self.max_sample_share <= 1.0):
            raise ValueError("max_sample_share must lie in [0, 1]")

    @classmethod
    def from_samples(cls, values: np.ndarray) -> "McEstimate":
        values = np.asarray(values, dtype=float)
        n = values.size
        if n < 2:
            raise ValueError("at least 2 samples are needed for a standard error")
        mean = float(np.mean(values))
        se = float(np.std(values, ddof=1) / math.sqrt(n))
        total = float(np.sum(np.abs(values)))
        share = float(np.max(np.abs(values)) / total) if total > 0 else 0.0
        return cls(mean=mean, std_error=se, n=n, max_sample_share=share)

    def as_dict(self):
        return {"mean": self.mean, "std_error": self.std_error,
                "n": self.n, "max_sample_share": self.max_sample_share}


@dataclass(frozen=True)
class MgfCurve:
    """Per-alpha mgf estimates with heavy-tail instability flags."""

    alphas: np.ndarray
    estimates: list
    unstable: np.ndarray

    def estimate_at(self, alpha: float) -> McEstimate:
        idx = int(np.argmin(np.abs(self.alphas - alpha)))
        if abs(self.alphas[idx] - alpha) > 1e-12:
            raise KeyError(f"alpha={alpha} is not on the curve grid")
        return self.estimates[idx]


@dataclass(frozen=True)
class ReactionEstimate:
    """Survival probability E exp(-Z) and its complement."""

    survival: McEstimate
    reaction: McEstimate


@dataclass
class EstimatorConfig:
    """Everything a sampler needs: target law, grid, budget mechanics.

    ``free_horizon`` defaults to 100 R^2 (support radius R), the scale at
    which exterior occupation is negligible by transience; the adequacy of
    the truncation is checked by the doubling test in the suite.
    """

    potential: Potential
    x: np.ndarray = None
    y: np.ndarray = None
    t: float = None
    free_horizon: float | None = None
    grid: TimeGrid | None = None
    h_fine: float = 0.01
    h_coarse: float | None = None
    refine_window: float | None = None
    seed: int = 0
    stream_channel: int = 0
    batch_size: int = BATCH_SIZE
    workers: int = 1
    antithetic: bool = False
    tail_correction: bool = True
    bounds: BoundsReport | None = None
    alpha1_hint: float | None = None

    def __post_init__(self):
        if self.x is not None:
            self.x = np.asarray(self.x, dtype=float)
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=float)

    @property
    def dim(self) -> int:
        return self.potential.dim

    def resolved_free_horizon(self) -> float:
        if self.free_horizon is not None:
            return float(self.free_horizon)
        r = self.potential.support_radius
        return max(100.0 * r * r, 1.0)

    def bridge_spec(self) -> BridgeSpec:
        if self.x is None or self.y is None or self.t is None:
            raise ValueError("bridge sampling needs x, y and t in the config")
        return BridgeSpec(self.dim, float(self.t), self.x, self.y)

    def grid_for(self, horizon: float, kind: str = "bridge") -> TimeGrid:
        if self.grid is not None:
            if self.grid.horizon != horizon:
                raise ValueError("explicit grid does not span the requested horizon")
            return self.grid
        builder = TimeGrid.endpoint_refined if kind == "bridge" else TimeGrid.front_refined
        return builder(horizon, u=self.refine_window,
                       h_fine=self.h_fine, h_coarse=self.h_coarse)

def _stream_id(channel: int, leg: int, batch: int) -> int:
    return batch + (leg << 32) + (channel << 40)


def _run_batch(kind: str, cfg: EstimatorConfig, batch: int, count: int):
    """One batch of path integrals; returns (values, tail_potential or None)."""
    v = cfg.potential
    if kind == "bridge":
        spec = cfg.bridge_spec()
        grid = cfg.grid_for(spec.t)
        rng = stream(cfg.seed, _stream_id(cfg.stream_channel, 0, batch))
        vals, _ = bridge_integral_batch(spec, grid, v, rng, count,
                                        antithetic=cfg.antithetic)
        return vals, None
    horizon = cfg.resolved_free_horizon()
    grid = cfg.grid_for(horizon, kind="free")
    if kind == "free":
        rng = stream(cfg.seed, _stream_id(cfg.stream_channel, 0, batch))
        vals, term = free_integral_batch(cfg.x, grid, v, rng, count,
                                         antithetic=cfg.antithetic)
        return vals, _green_potential_vec(v, term)
    if kind == "two_sided":
        if cfg.y is None:
            raise ValueError("two-sided sampling needs both endpoints")
        rng_x = stream(cfg.seed, _stream_id(cfg.stream_channel, 0, batch))
        rng_y = stream(cfg.seed, _stream_id(cfg.stream_channel, 1, batch))
        vx, tx = free_integral_batch(cfg.x, grid, v, rng_x, count,
                                     antithetic=cfg.antithetic)
        vy, ty = free_integral_batch(cfg.y, grid, v, rng_y, count,
                                     antithetic=cfg.antithetic)
        return vx + vy, _green_potential_vec(v, tx) + _green_potential_vec(v, ty)
    raise ValueError(f"unknown sample kind {kind!r}; expected one of {_KINDS}")


def _green_potential_vec(v: Potential, points: np.ndarray) -> np.ndarray:
    """Green potential of v at many points (the exact mean of the lost tail)."""
    if v.is_radial:
        b = np.linalg.norm(points - v.center, axis=1)
        return np.asarray(green_potential_radial(v, b))
    return np.array([green_potential(v, p) for p in points])


def _batch_plan(n: int, batch_size: int):
    batches = []
    done = 0
    idx = 0
    while done < n:
        count = min(batch_size, n - done)
        batches.append((idx, count))
        done += count
        idx += 1
    return batches


def _collect(kind: str, n: int, cfg: EstimatorConfig):
    """All samples for the request, concatenated in batch order."""
    if kind not in _KINDS:
        raise ValueError(f"unknown sample kind {kind!r}; expected one of {_KINDS}")
    plan = _batch_plan(n, cfg.batch_size)
    if cfg.workers > 1 and len(plan) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_worker, [(kind, cfg, b, c) for b, c in plan]))
    else:
        parts = [_run_batch(kind, cfg, b, c) for b, c in plan]
    values = np.concatenate([p[0] for p in parts])
    tails = None
    if parts[0][1] is not None:
        tails = np.concatenate([p[1] for p in parts])
    return values, tails


def _worker(args):
    return _run_batch(*args)


def draw_integrals(kind: str, n: int, cfg: EstimatorConfig):
    """Raw path-integral samples plus terminal tail potentials.

    Returns (values, tails); ``tails`` is None for the bridge kind, where
    the horizon is exact and no truncation correction exists.  Harnesses
    use this to evaluate several statistics on one sampling pass.
    """
    return _collect(kind, n, cfg)


def mc_moment(kind: str, k: int, n: int, cfg: EstimatorConfig) -> McEstimate:
    """Empirical k-th moment of the requested path integral.

    For free and two-sided first moments the truncated sample is augmented
    by the closed-form expected tail beyond the horizon (exactly unbiased);
    higher moments use the plain truncated integral.
    """
    if k < 1:
        raise ValueError("moment order must be at least 1")
    if n < 2:
        raise ValueError("at least 2 samples are required")
    if cfg.potential.is_zero:
        return McEstimate(mean=0.0, std_error=0.0, n=n, max_sample_share=0.0)
    values, tails = _collect(kind, n, cfg)
    if k == 1 and cfg.tail_correction and tails is not None:
        values = values + tails
    return McEstimate.from_samples(values**k)


def _mgf_warnings(alphas: np.ndarray, cfg: EstimatorConfig):
    v = cfg.potential
    if cfg.bounds is not None and cfg.bounds.alpha0 is not None and not v.is_nonnegative:
        if np.any(np.abs(alphas) >= cfg.bounds.alpha0):
            warnings.warn(
                "alpha grid reaches the guaranteed mgf radius alpha0 for a "
                "sign-changing potential; estimates beyond it may not converge",
                RuntimeWarning, stacklevel=3)
    hint = cfg.alpha1_hint
    if hint is None and cfg.bounds is not None and cfg.bounds.alpha1_bracket:
        hint = cfg.bounds.alpha1_bracket[1]
    if v.is_nonnegative and hint is not None and np.any(alphas >= hint):
        warnings.warn(
            "alpha grid reaches the bracketed blow-up threshold; expect "
            "heavy-tail flags", RuntimeWarning, stacklevel=3)


def mc_mgf(kind: str, alphas, n: int, cfg: EstimatorConfig) -> MgfCurve:
    """Empirical mgf curve alpha -> E exp(alpha Z) with stability flags.

    alpha = 0 is returned exactly.  An estimate is flagged unstable when a
    single sample carries more than half of the total mass.
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    if n < 2:
        raise ValueError("at least 2 samples are required")
    _mgf_warnings(alphas, cfg)
    if cfg.potential.is_zero:
        estimates = [McEstimate(1.0, 0.0, n, 1.0 / n) for _ in alphas]
        return MgfCurve(alphas, estimates, np.zeros(alphas.size, dtype=bool))
    values, tails = _collect(kind, n, cfg)
    if cfg.tail_correction and tails is not None:
        values = values + tails
    estimates = []
    unstable = np.zeros(alphas.size, dtype=bool)
    for i, a in enumerate(alphas):
        if a == 0.0:
            estimates.append(McEstimate(1.0, 0.0, n, 1.0 / n))
            continue
        est = McEstimate.from_samples(np.exp(a * values))
        estimates.append(est)
        unstable[i] = est.max_sample_share > 0.5
    return MgfCurve(alphas, estimates, unstable)


def reaction_probability(kind: str, n: int, cfg: EstimatorConfig) -> ReactionEstimate:
    """Survival probability E exp(-Z) and the complementary probability.

    Requires v >= 0 so that exp(-Z) is a probability pathwise.  Both
    readings of the underlying display are reported; survival is the
    mathematically consistent one for a killing rate v.
    """
    if not cfg.potential.is_nonnegative:
        raise ValueError("reaction probabilities need a nonnegative rate potential")
    if n < 2:
        raise ValueError("at least 2 samples are required")
    values, tails = _collect(kind, n, cfg)
    if cfg.tail_correction and tails is not None:
        values = values + tails
    surv = McEstimate.from_samples(np.exp(-values))
    react = McEstimate(mean=1.0 - surv.mean, std_error=surv.std_error,
                       n=surv.n, max_sample_share=surv.max_sample_share)
    return ReactionEstimate(survival=surv, reaction=react)


def bloch_green(x, y, t: float, n: int, cfg: EstimatorConfig) -> McEstimate:
    """Fundamental solution value q(t; y - x) E exp(-Z(t)) for the bridge.

    Reduces to the free heat kernel when v vanishes; for v >= 0 the value
    is dominated by the kernel pathwise.
    """
    cfg = replace(cfg, x=np.asarray(x, dtype=float), y=np.asarray(y, dtype=float),
                  t=float(t))
    kernel = transition_density(t, np.asarray(y, float) - np.asarray(x, float))
    if cfg.potential.is_zero:
        return McEstimate(mean=kernel, std_error=0.0, n=n, max_sample_share=1.0 / n)
    values, _ = _collect("bridge", n, cfg)
    est = McEstimate.from_samples(np.exp(-values))
    return McEstimate(mean=kernel * est.mean, std_error=kernel * est.std_error,
                      n=est.n, max_sample_share=est.max_sample_share)
