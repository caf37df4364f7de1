"""Grid searches over the age threshold (and fixed transmit probability)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytic import HIGH_START, LOW_START, average_aoi_batch
from .model import FixedPolicy, validate_config


class AllDegenerate(RuntimeError):
    """No grid point produced a finite AoI."""


DEFAULT_P_GRID = tuple(
    [round(0.01 * k, 2) for k in range(1, 21)] + [round(0.05 * k, 2) for k in range(5, 21)]
)


def default_delta_max(config):
    return 3 * config.n_devices * config.frame_len


@dataclass(frozen=True)
class CurvePoint:
    delta: int
    p: float | None  # None for the adaptive policy
    aoi: float  # nan where the chain is degenerate


@dataclass(frozen=True)
class SearchResult:
    best_delta: int
    best_p: float | None
    best_aoi: float
    curve: tuple

    def at_delta(self, delta):
        """Best finite curve point with the given threshold, or None."""
        pts = [c for c in self.curve if c.delta == delta and np.isfinite(c.aoi)]
        return min(pts, key=lambda c: c.aoi) if pts else None


def aoi_curve(config, deltas, skip_multistable=False):
    """Analytic AoI at each threshold in ``deltas`` (``nan`` where no answer).

    With ``skip_multistable`` the fixed point is solved from both corners of
    the unit square; thresholds where the two disagree admit a congested
    equilibrium besides the good one and are reported as ``nan``.
    """
    deltas = np.asarray(deltas)
    if not skip_multistable:
        return average_aoi_batch(config, deltas)
    high = average_aoi_batch(config, deltas, initial=HIGH_START)
    low = average_aoi_batch(config, deltas, initial=LOW_START)
    return np.where(np.isclose(low, high, rtol=1e-6, atol=0.0), high, np.nan)


def _best(curve):
    finite = [c for c in curve if np.isfinite(c.aoi)]
    if not finite:
        raise AllDegenerate("every grid point is degenerate")
    # curve is ordered by (delta, p), so min keeps the first of any tie
    best = min(finite, key=lambda c: c.aoi)
    return SearchResult(best.delta, best.p, best.aoi, tuple(curve))


def optimize_delta(config, delta_max=None, skip_multistable=False):
    """Exhaustive search of ``0..delta_max`` at the config's own policy.

    Thresholds whose chain is degenerate (or whose fixed point cannot be
    reached) stay in the curve with ``aoi = nan`` and never win.  See
    :func:`aoi_curve` for ``skip_multistable``.
    """
    validate_config(config)
    if delta_max is None:
        delta_max = default_delta_max(config)
    if delta_max < 0:
        raise ValueError("delta_max must be >= 0")
    p = config.policy.p if isinstance(config.policy, FixedPolicy) else None
    aoi = aoi_curve(config, np.arange(delta_max + 1), skip_multistable)
    return _best([CurvePoint(delta, p, float(a)) for delta, a in enumerate(aoi)])


def optimize_joint(config, delta_max=None, p_grid=DEFAULT_P_GRID, skip_multistable=False):
    """Exhaustive search over thresholds ``0..delta_max`` and fixed probabilities ``p_grid``."""
    p_grid = sorted(float(p) for p in p_grid)
    if not p_grid:
        raise ValueError("p_grid must not be empty")
    if not all(0.0 < p <= 1.0 for p in p_grid):
        raise ValueError("p_grid values must lie in (0, 1]")
    if delta_max is None:
        delta_max = default_delta_max(config)
    if delta_max < 0:
        raise ValueError("delta_max must be >= 0")
    deltas = np.arange(delta_max + 1)
    table = np.column_stack(
        [aoi_curve(config.replace(policy=FixedPolicy(p)), deltas, skip_multistable) for p in p_grid]
    )
    curve = [
        CurvePoint(delta, p, float(table[delta, j]))
        for delta in range(delta_max + 1)
        for j, p in enumerate(p_grid)
    ]
    return _best(curve)


def optimize(config, delta_max=None, p_grid=DEFAULT_P_GRID, skip_multistable=False):
    """Optimal ADRA within the config's policy class (fixed p searched over ``p_grid``)."""
    if config.adaptive:
        return optimize_delta(config, delta_max, skip_multistable)
    return optimize_joint(config, delta_max, p_grid, skip_multistable)


@dataclass(frozen=True)
class Comparison:
    adra: SearchResult
    aira: CurvePoint

    @property
    def improvement(self):
        return (self.aira.aoi - self.adra.best_aoi) / self.aira.aoi


def compare(config, delta_max=None, p_grid=DEFAULT_P_GRID, skip_multistable=False):
    """Optimal ADRA against the best threshold-free (``delta = 0``) point of the same class."""
    adra = optimize(config, delta_max, p_grid, skip_multistable)
    aira = adra.at_delta(0)
    if aira is None:
        raise AllDegenerate("no finite point at delta=0")
    return Comparison(adra, aira)


def compare_to_aira(config, delta_max=None, p_grid=DEFAULT_P_GRID, skip_multistable=False):
    """Relative AoI reduction of optimal ADRA over optimal AIRA; never negative."""
    return compare(config, delta_max, p_grid, skip_multistable).improvement
