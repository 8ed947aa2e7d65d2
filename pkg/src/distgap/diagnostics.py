"""Distance profiles and mismatch summaries.

Two normalized distributions over hop distance are compared: where the
labels' signal lives (task profile) and where the trained model allocates
attention after shell-size correction (attention profile). Mismatch is
summarized by the mean-distance gap (signed) and Wasserstein-1 (sign-free),
and the gap sign names the failure regime.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .graphgen import (
    UNREACHABLE,
    DistanceMatrix,
    Graph,
    mean_shell_sizes,
    mean_unreachable_count,
)
from .task import TaskSpec

PROFILE_SUM_TOL = 1e-9

#: Gap magnitude (in hops) below which a run counts as aligned.
DEFAULT_REGIME_TOL = 0.1


class Regime(enum.Enum):
    UNDER_REACHING = "under_reaching"
    OVER_GLOBALIZING = "over_globalizing"
    ALIGNED = "aligned"


@dataclass(frozen=True)
class DistanceProfile:
    """Probability vector over hop distances 0..r_max."""

    mass: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mass, dtype=np.float64)
        object.__setattr__(self, "mass", m)
        if m.ndim != 1 or m.size == 0:
            raise ParameterError("profile mass must be a nonempty 1-d vector")
        if (m < 0).any():
            raise ParameterError("profile mass entries must be >= 0")
        if abs(m.sum() - 1.0) > PROFILE_SUM_TOL:
            raise ParameterError(f"profile mass must sum to 1, got {m.sum()!r}")

    @property
    def r_max(self) -> int:
        return self.mass.size - 1


def point_mass(r: int, r_max: int) -> DistanceProfile:
    mass = np.zeros(r_max + 1)
    mass[r] = 1.0
    return DistanceProfile(mass)


@dataclass(frozen=True)
class MismatchReport:
    mu_task: float
    mu_attn: float
    gap: float  # mu_task - mu_attn
    w1: float
    regime: Regime

    def csv_row(self, epoch: int, lam: float) -> str:
        """One trajectory row: epoch, lambda, mu_task, mu_A, gap, w1, regime."""
        vals = [epoch, repr(lam), repr(self.mu_task), repr(self.mu_attn),
                repr(self.gap), repr(self.w1), self.regime.value]
        return ",".join(str(v) for v in vals)


def task_profile(g: Graph, dm: DistanceMatrix, spec: TaskSpec) -> DistanceProfile:
    """Where label-relevant signal lives, as a distribution over hops.

    The local component spreads its mass over r in {0, 1} proportionally to
    the mean shell sizes there (1 vs mean degree); the far component is a
    point mass at r_star. Support runs to max(r_star, diameter).
    """
    r_max = max(spec.r_star, dm.diameter)
    mass = np.zeros(r_max + 1)

    sizes = mean_shell_sizes(dm)
    mean_degree = sizes[1] if len(sizes) > 1 else 0.0
    w_loc = np.array([1.0, mean_degree])
    w_loc = w_loc / w_loc.sum()
    mass[0] += spec.beta * w_loc[0]
    mass[1] += spec.beta * w_loc[1]  # r_max >= r_star >= 2
    mass[spec.r_star] += 1.0 - spec.beta
    return DistanceProfile(mass)


def pooled_attention_mass(attn: np.ndarray, dm: DistanceMatrix) -> np.ndarray:
    """Raw attention mass per hop distance, before shell correction.

    Entry r is the mean over layers, heads and query nodes of the attention
    mass landing at distance r; unreachable targets fall in the final
    bucket at index diameter + 1. Pooling is linear in the attention
    record, so convex combinations of records pool to the same combination
    of masses.
    """
    if attn.ndim != 4:
        raise ParameterError("attention record must have shape (L, H, n, n)")
    n = dm.n
    if attn.shape[2] != n or attn.shape[3] != n:
        raise ParameterError("attention record and distance matrix disagree on n")
    bucket = np.where(dm.d == UNREACHABLE, dm.diameter + 1, dm.d)
    mean_attn = attn.mean(axis=(0, 1))
    mass = np.bincount(
        bucket.ravel(), weights=mean_attn.ravel(), minlength=dm.diameter + 2
    )
    return mass / n


def attention_profile(attn: np.ndarray, dm: DistanceMatrix) -> DistanceProfile:
    """Shell-size-corrected attention profile over hops 0..diameter+1.

    Raw pooled mass at distance r is divided by the mean shell size at r
    (mean unreachable count for the last bucket), zeroed where that size is
    zero, then renormalized to sum 1.
    """
    raw = pooled_attention_mass(attn, dm)
    sizes = np.concatenate([mean_shell_sizes(dm), [mean_unreachable_count(dm)]])
    corrected = np.divide(raw, sizes, out=np.zeros_like(raw), where=sizes > 0)
    total = corrected.sum()
    if total <= 0:
        raise ParameterError("attention profile has no mass on any shell")
    return DistanceProfile(corrected / total)


def mean_distance(p: DistanceProfile) -> float:
    return float(np.dot(np.arange(p.mass.size), p.mass))


def wasserstein1(p: DistanceProfile, q: DistanceProfile) -> float:
    """Exact 1-d W1 with hop-count ground metric: sum of |CDF differences|
    after zero-padding both profiles to a common support."""
    size = max(p.mass.size, q.mass.size)
    pm = np.zeros(size)
    qm = np.zeros(size)
    pm[:p.mass.size] = p.mass
    qm[:q.mass.size] = q.mass
    return float(np.abs(np.cumsum(pm) - np.cumsum(qm)).sum())


def classify_regime(gap: float, tol: float = DEFAULT_REGIME_TOL) -> Regime:
    """Positive gap: the model is too local for the task (under-reaching).
    Negative gap: too global (over-globalizing). Within tol: aligned."""
    if tol <= 0:
        raise ParameterError(f"tolerance must be > 0, got {tol}")
    if gap > tol:
        return Regime.UNDER_REACHING
    if gap < -tol:
        return Regime.OVER_GLOBALIZING
    return Regime.ALIGNED


def mismatch_report(
    p_task: DistanceProfile,
    p_attn: DistanceProfile,
    tol: float = DEFAULT_REGIME_TOL,
) -> MismatchReport:
    mu_t = mean_distance(p_task)
    mu_a = mean_distance(p_attn)
    gap = mu_t - mu_a
    return MismatchReport(
        mu_task=mu_t,
        mu_attn=mu_a,
        gap=gap,
        w1=wasserstein1(p_task, p_attn),
        regime=classify_regime(gap, tol),
    )
