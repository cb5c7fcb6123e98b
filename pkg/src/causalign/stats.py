"""Permutation significance testing over the constrained-DTW cost.

Per video: the observed cost is compared against a null distribution from
full random shuffles of the (preprocessed) stimulus series, with the
response fixed. The p-value is two-sided in distance from the null mean,
with +1 added to numerator and denominator so p is never 0. The
permutation effect size is the sign-flipped standardized difference from
the null mean, so positive values indicate costs below chance, i.e. a
positive stimulus-response relationship.

Across videos: Fisher's method aggregates the p-values; the effect sizes
are averaged and given a bootstrap percentile confidence interval. An
effect is significant only if the aggregated p is below 0.05 and the
interval excludes 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaincc

from . import align
from .errors import EmptyInput, InvalidP, LengthMismatch
from .series import DEGENERATE_STD

DEFAULT_N_PERM = 5000
DEFAULT_N_BOOT = 10000
ALPHA = 0.05


@dataclass
class TestResult:
    """Per-video permutation test outcome."""

    video_id: str
    cost: float
    null_mean: float
    null_std: float
    p: float
    pes: float
    n_perm: int
    seed: int
    degenerate_null: bool = False


@dataclass
class AggregateResult:
    """Cross-video aggregation for one report cell."""

    action: str
    time_role: str  # "from" | "to" | "n/a"
    modality: str  # "T" | "V" | "T+V"
    condition: str  # "Binary" | "VisCom"
    fisher_p: float
    mean_pes: float
    ci: tuple[float, float]
    significant: bool
    per_video: list[TestResult] = field(default_factory=list)


def permutation_p_value(cost: float, null_costs: np.ndarray) -> float:
    """Two-sided p: share of null costs at least as far from the null mean.

    p = (#{|null - mean| >= |cost - mean|} + 1) / (n + 1), bounded below by
    1/(n + 1) and above by 1.
    """
    null_costs = np.asarray(null_costs, dtype=np.float64)
    if len(null_costs) == 0:
        raise EmptyInput("null distribution is empty")
    mu = float(np.mean(null_costs))
    count = int(np.count_nonzero(np.abs(null_costs - mu) >= abs(cost - mu)))
    return (count + 1) / (len(null_costs) + 1)


def permutation_effect_size(
    cost: float, null_costs: np.ndarray
) -> tuple[float, bool]:
    """Standardized, sign-flipped distance of the cost from the null mean.

    Returns (pes, degenerate). A null with (near-)zero spread cannot be
    standardized; pes is 0 and the degenerate flag is set.
    """
    null_costs = np.asarray(null_costs, dtype=np.float64)
    if len(null_costs) == 0:
        raise EmptyInput("null distribution is empty")
    mu = float(np.mean(null_costs))
    sigma = float(np.std(null_costs))
    if sigma < DEGENERATE_STD:
        return 0.0, True
    return -(cost - mu) / sigma, False


def permutation_test(
    viscom,
    userint,
    n_perm: int = DEFAULT_N_PERM,
    window: int = align.DEFAULT_WINDOW,
    rng_seed: int = 0,
    video_id: str | None = None,
) -> TestResult:
    """Test the alignment of a stimulus series against a response series.

    Both inputs are equal-length preprocessed series (BinSeries or plain
    vectors). The stimulus is shuffled n_perm times; identical seeds give
    bit-identical results.
    """
    s1 = np.asarray(getattr(viscom, "values", viscom), dtype=np.float64)
    s2 = np.asarray(getattr(userint, "values", userint), dtype=np.float64)
    if len(s1) != len(s2):
        raise LengthMismatch(f"series lengths differ: {len(s1)} vs {len(s2)}")
    if n_perm < 1:
        raise ValueError("n_perm must be >= 1")
    if video_id is None:
        video_id = getattr(viscom, "video_id", "") or ""

    observed = align.constrained_dtw(s1, s2, window).total_cost
    rng = np.random.default_rng(int(rng_seed))
    permuted = rng.permuted(np.broadcast_to(s1, (n_perm, len(s1))), axis=1)
    null = align.null_costs(permuted, s2, window)

    p = permutation_p_value(observed, null)
    pes, degenerate = permutation_effect_size(observed, null)
    return TestResult(
        video_id=video_id,
        cost=observed,
        null_mean=float(np.mean(null)),
        null_std=float(np.std(null)),
        p=p,
        pes=pes,
        n_perm=n_perm,
        seed=int(rng_seed),
        degenerate_null=degenerate,
    )


def fisher_aggregate(p_values) -> float:
    """Combine per-video p-values via Fisher's method.

    X = -2 sum(ln p) compared against chi-square with 2k degrees of
    freedom; the survival function is the regularized upper incomplete
    gamma function Q(k, X/2). Identity for a single p-value.
    """
    ps = list(p_values)
    if not ps:
        raise EmptyInput("no p-values to aggregate")
    for p in ps:
        if not (0.0 < p <= 1.0):
            raise InvalidP(f"p-value {p} outside (0, 1]")
    x = -2.0 * sum(math.log(p) for p in ps)
    return float(gammaincc(len(ps), x / 2.0))


def bootstrap_ci(
    pes_values,
    level: float = 0.95,
    n_boot: int = DEFAULT_N_BOOT,
    rng_seed: int = 0,
) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean of the effect sizes."""
    values = np.asarray(list(pes_values), dtype=np.float64)
    if len(values) == 0:
        raise EmptyInput("no effect sizes to bootstrap")
    if n_boot < 1:
        raise ValueError("n_boot must be >= 1")
    rng = np.random.default_rng(int(rng_seed))
    idx = rng.integers(0, len(values), size=(n_boot, len(values)))
    means = values[idx].mean(axis=1)
    tail = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(means, [tail, 100.0 - tail])
    return float(lo), float(hi)


def aggregate(
    per_video: list[TestResult],
    *,
    n_boot: int = DEFAULT_N_BOOT,
    level: float = 0.95,
    rng_seed: int = 0,
    action: str = "",
    time_role: str = "n/a",
    modality: str = "",
    condition: str = "",
) -> AggregateResult:
    """Fold per-video results into one cell verdict (joint rule)."""
    if not per_video:
        raise EmptyInput("no per-video results to aggregate")
    fisher_p = fisher_aggregate([r.p for r in per_video])
    pes_values = [r.pes for r in per_video]
    mean_pes = float(np.mean(pes_values))
    lo, hi = bootstrap_ci(pes_values, level=level, n_boot=n_boot, rng_seed=rng_seed)
    significant = fisher_p < ALPHA and not (lo <= 0.0 <= hi)
    return AggregateResult(
        action=action,
        time_role=time_role,
        modality=modality,
        condition=condition,
        fisher_p=fisher_p,
        mean_pes=mean_pes,
        ci=(lo, hi),
        significant=significant,
        per_video=list(per_video),
    )
