"""Paired statistics: Student-t test, Bonferroni, Cohen's d, bootstrap intervals."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


def _betacf(a: float, b: float, x: float, max_iter: int = 300, eps: float = 1e-15) -> float:
    # modified Lentz continued fraction for the incomplete beta function
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not (a > 0 and b > 0):
        raise ValueError("betainc needs a, b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, dof: float) -> float:
    """P(|T| >= |t|) for Student's t with ``dof`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return betainc(dof / 2.0, 0.5, dof / (dof + t * t))


def t_cdf(t: float, dof: float) -> float:
    tail = 0.5 * t_sf_two_sided(t, dof)
    return 1.0 - tail if t >= 0 else tail


def t_ppf(q: float, dof: float) -> float:
    """Quantile of Student's t by bisection on the CDF."""
    if not 0 < q < 1:
        raise ValueError("quantile must lie in (0, 1)")
    lo, hi = -1e3, 1e3
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_cdf(mid, dof) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class TTest:
    t: float
    p: float
    dof: int
    flag: Optional[str] = None


def paired_t_test(diffs: Sequence[float]) -> TTest:
    """Two-sided one-sample t-test of paired differences against zero.

    Zero variance has no t statistic: p is 1 when the mean is 0, else 0,
    and the result carries the flag ``zero_variance``.
    """
    d = np.asarray(diffs, dtype=float)
    n = d.size
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0 or sd <= 1e-15 * max(1.0, abs(mean)):
        if mean == 0.0:
            return TTest(0.0, 1.0, n - 1, "zero_variance")
        return TTest(math.copysign(math.inf, mean), 0.0, n - 1, "zero_variance")
    t = mean / (sd / math.sqrt(n))
    return TTest(t, t_sf_two_sided(t, n - 1), n - 1)


def cohens_d(diffs: Sequence[float]) -> Optional[float]:
    """Paired effect size mean/sd; ``None`` when the differences have no spread."""
    d = np.asarray(diffs, dtype=float)
    if d.size < 2:
        return None
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        return None
    return float(d.mean()) / sd


def bonferroni(p: float, m: int) -> float:
    return min(1.0, p * m)


def bootstrap_ci(values: Sequence[float], stat: Callable = np.mean, resamples: int = 10000,
                 seed=0, level: float = 0.95) -> tuple:
    """Percentile bootstrap interval, deterministic per seed (Philox stream)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return (math.nan, math.nan)
    rng = np.random.Generator(np.random.Philox(seed))
    idx = rng.integers(0, v.size, size=(resamples, v.size))
    samples = np.asarray(stat(v[idx], axis=1), dtype=float)
    tail = 100.0 * (1.0 - level) / 2.0
    low, high = np.percentile(samples, [tail, 100.0 - tail])
    return float(low), float(high)


@dataclass
class StatResult:
    arm_a: str
    arm_b: str
    metric: str
    n: int
    mean_a: float
    mean_b: float
    mean_diff: float            # a - b
    t_statistic: Optional[float]
    p_value: float
    p_bonferroni: float
    cohens_d: Optional[float]
    ci95: tuple
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ci95"] = list(self.ci95)
        if out["t_statistic"] is not None and math.isinf(out["t_statistic"]):
            out["t_statistic"] = None
        return out


def compare(a: Sequence[float], b: Sequence[float], arm_a: str, arm_b: str, metric: str,
            m: int = 1, resamples: int = 10000, seed=0) -> StatResult:
    """Paired comparison of two aligned samples (already restricted to common instances)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("paired samples must align")
    diffs = a - b
    flags = []
    if diffs.size < 2:
        return StatResult(arm_a, arm_b, metric, int(diffs.size), _mean(a), _mean(b), _mean(diffs),
                          None, 1.0, 1.0, None, (math.nan, math.nan), ["too_few_pairs"])
    tt = paired_t_test(diffs)
    if tt.flag:
        flags.append(tt.flag)
    d = cohens_d(diffs)
    if d is None:
        flags.append("effect_size_undefined")
    low, high = bootstrap_ci(diffs, resamples=resamples, seed=seed)
    return StatResult(arm_a, arm_b, metric, int(diffs.size), float(a.mean()), float(b.mean()),
                      float(diffs.mean()), tt.t, tt.p, bonferroni(tt.p, m), d, (low, high), flags)


def _mean(x) -> float:
    return float(np.mean(x)) if len(x) else math.nan
