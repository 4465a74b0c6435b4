"""Verification of finite-sample Lipschitz bounds and estimator-law bounds.

Two statements are checked. The deterministic one compares the change of
a plug-in estimate under a paired perturbation of its samples with the
certificate's weighted pairing cost. The Monte-Carlo one compares the
Kantorovich distance between the laws of the plug-in estimator under two
input laws with the certificate constant times their Fortet-Mourier
distance.

All randomness is drawn from per-trial or per-replication streams, so
results do not depend on the number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .distributions import Distribution, EmpiricalDistribution, as_distribution, empirical_from
from .errors import DomainError
from .metrics import fortet_mourier, kantorovich
from .numerics import RngStream, sorted_pairing_cost
from .risk import (
    CONDITION_XI_MIN_GE_ZERO,
    CONDITION_XI_MIN_LE_NEG_ONE,
    LipschitzCertificate,
    RiskFunctionalSpec,
    certificate,
    evaluate,
)

SLACK = 1e-9
DEFAULT_P_GRID = (1.0, 1.25, 1.5, 2.0, 3.0)
BOOTSTRAP_RESAMPLES = 200
VALUE_RANGE = (-10.0, 10.0)
MAX_PAIR_SIZE = 100


def _map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """``[fn(x) for x in items]``, optionally on a thread pool; order preserved."""
    if workers is None or workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# paired check


@dataclass(frozen=True)
class PairedSampleCheck:
    spec: RiskFunctionalSpec
    cert: LipschitzCertificate
    lhs: float
    rhs: float
    holds: bool
    condition_met: bool

    def to_row(self) -> dict:
        return {
            "spec": self.spec.label,
            "L": self.cert.L,
            "p": self.cert.p,
            "condition": self.cert.condition,
            "condition_met": self.condition_met,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "holds": self.holds,
        }


def paired_lipschitz_check(
    spec: RiskFunctionalSpec,
    samples,
    perturbed,
    cert: Optional[LipschitzCertificate] = None,
    tol: float = 1e-12,
) -> PairedSampleCheck:
    """Compare ``|rho(P_N) - rho(Q_N)|`` with ``L`` times the sorted pairing cost.

    The sorted pairing is the cheapest pairing of the two samples, so it
    is the tightest instance of the bound.
    """
    a = np.asarray(samples, dtype=float).ravel()
    b = np.asarray(perturbed, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"sample vectors differ in length: {a.size} vs {b.size}")
    cert = certificate(spec) if cert is None else cert
    lhs = abs(evaluate(spec, empirical_from(a), tol) - evaluate(spec, empirical_from(b), tol))
    rhs = cert.L * sorted_pairing_cost(a, b, cert.p)
    return PairedSampleCheck(spec, cert, lhs, rhs, lhs <= rhs + SLACK, cert.condition_met(a, b))


# ---------------------------------------------------------------------------
# random pairs


def random_pair(gen: np.random.Generator, condition: Optional[str] = None, value_range=VALUE_RANGE, max_n: int = MAX_PAIR_SIZE):
    """Draw a sample vector and a perturbation of it.

    The size is uniform on ``1..max_n``. Values live in a random box inside
    ``value_range`` whose width spans two decades, so both small- and
    large-scale samples occur. The perturbation is one of: an independent
    redraw, Gaussian noise on a random subset, or a common shift, clipped
    to the box. The box is placed so that the certificate condition holds.
    """
    vmin, vmax = value_range
    if condition == CONDITION_XI_MIN_GE_ZERO:
        vmin = max(vmin, 0.0)
    n = int(gen.integers(1, max_n + 1))
    width = (vmax - vmin) * 10.0 ** gen.uniform(-2.0, 0.0)
    lo = gen.uniform(vmin, vmax - width)
    if condition == CONDITION_XI_MIN_LE_NEG_ONE:
        lo = min(lo, gen.uniform(vmin, -1.0))
        width = min(width, vmax - lo)
    hi = lo + width
    x = gen.uniform(lo, hi, n)
    mode = int(gen.integers(0, 3))
    if mode == 0:
        y = gen.uniform(lo, hi, n)
    else:
        sigma = width * 10.0 ** gen.uniform(-3.0, 0.0)
        if mode == 1:
            mask = gen.random(n) < gen.uniform(0.0, 1.0)
            mask[int(gen.integers(0, n))] = True
            y = np.where(mask, x + gen.normal(0.0, sigma, n), x)
        else:
            y = x + gen.uniform(-sigma, sigma)
        y = np.clip(y, lo, hi)
    if condition == CONDITION_XI_MIN_LE_NEG_ONE and min(x.min(), y.min()) > -1.0:
        # pin one point at the lower edge of the box, which lies below -1
        x[int(gen.integers(0, n))] = lo
    return x, y


def _trial_pair(seed: int, trial: int, condition: Optional[str]):
    return random_pair(RngStream(seed, trial).generator, condition)


# ---------------------------------------------------------------------------
# Lipschitz suite and iqr scan


@dataclass(frozen=True)
class LipschitzSuiteReport:
    spec: RiskFunctionalSpec
    cert: LipschitzCertificate
    trials: int
    seed: int
    applicable: int
    violations: int
    max_ratio: float
    worst_samples: tuple = field(default=(), repr=False)
    worst_perturbed: tuple = field(default=(), repr=False)

    @property
    def holds(self) -> bool:
        return self.violations == 0

    def to_row(self) -> dict:
        return {
            "spec": self.spec.label,
            "L": self.cert.L,
            "p": self.cert.p,
            "condition": self.cert.condition,
            "trials": self.trials,
            "seed": self.seed,
            "applicable": self.applicable,
            "violations": self.violations,
            "max_ratio": self.max_ratio,
            "holds": self.holds,
        }


def _lhs(spec, x, y, tol=1e-12):
    return abs(evaluate(spec, empirical_from(x), tol) - evaluate(spec, empirical_from(y), tol))


def lipschitz_suite(spec: RiskFunctionalSpec, trials: int, seed: int, workers: int = 1) -> LipschitzSuiteReport:
    """Paired check of the certificate on ``trials`` seeded random pairs.

    Pairs violating the certificate's sample-sign condition are redrawn
    from the generator with the condition built in, so every trial is
    applicable; the count is still reported. ``max_ratio`` is the largest
    ``lhs / rhs`` observed.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    cert = certificate(spec)

    def one(t):
        x, y = _trial_pair(seed, t, cert.condition)
        check = paired_lipschitz_check(spec, x, y, cert)
        return check, x, y

    results = _map(one, range(trials), workers)
    applicable = violations = 0
    max_ratio = 0.0
    worst = ((), ())
    for check, x, y in results:
        if not check.condition_met:
            continue
        applicable += 1
        violations += not check.holds
        ratio = check.lhs / check.rhs if check.rhs > 0 else (0.0 if check.lhs <= SLACK else math.inf)
        if ratio > max_ratio:
            max_ratio, worst = ratio, (tuple(x.tolist()), tuple(y.tolist()))
    return LipschitzSuiteReport(spec, cert, trials, seed, applicable, violations, max_ratio, *worst)


@dataclass(frozen=True)
class IqrScan:
    """Empirical evidence for the index of quantitative robustness.

    ``reported_iqr`` is ``1 / p`` for the smallest scanned ``p`` without
    violations (``nan`` if every order was violated). Finitely many trials
    cannot certify the infimum over ``p``.
    """

    spec: RiskFunctionalSpec
    cert: LipschitzCertificate
    p_grid: tuple
    violation_fraction: tuple
    reported_iqr: float
    trials: int
    seed: int

    def __post_init__(self):
        if any(p < 1 for p in self.p_grid) or list(self.p_grid) != sorted(self.p_grid):
            raise ValueError("p_grid must be ascending with all entries >= 1")

    def to_rows(self) -> list[dict]:
        return [
            {
                "spec": self.spec.label,
                "L": self.cert.L,
                "certificate_p": self.cert.p,
                "certificate_iqr": self.cert.iqr,
                "trials": self.trials,
                "seed": self.seed,
                "p": p,
                "violation_fraction": v,
                "reported_iqr": self.reported_iqr,
            }
            for p, v in zip(self.p_grid, self.violation_fraction)
        ]


def iqr_scan(
    spec: RiskFunctionalSpec,
    trial_count: int,
    p_grid: Sequence[float] = DEFAULT_P_GRID,
    seed: int = 0,
    workers: int = 1,
) -> IqrScan:
    """Violation fraction of the paired bound with the certificate's ``L``
    and each scanned order ``p``."""
    if trial_count < 1:
        raise ValueError("trial_count must be >= 1")
    grid = tuple(float(p) for p in p_grid)
    if not grid or any(p < 1 for p in grid) or list(grid) != sorted(grid):
        raise ValueError("p_grid must be non-empty, ascending, with all entries >= 1")
    cert = certificate(spec)

    def one(t):
        x, y = _trial_pair(seed, t, cert.condition)
        if not cert.condition_met(x, y):
            return None
        lhs = _lhs(spec, x, y)
        return [lhs > cert.L * sorted_pairing_cost(x, y, p) + SLACK for p in grid]

    results = [r for r in _map(one, range(trial_count), workers) if r is not None]
    counts = np.sum(np.array(results, dtype=bool).reshape(-1, len(grid)), axis=0)
    fractions = tuple(float(c) / len(results) if results else math.nan for c in counts)
    clean = [p for p, f in zip(grid, fractions) if f == 0.0]
    reported = 1.0 / clean[0] if clean else math.nan
    return IqrScan(spec, cert, grid, fractions, reported, trial_count, seed)


# ---------------------------------------------------------------------------
# estimator laws


def _replicate(spec, dist: Distribution, N: int, seed: int, i: int, tol: float):
    xs = dist.sample(N, RngStream(seed, i))
    return evaluate(spec, empirical_from(xs), tol), xs


def _check_admissible(spec, dist, order):
    if not dist.has_finite_moment(order):
        raise DomainError(f"{spec.label} needs a finite moment of order {order:g}; law declares {dist.finite_moment_order:g}")


def estimator_values(spec, dist, N: int, M: int, seed: int, tol: float = 1e-12, workers: int = 1) -> np.ndarray:
    """Plug-in estimates from ``M`` replications; replication ``i`` uses stream ``i``."""
    if N < 1 or M < 1:
        raise ValueError("N and M must be >= 1")
    dist = as_distribution(dist)
    _check_admissible(spec, dist, spec.moment_order)
    out = _map(lambda i: _replicate(spec, dist, N, seed, i, tol)[0], range(M), workers)
    return np.array(out, dtype=float)


def estimator_law(spec, dist, N: int, M: int, seed: int, tol: float = 1e-12, workers: int = 1) -> EmpiricalDistribution:
    """Empirical law of ``M`` independent plug-in estimates from ``N`` draws each."""
    return empirical_from(estimator_values(spec, dist, N, M, seed, tol, workers))


@dataclass(frozen=True)
class EstimatorLawReport:
    spec: RiskFunctionalSpec
    cert: LipschitzCertificate
    N: int
    M: int
    seed: int
    d_input: float
    d_input_exactness: str
    d_input_tol: Optional[float]
    d_estimator_laws: float
    bound: float
    gap_ratio: float
    mc_halfwidth: float
    condition_met: bool

    @property
    def holds(self) -> bool:
        """Observed distance within the bound plus Monte-Carlo slack."""
        return self.d_estimator_laws <= self.bound + self.mc_halfwidth + SLACK

    def to_row(self) -> dict:
        return {
            "spec": self.spec.label,
            "L": self.cert.L,
            "p": self.cert.p,
            "N": self.N,
            "M": self.M,
            "seed": self.seed,
            "d_input": self.d_input,
            "d_input_exactness": self.d_input_exactness,
            "d_input_tol": self.d_input_tol,
            "d_estimator_laws": self.d_estimator_laws,
            "bound": self.bound,
            "gap_ratio": self.gap_ratio,
            "mc_halfwidth": self.mc_halfwidth,
            "condition_met": self.condition_met,
            "holds": self.holds,
        }


def _sorted_l1(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean(np.abs(np.sort(a) - np.sort(b))))


def bootstrap_halfwidth(vp: np.ndarray, vq: np.ndarray, seed: int, stream_id: int, resamples: int = BOOTSTRAP_RESAMPLES) -> float:
    """Half the central 95% range of the distance over paired bootstrap resamples.

    Replications are resampled jointly so the common-random-number pairing
    is kept.
    """
    gen = RngStream(seed, stream_id).generator
    m = vp.size
    stats = np.empty(resamples)
    for r in range(resamples):
        idx = gen.integers(0, m, m)
        stats[r] = _sorted_l1(vp[idx], vq[idx])
    lo, hi = np.quantile(stats, [0.025, 0.975])
    return float(0.5 * (hi - lo))


def robustness_gap(
    spec: RiskFunctionalSpec,
    P,
    Q,
    N: int,
    M: int,
    seed: int,
    tol: float = 1e-10,
    workers: int = 1,
) -> EstimatorLawReport:
    """Monte-Carlo check of ``d_K(law of rho_N under P, under Q) <= L d_FM,p(P, Q)``.

    Both estimator laws use the same replication streams (common random
    numbers), so ``P == Q`` gives identical replication vectors.
    """
    if N < 1 or M < 1:
        raise ValueError("N and M must be >= 1")
    P, Q = as_distribution(P), as_distribution(Q)
    cert = certificate(spec)
    order = max(cert.p, spec.moment_order)
    _check_admissible(spec, P, order)
    _check_admissible(spec, Q, order)

    d_in = fortet_mourier(P, Q, cert.p, tol)

    def both(i):
        vp, xp = _replicate(spec, P, N, seed, i, min(tol, 1e-12))
        vq, xq = _replicate(spec, Q, N, seed, i, min(tol, 1e-12))
        return vp, vq, cert.condition_met(xp, xq)

    res = _map(both, range(M), workers)
    vp = np.array([r[0] for r in res])
    vq = np.array([r[1] for r in res])
    condition_met = all(r[2] for r in res)

    d_est = kantorovich(empirical_from(vp), empirical_from(vq)).value
    bound = cert.L * d_in.value
    if bound > 0:
        ratio = d_est / bound
    else:
        ratio = 0.0 if d_est == 0.0 else math.inf
    half = bootstrap_halfwidth(vp, vq, seed, M)
    return EstimatorLawReport(
        spec, cert, N, M, seed, d_in.value, d_in.exactness, d_in.tol, d_est, bound, ratio, half, condition_met
    )
