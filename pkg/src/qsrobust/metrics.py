"""Probability metrics between laws on the real line.

Step-function pairs (empirical laws, point masses and their mixtures)
are handled in closed form. Other pairs go through quadrature of the
CDF-difference representation, or through a branch-and-bound over CDF
brackets for the supremum metrics, and report how exact the value is.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate as _sp_integrate

from .distributions import (
    Distribution,
    EmpiricalDistribution,
    GaugeFunction,
    as_distribution,
    moment,
)
from .numerics import coupling_feasible, integrate

TRUNCATION_LEVEL = 1e-8
PROKHOROV_EXACT_MAX_N = 1000


@dataclass(frozen=True)
class MetricValue:
    """A distance with its provenance.

    ``exactness`` is ``"exact"``, ``"quadrature"`` (``tol`` bounds the
    error) or ``"bracket"`` (the true value lies in ``[lo, hi]``;
    ``value`` is the midpoint). ``value`` may be ``inf`` for pairs outside
    the metric's admissible laws.
    """

    value: float
    exactness: str = "exact"
    tol: Optional[float] = None
    lo: Optional[float] = None
    hi: Optional[float] = None

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError(f"metric value must be non-negative, got {self.value}")
        if self.exactness == "bracket" and not self.lo <= self.hi:
            raise ValueError("bracket needs lo <= hi")

    def __float__(self):
        return float(self.value)

    @classmethod
    def bracket(cls, lo, hi):
        lo, hi = max(float(lo), 0.0), max(float(hi), 0.0)
        return cls(0.5 * (lo + hi), "bracket", lo=lo, hi=hi)

    def to_dict(self) -> dict:
        d = {"value": self.value, "exactness": self.exactness}
        if self.tol is not None:
            d["tol"] = self.tol
        if self.exactness == "bracket":
            d["lo"], d["hi"] = self.lo, self.hi
        return d


INF = MetricValue(math.inf)
ZERO = MetricValue(0.0)


# ---------------------------------------------------------------------------
# Fortet-Mourier / Kantorovich


def fm_weight(x, p: float):
    """``max(1, |x|^(p-1))``."""
    return np.maximum(1.0, np.abs(x) ** (p - 1.0))


def fm_antiderivative(x, p: float):
    """Odd antiderivative ``W`` of ``max(1, |x|^(p-1))`` with ``W(0) = 0``."""
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    outer = np.sign(x) * (1.0 + (a**p - 1.0) / p)
    return np.where(a <= 1.0, x, outer)


def _same_law(P, Q) -> bool:
    return P is Q or (type(P) is type(Q) and P.to_dict() == Q.to_dict())


def _step_pair(P, Q):
    return P.is_step and Q.is_step


def _merged_atoms(P, Q):
    return np.union1d(P.atoms()[0], Q.atoms()[0])


def _fm_sorted(P: EmpiricalDistribution, Q: EmpiricalDistribution, p):
    # W is increasing, so FM_p is the Kantorovich distance of the W-images
    return float(np.mean(np.abs(fm_antiderivative(P.samples, p) - fm_antiderivative(Q.samples, p))))


def _fm_step(P, Q, p):
    xs = _merged_atoms(P, Q)
    if xs.size < 2:
        return 0.0
    gap = np.abs(np.asarray(P.cdf(xs[:-1])) - np.asarray(Q.cdf(xs[:-1])))
    w = fm_antiderivative(xs, p)
    return float(np.sum(gap * np.diff(w)))


def _window(P, Q):
    """Integration window and which sides were truncated."""
    lows, highs = [], []
    cut_lo = cut_hi = False
    for D in (P, Q):
        s_lo, s_hi = D.support()
        if math.isinf(s_lo):
            s_lo, cut_lo = float(D.quantile(TRUNCATION_LEVEL)), True
        if math.isinf(s_hi):
            s_hi, cut_hi = float(D.quantile(1.0 - TRUNCATION_LEVEL)), True
        lows.append(s_lo)
        highs.append(s_hi)
    lo, hi = min(lows), max(highs)
    if cut_lo:
        lo = min(lo, -1.0)
    if cut_hi:
        hi = max(hi, 1.0)
    return lo, hi, cut_lo, cut_hi


def _tail_power_integral(mass, a, p, tol):
    # int_a^inf x^(p-1) mass(x) dx for a > 0, after x = a e^t so that power
    # tails decay exponentially in t; evaluated in logs to avoid overflow
    log_a = math.log(a)

    def f(t):
        m = float(mass(a * math.exp(t))) if t < 700.0 else 0.0
        return math.exp(p * (log_a + t) + math.log(m)) if m > 0.0 else 0.0

    val, _ = _sp_integrate.quad(f, 0.0, math.inf, epsabs=tol, epsrel=1e-10, limit=400)
    return float(val)


def _fm_tail_bound(P, Q, p, lo, hi, cut_lo, cut_hi, tol):
    # beyond |a| >= 1 the weight is |x|^(p-1), and |F_P - F_Q| is dominated
    # by the sum of the two laws' tail masses
    total = 0.0
    for D in (P, Q):
        if cut_lo:
            total += _tail_power_integral(lambda x: D.cdf(-x), -lo, p, tol)
        if cut_hi:
            total += _tail_power_integral(D.sf, hi, p, tol)
    return total


def _fm_quadrature(P, Q, p, tol):
    lo, hi, cut_lo, cut_hi = _window(P, Q)
    bps = np.concatenate([P.breakpoints(), Q.breakpoints(), [-1.0, 0.0, 1.0]])

    def gap(x):
        return np.abs(np.asarray(P.cdf(x)) - np.asarray(Q.cdf(x))) * fm_weight(x, p)

    value = integrate(gap, (lo, hi), abs_tol=tol, breakpoints=bps, vectorized=True)
    tail = _fm_tail_bound(P, Q, p, lo, hi, cut_lo, cut_hi, tol)
    return MetricValue(max(value, 0.0), "quadrature", tol=tol + tail)


def fortet_mourier(P, Q, p: float = 1.0, tol: float = 1e-10, method: str = "auto") -> MetricValue:
    """``FM_p(P, Q) = integral of max(1, |x|^(p-1)) |F_P(x) - F_Q(x)| dx``.

    ``method`` is ``"auto"``, ``"exact"`` (step pairs only) or
    ``"quadrature"``. Laws without a finite ``p``-th moment give ``inf``.
    """
    if p < 1:
        raise ValueError(f"Fortet-Mourier order must be >= 1, got {p}")
    if method not in ("auto", "exact", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    P, Q = as_distribution(P), as_distribution(Q)
    if not (P.has_finite_moment(p) and Q.has_finite_moment(p)):
        return INF
    if _same_law(P, Q):
        return ZERO
    if method == "quadrature":
        return _fm_quadrature(P, Q, p, tol)
    if _step_pair(P, Q):
        if isinstance(P, EmpiricalDistribution) and isinstance(Q, EmpiricalDistribution) and P.n == Q.n:
            return MetricValue(_fm_sorted(P, Q, p))
        return MetricValue(_fm_step(P, Q, p))
    if method == "exact":
        raise ValueError("closed form requires two step-function laws")
    return _fm_quadrature(P, Q, p, tol)


def kantorovich(P, Q, tol: float = 1e-10, method: str = "auto") -> MetricValue:
    """First-order transport distance ``integral of |F_P - F_Q|``."""
    return fortet_mourier(P, Q, 1.0, tol, method)


# ---------------------------------------------------------------------------
# Kolmogorov and weighted Kolmogorov


def _probe_grid(P, Q):
    u = np.concatenate([np.geomspace(1e-12, 1e-3, 40), np.linspace(0.0, 1.0, 1025)[1:-1]])
    u = np.concatenate([u, 1.0 - u])
    pts = [P.breakpoints(), Q.breakpoints(), [-1.0, 0.0, 1.0]]
    for D in (P, Q):
        pts.append(np.asarray(D.quantile(u), dtype=float))
        pts.append([s for s in D.support() if math.isfinite(s)])
    grid = np.unique(np.concatenate([np.asarray(x, dtype=float) for x in pts]))
    return grid[np.isfinite(grid)]


def _tail_sup_phi(phi: Optional[GaugeFunction], side: str, x0: float):
    if phi is None:
        return 1.0
    if phi.kind == "table":
        end = phi.values[0] if side == "left" else phi.values[-1]
        return max(end, float(phi(x0)))
    if phi.kind == "max_one_pow" and phi.p == 0:
        return 1.0
    return None


def _sup_gap(P, Q, phi: Optional[GaugeFunction], tol: float, max_splits: int = 200_000):
    """Bracket ``[lo, hi]`` on ``sup_x |F_P(x) - F_Q(x)| phi(x)``."""
    weight = (lambda x: np.ones_like(np.asarray(x, dtype=float))) if phi is None else phi

    if _step_pair(P, Q):
        xs = _merged_atoms(P, Q)
        gap = np.abs(np.asarray(P.cdf(xs)) - np.asarray(Q.cdf(xs)))
        if xs.size < 2:
            return 0.0, 0.0
        # gap is constant on [x_k, x_k+1); a u-shaped weight peaks at an end
        seg = gap[:-1] * np.maximum(weight(xs[:-1]), weight(xs[1:]))
        v = float(seg.max())
        return v, v

    grid = _probe_grid(P, Q)
    fp, fq = np.asarray(P.cdf(grid)), np.asarray(Q.cdf(grid))
    fpl, fql = np.asarray(P.cdf_left(grid)), np.asarray(Q.cdf_left(grid))
    wg = np.asarray(weight(grid), dtype=float)
    lo = float(np.max(np.maximum(np.abs(fp - fq), np.abs(fpl - fql)) * wg))

    def interval_ub(fpa, fqa, fplb, fqlb, wa, wb):
        return max(fplb - fqa, fqlb - fpa, 0.0) * max(wa, wb)

    heap = []
    for k in range(grid.size - 1):
        ub = interval_ub(fp[k], fq[k], fpl[k + 1], fql[k + 1], wg[k], wg[k + 1])
        if ub > lo + tol:
            heap.append((-ub, float(grid[k]), float(grid[k + 1]), fp[k], fq[k], fpl[k + 1], fql[k + 1], wg[k], wg[k + 1]))
    heapq.heapify(heap)
    stuck = 0.0
    splits = 0
    while heap and -heap[0][0] > lo + tol and splits < max_splits:
        neg_ub, a, b, fpa, fqa, fplb, fqlb, wa, wb = heapq.heappop(heap)
        m = 0.5 * (a + b)
        if not a < m < b:
            stuck = max(stuck, -neg_ub)
            continue
        splits += 1
        fpm, fqm = float(P.cdf(m)), float(Q.cdf(m))
        fplm, fqlm = float(P.cdf_left(m)), float(Q.cdf_left(m))
        wm = float(weight(m))
        lo = max(lo, abs(fpm - fqm) * wm, abs(fplm - fqlm) * wm)
        for child in (
            (interval_ub(fpa, fqa, fplm, fqlm, wa, wm), a, m, fpa, fqa, fplm, fqlm, wa, wm),
            (interval_ub(fpm, fqm, fplb, fqlb, wm, wb), m, b, fpm, fqm, fplb, fqlb, wm, wb),
        ):
            if child[0] > lo + tol:
                heapq.heappush(heap, (-child[0], *child[1:]))
    hi = max(lo, stuck, -heap[0][0] if heap else 0.0)

    x0, x1 = float(grid[0]), float(grid[-1])
    left_phi, right_phi = _tail_sup_phi(phi, "left", x0), _tail_sup_phi(phi, "right", x1)
    if left_phi is not None:
        hi = max(hi, max(fpl[0], fql[0]) * left_phi)
    else:
        # F(x)|x|^q <= E[|X|^q; X <= x0] for x <= x0 <= -1
        q = phi.growth_order
        hi = max(hi, sum(D.expect(lambda x: np.abs(x) ** q, 1e-12, hi=x0) for D in (P, Q)))
    if right_phi is not None:
        hi = max(hi, max(1.0 - fp[-1], 1.0 - fq[-1]) * right_phi)
    else:
        q = phi.growth_order
        hi = max(hi, sum(D.expect(lambda x: np.abs(x) ** q, 1e-12, lo=x1) for D in (P, Q)))
    return lo, hi


def kolmogorov(P, Q, tol: float = 1e-9) -> MetricValue:
    """``sup_x |F_P(x) - F_Q(x)|``; exact for step pairs, a certified bracket otherwise."""
    P, Q = as_distribution(P), as_distribution(Q)
    if _same_law(P, Q):
        return ZERO
    lo, hi = _sup_gap(P, Q, None, tol)
    if _step_pair(P, Q):
        return MetricValue(lo)
    return MetricValue.bracket(lo, hi)


def weighted_kolmogorov(P, Q, phi: GaugeFunction, tol: float = 1e-9) -> MetricValue:
    """``sup_x |F_P(x) - F_Q(x)| phi(x)`` for a u-shaped weight ``phi``.

    Suprema over half-open constancy intervals are limits and may be
    unattained. Returns ``inf`` when the weight outgrows either law's tail.
    """
    if not phi.is_u_shaped():
        raise ValueError(f"weighted Kolmogorov needs a u-shaped gauge, got {phi}")
    P, Q = as_distribution(P), as_distribution(Q)
    if _same_law(P, Q):
        return ZERO
    q = phi.growth_order
    if q > 0 and q > min(P.finite_moment_order, Q.finite_moment_order):
        return INF
    lo, hi = _sup_gap(P, Q, phi, tol)
    if _step_pair(P, Q):
        return MetricValue(lo)
    return MetricValue.bracket(lo, hi)


# ---------------------------------------------------------------------------
# Levy


def _levy_feasible(P, Q, eps, pts):
    # F_P(x) <= F_Q(x+eps)+eps and F_Q(y)-eps <= F_P(y+eps); each side is
    # tightest where the unshifted CDF jumps, so no point is shifted twice
    shifted = pts + eps
    fp, fq = np.asarray(P.cdf(pts)), np.asarray(Q.cdf(pts))
    return bool(np.all(fp <= np.asarray(Q.cdf(shifted)) + eps) and np.all(fq - eps <= np.asarray(P.cdf(shifted))))


def _cdf_levels(D, xs):
    return np.unique(np.concatenate([[0.0, 1.0], np.asarray(D.cdf(xs))]))


def levy(P, Q, tol: float = 1e-9) -> MetricValue:
    """Levy distance ``inf{eps : F_Q(x-eps)-eps <= F_P(x) <= F_Q(x+eps)+eps}``.

    For step pairs the infimum is one of finitely many candidates (atom
    gaps and CDF-level gaps), found exactly by binary search. Other pairs
    are checked on a dense probe grid and bisected to ``tol``.
    """
    P, Q = as_distribution(P), as_distribution(Q)
    if _same_law(P, Q):
        return ZERO
    if _step_pair(P, Q):
        a, b = P.atoms()[0], Q.atoms()[0]
        pts = np.union1d(a, b)
        if _levy_feasible(P, Q, 0.0, pts):
            return ZERO
        la, lb = _cdf_levels(P, pts), _cdf_levels(Q, pts)
        cand = np.concatenate([np.abs(a[:, None] - b[None, :]).ravel(), np.abs(la[:, None] - lb[None, :]).ravel(), [0.0, 1.0]])
        cand = np.unique(cand[(cand >= 0.0) & (cand <= 1.0)])
        # feasibility is constant strictly between consecutive candidates;
        # find the first gap (c_k, c_k+1) on which it holds, with index
        # size-1 standing for eps = 1, which is always feasible
        lo_i, hi_i = 0, cand.size - 1
        while lo_i < hi_i:
            mid = (lo_i + hi_i) // 2
            if _levy_feasible(P, Q, 0.5 * (cand[mid] + cand[mid + 1]), pts):
                hi_i = mid
            else:
                lo_i = mid + 1
        return MetricValue(float(cand[lo_i]))

    pts = _probe_grid(P, Q)
    if _levy_feasible(P, Q, 0.0, pts):
        return ZERO
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _levy_feasible(P, Q, mid, pts):
            hi = mid
        else:
            lo = mid
    return MetricValue.bracket(lo, hi)


# ---------------------------------------------------------------------------
# Prokhorov and friends


def _prokhorov_exact(x: np.ndarray, y: np.ndarray) -> float:
    n = x.size
    if coupling_feasible(x, y, 0.0):
        return 0.0
    # the optimum is a pairwise gap or a multiple of 1/N; feasibility is monotone
    cand = np.concatenate([np.abs(x[:, None] - y[None, :]).ravel(), np.arange(n + 1) / n])
    cand = np.unique(cand[cand <= 1.0])
    lo_i, hi_i = 0, cand.size - 1
    while lo_i < hi_i:
        mid = (lo_i + hi_i) // 2
        if coupling_feasible(x, y, float(cand[mid])):
            hi_i = mid
        else:
            lo_i = mid + 1
    return float(cand[lo_i])


def prokhorov(P, Q, tol: float = 1e-9) -> MetricValue:
    """Prokhorov distance with closed fattening.

    Exact for two equal-size empirical laws (``N <= 1000``) through the
    coupling characterisation; otherwise the bracket ``[0, sqrt(d_K)]``.
    """
    P, Q = as_distribution(P), as_distribution(Q)
    if _same_law(P, Q):
        return ZERO
    if isinstance(P, EmpiricalDistribution) and isinstance(Q, EmpiricalDistribution):
        if P.n != Q.n:
            raise ValueError(f"exact Prokhorov needs equal sample counts, got {P.n} and {Q.n}")
        if P.n <= PROKHOROV_EXACT_MAX_N:
            return MetricValue(_prokhorov_exact(P.samples, Q.samples))
    dk = kantorovich(P, Q, tol).value
    return MetricValue.bracket(0.0, min(1.0, math.sqrt(dk)))


def d_phi(P, Q, phi: GaugeFunction, tol: float = 1e-9) -> MetricValue:
    """Prokhorov distance plus the gap between the ``phi``-moments."""
    P, Q = as_distribution(P), as_distribution(Q)
    if _same_law(P, Q):
        return ZERO
    mp, mq = moment(P, phi, tol), moment(Q, phi, tol)
    if math.isinf(mp) or math.isinf(mq):
        return INF
    gap = abs(mp - mq)
    pr = prokhorov(P, Q, tol)
    if pr.exactness == "bracket":
        return MetricValue.bracket(pr.lo + gap, pr.hi + gap)
    if _step_pair(P, Q):
        return MetricValue(pr.value + gap)
    return MetricValue(pr.value + gap, "quadrature", tol=2 * tol)


def bl_bracket(P, Q, tol: float = 1e-9) -> MetricValue:
    """Bracket on the bounded-Lipschitz distance from the Prokhorov distance:
    ``(2/3) d_Prok^2 <= d_BL <= 2 d_Prok``."""
    pr = prokhorov(P, Q, tol)
    if pr.exactness == "bracket":
        lo, hi = pr.lo, pr.hi
    else:
        lo = hi = pr.value
    return MetricValue.bracket(2.0 / 3.0 * lo * lo, min(2.0, 2.0 * hi))


# ---------------------------------------------------------------------------
# dispatch


METRIC_KINDS = ("kantorovich", "fortet_mourier", "kolmogorov", "weighted_kolmogorov", "levy", "prokhorov", "d_phi", "bl")


def compute_metric(kind: str, P, Q, p: float = 1.0, phi: Optional[GaugeFunction] = None, tol: float = 1e-9) -> MetricValue:
    """Evaluate the metric named ``kind``."""
    if kind == "kantorovich":
        return kantorovich(P, Q, tol)
    if kind == "fortet_mourier":
        return fortet_mourier(P, Q, p, tol)
    if kind == "kolmogorov":
        return kolmogorov(P, Q, tol)
    if kind == "weighted_kolmogorov":
        if phi is None:
            raise ValueError("weighted_kolmogorov needs a gauge function")
        return weighted_kolmogorov(P, Q, phi, tol)
    if kind == "levy":
        return levy(P, Q, tol)
    if kind == "prokhorov":
        return prokhorov(P, Q, tol)
    if kind == "d_phi":
        if phi is None:
            raise ValueError("d_phi needs a gauge function")
        return d_phi(P, Q, phi, tol)
    if kind == "bl":
        return bl_bracket(P, Q, tol)
    raise ValueError(f"unknown metric kind {kind!r}")
