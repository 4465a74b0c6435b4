"""Deterministic numerical utilities.

Seeded random streams, adaptive Simpson quadrature with declared
breakpoints, monotone bisection, nested grid search, the sorted-pairing
transport cost and its permutation oracle, and a Dinic max-flow used to
decide equal-weight couplings.
"""

from __future__ import annotations

import functools
import itertools
import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import BracketError, DomainError

MAX_PERMUTATION_N = 9


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"interval needs lo <= hi, got [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo


def _as_interval(domain) -> Interval:
    if isinstance(domain, Interval):
        return domain
    lo, hi = domain
    return Interval(float(lo), float(hi))


@dataclass
class RngStream:
    """Reproducible stream of uniforms keyed by ``(seed, stream_id)``.

    The underlying PCG64 state is derived from a ``SeedSequence`` whose
    spawn key is the stream id, so streams are statistically independent
    and do not depend on creation order or on which thread consumes them.
    A stream is owned by one caller; never share one across threads.
    """

    seed: int
    stream_id: int = 0
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.stream_id < 0:
            raise ValueError("stream_id must be non-negative")
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def uniform(self, n: int) -> np.ndarray:
        """n draws on the open interval (0, 1)."""
        u = self._gen.random(n)
        # random() can return exactly 0.0; quantile maps need u > 0
        u[u == 0.0] = 2.0**-54
        return u


def integrate(
    f: Callable,
    domain,
    abs_tol: float = 1e-10,
    breakpoints: Iterable[float] = (),
    max_depth: int = 50,
    vectorized: bool = False,
) -> float:
    """Adaptive Simpson quadrature of ``f`` over ``domain``.

    The domain is first split at every declared breakpoint that falls
    strictly inside it, so integrands that are smooth between known kinks
    or jumps (CDF differences of step laws, ``max(1, |x|^(p-1))``) converge
    quickly. The tolerance budget is shared between pieces in proportion
    to their width. Integrands are taken right-continuous: the right end
    of each piece is sampled one float below the breakpoint, i.e. at the
    left limit of a jump located there.

    Intervals are refined level by level; with ``vectorized=True`` ``f``
    receives every new abscissa of a level as one array.

    Raises
    ------
    DomainError
        If ``f`` returns a non-finite value anywhere it is sampled.
    """
    if abs_tol <= 0:
        raise ValueError("abs_tol must be positive")
    dom = _as_interval(domain)
    if dom.width == 0.0:
        return 0.0
    cuts = sorted({float(b) for b in breakpoints if dom.lo < b < dom.hi})
    nodes = np.array([dom.lo, *cuts, dom.hi])

    def ev(xs):
        ys = np.asarray(f(xs) if vectorized else [f(float(x)) for x in xs], dtype=float).reshape(xs.shape)
        bad = ~np.isfinite(ys)
        if bad.any():
            raise DomainError(f"integrand is not finite at x={float(xs[bad][0])!r}")
        return ys

    a, b = nodes[:-1], nodes[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    total, hit = _simpson_levels(ev, a, b, abs_tol * (b - a) / dom.width, max_depth)
    if hit:
        warnings.warn("integrate: recursion depth reached; tolerance may not be met", RuntimeWarning)
    return total


def _simpson_levels(ev, a, b, tol, max_depth, min_depth=3):
    m = 0.5 * (a + b)
    n = a.size
    first = ev(np.concatenate([a, m, np.nextafter(b, a)]))
    fa, fm, fb = first[:n], first[n : 2 * n], first[2 * n :]
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    total = 0.0
    hit = False
    depth = 0
    while a.size:
        m = 0.5 * (a + b)
        n = a.size
        mids = ev(np.concatenate([0.5 * (a + m), 0.5 * (m + b)]))
        flm, frm = mids[:n], mids[n:]
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        if depth >= max_depth:
            done = np.ones(n, dtype=bool)
            hit = True
        elif depth >= min_depth:
            done = np.abs(delta) <= 15.0 * tol
        else:
            done = np.zeros(n, dtype=bool)
        total += float(np.sum((left + right + delta / 15.0)[done]))
        k = ~done
        a, b = np.concatenate([a[k], m[k]]), np.concatenate([m[k], b[k]])
        fa, fm, fb = np.concatenate([fa[k], fm[k]]), np.concatenate([flm[k], frm[k]]), np.concatenate([fm[k], fb[k]])
        whole = np.concatenate([left[k], right[k]])
        tol = np.concatenate([0.5 * tol[k], 0.5 * tol[k]])
        depth += 1
    return total, hit


def bisect_root(g: Callable[[float], float], bracket, tol: float = 1e-12) -> float:
    """Root of a monotone ``g`` inside ``bracket`` by bisection.

    Stops when the bracket is narrower than ``tol`` or when floating point
    can no longer split it; the returned point then satisfies the
    post-condition through bracket width.
    """
    br = _as_interval(bracket)
    lo, hi = br.lo, br.hi
    glo, ghi = g(lo), g(hi)
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    if (glo > 0.0) == (ghi > 0.0):
        raise BracketError(f"no sign change on [{lo}, {hi}]: g(lo)={glo}, g(hi)={ghi}")
    while hi - lo > tol:
        mid = lo + 0.5 * (hi - lo)
        if not lo < mid < hi:
            break
        gm = g(mid)
        if gm == 0.0:
            return mid
        if (gm > 0.0) == (glo > 0.0):
            lo, glo = mid, gm
        else:
            hi = mid
    return lo + 0.5 * (hi - lo)


def grid_minimize(
    f: Callable,
    domain,
    grid_points: int = 129,
    refine_rounds: int = 6,
    vectorized: bool = False,
) -> tuple[float, float]:
    """Nested grid search; returns ``(argmin, min)``.

    Each round evaluates ``grid_points`` equispaced points and shrinks the
    window to the two cells around the best one, which keeps the true
    minimiser inside the window for convex ``f``.
    """
    if grid_points < 3:
        raise ValueError("grid_points must be >= 3")
    if refine_rounds < 1:
        raise ValueError("refine_rounds must be >= 1")
    dom = _as_interval(domain)
    lo, hi = dom.lo, dom.hi
    best_x, best_f = lo, math.inf
    for _ in range(refine_rounds):
        xs = np.linspace(lo, hi, grid_points)
        if vectorized:
            fs = np.asarray(f(xs), dtype=float)
        else:
            fs = np.array([f(float(x)) for x in xs], dtype=float)
        if not np.all(np.isfinite(fs)):
            raise DomainError("objective is not finite on the search grid")
        k = int(np.argmin(fs))
        if fs[k] < best_f:
            best_x, best_f = float(xs[k]), float(fs[k])
        lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, grid_points - 1)]
        if hi <= lo:
            break
    return best_x, best_f


def growth_weight(a, b, p: float):
    """``c_p(a, b) = max(1, |a|, |b|)^(p-1)``, elementwise."""
    m = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return m ** (p - 1.0)


def sorted_pairing_cost(a: Sequence[float], b: Sequence[float], p: float = 1.0) -> float:
    """Mean of ``c_p(a_(k), b_(k)) |a_(k) - b_(k)|`` over order statistics.

    This is the cost of the monotone pairing, which no other pairing beats
    for ``p = 1``; for ``p > 1`` it upper-bounds the Fortet-Mourier
    distance between the two empirical laws.
    """
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"need two vectors of equal length, got {a.shape} and {b.shape}")
    if a.size == 0:
        raise ValueError("vectors must be non-empty")
    if p < 1:
        raise ValueError("p must be >= 1")
    return float(np.mean(growth_weight(a, b, p) * np.abs(a - b)))


@functools.lru_cache(maxsize=None)
def _permutations(n: int) -> np.ndarray:
    out = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    out.setflags(write=False)
    return out


def min_over_permutations(a: Sequence[float], b: Sequence[float]) -> float:
    """Brute-force ``min_k sum_i |a_i - b_{k_i}|`` over all permutations.

    Exists only as an oracle for the sorted pairing; sizes above nine
    are refused.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("need two vectors of equal length")
    n = a.size
    if n > MAX_PERMUTATION_N:
        raise ValueError(f"permutation oracle limited to N <= {MAX_PERMUTATION_N}, got {n}")
    if n == 0:
        return 0.0
    perms = _permutations(n)
    costs = np.abs(a[None, :] - b[perms]).sum(axis=1)
    return float(costs.min())


def sorted_product_sum(a: Sequence[float], b: Sequence[float]) -> float:
    """``sum_k a_(k) b_(k)`` with both vectors sorted ascending.

    By the rearrangement inequality no pairing of the entries gives a
    larger sum of products.
    """
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("need two vectors of equal length")
    return float(a @ b)


class MaxFlow:
    """Dinic max-flow on integer capacities."""

    def __init__(self, n: int):
        self.n = n
        self.adj: list[list[int]] = [[] for _ in range(n)]
        self.to: list[int] = []
        self.cap: list[int] = []

    def add_edge(self, u: int, v: int, cap: int) -> None:
        self.adj[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(cap)
        self.adj[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(0)

    def _levels(self, s, t):
        level = [-1] * self.n
        level[s] = 0
        q = deque([s])
        while q:
            u = q.popleft()
            for e in self.adj[u]:
                v = self.to[e]
                if self.cap[e] > 0 and level[v] < 0:
                    level[v] = level[u] + 1
                    q.append(v)
        return level if level[t] >= 0 else None

    def _push(self, u, t, f, level, it):
        if u == t:
            return f
        adj, to, cap = self.adj[u], self.to, self.cap
        while it[u] < len(adj):
            e = adj[it[u]]
            v = to[e]
            if cap[e] > 0 and level[v] == level[u] + 1:
                pushed = self._push(v, t, min(f, cap[e]), level, it)
                if pushed:
                    cap[e] -= pushed
                    cap[e ^ 1] += pushed
                    return pushed
            it[u] += 1
        return 0

    def max_flow(self, s: int, t: int) -> int:
        flow = 0
        while (level := self._levels(s, t)) is not None:
            it = [0] * self.n
            while pushed := self._push(s, t, 1 << 60, level, it):
                flow += pushed
        return flow


def slack_capacity(eps: float, n: int) -> int:
    """``floor(eps * n)`` with a guard against ``k/n * n`` rounding down."""
    return int(math.floor(eps * n + 1e-9))


def coupling_feasible(x: Sequence[float], y: Sequence[float], eps: float) -> bool:
    """Whether two equal-weight empirical laws admit a coupling with
    ``P(|X - Y| > eps) <= eps``.

    Points closer than ``eps`` (closed) may be matched; up to
    ``floor(eps * N)`` pairs may be routed through a slack node instead.
    The coupling exists iff the flow saturates all ``N`` source edges.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("need two vectors of equal length")
    if eps < 0:
        raise ValueError("eps must be non-negative")
    n = x.size
    if n == 0:
        return True
    s, slack_in, slack_out, t = 2 * n, 2 * n + 1, 2 * n + 2, 2 * n + 3
    net = MaxFlow(2 * n + 4)
    for i in range(n):
        net.add_edge(s, i, 1)
        net.add_edge(n + i, t, 1)
        net.add_edge(i, slack_in, 1)
        net.add_edge(slack_out, n + i, 1)
    net.add_edge(slack_in, slack_out, slack_capacity(eps, n))
    ii, jj = np.nonzero(np.abs(x[:, None] - y[None, :]) <= eps)
    for i, j in zip(ii.tolist(), jj.tolist()):
        net.add_edge(i, n + j, 1)
    return net.max_flow(s, t) == n
