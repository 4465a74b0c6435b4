"""Laws on the real line.

Every law exposes its CDF (right-continuous) and left limit, the
left-continuous quantile ``inf{x : F(x) >= u}``, inverse-CDF sampling,
its point masses, the points where its CDF is not smooth, and the
supremum order of its finite absolute moments. Parametric families
declare their moment order analytically; nothing is decided by
numerical divergence tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import integrate as _sp_integrate
from scipy import special

from .numerics import RngStream

_EMPTY = (np.empty(0), np.empty(0))


def _scalar_or_array(x, out):
    return float(out) if np.ndim(x) == 0 else out


class Distribution:
    """Base class. Subclasses are immutable after construction."""

    finite_moment_order: float = math.inf
    moment_attained: bool = True

    # -- core interface -------------------------------------------------
    def cdf(self, x):
        raise NotImplementedError

    def cdf_left(self, x):
        """``P(X < x)``; equals ``cdf`` for atomless laws."""
        return self.cdf(x)

    def sf(self, x):
        """``P(X > x)``; subclasses override it where ``1 - cdf`` cancels."""
        return _scalar_or_array(x, 1.0 - np.asarray(self.cdf(x), dtype=float))

    def quantile(self, u):
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def expected_excess(self, r: float) -> float:
        """``E[(X - r)_+]``."""
        raise NotImplementedError

    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    def point_masses(self) -> tuple[np.ndarray, np.ndarray]:
        """Locations and weights of the discrete part (possibly empty)."""
        return _EMPTY

    def breakpoints(self) -> np.ndarray:
        """Points where the CDF jumps or has a kink."""
        return self.point_masses()[0]

    def expect(self, func: Callable, tol: float = 1e-10, lo: float = -math.inf, hi: float = math.inf) -> float:
        """``E[func(X); lo <= X <= hi]``."""
        raise NotImplementedError

    # -- derived --------------------------------------------------------
    @property
    def is_step(self) -> bool:
        """True when the CDF is a finite step function."""
        return False

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.is_step:
            raise ValueError(f"{type(self).__name__} is not a step law")
        return self.point_masses()

    def has_finite_moment(self, p: float) -> bool:
        order = self.finite_moment_order
        return p < order or (p == order and self.moment_attained)

    def sample(self, n: int, rng: RngStream) -> np.ndarray:
        """``n`` i.i.d. draws by pushing the stream's uniforms through the quantile."""
        if n < 1:
            raise ValueError("n must be >= 1")
        return np.asarray(self.quantile(rng.uniform(n)), dtype=float)

    def to_dict(self) -> dict:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# step laws


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution(Distribution):
    """Uniform weights on a sorted sample; ties allowed."""

    samples: np.ndarray

    def __post_init__(self):
        xs = np.sort(np.asarray(self.samples, dtype=float).ravel())
        if xs.size == 0:
            raise ValueError("empirical law needs at least one sample")
        if not np.all(np.isfinite(xs)):
            raise ValueError("empirical samples must be finite")
        xs.setflags(write=False)
        object.__setattr__(self, "samples", xs)

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def is_step(self) -> bool:
        return True

    def cdf(self, x):
        out = np.searchsorted(self.samples, x, side="right") / self.n
        return _scalar_or_array(x, out)

    def cdf_left(self, x):
        out = np.searchsorted(self.samples, x, side="left") / self.n
        return _scalar_or_array(x, out)

    def quantile(self, u):
        # smallest k with k/N >= u, compared against the same float k/N the CDF returns
        levels = np.arange(1, self.n + 1) / self.n
        idx = np.minimum(np.searchsorted(levels, u, side="left"), self.n - 1)
        return _scalar_or_array(u, self.samples[idx])

    def mean(self) -> float:
        return float(np.mean(self.samples))

    def expected_excess(self, r: float) -> float:
        return float(np.mean(np.maximum(self.samples - r, 0.0)))

    def support(self):
        return float(self.samples[0]), float(self.samples[-1])

    def point_masses(self):
        locs, counts = np.unique(self.samples, return_counts=True)
        return locs, counts / self.n

    def expect(self, func, tol=1e-10, lo=-math.inf, hi=math.inf):
        xs = self.samples[(self.samples >= lo) & (self.samples <= hi)]
        if xs.size == 0:
            return 0.0
        return float(np.sum(np.asarray(func(xs), dtype=float)) / self.n)

    def to_dict(self):
        return {"kind": "empirical", "samples": self.samples.tolist()}


@dataclass(frozen=True)
class Dirac(Distribution):
    c: float

    @property
    def is_step(self) -> bool:
        return True

    def cdf(self, x):
        return _scalar_or_array(x, np.where(np.asarray(x) >= self.c, 1.0, 0.0))

    def cdf_left(self, x):
        return _scalar_or_array(x, np.where(np.asarray(x) > self.c, 1.0, 0.0))

    def quantile(self, u):
        return _scalar_or_array(u, np.full(np.shape(u), float(self.c)))

    def mean(self):
        return float(self.c)

    def expected_excess(self, r):
        return max(self.c - r, 0.0)

    def support(self):
        return float(self.c), float(self.c)

    def point_masses(self):
        return np.array([float(self.c)]), np.array([1.0])

    def expect(self, func, tol=1e-10, lo=-math.inf, hi=math.inf):
        if not lo <= self.c <= hi:
            return 0.0
        return float(np.asarray(func(np.array([float(self.c)])), dtype=float)[0])

    def to_dict(self):
        return {"kind": "dirac", "c": self.c}


# ---------------------------------------------------------------------------
# atomless parametric laws


class _Continuous(Distribution):
    def pdf(self, x):
        raise NotImplementedError

    def _split_points(self) -> list[float]:
        return []

    def expect(self, func, tol=1e-10, lo=-math.inf, hi=math.inf):
        s_lo, s_hi = self.support()
        a, b = max(lo, s_lo), min(hi, s_hi)
        if not a < b:
            return 0.0
        cuts = [a, *[c for c in self._split_points() if a < c < b], b]

        def integrand(x):
            return float(func(np.array([x]))[0]) * float(self.pdf(x))

        total = 0.0
        for x0, x1 in zip(cuts[:-1], cuts[1:]):
            val, _ = _sp_integrate.quad(integrand, x0, x1, epsabs=tol, epsrel=1e-12, limit=400)
            total += val
        return float(total)


@dataclass(frozen=True)
class Uniform(_Continuous):
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("Uniform needs a < b")

    def cdf(self, x):
        return _scalar_or_array(x, np.clip((np.asarray(x, dtype=float) - self.a) / (self.b - self.a), 0.0, 1.0))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return _scalar_or_array(x, np.where((x >= self.a) & (x <= self.b), 1.0 / (self.b - self.a), 0.0))

    def quantile(self, u):
        return _scalar_or_array(u, self.a + np.asarray(u, dtype=float) * (self.b - self.a))

    def mean(self):
        return 0.5 * (self.a + self.b)

    def expected_excess(self, r):
        if r <= self.a:
            return self.mean() - r
        if r >= self.b:
            return 0.0
        return (self.b - r) ** 2 / (2.0 * (self.b - self.a))

    def support(self):
        return float(self.a), float(self.b)

    def breakpoints(self):
        return np.array([float(self.a), float(self.b)])

    def to_dict(self):
        return {"kind": "uniform", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Normal(_Continuous):
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("Normal needs sigma > 0")

    def cdf(self, x):
        return _scalar_or_array(x, special.ndtr((np.asarray(x, dtype=float) - self.mu) / self.sigma))

    def sf(self, x):
        return _scalar_or_array(x, special.ndtr((self.mu - np.asarray(x, dtype=float)) / self.sigma))

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return _scalar_or_array(x, np.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2.0 * math.pi)))

    def quantile(self, u):
        return _scalar_or_array(u, self.mu + self.sigma * special.ndtri(np.asarray(u, dtype=float)))

    def mean(self):
        return float(self.mu)

    def expected_excess(self, r):
        z = (r - self.mu) / self.sigma
        phi = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        return float(self.sigma * (phi - z * special.ndtr(-z)))

    def support(self):
        return -math.inf, math.inf

    def breakpoints(self):
        return np.array([float(self.mu)])

    def _split_points(self):
        return [float(self.mu)]

    def to_dict(self):
        return {"kind": "normal", "mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True)
class Pareto(_Continuous):
    """Pareto tail ``P(X > x) = (scale/x)^shape`` for ``x >= scale``.

    With ``reflect=True`` the law of ``-X`` (a heavy left tail).
    """

    scale: float = 1.0
    shape: float = 2.0
    reflect: bool = False

    def __post_init__(self):
        if not (self.scale > 0 and self.shape > 0):
            raise ValueError("Pareto needs scale > 0 and shape > 0")

    @property
    def finite_moment_order(self):
        return float(self.shape)

    @property
    def moment_attained(self):
        return False

    def _sf_pos(self, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(y >= self.scale, (self.scale / np.maximum(y, self.scale)) ** self.shape, 1.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.reflect:
            # P(-Y <= x) = P(Y >= -x); atomless so equals sf(-x)
            return _scalar_or_array(x, self._sf_pos(-x))
        return _scalar_or_array(x, 1.0 - self._sf_pos(x))

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        if self.reflect:
            return _scalar_or_array(x, 1.0 - self._sf_pos(-x))
        return _scalar_or_array(x, self._sf_pos(x))

    def pdf(self, x):
        y = -np.asarray(x, dtype=float) if self.reflect else np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(y >= self.scale, self.shape * self.scale**self.shape / np.maximum(y, self.scale) ** (self.shape + 1), 0.0)
        return _scalar_or_array(x, out)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        if self.reflect:
            return _scalar_or_array(u, -self.scale * u ** (-1.0 / self.shape))
        return _scalar_or_array(u, self.scale * (1.0 - u) ** (-1.0 / self.shape))

    def _pos_mean(self):
        a, s = self.shape, self.scale
        return a * s / (a - 1.0) if a > 1 else math.inf

    def mean(self):
        m = self._pos_mean()
        return -m if self.reflect else m

    def _pos_excess(self, c):
        # E[(Y - c)_+] for the unreflected Y
        a, s = self.shape, self.scale
        if a <= 1:
            return math.inf
        if c <= s:
            return self._pos_mean() - c
        return s**a * c ** (1.0 - a) / (a - 1.0)

    def _pos_shortfall(self, c):
        # E[(c - Y)_+] = integral of F over [s, c]
        a, s = self.shape, self.scale
        if c <= s:
            return 0.0
        if a == 1.0:
            tail = s * math.log(c / s)
        else:
            tail = s**a * (c ** (1.0 - a) - s ** (1.0 - a)) / (1.0 - a)
        return (c - s) - tail

    def expected_excess(self, r):
        if self.reflect:
            return self._pos_shortfall(-r)
        return self._pos_excess(r)

    def support(self):
        s = float(self.scale)
        return (-math.inf, -s) if self.reflect else (s, math.inf)

    def breakpoints(self):
        return np.array([-float(self.scale) if self.reflect else float(self.scale)])

    def to_dict(self):
        return {"kind": "pareto", "scale": self.scale, "shape": self.shape, "reflect": self.reflect}


# ---------------------------------------------------------------------------
# mixtures


@dataclass(frozen=True)
class Mixture(Distribution):
    """``(1 - eps) * left + eps * right``."""

    eps: float
    left: Distribution
    right: Distribution

    def __post_init__(self):
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError(f"mixture weight must lie in [0, 1], got {self.eps}")

    @property
    def finite_moment_order(self):
        return min(self._parts_order())

    def _parts_order(self):
        return [d.finite_moment_order for w, d in self._parts()]

    @property
    def moment_attained(self):
        order = self.finite_moment_order
        return all(d.moment_attained for w, d in self._parts() if d.finite_moment_order == order)

    def _parts(self):
        # zero-weight components do not affect the law
        return [(w, d) for w, d in ((1.0 - self.eps, self.left), (self.eps, self.right)) if w > 0.0]

    @property
    def is_step(self):
        return all(d.is_step for w, d in self._parts())

    def cdf(self, x):
        return (1.0 - self.eps) * self.left.cdf(x) + self.eps * self.right.cdf(x)

    def cdf_left(self, x):
        return (1.0 - self.eps) * self.left.cdf_left(x) + self.eps * self.right.cdf_left(x)

    def sf(self, x):
        return (1.0 - self.eps) * self.left.sf(x) + self.eps * self.right.sf(x)

    def mean(self):
        return sum(w * d.mean() for w, d in self._parts())

    def expected_excess(self, r):
        return sum(w * d.expected_excess(r) for w, d in self._parts())

    def support(self):
        sups = [d.support() for w, d in self._parts()]
        return min(s[0] for s in sups), max(s[1] for s in sups)

    def point_masses(self):
        locs, wts = [], []
        for w, d in self._parts():
            l, m = d.point_masses()
            locs.append(l)
            wts.append(w * m)
        locs, wts = np.concatenate(locs), np.concatenate(wts)
        if locs.size == 0:
            return _EMPTY
        uniq, inv = np.unique(locs, return_inverse=True)
        return uniq, np.bincount(inv, weights=wts)

    def breakpoints(self):
        return np.unique(np.concatenate([d.breakpoints() for w, d in self._parts()]))

    def expect(self, func, tol=1e-10, lo=-math.inf, hi=math.inf):
        return sum(w * d.expect(func, tol, lo, hi) for w, d in self._parts())

    def quantile(self, u):
        u_arr = np.atleast_1d(np.asarray(u, dtype=float))
        if self.is_step:
            locs, wts = self.point_masses()
            cum = np.cumsum(wts)
            idx = np.minimum(np.searchsorted(cum, u_arr, side="left"), locs.size - 1)
            out = locs[idx]
        else:
            out = self._bisect_quantile(u_arr)
        return float(out[0]) if np.ndim(u) == 0 else out

    def _bisect_quantile(self, u):
        # the mixture quantile lies between the component quantiles
        qs = [np.asarray(d.quantile(u), dtype=float) for w, d in self._parts()]
        lo = np.minimum.reduce(qs)
        hi = np.maximum.reduce(qs)
        lo = np.nextafter(lo, -np.inf)
        for _ in range(200):
            mid = lo + 0.5 * (hi - lo)
            active = (mid > lo) & (mid < hi)
            if not active.any():
                break
            up = self.cdf(mid) >= u
            hi = np.where(active & up, mid, hi)
            lo = np.where(active & ~up, mid, lo)
        locs, _ = self.point_masses()
        for a in locs:
            hit = (a > lo) & (a <= hi)
            hi = np.where(hit, a, hi)
        return hi

    def to_dict(self):
        return {"kind": "mixture", "eps": self.eps, "left": self.left.to_dict(), "right": self.right.to_dict()}


# ---------------------------------------------------------------------------
# gauge functions


@dataclass(frozen=True)
class GaugeFunction:
    """Weight functions on the real line.

    ``abs_pow``      ``|t|^p``
    ``phi_p``        ``|t|`` on ``[-1, 1]``, ``|t|^p`` outside
    ``max_one_pow``  ``max(1, |t|^p)`` (u-shaped)
    ``table``        piecewise linear through ``(breakpoints, values)``,
                     constant beyond the end points
    """

    kind: str
    p: float = 1.0
    breakpoints: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("abs_pow", "phi_p", "max_one_pow", "table"):
            raise ValueError(f"unknown gauge kind {self.kind!r}")
        if self.kind == "table":
            bp = tuple(float(b) for b in self.breakpoints)
            vals = tuple(float(v) for v in self.values)
            if len(bp) == 0 or len(bp) != len(vals):
                raise ValueError("table gauge needs equally many breakpoints and values")
            if any(b1 >= b2 for b1, b2 in zip(bp[:-1], bp[1:])):
                raise ValueError("table breakpoints must be strictly increasing")
            object.__setattr__(self, "breakpoints", bp)
            object.__setattr__(self, "values", vals)
        elif self.p < 0 or (self.kind == "phi_p" and self.p < 1):
            raise ValueError(f"invalid exponent p={self.p} for {self.kind}")

    @classmethod
    def abs_pow(cls, p):
        return cls("abs_pow", float(p))

    @classmethod
    def phi_p(cls, p):
        return cls("phi_p", float(p))

    @classmethod
    def max_one_pow(cls, p):
        return cls("max_one_pow", float(p))

    @classmethod
    def table(cls, breakpoints, values):
        return cls("table", breakpoints=tuple(breakpoints), values=tuple(values))

    @classmethod
    def one(cls):
        return cls.table([0.0], [1.0])

    def __call__(self, t):
        a = np.abs(np.asarray(t, dtype=float))
        if self.kind == "abs_pow":
            out = a**self.p
        elif self.kind == "phi_p":
            out = np.where(a <= 1.0, a, a**self.p)
        elif self.kind == "max_one_pow":
            out = np.maximum(1.0, a**self.p)
        else:
            out = np.interp(np.asarray(t, dtype=float), self.breakpoints, self.values)
        return _scalar_or_array(t, out)

    @property
    def growth_order(self) -> float:
        return 0.0 if self.kind == "table" else self.p

    def is_u_shaped(self) -> bool:
        """Continuous, >= 1, non-increasing left of 0 and non-decreasing right of it."""
        if self.kind == "max_one_pow":
            return True
        if self.kind != "table":
            return False
        pts = np.unique(np.array([*self.breakpoints, 0.0]))
        vals = self(pts)
        if np.min(vals) < 1.0:
            return False
        neg, pos = vals[pts <= 0.0], vals[pts >= 0.0]
        return bool(np.all(np.diff(neg) <= 0.0) and np.all(np.diff(pos) >= 0.0))

    def to_dict(self):
        if self.kind == "table":
            return {"kind": "table", "breakpoints": list(self.breakpoints), "values": list(self.values)}
        return {"kind": self.kind, "p": self.p}


# ---------------------------------------------------------------------------
# operations


def cdf(dist: Distribution, x):
    return dist.cdf(x)


def quantile(dist: Distribution, u):
    return dist.quantile(u)


def sample(dist: Distribution, n: int, rng: RngStream) -> np.ndarray:
    return dist.sample(n, rng)


def empirical_from(samples) -> EmpiricalDistribution:
    """Sorted copy of ``samples`` as an empirical law."""
    return EmpiricalDistribution(np.asarray(samples, dtype=float))


def contaminate(base: Distribution, eps: float, noise: Distribution) -> Mixture:
    """``(1 - eps) * base + eps * noise``."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"contamination weight must lie in [0, 1], got {eps}")
    return Mixture(float(eps), base, noise)


def moment(dist: Distribution, phi: GaugeFunction, tol: float = 1e-10) -> float:
    """``E[phi(X)]``, or ``inf`` when phi grows faster than the law's moments allow."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    order = phi.growth_order
    if order > 0 and not dist.has_finite_moment(order):
        return math.inf
    return dist.expect(phi, tol)


def is_admissible(dist: Distribution, p: float) -> bool:
    """Finite ``p``-th absolute moment, i.e. finite FM_p distance to a point mass at 0."""
    if p < 1:
        raise ValueError("p must be >= 1")
    return dist.has_finite_moment(p)


def as_distribution(obj) -> Distribution:
    """Pass distributions through; wrap sample vectors as empirical laws."""
    if isinstance(obj, Distribution):
        return obj
    return empirical_from(obj)


# ---------------------------------------------------------------------------
# literals


def distribution_from_dict(d: Mapping) -> Distribution:
    """Build a law from a literal such as ``{"kind": "normal", "mu": 0, "sigma": 1}``."""
    kind = d.get("kind")
    if kind == "dirac":
        return Dirac(float(d["c"]))
    if kind == "uniform":
        return Uniform(float(d["a"]), float(d["b"]))
    if kind == "normal":
        return Normal(float(d.get("mu", 0.0)), float(d.get("sigma", 1.0)))
    if kind == "pareto":
        return Pareto(float(d.get("scale", 1.0)), float(d["shape"]), bool(d.get("reflect", False)))
    if kind == "empirical":
        return empirical_from(d["samples"])
    if kind == "mixture":
        return Mixture(float(d["eps"]), distribution_from_dict(d["left"]), distribution_from_dict(d["right"]))
    if kind == "contaminate":
        return contaminate(distribution_from_dict(d["base"]), float(d["eps"]), distribution_from_dict(d["noise"]))
    raise ValueError(f"unknown distribution kind {kind!r}")


def gauge_from_dict(d: Mapping) -> GaugeFunction:
    kind = d.get("kind")
    if kind == "table":
        return GaugeFunction.table(d["breakpoints"], d["values"])
    return GaugeFunction(kind, float(d.get("p", 1.0)))
