import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from qsrobust.errors import BracketError, DomainError
from qsrobust.numerics import (
    Interval,
    RngStream,
    bisect_root,
    coupling_feasible,
    grid_minimize,
    growth_weight,
    integrate,
    min_over_permutations,
    slack_capacity,
    sorted_pairing_cost,
    sorted_product_sum,
)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def test_interval_rejects_reversed_bounds():
    with pytest.raises(ValueError):
        Interval(1.0, 0.0)
    assert Interval(0.0, 2.0).width == 2.0


# -- RngStream ------------------------------------------------------------


def test_stream_reproducible_first_10k_draws():
    a = RngStream(12345, 7).uniform(10_000)
    b = RngStream(12345, 7).uniform(10_000)
    assert a.tobytes() == b.tobytes()


def test_streams_differ_by_id_and_seed():
    base = RngStream(1, 0).uniform(100)
    assert not np.array_equal(base, RngStream(1, 1).uniform(100))
    assert not np.array_equal(base, RngStream(2, 0).uniform(100))


def test_stream_independent_of_interleaving():
    s1, s2 = RngStream(9, 0), RngStream(9, 1)
    mixed = [s1.uniform(3), s2.uniform(5), s1.uniform(4)]
    assert np.array_equal(np.concatenate([mixed[0], mixed[2]]), RngStream(9, 0).uniform(7))
    assert np.array_equal(mixed[1], RngStream(9, 1).uniform(5))


def test_stream_uniforms_in_open_unit_interval():
    u = RngStream(3, 3).uniform(100_000)
    assert u.min() > 0.0 and u.max() < 1.0


def test_stream_rejects_bad_seed():
    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        RngStream(2**64)


# -- integrate ------------------------------------------------------------


@pytest.mark.parametrize(
    "f, dom, tol, expected",
    [
        (lambda x: 1.0, (0, 1), 1e-12, 1.0),
        (lambda x: max(1.0, x), (0, 2), 1e-9, 2.5),
        (lambda x: x * x, (-1, 1), 1e-9, 2.0 / 3.0),
    ],
)
def test_integrate_examples(f, dom, tol, expected):
    assert abs(integrate(f, dom, tol) - expected) <= tol


def _piecewise_suite():
    # 20 piecewise polynomials with breakpoints and exact integrals
    rng = np.random.default_rng(2024)
    suite = []
    for _ in range(20):
        cuts = np.sort(rng.uniform(-3, 3, rng.integers(1, 5)))
        nodes = np.concatenate([[-3.0], cuts, [3.0]])
        coefs = [rng.normal(size=rng.integers(1, 6)) for _ in range(nodes.size - 1)]

        def f(x, nodes=nodes, coefs=coefs):
            k = min(int(np.searchsorted(nodes, x, side="right")) - 1, len(coefs) - 1)
            return float(np.polyval(coefs[k], x))

        exact = sum(
            np.polyval(np.polyint(c), b) - np.polyval(np.polyint(c), a) for c, a, b in zip(coefs, nodes[:-1], nodes[1:])
        )
        suite.append((f, cuts, float(exact)))
    return suite


@pytest.mark.parametrize("case", range(20))
def test_integrate_piecewise_polynomials(case):
    f, cuts, exact = _piecewise_suite()[case]
    tol = 1e-9
    assert abs(integrate(f, (-3, 3), tol, breakpoints=cuts) - exact) <= tol


def test_integrate_uses_left_limit_at_breakpoint():
    step = lambda x: 1.0 if x >= 1.0 else 0.0
    assert integrate(step, (0, 1), 1e-12, breakpoints=[1.0]) == pytest.approx(0.0, abs=1e-12)
    assert integrate(step, (0, 2), 1e-12, breakpoints=[1.0]) == pytest.approx(1.0, abs=1e-12)


def test_integrate_non_finite_raises():
    with pytest.raises(DomainError):
        integrate(lambda x: math.inf if x > 0.5 else 0.0, (0, 1), 1e-6)


def test_integrate_empty_domain():
    assert integrate(lambda x: 1.0, (2, 2), 1e-9) == 0.0


# -- bisect_root ----------------------------------------------------------


def test_bisect_examples():
    assert bisect_root(lambda m: m - 1, (0, 2)) == pytest.approx(1.0, abs=1e-12)
    g = lambda m: (max(2 - m, 0) + max(4 - m, 0)) / 3 - 1
    assert bisect_root(g, (0, 4)) == pytest.approx(1.5, abs=1e-12)
    assert bisect_root(lambda m: math.exp(m) - 1, (-1, 1)) == pytest.approx(0.0, abs=1e-12)


def test_bisect_endpoint_root_and_bracket_error():
    assert bisect_root(lambda m: m, (0, 3)) == 0.0
    with pytest.raises(BracketError):
        bisect_root(lambda m: m * m + 1, (-1, 1))


@given(st.floats(-100, 100), st.floats(0.1, 10))
def test_bisect_linear_property(root, slope):
    m = bisect_root(lambda x: slope * (x - root), (root - 7.0, root + 3.0), 1e-10)
    assert abs(m - root) <= 1e-9


# -- grid_minimize --------------------------------------------------------


def test_grid_minimize_examples():
    xi = [1, 2, 3, 4]
    _, fmin = grid_minimize(lambda r: r + sum(max(0, x - r) for x in xi), (1, 4))
    assert fmin == pytest.approx(4.0, abs=1e-9)
    x, fx = grid_minimize(lambda x: (x - 2) ** 2, (0, 4))
    assert x == pytest.approx(2.0) and fx == pytest.approx(0.0)

    def u(t):
        return t - 0.5 * t * t if t < 1 else 0.5

    _, fmin = grid_minimize(lambda e: -(e + 0.5 * (u(-e) + u(1 - e))), (-1, 2))
    assert fmin == pytest.approx(-0.375, abs=1e-9)


def test_grid_minimize_vectorized_matches():
    f = lambda x: np.abs(x - 0.3) + 0.1 * x * x
    a = grid_minimize(f, (-2, 2), vectorized=True)
    b = grid_minimize(lambda x: float(f(x)), (-2, 2))
    assert a == pytest.approx(b)


def test_grid_minimize_argument_checks():
    with pytest.raises(ValueError):
        grid_minimize(lambda x: x, (0, 1), grid_points=2)
    with pytest.raises(DomainError):
        grid_minimize(lambda x: math.nan, (0, 1))


@given(st.floats(-5, 5), st.floats(0.1, 3))
def test_grid_minimize_convex_accuracy(c, w):
    dom = (-6.0, 6.0)
    g, rounds = 129, 6
    _, fmin = grid_minimize(lambda x: w * abs(x - c), dom, g, rounds)
    # each round keeps the two cells around the best point, so the final
    # spacing is width * (2/(g-1))^(rounds-1) / (g-1)
    spacing = 12.0 * (2.0 / (g - 1)) ** (rounds - 1) / (g - 1)
    assert fmin <= w * spacing + 1e-12


# -- pairing identities----------------------------------------------------


def test_sorted_pairing_examples():
    assert sorted_pairing_cost([1, 5, 2], [1, 5, 2], 2) == 0.0
    assert sorted_pairing_cost([0, 1], [0, 2], 1) == pytest.approx(0.5)
    assert sorted_pairing_cost([0, 3], [0, 2], 2) == pytest.approx(1.5)


def test_sorted_pairing_length_mismatch():
    with pytest.raises(ValueError):
        sorted_pairing_cost([1, 2], [1], 1)


def test_growth_weight():
    assert growth_weight(0.5, -0.2, 3) == 1.0
    assert growth_weight(-3.0, 2.0, 2) == 3.0


def test_min_over_permutations_examples():
    assert min_over_permutations([1, 2], [2, 1]) == 0.0
    assert min_over_permutations([0, 1], [0, 2]) == 1.0
    assert min_over_permutations([0, 5, 6], [1, 2, 9]) == 7.0


def test_min_over_permutations_size_cap():
    with pytest.raises(ValueError):
        min_over_permutations(range(10), range(10))


@settings(max_examples=200)
@given(st.integers(1, 8).flatmap(lambda n: st.tuples(st.lists(finite, min_size=n, max_size=n), st.lists(finite, min_size=n, max_size=n))))
def test_sorted_pairing_is_cheapest(ab):
    a, b = ab
    n = len(a)
    assert min_over_permutations(a, b) == pytest.approx(n * sorted_pairing_cost(a, b, 1), rel=1e-12, abs=1e-9)


@settings(max_examples=200)
@given(st.integers(1, 7).flatmap(lambda n: st.tuples(st.lists(finite, min_size=n, max_size=n), st.lists(st.floats(0, 50), min_size=n, max_size=n))))
def test_rearrangement_inequality(ab):
    a, b = map(np.asarray, ab)
    best = sorted_product_sum(a, b)
    assert float(a @ b) <= best + 1e-9 * (1 + abs(best))
    # brute force: the sorted pairing attains the maximum over all pairings
    brute = max(float(a @ b[list(p)]) for p in itertools.permutations(range(a.size)))
    assert best == pytest.approx(brute, rel=1e-12, abs=1e-9)


# -- coupling feasibility -------------------------------------------------


def test_coupling_examples():
    assert coupling_feasible([1, 2, 3], [1, 2, 3], 0.0)
    assert not coupling_feasible([0], [0.5], 0.4)
    assert coupling_feasible([0], [0.5], 0.5)


def test_coupling_length_mismatch():
    with pytest.raises(ValueError):
        coupling_feasible([0, 1], [0], 0.1)


def test_slack_capacity_rounding():
    assert slack_capacity(0.3, 10) == 3
    assert slack_capacity(0.7, 10) == 7
    assert slack_capacity(0.29, 10) == 2


def _matching_oracle(x, y, eps):
    # maximum bipartite matching on the closeness graph; the remaining
    # points must fit in the slack
    adj = csr_matrix((np.abs(np.subtract.outer(x, y)) <= eps).astype(np.int8))
    matched = int(np.sum(maximum_bipartite_matching(adj, perm_type="column") >= 0))
    return matched >= len(x) - slack_capacity(eps, len(x))


@settings(max_examples=300)
@given(
    st.integers(1, 12).flatmap(
        lambda n: st.tuples(
            st.lists(st.floats(-3, 3), min_size=n, max_size=n),
            st.lists(st.floats(-3, 3), min_size=n, max_size=n),
            st.floats(0, 1),
        )
    )
)
def test_coupling_matches_matching_oracle(case):
    x, y, eps = case
    assert coupling_feasible(x, y, eps) == _matching_oracle(np.array(x), np.array(y), eps)


def test_coupling_monotone_in_eps():
    rng = np.random.default_rng(5)
    for _ in range(50):
        x, y = rng.normal(size=8), rng.normal(size=8)
        flags = [coupling_feasible(x, y, e) for e in np.linspace(0, 1, 21)]
        assert flags == sorted(flags)
        assert flags[-1]


def test_integrate_vectorized_matches_scalar():
    f = lambda x: np.abs(np.sin(3 * x)) * np.maximum(1.0, np.abs(x) ** 0.5)
    a = integrate(f, (-2, 5), 1e-10, breakpoints=[0.0, 1.0], vectorized=True)
    b = integrate(lambda x: float(f(x)), (-2, 5), 1e-10, breakpoints=[0.0, 1.0])
    assert a == b
