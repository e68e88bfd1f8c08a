import math
from itertools import permutations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy import special

from metatree import BernoulliBeta, DataValidationError, LeafState
from metatree.leaf_models import absorb, log_marginal, sequential_log_predictive, spec_from_dict


def quad_marginal(a, b, c0, c1):
    """Integral of t**c1 (1-t)**c0 against Beta(a, b), endpoint singularities handled by the weight."""
    val, _ = integrate.quad(lambda t: t**c1 * (1 - t) ** c0, 0, 1, weight="alg", wvar=(a - 1, b - 1), epsabs=1e-14)
    return val / special.beta(a, b)


@pytest.mark.parametrize(
    "ys, expected",
    [
        ([], 0.0),
        ([1], math.log(1 / 2)),
        # Polya urn: 1/2 * 1/3
        ([1, 0], math.log(1 / 6)),
    ],
)
def test_log_marginal_examples(ys, expected):
    assert log_marginal(BernoulliBeta(1, 1), ys) == pytest.approx(expected, abs=1e-14)


def test_empty_marginal_is_exactly_zero():
    assert BernoulliBeta(0.7, 2.5).log_marginal([]) == 0.0
    assert LeafState(BernoulliBeta(0.7, 2.5), (3, 4)).log_marginal([]) == 0.0


def test_one_zero_marginal_matches_quadrature():
    assert math.exp(log_marginal(BernoulliBeta(1, 1), [1, 0])) == pytest.approx(quad_marginal(1, 1, 1, 1), abs=1e-12)


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("b", [0.5, 1.0, 2.0])
def test_log_marginal_matches_quadrature(a, b):
    spec = BernoulliBeta(a, b)
    for total in range(11):
        for c1 in range(total + 1):
            c0 = total - c1
            got = spec.log_marginal_stats((c0, c1))
            assert got == pytest.approx(math.log(quad_marginal(a, b, c0, c1)), abs=1e-8)


@pytest.mark.parametrize(
    "spec, seen, y, expected",
    [
        (BernoulliBeta(1, 1), [], 1, 1 / 2),
        (BernoulliBeta(1, 1), [1], 1, 2 / 3),
        (BernoulliBeta(2, 3), [], 0, 3 / 5),
    ],
)
def test_sequential_log_predictive(spec, seen, y, expected):
    state = LeafState(spec).absorb(seen)
    assert sequential_log_predictive(state, y) == pytest.approx(math.log(expected), abs=1e-14)


def test_predictive_matches_quadrature():
    # (alpha + c1) / (alpha + beta + n) against a direct posterior-mean integral
    a, b, c0, c1 = 1.0, 1.0, 0, 1
    num = quad_marginal(a, b, c0, c1 + 1)
    den = quad_marginal(a, b, c0, c1)
    assert LeafState(BernoulliBeta(a, b), (c0, c1)).predictive() == pytest.approx(num / den, abs=1e-12)


def test_absorb_counts():
    s = absorb(LeafState(BernoulliBeta(1, 1)), [1, 1, 0])
    assert s.posterior_hyperparameters() == {"alpha": 3.0, "beta": 2.0}
    assert s.n == 3


def test_absorb_empty_is_identity():
    s = LeafState(BernoulliBeta(1.5, 2), (2, 1))
    assert s.absorb([]) == s


def test_absorb_chain_equals_batch():
    s = LeafState(BernoulliBeta(1, 1))
    assert s.absorb([1, 0]).absorb([1, 1]) == s.absorb([1, 0, 1, 1])


ys_strategy = st.lists(st.integers(0, 1), max_size=25)
hyper = st.floats(0.1, 10.0)


@settings(max_examples=200, deadline=None)
@given(ys=ys_strategy, a=hyper, b=hyper)
def test_chain_rule(ys, a, b):
    spec = BernoulliBeta(a, b)
    state = LeafState(spec)
    total = 0.0
    for y in ys:
        total += sequential_log_predictive(state, y)
        state = absorb(state, [y])
    assert total == pytest.approx(log_marginal(spec, ys), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(ys=st.lists(st.integers(0, 1), max_size=6), a=hyper, b=hyper)
def test_exchangeable(ys, a, b):
    spec = BernoulliBeta(a, b)
    ref = log_marginal(spec, ys)
    for p in set(permutations(ys)):
        assert log_marginal(spec, p) == ref
        assert LeafState(spec).absorb(p) == LeafState(spec).absorb(ys)


def test_posterior_marginal_is_conditional():
    spec = BernoulliBeta(0.5, 2.0)
    s = LeafState(spec).absorb([1, 0, 0])
    assert s.log_marginal([1, 1]) == pytest.approx(spec.log_marginal([1, 0, 0, 1, 1]) - spec.log_marginal([1, 0, 0]))


@pytest.mark.parametrize("bad", [2, -1, 0.5, "a", None])
def test_invalid_y(bad):
    with pytest.raises(DataValidationError):
        BernoulliBeta().log_marginal([1, bad])
    with pytest.raises(DataValidationError):
        LeafState(BernoulliBeta()).log_predictive(bad)


@pytest.mark.parametrize("a, b", [(0, 1), (1, -2), (float("nan"), 1), (1, float("inf"))])
def test_invalid_hyperparameters(a, b):
    with pytest.raises(ValueError):
        BernoulliBeta(a, b)


def test_spec_dict_round_trip():
    spec = BernoulliBeta(0.1 + 0.2, 1 / 3)
    assert spec_from_dict(spec.to_dict()) == spec
    with pytest.raises(ValueError):
        spec_from_dict({"family": "gaussian"})
