import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bernstein.spectral import (CRAMER_K, DimensionError, HarmonicSpec, MultiIndex,
                                SpectrumTruncation, eigenvalue, gibbs_weights, grid_eigensystem,
                                hermite_function, hermite_functions, hermite_product,
                                partition_function, purity_gibbs_closed, truncation_for)

# high-precision references (mpmath, 25 digits)
PI_M14 = 0.75112554446494248
H0_LAM4 = 1.0622519320271969
Z1 = 0.95951737566747186
Z2 = 0.92067359420779232


def test_eigenvalue_examples():
    assert eigenvalue(MultiIndex((0,)), HarmonicSpec(1, 1.0)) == 0.5
    assert eigenvalue(MultiIndex((1, 2)), HarmonicSpec(2, 0.5)) == 2.0
    assert eigenvalue(MultiIndex((0, 0, 0)), HarmonicSpec(3, 2.0)) == 3.0


def test_eigenvalue_dimension_mismatch():
    with pytest.raises(DimensionError):
        eigenvalue(MultiIndex((1, 2)), HarmonicSpec(1, 1.0))


def test_invalid_types():
    with pytest.raises(ValueError):
        MultiIndex((1, -1))
    with pytest.raises(ValueError):
        HarmonicSpec(1, -1.0)
    with pytest.raises(ValueError):
        HarmonicSpec(0, 1.0)
    with pytest.raises(ValueError):
        HarmonicSpec(1, 1.0, 0.0)


def test_hermite_function_values():
    assert hermite_function(0, 1.0, 0.0) == pytest.approx(PI_M14, rel=1e-15)
    assert hermite_function(1, 1.0, 0.0) == 0.0
    assert hermite_function(0, 4.0, 0.0) == pytest.approx(H0_LAM4, rel=1e-15)


def test_hermite_extreme_arguments_underflow_to_zero():
    x = np.array([-1e3, -60.0, 60.0, 1e3, 1e200])
    with np.errstate(over="ignore"):
        vals = hermite_functions(300, x)
    assert np.all(np.isfinite(vals))
    assert np.all(vals[:, [0, 3, 4]] == 0)


def test_hermite_recurrence_matches_mpmath():
    xs = np.linspace(-10, 10, 41)
    vals = hermite_functions(51, xs)
    with mpmath.workdps(40):
        worst = _max_hermite_error(vals, xs)
    assert worst < 1e-10


def _max_hermite_error(vals, xs):
    worst = 0.0
    for m in range(51):
        norm = 1 / mpmath.sqrt(2 ** m * mpmath.factorial(m) * mpmath.sqrt(mpmath.pi))
        for i, x in enumerate(xs):
            ref = float(norm * mpmath.hermite(m, x) * mpmath.exp(-mpmath.mpf(x) ** 2 / 2))
            # relative error with a floor near roots, where relative error is meaningless
            scale = max(abs(ref), 1e-3 * float(np.abs(vals[m]).max()))
            worst = max(worst, abs(vals[m, i] - ref) / scale)
    return worst


def test_hermite_orthonormal_under_quadrature():
    x, w = np.polynomial.hermite.hermgauss(120)
    # Gauss-Hermite integrates h_m h_n e^{x^2} e^{-x^2} exactly for m + n < 240
    H = hermite_functions(40, x) * np.exp(x ** 2 / 2)
    G = (H * w) @ H.T
    assert np.abs(G - np.eye(40)).max() < 1e-12


def test_hermite_product_factorizes():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(7, 2))
    m = MultiIndex((2, 3))
    ref = hermite_function(2, 0.7, x[:, 0]) * hermite_function(3, 0.7, x[:, 1])
    assert np.allclose(hermite_product(m, 0.7, x), ref, rtol=1e-15, atol=0)


def test_partition_closed_values():
    assert partition_function(HarmonicSpec(1, 1.0), 1.0) == pytest.approx(Z1, rel=1e-14)
    assert partition_function(HarmonicSpec(2, 1.0), 1.0) == pytest.approx(Z2, rel=1e-14)
    assert partition_function(HarmonicSpec(1, 1.0, 100.0), 60.0) == pytest.approx(
        math.exp(-30) / (1 - math.exp(-60)), rel=1e-13)


def test_partition_rejects_nonpositive_time():
    with pytest.raises(ValueError):
        partition_function(HarmonicSpec(1, 1.0), 0.0)


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("lt", [0.1, 0.5, 1.0, 2.5, 5.0])
def test_partition_series_matches_closed(d, lt):
    spec = HarmonicSpec(d, 1.0, lt)
    zc = partition_function(spec, lt)
    zs = partition_function(spec, lt, method="series")
    assert abs(zs - zc) / zc < 1e-10


def test_gibbs_weights_values():
    spec = HarmonicSpec(1, 1.0, 1.0)
    w, renorm = gibbs_weights(spec)
    p0 = w[MultiIndex((0,))]
    p1 = w[MultiIndex((1,))]
    assert p0 == pytest.approx(1 - math.exp(-1), rel=1e-11)
    assert p1 / p0 == pytest.approx(math.exp(-1), rel=1e-14)
    assert math.fsum(w.values()) == pytest.approx(1.0, abs=1e-15)
    assert abs(renorm - 1) < 1e-11


def test_truncation_tail_below_tolerance():
    spec = HarmonicSpec(2, 0.7, 1.3)
    trunc = truncation_for(spec, spec.T, tol=1e-12)
    w, renorm = gibbs_weights(spec, trunc)
    assert abs(1 / renorm - 1) < 1e-12
    assert all(m.components[0] < trunc.max_degree for m in w)


def test_truncation_indices():
    idx = SpectrumTruncation(3).indices(2)
    assert len(idx) == 9 and MultiIndex((2, 2)) in idx


def test_purity_closed_form():
    assert purity_gibbs_closed(HarmonicSpec(1, 1.0, 1.0)) == pytest.approx(0.46211715726000976,
                                                                          rel=1e-14)


def test_cramer_charlier_bound_lambda_one():
    # with lam = 1 the quarter-power and square-root bounds coincide: pi^(-1/2) k^2
    x = np.linspace(-15, 15, 3001)
    H = hermite_functions(200, x)
    sup = np.abs(H).max(axis=1)
    assert np.all(sup ** 2 <= math.pi ** -0.5 * CRAMER_K ** 2)


def test_grid_eigensystem_harmonic_spectrum():
    es = grid_eigensystem(lambda x: 0.5 * x ** 2, L=12.0, n_points=2000, M=10)
    assert np.abs(es.eigenvalues - (np.arange(10) + 0.5)).max() < 1e-6
    x = np.linspace(-6, 6, 121)
    assert np.abs(es.evaluate(0, x) - hermite_function(0, 1.0, x)).max() < 1e-6
    assert np.abs(es.gram() - np.eye(10)).max() < 1e-8


def test_grid_eigensystem_parity_alternates():
    es = grid_eigensystem(lambda x: 0.5 * x ** 2 + 0.1 * x ** 4, L=8.0, n_points=1200, M=6)
    x = np.linspace(0.3, 3.0, 10)
    for i in range(6):
        sign = 1 if i % 2 == 0 else -1
        assert np.allclose(es.evaluate(i, -x), sign * es.evaluate(i, x), atol=1e-9)
    assert np.all(np.diff(es.eigenvalues) > 0)


def test_grid_eigensystem_second_order_option():
    es = grid_eigensystem(lambda x: 0.5 * x ** 2, L=10.0, n_points=2000, M=4, order=2)
    assert np.abs(es.eigenvalues - (np.arange(4) + 0.5)).max() < 1e-4


def test_grid_eigensystem_errors():
    with pytest.raises(ValueError):
        grid_eigensystem(lambda x: 0.5 * x ** 2, L=5.0, n_points=20, M=10)
    with pytest.raises(ValueError):
        grid_eigensystem(lambda x: -1e15 * np.ones_like(x), L=5.0, n_points=200, M=4)
    with pytest.raises(ValueError):
        grid_eigensystem(lambda x: np.full_like(x, np.nan), L=5.0, n_points=200, M=4)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 20), min_size=1, max_size=3),
       st.floats(0.05, 5.0), st.integers(1, 3))
def test_eigenvalue_is_linear_in_degree(components, lam, _):
    m = MultiIndex(tuple(components))
    spec = HarmonicSpec(len(components), lam)
    assert eigenvalue(m, spec) == pytest.approx((sum(components) + len(components) / 2) * lam,
                                                rel=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(0.1, 3.0), st.integers(1, 3))
def test_partition_is_power_of_one_dimensional(lt, lam, d):
    z1 = partition_function(HarmonicSpec(1, lam), lt / lam)
    zd = partition_function(HarmonicSpec(d, lam), lt / lam)
    assert zd == pytest.approx(z1 ** d, rel=1e-13)
