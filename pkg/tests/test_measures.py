import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from volterra_mv.errors import DimensionMismatch, DomainError, GridMismatch, SizeMismatch
from volterra_mv.measures import EmpiricalMeasure, moment, path_wasserstein_bound_check, wasserstein


def brute_force(x, y, eta):
    x = np.asarray(x, float).reshape(len(x), -1)
    y = np.asarray(y, float).reshape(len(y), -1)
    best = min(np.mean(np.linalg.norm(x - y[list(p)], axis=1) ** eta) for p in itertools.permutations(range(len(y))))
    return best ** (1 / eta)


def test_moment_examples():
    assert moment(EmpiricalMeasure([0.0, 2.0]), 2) == pytest.approx(np.sqrt(2), rel=1e-15)
    assert moment(EmpiricalMeasure.zero(3), 5) == 0.0
    assert moment(EmpiricalMeasure([[3.0, 4.0]]), 1) == pytest.approx(5.0)


def test_moment_equals_distance_to_dirac():
    mu = EmpiricalMeasure(np.random.default_rng(0).normal(size=(7, 2)))
    nu = EmpiricalMeasure(np.zeros((7, 2)))
    assert moment(mu, 3) == pytest.approx(wasserstein(mu, nu, 3), rel=1e-12)


def test_moment_large_eta_no_overflow():
    mu = EmpiricalMeasure([1e3, 2e3])
    assert np.isfinite(moment(mu, 200))


def test_measure_invariants():
    with pytest.raises(DomainError):
        EmpiricalMeasure(np.zeros((0, 1)))
    with pytest.raises(DomainError):
        EmpiricalMeasure([1.0, np.nan])
    with pytest.raises(DomainError):
        moment(EmpiricalMeasure([1.0]), 0.5)
    mu = EmpiricalMeasure([1.0, 2.0])
    with pytest.raises(ValueError):
        mu.atoms[0, 0] = 5.0


def test_wasserstein_examples():
    assert wasserstein(EmpiricalMeasure([0.0, 1.0]), EmpiricalMeasure([0.0, 3.0]), 1) == pytest.approx(1.0)
    mu = EmpiricalMeasure(np.random.default_rng(1).normal(size=(6, 3)))
    assert wasserstein(mu, mu, 2) == 0.0
    x = [(0, 0), (1, 0), (0, 1)]
    y = [(1, 1), (2, 0), (0, 2)]
    assert wasserstein(EmpiricalMeasure(x), EmpiricalMeasure(y), 2) == pytest.approx(brute_force(x, y, 2), rel=1e-12)


def test_wasserstein_errors():
    with pytest.raises(DimensionMismatch):
        wasserstein(EmpiricalMeasure(np.zeros((3, 1))), EmpiricalMeasure(np.zeros((3, 2))), 2)
    with pytest.raises(SizeMismatch):
        wasserstein(EmpiricalMeasure(np.zeros(3)), EmpiricalMeasure(np.zeros(4)), 2)
    with pytest.raises(DomainError):
        wasserstein(EmpiricalMeasure(np.zeros(3)), EmpiricalMeasure(np.zeros(3)), 0.5)


def test_divisible_sizes_replicate_atoms():
    a = np.array([0.0, 1.0])
    assert wasserstein(a, np.repeat(a, 3), 2) == 0.0
    assert wasserstein(a, np.array([0.0, 0.0, 1.0, 1.0]) + 0.5, 1) == pytest.approx(0.5)


def test_exact_flag_and_sliced_properties():
    rs = np.random.default_rng(2)
    x, y = rs.normal(size=(600, 2)), rs.normal(size=(600, 2)) + 0.3
    v, exact = wasserstein(x, y, 2, return_exact=True)
    assert not exact and v > 0
    assert wasserstein(x, x, 2) == 0.0
    assert wasserstein(y, x, 2) == pytest.approx(v, rel=1e-12)
    assert wasserstein(x[:50], y[:50], 2, return_exact=True)[1]


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.sampled_from([1.0, 2.0, 4.0]), st.data())
def test_sorted_matches_brute_force(n, eta, data):
    x = data.draw(arrays(float, n, elements=st.floats(-10, 10)))
    y = data.draw(arrays(float, n, elements=st.floats(-10, 10)))
    assert wasserstein(x, y, eta) == pytest.approx(brute_force(x, y, eta), rel=1e-10, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(2, 3), st.data())
def test_assignment_matches_brute_force(n, d, data):
    x = data.draw(arrays(float, (n, d), elements=st.floats(-5, 5)))
    y = data.draw(arrays(float, (n, d), elements=st.floats(-5, 5)))
    assert wasserstein(x, y, 2) == pytest.approx(brute_force(x, y, 2), rel=1e-10, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 3), st.sampled_from([1.0, 2.0, 3.0]), st.data())
def test_metric_axioms(n, d, eta, data):
    pts = st.floats(-5, 5)
    x = data.draw(arrays(float, (n, d), elements=pts))
    y = data.draw(arrays(float, (n, d), elements=pts))
    z = data.draw(arrays(float, (n, d), elements=pts))
    dxy, dyx = wasserstein(x, y, eta), wasserstein(y, x, eta)
    assert dxy == pytest.approx(dyx, rel=1e-10, abs=1e-12)
    assert wasserstein(x, x[::-1], eta) == pytest.approx(0.0, abs=1e-12)
    assert wasserstein(x, z, eta) <= dxy + wasserstein(y, z, eta) + 1e-9


@settings(max_examples=40, deadline=None)
@given(arrays(float, (5, 2), elements=st.floats(-100, 100)), st.floats(1, 4), st.floats(0, 4))
def test_moment_monotone_in_eta(atoms, eta, extra):
    mu = EmpiricalMeasure(atoms)
    assert moment(mu, eta) <= moment(mu, eta + extra) * (1 + 1e-12) + 1e-300


def test_path_bound_identical_and_shifted():
    rs = np.random.default_rng(3)
    a = rs.normal(size=(20, 5, 2))
    rep = path_wasserstein_bound_check(a, a, 2, np.linspace(0, 1, 5))
    assert rep.holds and rep.pathwise_bound == 0.0 and np.all(rep.marginal == 0.0)
    c = np.array([0.3, -0.4])
    rep = path_wasserstein_bound_check(a, a + c, 2, np.linspace(0, 1, 5))
    assert rep.holds
    np.testing.assert_allclose(rep.marginal, 0.5, rtol=1e-12)
    assert rep.pathwise_bound == pytest.approx(0.5, rel=1e-12)


def test_path_bound_independent_brownian():
    rs = np.random.default_rng(4)
    dt = 1 / 31
    a = np.concatenate([np.zeros((64, 1)), np.cumsum(rs.normal(scale=np.sqrt(dt), size=(64, 31)), axis=1)], axis=1)
    b = np.concatenate([np.zeros((64, 1)), np.cumsum(rs.normal(scale=np.sqrt(dt), size=(64, 31)), axis=1)], axis=1)
    rep = path_wasserstein_bound_check(a, b, 2, np.linspace(0, 1, 32))
    assert rep.holds and np.all(rep.marginal <= rep.pathwise_bound + 1e-12)


def test_path_bound_grid_mismatch():
    a = np.zeros((4, 3))
    with pytest.raises(GridMismatch):
        path_wasserstein_bound_check(a, a, 2, np.linspace(0, 1, 4))
    with pytest.raises(GridMismatch):
        path_wasserstein_bound_check(a, a, 2, np.linspace(0, 1, 3), times_b=np.linspace(0, 2, 3))
