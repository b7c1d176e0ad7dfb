import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_rho, dense_s1
from siws import (
    ConvergenceError,
    FullSystem,
    assemble_full,
    metzler_s1,
    metzler_sign,
    reproduction_number,
    s1_shifted,
    spectral_radius,
)
from siws.analysis import homogeneous_params
from siws.scenario import generate_random


def test_two_cycle_radius_one():
    d = spectral_radius([[0, 2], [0.5, 0]])
    assert d.rho == pytest.approx(1.0, abs=1e-12)
    assert np.all(d.right > 0) and np.all(d.left > 0)


def test_identity():
    d = spectral_radius(np.eye(3))
    assert d.rho == pytest.approx(1.0)
    np.testing.assert_allclose(d.right, [1 / 3] * 3)
    np.testing.assert_allclose(d.left, [1 / 3] * 3)


def test_two_by_two_by_hand():
    d = spectral_radius([[2, 1], [1, 2]])
    assert d.rho == pytest.approx(3.0)
    np.testing.assert_allclose(d.right, [0.5, 0.5])
    assert d.right.sum() == pytest.approx(1.0)


def test_bad_inputs():
    with pytest.raises(ValueError, match="nonnegative"):
        spectral_radius([[0, -1], [1, 0]])
    with pytest.raises(ValueError, match="square"):
        spectral_radius(np.ones((2, 3)))


def test_iteration_cap_reported():
    rng = np.random.default_rng(0)
    with pytest.raises(ConvergenceError):
        spectral_radius(rng.random((20, 20)), maxit=2)


def test_reducible_input_still_converges():
    assert spectral_radius([[1, 1], [0, 0.5]], left=False).rho == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 50), st.integers(0, 2**31 - 1))
def test_left_right_residuals(N, seed):
    rng = np.random.default_rng(seed)
    M = np.where(rng.random((N, N)) < 0.4, rng.random((N, N)), 0.0)
    M[np.arange(N), (np.arange(N) + 1) % N] += 0.5  # cycle keeps it irreducible
    d = spectral_radius(M)
    assert np.max(np.abs(M @ d.right - d.rho * d.right)) < 1e-10
    assert np.max(np.abs(d.left @ M - d.rho * d.left)) < 1e-10
    assert d.rho == pytest.approx(dense_rho(M), rel=1e-9)
    assert np.all(d.right > 0) and np.all(d.left > 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**31 - 1))
def test_perron_comparison(N, seed):
    rng = np.random.default_rng(seed)
    M = rng.random((N, N)) + 0.01
    x = rng.random(N) + 0.1
    mu = float(np.max((M @ x) / x)) * (1 + 1e-6)
    # M x << mu x element-wise
    assert np.all(M @ x < mu * x)
    assert spectral_radius(M, left=False).rho < mu


# -- reproduction number ------------------------------------------------------


def test_r0_unit_healing_is_rho_bf():
    sf = generate_random(5, 2, 1, 0.01, 3, "supercritical")
    full = assemble_full(sf.params[0], 0.01)
    unit = FullSystem(full.B_f, np.ones(full.size), 0.01, full.n)
    assert reproduction_number(unit) == pytest.approx(dense_rho(full.B_f), rel=1e-10)


def test_r0_half():
    full = FullSystem(np.array([[0.0, 1], [1, 0]]), np.array([2.0, 2.0]), 0.1, 1)
    assert reproduction_number(full) == pytest.approx(0.5)


def test_r0_homogeneous():
    p = homogeneous_params(2, 1, 0.3, 0.2, 0.1, 0.5)
    full = assemble_full(p, 0.01)
    M = np.array([[1.5, 1.5, 1.5], [1.5, 1.5, 1.5], [0.2, 0.2, 0]])
    np.testing.assert_allclose(full.B_f / full.D_f[:, None], M)
    r0 = reproduction_number(full)
    assert r0 > 1
    assert r0 == pytest.approx(dense_rho(M), rel=1e-12)


def test_r0_zero_healing():
    with pytest.raises(ValueError, match="D_f"):
        reproduction_number(FullSystem(np.ones((2, 2)), np.array([1.0, 0.0]), 0.1, 1))


# -- metzler sign ---------------------------------------------------------------


def test_metzler_sign_examples():
    N = np.array([[0.0, 1], [1, 0]])
    assert metzler_sign(-np.diag([1.0, 2.0]), N) == "negative"
    eig = np.linalg.eigvals(-np.diag([1.0, 2.0]) + N)
    np.testing.assert_allclose(sorted(eig.real), sorted([(-3 - 5**0.5) / 2, (-3 + 5**0.5) / 2]))
    assert metzler_sign(-np.eye(2), np.eye(2)) == "zero"
    assert metzler_sign(-np.eye(2), 2 * np.eye(2)) == "positive"


def test_metzler_sign_errors():
    with pytest.raises(ValueError, match="diagonal"):
        metzler_sign([[-1, 0.1], [0, -1]], np.eye(2))
    with pytest.raises(ValueError, match="negative"):
        metzler_sign(np.diag([-1.0, 0.0]), np.eye(2))


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 20), st.integers(0, 2**31 - 1))
def test_metzler_sign_matches_dense(N, seed):
    rng = np.random.default_rng(seed)
    L = -(rng.random(N) + 0.05)
    M = rng.random((N, N)) * rng.uniform(0.01, 3.0 / N)
    s = dense_s1(np.diag(L) + M)
    if abs(s) < 1e-6:
        return
    assert metzler_sign(L, M) == ("positive" if s > 0 else "negative")


def test_metzler_s1_dense():
    rng = np.random.default_rng(4)
    A = rng.random((6, 6)) - 3 * np.eye(6)
    assert metzler_s1(A) == pytest.approx(dense_s1(A), abs=1e-10)
    with pytest.raises(ValueError):
        metzler_s1([[0, -1], [1, 0]])


# -- s1 of the shifted matrix ---------------------------------------------------


def test_s1_h_zero_is_one(homog):
    assert s1_shifted(assemble_full(homog, 0.0)) == 1.0


def test_s1_diagonal():
    full = FullSystem(np.zeros((3, 3)), np.ones(3), 0.5, 2)
    assert s1_shifted(full) == pytest.approx(0.5)


def test_s1_rejects_negative_shift():
    full = FullSystem(np.zeros((2, 2)), np.array([30.0, 1.0]), 0.1, 1)
    with pytest.raises(ValueError):
        s1_shifted(full)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["subcritical", "supercritical", "mixed"]))
def test_s1_matches_dense_and_threshold(seed, target):
    sf = generate_random(6, 2, 1, 0.01, seed, target)
    full = assemble_full(sf.params[0], sf.h)
    s1 = s1_shifted(full)
    M = np.eye(full.size) - full.h * np.diag(full.D_f) + full.h * full.B_f
    assert s1 == pytest.approx(dense_rho(M), abs=1e-12)
    assert (s1 > 1) == (reproduction_number(full) > 1)


def test_submatrix_monotonicity(super_scenarios, sub_scenarios):
    for sf in super_scenarios + sub_scenarios:
        full = assemble_full(sf.params[0], sf.h)
        A = full.B_f / full.D_f[:, None]
        assert spectral_radius(A[: full.n, : full.n], left=False).rho < reproduction_number(full)
