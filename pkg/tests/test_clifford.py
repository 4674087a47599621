import numpy as np
import pytest
import sympy as sp

import nullform.clifford as cl
from nullform import Direction, NullFormCoeffs, gamma, gamma5, inner, null_form, projector
from nullform.symmetry import VectorFieldId, spacetime_family

I4 = np.eye(4)


def test_gamma0_block_form():
    expect = np.block([[np.zeros((2, 2)), np.eye(2)], [np.eye(2), np.zeros((2, 2))]])
    assert np.array_equal(gamma(0).floating, expect)


def test_gamma0_squared_is_identity():
    sq = gamma(0) @ gamma(0)
    assert (sq - cl.identity4()).is_exactly_zero()


@pytest.mark.parametrize("mu", range(4))
@pytest.mark.parametrize("nu", range(4))
def test_anticommutation_exact(mu, nu):
    assert cl.anticommutator_defect(mu, nu).is_exactly_zero()


def test_gamma_index_range():
    with pytest.raises(IndexError):
        gamma(4)


def test_exact_entries_are_half_integer_gaussian_rationals():
    # entries (a + b i)/2^k with k in {0, 1}
    mats = [gamma(mu) for mu in range(4)] + [gamma5(), projector((0, 0, 1))]
    for m in mats:
        for entry in m.exact:
            re, im = entry.as_real_imag()
            for part in (re, im):
                q = sp.Rational(part)
                assert q.q in (1, 2)


def test_float_backing_matches_exact():
    for mu in range(4):
        assert gamma(mu).backing_gap() == 0.0
    assert gamma5().backing_gap() == 0.0


def test_gamma5_diagonal():
    assert np.array_equal(gamma5().floating, np.diag([1, 1, -1, -1]).astype(complex))


def test_gamma5_squared():
    g5 = gamma5()
    assert ((g5 @ g5) - cl.identity4()).is_exactly_zero()


@pytest.mark.parametrize("mu", range(4))
def test_gamma5_anticommutes(mu):
    g5 = gamma5()
    assert ((g5 @ gamma(mu)) + (gamma(mu) @ g5)).is_exactly_zero()


def test_hermiticity_report_all_zero():
    rep = cl.hermiticity_report()
    assert [mu for mu, _ in rep] == [0, 1, 2, 3]
    assert all(d == 0.0 for _, d in rep)


def test_projector_e3():
    P = projector((0, 0, 1))
    assert np.allclose(P.floating, np.diag([0, 1, 1, 0]), atol=0)
    assert P.exact is not None


def test_projector_exact_rational_direction():
    from fractions import Fraction
    P = projector((Fraction(3, 5), Fraction(4, 5), 0))
    assert P.exact is not None
    assert ((P @ P) - P).is_exactly_zero()


def test_projector_rejects_non_unit():
    with pytest.raises(ValueError):
        projector((1.0, 1.0, 0.0))


def test_projector_identities_random(rng):
    worst_sum = worst_idem = worst_orth = 0.0
    for _ in range(1000):
        w = rng.standard_normal(3)
        w /= np.linalg.norm(w)
        P = projector(tuple(w)).floating
        Q = projector(tuple(-w)).floating
        worst_sum = max(worst_sum, np.abs(P + Q - I4).max())
        worst_idem = max(worst_idem, np.abs(P @ P - P).max(), np.abs(Q @ Q - Q).max())
        worst_orth = max(worst_orth, np.abs(P @ Q).max())
    assert worst_sum <= 1e-14
    assert worst_idem <= 1e-14
    assert worst_orth <= 1e-14


def test_direction_normalization():
    with pytest.raises(ValueError):
        Direction(1.0, 1.0, 0.0)
    d = Direction.from_array([2.0, 0.0, 0.0])
    assert d.w1 == 1.0


def test_inner_product_convention():
    e0 = np.array([1, 0, 0, 0], complex)
    assert inner(e0, e0) == 1
    a = np.array([1, 2j, 0, 1], complex)
    b = np.array([0.5, 1, 1j, 0], complex)
    assert np.isclose(inner(1j * a, b), -1j * inner(a, b))
    v = np.array([1, 0, 1, 0], complex)
    assert inner(v, v) == 2


def test_null_form_on_simple_vector(rng):
    co = NullFormCoeffs(rng.standard_normal(4) + 1j * rng.standard_normal(4),
                        rng.standard_normal(4) + 1j * rng.standard_normal(4))
    X = np.array([1, 0, 1, 0], complex)
    # <g0 X, X> = 2 and <g0 g5 X, X> = 0 for this vector
    assert np.allclose(null_form(co, X, X), 2 * co.e1, atol=1e-15)
    zero = np.zeros(4, complex)
    assert np.array_equal(null_form(co, zero, zero), zero)


def test_null_form_vanishes_on_projector_range(rng):
    co = NullFormCoeffs(rng.standard_normal(4) + 1j * rng.standard_normal(4),
                        rng.standard_normal(4) + 1j * rng.standard_normal(4))
    worst = 0.0
    for _ in range(1000):
        w = rng.standard_normal(3)
        w /= np.linalg.norm(w)
        Z = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        X = projector(tuple(w)).floating @ Z
        val = np.max(np.abs(null_form(co, X, X))) / float(np.vdot(Z, Z).real)
        worst = max(worst, val)
    assert worst <= 1e-13


def test_null_form_bilinear_over_reals(rng):
    co = NullFormCoeffs([1, 0, 0.5, 0], [0, 1j, 0, 0.2])
    X = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    Y = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    assert np.allclose(null_form(co, 2.0 * X, Y), 2.0 * null_form(co, X, Y))
    assert np.allclose(null_form(co, X, 3.0 * Y), 3.0 * null_form(co, X, Y))


def test_dispersion_relation(rng):
    # (k_i g0 g^i)^2 = |k|^2 I
    for _ in range(100):
        k = rng.standard_normal(3)
        m = sum(k[i] * cl.alpha(i + 1).floating for i in range(3))
        k2 = float(np.dot(k, k))
        assert np.abs(m @ m - k2 * I4).max() <= 1e-13 * k2


def test_null_form_commutator_translation():
    co = NullFormCoeffs([1, 0.5, 0, 0.2j], [0.1, 0, 1, 0])
    vf = VectorFieldId("spacetime", "translation", (0,))
    out, res = cl.null_form_commutator(co, vf)
    assert res == 0.0
    assert np.abs(out.e1).max() <= 1e-14 and np.abs(out.e2).max() <= 1e-14


@pytest.mark.parametrize("vf", spacetime_family(), ids=lambda v: v.label())
def test_null_form_commutator_residuals(vf, rng):
    co = NullFormCoeffs(rng.standard_normal(4) + 1j * rng.standard_normal(4),
                        rng.standard_normal(4) + 1j * rng.standard_normal(4))
    out, res = cl.null_form_commutator(co, vf)
    assert res < 1e-12
    # rotations and boosts act by their matrix part on the coefficient pair
    if vf.kind in ("rotation", "boost"):
        A = cl._matrix_part(vf)
        assert np.allclose(out.e1, A @ co.e1, atol=1e-12)
        assert np.allclose(out.e2, A @ co.e2, atol=1e-12)
