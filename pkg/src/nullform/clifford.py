"""Gamma-matrix algebra in the Weyl representation, with exact and float backings.

Everything here is pointwise spinor algebra on C^4: the four gamma matrices
for signature (-,+,+,+), gamma5, the direction projectors P(omega), and the
bilinear null form built from a constant coefficient pair (e1, e2).  Exact
arithmetic (Gaussian rationals via sympy) backs the identity checks; float64
copies back the field-level numerics.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

import numpy as np
import sympy as sp

_METRIC = (-1, 1, 1, 1)  # eta^{mu mu}, signature (-,+,+,+)

_I2 = sp.eye(2)
_Z2 = sp.zeros(2, 2)
_PAULI = (
    sp.Matrix([[0, 1], [1, 0]]),
    sp.Matrix([[0, -sp.I], [sp.I, 0]]),
    sp.Matrix([[1, 0], [0, -1]]),
)


def _block(a, b, c, d) -> sp.Matrix:
    return sp.Matrix(sp.BlockMatrix([[a, b], [c, d]]))


_GAMMA_EXACT = (
    _block(_Z2, _I2, _I2, _Z2),
    _block(_Z2, _PAULI[0], -_PAULI[0], _Z2),
    _block(_Z2, _PAULI[1], -_PAULI[1], _Z2),
    _block(_Z2, _PAULI[2], -_PAULI[2], _Z2),
)


def _to_float(m: sp.Matrix) -> np.ndarray:
    return np.array(m.evalf(20), dtype=np.complex128)


@dataclass(frozen=True)
class Matrix4C:
    """A 4x4 complex matrix with an optional exact (Gaussian-rational) backing."""

    floating: np.ndarray
    exact: sp.Matrix | None = None

    def __post_init__(self):
        object.__setattr__(self, "floating", np.asarray(self.floating, dtype=np.complex128))
        if self.floating.shape != (4, 4):
            raise ValueError("Matrix4C must be 4x4")

    @classmethod
    def from_exact(cls, m: sp.Matrix) -> "Matrix4C":
        return cls(floating=_to_float(m), exact=sp.ImmutableMatrix(m))

    def __matmul__(self, other: "Matrix4C") -> "Matrix4C":
        ex = None
        if self.exact is not None and other.exact is not None:
            ex = sp.ImmutableMatrix((self.exact * other.exact).expand())
        return Matrix4C(self.floating @ other.floating, ex)

    def __add__(self, other: "Matrix4C") -> "Matrix4C":
        ex = None
        if self.exact is not None and other.exact is not None:
            ex = sp.ImmutableMatrix(self.exact + other.exact)
        return Matrix4C(self.floating + other.floating, ex)

    def __sub__(self, other: "Matrix4C") -> "Matrix4C":
        ex = None
        if self.exact is not None and other.exact is not None:
            ex = sp.ImmutableMatrix(self.exact - other.exact)
        return Matrix4C(self.floating - other.floating, ex)

    def __neg__(self) -> "Matrix4C":
        ex = sp.ImmutableMatrix(-self.exact) if self.exact is not None else None
        return Matrix4C(-self.floating, ex)

    def scaled(self, c) -> "Matrix4C":
        ex = None
        if self.exact is not None and isinstance(c, (int, Rational, sp.Basic)):
            ex = sp.ImmutableMatrix(sp.nsimplify(c) * self.exact)
        return Matrix4C(complex(c) * self.floating, ex)

    def dagger(self) -> "Matrix4C":
        ex = sp.ImmutableMatrix(self.exact.H) if self.exact is not None else None
        return Matrix4C(self.floating.conj().T, ex)

    def is_exactly_zero(self) -> bool:
        if self.exact is None:
            raise ValueError("no exact backing")
        return all(v == 0 for v in self.exact)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.floating)))

    def backing_gap(self) -> float:
        """Max |float - exact| entry-wise; zero-cost consistency check."""
        if self.exact is None:
            raise ValueError("no exact backing")
        return float(np.max(np.abs(self.floating - _to_float(self.exact))))


def identity4() -> Matrix4C:
    return Matrix4C.from_exact(sp.eye(4))


def gamma(mu: int) -> Matrix4C:
    """The Weyl-representation gamma matrix, mu in 0..3."""
    if mu not in (0, 1, 2, 3):
        raise IndexError(f"gamma index must be 0..3, got {mu}")
    return Matrix4C.from_exact(_GAMMA_EXACT[mu])


def gamma5() -> Matrix4C:
    """-i * gamma0 gamma1 gamma2 gamma3, computed exactly."""
    prod = _GAMMA_EXACT[0] * _GAMMA_EXACT[1] * _GAMMA_EXACT[2] * _GAMMA_EXACT[3]
    return Matrix4C.from_exact(-sp.I * prod)


def alpha(i: int) -> Matrix4C:
    """gamma^0 gamma^i, the Hamiltonian-form velocity matrices (i in 1..3)."""
    if i not in (1, 2, 3):
        raise IndexError(f"alpha index must be 1..3, got {i}")
    return gamma(0) @ gamma(i)


def metric(mu: int, nu: int) -> int:
    return _METRIC[mu] if mu == nu else 0


def anticommutator_defect(mu: int, nu: int) -> Matrix4C:
    """gamma^mu gamma^nu + gamma^nu gamma^mu + 2 eta^{mu nu} I, exactly."""
    g, h = gamma(mu), gamma(nu)
    return (g @ h) + (h @ g) + identity4().scaled(2 * metric(mu, nu))


def hermiticity_report() -> list[tuple[int, float]]:
    """Per mu, the max-norm of (gamma^mu)^dagger - gamma^0 gamma^mu gamma^0.

    All four defects vanish identically; this is what makes the charge
    current hermitian with the conjugate-linear-in-first-slot inner product.
    """
    out = []
    g0 = gamma(0)
    for mu in range(4):
        g = gamma(mu)
        d = g.dagger() - (g0 @ g @ g0)
        out.append((mu, d.max_abs()))
    return out


@dataclass(frozen=True)
class Direction:
    """A unit vector on S^2."""

    w1: float
    w2: float
    w3: float

    def __post_init__(self):
        if abs(self.w1 ** 2 + self.w2 ** 2 + self.w3 ** 2 - 1.0) > 1e-12:
            raise ValueError("direction is not unit length")

    @classmethod
    def from_array(cls, w) -> "Direction":
        w = np.asarray(w, dtype=float)
        nrm = float(np.linalg.norm(w))
        if nrm == 0:
            raise ValueError("zero direction")
        w = w / nrm
        return cls(float(w[0]), float(w[1]), float(w[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.w1, self.w2, self.w3])

    def __neg__(self) -> "Direction":
        return Direction(-self.w1, -self.w2, -self.w3)


def projector(omega) -> Matrix4C:
    """P(omega) = (I + omega_i gamma^0 gamma^i) / 2.

    Accepts a Direction, a float triple, or exact rational components; the
    exact backing is attached only when all components are rational.
    """
    if isinstance(omega, Direction):
        comps = (omega.w1, omega.w2, omega.w3)
    else:
        comps = tuple(omega)
    nrm2 = sum(float(c) ** 2 for c in comps)
    if abs(nrm2 - 1.0) > 1e-9:
        raise ValueError(f"projector direction has |omega|^2 = {nrm2}, not 1")
    flo = 0.5 * (np.eye(4, dtype=complex)
                 + sum(float(comps[i]) * alpha(i + 1).floating for i in range(3)))
    if all(isinstance(c, (int, Rational)) or getattr(c, "is_Rational", False) for c in comps):
        ex = sp.eye(4)
        for i in range(3):
            ex = ex + sp.nsimplify(comps[i]) * alpha(i + 1).exact
        return Matrix4C(flo, sp.ImmutableMatrix(ex / 2))
    return Matrix4C(flo)


def inner(a, b) -> complex:
    """C^4 inner product, conjugate-linear in the first argument."""
    return complex(np.vdot(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)))


@dataclass(frozen=True)
class NullFormCoeffs:
    """Constant pair (e1, e2) defining N(X, Y) = <g0 X, Y> e1 + <g0 g5 X, Y> e2."""

    e1: np.ndarray
    e2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "e1", np.asarray(self.e1, dtype=np.complex128).reshape(4))
        object.__setattr__(self, "e2", np.asarray(self.e2, dtype=np.complex128).reshape(4))
        if not (np.all(np.isfinite(self.e1)) and np.all(np.isfinite(self.e2))):
            raise ValueError("null-form coefficients must be finite")

    def scaled(self, c: complex) -> "NullFormCoeffs":
        return NullFormCoeffs(c * self.e1, c * self.e2)


def null_form_scalars(X, Y):
    """The two sesquilinear scalars (<g0 X, Y>, <g0 g5 X, Y>), vectorized.

    X, Y have shape (4, ...); component axis first.  g0 swaps the 2-spinor
    blocks and g0 g5 swaps them with a sign, so no matrix products are needed.
    """
    X = np.asarray(X, dtype=np.complex128)
    Y = np.asarray(Y, dtype=np.complex128)
    c = X.conj()
    q1 = c[2] * Y[0] + c[3] * Y[1] + c[0] * Y[2] + c[1] * Y[3]
    q2 = -c[2] * Y[0] - c[3] * Y[1] + c[0] * Y[2] + c[1] * Y[3]
    return q1, q2


def null_form(coeffs: NullFormCoeffs, X, Y) -> np.ndarray:
    """N(X, Y), bilinear over reals; works pointwise or on whole grids."""
    q1, q2 = null_form_scalars(X, Y)
    e1 = coeffs.e1.reshape((4,) + (1,) * (np.ndim(q1)))
    e2 = coeffs.e2.reshape((4,) + (1,) * (np.ndim(q1)))
    return q1[None] * e1 + q2[None] * e2


def null_form_commutator(coeffs: NullFormCoeffs, gamma_id, rng=None,
                         samples: int = 32) -> tuple[NullFormCoeffs, float]:
    """Coefficients of N_Gamma with A N(X,Y) - N(AX,Y) - N(X,AY) = N_Gamma(X,Y).

    A is the constant matrix part of the generator (its derivative part passes
    through the constant-coefficient bilinear form).  The pair (e1', e2') is
    found by least squares over a basis of C^4 x C^4; the returned residual is
    the max defect on random spinor pairs and flags a representation bug when
    it exceeds float tolerance.
    """
    A = _matrix_part(gamma_id)
    basis = np.eye(4, dtype=complex)

    rows = []
    rhs = []
    for a in range(4):
        for b in range(4):
            for phase in (1.0, 1.0j):
                X = phase * basis[a]
                Y = basis[b]
                q1, q2 = null_form_scalars(X, Y)
                val = (A @ null_form(coeffs, X, Y)
                       - null_form(coeffs, A @ X, Y)
                       - null_form(coeffs, X, A @ Y))
                rows.append([q1, q2])
                rhs.append(val)
    rows = np.asarray(rows)          # (m, 2)
    rhs = np.asarray(rhs)            # (m, 4)
    sol, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    out = NullFormCoeffs(sol[0], sol[1])

    rng = np.random.default_rng(rng if rng is not None else 0)
    resid = 0.0
    for _ in range(samples):
        X = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        Y = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        lhs = (A @ null_form(coeffs, X, Y)
               - null_form(coeffs, A @ X, Y)
               - null_form(coeffs, X, A @ Y))
        resid = max(resid, float(np.max(np.abs(lhs - null_form(out, X, Y)))))
    return out, resid


def _matrix_part(gamma_id) -> np.ndarray:
    """Constant matrix summand of a spacetime-family generator."""
    kind = getattr(gamma_id, "kind", gamma_id)
    if kind in ("translation", "scaling"):
        return np.zeros((4, 4), dtype=complex)
    if kind == "rotation":
        i, j = gamma_id.axes
        return -0.5 * (gamma(i).floating @ gamma(j).floating)
    if kind == "boost":
        (i,) = gamma_id.axes
        return -0.5 * (gamma(0).floating @ gamma(i).floating)
    raise ValueError(f"unknown generator kind {kind!r}")
