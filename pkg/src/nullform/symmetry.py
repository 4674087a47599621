"""Commuting vector-field families and the weighted energy norms they define.

The spacetime family has 11 generators (translations, modified rotations,
modified boosts, scaling); the null-infinity family has 8.  Compositions act
through "jets": a field together with its time derivatives reconstructed from
the evolution equation, so every generator application is exactly consistent
with the PDE at the discrete level and no snapshot differencing ever happens.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .clifford import gamma
from .grid import SpinorField, derivative_data
from .propagate import RunHandle
from .radiation import NullGrid, RadiationField


@dataclass(frozen=True)
class VectorFieldId:
    """One generator: family 'spacetime' or 'null-infinity'; kind + axes."""

    family: str
    kind: str
    axes: tuple = ()

    def __post_init__(self):
        if self.family not in ("spacetime", "null-infinity"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.kind not in ("translation", "rotation", "boost", "scaling"):
            raise ValueError(f"unknown kind {self.kind!r}")

    def label(self) -> str:
        ax = ",".join(str(a) for a in self.axes)
        return f"{self.kind}({ax})" if ax else self.kind


_ROTATION_PAIRS = ((1, 2), (2, 3), (3, 1))


def spacetime_family() -> tuple[VectorFieldId, ...]:
    """The 11 spacetime generators, in canonical order."""
    gens = [VectorFieldId("spacetime", "translation", (mu,)) for mu in range(4)]
    gens += [VectorFieldId("spacetime", "rotation", p) for p in _ROTATION_PAIRS]
    gens += [VectorFieldId("spacetime", "boost", (i,)) for i in (1, 2, 3)]
    gens.append(VectorFieldId("spacetime", "scaling"))
    return tuple(gens)


def null_infinity_family() -> tuple[VectorFieldId, ...]:
    """The 8 null-infinity generators, in canonical order."""
    gens = [VectorFieldId("null-infinity", "translation")]
    gens += [VectorFieldId("null-infinity", "rotation", p) for p in _ROTATION_PAIRS]
    gens += [VectorFieldId("null-infinity", "boost", (i,)) for i in (1, 2, 3)]
    gens.append(VectorFieldId("null-infinity", "scaling"))
    return tuple(gens)


def _half_gamma(i: int, j: int) -> np.ndarray:
    return 0.5 * (gamma(i).floating @ gamma(j).floating)


def _mat_grid(mat: np.ndarray, data: np.ndarray) -> np.ndarray:
    return np.tensordot(mat, data, axes=([1], [0]))


def _mat_null(mat: np.ndarray, data: np.ndarray) -> np.ndarray:
    return np.einsum("ab,...b->...a", mat, data)


@dataclass(frozen=True)
class NormConfig:
    """Order cap for the weighted norms; the full derivative order is a knob."""

    max_order: int = 2
    family: str = "spacetime"

    def __post_init__(self):
        if self.max_order < 0:
            raise ValueError("max_order must be >= 0")


# ---------------------------------------------------------------------------
# spacetime family via jets


def _apply_generator_to_jet(grid, t: float, jet: list[np.ndarray],
                            vf: VectorFieldId) -> list[np.ndarray]:
    """Map the jet of v to the (one order lower) jet of Gamma v at time t.

    Uses d_t^j (Gamma v) = Gamma_t(d_t^j v, d_t^{j+1} v) + j [d_t, Gamma] d_t^{j-1} v,
    where [d_t, Gamma] is d_i for boosts, d_t for scaling, zero otherwise.
    """
    order = len(jet) - 2
    if order < 0:
        raise ValueError("jet too short for another generator application")
    kind, axes = vf.kind, vf.axes
    out = []
    for j in range(order + 1):
        v, vdot = jet[j], jet[j + 1]
        if kind == "translation":
            w = vdot if axes[0] == 0 else derivative_data(grid, v, axes[0])
        elif kind == "rotation":
            i, k = axes
            w = (grid.coord(i) * derivative_data(grid, v, k)
                 - grid.coord(k) * derivative_data(grid, v, i)
                 - _mat_grid(_half_gamma(i, k), v))
        elif kind == "boost":
            (i,) = axes
            w = (t * derivative_data(grid, v, i) + grid.coord(i) * vdot
                 - _mat_grid(_half_gamma(0, i), v))
            if j > 0:
                w += j * derivative_data(grid, jet[j - 1], i)
        else:  # scaling
            w = t * vdot
            for i in (1, 2, 3):
                w += grid.coord(i) * derivative_data(grid, v, i)
            if j > 0:
                w += j * jet[j]
        out.append(w)
    return out


def _check_containment(run: RunHandle, vf: VectorFieldId, t: float):
    if vf.kind in ("boost", "scaling"):
        forward = run.cfg.direction == "forward"
        beyond = t > run.containment_time if forward else t < run.containment_time
        if beyond:
            warnings.warn(f"containment flag down at t = {t}: coordinate weights "
                          "see wrap-around at the support threshold")


def apply_spacetime(run: RunHandle, vf: VectorFieldId, t: float) -> SpinorField:
    """Gamma phi(t, .) for one spacetime generator."""
    return apply_spacetime_sequence(run, [vf], t)


def apply_spacetime_sequence(run: RunHandle, vfs, t: float) -> SpinorField:
    """Gamma_1 Gamma_2 ... Gamma_k phi(t, .), rightmost applied first."""
    for vf in vfs:
        if vf.family != "spacetime":
            raise ValueError("spacetime generator required")
        _check_containment(run, vf, t)
    jet = run.jet(t, len(vfs))
    for vf in reversed(list(vfs)):
        jet = _apply_generator_to_jet(run.grid, t, jet, vf)
    return SpinorField(run.grid, t, jet[0])


# ---------------------------------------------------------------------------
# null-infinity family


def apply_null_infinity(F: RadiationField, vf: VectorFieldId) -> RadiationField:
    """One null-infinity generator applied to a radiation field."""
    if vf.family != "null-infinity":
        raise ValueError("null-infinity generator required")
    F.ngrid.resolution_check()
    data = _null_generator(F.ngrid, F.data, vf)
    return RadiationField(F.ngrid, data, F.extraction_radius, direction=F.direction)


def _null_generator(ng: NullGrid, data: np.ndarray, vf: VectorFieldId) -> np.ndarray:
    kind, axes = vf.kind, vf.axes
    s = ng.svals[:, None, None, None]
    if kind == "translation":
        return ng.deriv_s(data)
    if kind == "scaling":
        return s * ng.deriv_s(data)
    if kind == "rotation":
        i, j = axes
        wi = ng.omega[None, :, :, i - 1, None]
        wj = ng.omega[None, :, :, j - 1, None]
        return (wi * ng.deriv_omega(data, j) - wj * ng.deriv_omega(data, i)
                - _mat_null(_half_gamma(i, j), data))
    # boost: -d_omega^i + omega^i s d_s + omega^i + (1/2) g0 g^i
    (i,) = axes
    wi = ng.omega[None, :, :, i - 1, None]
    return (-ng.deriv_omega(data, i) + wi * (s * ng.deriv_s(data)) + wi * data
            + _mat_null(_half_gamma(0, i), data))


def dirac_relation_partner(F: RadiationField, vf: VectorFieldId) -> RadiationField:
    """The null-infinity operator matched to a spacetime generator.

    Table: d_t <-> d_s; d_i <-> -omega^i d_s; modified rotations map to the
    null-infinity rotations; modified boosts to -omega^i s d_s - omega^i
    + d_omega^i - (1/2) g0 g^i; scaling to s d_s - 1.
    """
    if vf.family != "spacetime":
        raise ValueError("spacetime generator required")
    ng = F.ngrid
    s = ng.svals[:, None, None, None]
    kind, axes = vf.kind, vf.axes
    if kind == "translation":
        mu = axes[0]
        ds = ng.deriv_s(F.data)
        if mu == 0:
            data = ds
        else:
            data = -ng.omega[None, :, :, mu - 1, None] * ds
    elif kind == "rotation":
        data = _null_generator(ng, F.data, VectorFieldId("null-infinity", "rotation", axes))
    elif kind == "boost":
        (i,) = axes
        wi = ng.omega[None, :, :, i - 1, None]
        data = (-wi * (s * ng.deriv_s(F.data)) - wi * F.data
                + ng.deriv_omega(F.data, i) - _mat_null(_half_gamma(0, i), F.data))
    else:  # scaling
        data = s * ng.deriv_s(F.data) - F.data
    return RadiationField(ng, data, F.extraction_radius, direction=F.direction)


# ---------------------------------------------------------------------------
# weighted norms


def _norm_sq_grid(grid, data) -> float:
    return float(grid.h ** 3 * np.sum(np.abs(data) ** 2))


def weighted_norm(target, cfg: NormConfig, t: float | None = None) -> float:
    """Square root of the sum of squared L^2 norms over all |alpha| <= K.

    target is either a RunHandle (give t; spacetime family, 11 generators)
    or a RadiationField (null-infinity family, 8 generators).
    """
    if isinstance(target, RunHandle):
        if t is None:
            raise ValueError("weighted_norm of a run needs a time")
        gens = spacetime_family()
        for vf in gens:
            _check_containment(target, vf, t)
        jet = target.jet(t, cfg.max_order)
        total = _sum_grid(target.grid, t, jet, gens, cfg.max_order)
        return math.sqrt(total)
    if isinstance(target, RadiationField):
        gens = null_infinity_family()
        w = target.ngrid.node_weights()[..., None]
        total = _sum_null(target.ngrid, w, target.data, gens, cfg.max_order)
        return math.sqrt(total)
    raise TypeError("target must be a RunHandle or a RadiationField")


def _sum_grid(grid, t, jet, gens, depth) -> float:
    total = _norm_sq_grid(grid, jet[0])
    if depth == 0:
        return total
    for idx, vf in enumerate(gens):
        sub = _apply_generator_to_jet(grid, t, jet, vf)
        total += _sum_grid(grid, t, sub, gens[idx:], depth - 1)
    return total


def _sum_null(ng, w, data, gens, depth) -> float:
    total = float(np.sum(w * np.abs(data) ** 2))
    if depth == 0:
        return total
    for idx, vf in enumerate(gens):
        sub = _null_generator(ng, data, vf)
        total += _sum_null(ng, w, sub, gens[idx:], depth - 1)
    return total


def multi_indices(n_gens: int, max_order: int):
    """All sorted index tuples with length <= max_order (the norm's terms)."""
    out = []
    for k in range(max_order + 1):
        out.extend(combinations_with_replacement(range(n_gens), k))
    return out
