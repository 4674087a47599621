"""The radiation-field maps as operators, their adjoints, and their inverses.

A LinearMapHandle freezes one discretization (grid, null grid, radii, step
sizes); its forward map composes exact free flow, tricubic sampling at the
extraction radius, and the good-component projector.  The adjoint composes
the exact transposes in reverse, so the operator pair passes the dot-product
test at rounding level, and conjugate gradient on the normal equations
inverts the map.  The nonlinear map is inverted by Picard iteration with the
linear inverse as preconditioner.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.fft as sfft

from .clifford import NullFormCoeffs, null_form
from .grid import (Grid, SpinorField, gather_with_stencil, interp_stencil,
                   scatter_with_stencil)
from .propagate import (EvolveConfig, FreePropagator, LinearizedNonlinearity,
                        RunHandle, evolve)
from .radiation import (NullGrid, RadiationField, duhamel_radiation, extract,
                        project_direction, rf_add, rf_inner)
from .symmetry import NormConfig, apply_spacetime, dirac_relation_partner, weighted_norm


class PicardDivergenceError(RuntimeError):
    """Picard iterate left the smallness neighborhood."""


def initial_handle(phi0: SpinorField) -> RunHandle:
    """A single-snapshot free run: lets the vector fields act on initial data."""
    cfg = EvolveConfig(dt=1.0, t_final=1.0)
    return RunHandle(phi0.grid, cfg, [phi0.time], [phi0.data])


def initial_weighted_norm(phi0: SpinorField, max_order: int) -> float:
    """The weighted data norm (free-flow jets, as the space is defined)."""
    return weighted_norm(initial_handle(phi0), NormConfig(max_order=max_order),
                         t=phi0.time)


def x_norm(fld: SpinorField) -> float:
    return math.sqrt(fld.grid.h ** 3 * float(np.sum(np.abs(fld.data) ** 2)))


class LinearMapHandle:
    """Forward radiation map of the free equation at a fixed discretization.

    band_limit is the |k| cutoff of the smoothing preconditioner used by the
    normal-equations solver; it never changes the forward or adjoint map.
    """

    def __init__(self, grid: Grid, ngrid: NullGrid, radii, run_dt: float | None = None,
                 band_limit: float | None = None, support_radius: float | None = None):
        self.grid = grid
        self.ngrid = ngrid
        self.radii = sorted(float(r) for r in np.atleast_1d(radii))
        self.M = self.radii[-1]
        if self.M > grid.length / 2 - 2 * grid.h:
            raise ValueError("largest radius leaves the interpolation-safe box")
        if ngrid.s_min < -self.M / 2 - 1e-9:
            warnings.warn("s_min below -M/2: extraction rays only marginally in "
                          "the wave zone; error estimates may be pessimistic")
        if self.M + ngrid.s_min <= 0:
            raise ValueError("extraction needs M + s_min > 0")
        self.band_limit = band_limit if band_limit is not None else np.pi / ngrid.ds
        self.support_radius = (support_radius if support_radius is not None
                               else 0.35 * grid.length)

        self.snap_dt = ngrid.ds / 2
        offset = (self.M + ngrid.s_min) / self.snap_dt
        if abs(offset - round(offset)) > 1e-9:
            raise ValueError("extraction times must sit on the snapshot lattice: "
                             "make (M + s_min) a multiple of ds/2")
        target = run_dt if run_dt is not None else grid.h / 4
        self.snap_every = max(1, round(self.snap_dt / target))
        self.run_dt = self.snap_dt / self.snap_every
        self.t_final = self.M + ngrid.s_max

        self.prop = FreePropagator(grid)
        self._stencil = {}
        for r in self.radii:
            pts = (r * ngrid.omega).reshape(-1, 3)
            self._stencil[r] = interp_stencil(grid, pts)
        self.sphere_w = ngrid.weights.reshape(-1)
        self.s_w = ngrid.s_weights()
        self._omega_flat = ngrid.omega.reshape(-1, 3)

    # -- linear forward / adjoint -------------------------------------------

    def _sample_hat(self, hat: np.ndarray, t: float, radius: float) -> np.ndarray:
        """(nodes, 4) samples of radius * phi(t, radius*omega) from the k-space data."""
        f = sfft.ifftn(self.prop.apply_hat(hat, t), axes=(1, 2, 3), workers=-1)
        idx, wts = self._stencil[radius]
        return gather_with_stencil(f, idx, wts).T * radius

    def forward(self, phi0, record_error: bool = True,
                ngrid: NullGrid | None = None) -> RadiationField:
        """Free evolve, extract at the handle radii, project to the good component."""
        data = phi0.data if isinstance(phi0, SpinorField) else np.asarray(phi0)
        ng = ngrid or self.ngrid
        if ngrid is not None and ngrid.omega.shape != self.ngrid.omega.shape:
            raise ValueError("alternate null grid must share the handle's sphere")
        hat = sfft.fftn(data, axes=(1, 2, 3), workers=-1)
        shape = (ng.ns, ng.n_theta, ng.n_phi, 4)
        vals = np.empty(shape, dtype=np.complex128)
        err = np.zeros(shape[:3])
        resid = np.empty(shape, dtype=np.complex128)
        r_err = self.radii[-2] if (record_error and len(self.radii) >= 2) else None
        for j, s in enumerate(ng.svals):
            raw = self._sample_hat(hat, self.M + s, self.M)
            raw = raw.reshape(ng.n_theta, ng.n_phi, 4)
            good = project_direction(raw, ng.omega, 1)
            vals[j] = good
            resid[j] = raw - good
            if r_err is not None:
                prev = self._sample_hat(hat, r_err + s, r_err)
                prev = project_direction(prev.reshape(ng.n_theta, ng.n_phi, 4), ng.omega, 1)
                err[j] = np.linalg.norm(good - prev, axis=-1)
        return RadiationField(ng, vals, self.M, error_estimate=err, residual=resid)

    def adjoint(self, F: RadiationField) -> SpinorField:
        """Exact discrete adjoint of forward (with record_error=False)."""
        if F.ngrid != self.ngrid:
            raise ValueError("null grid mismatch")
        ng = self.ngrid
        idx, wts = self._stencil[self.M]
        acc = None
        for j, s in enumerate(ng.svals):
            y = project_direction(F.data[j].reshape(-1, 4), self._omega_flat, 1)
            y = (y * (self.M * self.s_w[j] * self.sphere_w)[:, None]).T  # (4, nodes)
            z = scatter_with_stencil(y, idx, wts, self.grid.n)
            zh = sfft.fftn(z, axes=(1, 2, 3), workers=-1)
            zh = self.prop.apply_hat(zh, -(self.M + s))
            acc = zh if acc is None else acc + zh
        out = sfft.ifftn(acc, axes=(1, 2, 3), workers=-1) / self.grid.h ** 3
        return SpinorField(self.grid, 0.0, out)

    def _band_pass(self, data: np.ndarray) -> np.ndarray:
        mask = self.grid.kmag() <= self.band_limit
        hat = sfft.fftn(data, axes=(1, 2, 3), workers=-1)
        hat *= mask[None]
        return sfft.ifftn(hat, axes=(1, 2, 3), workers=-1)

    def smooth(self, data: np.ndarray) -> np.ndarray:
        """SPD preconditioner: band limit, containment window, band limit.

        Encodes the prior that invertible data is band-limited and supported
        well inside the box; wrap-around ghosts from the adjoint's backward
        cones are suppressed so CG converges to the smooth representative.
        """
        key = f"window:{self.support_radius}"
        if key not in self.grid._cache:
            r = self.grid.radius()
            self.grid._cache[key] = 0.5 * (1.0 - np.tanh(
                (r - self.support_radius) / (2 * self.grid.h)))
        w = self.grid._cache[key]
        return self._band_pass(w[None] * self._band_pass(data))

    # -- configured evolution for the nonlinear maps -------------------------

    def evolve_config(self, nonlinearity=None) -> EvolveConfig:
        return EvolveConfig(dt=self.run_dt, t_final=self.t_final,
                            snapshot_every=self.snap_every,
                            nonlinearity=nonlinearity)


def apply_forward(handle: LinearMapHandle, phi0: SpinorField,
                  record_error: bool = True) -> RadiationField:
    return handle.forward(phi0, record_error=record_error)


def apply_adjoint(handle: LinearMapHandle, F: RadiationField) -> SpinorField:
    return handle.adjoint(F)


def invert_linear(handle: LinearMapHandle, psi: RadiationField,
                  cg_tol: float = 1e-3, cg_max_iter: int = 30,
                  x0: SpinorField | None = None):
    """Preconditioned CG on the normal equations A*A x = A* psi.

    The initial guess is the adjoint image A* psi (band-limited and rescaled);
    the preconditioner is the handle's Fourier cutoff, which keeps the
    iterates in the subspace where the discrete map is near-isometric.
    Returns (x, report) with the relative residual history ||A x - psi||/||psi||.
    """
    psi_norm = psi.norm()
    if psi_norm == 0.0:
        zero = SpinorField(handle.grid, 0.0,
                           np.zeros((4,) + (handle.grid.n,) * 3, dtype=complex))
        return zero, {"iterations": 0, "residuals": [0.0], "converged": True}

    def A(xdata):
        return handle.forward(xdata, record_error=False)

    def At(F):
        return handle.adjoint(F).data

    def xdot(a, b):
        return float(np.vdot(a, b).real) * handle.grid.h ** 3

    if x0 is None:
        x = handle.smooth(At(psi))
        Ax = A(x)
        scale = float(rf_inner(Ax, psi).real) / max(Ax.norm() ** 2, 1e-300)
        x = scale * x
        r = rf_add(psi, A(x), 1.0, -1.0)
    else:
        x = x0.data.copy()
        r = rf_add(psi, A(x), 1.0, -1.0)
    residuals = [r.norm() / psi_norm]

    g = At(r)                     # gradient of the normal equations
    z = handle.smooth(g)
    p = z.copy()
    d = xdot(g, z)
    it = 0
    while residuals[-1] > cg_tol and it < cg_max_iter:
        w = A(p)
        wn2 = w.norm() ** 2
        if wn2 == 0.0 or d == 0.0:
            break
        alpha = d / wn2
        x += alpha * p
        r = rf_add(r, w, 1.0, -alpha)
        residuals.append(r.norm() / psi_norm)
        g = At(r)
        z = handle.smooth(g)
        d_new = xdot(g, z)
        p = z + (d_new / d) * p
        d = d_new
        it += 1
    report = {"iterations": it, "residuals": residuals,
              "converged": residuals[-1] <= cg_tol}
    if not report["converged"]:
        warnings.warn(f"CG stagnated at relative residual {residuals[-1]:.3e}")
    return SpinorField(handle.grid, 0.0, x), report


@dataclass
class ScatterConfig:
    """Everything the nonlinear maps need: coefficients, caps, solver knobs."""

    coeffs: NullFormCoeffs
    handle: LinearMapHandle
    smallness_cap: float = 1.0
    norm_order: int = 1
    picard_max_iter: int = 8
    picard_tol: float = 0.02
    cg_tol: float = 1e-3
    cg_max_iter: int = 30
    check_consistency: bool = True
    duhamel_stride: int = 2          # snapshots per source slice in route (b)

    def __post_init__(self):
        if self.picard_tol <= 0 or self.cg_tol <= 0:
            raise ValueError("tolerances must be positive")


def semilinear_run(cfg: ScatterConfig, phi0: SpinorField) -> RunHandle:
    return evolve(phi0, cfg.handle.evolve_config(nonlinearity=cfg.coeffs))


def _extended_null_grid(handle: LinearMapHandle) -> NullGrid:
    """Same sphere and ds, s-window stretched down to -M for Duhamel shifts."""
    ng = handle.ngrid
    extra = int(round((ng.s_min + handle.M) / ng.ds))
    return NullGrid(ng.s_min - extra * ng.ds, ng.s_max, ng.ns + extra,
                    ng.n_theta, ng.n_phi)


def forward_nonlinear(cfg: ScatterConfig, phi0: SpinorField):
    """The nonlinear radiation map, computed both ways.

    (a) direct extraction from the semilinear run; (b) free radiation of the
    data plus the Duhamel quadrature of the source slices' radiation fields.
    Returns (field_a, report); the report holds the run, route (b), and the
    (a)-(b) discrepancy against the combined error estimates.
    """
    nrm = initial_weighted_norm(phi0, cfg.norm_order)
    if nrm > cfg.smallness_cap:
        raise ValueError(f"initial weighted norm {nrm:.3g} above the smallness cap")
    run = semilinear_run(cfg, phi0)
    Fa = extract(run, cfg.handle.ngrid, cfg.handle.radii)
    report = {"run": run, "initial_norm": nrm}
    if cfg.check_consistency:
        Fb = _duhamel_route(cfg, run, phi0)
        disc = rf_add(Fa, Fb, 1.0, -1.0).norm()
        combined = Fa.error_norm() + Fb.error_norm()
        report.update({"route_b": Fb, "discrepancy": disc,
                       "combined_error": combined,
                       "consistent": disc <= 3.0 * combined})
        if not report["consistent"]:
            warnings.warn(f"two-pipeline discrepancy {disc:.3e} exceeds "
                          f"3x combined error estimate {combined:.3e}")
    return Fa, report


def _duhamel_route(cfg: ScatterConfig, run: RunHandle, phi0: SpinorField) -> RadiationField:
    """Route (b): assemble the radiation field from free pieces."""
    handle = cfg.handle
    ext = _extended_null_grid(handle)
    F_free = handle.forward(phi0, record_error=True, ngrid=ext)
    slices = []
    for j in range(0, len(run.times), cfg.duhamel_stride):
        tau = float(run.times[j])
        src = null_form(cfg.coeffs, run.snaps[j], run.snaps[j])
        slices.append((tau, handle.forward(src, record_error=False, ngrid=ext)))
    if abs(run.times[-1] - slices[-1][0]) > 1e-12:
        tau = float(run.times[-1])
        src = null_form(cfg.coeffs, run.snaps[-1], run.snaps[-1])
        slices.append((tau, handle.forward(src, record_error=False, ngrid=ext)))
    F_ext = duhamel_radiation(F_free, slices)
    lo = ext.ns - handle.ngrid.ns
    return RadiationField(handle.ngrid, F_ext.data[lo:], handle.M,
                          error_estimate=F_ext.error_estimate[lo:])


def linearized_forward(cfg: ScatterConfig, background: RunHandle | None,
                       psi0: SpinorField) -> RadiationField:
    """Radiation field of the first-variation equation around a background.

    With no background this is exactly the linear forward map (the derivative
    of the nonlinear map at zero).
    """
    nl = None if background is None else LinearizedNonlinearity(background, cfg.coeffs)
    run = evolve(psi0, cfg.handle.evolve_config(nonlinearity=nl))
    return extract(run, cfg.handle.ngrid, cfg.handle.radii)


def invert_nonlinear(cfg: ScatterConfig, psi_target: RadiationField):
    """Picard iteration x -> x - A^{-1}(F_nl(x) - psi), A the linear map.

    Returns (x, report) with the residual history; raises
    PicardDivergenceError when the iterate norm grows past twice the cap.
    """
    handle = cfg.handle
    tnorm = psi_target.norm()
    zero = SpinorField(handle.grid, 0.0,
                       np.zeros((4,) + (handle.grid.n,) * 3, dtype=complex))
    if tnorm == 0.0:
        return zero, {"iterations": 0, "residuals": [0.0], "converged": True}
    bad = project_direction(psi_target.data, psi_target.ngrid.omega[None], -1)
    bad_frac = float(np.sqrt(np.sum(np.abs(bad) ** 2) / np.sum(np.abs(psi_target.data) ** 2)))
    if bad_frac > 1e-8:
        raise ValueError(f"target has P(-omega) component (fraction {bad_frac:.2e}); "
                         "not in the E+ space")

    inner = replace(cfg, check_consistency=False)
    x = zero
    residuals = []
    for it in range(cfg.picard_max_iter):
        F, _ = forward_nonlinear(inner, x)
        resid_field = rf_add(F, psi_target, 1.0, -1.0)
        rel = resid_field.norm() / tnorm
        residuals.append(rel)
        if rel <= cfg.picard_tol:
            return x, {"iterations": it, "residuals": residuals, "converged": True}
        delta, _ = invert_linear(handle, resid_field,
                                 cg_tol=cfg.cg_tol, cg_max_iter=cfg.cg_max_iter)
        x = SpinorField(handle.grid, 0.0, x.data - delta.data)
        if initial_weighted_norm(x, cfg.norm_order) > 2 * cfg.smallness_cap:
            raise PicardDivergenceError(
                "iterate norm grew past twice the smallness cap: "
                "target outside the local neighborhood")
    F, _ = forward_nonlinear(inner, x)
    rel = rf_add(F, psi_target, 1.0, -1.0).norm() / tnorm
    residuals.append(rel)
    return x, {"iterations": cfg.picard_max_iter, "residuals": residuals,
               "converged": rel <= cfg.picard_tol}


def commutation_defect(handle: LinearMapHandle, phi0: SpinorField, vf) -> float:
    """Relative defect of one row of the commutation table.

    Compares the forward map of the generator applied to the data against the
    partner null-infinity operator applied to the forward map of the data.
    """
    F = handle.forward(phi0, record_error=False)
    gphi = apply_spacetime(initial_handle(phi0), vf, phi0.time)
    lhs = handle.forward(gphi, record_error=False)
    rhs = dirac_relation_partner(F, vf)
    return rf_add(lhs, rhs, 1.0, -1.0).norm() / F.norm()
