"""Numerical verification of the charge, flux, and decay estimates.

Cone and ball integrals interpolate the field onto spherical shells rather
than masking the Cartesian grid, so defects are limited by interpolation
error instead of O(h) staircase error.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .clifford import projector
from .grid import SpinorField, charge, interpolate_data
from .propagate import RunHandle
from .radiation import project_direction, sphere_quadrature
from .symmetry import NormConfig, weighted_norm, spacetime_family, _apply_generator_to_jet, _norm_sq_grid


@dataclass
class DiagnosticsConfig:
    mu: float = 0.25                     # ghost-weight exponent, in (0, 1/2)
    max_order: int = 2                   # derivative order for weighted norms
    cone_apexes: tuple = (0.0,)          # apex times t0 (apex on the time axis)
    decay_exclude: float = 0.2           # leading fraction of each ray dropped from fits
    n_radial: int = 0                    # 0 = auto from grid spacing
    n_theta: int = 8
    n_phi: int = 16

    def __post_init__(self):
        if not 0 < self.mu < 0.5:
            raise ValueError("ghost exponent mu must lie in (0, 1/2)")


@dataclass
class DiagnosticsLog:
    """Scalar time series for one run; accumulators are non-decreasing."""

    times: list = dc_field(default_factory=list)
    charge: list = dc_field(default_factory=list)
    ghost_flux: list = dc_field(default_factory=list)
    support_radius: list = dc_field(default_factory=list)
    peak: list = dc_field(default_factory=list)
    energies_by_order: list = dc_field(default_factory=list)

    def write_csv(self, path: str | Path, config_hash: str = ""):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            if config_hash:
                wr.writerow([f"# config_hash = {config_hash}"])
            korder = len(self.energies_by_order[0]) if self.energies_by_order else 0
            wr.writerow(["t", "charge", "ghost_flux", "support_radius", "peak"]
                        + [f"E{k}" for k in range(korder)])
            for j in range(len(self.times)):
                row = [self.times[j], self.charge[j], self.ghost_flux[j],
                       self.support_radius[j], self.peak[j]]
                if self.energies_by_order:
                    row += list(self.energies_by_order[j])
                wr.writerow([f"{v:.17g}" for v in row])


def pairing_density(phi_src: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """<g0 Phi, phi> + <g0 phi, Phi> pointwise; real by hermiticity of g0."""
    c = phi_src.conj()
    s = c[2] * phi[0] + c[3] * phi[1] + c[0] * phi[2] + c[1] * phi[3]
    return 2.0 * s.real


def pairing_integral(run: RunHandle, j: int) -> float:
    """h^3 integral of the source pairing at snapshot j (zero for free runs)."""
    data = run.snaps[j]
    phi_src = run.source_term(float(run.times[j]), data)
    if phi_src is None:
        return 0.0
    return float(run.grid.h ** 3 * np.sum(pairing_density(phi_src, data)))


def charge_balance_defect(run: RunHandle) -> float:
    """Defect of the time-slice charge identity, trapezoid over snapshots."""
    if len(run.times) < 2:
        raise ValueError("need at least two snapshots")
    e_first = float(np.sum(np.abs(run.snaps[0]) ** 2)) * run.grid.h ** 3
    e_last = float(np.sum(np.abs(run.snaps[-1]) ** 2)) * run.grid.h ** 3
    g = np.array([pairing_integral(run, j) for j in range(len(run.times))])
    rhs = float(np.trapz(g, run.times))
    return abs(e_last - e_first - rhs) / max(e_first, e_last, 1e-300)


def _radial_nodes(R: float, h: float, n_radial: int):
    if n_radial <= 0:
        n_radial = max(8, int(math.ceil(1.5 * R / h)))
    x, w = np.polynomial.legendre.leggauss(n_radial)
    r = 0.5 * R * (x + 1.0)
    wr = 0.5 * R * w
    return r, wr


def shell_points(R: float, h: float, n_radial: int, n_theta: int, n_phi: int):
    """Radial Gauss-Legendre x sphere Gauss-Legendre nodes filling the ball."""
    r, wr = _radial_nodes(R, h, n_radial)
    mu, wmu, phi = sphere_quadrature(n_theta, n_phi)
    sin_th = np.sqrt(1 - mu ** 2)
    om = np.empty((n_theta, n_phi, 3))
    om[..., 0] = sin_th[:, None] * np.cos(phi)[None, :]
    om[..., 1] = sin_th[:, None] * np.sin(phi)[None, :]
    om[..., 2] = mu[:, None] * np.ones(n_phi)[None, :]
    wom = np.outer(wmu, np.full(n_phi, 2 * np.pi / n_phi))
    return r, wr, om.reshape(-1, 3), wom.reshape(-1)


def ball_integral(fld: SpinorField, R: float, integrand="density",
                  n_radial: int = 0, n_theta: int = 8, n_phi: int = 16,
                  other: np.ndarray | None = None) -> float:
    """Integral over |x| <= R by shell quadrature of a pointwise integrand.

    integrand: "density" -> |phi|^2; "pminus" -> 2 |P(-omega) phi|^2;
    "pplus" -> 2 |P(omega) phi|^2; "pairing" -> pairing with `other`.
    """
    r, wr, om, wom = shell_points(R, fld.grid.h, n_radial, n_theta, n_phi)
    pts = (r[:, None, None] * om[None, :, :]).reshape(-1, 3)
    vals = interpolate_data(fld.grid, fld.data, pts).T.reshape(len(r), len(om), 4)
    if integrand == "density":
        dens = np.sum(np.abs(vals) ** 2, axis=-1)
    elif integrand in ("pminus", "pplus"):
        sign = -1 if integrand == "pminus" else 1
        proj = project_direction(vals, om[None], sign)
        dens = 2.0 * np.sum(np.abs(proj) ** 2, axis=-1)
    elif integrand == "pairing":
        src = interpolate_data(fld.grid, other, pts).T.reshape(len(r), len(om), 4)
        dens = (2.0 * (src[..., 2].conj() * vals[..., 0] + src[..., 3].conj() * vals[..., 1]
                       + src[..., 0].conj() * vals[..., 2] + src[..., 1].conj() * vals[..., 3])).real
    else:
        raise ValueError(f"unknown integrand {integrand!r}")
    return float(np.sum(wr * r ** 2 * (dens @ wom)))


def _cone_term(run: RunHandle, t0: float, R: float, sign_t: float, proj_sign: int,
               cfg: DiagnosticsConfig) -> float:
    """Integral over the ball of 2 |P(proj_sign omega) phi|^2 (t0 + sign_t |x|, x) dx."""
    r, wr, om, wom = shell_points(R, run.grid.h, cfg.n_radial, cfg.n_theta, cfg.n_phi)
    total = 0.0
    for rk, wk in zip(r, wr):
        vals = run.sample(t0 + sign_t * rk, rk * om).T  # (nodes, 4)
        proj = project_direction(vals, om, proj_sign)
        dens = 2.0 * np.sum(np.abs(proj) ** 2, axis=-1)
        total += wk * rk ** 2 * float(dens @ wom)
    return total


def cone_flux_defect(run: RunHandle, t0: float, t1: float,
                     direction: str = "future",
                     cfg: DiagnosticsConfig | None = None) -> float:
    """Normalized defect of the cone energy identity with apex (t0, 0).

    Future: ball |phi|^2 at t1 minus twice the outgoing cone flux of
    |P(-omega)phi|^2 equals the bulk source pairing over the solid cone.
    Past (t1 < t0): twice the incoming flux of |P(omega)phi|^2 minus the
    ball at t1 equals the bulk pairing over the past solid cone.
    """
    cfg = cfg or DiagnosticsConfig()
    if direction == "future":
        if not t0 < t1:
            raise ValueError("future cone needs t0 < t1")
        R = t1 - t0
        sign_t, proj_sign = 1.0, -1
    else:
        if not t1 < t0:
            raise ValueError("past cone needs t1 < t0")
        R = t0 - t1
        sign_t, proj_sign = -1.0, 1

    ball = ball_integral(run.field_at(t1), R, "density",
                         cfg.n_radial, cfg.n_theta, cfg.n_phi)
    cone = _cone_term(run, t0, R, sign_t, proj_sign, cfg)

    bulk = 0.0
    lo, hi = (t0, t1) if direction == "future" else (t1, t0)
    jsel = [j for j, t in enumerate(run.times) if lo - 1e-9 <= t <= hi + 1e-9]
    if len(jsel) >= 2 and any(
            run.source_term(float(run.times[j]), run.snaps[j]) is not None for j in jsel):
        ts, gs = [], []
        for j in jsel:
            t = float(run.times[j])
            rad = (t - t0) if direction == "future" else (t0 - t)
            phi_src = run.source_term(t, run.snaps[j])
            if rad <= run.grid.h / 4 or phi_src is None:
                g = 0.0
            else:
                g = ball_integral(run.snapshot(j), rad, "pairing",
                                  cfg.n_radial, cfg.n_theta, cfg.n_phi, other=phi_src)
            ts.append(t)
            gs.append(g)
        bulk = float(np.trapz(gs, ts))

    if direction == "future":
        defect = ball - cone - bulk
    else:
        defect = cone - ball - bulk
    return abs(defect) / max(ball, cone, 1e-300)


def _ghost_integrand_series(run: RunHandle, mu: float) -> list[float]:
    """Weighted |P(-omega)phi|^2 space integral at each snapshot."""
    g = run.grid
    r = g.radius()
    with np.errstate(invalid="ignore", divide="ignore"):
        wx = np.where(r > 0, g.coord(1) / np.where(r > 0, r, 1.0), 0.0)
        wy = np.where(r > 0, g.coord(2) / np.where(r > 0, r, 1.0), 0.0)
        wz = np.where(r > 0, g.coord(3) / np.where(r > 0, r, 1.0), 0.0)
    vals = []
    for j, t in enumerate(run.times):
        d = run.snaps[j]
        # omega_i gamma^0 gamma^i phi, component axis first
        a0 = -wx * d[1] + 1j * wy * d[1] - wz * d[0]
        a1 = -wx * d[0] - 1j * wy * d[0] + wz * d[1]
        a2 = wx * d[3] - 1j * wy * d[3] + wz * d[2]
        a3 = wx * d[2] + 1j * wy * d[2] - wz * d[3]
        pm2 = (np.abs(d[0] - a0) ** 2 + np.abs(d[1] - a1) ** 2
               + np.abs(d[2] - a2) ** 2 + np.abs(d[3] - a3) ** 2) / 4.0
        weight = (1.0 + np.abs(t - r)) ** (-(1.0 + 2 * mu))
        vals.append(float(g.h ** 3 * np.sum(pm2 * weight)))
    return vals


def ghost_weight_check(run: RunHandle, cfg: DiagnosticsConfig | None = None):
    """(lhs, rhs) of the ghost-weight inequality over the run window."""
    cfg = cfg or DiagnosticsConfig()
    vals = _ghost_integrand_series(run, cfg.mu)
    pair = [pairing_integral(run, j) for j in range(len(run.times))]
    lhs = float(np.trapz(vals, run.times))
    e1 = charge(run.snapshot(0))
    e2 = charge(run.snapshot(len(run.times) - 1))
    rhs = (2.0 / cfg.mu) * (e1 + e2 + abs(float(np.trapz(pair, run.times))))
    return lhs, rhs


def ghost_flux_series(run: RunHandle, cfg: DiagnosticsConfig | None = None) -> np.ndarray:
    """Running (non-decreasing) ghost-weight accumulator at each snapshot."""
    cfg = cfg or DiagnosticsConfig()
    vals = _ghost_integrand_series(run, cfg.mu)
    out = np.zeros(len(vals))
    for j in range(1, len(vals)):
        out[j] = out[j - 1] + 0.5 * (vals[j] + vals[j - 1]) * (run.times[j] - run.times[j - 1])
    return out


def ks_ratio(run: RunHandle, t: float, cfg: DiagnosticsConfig | None = None) -> float:
    """Empirical Klainerman-Sobolev constant at time t.

    sup of (1+|t+r|)(1+|t-r|)^{1/2} |phi| over the grid, divided by the
    order-2 weighted norm.
    """
    cfg = cfg or DiagnosticsConfig()
    fld = run.field_at(t)
    r = run.grid.radius()
    w = (1.0 + np.abs(t + r)) * np.sqrt(1.0 + np.abs(t - r))
    num = float(np.max(w * np.sqrt(fld.density())))
    den = weighted_norm(run, NormConfig(max_order=cfg.max_order), t=t)
    return num / den if den > 0 else 0.0


def energies_by_order(run: RunHandle, t: float, K: int) -> list[float]:
    """[E^0, ..., E^K](t): squared L^2 norms grouped by derivative order."""
    gens = spacetime_family()
    jet = run.jet(t, K)
    out = [0.0] * (K + 1)

    def rec(jet_cur, start, depth):
        out[depth] += _norm_sq_grid(run.grid, jet_cur[0])
        if depth == K:
            return
        for idx in range(start, len(gens)):
            sub = _apply_generator_to_jet(run.grid, t, jet_cur, gens[idx])
            rec(sub, idx, depth + 1)

    rec(jet, 0, 0)
    return out


def peeling_fit(run: RunHandle, rays, r_min: float | None = None,
                r_max: float | None = None, n_samples: int = 14,
                cfg: DiagnosticsConfig | None = None):
    """Log-log decay exponents of |phi| and |P(-omega)phi| along outgoing rays.

    Each ray is (s, omega); samples r phi(r+s, r omega) for geometrically
    spaced r, drops the leading `decay_exclude` fraction (pre-asymptotic),
    and fits against log(1 + t + r).  Returns medians over the rays plus the
    per-ray samples for dumping.
    """
    cfg = cfg or DiagnosticsConfig()
    g = run.grid
    if r_max is None:
        r_max = g.length / 2 - 2 * g.h
    p_full, p_minus, samples = [], [], []
    for s, omega in rays:
        omega = np.asarray(omega, dtype=float)
        omega = omega / np.linalg.norm(omega)
        hi = min(r_max, run.t_max - s)
        lo = max(4 * g.h, r_min if r_min is not None else 4 * g.h, run.t_min - s + 1e-9)
        if hi <= lo * 1.05:
            raise ValueError("ray leaves the run range immediately")
        if (1 + hi + hi + s) / (1 + 2 * lo + s) < 10.0:
            warnings.warn("ray spans less than one decade in (1+t+r); "
                          "fitted exponents may be unreliable")
        rr = np.geomspace(lo, hi, n_samples)
        pm = projector(tuple(-omega)).floating
        a_full, a_minus = [], []
        for r in rr:
            v = run.sample(r + s, (r * omega)[None, :])[:, 0]
            a_full.append(np.linalg.norm(v))
            a_minus.append(np.linalg.norm(pm @ v))
        x = np.log(1.0 + rr + s + rr)
        keep = x >= x[0] + cfg.decay_exclude * (x[-1] - x[0])
        a_full = np.asarray(a_full)
        a_minus = np.asarray(a_minus)
        ok = keep & (a_full > 0) & (a_minus > 0)
        p_full.append(np.polyfit(x[ok], np.log(a_full[ok]), 1)[0])
        p_minus.append(np.polyfit(x[ok], np.log(a_minus[ok]), 1)[0])
        samples.append((s, omega, rr, a_full, a_minus))
    return float(np.median(p_full)), float(np.median(p_minus)), samples


def collect_log(run: RunHandle, cfg: DiagnosticsConfig | None = None,
                with_energies: bool = False) -> DiagnosticsLog:
    cfg = cfg or DiagnosticsConfig()
    log = DiagnosticsLog()
    flux = ghost_flux_series(run, cfg)
    for j, t in enumerate(run.times):
        fld = run.snapshot(j)
        log.times.append(float(t))
        log.charge.append(charge(fld))
        log.ghost_flux.append(float(flux[j]))
        log.support_radius.append(fld.support_radius())
        log.peak.append(float(np.max(np.abs(fld.data))))
        if with_energies:
            log.energies_by_order.append(energies_by_order(run, float(t), cfg.max_order))
    return log


def dump_ray_samples(samples, base: str | Path):
    """One CSV per ray with (r, |phi| r-sample, |P(-omega)phi| r-sample)."""
    base = Path(base)
    for i, (s, omega, rr, a_full, a_minus) in enumerate(samples):
        with open(base.parent / f"{base.name}_ray{i}.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([f"# s = {s}, omega = {tuple(omega)}"])
            wr.writerow(["r", "abs_phi", "abs_pminus_phi"])
            for k in range(len(rr)):
                wr.writerow([f"{rr[k]:.17g}", f"{a_full[k]:.17g}", f"{a_minus[k]:.17g}"])
