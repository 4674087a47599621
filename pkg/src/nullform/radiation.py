"""Null-infinity representation and radiation-field extraction.

Future/past radiation fields are finite-radius samples r phi(r+s, r omega)
projected onto the good component; the two-radius difference is kept as an
honest per-node error estimate instead of extrapolating the limit.
"""
from __future__ import annotations

import csv
import hashlib
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .grid import Grid, SpinorField, charge
from .propagate import RunHandle, FreePropagator


def sphere_quadrature(n_theta: int, n_phi: int):
    """Gauss-Legendre in cos(theta) x uniform phi; weights sum to 4 pi."""
    mu, wmu = np.polynomial.legendre.leggauss(n_theta)
    order = np.argsort(-mu)  # theta increasing from the north pole
    mu, wmu = mu[order], wmu[order]
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    return mu, wmu, phi


class NullGrid:
    """(s, omega) sampling of null infinity with quadrature weights."""

    def __init__(self, s_min: float, s_max: float, ns: int,
                 n_theta: int = 12, n_phi: int = 24):
        if ns < 2 or s_max <= s_min:
            raise ValueError("need s_max > s_min and ns >= 2")
        self.s_min, self.s_max, self.ns = float(s_min), float(s_max), int(ns)
        self.n_theta, self.n_phi = int(n_theta), int(n_phi)
        self.svals = np.linspace(s_min, s_max, ns)
        self.ds = float(self.svals[1] - self.svals[0])

        mu, wmu, phi = sphere_quadrature(n_theta, n_phi)
        self.mu, self.wmu, self.phi = mu, wmu, phi
        sin_th = np.sqrt(1.0 - mu ** 2)
        cph, sph = np.cos(phi), np.sin(phi)
        self.omega = np.empty((n_theta, n_phi, 3))
        self.omega[..., 0] = sin_th[:, None] * cph[None, :]
        self.omega[..., 1] = sin_th[:, None] * sph[None, :]
        self.omega[..., 2] = mu[:, None] * np.ones_like(cph)[None, :]
        self.weights = np.outer(wmu, np.full(n_phi, 2 * np.pi / n_phi))
        # unit tangent frame for the chart derivatives
        self.sin_theta = np.broadcast_to(sin_th[:, None], (n_theta, n_phi))
        self.e_theta = np.empty_like(self.omega)
        self.e_theta[..., 0] = mu[:, None] * cph[None, :]
        self.e_theta[..., 1] = mu[:, None] * sph[None, :]
        self.e_theta[..., 2] = -sin_th[:, None] * np.ones_like(cph)[None, :]
        self.e_phi = np.zeros_like(self.omega)
        self.e_phi[..., 0] = -np.broadcast_to(sph[None, :], (n_theta, n_phi))
        self.e_phi[..., 1] = np.broadcast_to(cph[None, :], (n_theta, n_phi))
        self._dmu = None

    def s_weights(self) -> np.ndarray:
        """Composite Simpson weights when ns is odd, else trapezoid."""
        w = np.full(self.ns, self.ds)
        if self.ns % 2 == 1 and self.ns >= 3:
            w *= 0.0
            w[0] = w[-1] = 1.0 / 3.0
            w[1:-1:2] = 4.0 / 3.0
            w[2:-1:2] = 2.0 / 3.0
            w *= self.ds
        else:
            w[0] *= 0.5
            w[-1] *= 0.5
        return w

    def node_weights(self) -> np.ndarray:
        """(ns, n_theta, n_phi) product quadrature weights for ds domega."""
        return self.s_weights()[:, None, None] * self.weights[None, :, :]

    def mu_diff_matrix(self) -> np.ndarray:
        """Barycentric differentiation matrix on the Gauss-Legendre mu nodes."""
        if self._dmu is None:
            x = self.mu
            n = len(x)
            b = np.ones(n)
            for j in range(n):
                b[j] = 1.0 / np.prod(x[j] - np.delete(x, j))
            D = np.zeros((n, n))
            for i in range(n):
                for j in range(n):
                    if i != j:
                        D[i, j] = (b[j] / b[i]) / (x[i] - x[j])
                D[i, i] = -np.sum(D[i, np.arange(n) != i])
            self._dmu = D
        return self._dmu

    def deriv_s(self, data: np.ndarray) -> np.ndarray:
        """d/ds by 4th-order centered differences, zero-padded (compact support)."""
        pad = np.zeros((2,) + data.shape[1:], dtype=data.dtype)
        f = np.concatenate([pad, data, pad], axis=0)
        return (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * self.ds)

    def deriv_omega(self, data: np.ndarray, i: int) -> np.ndarray:
        """Tangential derivative d_{omega^i} of (ns, nth, nph, 4) data, i in 1..3."""
        D = self.mu_diff_matrix()
        dmu = np.einsum("ab,sbpc->sapc", D, data)
        dth = -self.sin_theta[None, :, :, None] * dmu
        k = 1j * sfft.fftfreq(self.n_phi, d=1.0 / self.n_phi)
        dph = sfft.ifft(k[None, None, :, None] * sfft.fft(data, axis=2), axis=2)
        et = self.e_theta[None, :, :, i - 1, None]
        ep = self.e_phi[None, :, :, i - 1, None]
        return et * dth + ep * dph / self.sin_theta[None, :, :, None]

    def resolution_check(self):
        if self.ns < 8 or self.n_theta < 4:
            raise ValueError("null grid under-resolved (need ns >= 8, n_theta >= 4)")

    def __eq__(self, other):
        return (isinstance(other, NullGrid)
                and (self.s_min, self.s_max, self.ns, self.n_theta, self.n_phi)
                == (other.s_min, other.s_max, other.ns, other.n_theta, other.n_phi))

    def __hash__(self):
        return hash((self.s_min, self.s_max, self.ns, self.n_theta, self.n_phi))


def project_direction(values: np.ndarray, omega: np.ndarray, sign: int) -> np.ndarray:
    """P(sign*omega) applied pointwise; component axis last, omega (..., 3)."""
    v0, v1, v2, v3 = (values[..., c] for c in range(4))
    w1, w2, w3 = (omega[..., i] for i in range(3))
    a = np.empty_like(values)
    # omega_i gamma^0 gamma^i acting on the spinor
    a[..., 0] = -w1 * v1 + 1j * w2 * v1 - w3 * v0
    a[..., 1] = -w1 * v0 - 1j * w2 * v0 + w3 * v1
    a[..., 2] = w1 * v3 - 1j * w2 * v3 + w3 * v2
    a[..., 3] = w1 * v2 + 1j * w2 * v2 - w3 * v3
    return 0.5 * (values + sign * a)


@dataclass
class RadiationField:
    """Spinor samples on a NullGrid, with extraction radius and error bars."""

    ngrid: NullGrid
    data: np.ndarray                 # (ns, n_theta, n_phi, 4) complex
    extraction_radius: float = math.inf
    error_estimate: np.ndarray | None = None
    residual: np.ndarray | None = None   # retained wrong-component part
    direction: str = "future"

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        shape = (self.ngrid.ns, self.ngrid.n_theta, self.ngrid.n_phi, 4)
        if self.data.shape != shape:
            raise ValueError(f"radiation data must have shape {shape}")
        if self.error_estimate is None:
            self.error_estimate = np.zeros(shape[:3])
        if not np.all(np.isfinite(self.data.view(np.float64))):
            raise FloatingPointError("radiation field contains NaN or Inf")

    def norm(self) -> float:
        w = self.ngrid.node_weights()
        return float(np.sqrt(np.sum(w[..., None] * np.abs(self.data) ** 2)))

    def error_norm(self) -> float:
        w = self.ngrid.node_weights()
        return float(np.sqrt(np.sum(w * self.error_estimate ** 2)))

    def zeros_like(self) -> "RadiationField":
        return RadiationField(self.ngrid, np.zeros_like(self.data),
                              self.extraction_radius, direction=self.direction)


def rf_add(a: RadiationField, b: RadiationField, ca=1.0, cb=1.0) -> RadiationField:
    if a.ngrid != b.ngrid:
        raise ValueError("null grid mismatch")
    err = np.hypot(abs(ca) * a.error_estimate, abs(cb) * b.error_estimate)
    return RadiationField(a.ngrid, ca * a.data + cb * b.data,
                          min(a.extraction_radius, b.extraction_radius),
                          error_estimate=err, direction=a.direction)


def rf_inner(a: RadiationField, b: RadiationField) -> complex:
    w = a.ngrid.node_weights()
    return complex(np.sum(w[..., None] * np.conj(a.data) * b.data))


def extract(run: RunHandle, ngrid: NullGrid, radii, direction: str = "future",
            check_wave_zone: bool = True) -> RadiationField:
    """Radiation field of a run: samples of r phi at the given radii.

    The value is the largest-radius sample with the good-component projector
    applied; the error estimate is the per-node gap to the next radius.  For
    direction "past" the roles of P(omega) and P(-omega) swap and rays run
    backward in time.
    """
    radii = sorted(float(r) for r in np.atleast_1d(radii))
    if not radii:
        raise ValueError("need at least one extraction radius")
    M = radii[-1]
    sgn_t = 1.0 if direction == "future" else -1.0
    proj_sign = 1 if direction == "future" else -1
    if check_wave_zone:
        if direction == "future" and ngrid.s_min < -M / 2 - 1e-9:
            raise ValueError(f"s_min = {ngrid.s_min} below -M/2: ray not in wave zone")
        if direction == "past" and ngrid.s_max > M / 2 + 1e-9:
            raise ValueError(f"s_max = {ngrid.s_max} above M/2: ray not in wave zone")
    half_l = run.grid.length / 2
    if M > half_l - 2 * run.grid.h:
        raise ValueError("extraction radius leaves the interpolation-safe box")

    pts = {r: (r * ngrid.omega).reshape(-1, 3) for r in radii}
    shape = (ngrid.ns, ngrid.n_theta, ngrid.n_phi, 4)
    samples = {r: np.empty(shape, dtype=np.complex128) for r in radii}
    warned = False
    for j, s in enumerate(ngrid.svals):
        for r in radii:
            t = s + sgn_t * r
            if not (run.t_min - 1e-9 <= t <= run.t_max + 1e-9):
                raise ValueError(f"ray time {t} outside run range")
            beyond = (t > run.containment_time if direction == "future"
                      else t < run.containment_time)
            if beyond and not warned:
                warnings.warn(f"ray time {t} beyond containment time "
                              f"{run.containment_time}; wrap-around enters the "
                              "two-radius error estimate")
                warned = True
            v = run.sample(t, pts[r]).T * r     # (nodes, 4)
            samples[r][j] = v.reshape(ngrid.n_theta, ngrid.n_phi, 4)

    raw = samples[M]
    value = project_direction(raw, ngrid.omega[None], proj_sign)
    residual = raw - value
    if len(radii) >= 2:
        prev = project_direction(samples[radii[-2]], ngrid.omega[None], proj_sign)
        err = np.linalg.norm(value - prev, axis=-1)
    else:
        err = np.zeros(shape[:3])
    return RadiationField(ngrid, value, M, error_estimate=err,
                          residual=residual, direction=direction)


def oracle_point_value(phi0: SpinorField, t: float, x) -> np.ndarray:
    """Exact semidiscrete free solution at one (t, x): direct Fourier sum.

    O(n^3) per query; an interpolation-free oracle for the free equation.
    """
    g = phi0.grid
    hat = sfft.fftn(phi0.data, axes=(1, 2, 3), workers=-1)
    hat = FreePropagator(g).apply_hat(hat, t)
    KX, KY, KZ = g.wavenumbers()
    x = np.asarray(x, dtype=float).reshape(3)
    phase = np.exp(1j * (KX * (x[0] + g.length / 2)
                         + KY * (x[1] + g.length / 2)
                         + KZ * (x[2] + g.length / 2)))
    return np.einsum("czyx,zyx->c", hat, phase) / g.n ** 3


def isometry_defect(F: RadiationField, phi0: SpinorField) -> float:
    """| ||F||^2 - charge(phi0) | / charge(phi0); zero data gives 0 by convention."""
    q = charge(phi0)
    if q == 0.0:
        return 0.0
    dens = np.sum(np.abs(F.data) ** 2, axis=-1)
    peak = dens.max()
    if peak > 0 and max(dens[0].max(), dens[-1].max()) > 1e-3 * peak:
        warnings.warn("s-window too small: radiation profile reaches the boundary; "
                      "isometry defect unreliable")
    return abs(F.norm() ** 2 - q) / q


def shift_in_s(F: RadiationField, shift: float) -> np.ndarray:
    """F(s - shift) on the same s grid, cubic in s, zero outside the window."""
    ng = F.ngrid
    q = (ng.svals - shift - ng.s_min) / ng.ds
    out = np.zeros_like(F.data)
    inside = (q >= 0) & (q <= ng.ns - 1)
    qi = q[inside]
    j0 = np.clip(np.floor(qi).astype(int) - 1, 0, ng.ns - 4)
    xi = qi - j0
    w = np.empty((len(qi), 4))
    for a in range(4):
        wa = np.ones_like(qi)
        for b in range(4):
            if b != a:
                wa *= (xi - b) / (a - b)
        w[:, a] = wa
    dst = np.where(inside)[0]
    for a in range(4):
        out[dst] += w[:, a, None, None, None] * F.data[j0 + a]
    return out


def duhamel_radiation(F0: RadiationField, source_fields) -> RadiationField:
    """F0(s) plus the tau-quadrature of shifted source radiation fields.

    source_fields is a time series [(tau, RadiationField), ...] of the free
    radiation fields of the source slices; trapezoid weights in tau.
    """
    taus = np.array([t for t, _ in source_fields], dtype=float)
    if len(taus) == 0:
        return RadiationField(F0.ngrid, F0.data.copy(), F0.extraction_radius,
                              error_estimate=F0.error_estimate.copy(),
                              direction=F0.direction)
    if np.any(np.diff(taus) <= 0):
        raise ValueError("source slices must have increasing times")
    w = np.empty_like(taus)
    if len(taus) == 1:
        w[:] = 1.0
    else:
        w[0] = (taus[1] - taus[0]) / 2
        w[-1] = (taus[-1] - taus[-2]) / 2
        w[1:-1] = (taus[2:] - taus[:-2]) / 2
    acc = F0.data.copy()
    err2 = F0.error_estimate ** 2
    for wt, (tau, Fs) in zip(w, source_fields):
        if Fs.ngrid != F0.ngrid:
            raise ValueError("null grid mismatch among source slices")
        acc += wt * shift_in_s(Fs, tau)
        err2 = err2 + (wt * Fs.error_estimate) ** 2
    return RadiationField(F0.ngrid, acc, F0.extraction_radius,
                          error_estimate=np.sqrt(err2), direction=F0.direction)


def dump_radiation(F: RadiationField, base: str | Path, extra_meta: dict | None = None):
    """Metadata + raw complex data + a per-s CSV summary."""
    base = Path(base)
    payload = np.ascontiguousarray(F.data).tobytes()
    ng = F.ngrid
    meta = {
        "format": "nullform-radiation-v1",
        "s_min": repr(ng.s_min), "s_max": repr(ng.s_max), "ns": ng.ns,
        "n_theta": ng.n_theta, "n_phi": ng.n_phi,
        "mu_nodes": " ".join(repr(v) for v in ng.mu),
        "mu_weights": " ".join(repr(v) for v in ng.wmu),
        "extraction_radius": repr(F.extraction_radius),
        "direction": F.direction,
        "error_norm": repr(F.error_norm()),
        "layout": "[s][theta][phi][component]",
        "endianness": "little",
        "dtype": "complex128 as interleaved (re,im) float64",
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    if extra_meta:
        meta.update(extra_meta)
    base.with_suffix(base.suffix + ".meta").write_text(
        "".join(f"{k} = {v}\n" for k, v in meta.items()))
    base.with_suffix(base.suffix + ".raw").write_bytes(payload)

    dens = np.sum(np.abs(F.data) ** 2, axis=-1)
    res = (np.zeros_like(dens) if F.residual is None
           else np.sum(np.abs(F.residual) ** 2, axis=-1))
    with open(base.with_suffix(base.suffix + ".csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["s", "energy_density", "bad_component_fraction"])
        for j, s in enumerate(ng.svals):
            e = float(np.sum(F.ngrid.weights * dens[j]))
            r = float(np.sum(F.ngrid.weights * res[j]))
            frac = math.sqrt(r / e) if e > 0 else 0.0
            wr.writerow([f"{s:.17g}", f"{e:.17g}", f"{frac:.17g}"])
