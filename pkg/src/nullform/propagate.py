"""Time evolution for the massless Dirac system on the periodic grid.

The free flow is applied exactly in Fourier space (the Hamiltonian form
d/dt phi = -gamma^0 gamma^i d_i phi diagonalizes per mode), so the only time
discretization error comes from the Strang-split nonlinear/source substep.
Semilinear, linearized, and externally sourced runs share one stepping loop.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .clifford import NullFormCoeffs, null_form
from .grid import (CONTAINMENT_FRACTION, Grid, SpinorField, interpolate_data)

BLOWUP_FACTOR = 1e6


class BlowupError(RuntimeError):
    """Raised when the amplitude guard trips (large-data runs may blow up)."""


def g0_apply(data: np.ndarray) -> np.ndarray:
    """gamma^0 applied along the component axis (swaps the 2-spinor blocks)."""
    return np.stack([data[2], data[3], data[0], data[1]])


def alpha_grad(grid: Grid, data: np.ndarray) -> np.ndarray:
    """gamma^0 gamma^i d_i phi, assembled in Fourier space (one round trip)."""
    KX, KY, KZ = grid.wavenumbers()
    f = sfft.fftn(data, axes=(1, 2, 3), workers=-1)
    kp = KX + 1j * KY
    km = KX - 1j * KY
    out = np.empty_like(f)
    out[0] = -(KZ * f[0] + km * f[1])
    out[1] = -(kp * f[0] - KZ * f[1])
    out[2] = KZ * f[2] + km * f[3]
    out[3] = kp * f[2] - KZ * f[3]
    out *= 1j
    return sfft.ifftn(out, axes=(1, 2, 3), workers=-1)


class FreePropagator:
    """Exact free-flow multiplier U(t) = exp(-i t alpha.k) per Fourier mode."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self._cache: dict[float, tuple] = {}

    def _tables(self, t: float):
        tab = self._cache.get(t)
        if tab is None:
            KX, KY, KZ = self.grid.wavenumbers()
            kmag = self.grid.kmag()
            c = np.cos(kmag * t)
            with np.errstate(invalid="ignore", divide="ignore"):
                snc = np.where(kmag > 0, np.sin(kmag * t) / np.where(kmag > 0, kmag, 1.0), t)
            tab = (c, snc * KX, snc * KY, snc * KZ)
            if len(self._cache) > 8:
                self._cache.clear()
            self._cache[t] = tab
        return tab

    def apply_hat(self, f: np.ndarray, t: float) -> np.ndarray:
        c, s1, s2, s3 = self._tables(t)
        sm = s1 - 1j * s2
        sp = s1 + 1j * s2
        out = np.empty_like(f)
        # upper 2-spinor gets cos + i sigma.s, lower its conjugate transpose
        out[0] = c * f[0] + 1j * (s3 * f[0] + sm * f[1])
        out[1] = c * f[1] + 1j * (sp * f[0] - s3 * f[1])
        out[2] = c * f[2] - 1j * (s3 * f[2] + sm * f[3])
        out[3] = c * f[3] - 1j * (sp * f[2] - s3 * f[3])
        return out

    def apply(self, data: np.ndarray, t: float) -> np.ndarray:
        if t == 0.0:
            return data.copy()
        hat = sfft.fftn(data, axes=(1, 2, 3), workers=-1)
        hat = self.apply_hat(hat, t)
        return sfft.ifftn(hat, axes=(1, 2, 3), workers=-1)


def free_step(fld: SpinorField, dt: float) -> SpinorField:
    """One exact free step; unitary per mode up to rounding."""
    return SpinorField(fld.grid, fld.time + dt, FreePropagator(fld.grid).apply(fld.data, dt))


@dataclass
class LinearizedNonlinearity:
    """Marker for the first-variation equation around a stored background run."""

    background: "RunHandle"
    coeffs: NullFormCoeffs


@dataclass
class EvolveConfig:
    dt: float
    t_final: float
    snapshot_every: int = 1
    direction: str = "forward"
    nonlinearity: object = None  # None | NullFormCoeffs | LinearizedNonlinearity

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.snapshot_every < 1:
            raise ValueError("snapshot cadence must be >= 1")
        if self.direction not in ("forward", "backward"):
            raise ValueError("direction must be forward or backward")


class RunHandle:
    """Snapshots of one evolution plus enough context to reconstruct d_t phi."""

    def __init__(self, grid, cfg, times, snaps, source=None, containment_time=math.inf):
        self.grid = grid
        self.cfg = cfg
        self.times = np.asarray(times, dtype=float)
        self.snaps = snaps
        self.source = source
        self.containment_time = containment_time
        self.propagator = FreePropagator(grid)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must be strictly monotone")

    @property
    def t_min(self):
        return float(self.times[0])

    @property
    def t_max(self):
        return float(self.times[-1])

    def _check_range(self, t: float):
        if t < self.t_min - 1e-9 or t > self.t_max + 1e-9:
            raise ValueError(f"time {t} outside run range [{self.t_min}, {self.t_max}]")

    def snapshot(self, j: int) -> SpinorField:
        return SpinorField(self.grid, float(self.times[j]), self.snaps[j])

    def field_data_at(self, t: float) -> np.ndarray:
        """Field at arbitrary time: snapshot lookup or cubic time interpolation."""
        self._check_range(t)
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) < 1e-9:
            return self.snaps[j]
        if len(self.times) < 4:
            raise ValueError("need at least 4 snapshots for time interpolation")
        j0 = int(np.searchsorted(self.times, t)) - 1
        j0 = min(max(j0 - 1, 0), len(self.times) - 4)
        ts = self.times[j0:j0 + 4]
        out = np.zeros_like(self.snaps[0])
        for a in range(4):
            w = 1.0
            for b in range(4):
                if b != a:
                    w *= (t - ts[b]) / (ts[a] - ts[b])
            out += w * self.snaps[j0 + a]
        return out

    def field_at(self, t: float) -> SpinorField:
        return SpinorField(self.grid, t, self.field_data_at(t))

    def sample(self, t: float, points: np.ndarray) -> np.ndarray:
        """Tricubic spatial samples of the (time-interpolated) field, (4, m)."""
        return interpolate_data(self.grid, self.field_data_at(t), points)

    def source_term(self, t: float, data: np.ndarray) -> np.ndarray | None:
        """Phi(t) in D phi = Phi for this run, evaluated on the given state."""
        nl = self.cfg.nonlinearity
        if isinstance(nl, NullFormCoeffs):
            return null_form(nl, data, data)
        if isinstance(nl, LinearizedNonlinearity):
            bg = nl.background.field_data_at(t)
            return null_form(nl.coeffs, bg, data) + null_form(nl.coeffs, data, bg)
        if self.source is not None:
            return np.asarray(self.source(t), dtype=np.complex128)
        return None

    def time_derivative_data(self, t: float) -> np.ndarray:
        data = self.field_data_at(t)
        out = -alpha_grad(self.grid, data)
        phi_src = self.source_term(t, data)
        if phi_src is not None:
            out += g0_apply(phi_src)
        return out

    def jet(self, t: float, order: int) -> list[np.ndarray]:
        """[phi, d_t phi, ..., d_t^order phi] at time t, all from the equation.

        Works for free, semilinear, and linearized runs; externally sourced
        runs only support order <= 1 (no analytic source derivatives).
        """
        self._check_range(t)
        nl = self.cfg.nonlinearity
        if isinstance(nl, LinearizedNonlinearity):
            bg_jet = nl.background.jet(t, max(order - 1, 0))
        vs = [self.field_data_at(t)]
        for j in range(order):
            nxt = -alpha_grad(self.grid, vs[j])
            if isinstance(nl, NullFormCoeffs):
                src = np.zeros_like(vs[0])
                for m in range(j + 1):
                    src += math.comb(j, m) * null_form(nl, vs[m], vs[j - m])
                nxt += g0_apply(src)
            elif isinstance(nl, LinearizedNonlinearity):
                src = np.zeros_like(vs[0])
                for m in range(j + 1):
                    src += math.comb(j, m) * (null_form(nl.coeffs, bg_jet[m], vs[j - m])
                                              + null_form(nl.coeffs, vs[m], bg_jet[j - m]))
                nxt += g0_apply(src)
            elif self.source is not None:
                if j > 0:
                    raise NotImplementedError("jets beyond order 1 need an analytic source")
                nxt += g0_apply(np.asarray(self.source(t), dtype=np.complex128))
            vs.append(nxt)
        return vs


def free_run_at_times(phi0: SpinorField, times) -> RunHandle:
    """Free run with snapshots at arbitrary (sorted) times via exact jumps.

    Handy for ray sampling: the free propagator reaches any time in one
    multiplier application, so sparse non-uniform snapshot sets are cheap.
    """
    times = sorted(set(float(t) for t in times))
    prop = FreePropagator(phi0.grid)
    hat = sfft.fftn(phi0.data, axes=(1, 2, 3), workers=-1)
    snaps = [sfft.ifftn(prop.apply_hat(hat, t - phi0.time), axes=(1, 2, 3), workers=-1)
             for t in times]
    cfg = EvolveConfig(dt=1.0, t_final=1.0)
    return RunHandle(phi0.grid, cfg, times, snaps)


def reconstruct_time_derivative(run: RunHandle, t: float) -> SpinorField:
    """d_t phi evaluated from the equation (never by differencing snapshots)."""
    run._check_range(t)
    return SpinorField(run.grid, t, run.time_derivative_data(t))


def _substep(data, t, dt, source_fn):
    """Explicit midpoint for d_t u = gamma^0 Phi(t, u) over [t, t+dt]."""
    k1 = g0_apply(source_fn(t, data))
    mid = data + (0.5 * dt) * k1
    k2 = g0_apply(source_fn(t + 0.5 * dt, mid))
    return data + dt * k2


def evolve(phi0: SpinorField, cfg: EvolveConfig, source=None) -> RunHandle:
    """Run the evolution and record snapshots.

    Free runs (no nonlinearity, no source) advance by exact Fourier jumps
    between snapshot times; everything else uses Strang splitting
    U(dt/2) . midpoint . U(dt/2) per step.
    """
    phi0.check_finite()
    if not phi0.contained():
        warnings.warn("initial data support exceeds 0.45 L; wrap-around may "
                      "contaminate diagnostics")
    grid = phi0.grid
    prop = FreePropagator(grid)
    sgn = 1.0 if cfg.direction == "forward" else -1.0
    nsteps = max(1, round(abs(cfg.t_final) / cfg.dt))
    dt = sgn * abs(cfg.t_final) / nsteps
    t0 = phi0.time

    times = [t0]
    snaps = [phi0.data.copy()]
    peak0 = float(np.max(np.abs(phi0.data)))

    free = cfg.nonlinearity is None and source is None
    data = phi0.data
    if free:
        jump = dt * cfg.snapshot_every
        nrec = nsteps // cfg.snapshot_every
        hat = sfft.fftn(data, axes=(1, 2, 3), workers=-1)
        for j in range(1, nrec + 1):
            hat = prop.apply_hat(hat, jump)
            times.append(t0 + j * jump)
            snaps.append(sfft.ifftn(hat, axes=(1, 2, 3), workers=-1))
        if nsteps % cfg.snapshot_every:
            rest = dt * nsteps - nrec * jump
            hat = prop.apply_hat(hat, rest)
            times.append(t0 + dt * nsteps)
            snaps.append(sfft.ifftn(hat, axes=(1, 2, 3), workers=-1))
    else:
        nl = cfg.nonlinearity

        def src_fn(t, u):
            if isinstance(nl, NullFormCoeffs):
                return null_form(nl, u, u)
            if isinstance(nl, LinearizedNonlinearity):
                bg = nl.background.field_data_at(t)
                return null_form(nl.coeffs, bg, u) + null_form(nl.coeffs, u, bg)
            return np.asarray(source(t), dtype=np.complex128)

        t = t0
        data = data.copy()
        for step in range(1, nsteps + 1):
            data = prop.apply(data, 0.5 * dt)
            data = _substep(data, t, dt, src_fn)
            data = prop.apply(data, 0.5 * dt)
            t = t0 + step * dt
            peak = float(np.max(np.abs(data)))
            if not math.isfinite(peak):
                raise BlowupError(f"non-finite field at t = {t}")
            if peak > BLOWUP_FACTOR * max(peak0, 1e-300):
                raise BlowupError(f"amplitude guard tripped at t = {t}")
            if step % cfg.snapshot_every == 0 or step == nsteps:
                times.append(t)
                snaps.append(data.copy())

    if sgn < 0:
        times = times[::-1]
        snaps = snaps[::-1]

    containment_time = math.inf if sgn > 0 else -math.inf
    order = range(len(times)) if sgn > 0 else range(len(times) - 1, -1, -1)
    for j in order:
        fld = SpinorField(grid, times[j], snaps[j])
        if not fld.contained():
            containment_time = times[j]
            break

    return RunHandle(grid, cfg, times, snaps, source=source,
                     containment_time=containment_time)
