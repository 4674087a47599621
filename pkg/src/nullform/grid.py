"""Periodic 3-D computational domain and C^4-valued grid fields.

The box is an origin-centered torus [-L/2, L/2)^3 standing in for R^3;
experiments must keep the field support inside 0.45 L so nothing wraps into
the diagnostic region.  Field data is complex128 with layout
[component][z][y][x] (x fastest), which is also the dump layout.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

# spatial axis (1=x, 2=y, 3=z) -> array axis of the [c][z][y][x] layout
AXIS_TO_DIM = {1: 3, 2: 2, 3: 1}

SUPPORT_THRESHOLD = 1e-10
CONTAINMENT_FRACTION = 0.45


class Grid:
    """Uniform periodic grid with n points per axis on a box of side length L."""

    def __init__(self, n: int, length: float):
        if n < 16 or n % 2:
            raise ValueError("n must be an even integer >= 16")
        if length <= 0:
            raise ValueError("box length must be positive")
        self.n = int(n)
        self.length = float(length)
        self.h = self.length / self.n
        self.axis_coords = -self.length / 2 + self.h * np.arange(self.n)
        self._cache: dict[str, object] = {}

    def __repr__(self):
        return f"Grid(n={self.n}, length={self.length})"

    def __eq__(self, other):
        return isinstance(other, Grid) and self.n == other.n and self.length == other.length

    def __hash__(self):
        return hash((self.n, self.length))

    def coords(self):
        """(X, Y, Z) broadcastable over the [z][y][x] data layout."""
        if "coords" not in self._cache:
            c = self.axis_coords
            Z = c[:, None, None]
            Y = c[None, :, None]
            X = c[None, None, :]
            self._cache["coords"] = (X, Y, Z)
        return self._cache["coords"]

    def coord(self, axis: int):
        return self.coords()[axis - 1]

    def radius(self):
        if "radius" not in self._cache:
            X, Y, Z = self.coords()
            self._cache["radius"] = np.sqrt(X ** 2 + Y ** 2 + Z ** 2)
        return self._cache["radius"]

    def wavenumbers(self):
        """(KX, KY, KZ) broadcastable over [z][y][x]."""
        if "wavenumbers" not in self._cache:
            k = 2 * np.pi * sfft.fftfreq(self.n, d=self.h)
            KZ = k[:, None, None]
            KY = k[None, :, None]
            KX = k[None, None, :]
            self._cache["wavenumbers"] = (KX, KY, KZ)
        return self._cache["wavenumbers"]

    def kmag(self):
        if "kmag" not in self._cache:
            KX, KY, KZ = self.wavenumbers()
            self._cache["kmag"] = np.sqrt(KX ** 2 + KY ** 2 + KZ ** 2)
        return self._cache["kmag"]


@dataclass
class SpinorField:
    """A C^4-valued field sampled on a Grid at one instant."""

    grid: Grid
    time: float
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        n = self.grid.n
        if self.data.shape != (4, n, n, n):
            raise ValueError(f"field data must have shape (4, {n}, {n}, {n})")

    def check_finite(self):
        if not np.all(np.isfinite(self.data.view(np.float64))):
            raise FloatingPointError("field contains NaN or Inf")

    def density(self) -> np.ndarray:
        """|phi|^2 summed over spinor components."""
        return np.sum(np.abs(self.data) ** 2, axis=0)

    def support_radius(self, rel_threshold: float = SUPPORT_THRESHOLD) -> float:
        """Largest |x| where |phi| exceeds rel_threshold * max |phi|."""
        den = self.density()
        peak = float(den.max())
        if peak == 0.0:
            return 0.0
        mask = den > (rel_threshold ** 2) * peak
        return float(self.grid.radius()[mask].max())

    def contained(self) -> bool:
        return self.support_radius() <= CONTAINMENT_FRACTION * self.grid.length

    def copy(self, time=None) -> "SpinorField":
        return SpinorField(self.grid, self.time if time is None else time, self.data.copy())


@dataclass(frozen=True)
class DataSpec:
    """Analytic initial-data profile: gaussian, bump, or a single lattice mode."""

    kind: str
    center: tuple = (0.0, 0.0, 0.0)
    width: float = 1.0
    polarization: tuple = (1.0, 0.0, 0.0, 0.0)
    amplitude: float = 1.0
    mode: tuple = (0, 0, 1)  # integer lattice wavevector, plane-wave-mode only

    def __post_init__(self):
        if self.kind not in ("gaussian", "bump", "plane-wave-mode"):
            raise ValueError(f"unknown data kind {self.kind!r}")


def make_field(grid: Grid, spec: DataSpec) -> SpinorField:
    """Sample the analytic profile of a DataSpec on the grid at t = 0."""
    pol = np.asarray(spec.polarization, dtype=np.complex128).reshape(4)
    X, Y, Z = grid.coords()
    if spec.kind == "plane-wave-mode":
        k = 2 * np.pi / grid.length * np.asarray(spec.mode, dtype=float)
        phase = np.exp(1j * (k[0] * X + k[1] * Y + k[2] * Z))
        data = spec.amplitude * pol[:, None, None, None] * phase[None]
        return SpinorField(grid, 0.0, data)

    if spec.width < 4 * grid.h:
        raise ValueError(
            f"profile width {spec.width} under-resolved: need width >= 4 h = {4 * grid.h}")
    r2 = ((X - spec.center[0]) ** 2 + (Y - spec.center[1]) ** 2
          + (Z - spec.center[2]) ** 2)
    if spec.kind == "gaussian":
        prof = np.exp(-r2 / (2 * spec.width ** 2))
    else:  # bump, radius 4*width
        rho2 = r2 / (4 * spec.width) ** 2
        with np.errstate(divide="ignore", over="ignore"):
            prof = np.where(rho2 < 1.0, np.exp(1.0 - 1.0 / np.maximum(1.0 - rho2, 1e-300)), 0.0)
    data = spec.amplitude * pol[:, None, None, None] * prof[None]
    return SpinorField(grid, 0.0, data)


def derivative(fld: SpinorField, axis: int) -> SpinorField:
    """Spectral d/dx_axis, axis in 1..3."""
    return SpinorField(fld.grid, fld.time, derivative_data(fld.grid, fld.data, axis))


def derivative_data(grid: Grid, data: np.ndarray, axis: int) -> np.ndarray:
    dim = AXIS_TO_DIM[axis]
    k = 2 * np.pi * sfft.fftfreq(grid.n, d=grid.h)
    shape = [1, 1, 1, 1]
    shape[dim] = grid.n
    hat = sfft.fft(data, axis=dim, workers=-1)
    hat *= 1j * k.reshape(shape)
    return sfft.ifft(hat, axis=dim, workers=-1)


def charge(fld: SpinorField) -> float:
    """h^3 * sum |phi|^2, the conserved L^2 mass."""
    return float(fld.grid.h ** 3 * np.sum(np.abs(fld.data) ** 2))


def charge_spectral(fld: SpinorField) -> float:
    """Same integral evaluated through the discrete Parseval identity."""
    hat = sfft.fftn(fld.data, axes=(1, 2, 3), workers=-1)
    return float(fld.grid.h ** 3 / fld.grid.n ** 3 * np.sum(np.abs(hat) ** 2))


def inner_product(a: SpinorField, b: SpinorField) -> complex:
    """h^3 sum conj(a) . b  (conjugate-linear in the first argument)."""
    return complex(a.grid.h ** 3 * np.vdot(a.data, b.data))


def _cubic_weights(xi: np.ndarray) -> np.ndarray:
    """Cubic Lagrange weights on the 4-node stencil {-1,0,1,2} at offset xi in [0,1)."""
    wm1 = -xi * (xi - 1.0) * (xi - 2.0) / 6.0
    w0 = (xi + 1.0) * (xi - 1.0) * (xi - 2.0) / 2.0
    w1 = -(xi + 1.0) * xi * (xi - 2.0) / 2.0
    w2 = (xi + 1.0) * xi * (xi - 1.0) / 6.0
    return np.stack([wm1, w0, w1, w2], axis=-1)


def interp_stencil(grid: Grid, points: np.ndarray):
    """Per-axis stencil indices and weights for tricubic interpolation.

    Returns (idx, wts): three (m, 4) int arrays (x, y, z axes) and three
    (m, 4) weight arrays.  Shared by interpolation (gather) and its adjoint
    (scatter) so the two stay exact transposes of each other.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(np.abs(points) > grid.length / 2 + 1e-12):
        raise ValueError("interpolation point outside the box")
    g = (points + grid.length / 2) / grid.h
    i0 = np.floor(g).astype(np.int64)
    xi = g - i0
    idx = [np.mod(i0[:, a, None] + np.arange(-1, 3)[None, :], grid.n) for a in range(3)]
    wts = [_cubic_weights(xi[:, a]) for a in range(3)]
    return idx, wts


def gather_with_stencil(data: np.ndarray, idx, wts) -> np.ndarray:
    """Tricubic gather using a precomputed stencil; returns (4, m)."""
    ix, iy, iz = idx
    wx, wy, wz = wts
    m = ix.shape[0]
    sel = np.arange(m)
    out = np.zeros((4, m), dtype=np.complex128)
    for a in range(4):
        wza = wz[:, a]
        iza = iz[:, a]
        for b in range(4):
            w_zy = wza * wy[:, b]
            plane = data[:, iza, iy[:, b], :]     # (4, m, n)
            for c in range(4):
                out += (w_zy * wx[:, c]) * plane[:, sel, ix[:, c]]
    return out


def scatter_with_stencil(values: np.ndarray, idx, wts, n: int) -> np.ndarray:
    """Exact transpose of gather_with_stencil: spread (4, m) into (4, n, n, n)."""
    ix, iy, iz = idx
    wx, wy, wz = wts
    out = np.zeros((4, n, n, n), dtype=np.complex128)
    flat = out.reshape(4, -1)
    for a in range(4):
        for b in range(4):
            w_zy = wz[:, a] * wy[:, b]
            base = (iz[:, a] * n + iy[:, b]) * n
            for c in range(4):
                lin = base + ix[:, c]
                np.add.at(flat, (slice(None), lin), (w_zy * wx[:, c]) * values)
    return out


def interpolate_data(grid: Grid, data: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Tricubic interpolation of (4,n,n,n) data at points (m,3); returns (4,m)."""
    idx, wts = interp_stencil(grid, points)
    return gather_with_stencil(data, idx, wts)


def scatter_data(grid: Grid, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Adjoint of interpolate_data: spread (4,m) values into an (4,n,n,n) array."""
    idx, wts = interp_stencil(grid, points)
    return scatter_with_stencil(values, idx, wts, grid.n)


def interpolate(fld: SpinorField, point) -> np.ndarray:
    """Spinor value at an off-grid point (tricubic, O(h^4) on smooth fields)."""
    return interpolate_data(fld.grid, fld.data, np.asarray(point, dtype=float).reshape(1, 3))[:, 0]


def dump_field(fld: SpinorField, base: str | Path, extra_meta: dict | None = None) -> None:
    """Write <base>.meta (text) and <base>.raw (little-endian float64 pairs)."""
    base = Path(base)
    raw = np.ascontiguousarray(fld.data)
    if np.little_endian is False:
        raw = raw.byteswap()
    payload = raw.tobytes()
    meta = {
        "format": "nullform-field-v1",
        "n": fld.grid.n,
        "length": repr(fld.grid.length),
        "time": repr(fld.time),
        "layout": "[component][z][y][x]",
        "endianness": "little",
        "dtype": "complex128 as interleaved (re,im) float64",
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    if extra_meta:
        meta.update(extra_meta)
    base.with_suffix(base.suffix + ".meta").write_text(
        "".join(f"{k} = {v}\n" for k, v in meta.items()))
    base.with_suffix(base.suffix + ".raw").write_bytes(payload)


def load_field(base: str | Path) -> SpinorField:
    base = Path(base)
    meta = {}
    for line in base.with_suffix(base.suffix + ".meta").read_text().splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            meta[k.strip()] = v.strip()
    n = int(meta["n"])
    g = Grid(n, float(meta["length"]))
    payload = base.with_suffix(base.suffix + ".raw").read_bytes()
    data = np.frombuffer(payload, dtype="<c16").reshape(4, n, n, n).copy()
    return SpinorField(g, float(meta["time"]), data)
