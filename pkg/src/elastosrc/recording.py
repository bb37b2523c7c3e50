"""Measurement-sphere sampling, traces, tractions and discrete norms.

The measurement sphere |x| = R1 is discretised by a Fibonacci lattice with
equal quadrature weights 4 pi R1^2 / N (quasi-uniform, no pole clustering).
Displacement is interpolated trilinearly from the solver's nodal field;
tractions use fourth-order central differences of the displacement, one
order above the solver so their error stays subdominant.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import arrayio

__all__ = [
    "fibonacci_sphere",
    "GridSampler",
    "compute_traction",
    "BoundaryTrace",
    "BoundaryRecorder",
    "VolumeTrace",
    "VolumeRecorder",
    "SnapshotRecorder",
    "betti_residual",
    "sobolev_trace_norm",
    "save_trace",
    "load_trace",
    "trace_to_csv",
]


def fibonacci_sphere(n_points):
    """Quasi-uniform unit directions (N, 3) on the Fibonacci lattice."""
    i = np.arange(n_points)
    z = 1.0 - (2.0 * i + 1.0) / n_points
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


_D4_TAPS = np.array([-2, -1, 1, 2])
_D4_COEF = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0


class GridSampler:
    """Interpolates nodal fields (and gradients) at fixed off-grid points.

    Values are trilinear over the 8 surrounding nodes; gradients apply the
    4th-order central difference at each corner before the trilinear blend.
    Points must keep two cells of clearance from the grid edge.
    """

    def __init__(self, grid, points):
        points = np.asarray(points, dtype=float)
        n = grid.n
        h = grid.h
        s = (points + grid.halfwidth) / h
        i0 = np.floor(s).astype(np.int64)
        if np.any(i0 < 2) or np.any(i0 > n - 3):
            raise ValueError("sample point stencil leaves the grid "
                             "(need two cells of clearance)")
        frac = s - i0

        wx = np.stack([1.0 - frac[:, 0], frac[:, 0]], axis=1)
        wy = np.stack([1.0 - frac[:, 1], frac[:, 1]], axis=1)
        wz = np.stack([1.0 - frac[:, 2], frac[:, 2]], axis=1)
        corners = []
        weights = []
        stride = np.array([(n + 1) ** 2, n + 1, 1], dtype=np.int64)
        base = i0 @ stride
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    corners.append(base + dx * stride[0] + dy * stride[1] + dz * stride[2])
                    weights.append(wx[:, dx] * wy[:, dy] * wz[:, dz])
        self.flat = np.stack(corners, axis=1)          # (N, 8)
        self.w8 = np.stack(weights, axis=1)            # (N, 8)
        self.h = h
        self.n = n
        self.stride = stride
        self.n_points = points.shape[0]

    def values(self, comps):
        """Sample three nodal component arrays; returns (N, 3)."""
        out = np.empty((self.n_points, len(comps)))
        for c, arr in enumerate(comps):
            out[:, c] = (arr.ravel()[self.flat] * self.w8).sum(axis=1)
        return out

    def gradients(self, comps):
        """d comp_i / d x_j at the points; returns (N, 3, 3)."""
        out = np.empty((self.n_points, len(comps), 3))
        for axis in range(3):
            idx = self.flat[:, :, None] + (_D4_TAPS * self.stride[axis])[None, None, :]
            w = self.w8[:, :, None] * (_D4_COEF / self.h)[None, None, :]
            for c, arr in enumerate(comps):
                out[:, c, axis] = (arr.ravel()[idx] * w).sum(axis=(1, 2))
        return out


def compute_traction(u_comps, grid, points, normals, material, sampler=None):
    """Surface traction sigma(u) n at the given points.

    ``u_comps`` are the three nodal displacement arrays.  The stress is
    assembled from 4th-order central differences of u and contracted with
    the unit normals.
    """
    if sampler is None:
        sampler = GridSampler(grid, points)
    G = sampler.gradients(u_comps)                     # (N, 3, 3)
    div = G[:, 0, 0] + G[:, 1, 1] + G[:, 2, 2]
    E = 0.5 * (G + np.swapaxes(G, 1, 2))
    pts = np.asarray(points)
    lam = np.asarray(material.lam_at(pts[:, 0], pts[:, 1], pts[:, 2]))
    mu = np.asarray(material.mu_at(pts[:, 0], pts[:, 1], pts[:, 2]))
    normals = np.asarray(normals, dtype=float)
    En = np.einsum("nij,nj->ni", E, normals)
    return (lam * div)[:, None] * normals + 2.0 * mu[:, None] * En


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------

@dataclass
class BoundaryTrace:
    """u and traction time series on the measurement sphere.

    ``u_series`` and ``traction_series`` have shape (N, n_t, 3) with the
    first time sample at t = 0 (all zero for runs that start from rest).
    """

    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    u_series: np.ndarray
    traction_series: np.ndarray
    dt: float
    radius: float

    @property
    def n_points(self):
        return self.points.shape[0]

    @property
    def n_times(self):
        return self.u_series.shape[1]

    @property
    def times(self):
        return self.dt * np.arange(self.n_times)

    def restrict(self, t_max):
        """Trace truncated to samples with t <= t_max."""
        m = int(math.floor(t_max / self.dt + 1e-9)) + 1
        m = min(m, self.n_times)
        return BoundaryTrace(self.points, self.weights, self.normals,
                             self.u_series[:, :m], self.traction_series[:, :m],
                             self.dt, self.radius)

    def surface_integral(self, values):
        """Quadrature sum over the sphere of per-point ``values`` (N, ...)."""
        return np.tensordot(self.weights, values, axes=(0, 0))

    def copy_with_noise(self, delta, rng):
        """Additive iid Gaussian noise, amplitude delta x max |u_series|."""
        scale_u = delta * float(np.max(np.abs(self.u_series)))
        scale_t = delta * float(np.max(np.abs(self.traction_series)))
        return BoundaryTrace(
            self.points, self.weights, self.normals,
            self.u_series + rng.normal(0.0, 1.0, self.u_series.shape) * scale_u,
            self.traction_series
            + rng.normal(0.0, 1.0, self.traction_series.shape) * scale_t,
            self.dt, self.radius,
        )


class BoundaryRecorder:
    """Records u and traction on the sphere |x| = radius at every step."""

    def __init__(self, radius, n_points, material, every=1):
        self.radius = radius
        self.n_points = n_points
        self.material = material
        self.every = every
        self.normals = fibonacci_sphere(n_points)
        self.points = radius * self.normals
        self.weights = np.full(n_points, 4.0 * math.pi * radius**2 / n_points)
        self._u = []
        self._trac = []
        self.dt = None

    def on_start(self, solver):
        if solver.sponge is not None and \
                self.radius + 2.5 * solver.h > solver.sponge.inner:
            raise ValueError("measurement sphere intersects the absorbing layer")
        self._sampler = GridSampler(solver.grid, self.points)
        self.dt = solver.dt * self.every
        self._u.append(self._sampler.values(solver.u))
        self._trac.append(compute_traction(solver.u, solver.grid, self.points,
                                           self.normals, self.material,
                                           sampler=self._sampler))

    def on_step(self, solver):
        if solver.step_index % self.every:
            return
        self._u.append(self._sampler.values(solver.u))
        self._trac.append(compute_traction(solver.u, solver.grid, self.points,
                                           self.normals, self.material,
                                           sampler=self._sampler))

    def trace(self) -> BoundaryTrace:
        u = np.transpose(np.array(self._u), (1, 0, 2))
        tr = np.transpose(np.array(self._trac), (1, 0, 2))
        return BoundaryTrace(self.points, self.weights, self.normals,
                             u, tr, self.dt, self.radius)


@dataclass
class VolumeTrace:
    """u time series on a set of grid nodes (shape (M, n_t, 3))."""

    points: np.ndarray
    u_series: np.ndarray
    dt: float

    @property
    def times(self):
        return self.dt * np.arange(self.u_series.shape[1])


class VolumeRecorder:
    """Records u on the nodes inside a ball or box region."""

    def __init__(self, center=(0.0, 0.0, 0.0), radius=None, box=None, every=1):
        if (radius is None) == (box is None):
            raise ValueError("specify exactly one of radius / box")
        self.center = np.asarray(center, dtype=float)
        self.radius = radius
        self.box = box
        self.every = every
        self._u = []
        self.dt = None

    def on_start(self, solver):
        nd = solver.grid.nodes
        X, Y, Z = np.meshgrid(nd, nd, nd, indexing="ij")
        if self.radius is not None:
            m = ((X - self.center[0])**2 + (Y - self.center[1])**2
                 + (Z - self.center[2])**2) <= self.radius**2
        else:
            (x0, y0, z0), (x1, y1, z1) = self.box
            m = ((X >= x0) & (X <= x1) & (Y >= y0) & (Y <= y1)
                 & (Z >= z0) & (Z <= z1))
        if not m.any():
            raise ValueError("volume observation mask is empty")
        self._mask = m
        self.points = np.stack([X[m], Y[m], Z[m]], axis=1)
        self.dt = solver.dt * self.every
        self._record(solver)

    def _record(self, solver):
        ux, uy, uz = solver.u
        self._u.append(np.stack([ux[self._mask], uy[self._mask], uz[self._mask]],
                                axis=1))

    def on_step(self, solver):
        if solver.step_index % self.every:
            return
        self._record(solver)

    def trace(self) -> VolumeTrace:
        return VolumeTrace(self.points, np.transpose(np.array(self._u), (1, 0, 2)),
                           self.dt)


class SnapshotRecorder:
    """Dumps displacement snapshots to .arr files every k steps."""

    def __init__(self, directory, every, prefix="snap"):
        self.directory = Path(directory)
        self.every = every
        self.prefix = prefix
        self.files = []

    def on_start(self, solver):
        self.directory.mkdir(parents=True, exist_ok=True)

    def on_step(self, solver):
        if self.every <= 0 or solver.step_index % self.every:
            return
        for name, arr in zip(("ux", "uy", "uz"), solver.u):
            path = self.directory / f"{self.prefix}_{solver.step_index:06d}_{name}.arr"
            arrayio.write_array(path, arr)
            self.files.append(path)


# ---------------------------------------------------------------------------
# the elastic Green identity as a quadrature self-test
# ---------------------------------------------------------------------------

def _box_weights(shape, h):
    w = [np.ones(s) for s in shape]
    for a in w:
        a[0] = a[-1] = 0.5
    return (w[0][:, None, None] * w[1][None, :, None] * w[2][None, None, :]) * h**3


def betti_residual(U, V, coords, material):
    """| -int L(U).conj(V) - int E(U, conj(V)) + oint conj(V).T(U) | on a box.

    ``U``/``V`` are (3, nx, ny, nz) samples on the tensor grid ``coords``
    = (x, y, z); all derivatives are second-order differences, integrals are
    trapezoidal, so the identity holds to O(h^2) for smooth fields.
    """
    x, y, z = coords
    h = float(x[1] - x[0])
    X, Y, Z = np.meshgrid(x, y, z, indexing="ij")
    lam = np.asarray(material.lam_at(X, Y, Z)) + np.zeros(X.shape)
    mu = np.asarray(material.mu_at(X, Y, Z)) + np.zeros(X.shape)

    U = np.asarray(U)
    V = np.asarray(V)
    gU = np.stack([np.stack(np.gradient(U[c], h), axis=0) for c in range(3)])
    # gU[c, a] = d U_c / d x_a
    divU = gU[0, 0] + gU[1, 1] + gU[2, 2]
    EU = 0.5 * (gU + np.transpose(gU, (1, 0, 2, 3, 4)))
    sig = 2.0 * mu * EU
    for c in range(3):
        sig[c, c] += lam * divU

    # L(U) = div sigma(U)
    LU = np.empty_like(U, dtype=sig.dtype)
    for c in range(3):
        d = np.gradient(sig[c, 0], h, axis=0)
        d = d + np.gradient(sig[c, 1], h, axis=1)
        d = d + np.gradient(sig[c, 2], h, axis=2)
        LU[c] = d

    Vc = np.conj(V)
    W = _box_weights(U.shape[1:], h)
    lhs = -np.sum(W * np.einsum("cijk,cijk->ijk", LU, Vc))

    gV = np.stack([np.stack(np.gradient(V[c], h), axis=0) for c in range(3)])
    divV = gV[0, 0] + gV[1, 1] + gV[2, 2]
    EV = 0.5 * (gV + np.transpose(gV, (1, 0, 2, 3, 4)))
    energy = np.sum(W * (lam * divU * np.conj(divV)
                         + 2.0 * mu * np.einsum("abijk,abijk->ijk", EU, np.conj(EV))))

    # boundary term: oint conj(V) . sigma(U) n over the six faces
    surf = 0.0
    for axis in range(3):
        for side, sign in ((0, -1.0), (-1, 1.0)):
            sl = [slice(None)] * 3
            sl[axis] = side
            sl = tuple(sl)
            tU = sign * sig[:, axis][(slice(None),) + sl]     # (3, m1, m2)
            vf = Vc[(slice(None),) + sl]
            shape2 = tU.shape[1:]
            w2 = [np.ones(s) for s in shape2]
            for a in w2:
                a[0] = a[-1] = 0.5
            W2 = w2[0][:, None] * w2[1][None, :] * h**2
            surf = surf + np.sum(W2 * np.einsum("cij,cij->ij", vf, tU))

    return abs(lhs - (energy - surf))


# ---------------------------------------------------------------------------
# reporting norms (discrete surrogate, never used for pass/fail constants)
# ---------------------------------------------------------------------------

def sobolev_trace_norm(trace: BoundaryTrace, time_order=3, space_order=1.5,
                       l_max=8):
    """Discrete surrogate of a H^k(time) x H^s(sphere) trace norm.

    Time uses FFT Sobolev weights (1 + w^2)^(k); space projects onto real
    spherical harmonics up to degree l_max with weights (1 + l(l+1))^(s).
    Only for reporting: the constants of the continuous norm are not tracked.
    """
    from scipy.special import sph_harm

    u = trace.u_series                                  # (N, nt, 3)
    n_t = u.shape[1]
    freqs = 2.0 * math.pi * np.fft.rfftfreq(n_t, trace.dt)
    uhat = np.fft.rfft(u, axis=1) * trace.dt
    tw = (1.0 + freqs**2) ** time_order
    # spherical-harmonic projection per frequency and component
    pts = trace.normals
    theta = np.arccos(np.clip(pts[:, 2], -1.0, 1.0))
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    total = 0.0
    for l in range(l_max + 1):
        sw = (1.0 + l * (l + 1.0)) ** space_order
        for m in range(-l, l + 1):
            Y = sph_harm(m, l, phi, theta)
            coef = np.einsum("n,nfc->fc", trace.weights * np.conj(Y), uhat)
            total += sw * np.sum(tw[:, None] * np.abs(coef) ** 2)
    return math.sqrt(total / (2.0 * math.pi))


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def save_trace(trace: BoundaryTrace, stem, config_hash=""):
    """Write the trace as .arr files plus a JSON sidecar; returns the paths."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, arr in (("u", trace.u_series), ("traction", trace.traction_series),
                      ("points", trace.points), ("weights", trace.weights),
                      ("normals", trace.normals)):
        paths[name] = arrayio.write_array(f"{stem}.{name}.arr", arr)
    meta = {
        "dt_s": trace.dt,
        "radius_m": trace.radius,
        "n_points": int(trace.n_points),
        "n_times": int(trace.n_times),
        "config_hash": config_hash,
        "files": {k: str(v) for k, v in paths.items()},
    }
    meta_path = Path(f"{stem}.json")
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    paths["meta"] = meta_path
    return paths


def load_trace(stem) -> BoundaryTrace:
    with open(f"{stem}.json") as fh:
        meta = json.load(fh)
    return BoundaryTrace(
        points=arrayio.read_array(f"{stem}.points.arr"),
        weights=arrayio.read_array(f"{stem}.weights.arr"),
        normals=arrayio.read_array(f"{stem}.normals.arr"),
        u_series=arrayio.read_array(f"{stem}.u.arr"),
        traction_series=arrayio.read_array(f"{stem}.traction.arr"),
        dt=meta["dt_s"],
        radius=meta["radius_m"],
    )


def trace_to_csv(trace: BoundaryTrace, path, point_stride=1, time_stride=1):
    """Plot-friendly CSV: t, point index, u components, traction components."""
    times = trace.times
    with open(path, "w") as fh:
        fh.write("t_s,point,ux,uy,uz,tx,ty,tz\n")
        for p in range(0, trace.n_points, point_stride):
            for it in range(0, trace.n_times, time_stride):
                u = trace.u_series[p, it]
                tr = trace.traction_series[p, it]
                fh.write(f"{times[it]!r},{p},"
                         f"{u[0]!r},{u[1]!r},{u[2]!r},"
                         f"{tr[0]!r},{tr[1]!r},{tr[2]!r}\n")
    return Path(path)
