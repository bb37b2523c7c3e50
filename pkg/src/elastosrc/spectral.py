"""Spectral utilities.

Conventions used throughout the package:

* time transform      F(w)   = int f(t) exp(-i w t) dt      (not unitary)
* space-time transform F(k,w) = int f(x,t) exp(-i k.x - i w t) dx dt
* Laplace transform   F(tau) = int f(t) exp(-tau t) dt,  tau > 0

The planar Hodge split writes a 2-d vector field as grad(fp) + perp-grad(fs)
with perp-grad = (-d/dy, d/dx); both potentials are pinned to zero mean and
the constant (k = 0) remainder of the field is carried separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.integrate import simpson

__all__ = [
    "time_fourier",
    "laplace_transform",
    "LaplaceResult",
    "HodgePotentials",
    "hodge_decompose",
    "hodge_compose",
    "GTransform",
    "g_profile_transform",
    "SpectralPoint",
    "test_function",
    "test_function_traction",
    "SpaceTimeGrid",
]


# ---------------------------------------------------------------------------
# 1-d transforms
# ---------------------------------------------------------------------------

def _trapezoid_weights(n, dt):
    w = np.full(n, dt)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def time_fourier(series, dt, omegas, axis=-1):
    """Trapezoidal evaluation of int series(t) exp(-i w t) dt.

    ``series`` may have any shape; the time axis is selected by ``axis``.
    Raises for requested frequencies above the Nyquist limit pi/dt.
    """
    series = np.asarray(series)
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    nyquist = math.pi / dt
    if np.any(np.abs(omegas) > nyquist * (1.0 + 1e-12)):
        raise ValueError(f"requested frequency exceeds the Nyquist limit {nyquist:.6g}")
    n = series.shape[axis]
    t = np.arange(n) * dt
    kernel = np.exp(-1j * np.outer(t, omegas)) * _trapezoid_weights(n, dt)[:, None]
    moved = np.moveaxis(series, axis, -1)
    out = moved @ kernel                      # (..., n_omega)
    return np.moveaxis(out, -1, axis) if out.ndim == series.ndim else out


class LaplaceResult(NamedTuple):
    values: np.ndarray
    tail_bound: np.ndarray


def laplace_transform(series, dt, taus, axis=-1):
    """Trapezoidal Laplace transform over the recorded window.

    Returns the values together with a tail-truncation bound
    ``max|series| * exp(-tau t_max) * ((1 + t_max)/tau + 1/tau^2)`` which
    covers any continuation of at-most-linear growth past the window.
    """
    series = np.asarray(series)
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if np.any(taus <= 0.0):
        raise ValueError("Laplace abscissa tau must be positive")
    n = series.shape[axis]
    t = np.arange(n) * dt
    t_max = t[-1]
    kernel = np.exp(-np.outer(t, taus)) * _trapezoid_weights(n, dt)[:, None]
    moved = np.moveaxis(series, axis, -1)
    values = moved @ kernel
    if values.ndim == series.ndim:
        values = np.moveaxis(values, -1, axis)
    amp = float(np.max(np.abs(series))) if series.size else 0.0
    tail = amp * np.exp(-taus * t_max) * ((1.0 + t_max) / taus + 1.0 / taus**2)
    return LaplaceResult(values, tail)


# ---------------------------------------------------------------------------
# planar Hodge split
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HodgePotentials:
    """Zero-mean potentials on the padded periodic grid.

    ``f_p``/``f_s`` have shape ``padded_shape``; ``shape`` records the
    original (unpadded) grid so :func:`hodge_compose` can crop back.
    ``mean`` is the k = 0 remainder of the input field, which the split
    assigns to neither potential.
    """

    f_p: np.ndarray
    f_s: np.ndarray
    mean: np.ndarray
    h: float
    shape: tuple


def _wavenumbers(n, h):
    return 2.0 * math.pi * np.fft.fftfreq(n, d=h)


def hodge_decompose(field, h, pad_factor=2):
    """Split a sampled planar field (2, nx, ny) into gradient potentials.

    The grid is zero-padded by ``pad_factor`` before the FFT so that
    compactly supported inputs see no periodic wrap-around; the padded size
    is kept odd so no ambiguous Nyquist mode exists and the split/compose
    pair is exact on real fields.
    """
    field = np.asarray(field, dtype=float)
    if field.ndim != 3 or field.shape[0] != 2:
        raise ValueError("expected field of shape (2, nx, ny)")
    _, nx, ny = field.shape
    px, py = pad_factor * nx + 1, pad_factor * ny + 1
    # k = 0 coefficient of the padded periodic extension; hodge_compose adds
    # it back so the pair is an exact inverse on the original window.
    mean = field.reshape(2, -1).sum(axis=1) / (px * py)

    fx = np.zeros((px, py))
    fy = np.zeros((px, py))
    fx[:nx, :ny] = field[0]
    fy[:nx, :ny] = field[1]
    Fx = np.fft.fft2(fx)
    Fy = np.fft.fft2(fy)

    k1 = _wavenumbers(px, h)[:, None]
    k2 = _wavenumbers(py, h)[None, :]
    k2norm = k1**2 + k2**2
    k2norm[0, 0] = 1.0                      # k = 0 handled separately
    Fp = -1j * (k1 * Fx + k2 * Fy) / k2norm
    Fs = -1j * (-k2 * Fx + k1 * Fy) / k2norm
    Fp[0, 0] = 0.0
    Fs[0, 0] = 0.0
    return HodgePotentials(
        f_p=np.fft.ifft2(Fp).real,
        f_s=np.fft.ifft2(Fs).real,
        mean=mean,
        h=h,
        shape=(nx, ny),
    )


def hodge_compose(potentials):
    """Inverse of :func:`hodge_decompose`: grad(fp) + perp-grad(fs) + mean."""
    f_p = np.asarray(potentials.f_p)
    f_s = np.asarray(potentials.f_s)
    px, py = f_p.shape
    k1 = _wavenumbers(px, potentials.h)[:, None]
    k2 = _wavenumbers(py, potentials.h)[None, :]
    Fp = np.fft.fft2(f_p)
    Fs = np.fft.fft2(f_s)
    gx = np.fft.ifft2(1j * k1 * Fp - 1j * k2 * Fs).real
    gy = np.fft.ifft2(1j * k2 * Fp + 1j * k1 * Fs).real
    nx, ny = potentials.shape
    out = np.stack([gx[:nx, :ny], gy[:nx, :ny]])
    out[0] += potentials.mean[0]
    out[1] += potentials.mean[1]
    return out


# ---------------------------------------------------------------------------
# profile transform G(z) = int g(x3) exp(z x3) dx3
# ---------------------------------------------------------------------------

class GTransform(NamedTuple):
    value: np.ndarray
    lower_bound: Optional[np.ndarray]


def g_profile_transform(g_samples, g_grid, z, support_radius=None, sign=None):
    """Composite-Simpson evaluation of G(z) on the sample grid of g.

    When ``sign`` is 'nonneg' or 'nonpos' the guaranteed lower bound
    ``||g||_L1 * exp(-Re(z) * R)`` is returned alongside (R taken from
    ``support_radius``, default: the grid extent).
    """
    g_samples = np.asarray(g_samples, dtype=float)
    g_grid = np.asarray(g_grid, dtype=float)
    z = np.asarray(z)
    integrand = g_samples * np.exp(np.multiply.outer(z, g_grid))
    value = simpson(integrand, x=g_grid, axis=-1)
    lower = None
    if sign in ("nonneg", "nonpos"):
        radius = support_radius if support_radius is not None else float(np.max(np.abs(g_grid)))
        l1 = simpson(np.abs(g_samples), x=g_grid)
        lower = l1 * np.exp(-np.real(z) * radius)
    return GTransform(value, lower)


# ---------------------------------------------------------------------------
# evanescent test functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralPoint:
    """One (xi, omega) probe with its wavenumbers and decay rates.

    gamma_p / gamma_s are the real vertical decay rates sqrt(|xi|^2 - k^2);
    they are NaN when the point sits inside the corresponding wave cone.
    """

    xi: tuple
    omega: float
    k_p: float
    k_s: float
    gamma_p: float
    gamma_s: float

    @classmethod
    def make(cls, xi, omega, material):
        xi = (float(xi[0]), float(xi[1]))
        xin2 = xi[0] ** 2 + xi[1] ** 2
        k_p2 = omega**2 * material.rho / (material.lam + 2.0 * material.mu)
        k_s2 = omega**2 * material.rho / material.mu
        g_p = math.sqrt(xin2 - k_p2) if xin2 > k_p2 else math.nan
        g_s = math.sqrt(xin2 - k_s2) if xin2 > k_s2 else math.nan
        return cls(xi, float(omega), math.sqrt(k_p2), math.sqrt(k_s2), g_p, g_s)

    @property
    def xi_norm(self):
        return math.hypot(self.xi[0], self.xi[1])

    def in_cone(self, kind, margin=0.0):
        k = self.k_p if kind == "p" else self.k_s
        return self.xi_norm > (1.0 + margin) * k

    def gamma(self, kind):
        return self.gamma_p if kind == "p" else self.gamma_s


def _test_function_vectors(kind, sp):
    xi1, xi2 = sp.xi
    if kind == "p":
        if math.isnan(sp.gamma_p):
            raise ValueError("spectral point lies inside the compressional cone")
        g = sp.gamma_p
        w = np.array([-1j * xi1, -1j * xi2, g])
        q = w
    elif kind == "s":
        if math.isnan(sp.gamma_s):
            raise ValueError("spectral point lies inside the shear cone")
        g = sp.gamma_s
        w = np.array([1j * xi2, -1j * xi1, 0.0])
        q = np.array([-1j * xi1, -1j * xi2, g])
    else:
        raise ValueError("kind must be 'p' or 's'")
    return w, q, g


def _phase(sp, g, points, t):
    points = np.asarray(points, dtype=float)
    xi1, xi2 = sp.xi
    return np.exp(
        -1j * (xi1 * points[..., 0] + xi2 * points[..., 1])
        + g * points[..., 2]
        - 1j * sp.omega * t
    )


def test_function(kind, sp, points, t=0.0):
    """Evanescent solution V_p or V_s at ``points`` (..., 3), complex (..., 3).

    V_p = (-i xi1, -i xi2, gamma_p) exp(-i xi.x~ + gamma_p x3 - i w t)
    V_s = ( i xi2, -i xi1, 0      ) exp(-i xi.x~ + gamma_s x3 - i w t)
    """
    w, _, g = _test_function_vectors(kind, sp)
    ph = _phase(sp, g, points, t)
    return ph[..., None] * w


def test_function_traction(kind, sp, points, normals, material, t=0.0):
    """Analytic surface traction sigma(V) n of a test function.

    Uses the exact Jacobian: for V_p the stress is
    -lam k_p^2 I + 2 mu q q^T (times the phase) and for V_s it is
    mu (w q^T + q w^T), with q the phase gradient.
    """
    w, q, g = _test_function_vectors(kind, sp)
    ph = _phase(sp, g, points, t)
    normals = np.asarray(normals, dtype=float)
    qn = normals @ q                       # (...,)
    if kind == "p":
        trac = (-material.lam * sp.k_p**2) * normals + (2.0 * material.mu) * qn[..., None] * q
    else:
        wn = normals @ w
        trac = material.mu * (qn[..., None] * w + wn[..., None] * q)
    return ph[..., None] * trac


def test_function_gradient(kind, sp, points, t=0.0):
    """Exact Jacobian d V_i / d x_j, shape (..., 3, 3)."""
    w, q, g = _test_function_vectors(kind, sp)
    ph = _phase(sp, g, points, t)
    return ph[..., None, None] * np.multiply.outer(w, q)


# ---------------------------------------------------------------------------
# space-time lattice transforms (reconstruction grids)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpaceTimeGrid:
    """Padded (x~, t) grid and its DFT lattice.

    The physical samples occupy indices [0, nx) x [0, ny) x [0, nt) of the
    padded arrays (shape ``padded_shape``); x/y start at ``x0``/``y0`` with
    spacing ``h``, time starts at zero with step ``dt``.  ``forward`` maps
    sampled fields to continuous-convention transform values on the lattice
    (rectangle quadrature, exact inverse pair with ``inverse``).
    """

    x0: float
    y0: float
    h: float
    nx: int
    ny: int
    dt: float
    nt: int
    pad_factor: int = 2

    @property
    def padded_shape(self):
        return (self.pad_factor * self.nx, self.pad_factor * self.ny,
                self.pad_factor * self.nt)

    @property
    def x(self):
        return self.x0 + self.h * np.arange(self.nx)

    @property
    def y(self):
        return self.y0 + self.h * np.arange(self.ny)

    @property
    def times(self):
        return self.dt * np.arange(self.nt)

    @property
    def xi1(self):
        return _wavenumbers(self.padded_shape[0], self.h)

    @property
    def xi2(self):
        return _wavenumbers(self.padded_shape[1], self.h)

    @property
    def omegas(self):
        return _wavenumbers(self.padded_shape[2], self.dt)

    def _phase3(self):
        p1 = np.exp(-1j * self.xi1 * self.x0)[:, None, None]
        p2 = np.exp(-1j * self.xi2 * self.y0)[None, :, None]
        return p1 * p2

    def pad(self, field):
        out = np.zeros(self.padded_shape, dtype=complex)
        out[: self.nx, : self.ny, : self.nt] = field
        return out

    def crop(self, padded):
        return padded[: self.nx, : self.ny, : self.nt]

    def forward(self, field, padded=False):
        """Continuous-convention transform of a sampled field."""
        arr = field if padded else self.pad(field)
        spec = np.fft.fftn(arr)
        spec *= self.h * self.h * self.dt
        spec *= self._phase3()
        return spec

    def inverse(self, spec, padded=False):
        arr = np.array(spec / self._phase3())
        arr /= self.h * self.h * self.dt
        out = np.fft.ifftn(arr)
        return out if padded else self.crop(out)

    def support_mask(self, radius, duration, padded=True):
        """Boolean mask of the space-time support disk x [0, duration)."""
        nx, ny, nt = self.padded_shape
        x = self.x0 + self.h * np.arange(nx)
        y = self.y0 + self.h * np.arange(ny)
        t = self.dt * np.arange(nt)
        disk = (x[:, None] ** 2 + y[None, :] ** 2) <= radius * radius
        window = t < duration
        mask = disk[:, :, None] & window[None, None, :]
        if not padded:
            mask = mask[: self.nx, : self.ny, : self.nt]
        return mask
