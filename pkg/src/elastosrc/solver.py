"""Time-domain solver for the elastodynamic (Lame) system.

Velocity-stress formulation on a staggered Cartesian grid over the box
[-L, L]^3 with leapfrog time stepping:

    rho dv/dt = div sigma + F
    dsigma/dt = lam div(v) I + 2 mu E(v)

Field layout (n cells per axis, h = 2L/n, nodes at -L + i h):

    sxx, syy, szz : nodes         (i, j, k)         shape (n+1)^3
    vx            : x-faces       (i+1/2, j, k)     shape (n, n+1, n+1)
    vy            : y-faces       (i, j+1/2, k)     shape (n+1, n, n+1)
    vz            : z-faces       (i, j, k+1/2)     shape (n+1, n+1, n)
    sxy           : xy-edges      (i+1/2, j+1/2, k) shape (n, n, n+1)
    sxz           : xz-edges      (i+1/2, j, k+1/2) shape (n, n+1, n)
    syz           : yz-edges      (i, j+1/2, k+1/2) shape (n+1, n, n)

Velocities live at half time steps, stresses at whole steps; the recorded
displacement u (time integral of node-averaged v) and sigma are therefore
aligned at whole steps.  Variable moduli are sampled at nodes and averaged
harmonically onto the shear positions, which keeps tractions continuous
across material jumps.  A traction-free cavity is realised by zeroing the
moduli inside it (free-surface limit of vanishing stiffness) plus explicit
zeroing of the stress on its closure each step.

Outgoing waves are absorbed by an exponential sponge: v and sigma are
multiplied by exp(-alpha(x) dt) inside the layer, with a cubic ramp that
vanishes at the inner edge.  boundary="rigid" disables it (closed box with
u = 0 walls; conserves the discrete energy, used by the energy and
convergence tests).

Time stepping is sequential and single threaded; for a fixed configuration
a run is bit-for-bit deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import (ExperimentGeometry, MaterialModel, PlanarSource,
                    SeparatedSource)

__all__ = [
    "Grid",
    "WaveField",
    "EnergySeries",
    "NumericalError",
    "LameSolver",
    "ScalarSolver",
    "EnergyRecorder",
    "MaxAmplitudeRecorder",
    "simulate_forced",
    "simulate_initial",
    "apply_traction_free_bc",
    "sponge_damp",
    "discrete_lame_residual",
]


class NumericalError(RuntimeError):
    """Raised when field values stop being finite; carries the step index."""

    def __init__(self, step, message=None):
        super().__init__(message or f"non-finite field values at step {step}")
        self.step = step


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [-L, L]^3 with n cells per axis."""

    n: int
    halfwidth: float

    @property
    def h(self) -> float:
        return 2.0 * self.halfwidth / self.n

    @property
    def nodes(self) -> np.ndarray:
        return -self.halfwidth + self.h * np.arange(self.n + 1)

    @property
    def halves(self) -> np.ndarray:
        return -self.halfwidth + self.h * (np.arange(self.n) + 0.5)


@dataclass
class WaveField:
    """Solver state at one time level (views, not copies)."""

    u: tuple                 # (ux, uy, uz) at nodes
    v: tuple                 # (vx, vy, vz) at faces, half-step time level
    sigma: dict              # keys xx, yy, zz, xy, xz, yz
    t: float
    dt: float
    h: float


@dataclass
class EnergySeries:
    """J(t) = int rho |du/dt|^2 + E(u, u) dx over a region, the source work
    2 int_0^t int F . du/dt dx ds, and the boundary-flux term
    2 int_0^t oint (sigma n) . du/dt ds dt (zero on rigid or quiet walls)."""

    times: np.ndarray
    j_values: np.ndarray
    work_values: np.ndarray
    flux_values: np.ndarray

    def balance_residual(self):
        return self.j_values - self.work_values - self.flux_values


# ---------------------------------------------------------------------------
# material sampling
# ---------------------------------------------------------------------------

def _harmonic4(a, axis1, axis2):
    """Harmonic mean over the 2x2 neighbours along two axes (zeros win)."""
    with np.errstate(divide="ignore"):
        inv = np.where(a > 0.0, 1.0 / np.where(a > 0.0, a, 1.0), np.inf)

    def corner(i1, i2):
        sl = [slice(None)] * a.ndim
        sl[axis1] = slice(0, -1) if i1 == 0 else slice(1, None)
        sl[axis2] = slice(0, -1) if i2 == 0 else slice(1, None)
        return inv[tuple(sl)]

    tot = corner(0, 0) + corner(0, 1) + corner(1, 0) + corner(1, 1)
    with np.errstate(invalid="ignore"):
        return np.where(np.isfinite(tot), 4.0 / np.where(np.isfinite(tot), tot, 1.0), 0.0)


class _MaterialMaps:
    """Moduli evaluated on the staggered positions (scalars when uniform)."""

    def __init__(self, material, grid, cavity=None):
        self.rho = material.rho
        if material.is_uniform and cavity is None:
            self.uniform = True
            self.lam = material.lam
            self.lamp2mu = material.lam + 2.0 * material.mu
            self.mu_xy = self.mu_xz = self.mu_yz = material.mu
            return
        self.uniform = False
        nodes = grid.nodes
        X, Y, Z = np.meshgrid(nodes, nodes, nodes, indexing="ij")
        lam_n = np.asarray(material.lam_at(X, Y, Z), dtype=float) + np.zeros(X.shape)
        mu_n = np.asarray(material.mu_at(X, Y, Z), dtype=float) + np.zeros(X.shape)
        if cavity is not None:
            inside = cavity.contains(X, Y, Z, pad=-1e-9 * grid.h)
            lam_n[inside] = 0.0
            mu_n[inside] = 0.0
        self.lam = lam_n
        self.lamp2mu = lam_n + 2.0 * mu_n
        self.mu_xy = _harmonic4(mu_n, 0, 1)
        self.mu_xz = _harmonic4(mu_n, 0, 2)
        self.mu_yz = _harmonic4(mu_n, 1, 2)

    def interior(self, name):
        val = getattr(self, name)
        if np.isscalar(val):
            return val
        return val[1:-1, 1:-1, 1:-1]


# ---------------------------------------------------------------------------
# kernels shared by the time step, the operator residual and the tests
# ---------------------------------------------------------------------------

def stress_from_displacement(ux, uy, uz, maps, h):
    """sigma = lam div(u) I + 2 mu E(u) on the staggered stress positions.

    Inputs are face-sampled displacement components (vx/vy/vz layout);
    returns a dict of the six stress arrays.  Works for complex fields.
    """
    n = ux.shape[0]
    dtype = np.result_type(ux, uy, uz)
    shp = (n + 1,) * 3
    sxx = np.zeros(shp, dtype=dtype)
    syy = np.zeros(shp, dtype=dtype)
    szz = np.zeros(shp, dtype=dtype)
    exx = (ux[1:, 1:-1, 1:-1] - ux[:-1, 1:-1, 1:-1]) / h
    eyy = (uy[1:-1, 1:, 1:-1] - uy[1:-1, :-1, 1:-1]) / h
    ezz = (uz[1:-1, 1:-1, 1:] - uz[1:-1, 1:-1, :-1]) / h
    lam = maps.interior("lam")
    lp2 = maps.interior("lamp2mu")
    tr = exx + eyy + ezz
    sxx[1:-1, 1:-1, 1:-1] = lp2 * exx + lam * (tr - exx)
    syy[1:-1, 1:-1, 1:-1] = lp2 * eyy + lam * (tr - eyy)
    szz[1:-1, 1:-1, 1:-1] = lp2 * ezz + lam * (tr - ezz)
    sxy = ((ux[:, 1:, :] - ux[:, :-1, :]) + (uy[1:, :, :] - uy[:-1, :, :])) / h
    sxy = sxy * maps.mu_xy
    sxz = ((ux[:, :, 1:] - ux[:, :, :-1]) + (uz[1:, :, :] - uz[:-1, :, :])) / h
    sxz = sxz * maps.mu_xz
    syz = ((uy[:, :, 1:] - uy[:, :, :-1]) + (uz[:, 1:, :] - uz[:, :-1, :])) / h
    syz = syz * maps.mu_yz
    return {"xx": sxx, "yy": syy, "zz": szz, "xy": sxy, "xz": sxz, "yz": syz}


def stress_divergence(sigma, h):
    """div sigma on the three face families (interior; boundary rows zero)."""
    sxx, syy, szz = sigma["xx"], sigma["yy"], sigma["zz"]
    sxy, sxz, syz = sigma["xy"], sigma["xz"], sigma["yz"]
    n = sxx.shape[0] - 1
    dtype = sxx.dtype
    fx = np.zeros((n, n + 1, n + 1), dtype=dtype)
    fy = np.zeros((n + 1, n, n + 1), dtype=dtype)
    fz = np.zeros((n + 1, n + 1, n), dtype=dtype)
    fx[:, 1:-1, 1:-1] = (
        (sxx[1:, 1:-1, 1:-1] - sxx[:-1, 1:-1, 1:-1])
        + (sxy[:, 1:, 1:-1] - sxy[:, :-1, 1:-1])
        + (sxz[:, 1:-1, 1:] - sxz[:, 1:-1, :-1])
    ) / h
    fy[1:-1, :, 1:-1] = (
        (sxy[1:, :, 1:-1] - sxy[:-1, :, 1:-1])
        + (syy[1:-1, 1:, 1:-1] - syy[1:-1, :-1, 1:-1])
        + (syz[1:-1, :, 1:] - syz[1:-1, :, :-1])
    ) / h
    fz[1:-1, 1:-1, :] = (
        (sxz[1:, 1:-1, :] - sxz[:-1, 1:-1, :])
        + (syz[1:-1, 1:, :] - syz[1:-1, :-1, :])
        + (szz[1:-1, 1:-1, 1:] - szz[1:-1, 1:-1, :-1])
    ) / h
    return fx, fy, fz


# ---------------------------------------------------------------------------
# sponge and cavity
# ---------------------------------------------------------------------------

class _Sponge:
    """Separable per-axis damping factors on node and half positions."""

    def __init__(self, grid, inner, width, alpha_max, dt, profile=None):
        self.inner = inner
        self.width = width
        self.alpha_max = alpha_max
        prof = profile if profile is not None else (lambda r: r**3)

        def factors(coords):
            if width <= 0.0 or alpha_max <= 0.0:
                return np.ones_like(coords)
            s = np.clip((np.abs(coords) - inner) / width, 0.0, 1.0)
            return np.exp(-alpha_max * prof(s) * dt)

        self.factors = {"n": factors(grid.nodes), "h": factors(grid.halves)}

    def apply(self, arr, kinds):
        """Multiply by the damping factors; touches only the sponge slabs."""
        for axis, kind in enumerate(kinds):
            g = self.factors[kind]
            idx = np.nonzero(g < 1.0)[0]
            if idx.size == 0:
                continue
            half = g.size // 2
            for part in (idx[idx < half], idx[idx >= half]):
                if part.size == 0:
                    continue
                sl = [slice(None)] * 3
                sl[axis] = slice(part[0], part[-1] + 1)
                shape = [1, 1, 1]
                shape[axis] = part.size
                arr[tuple(sl)] *= g[part[0]:part[-1] + 1].reshape(shape)


_FAMILY_KINDS = {
    "vx": "hnn", "vy": "nhn", "vz": "nnh",
    "xx": "nnn", "yy": "nnn", "zz": "nnn",
    "xy": "hhn", "xz": "hnh", "yz": "nhh",
}


def sponge_damp(state: WaveField, sponge) -> WaveField:
    """One application of the absorbing layer to every v and sigma array.

    Identity when the layer has zero width or zero strength.
    """
    if sponge is None:
        return state
    for name, arr in zip(("vx", "vy", "vz"), state.v):
        sponge.apply(arr, _FAMILY_KINDS[name])
    for key, arr in state.sigma.items():
        sponge.apply(arr, _FAMILY_KINDS[key])
    return state


class _CavityMasks:
    """Boolean masks of the stress positions on the closed cavity."""

    def __init__(self, grid, cavity):
        nd, hf = grid.nodes, grid.halves
        pad = 1e-9 * grid.h
        self.node = self._mask(cavity, nd, nd, nd, pad)
        self.xy = self._mask(cavity, hf, hf, nd, pad)
        self.xz = self._mask(cavity, hf, nd, hf, pad)
        self.yz = self._mask(cavity, nd, hf, hf, pad)

    @staticmethod
    def _mask(cavity, cx, cy, cz, pad):
        X, Y, Z = np.meshgrid(cx, cy, cz, indexing="ij")
        return cavity.contains(X, Y, Z, pad=pad)


def apply_traction_free_bc(state: WaveField, cavity_masks) -> WaveField:
    """Zero the stress components on the cavity closure (stress imaging).

    Identity when no cavity is configured.  The cavity interior is never
    driven: with the moduli zeroed inside, interior stresses stay zero and
    interior velocities decouple from the exterior field.
    """
    if cavity_masks is None:
        return state
    for key in ("xx", "yy", "zz"):
        state.sigma[key][cavity_masks.node] = 0.0
    state.sigma["xy"][cavity_masks.xy] = 0.0
    state.sigma["xz"][cavity_masks.xz] = 0.0
    state.sigma["yz"][cavity_masks.yz] = 0.0
    return state


# ---------------------------------------------------------------------------
# the solver
# ---------------------------------------------------------------------------

class LameSolver:
    def __init__(self, material: MaterialModel, geo: ExperimentGeometry,
                 n_cells: int, cfl_factor: float = 0.8,
                 boundary: str = "sponge",
                 sponge_inner: Optional[float] = None,
                 sponge_width_cells: int = 14,
                 sponge_strength: Optional[float] = None,
                 dt: Optional[float] = None):
        self.material = material
        self.geo = geo
        self.grid = Grid(n_cells, geo.box_halfwidth)
        self.h = self.grid.h
        self.cfl_factor = cfl_factor
        cp = material.cp_max()
        dt_max = cfl_factor * self.h / (math.sqrt(3.0) * cp)
        self.dt = dt if dt is not None else dt_max
        if self.dt > dt_max * (1.0 + 1e-12):
            raise ValueError(f"dt={self.dt} violates the CFL bound {dt_max}")
        self.maps = _MaterialMaps(material, self.grid, geo.cavity)
        self.cavity_masks = (_CavityMasks(self.grid, geo.cavity)
                             if geo.cavity is not None else None)

        self.boundary = boundary
        if boundary == "sponge":
            width = sponge_width_cells * self.h
            inner = (sponge_inner if sponge_inner is not None
                     else geo.box_halfwidth - width)
            if inner < geo.measurement_radius:
                raise ValueError("absorbing layer overlaps the measurement sphere")
            alpha = (sponge_strength if sponge_strength is not None
                     else 18.0 * cp / width)
            self.sponge = _Sponge(self.grid, inner, width, alpha, self.dt)
        elif boundary == "rigid":
            self.sponge = None
        else:
            raise ValueError(f"unknown boundary mode {boundary!r}")

        n = n_cells
        shp = (n + 1,) * 3
        self.vx = np.zeros((n, n + 1, n + 1))
        self.vy = np.zeros((n + 1, n, n + 1))
        self.vz = np.zeros((n + 1, n + 1, n))
        self.sigma = {
            "xx": np.zeros(shp), "yy": np.zeros(shp), "zz": np.zeros(shp),
            "xy": np.zeros((n, n, n + 1)),
            "xz": np.zeros((n, n + 1, n)),
            "yz": np.zeros((n + 1, n, n)),
        }
        self.u = (np.zeros(shp), np.zeros(shp), np.zeros(shp))
        self.t = 0.0
        self.step_index = 0
        self._source_hook = None
        self._separated_faces = None
        self._separated_f = None

    # -- sources ------------------------------------------------------------

    def _face_coords(self, family):
        nd, hf = self.grid.nodes, self.grid.halves
        if family == "x":
            return np.meshgrid(hf, nd, nd, indexing="ij")
        if family == "y":
            return np.meshgrid(nd, hf, nd, indexing="ij")
        return np.meshgrid(nd, nd, hf, indexing="ij")

    def _sample_faces(self, h_callable):
        out = []
        for i, fam in enumerate(("x", "y", "z")):
            X, Y, Z = self._face_coords(fam)
            comp = np.asarray(h_callable(X, Y, Z)[i], dtype=float)
            out.append(comp + np.zeros(X.shape))
        return tuple(out)

    def set_separated_source(self, src: SeparatedSource, n_steps: int):
        hx, hy, hz = self._sample_faces(src.h)
        f = src.f_at_steps(n_steps, self.dt)
        rho = self.material.rho

        def hook(n, t):
            fv = f[n] if n < f.size else 0.0
            if fv != 0.0:
                c = self.dt * fv / rho
                self.vx += c * hx
                self.vy += c * hy
                self.vz += c * hz

        self._source_hook = hook
        self._separated_faces = (hx, hy, hz)
        self._separated_f = f

    def set_planar_source(self, src: PlanarSource):
        nd, hf = self.grid.nodes, self.grid.halves
        # f1 lives on the (half, node) in-plane grid of vx, f2 on (node, half)
        X1, Y1 = np.meshgrid(hf, nd, indexing="ij")
        X2, Y2 = np.meshgrid(nd, hf, indexing="ij")
        s1 = src.fp_grad[0](X1, Y1) - src.fs_grad[1](X1, Y1)
        s2 = src.fp_grad[1](X2, Y2) + src.fs_grad[0](X2, Y2)
        g = np.interp(nd, src.g_grid, src.g_samples, left=0.0, right=0.0)
        rho = self.material.rho
        r = src.support_radius * 1.05 + 4.0 * self.h
        iw = np.nonzero(np.abs(hf) <= r)[0]     # half-position window
        jw = np.nonzero(np.abs(nd) <= r)[0]     # node-position window
        kw = np.nonzero(g != 0.0)[0]
        if iw.size == 0 or kw.size == 0:
            raise ValueError("planar source does not intersect the grid")
        i0, i1 = iw[0], iw[-1] + 1
        j0, j1 = jw[0], jw[-1] + 1
        k0, k1 = kw[0], kw[-1] + 1
        p1 = s1[i0:i1, j0:j1, None] * g[None, None, k0:k1]
        p2 = s2[j0:j1, i0:i1, None] * g[None, None, k0:k1]
        env = src.envelope

        def hook(n, t):
            e = float(env(t))
            if e != 0.0:
                c = self.dt * e / rho
                self.vx[i0:i1, j0:j1, k0:k1] += c * p1
                self.vy[j0:j1, i0:i1, k0:k1] += c * p2

        self._source_hook = hook

    def inject_initial_velocity(self, h_callable):
        """Start with v^(1/2) = h and zero stress/displacement."""
        hx, hy, hz = self._sample_faces(h_callable)
        self.vx += hx
        self.vy += hy
        self.vz += hz

    # -- stepping -----------------------------------------------------------

    def state(self) -> WaveField:
        return WaveField(u=self.u, v=(self.vx, self.vy, self.vz),
                         sigma=self.sigma, t=self.t, dt=self.dt, h=self.h)

    def _velocity_update(self):
        c = self.dt / (self.material.rho * self.h)
        s = self.sigma
        sxx, syy, szz = s["xx"], s["yy"], s["zz"]
        sxy, sxz, syz = s["xy"], s["xz"], s["yz"]
        self.vx[:, 1:-1, 1:-1] += c * (
            (sxx[1:, 1:-1, 1:-1] - sxx[:-1, 1:-1, 1:-1])
            + (sxy[:, 1:, 1:-1] - sxy[:, :-1, 1:-1])
            + (sxz[:, 1:-1, 1:] - sxz[:, 1:-1, :-1])
        )
        self.vy[1:-1, :, 1:-1] += c * (
            (sxy[1:, :, 1:-1] - sxy[:-1, :, 1:-1])
            + (syy[1:-1, 1:, 1:-1] - syy[1:-1, :-1, 1:-1])
            + (syz[1:-1, :, 1:] - syz[1:-1, :, :-1])
        )
        self.vz[1:-1, 1:-1, :] += c * (
            (sxz[1:, 1:-1, :] - sxz[:-1, 1:-1, :])
            + (syz[1:-1, 1:, :] - syz[1:-1, :-1, :])
            + (szz[1:-1, 1:-1, 1:] - szz[1:-1, 1:-1, :-1])
        )

    def _stress_update(self):
        dt, h = self.dt, self.h
        vx, vy, vz = self.vx, self.vy, self.vz
        s = self.sigma
        exx = (vx[1:, 1:-1, 1:-1] - vx[:-1, 1:-1, 1:-1]) / h
        eyy = (vy[1:-1, 1:, 1:-1] - vy[1:-1, :-1, 1:-1]) / h
        ezz = (vz[1:-1, 1:-1, 1:] - vz[1:-1, 1:-1, :-1]) / h
        lam = self.maps.interior("lam")
        lp2 = self.maps.interior("lamp2mu")
        tr = exx + eyy + ezz
        s["xx"][1:-1, 1:-1, 1:-1] += dt * (lp2 * exx + lam * (tr - exx))
        s["yy"][1:-1, 1:-1, 1:-1] += dt * (lp2 * eyy + lam * (tr - eyy))
        s["zz"][1:-1, 1:-1, 1:-1] += dt * (lp2 * ezz + lam * (tr - ezz))
        s["xy"] += (dt / h) * self.maps.mu_xy * (
            (vx[:, 1:, :] - vx[:, :-1, :]) + (vy[1:, :, :] - vy[:-1, :, :]))
        s["xz"] += (dt / h) * self.maps.mu_xz * (
            (vx[:, :, 1:] - vx[:, :, :-1]) + (vz[1:, :, :] - vz[:-1, :, :]))
        s["yz"] += (dt / h) * self.maps.mu_yz * (
            (vy[:, :, 1:] - vy[:, :, :-1]) + (vz[:, 1:, :] - vz[:, :-1, :]))

    def _displacement_update(self):
        dt = self.dt
        ux, uy, uz = self.u
        ux[1:-1, :, :] += (0.5 * dt) * (self.vx[1:, :, :] + self.vx[:-1, :, :])
        uy[:, 1:-1, :] += (0.5 * dt) * (self.vy[:, 1:, :] + self.vy[:, :-1, :])
        uz[:, :, 1:-1] += (0.5 * dt) * (self.vz[:, :, 1:] + self.vz[:, :, :-1])

    def step(self):
        if self._source_hook is not None:
            self._source_hook(self.step_index, self.t)
        self._velocity_update()
        if self.sponge is not None:
            self.sponge.apply(self.vx, "hnn")
            self.sponge.apply(self.vy, "nhn")
            self.sponge.apply(self.vz, "nnh")
        self._displacement_update()
        self._stress_update()
        if self.sponge is not None:
            for key, arr in self.sigma.items():
                self.sponge.apply(arr, _FAMILY_KINDS[key])
        if self.cavity_masks is not None:
            apply_traction_free_bc(self.state(), self.cavity_masks)
        self.step_index += 1
        self.t = self.step_index * self.dt

    def run(self, n_steps, recorders=(), check_every=25):
        for rec in recorders:
            rec.on_start(self)
        for n in range(n_steps):
            self.step()
            if check_every and (n + 1) % check_every == 0:
                if not np.isfinite(np.max(np.abs(self.vx))):
                    raise NumericalError(self.step_index)
            for rec in recorders:
                rec.on_step(self)
        if not (np.isfinite(self.vx).all() and np.isfinite(self.u[0]).all()):
            raise NumericalError(self.step_index)
        return self.state()


def simulate_forced(material, geo, source, n_cells, n_steps=None,
                    recorders=(), **solver_kw):
    """Evolve from rest with the given source; recorders see every step."""
    solver = LameSolver(material, geo, n_cells, **solver_kw)
    if n_steps is None:
        n_steps = int(math.ceil(geo.record_duration / solver.dt))
    if isinstance(source, SeparatedSource):
        solver.set_separated_source(source, n_steps)
    elif isinstance(source, PlanarSource):
        solver.set_planar_source(source)
    elif source is not None:
        raise TypeError(f"unsupported source type {type(source).__name__}")
    final = solver.run(n_steps, recorders)
    return solver, final


def simulate_initial(material, geo, h_callable, n_cells, n_steps=None,
                     recorders=(), **solver_kw):
    """Evolve the homogeneous system from initial velocity h (zero stress).

    The half-step leapfrog start sets v at t = dt/2 equal to h, which keeps
    the discrete forced solution equal to the discrete causal convolution of
    f with this run (up to the rho scaling of the momentum equation).
    """
    solver = LameSolver(material, geo, n_cells, **solver_kw)
    if n_steps is None:
        n_steps = int(math.ceil(geo.record_duration / solver.dt))
    solver.inject_initial_velocity(h_callable)
    final = solver.run(n_steps, recorders)
    return solver, final


# ---------------------------------------------------------------------------
# recorders owned by the solver module
# ---------------------------------------------------------------------------

class EnergyRecorder:
    """Tracks J(t), the source work and the boundary flux on a node window.

    The window is the axis-aligned box |x_i| <= extent (whole domain when
    extent is None).  Strains come from central differences of the nodal
    displacement; velocities are centred averages of the two adjacent
    half-step values, which matches the leapfrog energy to O(dt^2).
    """

    def __init__(self, extent=None, source=None):
        self.extent = extent
        self.source = source
        self.times = [0.0]
        self.j = [0.0]
        self.work = [0.0]
        self.flux = [0.0]

    def on_start(self, solver):
        nd = solver.grid.nodes
        ext = self.extent if self.extent is not None else solver.grid.halfwidth
        idx = np.nonzero(np.abs(nd) <= ext + 1e-9)[0]
        self._i0, self._i1 = int(idx[0]), int(idx[-1])
        self._interior = self._i0 > 0 and self._i1 < solver.grid.n
        self._vprev = (solver.vx.copy(), solver.vy.copy(), solver.vz.copy())
        self._work_acc = 0.0
        self._flux_acc = 0.0
        self._lam = self._mu = None

    def _node_velocity(self, solver):
        i0, i1 = self._i0, self._i1
        sel = slice(i0, i1 + 1)
        vx_mid = 0.5 * (solver.vx + self._vprev[0])
        vy_mid = 0.5 * (solver.vy + self._vprev[1])
        vz_mid = 0.5 * (solver.vz + self._vprev[2])
        m = i1 - i0 + 1
        vxn = np.zeros((m, m, m))
        vyn = np.zeros((m, m, m))
        vzn = np.zeros((m, m, m))
        lo = max(i0, 1)
        hi = min(i1, solver.grid.n - 1)
        vxn[lo - i0:hi - i0 + 1] = 0.5 * (vx_mid[lo - 1:hi, sel, sel]
                                          + vx_mid[lo:hi + 1, sel, sel])
        vyn[:, lo - i0:hi - i0 + 1] = 0.5 * (vy_mid[sel, lo - 1:hi, sel]
                                             + vy_mid[sel, lo:hi + 1, sel])
        vzn[:, :, lo - i0:hi - i0 + 1] = 0.5 * (vz_mid[sel, sel, lo - 1:hi]
                                                + vz_mid[sel, sel, lo:hi + 1])
        return vxn, vyn, vzn

    def _energy(self, solver):
        i0, i1 = self._i0, self._i1
        sel = slice(i0, i1 + 1)
        h = solver.h
        ux, uy, uz = (c[sel, sel, sel] for c in solver.u)
        vxn, vyn, vzn = self._node_velocity(solver)
        rho = solver.material.rho
        kin = rho * (vxn**2 + vyn**2 + vzn**2)

        stack = np.stack([ux, uy, uz])
        gx = np.gradient(stack, h, axis=1)
        gy = np.gradient(stack, h, axis=2)
        gz = np.gradient(stack, h, axis=3)
        div = gx[0] + gy[1] + gz[2]
        if self._lam is None:
            nodes = solver.grid.nodes[sel]
            X, Y, Z = np.meshgrid(nodes, nodes, nodes, indexing="ij")
            self._lam = solver.material.lam_at(X, Y, Z)
            self._mu = solver.material.mu_at(X, Y, Z)
        ee = (gx[0]**2 + gy[1]**2 + gz[2]**2
              + 0.5 * (gy[0] + gx[1])**2
              + 0.5 * (gz[0] + gx[2])**2
              + 0.5 * (gz[1] + gy[2])**2)
        dens = kin + self._lam * div**2 + 2.0 * self._mu * ee
        m = i1 - i0 + 1
        w = np.ones(m)
        w[0] = w[-1] = 0.5
        W3 = w[:, None, None] * w[None, :, None] * w[None, None, :]
        return float(np.sum(dens * W3) * h**3)

    def on_step(self, solver):
        if (self.source is not None and solver._separated_faces is not None):
            n = solver.step_index - 1
            f = solver._separated_f
            fval = f[n] if n < f.size else 0.0
            if fval != 0.0:
                hx, hy, hz = solver._separated_faces
                vmx = 0.5 * (solver.vx + self._vprev[0])
                vmy = 0.5 * (solver.vy + self._vprev[1])
                vmz = 0.5 * (solver.vz + self._vprev[2])
                dot = (np.sum(hx * vmx) + np.sum(hy * vmy) + np.sum(hz * vmz))
                self._work_acc += 2.0 * solver.dt * fval * dot * solver.h**3
        self.times.append(solver.t)
        self.j.append(self._energy(solver))
        self.work.append(self._work_acc)
        self.flux.append(self._flux_acc)
        self._vprev = (solver.vx.copy(), solver.vy.copy(), solver.vz.copy())

    def series(self) -> EnergySeries:
        return EnergySeries(np.array(self.times), np.array(self.j),
                            np.array(self.work), np.array(self.flux))


class MaxAmplitudeRecorder:
    """Largest |u| inside the ball |x| <= radius per step (quiescence checks)."""

    def __init__(self, radius):
        self.radius = radius
        self.times = [0.0]
        self.peaks = [0.0]

    def on_start(self, solver):
        nd = solver.grid.nodes
        X, Y, Z = np.meshgrid(nd, nd, nd, indexing="ij")
        self._mask = (X**2 + Y**2 + Z**2) <= self.radius**2

    def on_step(self, solver):
        ux, uy, uz = solver.u
        amp2 = ux[self._mask]**2 + uy[self._mask]**2 + uz[self._mask]**2
        self.times.append(solver.t)
        self.peaks.append(float(np.sqrt(amp2.max())))


def energy_audit(material, geo, source, n_cells, n_steps, extent=None, **kw):
    """Run a forced simulation and return its :class:`EnergySeries`."""
    rec = EnergyRecorder(extent=extent, source=source)
    simulate_forced(material, geo, source, n_cells, n_steps=n_steps,
                    recorders=(rec,), **kw)
    return rec.series()


# ---------------------------------------------------------------------------
# discrete operator residual (consistency checks)
# ---------------------------------------------------------------------------

def discrete_lame_residual(material, geo, n_cells, dt, vector_field, t):
    """Apply the solver's discrete operator to an analytic field.

    ``vector_field(X, Y, Z, t)`` must return the three components; they are
    sampled on the native face positions at t - dt, t, t + dt.  Returns the
    three interior residual arrays of

        rho (V(t+dt) - 2 V(t) + V(t-dt)) / dt^2 - div_h sigma_h(V(t)),

    which measures how well the field solves the homogeneous discrete system.
    """
    grid = Grid(n_cells, geo.box_halfwidth)
    maps = _MaterialMaps(material, grid, geo.cavity)
    h = grid.h
    nd, hf = grid.nodes, grid.halves
    coords = [np.meshgrid(hf, nd, nd, indexing="ij"),
              np.meshgrid(nd, hf, nd, indexing="ij"),
              np.meshgrid(nd, nd, hf, indexing="ij")]

    def sample(tt):
        return [np.asarray(vector_field(X, Y, Z, tt)[i])
                for i, (X, Y, Z) in enumerate(coords)]

    vm = sample(t - dt)
    v0 = sample(t)
    vp = sample(t + dt)
    sigma = stress_from_displacement(v0[0], v0[1], v0[2], maps, h)
    div = stress_divergence(sigma, h)
    rho = material.rho
    return [
        (rho * (a - 2.0 * b + c) / dt**2 - f)[2:-2, 2:-2, 2:-2]
        for a, b, c, f in zip(vp, v0, vm, div)
    ]


# ---------------------------------------------------------------------------
# scalar mode (independent cross-check of the wave machinery)
# ---------------------------------------------------------------------------

class ScalarSolver:
    """Leapfrog solver for (1/c^2) u_tt = Lap(u) + F on the same box."""

    def __init__(self, c, halfwidth, n_cells, cfl_factor=0.8, dt=None):
        self.c = c
        self.grid = Grid(n_cells, halfwidth)
        self.h = self.grid.h
        dt_max = cfl_factor * self.h / (math.sqrt(3.0) * c)
        self.dt = dt if dt is not None else dt_max
        shp = (n_cells + 1,) * 3
        self.u = np.zeros(shp)
        self.u_prev = np.zeros(shp)
        self.t = 0.0

    def _laplacian(self, u):
        out = np.zeros_like(u)
        out[1:-1, 1:-1, 1:-1] = (
            u[2:, 1:-1, 1:-1] + u[:-2, 1:-1, 1:-1]
            + u[1:-1, 2:, 1:-1] + u[1:-1, :-2, 1:-1]
            + u[1:-1, 1:-1, 2:] + u[1:-1, 1:-1, :-2]
            - 6.0 * u[1:-1, 1:-1, 1:-1]
        ) / (self.h * self.h)
        return out

    def set_initial(self, u0, v0=None):
        nd = self.grid.nodes
        X, Y, Z = np.meshgrid(nd, nd, nd, indexing="ij")
        self.u = np.asarray(u0(X, Y, Z), dtype=float)
        v = np.zeros_like(self.u) if v0 is None else np.asarray(v0(X, Y, Z))
        # second-order start: u(-dt) = u0 - dt v0 + (c dt)^2/2 Lap u0
        self.u_prev = (self.u - self.dt * v
                       + 0.5 * (self.c * self.dt) ** 2 * self._laplacian(self.u))

    def run(self, n_steps, forcing=None):
        X = Y = Z = None
        if forcing is not None:
            nd = self.grid.nodes
            X, Y, Z = np.meshgrid(nd, nd, nd, indexing="ij")
        cdt2 = (self.c * self.dt) ** 2
        for _ in range(n_steps):
            rhs = self._laplacian(self.u)
            if forcing is not None:
                rhs = rhs + forcing(X, Y, Z, self.t)
            new = 2.0 * self.u - self.u_prev + cdt2 * rhs
            self.u_prev = self.u
            self.u = new
            self.t += self.dt
        return self.u
