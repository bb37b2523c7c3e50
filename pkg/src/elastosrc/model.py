"""Domain types for elastodynamic source experiments.

Holds the material description (constant density, Lame moduli that may vary
smoothly inside a known radius), the experiment geometry (source ball B_R,
measurement sphere of radius R1, recording window), the two supported source
families, and the hypothesis checks that the inversion routines rely on.

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "MaterialModel",
    "CavityBox",
    "CavitySphere",
    "ExperimentGeometry",
    "SeparatedSource",
    "PlanarSource",
    "Violation",
    "ValidationReport",
    "wave_speeds",
    "huygens_min_record_time",
    "separated_uniqueness_window",
    "validate_experiment",
    "gaussian_ball",
    "ricker",
    "sin2_pulse",
    "sin4_pulse",
    "gaussian_lobes_2d",
    "indicator_profile",
    "triangle_profile",
    "gaussian_profile",
]


# ---------------------------------------------------------------------------
# material
# ---------------------------------------------------------------------------

def _compact_bump(r2, radius):
    """C^2 bump (1 - r^2/w^2)^3 on r < w, exactly zero outside."""
    w2 = radius * radius
    s = 1.0 - r2 / w2
    return np.where(s > 0.0, s * s * s, 0.0)


@dataclass(frozen=True)
class MaterialModel:
    """Isotropic elastic medium with constant density rho > 0.

    ``lam`` and ``mu`` are the far-field Lame moduli.  An optional smooth
    inclusion (compactly supported C^2 bump of relative amplitude
    ``inclusion_amplitude`` scaling both moduli) makes the coefficients vary
    inside ``inclusion_radius`` of ``inclusion_center``; they are exactly
    constant outside, so ``homogeneous_outside`` is an honest radius.
    """

    rho: float
    lam: float
    mu: float
    inclusion_amplitude: float = 0.0
    inclusion_center: tuple = (0.0, 0.0, 0.0)
    inclusion_radius: float = 0.0

    def __post_init__(self):
        if self.rho <= 0.0:
            raise ValueError("density must be positive")
        if self.mu <= 0.0:
            raise ValueError("shear modulus must be positive")
        if self.lam < 0.0:
            raise ValueError("first Lame parameter must be nonnegative")
        if self.inclusion_amplitude <= -1.0:
            raise ValueError("inclusion amplitude must exceed -1 (keeps mu > 0)")

    @property
    def is_uniform(self) -> bool:
        return self.inclusion_amplitude == 0.0 or self.inclusion_radius == 0.0

    @property
    def homogeneous_outside(self) -> float:
        if self.is_uniform:
            return 0.0
        c = self.inclusion_center
        return math.sqrt(c[0] ** 2 + c[1] ** 2 + c[2] ** 2) + self.inclusion_radius

    def _scale(self, x, y, z):
        if self.is_uniform:
            return 1.0
        cx, cy, cz = self.inclusion_center
        r2 = (np.asarray(x) - cx) ** 2 + (np.asarray(y) - cy) ** 2 + (np.asarray(z) - cz) ** 2
        return 1.0 + self.inclusion_amplitude * _compact_bump(r2, self.inclusion_radius)

    def lam_at(self, x, y, z):
        return self.lam * self._scale(x, y, z)

    def mu_at(self, x, y, z):
        return self.mu * self._scale(x, y, z)

    def cp_max(self) -> float:
        """Largest compressional speed anywhere (used for the CFL bound)."""
        peak = max(1.0, 1.0 + self.inclusion_amplitude)
        return math.sqrt((self.lam + 2.0 * self.mu) * peak / self.rho)


def wave_speeds(material: MaterialModel, x=0.0, y=0.0, z=0.0):
    """Compressional and shear speeds (c_p, c_s) at one or many points.

    c_p = sqrt((lam + 2 mu) / rho), c_s = sqrt(mu / rho); c_p > c_s always
    because lam >= 0.
    """
    lam = material.lam_at(x, y, z)
    mu = material.mu_at(x, y, z)
    c_p = np.sqrt((lam + 2.0 * mu) / material.rho)
    c_s = np.sqrt(mu / material.rho)
    return c_p, c_s


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CavityBox:
    """Axis-aligned traction-free cavity, corners ``lo`` / ``hi``."""

    lo: tuple
    hi: tuple

    def contains(self, x, y, z, pad=0.0):
        inside = np.ones(np.broadcast(x, y, z).shape, dtype=bool)
        for c, lo, hi in zip((x, y, z), self.lo, self.hi):
            inside &= (np.asarray(c) >= lo - pad) & (np.asarray(c) <= hi + pad)
        return inside

    @property
    def bounding_radius(self) -> float:
        return max(
            math.sqrt(sum(v * v for v in corner))
            for corner in ((self.lo), (self.hi),
                           (self.lo[0], self.hi[1], self.hi[2]),
                           (self.hi[0], self.lo[1], self.hi[2]),
                           (self.hi[0], self.hi[1], self.lo[2]),
                           (self.lo[0], self.lo[1], self.hi[2]),
                           (self.lo[0], self.hi[1], self.lo[2]),
                           (self.hi[0], self.lo[1], self.lo[2]))
        )


@dataclass(frozen=True)
class CavitySphere:
    """Sphere cavity, realised as a staircase mask on the grid."""

    center: tuple
    radius: float

    def contains(self, x, y, z, pad=0.0):
        cx, cy, cz = self.center
        r2 = (np.asarray(x) - cx) ** 2 + (np.asarray(y) - cy) ** 2 + (np.asarray(z) - cz) ** 2
        r = self.radius + pad
        return r2 <= r * r

    @property
    def bounding_radius(self) -> float:
        c = self.center
        return math.sqrt(c[0] ** 2 + c[1] ** 2 + c[2] ** 2) + self.radius


@dataclass(frozen=True)
class ExperimentGeometry:
    """Lengths and times of one experiment.

    source_radius      R   : sources are supported in the ball B_R
    measurement_radius R1  : traces are sampled on the sphere |x| = R1
    source_duration    T   : sources vanish for t >= T
    record_duration    T1  : traces cover [0, T1]
    box_halfwidth          : simulation box is [-L, L]^3
    """

    source_radius: float
    measurement_radius: float
    source_duration: float
    record_duration: float
    box_halfwidth: float
    cavity: Optional[object] = None


def huygens_min_record_time(geo: ExperimentGeometry, material: MaterialModel) -> float:
    """Earliest admissible recording horizon T + 2 R1 sqrt(rho/mu).

    After this time every wave radiated from B_R x [0, T) has left the ball
    B_{R1} for good (constant-coefficient medium only, where the sharp wake
    of 3-d wave propagation applies).  Callers must pick T1 strictly larger.
    """
    if not material.is_uniform:
        raise ValueError(
            "sharp quiescence cutoff requires spatially uniform coefficients"
        )
    return geo.source_duration + 2.0 * geo.measurement_radius * math.sqrt(
        material.rho / material.mu
    )


# ---------------------------------------------------------------------------
# sources
# ---------------------------------------------------------------------------

def ricker(f0, t0):
    """Ricker pulse with dominant frequency f0, delayed so f(0) ~ 0."""

    def f(t):
        a = (np.pi * f0 * (np.asarray(t) - t0)) ** 2
        return (1.0 - 2.0 * a) * np.exp(-a)

    return f


def sin2_pulse(duration):
    """sin^2 envelope on [0, duration]; C^1 at both ends."""

    def f(t):
        t = np.asarray(t)
        s = np.sin(np.pi * t / duration) ** 2
        return np.where((t >= 0.0) & (t <= duration), s, 0.0)

    return f


def sin4_pulse(duration):
    """sin^4 envelope on [0, duration]; vanishes to third order at the ends."""

    def f(t):
        t = np.asarray(t)
        s = np.sin(np.pi * t / duration) ** 4
        return np.where((t >= 0.0) & (t <= duration), s, 0.0)

    return f


def gaussian_ball(center, width, amplitude):
    """Vector field a * exp(-|x-c|^2 / (2 w^2)); amplitude is a 3-vector."""
    ax, ay, az = amplitude
    cx, cy, cz = center

    def h(x, y, z):
        g = np.exp(
            -((np.asarray(x) - cx) ** 2 + (np.asarray(y) - cy) ** 2 + (np.asarray(z) - cz) ** 2)
            / (2.0 * width * width)
        )
        return ax * g, ay * g, az * g

    return h


@dataclass(frozen=True)
class SeparatedSource:
    """Source F(x, t) = f(t) h(x) with h supported in B_R (minus the cavity).

    ``f_samples`` holds f on a uniform grid of step ``dt`` covering [0, T);
    ``h`` is a callable (x, y, z) -> (hx, hy, hz) which the solver evaluates
    directly on its staggered points.  ``h_support_radius`` is the radius the
    caller asserts h (numerically) vanishes beyond.
    """

    f_samples: np.ndarray
    dt: float
    h: Callable
    h_support_radius: float

    def __post_init__(self):
        object.__setattr__(self, "f_samples", np.asarray(self.f_samples, dtype=float))

    @property
    def f_initial(self) -> float:
        """f(0); the finite-window uniqueness experiments require it nonzero."""
        return float(self.f_samples[0])

    def f_at_steps(self, n_steps, dt):
        """f on the solver grid; zero past the stored window."""
        if abs(dt - self.dt) > 1e-12 * max(dt, self.dt):
            raise ValueError("source samples and solver use different dt")
        out = np.zeros(n_steps)
        m = min(n_steps, self.f_samples.size)
        out[:m] = self.f_samples[:m]
        return out

    @classmethod
    def from_callable(cls, f, dt, duration, h, h_support_radius):
        n = int(round(duration / dt))
        t = np.arange(n) * dt
        return cls(f(t), dt, h, h_support_radius)


def gaussian_lobes_2d(lobes):
    """Sum of planar Gaussians; ``lobes`` is a list of (cx, cy, sigma, amp).

    Returns (value, grad_x, grad_y) callables, all vectorised over (x, y).
    """
    lobes = [tuple(map(float, lb)) for lb in lobes]

    def value(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for cx, cy, sig, amp in lobes:
            out = out + amp * np.exp(
                -((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * sig * sig)
            )
        return out

    def grad_x(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for cx, cy, sig, amp in lobes:
            g = amp * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * sig * sig))
            out = out - (x - cx) / (sig * sig) * g
        return out

    def grad_y(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for cx, cy, sig, amp in lobes:
            g = amp * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * sig * sig))
            out = out - (y - cy) / (sig * sig) * g
        return out

    return value, grad_x, grad_y


def indicator_profile(halfwidth):
    return lambda x3: np.where(np.abs(np.asarray(x3)) < halfwidth, 1.0, 0.0)


def triangle_profile(halfwidth):
    return lambda x3: np.maximum(0.0, 1.0 - np.abs(np.asarray(x3)) / halfwidth)


def gaussian_profile(sigma):
    return lambda x3: np.exp(-np.asarray(x3) ** 2 / (2.0 * sigma * sigma))


def _classify_sign(samples):
    tol = 1e-12 * max(1.0, float(np.max(np.abs(samples))) if samples.size else 1.0)
    if np.all(samples >= -tol):
        return "nonneg"
    if np.all(samples <= tol):
        return "nonpos"
    return "mixed"


@dataclass(frozen=True)
class PlanarSource:
    """Source F(x, t) = g(x3) f(x1, x2, t) with f = (f1, f2, 0).

    The in-plane components derive from two scalar potentials:
    f = grad(fp) + perp-grad(fs), each potential a callable (x, y) of compact
    numerical support in the disk of radius ``support_radius``, modulated by
    the scalar ``envelope`` of duration ``duration`` with envelope(0) = 0.
    g is stored as samples on its own grid inside (-R, R).
    """

    g_samples: np.ndarray
    g_grid: np.ndarray
    fp_grad: tuple          # (d/dx fp, d/dy fp) callables
    fs_grad: tuple          # (d/dx fs, d/dy fs) callables
    envelope: Callable
    duration: float
    support_radius: float
    fp_value: Optional[Callable] = None
    fs_value: Optional[Callable] = None

    def __post_init__(self):
        object.__setattr__(self, "g_samples", np.asarray(self.g_samples, dtype=float))
        object.__setattr__(self, "g_grid", np.asarray(self.g_grid, dtype=float))

    @property
    def g_sign(self) -> str:
        return _classify_sign(self.g_samples)

    def f1(self, x, y, t):
        """First in-plane component: d/dx fp - d/dy fs, times the envelope."""
        return (self.fp_grad[0](x, y) - self.fs_grad[1](x, y)) * self.envelope(t)

    def f2(self, x, y, t):
        return (self.fp_grad[1](x, y) + self.fs_grad[0](x, y)) * self.envelope(t)

    def f_on_grid(self, x, y, times):
        """Materialise (f1, f2) on a tensor grid; shape (2, nx, ny, nt)."""
        X, Y = np.meshgrid(x, y, indexing="ij")
        env = self.envelope(np.asarray(times))
        s1 = self.fp_grad[0](X, Y) - self.fs_grad[1](X, Y)
        s2 = self.fp_grad[1](X, Y) + self.fs_grad[0](X, Y)
        out = np.empty((2, X.shape[0], X.shape[1], len(times)))
        out[0] = s1[:, :, None] * env[None, None, :]
        out[1] = s2[:, :, None] * env[None, None, :]
        return out

    def potential_on_grid(self, which, x, y, times):
        """Sampled potential (fp or fs) times envelope; shape (nx, ny, nt)."""
        fn = self.fp_value if which == "p" else self.fs_value
        if fn is None:
            raise ValueError(f"potential '{which}' was not provided")
        X, Y = np.meshgrid(x, y, indexing="ij")
        env = self.envelope(np.asarray(times))
        return fn(X, Y)[:, :, None] * env[None, None, :]

    @classmethod
    def from_potentials(cls, fp_lobes, fs_lobes, envelope, duration,
                        g_profile, g_grid, support_radius):
        fp_v, fp_x, fp_y = gaussian_lobes_2d(fp_lobes or [])
        fs_v, fs_x, fs_y = gaussian_lobes_2d(fs_lobes or [])
        g_grid = np.asarray(g_grid, dtype=float)
        return cls(
            g_samples=g_profile(g_grid),
            g_grid=g_grid,
            fp_grad=(fp_x, fp_y),
            fs_grad=(fs_x, fs_y),
            envelope=envelope,
            duration=duration,
            support_radius=support_radius,
            fp_value=fp_v,
            fs_value=fs_v,
        )


# ---------------------------------------------------------------------------
# hypothesis checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    guarantee: str


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code, message, guarantee):
        self.violations.append(Violation(code, message, guarantee))

    def __str__(self):
        if self.ok:
            return "all hypotheses satisfied"
        return "\n".join(
            f"[{v.code}] {v.message}  (breaks: {v.guarantee})" for v in self.violations
        )


def separated_uniqueness_window(threshold: float) -> float:
    """Alias for the finite-window requirement: T1 must exceed 2 sup d_j."""
    return threshold


def validate_experiment(geo, material, source, *, dt=None, grid_h=None,
                        cfl_factor=0.8, sponge_width=0.0,
                        require_stability=False, require_finite_window=False):
    """Check every hypothesis the experiment relies on; never raises.

    Returns a :class:`ValidationReport` listing each violated requirement
    with the guarantee it belongs to (see README, "hypothesis registry").
    """
    rep = ValidationReport()

    # material
    if material.mu <= 0.0 or (1.0 + min(0.0, material.inclusion_amplitude)) * material.mu <= 0.0:
        rep.add("material-mu", "shear modulus must stay positive", "well-posedness")
    if material.lam < 0.0:
        rep.add("material-lambda", "first Lame parameter must be nonnegative",
                "well-posedness")
    if not material.is_uniform and material.homogeneous_outside > geo.source_radius:
        rep.add(
            "material-homogeneous",
            f"coefficients vary out to {material.homogeneous_outside:.3g} "
            f"which exceeds the source radius {geo.source_radius:.3g}",
            "far-field homogeneity",
        )

    # geometry
    if geo.measurement_radius <= geo.source_radius:
        rep.add("geometry-nested", "measurement sphere must enclose the source ball",
                "measurement geometry")
    if geo.box_halfwidth <= geo.measurement_radius + sponge_width:
        rep.add(
            "geometry-box",
            f"box halfwidth {geo.box_halfwidth:.3g} must strictly exceed "
            f"measurement radius {geo.measurement_radius:.3g} plus the "
            f"absorbing layer {sponge_width:.3g}",
            "measurement geometry",
        )
    cav = geo.cavity
    if cav is not None:
        if cav.bounding_radius >= geo.source_radius:
            rep.add("cavity-inside", "cavity must sit strictly inside the source ball",
                    "measurement geometry")

    # solver compatibility
    if dt is not None and grid_h is not None:
        if cfl_factor > 0.9:
            rep.add("cfl-factor", f"CFL factor {cfl_factor} exceeds 0.9",
                    "solver stability")
        dt_max = cfl_factor * grid_h / (math.sqrt(3.0) * material.cp_max())
        if dt > dt_max * (1.0 + 1e-12):
            rep.add("cfl", f"dt={dt:.3e} exceeds the CFL bound {dt_max:.3e}",
                    "solver stability")

    if isinstance(source, SeparatedSource):
        _validate_separated(rep, geo, material, source, require_finite_window)
    elif isinstance(source, PlanarSource):
        _validate_planar(rep, geo, material, source, require_stability)
    elif source is not None:
        rep.add("source-kind", f"unknown source type {type(source).__name__}",
                "measurement geometry")
    return rep


def _validate_separated(rep, geo, material, source, require_finite_window):
    n_in_window = int(math.ceil(geo.source_duration / source.dt))
    tail = source.f_samples[n_in_window:]
    if tail.size and np.max(np.abs(tail)) > 1e-9 * max(1e-300, np.max(np.abs(source.f_samples))):
        rep.add("separated-f-support", "f must vanish outside [0, T)",
                "separated source uniqueness")
    if source.h_support_radius > geo.source_radius:
        rep.add("separated-h-support", "h must be supported inside the source ball",
                "separated source uniqueness")
    if geo.cavity is not None:
        # probe h on the cavity closure
        probe = _cavity_probe_points(geo.cavity)
        hx, hy, hz = source.h(*probe)
        if max(np.max(np.abs(hx)), np.max(np.abs(hy)), np.max(np.abs(hz))) > 1e-9:
            rep.add("separated-h-cavity", "h must vanish on the cavity closure",
                    "separated source uniqueness")
    if require_finite_window and source.f_initial == 0.0:
        rep.add("separated-f0",
                "finite-window identification needs f(0) != 0",
                "separated source finite-window uniqueness")


def _cavity_probe_points(cavity, n=5):
    if isinstance(cavity, CavityBox):
        xs = [np.linspace(lo, hi, n) for lo, hi in zip(cavity.lo, cavity.hi)]
        X, Y, Z = np.meshgrid(*xs, indexing="ij")
        return X.ravel(), Y.ravel(), Z.ravel()
    cx, cy, cz = cavity.center
    r = np.linspace(0.0, cavity.radius, n)
    th = np.linspace(0.0, np.pi, n)
    ph = np.linspace(0.0, 2 * np.pi, n)
    R, TH, PH = np.meshgrid(r, th, ph, indexing="ij")
    return (cx + R * np.sin(TH) * np.cos(PH),
            cy + R * np.sin(TH) * np.sin(PH),
            cz + R * np.cos(TH))


def _validate_planar(rep, geo, material, source, require_stability):
    if not material.is_uniform:
        rep.add("planar-uniform", "planar-source runs need uniform coefficients",
                "planar source uniqueness")
    if geo.cavity is not None:
        rep.add("planar-cavity", "planar-source runs assume no cavity",
                "planar source uniqueness")
    if geo.measurement_radius <= math.sqrt(2.0) * geo.source_radius:
        rep.add(
            "planar-radius",
            f"measurement radius {geo.measurement_radius:.3g} <= sqrt(2) x "
            f"source radius {math.sqrt(2.0) * geo.source_radius:.3g}",
            "planar source uniqueness",
        )
    if material.is_uniform:
        t_min = huygens_min_record_time(geo, material)
        if geo.record_duration <= t_min:
            rep.add(
                "planar-window",
                f"recording window {geo.record_duration:.3g} must exceed "
                f"T + 2 R1 sqrt(rho/mu) = {t_min:.3g}",
                "planar source uniqueness",
            )
    if abs(source.envelope(0.0)) > 1e-12:
        rep.add("planar-rest-start", "planar source must vanish at t = 0",
                "planar source uniqueness")
    if np.max(np.abs(source.g_samples)) == 0.0:
        rep.add("planar-g-nonzero", "g must not vanish identically",
                "planar source uniqueness")
    if np.max(np.abs(source.g_grid)) > geo.source_radius:
        rep.add("planar-g-support", "g samples must lie inside (-R, R)",
                "planar source uniqueness")
    if source.support_radius > geo.source_radius:
        rep.add("planar-f-support", "f must be supported in the source disk",
                "planar source uniqueness")
    if require_stability and source.g_sign == "mixed":
        rep.add("planar-g-sign", "stability experiments need g of constant sign",
                "log-type stability estimate")
