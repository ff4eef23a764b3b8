"""Pseudo-spectral time integration of the perturbed equation.

The linear part i(xi1^2 - xi2^2) - eps(|xi|^2 + alpha) is diagonal in Fourier
space and is integrated exactly; the nonlocal cubic term and the constant
forcing live in the nonlinear slot.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import BlowUp, NonlinearContamination
from .model import ModelParams, dispersion
from .spectral import TorusField, TorusGrid

BLOWUP_RATIO = 1e6
SERIES_RADIUS = 1.0


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float = 1e-3
    t_final: float = 1.0
    scheme: str = "etdrk4"  # or "split-step"
    snapshot_stride: int = 0  # 0: only the final state

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_final < 0:
            raise ValueError("t_final must be >= 0")
        if self.scheme not in ("etdrk4", "split-step"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.snapshot_stride < 0:
            raise ValueError("snapshot_stride must be >= 0")


def phi_functions(z, kmax=3, terms=30):
    """phi_1..phi_kmax of complex z, elementwise.

    Taylor series inside |z| < SERIES_RADIUS, closed-form recursion outside.
    """
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < SERIES_RADIUS
    out = []
    zs = np.where(small, z, 0.0)
    zb = np.where(small, 1.0, z)
    prev = np.exp(zb)  # phi_0
    for k in range(1, kmax + 1):
        ser = np.zeros_like(z)
        for n in range(terms - 1, -1, -1):
            ser = ser * zs + 1.0 / math.factorial(n + k)
        big = (prev - 1.0 / math.factorial(k - 1)) / zb
        out.append(np.where(small, ser, big))
        prev = big
    return out


def linear_symbol(grid: TorusGrid, params) -> np.ndarray:
    KX, KY = grid.K
    return 1j * (KX ** 2 - KY ** 2) - params.epsilon * (KX ** 2 + KY ** 2 + params.alpha_damp)


class _Stepper:
    def __init__(self, grid, params, dt, scheme):
        self.g, self.p, self.h, self.scheme = grid, params, dt, scheme
        L = linear_symbol(grid, params)
        self.a_sym = grid.symbols["InvLaplacianUpsilon"]
        z = dt * L
        self.E = np.exp(z)
        self.E2 = np.exp(z / 2)
        f1, f2, f3 = phi_functions(z)
        (h1,) = phi_functions(z / 2, kmax=1)
        self.Q = 0.5 * dt * h1
        self.f1 = dt * (f1 - 3 * f2 + 4 * f3)
        self.f2 = dt * (f2 - 2 * f3)
        self.f3 = dt * (4 * f3 - f2)
        self.L = L
        self.forcing = params.epsilon * params.beta_drive
        self.npts = grid.nx * grid.ny

    def potential(self, q):
        I = np.abs(q) ** 2
        return np.fft.ifft2(self.a_sym * np.fft.fft2(I)).real + I.mean() - self.p.omega ** 2

    def N(self, v):
        q = np.fft.ifft2(v)
        out = np.fft.fft2(-2j * self.potential(q) * q)
        out[0, 0] += self.forcing * self.npts
        return out

    def step(self, v):
        if self.scheme == "etdrk4":
            Nv = self.N(v)
            a = self.E2 * v + self.Q * Nv
            Na = self.N(a)
            b = self.E2 * v + self.Q * Na
            Nb = self.N(b)
            c = self.E2 * a + self.Q * (2 * Nb - Nv)
            Nc = self.N(c)
            return self.E * v + self.f1 * Nv + 2 * self.f2 * (Na + Nb) + self.f3 * Nc
        # Strang: exact linear half steps (with forcing), exact phase rotation in between
        v = self._lin_half(v)
        q = np.fft.ifft2(v)
        q = q * np.exp(-2j * self.h * self.potential(q))
        return self._lin_half(np.fft.fft2(q))

    def _lin_half(self, v):
        v = self.E2 * v
        if self.forcing:
            # mean mode: v0' = L0 v0 + eps beta npts
            v[0, 0] += self.forcing * self.npts * self.Q[0, 0]
        return v


def integrate(q0: TorusField, params, cfg: EvolutionConfig, t0: float = 0.0):
    """Return a list of (t, TorusField) snapshots, starting with (t0, q0)."""
    g = q0.grid
    st = _Stepper(g, params, cfg.dt, cfg.scheme)
    nsteps = int(round(cfg.t_final / cfg.dt))
    if abs(nsteps * cfg.dt - cfg.t_final) > 1e-9 * max(1.0, cfg.t_final):
        raise ValueError("t_final must be an integer multiple of dt")
    v = np.fft.fft2(q0.values)
    n0 = max(float(np.linalg.norm(q0.values)), np.finfo(float).tiny)
    snaps = [(t0, q0)]
    stride = cfg.snapshot_stride
    for n in range(1, nsteps + 1):
        v = st.step(v)
        if n % 16 == 0 or n == nsteps:
            nrm = float(np.linalg.norm(v)) / math.sqrt(st.npts)
            if not np.isfinite(nrm) or nrm > BLOWUP_RATIO * n0:
                raise BlowUp(f"norm ratio {nrm / n0:.3e} at t={t0 + n * cfg.dt:.6g}",
                             t=t0 + n * cfg.dt, ratio=nrm / n0)
        if (stride and n % stride == 0) or n == nsteps:
            if not snaps or snaps[-1][0] != t0 + n * cfg.dt:
                snaps.append((t0 + n * cfg.dt, TorusField(g, np.fft.ifft2(v), q0.parity)))
    return snaps


def final_state(q0: TorusField, params, cfg: EvolutionConfig, t0: float = 0.0) -> TorusField:
    return integrate(q0, params, replace(cfg, snapshot_stride=0), t0)[-1][1]


@dataclass(frozen=True)
class GrowthResult:
    exponent: float
    predicted: float
    fit_residual: float
    t_fit: float


def mode_direction(params, mode):
    """Real coefficient pair (p, r) of the growing eigen-direction for f = (p + i r) cos cos."""
    xi1, xi2 = mode[0] * params.kappa1, mode[1] * params.kappa2
    s = xi1 ** 2 - xi2 ** 2
    d = xi1 ** 2 + xi2 ** 2
    lam2 = s * (4 * params.omega ** 2 * s / d - s) if d > 0 else 0.0
    if s == 0 or lam2 <= 0:
        return 1.0, 0.0
    return 1.0, -math.sqrt(lam2) / s


def measure_growth(params: ModelParams, mode, amplitude: float = 1e-6, grid: TorusGrid | None = None,
                   dt: float = 1e-3, t_final: float | None = None, scheme: str = "etdrk4",
                   tol: float = 1e-3) -> GrowthResult:
    """Fit the exponential rate of a single lattice mode about the uniform state omega.

    For eps > 0 the forcing is set to beta = alpha*omega so that omega itself is an
    equilibrium and the linearization is exactly the diagonal-plus-coupling operator.
    """
    if amplitude > 1e-6:
        raise ValueError("amplitude must be <= 1e-6 to stay linear")
    p = replace(params, beta_drive=params.alpha_damp * params.omega) if params.epsilon else params
    n = 32
    while n < 4 * max(mode) + 8:
        n *= 2
    grid = grid or TorusGrid(n, n, p.kappa1, p.kappa2)
    X, Y = grid.XY
    pr, pi_ = mode_direction(p, mode)
    shape = np.cos(mode[0] * p.kappa1 * X) * np.cos(mode[1] * p.kappa2 * Y)
    q0 = p.omega + amplitude * (pr + 1j * pi_) * shape
    mu = float(dispersion(mode[0] * p.kappa1, mode[1] * p.kappa2, p.omega, p.epsilon, p.alpha_damp)[0])
    if t_final is None:
        t_final = min(math.log(1e-4 / amplitude) / mu, 10.0) if mu > 0.05 else 4.0
    t_final = round(t_final / dt) * dt
    stride = max(1, int(round(0.05 / dt)))
    snaps = integrate(TorusField(grid, q0, (True, True)), p, EvolutionConfig(dt, t_final, scheme, stride))
    idx = grid.index_of(*mode)
    ts = np.array([t for t, _ in snaps])
    amp = np.array([abs(np.fft.fft2(f.values)[idx]) for _, f in snaps])
    la = np.log(amp)
    coef = np.polyfit(ts, la, 1)
    res = float(np.abs(la - np.polyval(coef, ts)).max())
    if res > tol:
        raise NonlinearContamination(f"log-amplitude fit residual {res:.3e} exceeds {tol}")
    return GrowthResult(float(coef[0]), mu, res, float(t_final))
