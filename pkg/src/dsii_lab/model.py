"""External parameters, constraint branches, the saddle in the spatially uniform
plane and the linearized spectrum about the circle |q| = omega."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintViolation, NoSaddle, ZeroMean

# unit of the Lax pair; alpha_lax**2 = -1. The phase-shift asymptotics hold for -i.
ALPHA_LAX = -1j


@dataclass(frozen=True)
class ModelParams:
    omega: float
    alpha_damp: float
    beta_drive: float
    epsilon: float
    kappa1: float
    kappa2: float
    branch: str = ""
    unstable_modes: tuple = field(default=(), compare=False)

    def as_dict(self) -> dict:
        return {
            "omega": self.omega,
            "alpha_damp": self.alpha_damp,
            "beta_drive": self.beta_drive,
            "epsilon": self.epsilon,
            "kappa1": self.kappa1,
            "kappa2": self.kappa2,
            "branch": self.branch,
        }


@dataclass(frozen=True)
class SaddleState:
    I_val: float
    theta_val: float
    mu_pair: tuple
    refined: bool = False


@dataclass(frozen=True)
class SpectrumEntry:
    k: tuple
    xi: tuple
    mu_plus: float
    mu_minus: float

    @property
    def unstable(self) -> bool:
        return self.mu_plus > 0


@dataclass(frozen=True)
class CoordinateDecomposition:
    J_val: float
    theta_mean: float
    f_field: object  # TorusField
    omega: float


def constraint_branch(omega: float, kappa1: float, kappa2: float) -> str | None:
    """Return 'cstr1', 'cstr2' or None."""
    w4 = 4.0 * omega * omega
    k1s, k2s = kappa1 * kappa1, kappa2 * kappa2
    if kappa2 < kappa1 < 2 * kappa2 and k1s < w4 < min(k1s + k2s, 4 * k2s):
        return "cstr1"
    if kappa1 < kappa2 < 2 * kappa1 and k2s < w4 < min(k1s + k2s, 4 * k1s):
        return "cstr2"
    return None


def dispersion(xi1, xi2, omega, epsilon=0.0, alpha_damp=0.0):
    """Growth rates (mu_plus, mu_minus) of the linearization at |q| = omega.

    Works elementwise on arrays. For |xi| > 2 omega the square root is imaginary
    and only the (damping) real part is returned.
    """
    xi1 = np.asarray(xi1, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    r2 = xi1 ** 2 + xi2 ** 2
    r = np.sqrt(r2)
    with np.errstate(divide="ignore", invalid="ignore"):
        amp = np.where(r > 0, np.abs(xi1 ** 2 - xi2 ** 2) / np.where(r > 0, r, 1.0), 0.0)
    disc = np.sqrt(np.clip(4 * omega ** 2 - r2, 0.0, None))
    shift = -epsilon * (alpha_damp + r2)
    return shift + amp * disc, shift - amp * disc


def frequency(xi1, xi2, eta):
    """Unperturbed dispersion relation of the linearized DSII about the plane
    wave of amplitude eta: Omega**2 = (xi1**2 - xi2**2)**2 (|xi|**2 - 4 eta**2)/|xi|**2.

    Returned as a complex number; purely imaginary values are growth rates.
    """
    xi1 = np.asarray(xi1, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    r2 = xi1 ** 2 + xi2 ** 2
    om2 = (xi1 ** 2 - xi2 ** 2) ** 2 * (r2 - 4 * eta ** 2) / np.where(r2 > 0, r2, 1.0)
    return np.sqrt(om2.astype(complex))


def linear_spectrum(params: ModelParams, kmax: int = 32) -> list[SpectrumEntry]:
    if kmax < 1:
        raise ValueError("kmax must be >= 1")
    k1, k2 = np.meshgrid(np.arange(kmax + 1), np.arange(kmax + 1), indexing="ij")
    mask = (k1 + k2) > 0
    k1, k2 = k1[mask], k2[mask]
    xi1, xi2 = k1 * params.kappa1, k2 * params.kappa2
    mp, mm = dispersion(xi1, xi2, params.omega, params.epsilon, params.alpha_damp)
    return [
        SpectrumEntry((int(a), int(b)), (float(c), float(d)), float(p), float(m))
        for a, b, c, d, p, m in zip(k1, k2, xi1, xi2, mp, mm)
    ]


def unstable_modes(omega, kappa1, kappa2, kmax: int = 32) -> tuple:
    """Lattice modes with mu_plus > 0 at epsilon = 0 (strictly positive, round-off guarded)."""
    k1, k2 = np.meshgrid(np.arange(kmax + 1), np.arange(kmax + 1), indexing="ij")
    mask = (k1 + k2) > 0
    k1, k2 = k1[mask], k2[mask]
    mp, _ = dispersion(k1 * kappa1, k2 * kappa2, omega)
    hit = mp > 1e-12
    return tuple((int(a), int(b)) for a, b in zip(k1[hit], k2[hit]))


def validate_params(omega, alpha_damp, beta_drive, epsilon, kappa1, kappa2,
                    require_saddle: bool = True) -> ModelParams:
    vals = dict(omega=omega, alpha_damp=alpha_damp, beta_drive=beta_drive,
                epsilon=epsilon, kappa1=kappa1, kappa2=kappa2)
    for k, v in vals.items():
        if not math.isfinite(float(v)):
            raise ConstraintViolation(f"{k} is not finite: {v!r}")
    if min(omega, kappa1, kappa2) <= 0 or alpha_damp < 0 or beta_drive < 0 or epsilon < 0:
        raise ConstraintViolation("omega, kappa must be > 0 and alpha, beta, epsilon >= 0")
    branch = constraint_branch(omega, kappa1, kappa2)
    if branch is None:
        raise ConstraintViolation(
            f"neither constraint branch holds for omega={omega}, kappa=({kappa1}, {kappa2})")
    modes = unstable_modes(omega, kappa1, kappa2)
    if len(modes) != 2:
        raise ConstraintViolation(f"expected 2 unstable modes, found {modes}")
    if require_saddle and not alpha_damp * omega < beta_drive:
        raise NoSaddle(f"alpha*omega = {alpha_damp * omega} >= beta = {beta_drive}")
    return ModelParams(float(omega), float(alpha_damp), float(beta_drive), float(epsilon),
                       float(kappa1), float(kappa2), branch, modes)


def _mu(I, theta, p: ModelParams):
    e = p.epsilon
    st = math.sin(theta)
    rad = 4 * math.sqrt(I) * p.beta_drive * st - e * (p.beta_drive * st / math.sqrt(I)) ** 2
    root = math.sqrt(e) * math.sqrt(max(rad, 0.0))
    return (root - e * p.alpha_damp, -root - e * p.alpha_damp)


def saddle_state(params: ModelParams) -> SaddleState:
    """Saddle of the uniform dynamics, expansion truncated at first order in epsilon."""
    p = params
    if not p.alpha_damp * p.omega < p.beta_drive:
        raise NoSaddle("alpha*omega >= beta")
    w = p.omega
    I = w * w - p.epsilon / (2 * w) * math.sqrt(p.beta_drive ** 2 - (p.alpha_damp * w) ** 2)
    c = p.alpha_damp * math.sqrt(I) / p.beta_drive
    if not 0 <= c < 1:
        raise NoSaddle(f"cos(theta) = {c} outside [0, 1)")
    theta = math.acos(c)
    return SaddleState(I, theta, _mu(I, theta, p))


def refine_saddle(params: ModelParams, tol: float = 1e-15, maxit: int = 50) -> SaddleState:
    """Newton iteration for the exact uniform fixed point.

    In the uniform plane the fixed point sqrt(I) e^{i theta} satisfies
    I - omega^2 = -eps beta sin(theta) / (2 sqrt(I)), cos(theta) = alpha sqrt(I) / beta.
    """
    p = params
    s0 = saddle_state(p)
    a, b, e, w = p.alpha_damp, p.beta_drive, p.epsilon, p.omega

    def F(I):
        st = math.sqrt(max(1 - a * a * I / (b * b), 0.0))
        return I - w * w + e * b * st / (2 * math.sqrt(I))

    I = s0.I_val
    for _ in range(maxit):
        h = 1e-7 * I
        d = (F(I + h) - F(I - h)) / (2 * h)
        step = F(I) / d
        I -= step
        if abs(step) < tol * I:
            break
    theta = math.acos(a * math.sqrt(I) / b)
    return SaddleState(I, theta, _mu(I, theta, p), refined=True)


def eigenphase(omega, kappa, sign=+1):
    """e^{+-i theta} = (kappa -+ i sqrt(4 omega^2 - kappa^2)) / (2 omega); unit modulus."""
    return (kappa - sign * 1j * math.sqrt(4 * omega * omega - kappa * kappa)) / (2 * omega)


def decompose_coordinates(q, omega) -> CoordinateDecomposition:
    """Split q = (rho + f) e^{i theta} with <f> = 0 and J = <|q|^2> - omega^2."""
    from .spectral import TorusField

    m = q.mean()
    scale = max(float(np.abs(q.values).max()), np.finfo(float).tiny)
    if abs(m) <= 1e-14 * scale:
        raise ZeroMean("mean of q vanishes; phase undefined")
    theta = float(np.angle(m))
    rho = abs(m)
    f = q.values * np.exp(-1j * theta) - rho
    f = f - f.mean()
    J = float(np.mean(np.abs(q.values) ** 2)) - omega * omega
    return CoordinateDecomposition(J, theta, TorusField(q.grid, f, q.parity), omega)


def reconstruct(dec: CoordinateDecomposition):
    from .spectral import TorusField

    f = dec.f_field.values
    rho = math.sqrt(dec.J_val + dec.omega ** 2 - float(np.mean(np.abs(f) ** 2)))
    return TorusField(dec.f_field.grid, (rho + f) * np.exp(1j * dec.theta_mean), dec.f_field.parity)
