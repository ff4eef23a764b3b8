"""Twice-iterated Backlund-Darboux transform of the plane wave: the explicit
homoclinic orbit Q = q_c - 2 b - 2 b^I and its building blocks."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import BranchUndefined, DegenerateDenominator
from .model import ALPHA_LAX
from .spectral import TorusField, TorusGrid, bloch_derivative, derivative


@dataclass(frozen=True)
class DarbouxParams:
    eta: float
    omega: float
    kappa1: float
    kappa2: float
    gamma: float
    lambda0: float
    xi10: float
    vartheta1: float
    vartheta2: float
    rho: float
    rho_hat: float
    vartheta_b: float
    vartheta_hat_b: float
    sign_x: int = 1
    sign_y: int = 1
    alpha_lax: complex = ALPHA_LAX

    @property
    def delta_rho(self) -> float:
        return float((self.rho_hat + 1j * self.alpha_lax * self.kappa2 * self.xi10
                      / (self.kappa1 * self.lambda0) * self.rho).real)

    def qc(self, t: float = 0.0) -> complex:
        return self.eta * np.exp(-2j * (self.eta ** 2 - self.omega ** 2) * t + 1j * self.gamma)

    def tau(self, t):
        return 2 * self.kappa1 * self.lambda0 * t - self.rho

    def tau_hat(self, t):
        # real for alpha_lax = +-i
        return (2j * self.alpha_lax * self.kappa2 * self.xi10 * t).real + self.rho_hat

    def with_gamma(self, gamma: float) -> "DarbouxParams":
        return replace(self, gamma=float(gamma))

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "eta", "omega", "kappa1", "kappa2", "gamma", "lambda0", "xi10", "vartheta1",
            "vartheta2", "rho", "rho_hat", "vartheta_b", "vartheta_hat_b", "sign_x", "sign_y")}
        d["alpha_lax"] = [self.alpha_lax.real, self.alpha_lax.imag]
        d["delta_rho"] = self.delta_rho
        return d


def derive_params(omega, kappa1, kappa2, rho=0.0, rho_hat=None, gamma=0.0, sign_x=1, sign_y=1,
                  delta_rho=None, eta=None, alpha_lax=ALPHA_LAX) -> DarbouxParams:
    """Backlund parameters for the plane wave of amplitude eta (default omega).

    Either rho_hat or delta_rho must be given; delta_rho fixes rho_hat through
    delta_rho = rho_hat + (kappa2 xi10 / (kappa1 lambda0)) rho.
    """
    eta = omega if eta is None else eta
    if eta * eta <= kappa1 ** 2 / 4 or eta * eta <= kappa2 ** 2 / 4:
        raise BranchUndefined(f"eta^2 = {eta * eta} must exceed kappa1^2/4 and kappa2^2/4")
    if sign_x not in (1, -1) or sign_y not in (1, -1):
        raise ValueError("sign_x, sign_y must be +1 or -1")
    lam0 = math.sqrt(eta * eta - kappa1 ** 2 / 4)
    xi10 = math.sqrt(eta * eta - kappa2 ** 2 / 4)
    th1 = float(np.angle(kappa1 / 2 + 1j * lam0))
    th2 = float(np.angle(1j * alpha_lax * kappa2 / 2 + 1j * xi10))
    ratio = (1j * alpha_lax * kappa2 * xi10 / (kappa1 * lam0)).real
    if rho_hat is None:
        if delta_rho is None:
            raise ValueError("give rho_hat or delta_rho")
        rho_hat = delta_rho - ratio * rho
    return DarbouxParams(
        eta=float(eta), omega=float(omega), kappa1=float(kappa1), kappa2=float(kappa2),
        gamma=float(gamma), lambda0=lam0, xi10=xi10, vartheta1=th1, vartheta2=th2,
        rho=float(rho), rho_hat=float(rho_hat),
        vartheta_b=th1 + sign_x * math.pi / 2, vartheta_hat_b=th2 + sign_y * math.pi / 2,
        sign_x=sign_x, sign_y=sign_y, alpha_lax=alpha_lax)


def congruent_replacement(p: DarbouxParams) -> DarbouxParams:
    """alpha -> -alpha, th2 -> pi - th2, th_hat -> th_hat + pi - 2 th2, rho_hat -> -rho_hat."""
    return replace(p, alpha_lax=-p.alpha_lax, vartheta2=math.pi - p.vartheta2,
                   vartheta_hat_b=p.vartheta_hat_b + math.pi - 2 * p.vartheta2,
                   rho_hat=-p.rho_hat)


def xi_replacement(p: DarbouxParams) -> DarbouxParams:
    """xi10 -> -xi10, th2 -> -th2, th_hat -> th_hat + pi - 2 th2, rho_hat -> -rho_hat."""
    return replace(p, xi10=-p.xi10, vartheta2=-p.vartheta2,
                   vartheta_hat_b=p.vartheta_hat_b + math.pi - 2 * p.vartheta2,
                   rho_hat=-p.rho_hat)


def sech(x):
    ax = np.abs(x)
    e = np.exp(-ax)
    return 2 * e / (1 + e * e)


def scaled_hyperbolic(x):
    """(cosh(x/2), sinh(x/2)) divided by e^{|x|/2}; never overflows."""
    e = np.exp(-np.abs(x))
    return 0.5 * (1 + e), 0.5 * np.sign(x) * (1 - e)


# first transform -----------------------------------------------------------

def first_darboux(p: DarbouxParams, t, x):
    """Coefficients (a, b) of the first transform on the x-line (even representation)."""
    x = np.asarray(x, dtype=float)
    tau = p.tau(t)
    s = p.sign_x
    sh, th = sech(tau), np.tanh(tau)
    c = np.cos(p.kappa1 * x)
    s1, c1 = math.sin(p.vartheta1), math.cos(p.vartheta1)
    den = 1 - s * sh * s1 * c
    a = -s * p.lambda0 * sh * c1 * np.sin(p.kappa1 * x) / den
    bt = p.lambda0 / p.eta * (-s1 - 1j * th * c1 + s * sh * c) / den
    return a, -p.qc(t) * bt


def first_darboux_generic(p: DarbouxParams, t, x, vartheta):
    """(a, b) for an arbitrary Backlund phase vartheta (not necessarily even)."""
    x = np.asarray(x, dtype=float)
    tau = p.tau(t)
    xt = p.kappa1 * x / 2 + vartheta / 2
    zt = xt - math.pi / 2 - p.vartheta1
    sh, th = sech(tau), np.tanh(tau)
    den = 1 + sh * np.cos(xt + zt) * np.cos(xt - zt)
    a = -p.lambda0 * sh * np.sin(xt + zt) * np.sin(xt - zt) / den
    bt = p.lambda0 / p.eta * (np.cos(xt - zt) - 1j * th * np.sin(xt - zt) + sh * np.cos(xt + zt)) / den
    return a, -p.qc(t) * bt


def seed_eigenvector(p: DarbouxParams, t, x, scaled=False):
    """psi = psi^+ + psi^- of the plane wave at lambda0 (up to sqrt(c+ c-) e^{i r2 t}).

    With scaled=True both components are divided by e^{|tau|/2}.
    """
    tau = p.tau(t)
    xt = p.kappa1 * np.asarray(x, float) / 2 + p.vartheta_b / 2
    zt = xt - math.pi / 2 - p.vartheta1
    if scaled:
        ch, sh = scaled_hyperbolic(tau)
    else:
        ch, sh = math.cosh(tau / 2), math.sinh(tau / 2)
    vt1 = ch * np.cos(xt) - 1j * sh * np.sin(xt)
    v2 = p.eta * (ch * np.cos(zt) - 1j * sh * np.sin(zt))
    return -p.qc(t) * vt1, v2, vt1


def first_darboux_direct(p: DarbouxParams, t, x):
    """(a, b) computed from the seed eigenvector (oracle for the closed forms)."""
    v1, v2, _ = seed_eigenvector(p, t, x, scaled=True)
    n = np.abs(v1) ** 2 + np.abs(v2) ** 2
    a = p.lambda0 * (np.abs(v1) ** 2 - np.abs(v2) ** 2) / n
    b = 2 * p.lambda0 * v1 * np.conj(v2) / n
    return a, b


# second transform ----------------------------------------------------------

@dataclass
class DarbouxSample:
    t: float
    a_val: np.ndarray
    b_val: np.ndarray
    aI_val: np.ndarray
    bI_val: np.ndarray
    Q_field: TorusField
    W1p: np.ndarray | None = None
    W1m: np.ndarray | None = None
    W2p: np.ndarray | None = None
    W2m: np.ndarray | None = None
    W1: np.ndarray | None = None
    W2: np.ndarray | None = None
    min_denominator: float = float("nan")


def _yvars(p: DarbouxParams, y):
    yh = p.kappa2 * np.asarray(y, float) / 2 + p.vartheta_hat_b / 2
    return yh, yh - p.vartheta2


def w_components(p: DarbouxParams, t, a, bt, y):
    """W1^+-, W2^+- without their e^{+-tau_hat/2} factors (a, bt on x, y on y)."""
    al, k2, eta, th2 = p.alpha_lax, p.kappa2, p.eta, p.vartheta2
    yh, _ = _yvars(p, y)
    ep, em = np.exp(1j * yh), np.exp(-1j * yh)
    w1p = (0.5j * al * k2 + a + eta * bt * np.exp(-1j * th2)) * ep
    w1m = (-0.5j * al * k2 + a - eta * bt * np.exp(1j * th2)) * em
    w2p = np.exp(-1j * th2) * (0.5j * al * k2 - a + eta * np.conj(bt) * np.exp(1j * th2)) * ep
    w2m = -np.exp(1j * th2) * (-0.5j * al * k2 - a - eta * np.conj(bt) * np.exp(-1j * th2)) * em
    return w1p, w1m, w2p, w2m


def w_fields(p: DarbouxParams, t, a, bt, y):
    """W1, W2 in the hyperbolic form and their analytic y-derivatives."""
    al, k2, eta = p.alpha_lax, p.kappa2, p.eta
    th = p.tau_hat(t)
    ch, sh = math.cosh(th / 2), math.sinh(th / 2)
    yh, zh = _yvars(p, y)
    cy, sy, cz, sz = np.cos(yh), np.sin(yh), np.cos(zh), np.sin(zh)
    btc = np.conj(bt)
    h = 0.5 * al * k2
    W1 = ch * (a * cy - h * sy + 1j * eta * bt * sz) + sh * (1j * h * cy + 1j * a * sy + eta * bt * cz)
    W2 = ch * (-1j * a * sz + 1j * h * cz + eta * btc * cy) + sh * (-h * sz - a * cz + 1j * eta * btc * sy)
    d = k2 / 2
    dW1 = d * (ch * (-a * sy - h * cy + 1j * eta * bt * cz) + sh * (-1j * h * sy + 1j * a * cy - eta * bt * sz))
    dW2 = d * (ch * (-1j * a * cz - 1j * h * sz - eta * btc * sy) + sh * (-h * cz + a * sz + 1j * eta * btc * cy))
    return W1, W2, dW1, dW2


def iterated_coefficients(p: DarbouxParams, t, a, bt, y):
    """(a^I, b^I / q_c * eta, denominator / cosh(tau_hat)) from the symbolic
    reductions, all divided through by cosh(tau_hat) so large |tau_hat| is safe."""
    al, k2, eta = p.alpha_lax, p.kappa2, p.eta
    th = p.tau_hat(t)
    T, S = math.tanh(th), float(sech(th))
    yh, zh = _yvars(p, y)
    s2, c2 = math.sin(p.vartheta2), math.cos(p.vartheta2)
    btc = np.conj(bt)
    a2 = a * a
    ab2 = eta ** 2 * np.abs(bt) ** 2
    mix = k2 ** 2 / 4 - a2 - ab2
    h = 0.5 * al * k2
    S1 = h * ((-al * k2 * a + 1j * a * eta * (bt + btc) * c2)
              + S * mix * np.cos(yh + zh) * s2 + T * (a * eta * (bt - btc) * s2))
    N = ((a2 + k2 ** 2 / 4 + ab2 + 1j * al * k2 * eta * 0.5 * (bt + btc) * c2)
         + S * mix * np.sin(yh + zh) * s2 + T * (al * k2 * eta * 0.5 * (bt - btc) * s2))
    S3 = h * ((-al * k2 * eta * bt + 1j * (-a2 + k2 ** 2 / 4 + eta ** 2 * bt * bt) * c2)
              + T * (a2 - k2 ** 2 / 4 + eta ** 2 * bt * bt) * s2)
    N = N.real
    return -S1 / N, S3 / N, N


def _check_den(N, scale_ref):
    m = float(np.min(N))
    if not m > 1e-14 * scale_ref:
        raise DegenerateDenominator(f"|W1|^2+|W2|^2 reaches {m:.3e} (scale {scale_ref:.3e})")
    return m


def iterate_darboux(p: DarbouxParams, t, grid: TorusGrid, with_w: bool = True) -> DarbouxSample:
    x, y = grid.x[:, None], grid.y[None, :]
    a, b = first_darboux(p, t, x)
    qc = p.qc(t)
    bt = -b / qc
    aI, bIt, N = iterated_coefficients(p, t, a, bt, y)
    _check_den(N, p.kappa2 ** 2 / 4 + p.eta ** 2)
    bI = qc / p.eta * bIt
    aI = np.broadcast_to(aI, (grid.nx, grid.ny))
    bI = np.broadcast_to(bI, (grid.nx, grid.ny))
    Q = qc - 2 * b - 2 * bI
    s = DarbouxSample(t=float(t), a_val=a[:, 0], b_val=b[:, 0], aI_val=np.array(aI),
                      bI_val=np.array(bI), Q_field=TorusField(grid, Q, (True, True)),
                      min_denominator=float(np.min(N)))
    if with_w:
        th = p.tau_hat(t)
        with np.errstate(over="ignore", invalid="ignore"):
            ep, em = math.exp(min(th / 2, 700)), math.exp(min(-th / 2, 700))
            w1p, w1m, w2p, w2m = w_components(p, t, a, bt, y)
            s.W1p, s.W1m, s.W2p, s.W2m = w1p * ep, w1m * em, w2p * ep, w2m * em
            s.W1, s.W2 = 0.5 * (s.W1p + s.W1m), 0.5 * (s.W2p + s.W2m)
    return s


def iterate_darboux_direct(p: DarbouxParams, t, grid: TorusGrid):
    """(a^I, b^I) straight from W1, W2 and their analytic y-derivatives."""
    x, y = grid.x[:, None], grid.y[None, :]
    a, b = first_darboux(p, t, x)
    qc = p.qc(t)
    bt = -b / qc
    W1, W2, dW1, dW2 = w_fields(p, t, a, bt, y)
    al = p.alpha_lax
    N = np.abs(W1) ** 2 + np.abs(W2) ** 2
    # alpha d_y conj(W2) = alpha conj(dW2)
    aI = -(W2 * al * np.conj(dW2) + np.conj(W1) * al * dW1) / N
    bI = qc / p.eta * (np.conj(W2) * al * dW1 - W1 * al * np.conj(dW2)) / N
    return aI, bI, W1, W2


def orbit(p: DarbouxParams, t, grid: TorusGrid) -> TorusField:
    return iterate_darboux(p, t, grid, with_w=False).Q_field


def orbit_time_derivative(p: DarbouxParams, t, grid: TorusGrid, h: float = 1e-4):
    return (orbit(p, t + h, grid).values - orbit(p, t - h, grid).values) / (2 * h)


def phase_shift_limits(p: DarbouxParams, tau_abs: float = 40.0, grid: TorusGrid | None = None):
    """Compare the t -> +-inf limits of (q_c - 2b)/q_c and Q/q_c with the
    predicted constants; returns the max deviations."""
    grid = grid or TorusGrid(16, 16, p.kappa1, p.kappa2)
    out = {}
    for sgn in (1, -1):
        t = (sgn * tau_abs + p.rho) / (2 * p.kappa1 * p.lambda0)
        qc = p.qc(t)
        a, b = first_darboux(p, t, grid.x)
        first = (qc - 2 * b) / qc
        pred1 = np.exp(-sgn * 2j * p.vartheta1)
        Q = orbit(p, t, grid).values / qc
        pred2 = np.exp(1j * math.pi) * np.exp(-sgn * 2j * (p.vartheta1 - p.vartheta2))
        key = "plus" if sgn > 0 else "minus"
        out[f"first_{key}"] = float(np.abs(first - pred1).max())
        out[f"second_{key}"] = float(np.abs(Q - pred2).max())
        out[f"first_modulus_{key}"] = float(np.abs(np.abs(first) - 1).max())
    return out


def transform_potentials(p: DarbouxParams, t, grid: TorusGrid):
    """(R1, R2) after both transforms: R1 = r1 + 2 D+(a + a^I), R2 = r2 + 2 D-(a + conj a^I)."""
    s = iterate_darboux(p, t, grid, with_w=False)
    al = p.alpha_lax
    r = p.eta ** 2 - p.omega ** 2
    a2 = np.broadcast_to(s.a_val[:, None], (grid.nx, grid.ny))
    aI = s.aI_val

    def Dp(f):
        return al * derivative(f, grid, 1) + derivative(f, grid, 0)

    def Dm(f):
        return al * derivative(f, grid, 1) - derivative(f, grid, 0)

    R1 = -r + 2 * Dp(a2 + aI)
    R2 = r + 2 * Dm(a2 + np.conj(aI))
    return TorusField(grid, R1), TorusField(grid, R2)


def lax_residual(psi, Q, lam, alpha_lax, grid: TorusGrid, k0, congruent=False):
    """Relative residual of the spatial Lax equation (or its congruent twin)
    for a Bloch eigenfunction psi = e^{i k0.x} * periodic."""
    d = [[bloch_derivative(c, grid, k0, ax) for ax in (0, 1)] for c in psi]
    p1, p2 = psi
    if not congruent:
        r1 = alpha_lax * d[0][1] - d[0][0] + Q * p2 - lam * p1
        r2 = np.conj(Q) * p1 + alpha_lax * d[1][1] + d[1][0] - lam * p2
    else:
        r1 = -(alpha_lax * d[0][1] + d[0][0]) + Q * p2 - lam * p1
        r2 = np.conj(Q) * p1 - (alpha_lax * d[1][1] - d[1][0]) - lam * p2
    sc = max(float(np.abs(p1).max()), float(np.abs(p2).max()))
    return max(float(np.abs(r1).max()), float(np.abs(r2).max())) / sc
