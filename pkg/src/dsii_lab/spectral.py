"""Fourier machinery on the periodic rectangle [0, 2pi/k1) x [0, 2pi/k2)."""
from __future__ import annotations

import csv
import io
import logging
import os
import tempfile
from dataclasses import dataclass
from functools import cached_property

import numpy as np

log = logging.getLogger(__name__)

OPERATORS = ("Upsilon", "Laplacian", "InvLaplacianUpsilon", "Mean")


@dataclass(frozen=True)
class TorusGrid:
    nx: int
    ny: int
    kappa1: float
    kappa2: float

    def __post_init__(self):
        for n in (self.nx, self.ny):
            if n < 8 or n & (n - 1):
                raise ValueError(f"grid size must be a power of two >= 8, got {n}")
        if self.kappa1 <= 0 or self.kappa2 <= 0:
            raise ValueError("wavenumbers must be positive")

    @property
    def Lx(self):
        return 2 * np.pi / self.kappa1

    @property
    def Ly(self):
        return 2 * np.pi / self.kappa2

    @property
    def dA(self):
        return self.Lx * self.Ly / (self.nx * self.ny)

    @cached_property
    def x(self):
        return np.arange(self.nx) * (self.Lx / self.nx)

    @cached_property
    def y(self):
        return np.arange(self.ny) * (self.Ly / self.ny)

    @cached_property
    def XY(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    @cached_property
    def K(self):
        # angular wavenumbers of each FFT bin
        kx = np.fft.fftfreq(self.nx, 1.0 / self.nx) * self.kappa1
        ky = np.fft.fftfreq(self.ny, 1.0 / self.ny) * self.kappa2
        return np.meshgrid(kx, ky, indexing="ij")

    @cached_property
    def nyquist_mask(self):
        """True on the Nyquist rows/columns, where odd derivatives are zeroed."""
        m = np.zeros((self.nx, self.ny), bool)
        m[self.nx // 2, :] = True
        m[:, self.ny // 2] = True
        return m

    @cached_property
    def symbols(self):
        KX, KY = self.K
        k2 = KX ** 2 + KY ** 2
        lap = -k2
        ups = -(KX ** 2 - KY ** 2)
        safe = np.where(k2 > 0, k2, 1.0)
        a = np.where(k2 > 0, (KX ** 2 - KY ** 2) / safe, 0.0)
        return {"Laplacian": lap, "Upsilon": ups, "InvLaplacianUpsilon": a}

    def index_of(self, k1: int, k2: int):
        return (k1 % self.nx, k2 % self.ny)


@dataclass(frozen=True)
class TorusField:
    grid: TorusGrid
    values: np.ndarray
    parity: tuple = (False, False)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != (self.grid.nx, self.grid.ny):
            raise ValueError(f"values shape {v.shape} does not match grid")
        object.__setattr__(self, "values", v.astype(complex, copy=False))

    def mean(self) -> complex:
        # uniform samples: the trapezoid rule equals (k1 k2 / 4 pi^2) * integral
        return complex(self.values.mean())

    def norm(self) -> float:
        """Continuous L2 norm over one period cell."""
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.dA))

    def parity_defect(self) -> tuple:
        v = self.values
        rx = v[(-np.arange(self.grid.nx)) % self.grid.nx, :]
        ry = v[:, (-np.arange(self.grid.ny)) % self.grid.ny]
        return float(np.abs(v - rx).max()), float(np.abs(v - ry).max())

    def with_values(self, values, parity=None):
        return TorusField(self.grid, values, self.parity if parity is None else parity)


def fft(f):
    return np.fft.fft2(f)


def ifft(F):
    return np.fft.ifft2(F)


def multiplier(values, symbol):
    return ifft(symbol * fft(values))


def inv_lap_ups(values, grid: TorusGrid):
    """Delta^{-1} Upsilon on raw arrays; the mean mode is removed."""
    return ifft(grid.symbols["InvLaplacianUpsilon"] * fft(values))


def apply_operator(field: TorusField, op: str):
    if op not in OPERATORS:
        raise ValueError(f"unknown operator {op!r}; choose from {OPERATORS}")
    if op == "Mean":
        return field.mean()
    if op == "InvLaplacianUpsilon":
        m = field.mean()
        if abs(m) > 1e-13 * max(1.0, float(np.abs(field.values).max())):
            log.info("InvLaplacianUpsilon: projected out mean %r", m)
    out = multiplier(field.values, field.grid.symbols[op])
    return field.with_values(out)


def derivative(values, grid: TorusGrid, axis: int, order: int = 1):
    KX, KY = grid.K
    K = KX if axis == 0 else KY
    sym = (1j * K) ** order
    if order % 2:
        sym = np.where(grid.nyquist_mask, 0.0, sym)
    return ifft(sym * fft(values))


def bloch_derivative(values, grid: TorusGrid, k0: tuple, axis: int):
    """d/dx or d/dy of e^{i k0.x} p(x, y) with p periodic (spectral in p)."""
    X, Y = grid.XY
    ph = np.exp(1j * (k0[0] * X + k0[1] * Y))
    p = values / ph
    return ph * derivative(p, grid, axis) + 1j * k0[axis] * values


def solve_u(q: TorusField) -> TorusField:
    """Mean-zero real solution of Delta u = -4 d_y |q|^2."""
    g = q.grid
    KX, KY = g.K
    k2 = KX ** 2 + KY ** 2
    I = np.abs(q.values) ** 2
    dy = np.where(g.nyquist_mask, 0.0, 1j * KY)
    with np.errstate(divide="ignore", invalid="ignore"):
        sym = np.where(k2 > 0, 4 * dy / np.where(k2 > 0, k2, 1.0), 0.0)
    u = ifft(sym * fft(I))
    # discard round-off; u is real
    return TorusField(g, u.real.astype(complex), (q.parity[0], False))


def dsii_rhs_values(q, grid: TorusGrid, omega, epsilon=0.0, alpha_damp=0.0, beta_drive=0.0):
    s = grid.symbols
    Q = fft(q)
    I = np.abs(q) ** 2
    nl = ifft(s["InvLaplacianUpsilon"] * fft(I)) + I.mean() - omega ** 2
    out = -1j * (ifft(s["Upsilon"] * Q) + 2 * nl * q)
    if epsilon:
        out = out + epsilon * (ifft((s["Laplacian"] - alpha_damp) * Q) + beta_drive)
    return out


def dsii_rhs(q: TorusField, params) -> TorusField:
    """q_t of the perturbed equation in its nonlocal form."""
    p = params
    v = dsii_rhs_values(q.values, q.grid, p.omega, p.epsilon, p.alpha_damp, p.beta_drive)
    return q.with_values(v)


def dsii_rhs_via_u(q: TorusField, params) -> TorusField:
    """Same vector field through the auxiliary potential u (Delta u = -4 d_y |q|^2)."""
    p = params
    g = q.grid
    u = solve_u(q).values.real
    uy = derivative(u, g, 1).real
    lin = multiplier(q.values, g.symbols["Upsilon"])
    out = -1j * (lin + (2 * (np.abs(q.values) ** 2 - p.omega ** 2) + uy) * q.values)
    if p.epsilon:
        out = out + p.epsilon * (multiplier(q.values, g.symbols["Laplacian"])
                                 - p.alpha_damp * q.values + p.beta_drive)
    return q.with_values(out)


def fourier_norm(field: TorusField) -> float:
    """L2 norm via Parseval."""
    F = fft(field.values)
    n = field.grid.nx * field.grid.ny
    return float(np.sqrt(np.sum(np.abs(F) ** 2) / n * field.grid.dA))


# snapshot I/O --------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def snapshot_text(field: TorusField) -> str:
    g = field.grid
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["nx", "ny", "kappa1", "kappa2"])
    w.writerow([g.nx, g.ny, _fmt(g.kappa1), _fmt(g.kappa2)])
    w.writerow(["x", "y", "re", "im"])
    X, Y = g.XY
    for xv, yv, z in zip(X.ravel(), Y.ravel(), field.values.ravel()):
        w.writerow([_fmt(xv), _fmt(yv), _fmt(z.real), _fmt(z.imag)])
    return buf.getvalue()


def atomic_write(path, text: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_snapshot(field: TorusField, path):
    atomic_write(path, snapshot_text(field))


def read_snapshot(path) -> TorusField:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    nx, ny = int(rows[1][0]), int(rows[1][1])
    g = TorusGrid(nx, ny, float(rows[1][2]), float(rows[1][3]))
    data = np.array([[float(r[2]), float(r[3])] for r in rows[3:]])
    vals = (data[:, 0] + 1j * data[:, 1]).reshape(nx, ny)
    return TorusField(g, vals)
