"""Transformed eigenfunctions, Melnikov vectors and Melnikov integrals."""
from __future__ import annotations

import math
import os
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .darboux import (DarbouxParams, congruent_replacement, first_darboux, iterate_darboux,
                      iterated_coefficients, seed_eigenvector, w_components, xi_replacement,
                      _check_den)
from .errors import QuadratureNotConverged, SingularDenominator
from .model import constraint_branch
from .spectral import TorusGrid

TAIL = 1e-12


@dataclass
class EigenfunctionSet:
    t: float
    Q: np.ndarray
    Psi_plus: tuple
    Psi_hat_plus: tuple
    Phi_plus: tuple
    Phi_tilde_plus: tuple
    Phi_hat_plus: tuple


@dataclass
class MelnikovComponents:
    M: np.ndarray  # (2, 4): rows j = 1, 2; columns l = 1..4
    omega: float
    delta_rho: float
    kappa1: float
    kappa2: float
    meta: dict = field(default_factory=dict)

    def assemble(self, alpha, beta, gamma):
        M = self.M
        return M[:, 0] + alpha * M[:, 1] + beta * math.cos(gamma) * M[:, 2] + beta * math.sin(gamma) * M[:, 3]

    def scaled(self, c) -> "MelnikovComponents":
        return MelnikovComponents(self.M * c, self.omega, self.delta_rho, self.kappa1, self.kappa2,
                                  dict(self.meta))

    def as_dict(self) -> dict:
        return {"M": self.M.tolist(), "omega": self.omega, "delta_rho": self.delta_rho,
                "kappa1": self.kappa1, "kappa2": self.kappa2, "meta": self.meta}


@dataclass
class ParameterSolution:
    alpha_star: float
    beta_star: float
    chi: float | None
    gamma: float
    admissible: bool
    residual: tuple = (float("nan"), float("nan"))
    flags: tuple = ()

    def as_dict(self) -> dict:
        return {"alpha": self.alpha_star, "beta": self.beta_star, "chi": self.chi,
                "gamma": self.gamma, "admissible": self.admissible,
                "residual": list(self.residual), "flags": list(self.flags)}


# eigenfunctions ------------------------------------------------------------

def _coeffs(p: DarbouxParams, t, grid: TorusGrid):
    x, y = grid.x[:, None], grid.y[None, :]
    a, b = first_darboux(p, t, x)
    bt = -b / p.qc(t)
    aI, r, N = iterated_coefficients(p, t, a, bt, y)
    _check_den(N, p.kappa2 ** 2 / 4 + p.eta ** 2)
    # r = eta b^I / q_c, so b^I / (-q_c) = -r / eta
    return a, bt, aI, -r / p.eta


def psi_plus(p: DarbouxParams, t, grid: TorusGrid, aI, bIt):
    """Psi^+ = Gamma^I Gamma psi^+ at lambda0 in closed form, divided by
    i lambda0 kappa1 sqrt(c0+ c0-) e^{i gamma/2}.

    bIt is b^I / (-q_c). The seed components enter through e^{-|tau|/2}-scaled
    vectors so the formula is finite for any tau.
    """
    tau = p.tau(t)
    x = grid.x[:, None]
    v1, v2, vt1 = seed_eigenvector(p, t, x, scaled=True)
    nv = np.abs(v1) ** 2 + np.abs(v2) ** 2
    eta, lam0 = p.eta, p.lambda0
    qc = p.qc(t)
    V1 = eta * np.conj(vt1)  # conj(v1) with the q_c phase replaced by eta
    V2 = np.conj(v2)
    r2 = eta ** 2 - p.omega ** 2
    pref = math.exp(-abs(tau) / 2) * np.exp(1j * r2 * t - 0.5j * p.gamma) / eta / nv
    c1 = -qc * ((lam0 - aI) * V2 + eta * bIt * V1)
    c2 = eta * (-eta * np.conj(bIt) * V2 - (lam0 + np.conj(aI)) * V1)
    return pref * c1, pref * c2


def phi_plus(p: DarbouxParams, t, grid: TorusGrid, a, bt):
    """Phi_+ = Gamma^I Gamma phi_+ at lambda = 0 through the Sigma representation,
    divided by (1/4) i alpha kappa2 eta sqrt(c+ c-) e^{i gamma/2}."""
    x, y = grid.x[:, None], grid.y[None, :]
    th = p.tau_hat(t)
    w1p, w1m, w2p, w2m = w_components(p, t, a, bt, y)
    e = math.exp(-abs(th))
    sp, sm = (1.0, e) if th >= 0 else (e, 1.0)
    W1p, W1m, W2p, W2m = w1p * sp, w1m * sm, w2p * sp, w2m * sm
    W1, W2 = 0.5 * (W1p + W1m), 0.5 * (W2p + W2m)
    # products W^+ W^- carry no exponential factor
    S1 = 2 * np.conj(W1) * (w1p * w1m) + np.conj(W2p) * (w1p * w2m) + np.conj(W2m) * (w1m * w2p)
    S2 = 2 * np.conj(W2) * (w2p * w2m) + np.conj(W1p) * (w2p * w1m) + np.conj(W1m) * (w2m * w1p)
    nw = np.abs(W1) ** 2 + np.abs(W2) ** 2
    r2 = p.eta ** 2 - p.omega ** 2
    pref = (math.exp(-abs(th) / 2) * np.exp(1j * p.xi10 * x + 1j * r2 * t - 0.5j * p.gamma)
            / p.eta / nw)
    return pref * (-p.qc(t) * S1), pref * (p.eta * S2)


def build_eigenfunctions(p: DarbouxParams, t, grid: TorusGrid) -> EigenfunctionSet:
    a, bt, aI, bIt = _coeffs(p, t, grid)
    qc = p.qc(t)
    b = -qc * bt
    Q = qc - 2 * b - 2 * (-qc * bIt)
    pc, pk = congruent_replacement(p), xi_replacement(p)
    _, _, aIc, bItc = _coeffs(pc, t, grid)
    return EigenfunctionSet(
        t=float(t), Q=np.broadcast_to(Q, (grid.nx, grid.ny)).copy(),
        Psi_plus=psi_plus(p, t, grid, aI, bIt),
        Psi_hat_plus=psi_plus(pc, t, grid, aIc, bItc),
        Phi_plus=phi_plus(p, t, grid, a, bt),
        Phi_tilde_plus=phi_plus(pk, t, grid, a, bt),
        Phi_hat_plus=phi_plus(pc, t, grid, a, bt),
    )


def eigenfunctions_direct(p: DarbouxParams, t, grid: TorusGrid):
    """Psi^+ and Phi_+ by applying Gamma and Gamma^I algebraically to the seed
    eigenfunctions (independent of the closed forms; used as an oracle)."""
    X, Y = grid.XY
    s = iterate_darboux(p, t, grid, with_w=False)
    a = s.a_val[:, None]
    b = s.b_val[:, None]
    aI, bI = s.aI_val, s.bI_val
    qc, eta, lam0, al = p.qc(t), p.eta, p.lambda0, p.alpha_lax
    tau = p.tau(t)
    xt = p.kappa1 * X / 2 + p.vartheta_b / 2
    zt = xt - math.pi / 2 - p.vartheta1
    # decaying member of the pair psi^+ = -psi^- (up to the common prefactor)
    sg = 1 if tau >= 0 else -1
    e = math.exp(-abs(tau) / 2)
    p1 = -qc * e * np.exp(sg * 1j * xt)
    p2 = eta * e * np.exp(sg * 1j * zt)
    g1 = (a - lam0) * p1 + b * p2
    g2 = np.conj(b) * p1 - (lam0 + a) * p2
    P1 = (aI - lam0) * g1 + bI * g2
    P2 = np.conj(bI) * g1 - (lam0 + np.conj(aI)) * g2
    c = sg * 1j * lam0 * p.kappa1 * np.exp(0.5j * p.gamma)
    Psi = (P1 / c, P2 / c)
    th = p.tau_hat(t)
    sg = 1 if th <= 0 else -1
    yh = p.kappa2 * Y / 2 + p.vartheta_hat_b / 2
    bt = -b / qc
    t2 = p.vartheta2
    W1s = (sg * 0.5j * al * p.kappa2 + a + sg * eta * bt * np.exp(-sg * 1j * t2)) * np.exp(sg * th / 2 + sg * 1j * yh)
    W2s = sg * np.exp(-sg * 1j * t2) * (sg * 0.5j * al * p.kappa2 - a + sg * eta * np.conj(bt) * np.exp(sg * 1j * t2)) \
        * np.exp(sg * th / 2 + sg * 1j * yh)
    u1, u2 = -qc * W1s, eta * W2s
    d = sg * 0.5j * al * p.kappa2  # alpha d_y acting on e^{sg i yhat}
    F1 = (d + aI) * u1 + bI * u2
    F2 = np.conj(bI) * u1 + (d - np.conj(aI)) * u2
    cc = sg * 0.25j * al * p.kappa2 * eta * np.exp(0.5j * p.gamma)
    ph = np.exp(1j * p.xi10 * X)
    return Psi, (ph * F1 / cc, ph * F2 / cc), s.Q_field.values


# Melnikov integrals --------------------------------------------------------

def melnikov_vectors(E: EigenfunctionSet):
    """Quadratic products (P1, P2) for the two Melnikov vectors."""
    A, B = E.Psi_plus, E.Psi_hat_plus
    C, D = E.Phi_tilde_plus, E.Phi_hat_plus
    return (A[0] * B[0], A[1] * B[1]), (C[0] * D[0], C[1] * D[1])


def pairing(P, f, dA):
    """Unweighted cell integral of Re(P2 f + P1 conj(f))."""
    return float(np.sum((P[1] * f + P[0] * np.conj(f)).real) * dA)


def integrand(p: DarbouxParams, t, grid: TorusGrid, forcing=None):
    """(2, 3) array of generator pairings at time t: f = Delta Q, -Q, 1.

    With forcing=(alpha, beta) a (2,) array for f = Delta Q - alpha Q + beta instead.
    """
    E = build_eigenfunctions(p, t, grid)
    Q = E.Q
    lapQ = np.fft.ifft2(grid.symbols["Laplacian"] * np.fft.fft2(Q))
    vecs = melnikov_vectors(E)
    dA = grid.dA
    if forcing is not None:
        al, be = forcing
        f = lapQ - al * Q + be
        return np.array([pairing(P, f, dA) for P in vecs])
    one = np.ones_like(Q)
    return np.array([[pairing(P, f, dA) for f in (lapQ, -Q, one)] for P in vecs])


def decay_rate(p: DarbouxParams) -> float:
    return 2 * min(p.kappa1 * p.lambda0, p.kappa2 * abs(p.xi10))


def time_window(p: DarbouxParams, tail=TAIL, tcut_factor=1.0):
    T = -math.log(tail) / decay_rate(p) * tcut_factor
    shift = abs(p.rho) / (2 * p.kappa1 * p.lambda0) + abs(p.rho_hat) / (2 * p.kappa2 * abs(p.xi10))
    return T + shift


def _panels(p, tail, panel, tcut_factor):
    T = time_window(p, tail, tcut_factor)
    h = panel / (2 * p.kappa1 * p.lambda0)  # panel width given in tau units
    n = int(math.ceil(T / h))
    edges = np.arange(-n, n + 1) * h
    return edges


def _threads():
    n = int(os.environ.get("DSII_THREADS", "0") or 0)
    return n if n > 0 else (os.cpu_count() or 1)


def _chunk_eval(args):
    fun, ts = args
    return [fun(t) for t in ts]


class _Integrand:
    """Picklable node evaluator (process pools need a top-level callable)."""

    def __init__(self, params, grid, forcing=None):
        self.params, self.grid, self.forcing = params, grid, forcing

    def __call__(self, t):
        return np.concatenate([integrand(p, t, self.grid, self.forcing) for p in self.params],
                              axis=-1)


def _quadrature(fun, edges, order, threads=None):
    """Composite Gauss-Legendre; fun(t) -> array. Returns the compensated sum.

    Nodes are farmed out to worker processes in contiguous chunks; the summation
    order is fixed so the result does not depend on the worker count.
    """
    xg, wg = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.extend(0.5 * (a + b) + 0.5 * (b - a) * xg)
        weights.extend(0.5 * (b - a) * wg)
    workers = min(threads or _threads(), max(1, len(nodes) // 64))
    if workers > 1:
        chunks = np.array_split(np.array(nodes), workers * 4)
        ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
        with ProcessPoolExecutor(workers, mp_context=ctx) as ex:
            parts = list(ex.map(_chunk_eval, [(fun, list(c)) for c in chunks]))
        vals = [v for part in parts for v in part]
    else:
        vals = [fun(t) for t in nodes]
    vals = np.array(vals)
    w = np.array(weights)
    shape = vals.shape[1:]
    flat = vals.reshape(len(nodes), -1) * w[:, None]
    out = np.array([math.fsum(flat[:, i]) for i in range(flat.shape[1])]).reshape(shape)
    return out, np.array(nodes), vals


def _components_once(p, grid, order, panel, tail, tcut_factor, threads):
    edges = _panels(p, tail, panel, tcut_factor)
    p0, p1 = p.with_gamma(0.0), p.with_gamma(math.pi / 2)

    fun = _Integrand((p0, p1), grid)
    acc, nodes, vals = _quadrature(fun, edges, order, threads)
    g0, g1 = acc[:, :3], acc[:, 3:]
    # the beta generator is cos(g) M3 + sin(g) M4; sampled at g = 0 and pi/2
    M = np.column_stack([g0[:, 0], g0[:, 1], g0[:, 2], g1[:, 2]])
    mag = np.abs(vals).max(axis=(1, 2))
    meta = {
        "t_cut": float(edges[-1]), "n_panels": len(edges) - 1, "order": order,
        "nt": int(len(nodes)), "grid": [grid.nx, grid.ny],
        "gamma_defect": float(np.abs(g0[:, :2] - g1[:, :2]).max() / np.abs(g0[:, :2]).max()),
        "tail_ratio": float(max(mag[0], mag[-1]) / mag.max()),
    }
    return M, meta


def melnikov_components(p: DarbouxParams, grid: TorusGrid | None = None, order: int = 12,
                        panel: float = 0.5, tail: float = TAIL, tcut_factor: float = 1.0,
                        check: bool = True, rtol: float = 1e-6, threads=None) -> MelnikovComponents:
    """2x4 component matrix M_j^(l) at (omega, delta_rho) of p.

    Row j=1 pairs with the Psi-vector, row j=2 with the Phi-vector; columns are
    the Delta Q, -Q (alpha) and the two beta generators (cos gamma, sin gamma).
    With check=True the time rule is repeated with twice the nodes.
    """
    grid = grid or TorusGrid(64, 64, p.kappa1, p.kappa2)
    M, meta = _components_once(p, grid, order, panel, tail, tcut_factor, threads)
    if check:
        M2, _ = _components_once(p, grid, order, panel / 2, tail, tcut_factor, threads)
        scale = np.abs(M).max()
        rel = np.abs(M2 - M) / np.maximum(np.abs(M), 1e-6 * scale)
        meta["time_refinement_rel"] = float(rel.max())
        if rel.max() > rtol:
            raise QuadratureNotConverged(
                f"components change by {rel.max():.3e} relative under nt -> 2nt")
        M = M2
        meta["nt"] *= 2
    return MelnikovComponents(np.asarray(M), p.omega, p.delta_rho, p.kappa1, p.kappa2, meta)


def direct_melnikov(p: DarbouxParams, alpha, beta, gamma, grid: TorusGrid | None = None,
                    order: int = 12, panel: float = 0.5, tail: float = TAIL, threads=None):
    """(M1, M2) integrated directly with the full perturbation at phase gamma."""
    grid = grid or TorusGrid(64, 64, p.kappa1, p.kappa2)
    pg = p.with_gamma(gamma)
    edges = _panels(p, tail, panel, 1.0)
    acc, _, _ = _quadrature(_Integrand((pg,), grid, (alpha, beta)), edges, order, threads)
    return acc


# parameter solves ----------------------------------------------------------

def _admissible(alpha, beta, omega, kappa1, kappa2):
    return bool(alpha > 0 and beta > 0 and alpha * omega < beta
                and constraint_branch(omega, kappa1, kappa2) is not None)


def solve_alpha_beta(comp: MelnikovComponents, gamma: float) -> ParameterSolution:
    M = comp.M
    c = math.cos(gamma) * M[:, 2] + math.sin(gamma) * M[:, 3]
    den = M[1, 1] * c[0] - M[0, 1] * c[1]
    scale = np.abs(M).max() ** 2
    if not abs(den) > 1e-12 * scale:
        raise SingularDenominator(f"denominator {den:.3e} vanishes at gamma={gamma}")
    alpha = (M[0, 0] * c[1] - M[1, 0] * c[0]) / den
    beta = (M[0, 0] * M[1, 1] - M[1, 0] * M[0, 1]) / -den
    res = comp.assemble(alpha, beta, gamma)
    return ParameterSolution(float(alpha), float(beta), None, float(gamma),
                             _admissible(alpha, beta, comp.omega, comp.kappa1, comp.kappa2),
                             (float(res[0]), float(res[1])))


def delta_gamma(p: DarbouxParams) -> float:
    return -4 * (p.vartheta1 - p.vartheta2)


def appendix_chi(comp: MelnikovComponents, dgamma: float) -> ParameterSolution:
    """chi = 1/alpha under M1 = M2 = 0 and beta cos(gamma) = -alpha omega dg / (2 sin(dg/2))."""
    M = comp.M
    s = math.sin(dgamma / 2)
    if s == 0:
        raise SingularDenominator("sin(delta_gamma / 2) = 0")
    c = -comp.omega * dgamma / (2 * s)
    den = M[1, 0] * M[0, 3] - M[0, 0] * M[1, 3]
    if not abs(den) > 1e-12 * np.abs(M).max() ** 2:
        raise SingularDenominator(f"chi denominator {den:.3e} vanishes")
    chi = (M[0, 1] * M[1, 3] - M[1, 1] * M[0, 3] + c * (M[0, 2] * M[1, 3] - M[1, 2] * M[0, 3])) / den
    if chi == 0:
        raise SingularDenominator("chi = 0")
    alpha = 1 / chi
    bcos = alpha * c
    bsin = -(M[0, 0] + alpha * (M[0, 1] + c * M[0, 2])) / M[0, 3]
    beta = math.hypot(bcos, bsin)
    gamma = math.atan2(bsin, bcos)
    res = comp.assemble(alpha, beta, gamma)
    return ParameterSolution(float(alpha), float(beta), float(chi), float(gamma),
                             _admissible(alpha, beta, comp.omega, comp.kappa1, comp.kappa2),
                             (float(res[0]), float(res[1])))


def domain_scan(omegas, delta_rhos, gammas, kappa1=1.0, kappa2=math.sqrt(2), grid=None,
                **quad):
    """Tabulate (alpha, beta, admissible) over an (omega, delta_rho, gamma) lattice.

    Failures are recorded per cell; the scan never aborts.
    """
    from .darboux import derive_params
    from .errors import DSIIError

    rows = []
    for om in omegas:
        for dr in delta_rhos:
            comp, err = None, None
            try:
                p = derive_params(om, kappa1, kappa2, delta_rho=dr)
                g = grid or TorusGrid(64, 64, kappa1, kappa2)
                comp = melnikov_components(p, g, **quad)
            except DSIIError as exc:
                err = exc.kind
            for gm in gammas:
                row = {"omega": float(om), "delta_rho": float(dr), "gamma": float(gm),
                       "alpha": float("nan"), "beta": float("nan"), "admissible": False,
                       "flags": err or ""}
                if comp is not None:
                    try:
                        sol = solve_alpha_beta(comp, gm)
                        row.update(alpha=sol.alpha_star, beta=sol.beta_star,
                                   admissible=sol.admissible,
                                   flags="" if sol.admissible else "inadmissible")
                    except SingularDenominator as exc:
                        row["flags"] = exc.kind
                rows.append(row)
    return rows
