"""Homological equations for a quadratic normal-form transform g = f + K(f, f).

For every lattice pair (k, l) the four complex unknowns K1(k,l), K2(k,l),
K2(l,k), K3(k,l) satisfy a linear system that also involves their complex
conjugates. It is solved in realified (8x8) form, pair by pair.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MissingEntry, SingularSystem
from .spectral import TorusField, TorusGrid

SINGULAR_COND = 1e14
NEAR_SINGULAR_COND = 1e10


@dataclass(frozen=True)
class NormalFormEntry:
    k: tuple
    ell: tuple
    K1: complex
    K2_kl: complex
    K2_lk: complex
    K3: complex
    residual: float
    cond: float
    sigma: float
    sigmas: tuple
    B_k: float
    B_ell: float
    B_klsum: float
    status: str = "ok"

    @property
    def max_abs(self) -> float:
        return max(abs(self.K1), abs(self.K2_kl), abs(self.K2_lk), abs(self.K3))


def symbol_a(k1, k2, kappa1, kappa2):
    n = (k1 * kappa1) ** 2 - (k2 * kappa2) ** 2
    d = (k1 * kappa1) ** 2 + (k2 * kappa2) ** 2
    return np.where(d > 0, n / np.where(d > 0, d, 1.0), 0.0)


def coefficients(k, ell, params):
    """Arrays (sigma, sigma1..4, Bk, Bl, Bkl) for batches of pairs.

    k, ell: integer arrays of shape (n, 2).
    """
    k = np.asarray(k, dtype=float).reshape(-1, 2)
    l = np.asarray(ell, dtype=float).reshape(-1, 2)
    c1s, c2s = params.kappa1 ** 2, params.kappa2 ** 2
    w2 = params.omega ** 2
    s = k + l
    Bk = 2 * w2 * symbol_a(k[:, 0], k[:, 1], params.kappa1, params.kappa2)
    Bl = 2 * w2 * symbol_a(l[:, 0], l[:, 1], params.kappa1, params.kappa2)
    Bs = 2 * w2 * symbol_a(s[:, 0], s[:, 1], params.kappa1, params.kappa2)
    k1, k2, l1, l2 = k[:, 0], k[:, 1], l[:, 0], l[:, 1]
    sigma = params.epsilon * (params.alpha_damp - 2 * (k1 * l1 * c1s + k2 * l2 * c2s))
    sig1 = 2 * (k2 * l2 * c2s - k1 * l1 * c1s) + Bs - Bk - Bl
    sig2 = 2 * ((k2 + l2) * l2 * c2s - (k1 + l1) * l1 * c1s) + Bs - Bk + Bl
    sig3 = 2 * ((k2 + l2) * k2 * c2s - (k1 + l1) * k1 * c1s) + Bs + Bk - Bl
    sig4 = 2 * ((k2 ** 2 + k2 * l2 + l2 ** 2) * c2s - (k1 ** 2 + k1 * l1 + l1 ** 2) * c1s) + Bs + Bk + Bl
    return sigma, (sig1, sig2, sig3, sig4), Bk, Bl, Bs


def complex_system(k, ell, params):
    """(A, C, r) with A x + C conj(x) = r, x = (K1, K2(k,l), K2(l,k), K3); batched."""
    sigma, (s1, s2, s3, s4), Bk, Bl, Bs = coefficients(k, ell, params)
    n = sigma.shape[0]
    A = np.zeros((n, 4, 4), complex)
    C = np.zeros((n, 4, 4), complex)
    A[:, 0, 0] = s1 + 1j * sigma
    A[:, 0, 1] = Bl
    A[:, 0, 2] = Bk
    C[:, 0, 3] = Bs
    A[:, 1, 0] = -Bl
    A[:, 1, 1] = s2 + 1j * sigma
    C[:, 1, 2] = Bs
    A[:, 1, 3] = Bk
    A[:, 2, 0] = -Bk
    C[:, 2, 1] = Bs
    A[:, 2, 2] = s3 + 1j * sigma
    A[:, 2, 3] = Bl
    C[:, 3, 0] = Bs
    A[:, 3, 1] = -Bk
    A[:, 3, 2] = -Bl
    A[:, 3, 3] = s4 + 1j * sigma
    w = params.omega
    r = np.stack([(Bk + Bl), (Bs + Bl), (Bs + Bk), np.zeros_like(Bk)], axis=1) / (2 * w)
    return A, C, r.astype(complex)


def realify(A, C, r):
    """Real (8x8) form in unknown order (Re x_0..3, Im x_0..3)."""
    P, M = A + C, A - C
    n = A.shape[0]
    R = np.empty((n, 8, 8))
    R[:, :4, :4] = P.real
    R[:, :4, 4:] = -M.imag
    R[:, 4:, :4] = P.imag
    R[:, 4:, 4:] = M.real
    rhs = np.concatenate([r.real, r.imag], axis=1)
    return R, rhs


def _solve_batch(k, ell, params):
    A, C, r = complex_system(k, ell, params)
    R, rhs = realify(A, C, r)
    sv = np.linalg.svd(R, compute_uv=False)
    smax, smin = sv[:, 0], sv[:, -1]
    with np.errstate(divide="ignore"):
        cond = np.where(smin > 0, smax / np.where(smin > 0, smin, 1.0), np.inf)
    ok = cond < SINGULAR_COND
    sol = np.full(rhs.shape, np.nan)
    if ok.any():
        sol[ok] = np.linalg.solve(R[ok], rhs[ok][..., None])[..., 0]
    x = sol[:, :4] + 1j * sol[:, 4:]
    # back-substitution in the original complex form (normwise backward error)
    defect = np.einsum("nij,nj->ni", A, x) + np.einsum("nij,nj->ni", C, np.conj(x)) - r
    scale = (np.abs(A).sum(axis=2).max(axis=1) + np.abs(C).sum(axis=2).max(axis=1)) \
        * np.abs(x).max(axis=1) + np.abs(r).max(axis=1)
    scale = np.where(scale > 0, scale, 1.0)
    resid = np.abs(defect).max(axis=1) / scale
    null_dim = (sv < 1e-14 * smax[:, None]).sum(axis=1)
    return x, resid, cond, null_dim


def assemble_and_solve(k, ell, params) -> NormalFormEntry:
    k, ell = tuple(int(v) for v in k), tuple(int(v) for v in ell)
    if k == (0, 0) or ell == (0, 0) or (k[0] + ell[0], k[1] + ell[1]) == (0, 0):
        raise ValueError("k, ell and k + ell must be nonzero")
    x, resid, cond, nd = _solve_batch(np.array([k]), np.array([ell]), params)
    if not cond[0] < SINGULAR_COND:
        raise SingularSystem(f"pair {k}, {ell}: cond = {cond[0]:.3e}, null dimension {nd[0]}",
                             null_dim=int(nd[0]), cond=float(cond[0]))
    sigma, sig, Bk, Bl, Bs = coefficients(np.array([k]), np.array([ell]), params)
    status = "near_singular" if cond[0] > NEAR_SINGULAR_COND else "ok"
    return NormalFormEntry(k, ell, complex(x[0, 0]), complex(x[0, 1]), complex(x[0, 2]),
                           complex(x[0, 3]), float(resid[0]), float(cond[0]), float(sigma[0]),
                           tuple(float(s[0]) for s in sig), float(Bk[0]), float(Bl[0]),
                           float(Bs[0]), status)


def lattice_pairs(kmax: int):
    r = np.arange(-kmax, kmax + 1)
    K = np.array([(a, b) for a in r for b in r if (a, b) != (0, 0)])
    n = len(K)
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i, j = i.ravel(), j.ravel()
    keep = np.any(K[i] + K[j] != 0, axis=1)
    return K[i[keep]], K[j[keep]]


def solve_pairs(k, ell, params, chunk: int = 100_000):
    """Batched solve; returns dict of arrays (x, residual, cond, null_dim)."""
    xs, rs, cs, ns = [], [], [], []
    for s in range(0, len(k), chunk):
        x, r, c, n = _solve_batch(k[s:s + chunk], ell[s:s + chunk], params)
        xs.append(x), rs.append(r), cs.append(c), ns.append(n)
    return {"k": np.asarray(k), "ell": np.asarray(ell), "x": np.concatenate(xs),
            "residual": np.concatenate(rs), "cond": np.concatenate(cs),
            "null_dim": np.concatenate(ns)}


def _ray_fit(table_index, x, rays, nmax):
    fits = []
    for name, k0, l0, scale_k in rays:
        ns, vals = [], []
        for n in range(1, nmax + 1):
            k = tuple(n * v for v in k0) if scale_k else tuple(k0)
            l = tuple(n * v for v in l0)
            idx = table_index.get(k + l)
            if idx is None:
                continue
            m = np.abs(x[idx]).max()
            if np.isfinite(m) and m > 0:
                ns.append(n), vals.append(m)
        if len(ns) >= 3:
            sl, _ = np.polyfit(np.log(ns[1:]), np.log(vals[1:]), 1) if len(ns) > 3 else np.polyfit(np.log(ns), np.log(vals), 1)
            fits.append({"ray": name, "k0": list(k0), "l0": list(l0), "n": ns,
                         "maxK": [float(v) for v in vals], "exponent_m": float(-sl)})
    return fits


DEFAULT_RAYS = (
    ("k=n(1,0), l=n(0,1)", (1, 0), (0, 1), True),
    ("k=n(1,0), l=n(1,0)", (1, 0), (1, 0), True),
    ("k=n(1,1), l=n(1,-1)", (1, 1), (1, -1), True),
    ("k=n(1,0), l=n(1,1)", (1, 0), (1, 1), True),
    ("k=(1,0), l=n(0,1)", (1, 0), (0, 1), False),
    ("k=(1,0), l=n(1,0)", (1, 0), (1, 0), False),
    ("k=(0,1), l=n(1,1)", (0, 1), (1, 1), False),
)


def lattice_scan(params, kmax: int = 16, max_listed: int = 200):
    """Solve every pair with |k|_inf, |l|_inf <= kmax (k + l != 0).

    The output is empirical evidence only; no closed-form answer is known.
    """
    if kmax < 4:
        raise ValueError("kmax must be >= 4")
    k, l = lattice_pairs(kmax)
    tab = solve_pairs(k, l, params)
    cond = tab["cond"]
    singular = ~(cond < SINGULAR_COND)
    near = (cond > NEAR_SINGULAR_COND) & ~singular
    well = ~(singular | near)
    index = {tuple(a) + tuple(b): i for i, (a, b) in enumerate(zip(k.tolist(), l.tolist()))}
    # evenness and relabelling symmetry, on well-conditioned pairs
    x = tab["x"]
    even_err, swap_err = 0.0, 0.0
    for i in np.flatnonzero(well)[:: max(1, well.sum() // 20000)]:
        a, b = tuple(k[i]), tuple(l[i])
        j = index[tuple(-v for v in a) + tuple(-v for v in b)]
        s = index[b + a]
        sc = max(np.abs(x[i]).max(), 1e-300)
        even_err = max(even_err, np.abs(x[j] - x[i]).max() / sc)
        xs = x[s]
        swap_err = max(swap_err, max(abs(xs[0] - x[i, 0]), abs(xs[1] - x[i, 2]),
                                     abs(xs[2] - x[i, 1]), abs(xs[3] - x[i, 3])) / sc)

    def listing(mask):
        idx = np.flatnonzero(mask)[:max_listed]
        return [{"k": k[i].tolist(), "l": l[i].tolist(), "cond": float(cond[i]),
                 "null_dim": int(tab["null_dim"][i])} for i in idx]

    fits = _ray_fit(index, x, DEFAULT_RAYS, kmax)
    exps = [f["exponent_m"] for f in fits]
    report = {
        "empirical": True,
        "kmax": kmax,
        "n_pairs": int(len(k)),
        "n_singular": int(singular.sum()),
        "n_near_singular": int(near.sum()),
        "max_cond": float(np.max(cond)),
        "singular_pairs": listing(singular),
        "near_singular_pairs": listing(near),
        "max_residual_well_conditioned": float(tab["residual"][well].max()) if well.any() else float("nan"),
        "evenness_error": float(even_err),
        "swap_error": float(swap_err),
        "ray_fits": fits,
        "exponent_range": [min(exps), max(exps)] if exps else None,
    }
    return report, tab


# bilinear form and verification ------------------------------------------

def _lsym(grid: TorusGrid, params):
    KX, KY = grid.K
    s = KX ** 2 - KY ** 2
    d = KX ** 2 + KY ** 2
    a = grid.symbols["InvLaplacianUpsilon"]
    return s, d, a


def apply_L(F, grid: TorusGrid, params):
    """Fourier coefficients of L_eps f given those of f (normalized, F = fft / N)."""
    s, d, a = _lsym(grid, params)
    Fm = np.conj(F[(-np.arange(grid.nx)) % grid.nx][:, (-np.arange(grid.ny)) % grid.ny])
    return 1j * s * F - params.epsilon * (d + params.alpha_damp) * F \
        - 2j * params.omega ** 2 * a * (F + Fm)


def n2_tilde(f: np.ndarray, grid: TorusGrid, omega):
    """Leading quadratic nonlinearity 2 omega [D(|f|^2) + f D(f + fbar) - <f D(f + fbar)>],
    D = Delta^{-1} Upsilon, evaluated in physical space."""
    a = grid.symbols["InvLaplacianUpsilon"]

    def D(g):
        return np.fft.ifft2(a * np.fft.fft2(g))

    t = f * D(f + np.conj(f))
    return 2 * omega * (D(np.abs(f) ** 2) + t - t.mean())


class EntryTable:
    """Lookup of solved coefficients with the evenness K(-k,-l) = K(k,l)."""

    def __init__(self, entries):
        self._d = {}
        for e in entries:
            self._d[tuple(e.k) + tuple(e.ell)] = (e.K1, e.K2_kl, e.K2_lk, e.K3)

    def __len__(self):
        return len(self._d)

    def get(self, k, l):
        key = tuple(k) + tuple(l)
        if key in self._d:
            return self._d[key]
        neg = tuple(-v for v in key)
        if neg in self._d:
            return self._d[neg]
        raise MissingEntry(f"no solved entry for pair k={k}, l={l}")


def _support(F, tol=1e-13):
    m = np.abs(F).max()
    if m == 0:
        return []
    nx, ny = F.shape
    idx = np.argwhere(np.abs(F) > tol * m)
    out = set()
    for i, j in idx:
        k = (int(i) if i <= nx // 2 else int(i) - nx, int(j) if j <= ny // 2 else int(j) - ny)
        out.add(k)
        out.add((-k[0], -k[1]))
    return sorted(out)


def bilinear_K(U, V, table: EntryTable, support, grid: TorusGrid):
    """Fourier coefficients of K(u, v) from normalized coefficient arrays U, V."""
    nx, ny = grid.nx, grid.ny
    out = np.zeros((nx, ny), complex)

    def at(A, k):
        return A[k[0] % nx, k[1] % ny]

    for k in support:
        for l in support:
            s = (k[0] + l[0], k[1] + l[1])
            if s == (0, 0):
                continue
            K1, K2kl, K2lk, K3 = table.get(k, l)
            mk, ml = (-k[0], -k[1]), (-l[0], -l[1])
            out[s[0] % nx, s[1] % ny] += (K1 * at(U, k) * at(V, l)
                                          + K2kl * at(U, k) * np.conj(at(V, ml))
                                          + K2lk * np.conj(at(U, mk)) * at(V, l)
                                          + K3 * np.conj(at(U, mk)) * np.conj(at(V, ml)))
    return out


def required_pairs(f_sample: TorusField):
    F = np.fft.fft2(f_sample.values) / f_sample.values.size
    sup = _support(F)
    return [(k, l) for k in sup for l in sup if (k[0] + l[0], k[1] + l[1]) != (0, 0)]


def homological_verify(table, f_sample: TorusField, params) -> float:
    """Relative defect of i L K(f,f) - i K(Lf, f) - i K(f, Lf) = N2~(f)."""
    g = f_sample.grid
    if not isinstance(table, EntryTable):
        table = EntryTable(table)
    f = f_sample.values
    if abs(f.mean()) > 1e-12 * max(1.0, float(np.abs(f).max())):
        raise ValueError("f_sample must have zero mean")
    n = f.size
    F = np.fft.fft2(f) / n
    sup = _support(F)
    if not sup:
        return 0.0
    kmax = max(max(abs(a), abs(b)) for a, b in sup)
    if 2 * kmax >= min(g.nx, g.ny) // 2:
        raise ValueError("grid too coarse for the quadratic products of f_sample")
    LF = apply_L(F, g, params)
    KFF = bilinear_K(F, F, table, sup, g)
    lhs = 1j * apply_L(KFF, g, params) - 1j * bilinear_K(LF, F, table, sup, g) \
        - 1j * bilinear_K(F, LF, table, sup, g)
    rhs = np.fft.fft2(n2_tilde(f, g, params.omega)) / n
    scale = np.abs(rhs).max()
    if scale == 0:
        return float(np.abs(lhs).max())
    return float(np.abs(lhs - rhs).max() / scale)
