"""Oracle and invariant checks used by the ``verify`` command."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import darboux as dx
from . import evolve as ev
from . import melnikov as mk
from . import model as md
from . import normalform as nf
from .spectral import TorusField, TorusGrid, dsii_rhs


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float
    passed: bool
    detail: str = ""


def _res(name, value, tol, detail=""):
    return CheckResult(name, float(value), tol, bool(value < tol), detail)


def check_mode_count(params, n=10):
    bad = 0
    for k1, k2 in ((params.kappa1, params.kappa2), (params.kappa2, params.kappa1)):
        br = md.constraint_branch(params.omega, k1, k2)
        lo2 = max(k1, k2) ** 2
        hi2 = min(k1 * k1 + k2 * k2, 4 * min(k1, k2) ** 2)
        for w4 in np.linspace(lo2, hi2, n + 2)[1:-1]:
            modes = md.unstable_modes(math.sqrt(w4) / 2, k1, k2)
            bad += modes != ((0, 1), (1, 0)) or br is None
    return _res("two unstable modes on both branches", bad, 0.5, f"{2 * n} omegas")


def check_orbit_residual(p, grid, ts=(-1.0, 0.0, 1.0)):
    par = md.ModelParams(p.omega, 0.0, 0.0, 0.0, p.kappa1, p.kappa2)
    worst = 0.0
    for t in ts:
        q = dx.orbit(p, t, grid)
        dq = dx.orbit_time_derivative(p, t, grid)
        worst = max(worst, np.linalg.norm(dq - dsii_rhs(q, par).values) / np.linalg.norm(q.values))
    return _res("orbit PDE residual", worst, 1e-5)


def check_phase_shifts(p):
    d = dx.phase_shift_limits(p, 40.0)
    return _res("asymptotic phase shifts", max(d.values()), 1e-10)


def check_lax(p, grid, t=0.3):
    E = mk.build_eigenfunctions(p, t, grid)
    r1 = dx.lax_residual(E.Psi_plus, E.Q, p.lambda0, p.alpha_lax, grid, (p.kappa1 / 2, 0.0))
    r2 = dx.lax_residual(E.Psi_hat_plus, E.Q, p.lambda0, p.alpha_lax, grid, (p.kappa1 / 2, 0.0),
                         congruent=True)
    return _res("Lax residuals (Psi+, Psi-hat+)", max(r1, r2), 1e-8)


def check_evolution(p, params, grid):
    q0 = dx.orbit(p, -2.0, grid)
    par = replace(params, epsilon=0.0)
    q1 = ev.final_state(q0, par, ev.EvolutionConfig(1e-3, 1.0), t0=-2.0)
    err = TorusField(grid, q1.values - dx.orbit(p, -1.0, grid).values).norm()
    return _res("evolved orbit vs analytic", err, 1e-4)


def check_growth(params, p):
    r = ev.measure_growth(replace(params, epsilon=0.0), (1, 0))
    target = 2 * params.kappa1 * p.lambda0
    return _res("growth of mode (1,0)", abs(r.exponent - target) / target, 1e-2)


def check_normalform(params, kmax=6):
    rep, _ = nf.lattice_scan(replace(params, epsilon=0.0), kmax)
    g = TorusGrid(32, 32, params.kappa1, params.kappa2)
    X, Y = g.XY
    worst = 0.0
    for f in (0.3 * np.cos(params.kappa1 * X),
              0.2 * np.cos(params.kappa1 * X) + 0.1 * np.cos(params.kappa2 * Y)):
        fs = TorusField(g, f)
        ents = [nf.assemble_and_solve(k, l, params) for k, l in nf.required_pairs(fs)]
        worst = max(worst, nf.homological_verify(ents, fs, params))
    return [_res("normal-form back-substitution", rep["max_residual_well_conditioned"], 1e-12),
            _res("homological identity", worst, 1e-10)]


def check_melnikov_identities(p, grid, order=6):
    comp = mk.melnikov_components(p, grid, order=order, check=False)
    sol = mk.solve_alpha_beta(comp, math.pi / 2)
    scale = np.abs(comp.M).max()
    back = max(abs(v) for v in sol.residual) / scale
    s2 = mk.solve_alpha_beta(comp.scaled(-3.7), math.pi / 2)
    inv = abs(s2.alpha_star - sol.alpha_star) / abs(sol.alpha_star) + \
        abs(s2.beta_star - sol.beta_star) / abs(sol.beta_star)
    return [_res("Melnikov back-substitution", back, 1e-10),
            _res("Melnikov rescaling invariance", inv, 1e-12)]


def run_all(params, p, grid):
    out = [check_mode_count(params), check_orbit_residual(p, grid), check_phase_shifts(p),
           check_lax(p, grid), check_evolution(p, params, grid), check_growth(params, p)]
    out += check_normalform(params)
    out += check_melnikov_identities(p, TorusGrid(32, 32, p.kappa1, p.kappa2))
    return out
