import math
from dataclasses import replace

import numpy as np
import pytest

from dsii_lab import darboux as dx
from dsii_lab import evolve as ev
from dsii_lab import model as md
from dsii_lab.errors import BlowUp, NonlinearContamination
from dsii_lab.spectral import TorusField, TorusGrid

from conftest import K1, K2, OMEGA


def test_phi_functions_small_and_large():
    z = np.array([1e-12, 1e-6, 0.3, -0.99, 1.01, -3.0 + 2j, 20j, -50.0])
    f1, f2, f3 = ev.phi_functions(z)
    ref1 = np.where(np.abs(z) > 1e-3, np.expm1(z) / np.where(z == 0, 1, z), 1 + z / 2 + z * z / 6)
    np.testing.assert_allclose(f1, ref1, rtol=1e-13)
    assert f2[0] == pytest.approx(0.5) and f3[0] == pytest.approx(1 / 6)
    # recursion phi_{k+1} = (phi_k - 1/k!) / z
    np.testing.assert_allclose(f2 * z, f1 - 1, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(f3 * z, f2 - 0.5, rtol=1e-12, atol=1e-15)


def test_phi_continuity_across_switch():
    r = ev.SERIES_RADIUS
    for ang in np.linspace(0, 2 * math.pi, 9):
        zi, zo = (r - 1e-9) * np.exp(1j * ang), (r + 1e-9) * np.exp(1j * ang)
        for a, b in zip(ev.phi_functions(zi), ev.phi_functions(zo)):
            assert abs(a - b) < 1e-8


@pytest.mark.parametrize("kw", [dict(dt=0.0), dict(t_final=-1.0), dict(scheme="rk4"), dict(snapshot_stride=-1)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ev.EvolutionConfig(**kw)


def test_t_final_multiple_of_dt(grid32):
    q = TorusField(grid32, np.full((32, 32), OMEGA + 0j))
    with pytest.raises(ValueError):
        ev.integrate(q, md.ModelParams(OMEGA, 0, 0, 0, K1, K2), ev.EvolutionConfig(0.3, 1.0))


def test_orbit_oracle(dp, grid64):
    par = md.ModelParams(OMEGA, 0, 0, 0, K1, K2)
    q1 = ev.final_state(dx.orbit(dp, -2.0, grid64), par, ev.EvolutionConfig(1e-3, 1.0), t0=-2.0)
    err = TorusField(grid64, q1.values - dx.orbit(dp, -1.0, grid64).values).norm()
    assert err < 1e-4


@pytest.mark.parametrize("scheme,order", [("etdrk4", 4), ("split-step", 2)])
def test_convergence_order(dp, grid32, scheme, order):
    par = md.ModelParams(OMEGA, 0, 0, 0, K1, K2)
    q0, ref = dx.orbit(dp, -2.0, grid32), dx.orbit(dp, -1.5, grid32)
    errs = []
    for dt in (0.05, 0.025):
        q = ev.final_state(q0, par, ev.EvolutionConfig(dt, 0.5, scheme), t0=-2.0)
        errs.append(TorusField(grid32, q.values - ref.values).norm())
    assert math.log2(errs[0] / errs[1]) == pytest.approx(order, abs=0.3)


@pytest.mark.parametrize("scheme,tol", [("etdrk4", 1e-12), ("split-step", 2e-6)])
def test_saddle_is_stationary(params, grid32, scheme, tol):
    # ETDRK4 keeps the fixed point to round-off; Strang splitting only to O(dt^2)
    p = replace(params, epsilon=1e-2)
    s = md.refine_saddle(p)
    z = math.sqrt(s.I_val) * complex(math.cos(s.theta_val), math.sin(s.theta_val))
    q0 = TorusField(grid32, np.full((32, 32), z))
    q1 = ev.final_state(q0, p, ev.EvolutionConfig(1e-2, 1.0, scheme))
    assert np.abs(q1.values - z).max() < tol


def test_snapshot_stride(params, grid32):
    q0 = TorusField(grid32, np.full((32, 32), OMEGA + 0j))
    snaps = ev.integrate(q0, params, ev.EvolutionConfig(0.01, 0.1, snapshot_stride=3))
    assert [round(t, 10) for t, _ in snaps] == [0.0, 0.03, 0.06, 0.09, 0.1]


def test_growth_matches_spectrum(params, dp):
    r = ev.measure_growth(params, (1, 0))
    assert r.exponent == pytest.approx(2 * K1 * dp.lambda0, rel=1e-2)
    r2 = ev.measure_growth(params, (0, 1))
    mu = md.dispersion(0.0, K2, OMEGA)[0]
    assert r2.exponent == pytest.approx(float(mu), rel=1e-2)


def test_growth_with_damping(params):
    p = replace(params, epsilon=1e-3)
    r = ev.measure_growth(p, (1, 0))
    assert r.exponent == pytest.approx(r.predicted, rel=1e-3)


def test_neutral_mode_does_not_grow():
    p = md.validate_params(0.85, 0.0, 0.0, 0.0, 1.0, 1.5, require_saddle=False)
    r = ev.measure_growth(p, (3, 2), t_final=2.0)
    assert abs(r.exponent) < 1e-6


def test_growth_guards(params):
    with pytest.raises(ValueError):
        ev.measure_growth(params, (1, 0), amplitude=1e-3)
    with pytest.raises(NonlinearContamination):
        ev.measure_growth(params, (1, 0), amplitude=1e-6, t_final=25.0)


def test_blowup_detected(monkeypatch, params, grid32):
    monkeypatch.setattr(ev, "BLOWUP_RATIO", 1e3)
    # strong forcing pumps the mean far above the tiny initial norm
    p = replace(params, epsilon=1.0, alpha_damp=0.0, beta_drive=100.0)
    q0 = TorusField(grid32, np.full((32, 32), 1e-3 + 0j))
    with pytest.raises(BlowUp) as exc:
        ev.integrate(q0, p, ev.EvolutionConfig(1e-3, 1.0))
    assert exc.value.ratio > 1e3 and exc.value.t > 0
