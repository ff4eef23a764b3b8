import math
from dataclasses import replace

import numpy as np
import pytest

from dsii_lab import darboux as dx
from dsii_lab import melnikov as mk
from dsii_lab.errors import BranchUndefined, DegenerateDenominator
from dsii_lab.model import ModelParams
from dsii_lab.spectral import TorusGrid, derivative, dsii_rhs

from conftest import K1, K2, OMEGA

BRANCHES = [(1, 1), (1, -1), (-1, 1), (-1, -1)]


def test_derived_constants(dp):
    assert dp.lambda0 == pytest.approx(math.sqrt(OMEGA ** 2 - 0.25), rel=1e-15)
    assert dp.lambda0 == pytest.approx(0.64627, abs=1e-5)
    assert dp.xi10 == pytest.approx(0.40947, abs=1e-5)
    assert dp.vartheta1 == pytest.approx(0.91217, abs=2e-4)
    assert dp.vartheta2 == pytest.approx(0.52493, abs=2e-4)
    assert mk.delta_gamma(dp) == pytest.approx(-1.54896, abs=1e-3)
    # eta e^{i theta} identities
    assert OMEGA * np.exp(1j * dp.vartheta1) == pytest.approx(K1 / 2 + 1j * dp.lambda0, abs=1e-14)
    assert OMEGA * np.exp(1j * dp.vartheta2) == pytest.approx(K2 / 2 + 1j * dp.xi10, abs=1e-14)
    assert dp.delta_rho == pytest.approx(1.1, abs=1e-15)


def test_delta_rho_fixes_rho_hat():
    p = dx.derive_params(OMEGA, K1, K2, rho=0.7, delta_rho=1.1)
    assert p.delta_rho == pytest.approx(1.1, abs=1e-14)
    assert p.rho_hat != pytest.approx(1.1)


@pytest.mark.parametrize("omega", [0.5, 0.70])
def test_branch_undefined(omega):
    with pytest.raises(BranchUndefined):
        dx.derive_params(omega, K1, K2, delta_rho=0.0)


def test_bad_arguments():
    with pytest.raises(ValueError):
        dx.derive_params(OMEGA, K1, K2)
    with pytest.raises(ValueError):
        dx.derive_params(OMEGA, K1, K2, delta_rho=0.0, sign_x=0)


def test_replacements_are_involutions(dp):
    for f in (dx.congruent_replacement, dx.xi_replacement):
        back = f(f(dp))
        for k in ("alpha_lax", "xi10", "rho_hat"):
            assert getattr(back, k) == getattr(dp, k)
        assert back.vartheta2 == pytest.approx(dp.vartheta2, abs=1e-15)
        assert math.remainder(back.vartheta_hat_b - dp.vartheta_hat_b, 2 * math.pi) == pytest.approx(0, abs=1e-14)


@pytest.mark.parametrize("sx,sy", BRANCHES)
@pytest.mark.parametrize("t", [-3.0, -0.4, 0.0, 0.9, 5.0])
def test_first_transform_closed_form(sx, sy, t):
    p = dx.derive_params(OMEGA, K1, K2, delta_rho=1.1, gamma=0.3, sign_x=sx, sign_y=sy, rho=0.2)
    x = np.linspace(0, 2 * math.pi, 41)
    a, b = dx.first_darboux(p, t, x)
    ad, bd = dx.first_darboux_direct(p, t, x)
    np.testing.assert_allclose(a, ad, atol=1e-14)
    np.testing.assert_allclose(b, bd, atol=1e-14)


@pytest.mark.parametrize("sx,sy", BRANCHES)
@pytest.mark.parametrize("t", [-2.0, 0.0, 0.7, 2.5])
def test_iterated_closed_form(sx, sy, t, grid32):
    p = dx.derive_params(OMEGA, K1, K2, delta_rho=1.1, gamma=0.3, sign_x=sx, sign_y=sy)
    s = dx.iterate_darboux(p, t, grid32)
    aI, bI, W1, W2 = dx.iterate_darboux_direct(p, t, grid32)
    np.testing.assert_allclose(s.aI_val, aI, atol=1e-13)
    np.testing.assert_allclose(s.bI_val, bI, atol=1e-13)
    np.testing.assert_allclose(s.W1, W1, atol=1e-12 * np.abs(W1).max())
    np.testing.assert_allclose(s.W2, W2, atol=1e-12 * np.abs(W2).max())


def test_no_overflow_far_out(dp, grid32):
    for t in (-200.0, 200.0):
        q = dx.orbit(dp, t, grid32).values
        assert np.isfinite(q).all()


@pytest.mark.parametrize("t", [-1.0, 0.0, 1.0])
def test_orbit_solves_dsii(dp, grid64, t):
    par = ModelParams(OMEGA, 0, 0, 0, K1, K2)
    q = dx.orbit(dp, t, grid64)
    dq = dx.orbit_time_derivative(dp, t, grid64)
    r = np.linalg.norm(dq - dsii_rhs(q, par).values) / np.linalg.norm(q.values)
    assert r < 1e-5


@pytest.mark.parametrize("sx,sy", BRANCHES)
def test_orbit_is_even(sx, sy, grid32):
    p = dx.derive_params(OMEGA, K1, K2, delta_rho=1.1, sign_x=sx, sign_y=sy)
    assert max(dx.orbit(p, 0.4, grid32).parity_defect()) < 1e-12


def test_phase_shifts(dp):
    d = dx.phase_shift_limits(dp, 40.0)
    assert max(d.values()) < 1e-10


def test_potential_identity(dp, grid32):
    """R2 - R1 = 2(|Q|^2 - omega^2) + u_y; R1 + R2 is purely imaginary."""
    from dsii_lab.spectral import solve_u

    t = 0.2
    R1, R2 = dx.transform_potentials(dp, t, grid32)
    q = dx.orbit(dp, t, grid32)
    uy = derivative(solve_u(q).values.real, grid32, 1).real
    target = 2 * (np.abs(q.values) ** 2 - OMEGA ** 2) + uy
    np.testing.assert_allclose(R2.values - R1.values, target, atol=1e-11)
    assert np.abs((R1.values + R2.values).real).max() < 1e-11


def test_lax_residual_of_seed(dp, grid32):
    """Plane wave with the seed eigenvector solves the spatial Lax equation."""
    t = 0.1
    x = grid32.x[:, None] + 0 * grid32.y[None, :]
    v1, v2, _ = dx.seed_eigenvector(dp, t, x)
    Q = np.full(x.shape, dp.qc(t))
    r = dx.lax_residual((v1, v2), Q, dp.lambda0, dp.alpha_lax, grid32, (K1 / 2, 0.0))
    assert r < 1e-12


def test_degenerate_denominator_guard():
    with pytest.raises(DegenerateDenominator):
        dx._check_den(np.array([1e-20, 1.0]), 1.0)
    assert dx._check_den(np.array([0.5, 1.0]), 1.0) == 0.5
