import math

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from dsii_lab import spectral as sx
from dsii_lab.model import ModelParams
from dsii_lab.spectral import TorusField, TorusGrid

from conftest import K1, K2, OMEGA


def test_grid_validation():
    for n in (6, 12, 4):
        with pytest.raises(ValueError):
            TorusGrid(n, 16, K1, K2)
    with pytest.raises(ValueError):
        TorusGrid(16, 16, -1.0, K2)


def test_symbols(grid32):
    s = grid32.symbols
    assert s["InvLaplacianUpsilon"][0, 0] == 0
    i = grid32.index_of(1, 1)
    assert s["InvLaplacianUpsilon"][i] == pytest.approx((K1 ** 2 - K2 ** 2) / (K1 ** 2 + K2 ** 2))


def test_operator_on_plane_wave(grid32):
    X, Y = grid32.XY
    f = TorusField(grid32, np.cos(2 * K1 * X) * np.cos(K2 * Y))
    up = sx.apply_operator(f, "Upsilon")
    np.testing.assert_allclose(up.values, (-4 + 2) * f.values, atol=1e-12)
    lap = sx.apply_operator(f, "Laplacian")
    np.testing.assert_allclose(lap.values, -(4 + 2) * f.values, atol=1e-12)
    assert sx.apply_operator(f + 0 if False else f, "Mean") == pytest.approx(0, abs=1e-15)
    with pytest.raises(ValueError):
        sx.apply_operator(f, "Curl")


def test_inverse_laplacian_vs_finite_differences():
    """Independent sparse 5-point Poisson solve agrees to discretization accuracy."""
    g = TorusGrid(64, 64, K1, K2)
    X, Y = g.XY
    rhs = np.exp(np.cos(X)) * np.cos(K2 * Y) + np.sin(2 * X + K2 * Y)
    rhs = rhs - rhs.mean()
    spectral_sol = sx.ifft(np.where(g.symbols["Laplacian"] != 0, 1 / np.where(
        g.symbols["Laplacian"] != 0, g.symbols["Laplacian"], 1), 0) * sx.fft(rhs)).real
    hx, hy = g.Lx / g.nx, g.Ly / g.ny

    def lap1(n, h):
        d = sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1], format="lil")
        d[0, -1] = d[-1, 0] = 1
        return d.tocsr() / h ** 2

    A = sp.kron(lap1(g.nx, hx), sp.identity(g.ny)) + sp.kron(sp.identity(g.nx), lap1(g.ny, hy))
    # pin the mean with a bordered system
    n = g.nx * g.ny
    B = sp.bmat([[A, np.ones((n, 1))], [np.ones((1, n)), None]], format="csc")
    sol = spla.spsolve(B, np.concatenate([rhs.ravel(), [0.0]]))[:n].reshape(g.nx, g.ny)
    assert np.abs(sol - spectral_sol).max() / np.abs(spectral_sol).max() < 5e-3


def test_u_form_equivalence(grid32):
    X, Y = grid32.XY
    q = TorusField(grid32, OMEGA + 0.1 * np.cos(X) + 0.05j * np.cos(K2 * Y) * np.cos(X))
    p = ModelParams(OMEGA, 0.7, 1.3, 1e-2, K1, K2)
    np.testing.assert_allclose(sx.dsii_rhs(q, p).values, sx.dsii_rhs_via_u(q, p).values, atol=1e-12)
    u = sx.solve_u(q)
    assert abs(u.mean()) < 1e-14
    np.testing.assert_allclose(u.values.imag, 0)


def test_rhs_kills_plane_wave(grid32):
    q = TorusField(grid32, np.full((32, 32), OMEGA * np.exp(0.3j)))
    p = ModelParams(OMEGA, 0, 0, 0, K1, K2)
    assert np.abs(sx.dsii_rhs(q, p).values).max() < 1e-14


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_parseval(seed):
    g = TorusGrid(16, 8, K1, K2)
    rng = np.random.default_rng(seed)
    f = TorusField(g, rng.normal(size=(16, 8)) + 1j * rng.normal(size=(16, 8)))
    assert sx.fourier_norm(f) == pytest.approx(f.norm(), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_operators_preserve_evenness(seed):
    g = TorusGrid(16, 16, K1, K2)
    rng = np.random.default_rng(seed)
    X, Y = g.XY
    c = rng.normal(size=(3, 3))
    v = sum(c[a, b] * np.cos(a * K1 * X) * np.cos(b * K2 * Y) for a in range(3) for b in range(3))
    f = TorusField(g, v + 0j, (True, True))
    for op in ("Upsilon", "Laplacian", "InvLaplacianUpsilon"):
        assert max(sx.apply_operator(f, op).parity_defect()) < 1e-12


def test_spectral_derivative_accuracy(grid32):
    X, Y = grid32.XY
    f = np.exp(np.sin(X))
    np.testing.assert_allclose(sx.derivative(f, grid32, 0).real, np.cos(X) * f, atol=1e-12)


def test_snapshot_roundtrip(tmp_path, grid32):
    X, Y = grid32.XY
    f = TorusField(grid32, np.exp(1j * X) * np.cos(K2 * Y) / 3)
    path = tmp_path / "s.csv"
    sx.write_snapshot(f, path)
    back = sx.read_snapshot(path)
    assert np.array_equal(back.values, f.values)
    assert back.grid.kappa2 == grid32.kappa2
    assert sx.snapshot_text(back) == path.read_text()
