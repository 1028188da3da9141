import numpy as np
import pytest

from shearflow.core import Grid, Params, grad_fd, hessian_fd
from shearflow.errors import DegenerateFlow, DiffeoFailure
from shearflow.transform import (
    FlowMap,
    TildeV,
    apply_R,
    build_flowmap,
    check_diffeo,
    identity_flowmap,
    integrate_rows,
    invert_rows,
    resample_to_x,
    tilde_v,
)

OPS = ("d1", "d2", "grad", "div", "sym_grad", "laplacian", "grad_div")


def bulge_map(n, delta=0.05):
    """Map driven by the wall-tangent field (0, delta sin(pi x1) sin(pi x2))."""
    p = Params(n=n)
    g = p.grid
    x1, x2 = g.mesh()
    v = np.stack([np.zeros(g.shape), delta * np.sin(np.pi * x1) * np.sin(np.pi * x2)])
    return build_flowmap(tilde_v(v, p), p), p


def constant_map(n, a):
    g = Grid(n)
    z1, z2 = g.mesh()
    return FlowMap(g, z2 + a * z1, np.full(g.shape, a), np.zeros(g.shape))


def test_tilde_v_examples():
    p = Params(n=8)
    g = p.grid
    _, x2 = g.mesh()
    assert np.all(tilde_v(g.zeros(2), p).values == 0)
    tv = tilde_v(np.stack([g.zeros(), np.full(g.shape, 0.3)]), p)
    assert np.allclose(tv.values, 0.3 / (1 + x2))
    bad = np.stack([-1 - x2 + p.c_floor / 2, g.zeros()])
    with pytest.raises(DegenerateFlow):
        tilde_v(bad, p)


def test_identity_map_from_zero_field():
    p = Params(n=8)
    fmap = build_flowmap(tilde_v(p.grid.zeros(2), p), p)
    _, z2 = p.grid.mesh()
    assert np.array_equal(fmap.psi2, z2)
    assert np.all(fmap.E21 == 0) and np.all(fmap.E22 == 0) and np.all(fmap.J == 1)


def test_rows_constant_slope():
    g = Grid(10)
    z1, z2 = g.mesh()
    tv = TildeV(g, np.full(g.shape, 0.2), np.ones(g.shape))
    psi2, q = integrate_rows(tv)
    assert np.allclose(psi2, z2 + 0.2 * z1, atol=1e-14)
    assert np.allclose(q, 1.0)


def test_rows_linear_slope_fourth_order():
    # v_tilde = eps x2 gives psi2 = z2 exp(eps z1) and q = exp(eps z1)
    eps = -2.0
    errs = []
    for n in (8, 16):
        g = Grid(n)
        z1, z2 = g.mesh()
        psi2, q = integrate_rows(TildeV(g, eps * z2, np.ones(g.shape)))
        errs.append(np.abs(psi2 - z2 * np.exp(eps * z1)).max())
        assert np.abs(q - np.exp(eps * z1)).max() < 1e-3
    assert errs[0] / errs[1] > 12


def test_build_flowmap_rejects_leaving_square():
    p = Params(n=8)
    g = p.grid
    _, x2 = g.mesh()
    v = np.stack([g.zeros(), 0.5 * (1 + x2)])
    with pytest.raises(DiffeoFailure):
        build_flowmap(tilde_v(v, p), p)


def test_map_invariants():
    fmap, p = bulge_map(32)
    g = fmap.grid
    _, z2 = g.mesh()
    assert np.array_equal(fmap.psi2[0], g.coords)
    assert fmap.psi2.min() >= 0 and fmap.psi2.max() <= 1
    assert np.abs(fmap.E21[:, [0, -1]]).max() < 1e-15
    assert np.all(np.diff(fmap.psi2, axis=1) > 0)
    # explicit inverse of the Jacobian
    E = np.array([[np.zeros(g.shape), np.zeros(g.shape)], [fmap.E21, fmap.E22]])
    Et = np.array([[np.zeros(g.shape), np.zeros(g.shape)], [fmap.Et21, fmap.Et22]])
    I = np.eye(2)[:, :, None, None]
    prod = np.einsum("ik...,kj...->ij...", I + E, I + Et)
    assert np.abs(prod - I).max() < 1e-14
    # variational E22 against cross-row differences of psi2
    assert np.abs(grad_fd(g, fmap.psi2)[1] - 1 - fmap.E22).max() < 50 * g.h**2


def test_round_trip_inverse():
    fmap, _ = bulge_map(32)
    zq = invert_rows(fmap, None)
    for i in (0, 7, 20, 32):
        back = np.interp(fmap.psi2[i], fmap.psi2[i], fmap.grid.coords)
        assert np.abs(back - fmap.grid.coords).max() < 10 * fmap.grid.h**4
    assert zq.shape == fmap.grid.shape


def test_chain_rule_consistency():
    errs = []
    for n in (32, 64):
        fmap, _ = bulge_map(n)
        g = fmap.grid
        z1, _ = g.mesh()
        x2 = fmap.psi2

        def f(a, b):
            return np.sin(a + 2 * b)

        dz1 = grad_fd(g, f(z1, x2))[0]
        expected = np.cos(z1 + 2 * x2) * (1 + 2 * fmap.tv(z1, x2))
        errs.append(np.abs(dz1 - expected).max())
    assert errs[1] < errs[0] / 3


@pytest.mark.parametrize("op", OPS)
def test_apply_R_vanishes_on_identity(op, rng):
    fmap = identity_flowmap(Grid(6))
    f = rng.standard_normal((2,) + fmap.grid.shape)
    field = f[0] if op in ("d1", "d2", "grad", "laplacian") else f
    assert np.all(apply_R(field, op, fmap) == 0)


def test_apply_R_constant_map():
    a = 0.1
    fmap = constant_map(8, a)
    z1, z2 = fmap.grid.mesh()
    # f(x) = x2 sampled at psi(z)
    assert np.allclose(apply_R(fmap.psi2, "d1", fmap), -a)
    assert np.allclose(apply_R(fmap.psi2, "d2", fmap), 0.0)
    for op in ("d1", "d2", "grad"):
        assert np.allclose(apply_R(z1, op, fmap), 0.0)
    vec = np.stack([z1, 2 * z1])
    for op in ("div", "sym_grad"):
        assert np.allclose(apply_R(vec, op, fmap), 0.0)


def test_second_order_corrections_recover_x_derivatives():
    # f = sin(x1 + 2 x2), v = (f, cos(x1 x2)); x-derivatives from z-data plus R
    errs = []
    for n in (32, 64):
        fmap, _ = bulge_map(n, delta=0.1)
        g = fmap.grid
        x1, _ = g.mesh()
        x2 = fmap.psi2
        f = np.sin(x1 + 2 * x2)
        v = np.stack([f, np.cos(x1 * x2)])
        hf = hessian_fd(g, f)
        hv = hessian_fd(g, v)
        lap = apply_R(f, "laplacian", fmap) + hf[0, 0] + hf[1, 1]
        gdiv = apply_R(v, "grad_div", fmap) + hv[:, 0, 0] + hv[:, 1, 1]
        exact_lap = -5 * np.sin(x1 + 2 * x2)
        exact_gdiv = np.stack(
            [
                -np.sin(x1 + 2 * x2) - np.sin(x1 * x2) - x1 * x2 * np.cos(x1 * x2),
                -2 * np.sin(x1 + 2 * x2) - x1**2 * np.cos(x1 * x2),
            ]
        )
        inner = (slice(n // 4, -n // 4), slice(n // 4, -n // 4))
        errs.append(
            (np.abs(lap - exact_lap)[inner].max(), np.abs(gdiv - exact_gdiv)[(slice(None),) + inner].max())
        )
    assert errs[1][0] < errs[0][0] / 3
    assert errs[1][1] < errs[0][1] / 3


def test_check_diffeo_reports():
    p = Params(n=16)
    rep = check_diffeo(identity_flowmap(p.grid), p)
    assert rep["min_J"] == 1 and rep["norm_E_w1p"] == 0 and rep["passed"]
    rep = check_diffeo(constant_map(16, 0.1), p)
    assert rep["norm_E_w1p"] == pytest.approx(0.1, rel=1e-12)
    g = p.grid
    z1, z2 = g.mesh()
    psi2, q = integrate_rows(TildeV(g, 0.05 * z2, np.ones(g.shape)))
    fmap = FlowMap(g, psi2, 0.05 * psi2, q - 1)
    rep = check_diffeo(fmap, p)
    assert rep["min_J"] == pytest.approx(1.0) and rep["passed"]


def test_E_norm_halves_with_amplitude():
    big = check_diffeo(*bulge_map(32, 0.08))["norm_E_w1p"]
    small = check_diffeo(*bulge_map(32, 0.04))["norm_E_w1p"]
    assert small <= 0.55 * big


def test_resample_to_x():
    ident = identity_flowmap(Grid(8))
    f = np.arange(81.0).reshape(9, 9)
    assert np.array_equal(resample_to_x(ident, f), f)
    errs = []
    for n in (32, 64):
        fmap, _ = bulge_map(n, 0.1)
        z1, _ = fmap.grid.mesh()

        def F(a, b):
            return np.cos(2 * a) * np.exp(b)

        errs.append(np.abs(resample_to_x(fmap, F(z1, fmap.psi2)) - F(*fmap.grid.mesh())).max())
    assert errs[1] < errs[0] / 3


def test_dump_header(tmp_path):
    fmap, _ = bulge_map(8)
    fmap.dump(tmp_path / "map.csv")
    assert (tmp_path / "map.csv").read_text().splitlines()[0] == "z1,z2,psi2,E21,E22,J"
