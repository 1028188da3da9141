import numpy as np
import pytest

from shearflow.core import Grid, Params
from shearflow.errors import DegenerateFlow
from shearflow.transform import FlowMap, identity_flowmap
from shearflow.transport import coeff_a, row_sup_l2, transport_S


def test_coeff_a_examples():
    p = Params(n=8)
    g = p.grid
    z1, z2 = g.mesh()
    ident = identity_flowmap(g)
    assert np.allclose(coeff_a(ident, g.zeros(2), p), 1 + z2)
    vbar = np.stack([np.full(g.shape, 0.3), g.zeros()])
    assert np.allclose(coeff_a(ident, vbar, p), 1.3 + z2)
    a0 = 0.05
    shifted = FlowMap(g, z2 + a0 * z1, np.full(g.shape, a0), g.zeros())
    assert np.allclose(coeff_a(shifted, g.zeros(2), p), 1 + z2 + a0 * z1)
    with pytest.raises(DegenerateFlow):
        coeff_a(ident, np.stack([np.full(g.shape, -0.95), g.zeros()]), p)


def test_S_examples():
    g = Grid(16)
    z1, z2 = g.mesh()
    a = 1 + z2
    assert np.allclose(transport_S(g.zeros(), g.coords, a), z2)
    assert np.allclose(transport_S(a.copy(), np.zeros(17), a), z1, atol=1e-15)


def test_S_row_constant_integrand_exact():
    for n in (16, 64):
        g = Grid(n)
        z1, z2 = g.mesh()
        w = transport_S(np.ones(g.shape), np.zeros(n + 1), 1 + z2)
        assert np.abs(w - z1 / (1 + z2)).max() < 1e-13


def test_S_variable_integrand_second_order():
    errs = []
    for n in (16, 32, 64):
        g = Grid(n)
        z1, z2 = g.mesh()
        a = 1 + z2 + 0.3 * z1 * z1
        rhs = np.cos(3 * z1) * a
        w = transport_S(rhs, np.zeros(n + 1), a)
        errs.append(np.abs(w - np.sin(3 * z1) / 3).max())
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 3.2) & (ratios < 4.8))


def test_S_linear_and_monotone(rng):
    g = Grid(12)
    a = rng.uniform(0.2, 2.0, g.shape)
    r1, r2 = rng.standard_normal((2,) + g.shape)
    p1, p2 = rng.standard_normal((2, 13))
    lhs = transport_S(2 * r1 - 3 * r2, 2 * p1 - 3 * p2, a)
    rhs = 2 * transport_S(r1, p1, a) - 3 * transport_S(r2, p2, a)
    assert np.allclose(lhs, rhs, atol=1e-13)
    assert transport_S(np.abs(r1), np.abs(p1), a).min() >= 0


def test_S_row_residual_first_order():
    for n in (32, 64):
        g = Grid(n)
        z1, z2 = g.mesh()
        a = 1 + z2 + 0.2 * np.sin(np.pi * z1)
        rhs = np.exp(z1) * np.cos(z2)
        w = transport_S(rhs, np.sin(g.coords), a)
        one_sided = np.diff(w, axis=0) / g.h
        res = a[:-1] * one_sided - rhs[:-1]
        assert np.abs(res).max() < 5 * g.h


def test_S_stability_ratio(rng):
    c_floor = Params().c_floor
    g = Grid(32)
    worst = 0.0
    for _ in range(50):
        a = rng.uniform(c_floor, 2.0, g.shape)
        v = rng.standard_normal(g.shape)
        w_in = rng.standard_normal(33)
        w = transport_S(v, w_in, a)
        wts = np.full(33, g.h)
        wts[[0, -1]] /= 2
        data = np.sqrt(wts @ w_in**2) + np.sqrt(wts @ (v * v) @ wts)
        worst = max(worst, row_sup_l2(w) / data)
    assert worst <= 1 / c_floor + 1


def test_row_sup_l2():
    g = Grid(8)
    z1, _ = g.mesh()
    assert row_sup_l2(z1) == pytest.approx(1.0)
