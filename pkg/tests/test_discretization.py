"""Grids, fields, quadrature, and field CSV round-trips."""

import math

import numpy as np
import pytest

from degenflow import (
    ConfigError,
    Field,
    Grid,
    NumericalError,
    ShapeError,
    WeightSpec,
    build_grid,
    cell_volumes,
    integrate,
    nodal_gradient,
    quad_weights,
    read_field_csv,
    sobolev_norm,
    surface_area,
    weight_on_grid,
    write_field_csv,
)


def test_interval_grid_layout():
    g = build_grid("interval", 1.0, 8)
    assert g.shape == (9,)
    assert g.h == (0.125,)
    assert g.dim == 1
    assert g.boundary_mask[0] and g.boundary_mask[-1]
    assert g.boundary_mask.sum() == 2


def test_radial_grid_layout():
    g = build_grid("radial", 2.0, 10, n=3)
    assert g.shape == (11,)
    assert g.dim == 3
    # only the outer node is Dirichlet; the origin is a symmetry point
    assert not g.boundary_mask[0]
    assert g.boundary_mask[-1]
    assert g.boundary_mask.sum() == 1


def test_tensor_grid_layout():
    g = build_grid("tensor2d", 1.0, 4)
    assert g.shape == (5, 5)
    assert g.dim == 2
    assert g.boundary_mask.sum() == 16  # full edge ring
    assert not g.boundary_mask[2, 2]


@pytest.mark.parametrize("bad", [3, 0, -1])
def test_resolution_floor(bad):
    with pytest.raises(ConfigError):
        build_grid("interval", 1.0, bad)


def test_radial_needs_dimension():
    with pytest.raises(ConfigError):
        build_grid("radial", 1.0, 8)
    with pytest.raises(ConfigError):
        build_grid("radial", 1.0, 8, n=1)


def test_unknown_mode():
    with pytest.raises(ConfigError):
        build_grid("hex", 1.0, 8)


def test_field_shape_check():
    g = build_grid("interval", 1.0, 8)
    with pytest.raises(ShapeError):
        Field(g, np.zeros(5))


def test_quadrature_interval_polynomial():
    # trapezoid is exact on affine integrands
    g = build_grid("interval", 1.0, 16)
    f = Field(g, 2.0 * g.axes[0] + 1.0)
    assert integrate(f) == pytest.approx(2.0, rel=1e-14)


def test_quadrature_radial_measures_ball():
    # integral of 1 over B_R in R^n
    n, R = 2, 3.0
    g = build_grid("radial", R, 64, n=n)
    one = Field(g, np.ones(g.shape))
    exact = surface_area(n) * R**n / n
    assert integrate(one) == pytest.approx(exact, rel=1e-12)
    # cell volumes tile the same ball exactly
    assert cell_volumes(g).sum() == pytest.approx(exact, rel=1e-12)


def test_quadrature_tensor_separable():
    g = build_grid("tensor2d", 1.0, 32)
    x, y = g.coordinates()
    f = Field(g, x * y)
    assert integrate(f) == pytest.approx(0.25, rel=1e-12)


def test_quad_weights_sum_to_measure():
    g = build_grid("interval", 2.0, 10)
    assert quad_weights(g).sum() == pytest.approx(2.0)
    g2 = build_grid("tensor2d", 2.0, 10)
    assert quad_weights(g2).sum() == pytest.approx(4.0)


def test_integrate_with_weight():
    # integral of r * r dr over [0,1] interval grid, weight |x|
    g = build_grid("interval", 1.0, 400)
    f = Field(g, g.axes[0])
    w = WeightSpec.power(1.0)
    assert integrate(f, weight=w) == pytest.approx(1.0 / 3.0, rel=1e-5)


def test_integrate_rejects_nonfinite():
    g = build_grid("interval", 1.0, 8)
    vals = np.zeros(g.shape)
    vals[3] = np.inf
    with pytest.raises(NumericalError):
        integrate(Field(g, vals))


def test_weight_on_grid_variants():
    g = build_grid("interval", 1.0, 8)
    assert np.all(weight_on_grid(None, g) == 1.0)
    arr = np.linspace(0.0, 1.0, 9)
    assert weight_on_grid(arr, g) is arr
    with pytest.raises(ShapeError):
        weight_on_grid(np.zeros(5), g)


def test_nodal_gradient_linear_exact():
    g = build_grid("tensor2d", 1.0, 8)
    x, y = g.coordinates()
    f = Field(g, 3.0 * x - 2.0 * y)
    gx, gy = nodal_gradient(f)
    np.testing.assert_allclose(gx, 3.0, atol=1e-13)
    np.testing.assert_allclose(gy, -2.0, atol=1e-13)


def test_sobolev_norm_hand_value():
    # u = x on [0,1]: integral(|u|^2 + |u'|^2) = 1/3 + 1 = 4/3
    g = build_grid("interval", 1.0, 256)
    f = Field(g, g.axes[0].copy())
    assert sobolev_norm(f) == pytest.approx(math.sqrt(4.0 / 3.0), rel=1e-5)


def test_sobolev_norm_rejects_bad_exponent():
    g = build_grid("interval", 1.0, 8)
    with pytest.raises(ConfigError):
        sobolev_norm(Field.zeros(g), p=1.0)


@pytest.mark.parametrize("mode,kw", [("interval", {}), ("radial", {"n": 2}), ("tensor2d", {})])
def test_field_csv_roundtrip(tmp_path, mode, kw):
    g = build_grid(mode, 1.0, 6, **kw)
    rng = np.random.default_rng(42)
    f = Field(g, rng.standard_normal(g.shape))
    path = tmp_path / "field.csv"
    write_field_csv(f, path, header_lines=("example",))
    back = read_field_csv(path, g)
    np.testing.assert_allclose(back.values, f.values, atol=1e-15)


def test_field_csv_grid_mismatch(tmp_path):
    g = build_grid("interval", 1.0, 6)
    f = Field(g, np.zeros(g.shape))
    path = tmp_path / "field.csv"
    write_field_csv(f, path)
    other = build_grid("interval", 1.0, 8)
    with pytest.raises(ShapeError):
        read_field_csv(path, other)


def test_from_function_tensor():
    g = build_grid("tensor2d", 1.0, 4)
    f = Field.from_function(g, lambda xy: xy[0] + 10.0 * xy[1])
    x, y = g.coordinates()
    np.testing.assert_allclose(f.values, x + 10.0 * y)
