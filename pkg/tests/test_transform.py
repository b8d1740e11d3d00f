import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roughscl.flows import build_coefficients, solve_flows
from roughscl.fvsolver import GridSolution, solve
from roughscl.lattice import Grid, Lattice
from roughscl.roughpath import PiecewiseLinearPath, brownian_piecewise_linear
from roughscl.transform import (
    GeneralFlux,
    HomogeneousProblem,
    TransformError,
    build_general_transform_c1,
    build_robust_problem,
    burgers_flux,
    dump_flux_slice,
    exp_flux,
    forward_transform,
    inverse_transform,
    linear_flux,
    make_flux,
    streaming_problem,
)


def line(T, *slopes):
    return PiecewiseLinearPath([0.0, T], [np.zeros(len(slopes)), T * np.asarray(slopes, dtype=float)])


def robust(coeff_spec, driver, lattice, times, flux=None, substeps=16):
    coeffs = build_coefficients(coeff_spec)
    flow, aff = solve_flows(coeffs, driver, lattice, times, substeps)
    return build_robust_problem(flux or burgers_flux(coeffs.d), flow, aff), flow, aff


def test_flux_registry():
    f = make_flux({"name": "burgers", "d": 2, "scale": 2.0})
    assert np.allclose(f.f(np.array([1.0])), [[1.0, 1.0]])
    assert f.C_f == pytest.approx(2.0 * np.sqrt(2.0))
    assert np.allclose(linear_flux(1, [3.0]).df(np.array([0.2])), [[3.0]])
    with pytest.raises(ValueError):
        burgers_flux(2, direction=[1.0])


def test_identity_transform_keeps_flux():
    lat = Lattice.from_box([-1.0], [1.0], 41)
    zero = PiecewiseLinearPath([0.0, 1.0], np.zeros((2, 1)))
    prob, _, _ = robust({"d": 1, "H": [{"name": "constant"}]}, zero, lat, [0.0, 1.0])
    x = np.linspace(-0.9, 0.9, 7)[:, None]
    v = np.linspace(-1, 1, 7)
    assert np.allclose(prob.flux(1.0, x, v)[:, 0], 0.5 * v * v)
    assert np.allclose(prob.flux_div(1.0, x, v), 0.0)


def test_constant_shift_leaves_burgers_unchanged():
    lat = Lattice.from_box([-3.0], [3.0], 61)
    z = brownian_piecewise_linear(0, 1, 1.0, 3)
    prob, _, _ = robust({"d": 1, "H": [{"name": "constant", "c": [1.0]}]}, z, lat, z.times)
    x = np.linspace(-1, 1, 9)[:, None]
    v = np.linspace(-2, 2, 9)
    assert np.allclose(prob.flux(float(z.times[3]), x, v)[:, 0], 0.5 * v * v, atol=1e-12)


def test_exponential_damping_flux():
    lat = Lattice.from_box([-1.0], [1.0], 11)
    prob, _, _ = robust({"d": 1, "nu": [1.0]}, line(1.0, 1.0), lat, [0.5, 1.0])
    v = np.array([0.3, -1.2])
    x = np.zeros((2, 1))
    # mu = -t, so e^mu f(e^-mu v) = e^t v^2 / 2
    assert np.allclose(prob.flux(1.0, x, v)[:, 0], np.exp(1.0) * v * v / 2)


@given(st.floats(-1.5, 1.5), st.floats(-0.6, 0.6), st.floats(-0.6, 0.6))
def test_flux_dv_matches_finite_differences(v, x1, x2):
    prob = ROBUST_2D
    x = np.array([[x1, x2]])
    eps = 1e-6
    fd = (prob.flux(0.5, x, np.array([v + eps])) - prob.flux(0.5, x, np.array([v - eps]))) / (2 * eps)
    assert np.allclose(prob.flux_dv(0.5, x, np.array([v])), fd, rtol=1e-6, atol=1e-8)


def _make_robust_2d():
    lat = Lattice.from_box([-1.0, -1.0], [1.0, 1.0], 65)
    spec = {"d": 2, "H": [{"name": "rotation"}], "nu": [0.5],
            "g": [{"name": "bump", "amplitude": 0.5, "center": [0.0, 0.0], "width": 0.4}]}
    prob, _, _ = robust(spec, brownian_piecewise_linear(3, 3, 0.5, 2), lat, [0.5], substeps=32)
    return prob


ROBUST_2D = _make_robust_2d()


def test_flux_div_matches_spatial_differences():
    lat = ROBUST_2D.frames.lattice
    x = lat.points()
    inner = np.all(np.abs(x) < 0.7, axis=-1)
    v = np.full(x.shape[0], 0.4)
    f = ROBUST_2D.flux(0.5, x, v)
    div_fd = np.einsum("nii->n", lat.gradient(f))
    assert np.max(np.abs(div_fd - ROBUST_2D.flux_div(0.5, x, v))[inner]) < 5e-3


def test_corner_adjugate_preserves_constants_exactly():
    grid = Grid.from_box([-1.0, -1.0], [1.0, 1.0], 1 / 32)
    coeffs = build_coefficients({"d": 2, "H": [{"name": "stream_gaussian", "amplitude": 0.5, "width": 0.4}]})
    z = brownian_piecewise_linear(1, 1, 0.5, 3)
    prob = streaming_problem(burgers_flux(2), coeffs, z, grid.node_lattice(), 4)
    sol = solve(prob, grid, lambda x: np.full(x.shape[:-1], 0.7), 0.5)
    assert np.max(np.abs(sol.final - 0.7)) < 1e-13


def test_forward_transform_of_constant():
    grid = Grid.from_box([-1.0], [1.0], 1 / 20)
    coeffs = build_coefficients({"d": 1, "nu": [1.0]})
    flow, aff = solve_flows(coeffs, line(1.0, 1.0), grid.node_lattice(), [0.0, 0.5, 1.0], 4)
    u = GridSolution(grid, np.array([0.0, 0.5, 1.0]), np.ones((3,) + grid.shape), {})
    v = forward_transform(u, flow, aff)
    assert np.allclose(v.values[:, 5], np.exp(-np.array([0.0, 0.5, 1.0])))


def test_inverse_transform_of_zero_is_rho():
    grid = Grid.from_box([-2.0], [2.0], 1 / 40)
    coeffs = build_coefficients({"d": 1, "nu": [1.0], "g": [{"name": "bump", "width": 0.5}]})
    z = line(1.0, 1.0, 1.0)
    flow, aff = solve_flows(coeffs, z, grid.node_lattice(), [1.0], 32)
    v = GridSolution(grid, np.array([1.0]), np.zeros((1,) + grid.shape), {})
    u = inverse_transform(v, flow, aff)
    y = grid.centers()[:, 0]
    rho = np.interp(y, grid.node_lattice().axes()[0], aff.rho[0])
    assert np.allclose(u.values[0], np.exp(1.0) * rho)


def test_trivial_noise_round_trip_is_identity():
    grid = Grid.from_box([-1.0], [1.0], 1 / 20)
    coeffs = build_coefficients({"d": 1, "H": [{"name": "constant"}]})
    flow, aff = solve_flows(coeffs, PiecewiseLinearPath([0.0, 1.0], np.zeros((2, 1))), grid.node_lattice(), [1.0], 4)
    u = GridSolution(grid, np.array([1.0]), np.sin(grid.centers()[None, :, 0]), {})
    assert np.allclose(forward_transform(u, flow, aff).values, u.values)
    assert np.allclose(inverse_transform(u, flow, aff).values, u.values)


def test_inverse_transform_requires_inverse():
    grid = Grid.from_box([-1.0], [1.0], 1 / 10)
    coeffs = build_coefficients({"d": 1, "H": [{"name": "constant"}]})
    flow, aff = solve_flows(coeffs, line(1.0, 0.1), grid.node_lattice(), [1.0], 4, inverse=False)
    with pytest.raises(TransformError):
        inverse_transform(GridSolution(grid, np.array([1.0]), np.zeros((1, 20)), {}), flow, aff)


def test_general_transform_with_constant_rate_matches_robust():
    lat = Lattice.from_box([-1.0, -1.0], [1.0, 1.0], 33)
    spec = {"d": 2, "H": [{"name": "rotation"}], "nu": [0.5], "g": [{"name": "bump", "width": 0.4}]}
    z = line(0.5, 1.0, 0.5, -0.5)
    coeffs = build_coefficients(spec)
    flux = burgers_flux(2)
    gen = build_general_transform_c1(GeneralFlux.from_spec(flux), coeffs, z, lat, [0.5], substeps=32)
    rob, _, _ = robust(spec, z, lat, [0.5], substeps=32)
    x = lat.points()[::7]
    v = np.linspace(-1, 1, x.shape[0])
    assert np.allclose(gen.flux(0.5, x, v), rob.flux(0.5, x, v), atol=1e-8)
    assert np.max(np.abs(gen.source(0.5, x, v))) < 1e-10


def test_space_dependent_rate_gradient():
    lat = Lattice.from_box([-1.0], [1.0], 201)
    coeffs = build_coefficients({"d": 1, "nu": [1.0]})
    gen = build_general_transform_c1(GeneralFlux.from_spec(burgers_flux(1)), coeffs, line(1.0, 1.0), lat, [1.0],
                                     nu_field=lambda t, x: np.sin(x), substeps=32)
    assert gen.grad_mu(1.0, np.array([[0.0]]))[0, 0] == pytest.approx(-1.0, abs=1e-4)
    # source is the flux along grad mu when F = 0
    x, v = np.array([[0.3]]), np.array([0.8])
    expected = gen.flux(1.0, x, v)[0, 0] * gen.grad_mu(1.0, x)[0, 0]
    assert gen.source(1.0, x, v)[0] == pytest.approx(expected)


def test_range_excursion_is_tracked():
    lat = Lattice.from_box([-1.0], [1.0], 11)
    coeffs = build_coefficients({"d": 1, "H": [{"name": "constant"}]})
    flow, aff = solve_flows(coeffs, line(1.0, 0.1), lat, [1.0], 4)
    prob = build_robust_problem(exp_flux(1, valid_range=(-5.0, 5.0)), flow, aff)
    prob.flux(1.0, np.zeros((1, 1)), np.array([7.0]))
    assert prob.range_excursion == pytest.approx(2.0)


def test_homogeneous_problem_is_x_free():
    prob = HomogeneousProblem(burgers_flux(1))
    assert np.allclose(prob.flux_div(0.0, np.zeros((3, 1)), np.ones(3)), 0.0)
    assert np.allclose(prob.source(0.0, np.zeros((3, 1)), np.ones(3)), 0.0)


def test_dump_flux_slice(tmp_path):
    lat = Lattice.from_box([-1.0], [1.0], 5)
    dump_flux_slice(HomogeneousProblem(burgers_flux(1)), 0.0, lat, 2.0, tmp_path / "s.csv")
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert rows[0] == "x1,f1,df1,div_f" and len(rows) == 6
