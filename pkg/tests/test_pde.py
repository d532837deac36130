"""Coefficient fields, the 1D finite element solver, and derivative solves."""

import math

import numpy as np
import pytest

from latqmc.errors import (
    DimensionMismatchError,
    DomainError,
    EllipticityError,
)
from latqmc.pde import (
    Functional,
    LognormalField,
    SolveCounter,
    UniformField,
    dual_energy_norm,
    eval_coefficient,
    qoi,
    solve,
    solve_block,
    solve_first_derivative,
)


def _field(s=16, theta=3.0, a0=1.0, amplitude=0.5):
    return UniformField(a0=a0, amplitude=amplitude, theta=theta, s=s)


# --- coefficient fields ------------------------------------------------------


def test_uniform_field_extremes():
    field = _field(s=100)
    tail = math.fsum(0.5 * j**-3.0 for j in range(1, 101))
    assert abs(field.a_min - (1.0 - 0.5 * tail)) <= 1e-13
    assert abs(field.a_max - (1.0 + 0.5 * tail)) <= 1e-13
    assert abs(field.a_min + field.a_max - 2.0) <= 1e-14


def test_uniform_field_sup_norms():
    field = _field(s=8)
    expected = [0.5 * j**-3.0 for j in range(1, 9)]
    assert np.allclose(field.sup_norms(), expected, rtol=1e-15, atol=0.0)
    # the sine profile attains its envelope
    x = (np.arange(4096) + 0.5) / 4096
    for j in range(1, 9):
        observed = np.max(np.abs(0.5 * j**-3.0 * np.sin(j * math.pi * x)))
        assert abs(observed - field.sup_norms()[j - 1]) <= 1e-4 * field.sup_norms()[j - 1]


def test_uniform_field_decay_model():
    field = _field(s=10)
    decay = field.decay_model()
    assert decay.p0 == (1.0 / 3.0 + 1.0) / 2.0
    assert decay.a_min == field.a_min
    assert np.allclose(decay.b, field.sup_norms() / field.a_min, rtol=1e-15, atol=0.0)


def test_uniform_field_validation():
    with pytest.raises(DomainError):
        UniformField(a0=0.0, amplitude=0.5, theta=3.0, s=4)
    with pytest.raises(DomainError):
        UniformField(a0=1.0, amplitude=-0.5, theta=3.0, s=4)
    with pytest.raises(DomainError):
        UniformField(a0=1.0, amplitude=0.5, theta=1.0, s=4)
    with pytest.raises(DomainError):
        UniformField(a0=1.0, amplitude=0.5, theta=3.0, s=0)
    with pytest.raises(DomainError):
        UniformField(a0=1.0, amplitude=0.5, theta=3.0, s=4, p0=1.0 / 3.0)
    with pytest.raises(DomainError):
        UniformField(a0=1.0, amplitude=0.5, theta=3.0, s=4, p0=1.0)
    with pytest.raises(EllipticityError):
        UniformField(a0=1.0, amplitude=2.0, theta=3.0, s=10)


def test_lognormal_field_eigenvalues():
    field = LognormalField(a0=1.0, amplitude=0.5, theta=2.0, s=12)
    mu = field.eigenvalues()
    assert np.allclose(mu, [0.25 * j**-4.0 for j in range(1, 13)], rtol=1e-15, atol=0.0)
    assert np.all(mu > 0.0)
    assert np.all(np.diff(mu) <= 0.0)
    decay = field.decay_model()
    assert decay.a_min == 1.0
    assert np.allclose(decay.b, np.sqrt(mu) * math.sqrt(2.0), rtol=1e-15, atol=0.0)


def test_lognormal_profiles_orthonormal():
    # sqrt(2) sin(j pi x) against sqrt(2) sin(k pi x), 2^14-point midpoint rule
    x = (np.arange(2**14) + 0.5) / 2**14
    for j in range(1, 9):
        fj = math.sqrt(2.0) * np.sin(j * math.pi * x)
        for k in range(j, 9):
            fk = math.sqrt(2.0) * np.sin(k * math.pi * x)
            inner = np.mean(fj * fk)
            assert abs(inner - (1.0 if j == k else 0.0)) <= 1e-8


def test_eval_coefficient_values():
    field = _field(s=4)
    assert eval_coefficient(field, 0.37, np.zeros(4)) == 1.0
    logn = LognormalField(a0=2.0, amplitude=0.5, theta=2.0, s=4)
    assert eval_coefficient(logn, 0.37, np.zeros(4)) == 2.0
    single = UniformField(a0=1.0, amplitude=0.5, theta=2.0, s=1)
    got = eval_coefficient(single, 0.5, np.array([0.5]))
    assert abs(got - 1.25) <= 1e-15


def test_eval_coefficient_bounds():
    field = _field(s=12)
    rng = np.random.default_rng(7)
    for _ in range(1000):
        x = float(rng.uniform(0.0, 1.0))
        y = rng.uniform(-0.5, 0.5, 12)
        a = eval_coefficient(field, x, y)
        assert field.a_min - 1e-12 <= a <= field.a_max + 1e-12


def test_eval_coefficient_vectorized_x():
    field = _field(s=6)
    y = np.linspace(-0.4, 0.4, 6)
    x = np.array([0.1, 0.25, 0.9])
    vals = eval_coefficient(field, x, y)
    assert vals.shape == (3,)
    for xi, vi in zip(x, vals):
        assert eval_coefficient(field, float(xi), y) == vi


def test_eval_coefficient_validation():
    field = _field(s=3)
    with pytest.raises(DomainError):
        eval_coefficient(field, 0.5, np.array([0.0, 0.0, 0.6]))
    with pytest.raises(DimensionMismatchError):
        eval_coefficient(field, 0.5, np.zeros(4))
    with pytest.raises(DimensionMismatchError):
        eval_coefficient(field, 0.5, np.zeros((2, 3)))


# --- finite element solver ---------------------------------------------------


def test_solver_nodal_exactness():
    # y = 0 collapses the coefficient to a0; -u'' = 1 has nodal-exact
    # piecewise-linear Galerkin solutions in 1D
    field = _field()
    for m_exp in (2, 5, 8):
        h = 2.0**-m_exp
        system = solve(field, np.zeros(field.s), h)
        nodes = np.linspace(0.0, 1.0, system.cells + 1)
        exact = nodes * (1.0 - nodes) / 2.0
        assert np.max(np.abs(system.values - exact)) <= 1e-14


def test_solver_scales_with_baseline():
    field = UniformField(a0=4.0, amplitude=0.5, theta=3.0, s=4)
    system = solve(field, np.zeros(4), 1.0 / 64)
    nodes = np.linspace(0.0, 1.0, 65)
    exact = nodes * (1.0 - nodes) / 8.0
    assert np.max(np.abs(system.values - exact)) <= 1e-14


def test_solver_zero_load():
    system = solve(_field(), np.zeros(16), 1.0 / 32, kappa=0.0)
    assert np.all(system.values == 0.0)


def test_solver_residual():
    field = _field()
    rng = np.random.default_rng(5)
    for h in (1.0 / 16, 1.0 / 128):
        y = rng.uniform(-0.5, 0.5, field.s)
        system = solve(field, y, h)
        assert system.residual() <= 1e-12
        assert system.values[0] == 0.0 and system.values[-1] == 0.0


def test_solver_symmetry_at_zero_parameter():
    system = solve(_field(), np.zeros(16), 1.0 / 64)
    assert np.max(np.abs(system.values - system.values[::-1])) <= 1e-12


def test_mesh_validation():
    field = _field()
    for h in (1.0 / 3, 0.3, 1.0, 2.0 / 7):
        with pytest.raises(DomainError):
            solve(field, np.zeros(16), h)


def test_truncation_prefix_matches_zero_padding():
    field = _field(s=8)
    rng = np.random.default_rng(11)
    y = rng.uniform(-0.5, 0.5, 8)
    y_trunc = y.copy()
    y_trunc[4:] = 0.0
    full = solve(field, y_trunc, 1.0 / 32).values
    small = UniformField(a0=1.0, amplitude=0.5, theta=3.0, s=4)
    partial = solve(small, y[:4], 1.0 / 32).values
    assert np.allclose(full, partial, rtol=1e-14, atol=1e-16)


def test_block_row_matches_scalar_solve():
    field = _field(s=6)
    rng = np.random.default_rng(3)
    Y = rng.uniform(-0.5, 0.5, (5, 6))
    block = solve_block(field, Y, 1.0 / 32)
    assert block.shape == (5, 33)
    assert np.all(block[:, 0] == 0.0) and np.all(block[:, -1] == 0.0)
    for i in range(5):
        single = solve(field, Y[i], 1.0 / 32).values
        one_row = solve_block(field, Y[i : i + 1], 1.0 / 32)[0]
        assert np.array_equal(one_row, single)
        assert np.allclose(block[i], single, rtol=1e-13, atol=1e-16)


def test_lognormal_solve_finite():
    field = LognormalField(a0=1.0, amplitude=0.5, theta=2.0, s=6)
    rng = np.random.default_rng(19)
    block = solve_block(field, rng.standard_normal((4, 6)), 1.0 / 64)
    assert np.all(np.isfinite(block))


def test_ellipticity_guard_reports_location():
    # exp underflow drives the sampled coefficient to exactly zero
    field = LognormalField(a0=1.0, amplitude=0.5, theta=2.0, s=2)
    y = np.array([-1e6, 0.0])
    with pytest.raises(EllipticityError, match="midpoint x ="):
        solve(field, y, 1.0 / 8)


def test_solve_counter():
    counter = SolveCounter()
    field = _field(s=4)
    solve(field, np.zeros(4), 1.0 / 16, counter=counter)
    solve_block(field, np.zeros((3, 4)), 1.0 / 32, counter=counter)
    assert counter.count == 4
    assert counter.work == 1 * 16 + 3 * 32
    counter.reset()
    assert counter.count == 0 and counter.work == 0


# --- quantity of interest ----------------------------------------------------


def test_qoi_reproduces_interpolation_identity():
    # G(u_h) = 1/12 - h^2/12 exactly: the 1/12 target up to the quadratic
    # interpolation term alone
    field = _field()
    for M in (8, 64, 256):
        h = 1.0 / M
        system = solve(field, np.zeros(field.s), h)
        value = qoi(system, Functional(1.0))
        assert abs(value - (1.0 / 12.0 - h * h / 12.0)) <= 1e-12


def test_qoi_zero_solution():
    system = solve(_field(), np.zeros(16), 1.0 / 16, kappa=0.0)
    assert qoi(system, Functional(1.0)) == 0.0


def test_qoi_quadratic_convergence():
    field = _field()
    errors = []
    for m_exp in range(3, 9):
        system = solve(field, np.zeros(field.s), 2.0**-m_exp)
        errors.append(abs(qoi(system, Functional(1.0)) - 1.0 / 12.0))
    rates = [math.log2(a / b) for a, b in zip(errors, errors[1:])]
    assert all(1.9 <= r <= 2.1 for r in rates)


def test_functional_linearity():
    functional = Functional(lambda x: 1.0 + 0.5 * x)
    rng = np.random.default_rng(23)
    v = rng.standard_normal(65)
    w = rng.standard_normal(65)
    left = functional(2.5 * v + w)
    right = 2.5 * functional(v) + functional(w)
    assert abs(left - right) <= 1e-14 * max(1.0, abs(left))


def test_functional_nodal_and_callable_agree():
    M = 32
    x = np.linspace(0.0, 1.0, M + 1)
    a = Functional(lambda t: np.sin(t))
    b = Functional(np.sin(x))
    assert np.array_equal(a.weights_on(M), b.weights_on(M))


def test_functional_interpolates_coarse_data():
    # linear data on a coarse grid interpolates exactly onto the fine mesh
    coarse = np.linspace(0.0, 3.0, 9)
    a = Functional(coarse)
    b = Functional(lambda t: 3.0 * t)
    assert np.allclose(a.weights_on(64), b.weights_on(64), rtol=1e-15, atol=1e-18)


def test_functional_batch_evaluation():
    functional = Functional(1.0)
    block = solve_block(_field(s=4), np.zeros((3, 4)), 1.0 / 16)
    batched = functional(block)
    assert batched.shape == (3,)
    assert all(batched[i] == functional(block[i]) for i in range(3))


def test_dual_energy_norm():
    for M in (8, 64, 512):
        h = 1.0 / M
        got = dual_energy_norm(1.0, M)
        assert abs(got - math.sqrt(1.0 / 12.0 - h * h / 12.0)) <= 1e-14
    assert dual_energy_norm(1.0, 64) == 0.2886398937798608
    assert abs(dual_energy_norm(1.0, 2**14) - 1.0 / math.sqrt(12.0)) <= 1e-9


# --- parametric derivatives --------------------------------------------------


def test_derivative_matches_finite_difference():
    field = _field(s=8)
    h = 1.0 / 64
    rng = np.random.default_rng(31)
    y = rng.uniform(-0.49, 0.49, 8)
    base = solve(field, y, h)
    eps = 1e-5
    for j in (1, 2, 3):
        deriv = solve_first_derivative(field, y, h, j, base)
        y_hi, y_lo = y.copy(), y.copy()
        y_hi[j - 1] += eps
        y_lo[j - 1] -= eps
        fd = (solve(field, y_hi, h).values - solve(field, y_lo, h).values) / (2 * eps)
        diff = deriv.values - fd
        scale = math.sqrt(np.sum(np.diff(deriv.values) ** 2) / h)
        err = math.sqrt(np.sum(np.diff(diff) ** 2) / h)
        assert err <= 1e-6 * scale


def test_derivative_vanishes_with_amplitude():
    field = UniformField(a0=1.0, amplitude=1e-300, theta=3.0, s=4)
    y = np.array([0.3, -0.2, 0.1, 0.4])
    base = solve(field, y, 1.0 / 32)
    deriv = solve_first_derivative(field, y, 1.0 / 32, 2, base)
    assert deriv.h1_seminorm() <= 1e-290


def test_derivative_recurrence_bound():
    field = _field(s=16)
    h = 1.0 / 64
    rng = np.random.default_rng(37)
    b = field.decay_model().b
    for _ in range(5):
        y = rng.uniform(-0.5, 0.5, 16)
        base = solve(field, y, h)
        base_norm = base.h1_seminorm()
        for j in range(1, 17):
            deriv = solve_first_derivative(field, y, h, j, base)
            assert deriv.h1_seminorm() <= b[j - 1] * base_norm * (1.0 + 1e-12)


def test_a_priori_bounds():
    field = _field(s=8)
    h = 1.0 / 64
    M = 64
    kappa_dual = dual_energy_norm(1.0, M)
    cap = kappa_dual / field.a_min
    b = field.decay_model().b
    rng = np.random.default_rng(41)
    for i in range(100):
        y = rng.uniform(-0.5, 0.5, 8)
        base = solve(field, y, h)
        assert base.h1_seminorm() <= cap * (1.0 + 1e-12)
        if i < 20:
            for j in (1, 4, 8):
                deriv = solve_first_derivative(field, y, h, j, base)
                assert deriv.h1_seminorm() <= b[j - 1] * cap * (1.0 + 1e-12)


def test_derivative_validation():
    field = _field(s=4)
    y = np.zeros(4)
    base = solve(field, y, 1.0 / 16)
    logn = LognormalField(a0=1.0, amplitude=0.5, theta=2.0, s=4)
    with pytest.raises(DomainError):
        solve_first_derivative(logn, y, 1.0 / 16, 1, base)
    with pytest.raises(IndexError):
        solve_first_derivative(field, y, 1.0 / 16, 0, base)
    with pytest.raises(IndexError):
        solve_first_derivative(field, y, 1.0 / 16, 5, base)
    with pytest.raises(DimensionMismatchError):
        solve_first_derivative(field, y, 1.0 / 32, 1, base)
