#!/usr/bin/env python3
"""
Tests for power injections, constraint functions, cost and their derivatives
"""
from dataclasses import replace

import numpy as np
import pytest

from conftest import two_bus_case
from grid.models import Branch, GridCase
from grid.network import network_model
from pfmath.derivatives import hess_lagrangian, jacobians
from pfmath.power import (
    bus_injections,
    cost_f,
    full_inequality,
    grad_f,
    hess_f,
    inequality_h,
    residual_g,
)
from pfmath.vector import OpfVector, build_bounds
from utils.errors import DimensionError


def interior_point(model, rng):
    """Random point strictly inside the variable bounds"""
    nb, ng = model.n_bus, model.n_gen
    bounds = model.bounds
    va = rng.uniform(-0.3, 0.3, nb)
    va[model.ref] = model.va_ref
    vm = rng.uniform(0.95, 1.05, nb)
    low = bounds.x_min[2 * nb:]
    high = bounds.x_max[2 * nb:]
    gen = low + rng.uniform(0.2, 0.8, 2 * ng) * (high - low)
    return np.concatenate([va, vm, gen])


def central_difference(func, x, step=1e-6):
    base = np.asarray(func(x))
    columns = []
    for i in range(len(x)):
        shift = np.zeros_like(x)
        shift[i] = step
        columns.append((np.asarray(func(x + shift)) - np.asarray(func(x - shift))) / (2 * step))
    return np.column_stack(columns) if base.ndim else np.array(columns)


def relative_error(analytic, numeric) -> float:
    return float(np.max(np.abs(analytic - numeric)) / max(1.0, np.max(np.abs(numeric))))


def lagrangian_gradient(model, lam, mu):
    def gradient(x):
        _, jh = full_inequality(model, x)
        jg, _ = jacobians(model, x)
        return grad_f(model, x) + jg.T @ lam + jh.T @ mu
    return gradient


def test_flat_voltage_on_shunt_free_network(toy):
    model = network_model(toy)
    s = bus_injections(model.ybus, np.zeros(2), np.ones(2))
    assert np.allclose(s, 0, atol=1e-15)


def test_two_bus_injection_by_hand(toy):
    """Lossless line with x = 0.1: P = sin(d) / x, Q = (1 - cos d) / x at both ends"""
    model = network_model(toy)
    s = bus_injections(model.ybus, np.array([0.0, -0.1]), np.ones(2))
    p = 10 * np.sin(0.1)
    q = 10 * (1 - np.cos(0.1))
    assert np.allclose(s, [p + 1j * q, -p + 1j * q], atol=1e-12)


def test_opf_vector_split():
    x = np.arange(6.0)
    v = OpfVector.split(x, 2, 1)
    assert list(v.va) == [0, 1] and list(v.vm) == [2, 3]
    assert list(v.pg) == [4] and list(v.qg) == [5]
    assert np.array_equal(v.flatten(), x)
    with pytest.raises(DimensionError):
        OpfVector.split(np.arange(5.0), 2, 1)


def test_bounds_pin_reference_angle(case9):
    bounds = build_bounds(case9)
    ref = case9.ref_index
    assert bounds.x_min[ref] == bounds.x_max[ref] == 0.0
    assert ref not in bounds.upper_rows and ref not in bounds.lower_rows
    assert np.all(bounds.x_min <= bounds.x_max)


def test_residual_at_flat_start_is_load_mismatch(model9):
    """Flat voltages leave only charging reactive power, so active rows are load minus dispatch"""
    rng = np.random.default_rng(0)
    x = interior_point(model9, rng)
    x[:9] = 0.0
    x[9:18] = 1.0
    g = residual_g(model9, x)
    pg = x[18:21]
    assert np.allclose(g[:9], model9.pd - model9.cg_on @ pg, atol=1e-12)
    assert g[-1] == 0.0


def test_residual_with_zero_magnitudes_is_finite(model9):
    x = interior_point(model9, np.random.default_rng(1))
    x[9:18] = 0.0
    g = residual_g(model9, x)
    assert np.all(np.isfinite(g))
    assert np.allclose(g[:9], model9.pd - model9.cg_on @ x[18:21])


def test_open_branch_adds_no_flow_rows():
    case = replace(two_bus_case(), branches=(Branch(1, 2, 0.0, 0.1, 0.0, rate_a=100.0, status=False),))
    model = network_model(case)
    assert inequality_h(model, np.array([0, 0, 1, 1, 0, 0.0])).size == 0


def test_unloaded_flat_network_sits_at_minus_rate_squared(toy):
    h = inequality_h(toy, np.array([0, 0, 1, 1, 0, 0.0]))
    assert np.allclose(h, [-1.0, -1.0])


def test_inequality_order_and_bounds(model9):
    x = interior_point(model9, np.random.default_rng(2))
    h, jh = full_inequality(model9, x)
    dims = model9.dims
    assert h.shape == (dims.n_ineq,)
    assert jh.shape == (dims.n_ineq, dims.n_x)
    assert np.allclose(h[:dims.n_flow], inequality_h(model9, x))
    assert np.all(h[dims.n_flow:] < 0)


def test_swapping_branch_ends_swaps_flow_rows(case9):
    swapped = replace(case9, branches=tuple(
        Branch(br.to_bus, br.from_bus, br.r, br.x, br.b, br.tap, br.shift, br.rate_a, br.status)
        for br in case9.branches))
    x = interior_point(network_model(case9), np.random.default_rng(3))
    h = inequality_h(case9, x)
    n = len(h) // 2
    assert np.allclose(inequality_h(swapped, x), np.concatenate([h[n:], h[:n]]), atol=1e-12)


def test_single_generator_cost(toy):
    x = np.array([0, 0, 1, 1, 1.0, 0])
    assert cost_f(toy, x) == pytest.approx(3100.0)
    # d/dpg of 0.1 P^2 + 20 P + 100 at P = 100 MW, times base 100
    assert grad_f(toy, x)[4] == pytest.approx((0.2 * 100 + 20) * 100)
    assert np.count_nonzero(grad_f(toy, x)) == 1


def test_zero_cost_coefficients(case9):
    free = replace(case9, gens=tuple(replace(g, cost=(0.0, 0.0, 0.0)) for g in case9.gens))
    x = interior_point(network_model(free), np.random.default_rng(4))
    assert cost_f(free, x) == 0.0
    assert not grad_f(free, x).any()


def test_cost_invariant_under_generator_order(case9):
    reordered = GridCase(case9.base_mva, case9.buses, case9.gens[::-1], case9.branches)
    x = interior_point(network_model(case9), np.random.default_rng(5))
    pg, qg = x[18:21], x[21:24]
    x_reordered = np.concatenate([x[:18], pg[::-1], qg[::-1]])
    assert cost_f(reordered, x_reordered) == pytest.approx(cost_f(case9, x), rel=1e-12)


def test_generator_columns_of_jacobian(model9):
    x = interior_point(model9, np.random.default_rng(6))
    jg, _ = jacobians(model9, x)
    nb, ng = model9.n_bus, model9.n_gen
    dense = jg.toarray()
    assert np.array_equal(dense[:nb, 2 * nb:2 * nb + ng], -model9.cg_on.toarray())
    assert np.array_equal(dense[nb:2 * nb, 2 * nb + ng:], -model9.cg_on.toarray())
    assert dense[-1, model9.ref] == 1.0


def test_unrated_network_has_empty_flow_jacobian():
    model = network_model(two_bus_case(rate_a=0.0))
    _, jh = jacobians(model, np.array([0, -0.1, 1, 1, 0.5, 0.1]))
    assert jh.shape == (0, 6)


@pytest.mark.parametrize("seed", range(5))
def test_jacobians_match_finite_differences(model9, seed):
    x = interior_point(model9, np.random.default_rng(10 + seed))
    jg, jh = jacobians(model9, x)
    assert relative_error(jg.toarray(), central_difference(lambda v: residual_g(model9, v), x)) < 1e-6
    assert relative_error(jh.toarray(), central_difference(lambda v: inequality_h(model9, v), x)) < 1e-5
    _, full = full_inequality(model9, x)
    assert relative_error(full.toarray(), central_difference(lambda v: full_inequality(model9, v)[0], x)) < 1e-5


def test_cost_derivatives_match_finite_differences(model9):
    x = interior_point(model9, np.random.default_rng(20))
    assert relative_error(grad_f(model9, x), central_difference(lambda v: cost_f(model9, v), x)) < 1e-6
    assert relative_error(hess_f(model9, x).toarray(),
                          central_difference(lambda v: grad_f(model9, v), x)) < 1e-5


def test_cost_only_hessian(model9):
    x = interior_point(model9, np.random.default_rng(21))
    hessian = hess_lagrangian(model9, x, np.zeros(model9.dims.n_eq), np.zeros(model9.dims.n_ineq)).toarray()
    c2 = model9.cost[:, 0]
    pg_block = np.diag(hessian)[18:21]
    assert np.allclose(pg_block, 2 * c2 * 100 ** 2)
    assert np.count_nonzero(hessian) == 3


@pytest.mark.parametrize("seed", range(5))
def test_lagrangian_hessian_matches_finite_differences(model9, seed):
    rng = np.random.default_rng(30 + seed)
    x = interior_point(model9, rng)
    lam = rng.normal(size=model9.dims.n_eq)
    mu = rng.uniform(0, 1, size=model9.dims.n_ineq)
    hessian = hess_lagrangian(model9, x, lam, mu).toarray()
    numeric = central_difference(lagrangian_gradient(model9, lam, mu), x)
    assert relative_error(hessian, numeric) < 1e-5
    assert np.max(np.abs(hessian - hessian.T)) < 1e-10


def test_hessian_accepts_flow_multipliers_only(model9):
    rng = np.random.default_rng(40)
    x = interior_point(model9, rng)
    lam = rng.normal(size=model9.dims.n_eq)
    mu = rng.uniform(0, 1, size=model9.dims.n_ineq)
    full = hess_lagrangian(model9, x, lam, mu)
    flow_only = hess_lagrangian(model9, x, lam, mu[:model9.dims.n_flow])
    assert np.allclose(full.toarray(), flow_only.toarray())
