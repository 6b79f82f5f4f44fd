import numpy as np
from scipy import sparse

from grid.models import GridCase
from grid.network import NetworkModel, network_model
from pfmath.vector import OpfVector


def as_model(case) -> NetworkModel:
    """Accept either a GridCase or an already built NetworkModel"""
    if isinstance(case, NetworkModel):
        return case
    if isinstance(case, GridCase):
        return network_model(case)
    raise TypeError(f"expected GridCase or NetworkModel, got {type(case).__name__}")


def as_vector(model: NetworkModel, x) -> OpfVector:
    if isinstance(x, OpfVector):
        return x
    return OpfVector.split(x, model.n_bus, model.n_gen)


def complex_voltage(va, vm) -> np.ndarray:
    return np.asarray(vm) * np.exp(1j * np.asarray(va))


def bus_injections(ybus, va, vm) -> np.ndarray:
    """Complex power S = diag(V) conj(Ybus V) absorbed by the network at each bus"""
    v = complex_voltage(va, vm)
    return v * np.conj(ybus @ v)


def residual_g(case, x) -> np.ndarray:
    """Equality residuals: active balance, reactive balance, reference angle"""
    model = as_model(case)
    X = as_vector(model, x)
    s = bus_injections(model.ybus, X.va, X.vm)
    cg = model.cg_on
    p = s.real + model.pd - cg @ X.pg
    q = s.imag + model.qd - cg @ X.qg
    return np.concatenate([p, q, [X.va[model.ref] - model.va_ref]])


def branch_flows(case, x):
    """Complex power entering every branch at its from and to end (p.u.)"""
    model = as_model(case)
    X = as_vector(model, x)
    v = complex_voltage(X.va, X.vm)
    s_from = (model.cf @ v) * np.conj(model.yf @ v)
    s_to = (model.ct @ v) * np.conj(model.yt @ v)
    return s_from, s_to


def inequality_h(case, x) -> np.ndarray:
    """Flow-limit rows |S|^2 - rate^2 for every rated branch, from ends then to ends; h <= 0 is feasible"""
    model = as_model(case)
    if len(model.rated) == 0:
        return np.zeros(0)
    s_from, s_to = branch_flows(model, x)
    limit = model.rate_pu ** 2
    return np.concatenate([
        np.abs(s_from[model.rated]) ** 2 - limit,
        np.abs(s_to[model.rated]) ** 2 - limit,
    ])


def full_inequality(case, x):
    """All enforced inequality rows and their Jacobian, in the order shared by solver and losses

    Rows: flow limits, then finite upper bounds (x - x_max), then finite lower bounds (x_min - x).
    """
    from pfmath.derivatives import flow_jacobian

    model = as_model(case)
    flat = as_vector(model, x).flatten()
    bounds = model.bounds
    upper, lower = bounds.upper_rows, bounds.lower_rows
    n_x = len(flat)

    h = np.concatenate([
        inequality_h(model, flat),
        flat[upper] - bounds.x_max[upper],
        bounds.x_min[lower] - flat[lower],
    ])
    selector_upper = sparse.csr_matrix((np.ones(len(upper)), (np.arange(len(upper)), upper)),
                                       shape=(len(upper), n_x))
    selector_lower = sparse.csr_matrix((-np.ones(len(lower)), (np.arange(len(lower)), lower)),
                                       shape=(len(lower), n_x))
    jh = sparse.vstack([flow_jacobian(model, flat), selector_upper, selector_lower]).tocsr()
    return h, jh


def _poly_terms(model: NetworkModel, pg):
    p_mw = np.asarray(pg) * model.base_mva
    coefficients = model.cost
    degree = coefficients.shape[1] - 1
    powers = degree - np.arange(degree + 1)
    return p_mw, coefficients, powers


def cost_f(case, x) -> float:
    """Total generation cost in $/hr with Pg converted to MW inside each polynomial"""
    model = as_model(case)
    X = as_vector(model, x)
    p_mw, coefficients, powers = _poly_terms(model, X.pg)
    return float(np.sum(coefficients * p_mw[:, None] ** powers[None, :]))


def grad_f(case, x) -> np.ndarray:
    """Cost gradient over the flattened vector; only the pg block is nonzero"""
    model = as_model(case)
    X = as_vector(model, x)
    p_mw, coefficients, powers = _poly_terms(model, X.pg)
    reduced = np.maximum(powers - 1, 0)
    dpoly = np.sum(coefficients * powers[None, :] * p_mw[:, None] ** reduced[None, :], axis=1)
    gradient = np.zeros(2 * model.n_bus + 2 * model.n_gen)
    gradient[2 * model.n_bus:2 * model.n_bus + model.n_gen] = dpoly * model.base_mva
    return gradient


def hess_f(case, x) -> sparse.csr_matrix:
    """Cost Hessian; diagonal in the pg block and scaled by base_mva squared"""
    model = as_model(case)
    X = as_vector(model, x)
    p_mw, coefficients, powers = _poly_terms(model, X.pg)
    reduced = np.maximum(powers - 2, 0)
    d2poly = np.sum(coefficients * (powers * (powers - 1))[None, :] * p_mw[:, None] ** reduced[None, :], axis=1)
    n_x = 2 * model.n_bus + 2 * model.n_gen
    diagonal = np.zeros(n_x)
    diagonal[2 * model.n_bus:2 * model.n_bus + model.n_gen] = d2poly * model.base_mva ** 2
    return sparse.diags(diagonal).tocsr()
