import numpy as np
from scipy import sparse

from grid.network import NetworkModel
from pfmath.power import as_model, as_vector, complex_voltage, hess_f


def _diag(values) -> sparse.csr_matrix:
    return sparse.diags(np.asarray(values)).tocsr()


def dSbus_dV(ybus, va, vm):
    """Partial derivatives of bus injections with respect to angle and magnitude"""
    v = complex_voltage(va, vm)
    unit = np.exp(1j * np.asarray(va))
    current = ybus @ v
    diag_v = _diag(v)
    diag_unit = _diag(unit)
    ds_dvm = diag_v @ (ybus @ diag_unit).conj() + _diag(np.conj(current)) @ diag_unit
    ds_dva = 1j * diag_v @ (_diag(current) - ybus @ diag_v).conj()
    return ds_dva.tocsr(), ds_dvm.tocsr()


def dSbr_dV(ybr, cbr, va, vm):
    """Partial derivatives of branch-end power flows; ybr and cbr hold only the rows of interest"""
    v = complex_voltage(va, vm)
    unit = np.exp(1j * np.asarray(va))
    current = ybr @ v
    v_end = cbr @ v
    conj_current = _diag(np.conj(current))

    ds_dva = 1j * (conj_current @ _diag(v_end) @ cbr - _diag(v_end) @ (ybr @ _diag(v)).conj())
    ds_dvm = _diag(v_end) @ (ybr @ _diag(unit)).conj() + conj_current @ _diag(cbr @ unit) @ cbr
    flows = v_end * np.conj(current)
    return ds_dva.tocsr(), ds_dvm.tocsr(), flows


def dAbr_dV(ds_dva, ds_dvm, flows):
    """Derivatives of squared apparent power |S|^2 from the complex flow derivatives"""
    dp = _diag(2 * flows.real)
    dq = _diag(2 * flows.imag)
    da_dva = dp @ ds_dva.real + dq @ ds_dva.imag
    da_dvm = dp @ ds_dvm.real + dq @ ds_dvm.imag
    return da_dva.tocsr(), da_dvm.tocsr()


def jacobians(case, x):
    """Equality Jacobian Jg (n_eq x n_x) and flow-limit Jacobian Jh (n_flow x n_x)"""
    model = as_model(case)
    return equality_jacobian(model, x), flow_jacobian(model, x)


def equality_jacobian(model: NetworkModel, x) -> sparse.csr_matrix:
    X = as_vector(model, x)
    nb, ng = model.n_bus, model.n_gen
    ds_dva, ds_dvm = dSbus_dV(model.ybus, X.va, X.vm)
    cg = model.cg_on

    ref_row = sparse.csr_matrix(([1.0], ([0], [model.ref])), shape=(1, 2 * nb + 2 * ng))
    jg = sparse.vstack([
        sparse.hstack([ds_dva.real, ds_dvm.real, -cg, sparse.csr_matrix((nb, ng))]),
        sparse.hstack([ds_dva.imag, ds_dvm.imag, sparse.csr_matrix((nb, ng)), -cg]),
        ref_row,
    ]).tocsr()
    return jg


def flow_jacobian(model: NetworkModel, x) -> sparse.csr_matrix:
    X = as_vector(model, x)
    nb, ng = model.n_bus, model.n_gen
    n_x = 2 * nb + 2 * ng
    rated = model.rated
    if len(rated) == 0:
        return sparse.csr_matrix((0, n_x))

    blocks = []
    for ybr, cbr in ((model.yf[rated], model.cf[rated]), (model.yt[rated], model.ct[rated])):
        da_dva, da_dvm = dAbr_dV(*dSbr_dV(ybr, cbr, X.va, X.vm))
        blocks.append(sparse.hstack([da_dva, da_dvm, sparse.csr_matrix((len(rated), 2 * ng))]))
    return sparse.vstack(blocks).tocsr()


def d2Sbus_dV2(ybus, va, vm, lam):
    """Second derivatives of lam^T S_bus, returned as the (aa, av, va, vv) blocks"""
    v = complex_voltage(va, vm)
    current = ybus @ v
    diag_v = _diag(v)

    a = _diag(lam * v)
    b = ybus @ diag_v
    c = a @ b.conj()
    d = ybus.conj().T @ diag_v
    e = _diag(np.conj(v)) @ (d @ _diag(lam) - _diag(d @ lam))
    f = c - a @ _diag(np.conj(current))
    g = _diag(1.0 / np.abs(v))

    gaa = e + f
    gva = 1j * g @ (e - f)
    gav = gva.T
    gvv = g @ (c + c.T) @ g
    return gaa, gav, gva, gvv


def d2Sbr_dV2(cbr, ybr, va, vm, lam):
    """Second derivatives of lam^T S_branch with respect to voltage angle and magnitude"""
    v = complex_voltage(va, vm)
    diag_v = _diag(v)

    a = ybr.conj().T @ _diag(lam) @ cbr
    b = _diag(np.conj(v)) @ a @ diag_v
    d = _diag((a @ v) * np.conj(v))
    e = _diag((a.T @ np.conj(v)) * v)
    f = b + b.T
    g = _diag(1.0 / np.abs(v))

    haa = f - d - e
    hva = 1j * g @ (b - b.T - d + e)
    hav = hva.T
    hvv = g @ f @ g
    return haa, hav, hva, hvv


def d2ASbr_dV2(ds_dva, ds_dvm, flows, cbr, ybr, va, vm, mu):
    """Second derivatives of mu^T |S_branch|^2"""
    weighted = np.conj(flows) * mu
    saa, sav, sva, svv = d2Sbr_dV2(cbr, ybr, va, vm, weighted)
    diag_mu = _diag(mu)
    haa = 2 * (saa + ds_dva.T @ diag_mu @ ds_dva.conj()).real
    hva = 2 * (sva + ds_dvm.T @ diag_mu @ ds_dva.conj()).real
    hav = 2 * (sav + ds_dva.T @ diag_mu @ ds_dvm.conj()).real
    hvv = 2 * (svv + ds_dvm.T @ diag_mu @ ds_dvm.conj()).real
    return haa, hav, hva, hvv


def _voltage_block(aa, av, va, vv, n_gen: int) -> sparse.csr_matrix:
    voltage = sparse.bmat([[aa, av], [va, vv]], format="csr")
    if not n_gen:
        return voltage
    return sparse.block_diag([voltage, sparse.csr_matrix((2 * n_gen, 2 * n_gen))], format="csr")


def hess_lagrangian(case, x, lam, mu, cost_mult: float = 1.0) -> sparse.csr_matrix:
    """Hessian of f + lam^T g + mu^T h over the flattened vector

    mu may cover the full inequality set or just the flow rows; bound rows are
    linear and add no curvature.
    """
    model = as_model(case)
    X = as_vector(model, x)
    nb, ng = model.n_bus, model.n_gen
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)

    p = d2Sbus_dV2(model.ybus, X.va, X.vm, lam[:nb])
    q = d2Sbus_dV2(model.ybus, X.va, X.vm, lam[nb:2 * nb])
    d2g = _voltage_block(*[bp.real + bq.imag for bp, bq in zip(p, q)], n_gen=ng)

    hessian = hess_f(model, X) * cost_mult + d2g
    rated = model.rated
    if len(rated):
        n_rated = len(rated)
        mu_from, mu_to = mu[:n_rated], mu[n_rated:2 * n_rated]
        total = None
        for ybr, cbr, weights in ((model.yf[rated], model.cf[rated], mu_from),
                                  (model.yt[rated], model.ct[rated], mu_to)):
            ds_dva, ds_dvm, flows = dSbr_dV(ybr, cbr, X.va, X.vm)
            blocks = d2ASbr_dV2(ds_dva, ds_dvm, flows, cbr, ybr, X.va, X.vm, weights)
            total = blocks if total is None else tuple(t + b for t, b in zip(total, blocks))
        hessian = hessian + _voltage_block(*total, n_gen=ng)
    return sparse.csr_matrix(hessian)
