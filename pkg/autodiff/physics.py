"""Power-flow functions written with tape ops, complex arithmetic expanded into real parts"""
import numpy as np

from autodiff import ops
from autodiff.tape import Tensor


def rectangular(va: Tensor, vm: Tensor):
    """Real and imaginary bus voltages"""
    return ops.mul(vm, ops.cos(va)), ops.mul(vm, ops.sin(va))


def _apply_complex(matrix, vr: Tensor, vi: Tensor):
    """Rows of matrix @ (vr + j vi) as (real, imag) tensors"""
    real, imag = matrix.real.tocsr(), matrix.imag.tocsr()
    out_r = ops.sparse_matmul(vr, real) - ops.sparse_matmul(vi, imag)
    out_i = ops.sparse_matmul(vr, imag) + ops.sparse_matmul(vi, real)
    return out_r, out_i


def _power(vr: Tensor, vi: Tensor, ir: Tensor, ii: Tensor):
    """S = V conj(I) split into P and Q"""
    p = ops.mul(vr, ir) + ops.mul(vi, ii)
    q = ops.mul(vi, ir) - ops.mul(vr, ii)
    return p, q


def ac_residual(pd, qd, va: Tensor, vm: Tensor, pg: Tensor, qg: Tensor, ybus, cg):
    """Active and reactive balance residuals per bus: network consumption + load - generation

    All quantities per-unit and batch-major; cg maps in-service generators to buses.
    """
    vr, vi = rectangular(va, vm)
    ir, ii = _apply_complex(ybus, vr, vi)
    p_bus, q_bus = _power(vr, vi, ir, ii)
    cg = cg.tocsr()
    p = p_bus + pd - ops.sparse_matmul(pg, cg)
    q = q_bus + qd - ops.sparse_matmul(qg, cg)
    return p, q


def flow_h(va: Tensor, vm: Tensor, yf, yt, cf, ct, rates) -> Tensor:
    """|S|^2 - rate^2 for the given branch rows, from ends first; negative means within limit"""
    vr, vi = rectangular(va, vm)
    limit = np.asarray(rates, dtype=float) ** 2
    ends = []
    for ybr, cbr in ((yf, cf), (yt, ct)):
        ir, ii = _apply_complex(ybr, vr, vi)
        v_end_r = ops.sparse_matmul(vr, cbr.tocsr())
        v_end_i = ops.sparse_matmul(vi, cbr.tocsr())
        p, q = _power(v_end_r, v_end_i, ir, ii)
        ends.append(ops.square(p) + ops.square(q) - limit)
    return ops.concat(ends, axis=-1)


def cost_poly(pg: Tensor, coefficients, base_mva: float) -> Tensor:
    """Total cost per sample in $/hr; coefficients are highest order first, one row per generator"""
    coefficients = np.asarray(coefficients, dtype=float)
    p_mw = ops.scale(pg, base_mva)
    if coefficients.shape[1] == 1:
        return ops.rowsum(ops.mul(p_mw, 0.0) + coefficients[:, 0])
    value = ops.mul(p_mw, coefficients[:, 0]) + coefficients[:, 1]
    for k in range(2, coefficients.shape[1]):
        value = ops.mul(value, p_mw) + coefficients[:, k]
    return ops.rowsum(value)
