import logging
import time
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse.linalg import splu

from pfmath.derivatives import equality_jacobian, hess_lagrangian
from pfmath.power import as_model, cost_f, full_inequality, grad_f, residual_g
from solver.options import IpmOptions
from solver.state import IterationRecord, OpfPoint, PrimalDualState, SolveReport, WarmStart
from utils.errors import NumericalFailure

logger = logging.getLogger(__name__)

EPS = np.finfo(float).eps
# stand-in for an infinite generator bound when picking a midpoint start
INFINITE_SURROGATE = 10.0


@dataclass
class Evaluation:
    """Objective, constraints and first derivatives at one x, cost already scaled"""
    f: float
    df: np.ndarray
    g: np.ndarray
    h: np.ndarray
    jg: sparse.csr_matrix
    jh: sparse.csr_matrix

    def lagrangian_gradient(self, lam, mu) -> np.ndarray:
        return self.df + self.jg.T @ lam + self.jh.T @ mu


class Conditions(NamedTuple):
    feascond: float
    gradcond: float
    compcond: float
    costcond: float
    converged: bool

    def to_dict(self) -> dict:
        return self._asdict()


class NewtonStep(NamedTuple):
    dx: np.ndarray
    dlam: np.ndarray
    dmu: np.ndarray
    dz: np.ndarray


def evaluate(model, x, cost_mult: float) -> Evaluation:
    jg = equality_jacobian(model, x)
    h, jh = full_inequality(model, x)
    return Evaluation(
        f=cost_f(model, x) * cost_mult,
        df=grad_f(model, x) * cost_mult,
        g=residual_g(model, x),
        h=h,
        jg=jg,
        jh=jh,
    )


def _inf_norm(values) -> float:
    return float(np.max(np.abs(values))) if len(values) else 0.0


def _conditions(ev: Evaluation, state: PrimalDualState, f_prev: Optional[float], opts: IpmOptions) -> Conditions:
    max_h = float(np.max(ev.h)) if len(ev.h) else 0.0
    feascond = max(_inf_norm(ev.g), max_h) / (1 + max(_inf_norm(state.x), _inf_norm(state.z)))
    gradcond = _inf_norm(ev.lagrangian_gradient(state.lam, state.mu)) / (
        1 + max(_inf_norm(state.lam), _inf_norm(state.mu)))
    compcond = float(state.z @ state.mu) / (1 + _inf_norm(state.x))
    costcond = 0.0 if f_prev is None else abs(ev.f - f_prev) / (1 + abs(f_prev))
    converged = (feascond < opts.feastol and gradcond < opts.gradtol
                 and compcond < opts.comptol and costcond < opts.costtol)
    return Conditions(feascond, gradcond, compcond, costcond, converged)


def check_convergence(case, state: PrimalDualState, f_prev: Optional[float] = None,
                      opts: Optional[IpmOptions] = None) -> Conditions:
    """The four scaled termination conditions at a state; f_prev is in solver (scaled) units"""
    opts = opts or IpmOptions()
    model = as_model(case)
    return _conditions(evaluate(model, state.x, opts.cost_mult), state, f_prev, opts)


def cold_start(case, opts: Optional[IpmOptions] = None) -> PrimalDualState:
    """Default interior starting point: bound midpoints, flat angles, unit slacks"""
    opts = opts or IpmOptions()
    model = as_model(case)
    bounds = model.bounds
    low = np.where(np.isfinite(bounds.x_min), bounds.x_min, -INFINITE_SURROGATE)
    high = np.where(np.isfinite(bounds.x_max), bounds.x_max, INFINITE_SURROGATE)
    x = (low + high) / 2
    x[:model.n_bus] = model.va_ref

    h, _ = full_inequality(model, x)
    z = np.full(len(h), opts.z0)
    deep = h < -opts.z0
    z[deep] = -h[deep]
    return PrimalDualState(
        x=x,
        lam=np.zeros(model.dims.n_eq),
        mu=opts.gamma0 / z,
        z=z,
        gamma=opts.gamma0,
    )


def apply_warm_start(cold: PrimalDualState, ws: Optional[WarmStart],
                     opts: Optional[IpmOptions] = None) -> PrimalDualState:
    """Replace the cold defaults by whatever the warm start provides and restore interiority"""
    opts = opts or IpmOptions()
    state = cold.copy()
    if ws is None or ws.is_empty():
        return state
    ws.validate(len(cold.x), len(cold.lam), len(cold.z))

    if ws.x is not None:
        state.x = np.asarray(ws.x, dtype=float).copy()
    if ws.lam is not None:
        state.lam = np.asarray(ws.lam, dtype=float).copy()
    if ws.z is not None:
        state.z = np.maximum(np.asarray(ws.z, dtype=float), opts.z_floor)
    if ws.mu is not None:
        state.mu = np.maximum(np.asarray(ws.mu, dtype=float), 0.0)
    if ws.z is not None:
        dead = state.mu <= 0
        state.mu[dead] = opts.gamma0 / state.z[dead]

    n_ineq = len(state.z)
    if ws.z is not None and ws.mu is not None and n_ineq:
        gamma = opts.sigma * float(state.z @ state.mu) / n_ineq
        if np.isfinite(gamma) and gamma > 0:
            state.gamma = gamma
    return state


def _factorize_and_solve(kkt: sparse.spmatrix, rhs: np.ndarray) -> np.ndarray:
    try:
        solution = splu(kkt.tocsc()).solve(rhs)
    except RuntimeError as e:
        raise NumericalFailure(f"KKT matrix is singular: {e}")
    if not np.all(np.isfinite(solution)):
        raise NumericalFailure("KKT solve produced non-finite values")
    return solution


def _recover(ev: Evaluation, state: PrimalDualState, dx: np.ndarray):
    dz = -ev.h - state.z - ev.jh @ dx
    dmu = -state.mu + (state.gamma - state.mu * dz) / state.z
    return dz, dmu


def newton_step(case, state: PrimalDualState, opts: Optional[IpmOptions] = None,
                ev: Optional[Evaluation] = None) -> NewtonStep:
    """Solve the reduced KKT system for (dx, dlam), then recover dz from dx and dmu from dz"""
    opts = opts or IpmOptions()
    model = as_model(case)
    ev = ev or evaluate(model, state.x, opts.cost_mult)
    n_x, n_eq = len(state.x), len(state.lam)

    hessian = hess_lagrangian(model, state.x, state.lam, state.mu, cost_mult=opts.cost_mult)
    weighted = ev.jh.T @ sparse.diags(state.mu / state.z)
    m = hessian + weighted @ ev.jh
    n = ev.lagrangian_gradient(state.lam, state.mu) + ev.jh.T @ (
        (state.mu * ev.h + state.gamma) / state.z)

    kkt = sparse.bmat([[m, ev.jg.T], [ev.jg, sparse.csr_matrix((n_eq, n_eq))]], format="csc")
    solution = _factorize_and_solve(kkt, np.concatenate([-n, -ev.g]))
    dx, dlam = solution[:n_x], solution[n_x:]
    dz, dmu = _recover(ev, state, dx)
    return NewtonStep(dx, dlam, dmu, dz)


def step_lengths(state: PrimalDualState, dz, dmu, xi: float = 0.99995) -> Tuple[float, float]:
    """Fraction-to-boundary step lengths keeping z and mu strictly positive"""
    def boundary(values, direction):
        shrinking = direction < 0
        if not np.any(shrinking):
            return 1.0
        return float(min(1.0, xi * np.min(values[shrinking] / -direction[shrinking])))

    return boundary(state.z, np.asarray(dz)), boundary(state.mu, np.asarray(dmu))


def _residual_norm(ev: Evaluation, lam, mu) -> float:
    return max(_inf_norm(ev.lagrangian_gradient(lam, mu)), _inf_norm(ev.g))


def _backtrack(model, state: PrimalDualState, ev: Evaluation, step: NewtonStep, opts: IpmOptions) -> NewtonStep:
    """Halve dx while the Lagrangian residual grows, then recompute dz and dmu"""
    current = _residual_norm(ev, state.lam, state.mu)
    alpha = 1.0
    for _ in range(opts.max_reductions):
        trial = evaluate(model, state.x + alpha * step.dx, opts.cost_mult)
        if _residual_norm(trial, state.lam, state.mu) <= current:
            break
        alpha /= 2
    if alpha == 1.0:
        return step
    logger.debug(f"🔄 Step control reduced dx by {alpha}")
    dx = alpha * step.dx
    dz, dmu = _recover(ev, state, dx)
    return NewtonStep(dx, step.dlam, dmu, dz)


def _failure(state: PrimalDualState, alpha_p: float, alpha_d: float, opts: IpmOptions) -> Optional[str]:
    if not (np.all(np.isfinite(state.x)) and np.all(np.isfinite(state.z)) and np.all(np.isfinite(state.mu))):
        return "non-finite iterate"
    if alpha_p < opts.alpha_min or alpha_d < opts.alpha_min:
        return f"step length below {opts.alpha_min} (alpha_p={alpha_p:.3g}, alpha_d={alpha_d:.3g})"
    if state.gamma < EPS or state.gamma > 1 / EPS:
        return f"barrier parameter out of range ({state.gamma:.3g})"
    return None


def solve(case, ws: Optional[WarmStart] = None, opts: Optional[IpmOptions] = None) -> Tuple[OpfPoint, SolveReport]:
    """Run the primal-dual interior-point method, optionally from a warm start"""
    opts = opts or IpmOptions()
    model = as_model(case)
    started = time.perf_counter()

    state = apply_warm_start(cold_start(model, opts), ws, opts)
    n_ineq = len(state.z)
    histories = []
    failure = None

    ev = evaluate(model, state.x, opts.cost_mult)
    conditions = _conditions(ev, state, None, opts)
    initial = conditions.to_dict()
    f_prev = None
    iteration = 0

    while not conditions.converged and iteration < opts.max_iterations:
        iteration += 1
        try:
            step = newton_step(model, state, opts, ev)
            if opts.step_control:
                step = _backtrack(model, state, ev, step, opts)
        except NumericalFailure as e:
            iteration -= 1
            failure = str(e)
            break
        if not (np.all(np.isfinite(step.dz)) and np.all(np.isfinite(step.dmu))):
            iteration -= 1
            failure = "non-finite Newton step"
            break

        alpha_p, alpha_d = step_lengths(state, step.dz, step.dmu, opts.xi)
        # x and lam move first, then z, then mu
        state.x = state.x + alpha_p * step.dx
        state.lam = state.lam + alpha_d * step.dlam
        state.z = state.z + alpha_p * step.dz
        state.mu = state.mu + alpha_d * step.dmu
        if n_ineq:
            state.gamma = opts.sigma * float(state.z @ state.mu) / n_ineq

        ev = evaluate(model, state.x, opts.cost_mult)
        conditions = _conditions(ev, state, f_prev, opts)
        histories.append(IterationRecord(
            iteration=iteration,
            feascond=conditions.feascond,
            gradcond=conditions.gradcond,
            compcond=conditions.compcond,
            costcond=conditions.costcond,
            step_norm=float(np.linalg.norm(step.dx)),
            gamma=state.gamma,
            alpha_p=alpha_p,
            alpha_d=alpha_d,
            objective=ev.f / opts.cost_mult,
        ))
        logger.debug(
            f"it {iteration:3d}  feas {conditions.feascond:.3e}  grad {conditions.gradcond:.3e}  "
            f"comp {conditions.compcond:.3e}  cost {conditions.costcond:.3e}  gamma {state.gamma:.3e}")

        if conditions.converged:
            break
        failure = _failure(state, alpha_p, alpha_d, opts)
        if failure:
            break
        f_prev = ev.f

    converged = conditions.converged and failure is None
    if not converged and failure is None:
        failure = f"iteration limit {opts.max_iterations} reached"

    point = OpfPoint(
        x=state.x, lam=state.lam, mu=state.mu, z=state.z,
        objective=ev.f / opts.cost_mult, cost_mult=opts.cost_mult,
    )
    report = SolveReport(
        converged=converged,
        iterations=iteration,
        objective=point.objective,
        histories=histories,
        wall_time=time.perf_counter() - started,
        failure_reason=None if converged else failure,
        initial_conditions=initial,
    )
    if converged:
        logger.info(f"✅ {model.case.name}: converged in {iteration} iterations, cost {point.objective:.4f}")
    else:
        logger.info(f"❌ {model.case.name}: no convergence after {iteration} iterations ({failure})")
    return point, report


def solve_with_fallback(case, ws: Optional[WarmStart] = None,
                        opts: Optional[IpmOptions] = None) -> Tuple[OpfPoint, SolveReport]:
    """Solve from the warm start and rerun from the cold start if that fails"""
    point, report = solve(case, ws, opts)
    if report.converged or ws is None or ws.is_empty():
        return point, report

    logger.warning(f"⚠️ Warm start failed after {report.iterations} iterations, falling back to a cold start")
    cold_point, cold_report = solve(case, None, opts)
    cold_report.fallback_used = True
    cold_report.wall_time += report.wall_time
    cold_report.prior_iterations = report.iterations
    cold_report.prior_wall_time = report.wall_time
    return cold_point, cold_report


def export_history_csv(report: SolveReport, path):
    """Write the per-iteration condition history as CSV"""
    columns = ["iter", "feascond", "gradcond", "compcond", "costcond", "step_norm", "gamma", "alpha_p", "alpha_d"]
    rows = [{key: record.to_dict()[key] for key in columns} for record in report.histories]
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False)
