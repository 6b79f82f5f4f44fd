from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import sparse

from grid.models import GridCase
from pfmath.vector import BoundsSpec, build_bounds


def build_ybus(case: GridCase):
    """Bus admittance matrix and branch from/to admittance matrices (complex CSR)

    Uses the standard pi model with an ideal phase-shifting transformer at the
    from end. Out-of-service branches contribute nothing.
    """
    n, nl = case.n_bus, case.n_branch
    index = case.bus_index()
    f = np.array([index[br.from_bus] for br in case.branches], dtype=int)
    t = np.array([index[br.to_bus] for br in case.branches], dtype=int)

    status = np.array([br.status for br in case.branches], dtype=float)
    z = np.array([complex(br.r, br.x) for br in case.branches])
    ys = np.zeros(nl, dtype=complex)
    live = status > 0
    ys[live] = 1.0 / z[live]
    bc = status * np.array([br.b for br in case.branches], dtype=float)
    tap = np.array([br.ratio * np.exp(1j * np.deg2rad(br.shift)) for br in case.branches], dtype=complex)

    ytt = ys + 1j * bc / 2
    yff = ytt / (tap * np.conj(tap))
    yft = -ys / np.conj(tap)
    ytf = -ys / tap

    ysh = np.array([complex(bus.gs, bus.bs) for bus in case.buses]) / case.base_mva

    rows = np.concatenate([np.arange(nl), np.arange(nl)])
    yf = sparse.csr_matrix((np.concatenate([yff, yft]), (rows, np.concatenate([f, t]))), shape=(nl, n))
    yt = sparse.csr_matrix((np.concatenate([ytf, ytt]), (rows, np.concatenate([f, t]))), shape=(nl, n))

    cf, ct = branch_connections(case)
    ybus = (cf.T @ yf + ct.T @ yt + sparse.diags(ysh)).tocsr()
    return ybus, yf, yt


def branch_connections(case: GridCase):
    """From-end and to-end connection matrices (n_branch x n_bus)"""
    n, nl = case.n_bus, case.n_branch
    index = case.bus_index()
    f = [index[br.from_bus] for br in case.branches]
    t = [index[br.to_bus] for br in case.branches]
    ones = np.ones(nl)
    cf = sparse.csr_matrix((ones, (np.arange(nl), f)), shape=(nl, n))
    ct = sparse.csr_matrix((ones, (np.arange(nl), t)), shape=(nl, n))
    return cf, ct


def build_cg(case: GridCase):
    """Generator connection matrix (n_bus x n_gen); out-of-service columns stay empty"""
    index = case.bus_index()
    on = case.in_service_gens()
    rows = [index[case.gens[g].bus] for g in on]
    return sparse.csr_matrix((np.ones(len(on)), (rows, on)), shape=(case.n_bus, case.n_gen))


@dataclass(frozen=True)
class Dimensions:
    n_bus: int
    n_gen: int
    n_branch: int
    n_x: int
    n_eq: int
    n_ineq: int
    n_flow: int

    def to_dict(self) -> dict:
        return {
            "n_bus": self.n_bus, "n_gen": self.n_gen, "n_branch": self.n_branch,
            "n_x": self.n_x, "n_eq": self.n_eq, "n_ineq": self.n_ineq, "n_flow": self.n_flow,
        }


def rated_branches(case: GridCase) -> np.ndarray:
    """Indices of in-service branches carrying a flow limit"""
    return np.array([l for l, br in enumerate(case.branches) if br.status and br.rate_a > 0], dtype=int)


def dimensions(case: GridCase) -> Dimensions:
    """Problem dimensions; inequality rows are 2 per rated branch plus every finite bound"""
    bounds = build_bounds(case)
    n_on = len(case.in_service_gens())
    n_flow = 2 * len(rated_branches(case))
    return Dimensions(
        n_bus=case.n_bus,
        n_gen=case.n_gen,
        n_branch=case.n_branch,
        n_x=2 * case.n_bus + 2 * n_on,
        n_eq=2 * case.n_bus + 1,
        n_ineq=n_flow + len(bounds.upper_rows) + len(bounds.lower_rows),
        n_flow=n_flow,
    )


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Everything derived from a case that the smooth functions need, computed once"""
    case: GridCase
    ybus: sparse.csr_matrix
    yf: sparse.csr_matrix
    yt: sparse.csr_matrix
    cf: sparse.csr_matrix
    ct: sparse.csr_matrix
    cg: sparse.csr_matrix
    gen_on: np.ndarray
    rated: np.ndarray
    rate_pu: np.ndarray
    pd: np.ndarray
    qd: np.ndarray
    cost: np.ndarray
    dims: Dimensions
    bounds: BoundsSpec

    @property
    def n_bus(self) -> int:
        return self.case.n_bus

    @property
    def n_gen(self) -> int:
        """Number of in-service generators, the length of pg and qg"""
        return len(self.gen_on)

    @property
    def base_mva(self) -> float:
        return self.case.base_mva

    @property
    def ref(self) -> int:
        return self.case.ref_index

    @property
    def va_ref(self) -> float:
        return float(np.deg2rad(self.case.buses[self.ref].va0))

    @property
    def cg_on(self) -> sparse.csr_matrix:
        return self.cg[:, self.gen_on]

    def with_loads(self, pd_mw, qd_mvar) -> "NetworkModel":
        """Same network with different bus loads; admittances are shared, not rebuilt"""
        return NetworkModel(
            case=self.case.with_loads(pd_mw, qd_mvar),
            ybus=self.ybus, yf=self.yf, yt=self.yt, cf=self.cf, ct=self.ct, cg=self.cg,
            gen_on=self.gen_on, rated=self.rated, rate_pu=self.rate_pu,
            pd=np.asarray(pd_mw, dtype=float) / self.base_mva,
            qd=np.asarray(qd_mvar, dtype=float) / self.base_mva,
            cost=self.cost, dims=self.dims, bounds=self.bounds,
        )


def cost_matrix(case: GridCase, gens) -> np.ndarray:
    """Polynomial coefficients padded to a common degree, highest order first"""
    degree = max((len(case.gens[g].cost) for g in gens), default=1)
    coefficients = np.zeros((len(gens), degree))
    for row, g in enumerate(gens):
        cost = case.gens[g].cost
        coefficients[row, degree - len(cost):] = cost
    return coefficients


@lru_cache(maxsize=32)
def network_model(case: GridCase) -> NetworkModel:
    """Build (or fetch) the derived network model of a case"""
    ybus, yf, yt = build_ybus(case)
    cf, ct = branch_connections(case)
    gen_on = np.array(case.in_service_gens(), dtype=int)
    rated = rated_branches(case)
    return NetworkModel(
        case=case,
        ybus=ybus, yf=yf, yt=yt, cf=cf, ct=ct, cg=build_cg(case),
        gen_on=gen_on,
        rated=rated,
        rate_pu=np.array([case.branches[l].rate_a for l in rated]) / case.base_mva,
        pd=np.array([bus.pd for bus in case.buses]) / case.base_mva,
        qd=np.array([bus.qd for bus in case.buses]) / case.base_mva,
        cost=cost_matrix(case, gen_on),
        dims=dimensions(case),
        bounds=build_bounds(case),
    )
