from dataclasses import dataclass, field
from enum import Enum
from numbers import Real
from typing import List, Tuple

from utils.errors import InvariantError, SchemaError


class BusKind(str, Enum):
    PQ = "pq"
    PV = "pv"
    REF = "ref"

    @classmethod
    def from_matpower(cls, code: int) -> "BusKind":
        """Map a MATPOWER bus type code (1, 2, 3) to a kind"""
        mapping = {1: cls.PQ, 2: cls.PV, 3: cls.REF}
        if code not in mapping:
            raise SchemaError(f"unknown bus type code {code}")
        return mapping[code]


def _number(data: dict, key: str, where: str) -> float:
    if key not in data:
        raise SchemaError(f"{where}: missing field '{key}'")
    value = data[key]
    # bool is an int subclass; a JSON true is never a valid number here
    if isinstance(value, bool) or not isinstance(value, Real):
        raise SchemaError(f"{where}: field '{key}' must be a number, got {type(value).__name__}")
    return float(value)


def _integer(data: dict, key: str, where: str) -> int:
    value = _number(data, key, where)
    if not value.is_integer():
        raise SchemaError(f"{where}: field '{key}' must be an integer, got {value}")
    return int(value)


def _flag(data: dict, key: str, where: str) -> bool:
    if key not in data:
        raise SchemaError(f"{where}: missing field '{key}'")
    value = data[key]
    if isinstance(value, bool):
        return value
    if isinstance(value, Real) and value in (0, 1):
        return bool(value)
    raise SchemaError(f"{where}: field '{key}' must be a boolean")


@dataclass(frozen=True)
class Bus:
    id: int
    kind: BusKind
    pd: float
    qd: float
    gs: float
    bs: float
    vm_min: float
    vm_max: float
    vm0: float = 1.0
    va0: float = 0.0

    def to_dict(self) -> dict:
        """Convert bus to its JSON case representation"""
        return {
            "id": self.id,
            "kind": self.kind.value,
            "pd": self.pd,
            "qd": self.qd,
            "gs": self.gs,
            "bs": self.bs,
            "vm_min": self.vm_min,
            "vm_max": self.vm_max,
            "vm0": self.vm0,
            "va0": self.va0,
        }

    @classmethod
    def from_dict(cls, data: dict, where: str = "bus"):
        """Create bus from its JSON case representation"""
        if not isinstance(data, dict):
            raise SchemaError(f"{where}: expected an object")
        kind = data.get("kind")
        if not isinstance(kind, str):
            raise SchemaError(f"{where}: field 'kind' must be one of pq, pv, ref")
        try:
            bus_kind = BusKind(kind.lower())
        except ValueError:
            raise SchemaError(f"{where}: unknown bus kind '{kind}'")
        return cls(
            id=_integer(data, "id", where),
            kind=bus_kind,
            pd=_number(data, "pd", where),
            qd=_number(data, "qd", where),
            gs=_number(data, "gs", where),
            bs=_number(data, "bs", where),
            vm_min=_number(data, "vm_min", where),
            vm_max=_number(data, "vm_max", where),
            vm0=_number(data, "vm0", where),
            va0=_number(data, "va0", where),
        )


@dataclass(frozen=True)
class Generator:
    bus: int
    pmin: float
    pmax: float
    qmin: float
    qmax: float
    pg0: float
    qg0: float
    status: bool
    cost: Tuple[float, ...]

    def to_dict(self) -> dict:
        """Convert generator to its JSON case representation"""
        return {
            "bus": self.bus,
            "pmin": self.pmin,
            "pmax": self.pmax,
            "qmin": self.qmin,
            "qmax": self.qmax,
            "pg0": self.pg0,
            "qg0": self.qg0,
            "status": self.status,
            "cost": list(self.cost),
        }

    @classmethod
    def from_dict(cls, data: dict, where: str = "gen"):
        """Create generator from its JSON case representation"""
        if not isinstance(data, dict):
            raise SchemaError(f"{where}: expected an object")
        cost = data.get("cost")
        if not isinstance(cost, list) or not cost:
            raise SchemaError(f"{where}: field 'cost' must be a non-empty list of coefficients")
        coefficients = tuple(_number({"c": c}, "c", f"{where}.cost") for c in cost)
        return cls(
            bus=_integer(data, "bus", where),
            pmin=_number(data, "pmin", where),
            pmax=_number(data, "pmax", where),
            qmin=_number(data, "qmin", where),
            qmax=_number(data, "qmax", where),
            pg0=_number(data, "pg0", where),
            qg0=_number(data, "qg0", where),
            status=_flag(data, "status", where),
            cost=coefficients,
        )


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float
    tap: float = 0.0
    shift: float = 0.0
    rate_a: float = 0.0
    status: bool = True

    @property
    def ratio(self) -> float:
        """Off-nominal turns ratio; a zero tap means nominal"""
        return self.tap if self.tap != 0.0 else 1.0

    def to_dict(self) -> dict:
        """Convert branch to its JSON case representation"""
        return {
            "from": self.from_bus,
            "to": self.to_bus,
            "r": self.r,
            "x": self.x,
            "b": self.b,
            "tap": self.tap,
            "shift": self.shift,
            "rate_a": self.rate_a,
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, data: dict, where: str = "branch"):
        """Create branch from its JSON case representation"""
        if not isinstance(data, dict):
            raise SchemaError(f"{where}: expected an object")
        return cls(
            from_bus=_integer(data, "from", where),
            to_bus=_integer(data, "to", where),
            r=_number(data, "r", where),
            x=_number(data, "x", where),
            b=_number(data, "b", where),
            tap=_number(data, "tap", where),
            shift=_number(data, "shift", where),
            rate_a=_number(data, "rate_a", where),
            status=_flag(data, "status", where),
        )


@dataclass(frozen=True)
class GridCase:
    base_mva: float
    buses: Tuple[Bus, ...]
    gens: Tuple[Generator, ...]
    branches: Tuple[Branch, ...]
    name: str = field(default="case", compare=False)

    def __post_init__(self):
        self.validate()

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_gen(self) -> int:
        return len(self.gens)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    def bus_index(self) -> dict:
        """Map bus id to its position in the bus list"""
        return {bus.id: i for i, bus in enumerate(self.buses)}

    @property
    def ref_index(self) -> int:
        return next(i for i, bus in enumerate(self.buses) if bus.kind is BusKind.REF)

    def in_service_gens(self) -> List[int]:
        return [g for g, gen in enumerate(self.gens) if gen.status]

    def validate(self):
        """Check every network invariant, raising InvariantError on the first violation"""
        if not self.base_mva > 0:
            raise InvariantError(f"base_mva must be positive, got {self.base_mva}")
        if not self.buses:
            raise InvariantError("case has no buses")

        seen = set()
        for bus in self.buses:
            if bus.id in seen:
                raise InvariantError(f"duplicate bus id {bus.id}")
            seen.add(bus.id)
            if not bus.vm_min > 0:
                raise InvariantError(f"bus {bus.id}: vm_min must be positive")
            if bus.vm_min > bus.vm_max:
                raise InvariantError(f"bus {bus.id}: vm_min exceeds vm_max")

        refs = [bus.id for bus in self.buses if bus.kind is BusKind.REF]
        if len(refs) != 1:
            raise InvariantError(f"case must have exactly one REF bus, found {len(refs)}")

        for g, gen in enumerate(self.gens):
            if gen.bus not in seen:
                raise InvariantError(f"generator {g} references unknown bus {gen.bus}")
            if gen.pmin > gen.pmax:
                raise InvariantError(f"generator {g}: pmin exceeds pmax")
            if gen.qmin > gen.qmax:
                raise InvariantError(f"generator {g}: qmin exceeds qmax")
            if len(gen.cost) < 1:
                raise InvariantError(f"generator {g}: cost needs at least one coefficient")

        for l, branch in enumerate(self.branches):
            if branch.from_bus not in seen or branch.to_bus not in seen:
                raise InvariantError(
                    f"branch {l} references unknown bus {branch.from_bus}->{branch.to_bus}")
            if branch.from_bus == branch.to_bus:
                raise InvariantError(f"branch {l} connects bus {branch.from_bus} to itself")
            if branch.status and branch.x == 0.0:
                raise InvariantError(f"branch {l}: in-service branch with zero reactance")

    def with_loads(self, pd, qd) -> "GridCase":
        """Copy of the case with bus loads replaced (MW / MVAr)"""
        buses = tuple(
            Bus(bus.id, bus.kind, float(p), float(q), bus.gs, bus.bs,
                bus.vm_min, bus.vm_max, bus.vm0, bus.va0)
            for bus, p, q in zip(self.buses, pd, qd)
        )
        return GridCase(self.base_mva, buses, self.gens, self.branches, self.name)

    def to_dict(self) -> dict:
        """Convert case to the native JSON schema"""
        return {
            "base_mva": self.base_mva,
            "buses": [bus.to_dict() for bus in self.buses],
            "gens": [gen.to_dict() for gen in self.gens],
            "branches": [branch.to_dict() for branch in self.branches],
        }

    @classmethod
    def from_dict(cls, data: dict, name: str = "case"):
        """Create case from the native JSON schema"""
        if not isinstance(data, dict):
            raise SchemaError("case: top level must be an object")
        for key in ("buses", "gens", "branches"):
            if not isinstance(data.get(key), list):
                raise SchemaError(f"case: field '{key}' must be a list")
        return cls(
            base_mva=_number(data, "base_mva", "case"),
            buses=tuple(Bus.from_dict(b, f"buses[{i}]") for i, b in enumerate(data["buses"])),
            gens=tuple(Generator.from_dict(g, f"gens[{i}]") for i, g in enumerate(data["gens"])),
            branches=tuple(Branch.from_dict(b, f"branches[{i}]") for i, b in enumerate(data["branches"])),
            name=name,
        )
