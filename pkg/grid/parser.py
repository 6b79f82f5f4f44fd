import json
import logging
import re
from pathlib import Path
from typing import List, Optional

from grid.models import Branch, Bus, BusKind, Generator, GridCase
from utils.errors import SchemaError, UnsupportedFormatError

logger = logging.getLogger(__name__)

# MATPOWER column positions
BUS_I, BUS_TYPE, PD, QD, GS, BS, VM, VA, VMAX, VMIN = 0, 1, 2, 3, 4, 5, 7, 8, 11, 12
GEN_BUS, PG, QG, QMAX, QMIN, GEN_STATUS, PMAX, PMIN = 0, 1, 2, 3, 4, 7, 8, 9
F_BUS, T_BUS, BR_R, BR_X, BR_B, RATE_A, TAP, SHIFT, BR_STATUS = 0, 1, 2, 3, 4, 5, 8, 9, 10
MODEL, NCOST, COST = 0, 3, 4
POLYNOMIAL = 2

_SCALAR = re.compile(r"mpc\.baseMVA\s*=\s*([^;\n]+);")
_MATRIX = re.compile(r"mpc\.(bus|gen|branch|gencost)\s*=\s*\[")
_NUMBER = re.compile(r"^[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?$")


def parse_case_json(text: str, name: str = "case") -> GridCase:
    """Parse the native JSON case schema into a validated GridCase"""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"case JSON is not parseable: {e}")
    return GridCase.from_dict(data, name=name)


def serialize_case(case: GridCase) -> str:
    """Write a GridCase in the native JSON schema"""
    return json.dumps(case.to_dict(), indent=2)


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("%", 1)[0] for line in text.splitlines())


def _parse_entry(token: str, where: str) -> float:
    lowered = token.lower()
    if lowered in ("inf", "+inf"):
        return float("inf")
    if lowered == "-inf":
        return float("-inf")
    if not _NUMBER.match(token):
        raise SchemaError(f"mpc.{where}: non-numeric matrix entry '{token}'")
    return float(token)


def _parse_matrix(body: str, where: str) -> List[List[float]]:
    rows = []
    for raw in re.split(r"[;\n]", body):
        tokens = [t for t in re.split(r"[\s,]+", raw.strip()) if t]
        if tokens:
            rows.append([_parse_entry(t, where) for t in tokens])
    if rows and len({len(r) for r in rows}) != 1:
        raise SchemaError(f"mpc.{where}: rows have differing column counts")
    return rows


def _extract_matrices(text: str) -> dict:
    matrices = {}
    for match in _MATRIX.finditer(text):
        key = match.group(1)
        end = text.find("]", match.end())
        if end < 0:
            raise SchemaError(f"mpc.{key}: matrix literal is not closed")
        matrices[key] = _parse_matrix(text[match.end():end], key)
    return matrices


def _require_columns(rows: List[List[float]], count: int, where: str):
    if rows and len(rows[0]) < count:
        raise SchemaError(f"mpc.{where}: expected at least {count} columns, got {len(rows[0])}")


def case_from_matrices(base_mva: float, bus, gen, branch, gencost, name: str = "case") -> GridCase:
    """Build a GridCase from MATPOWER-layout numeric rows"""
    bus = [list(map(float, row)) for row in bus]
    gen = [list(map(float, row)) for row in gen]
    branch = [list(map(float, row)) for row in branch]
    gencost = [list(map(float, row)) for row in gencost]
    _require_columns(bus, VMIN + 1, "bus")
    _require_columns(gen, PMIN + 1, "gen")
    _require_columns(branch, BR_STATUS + 1, "branch")
    _require_columns(gencost, COST, "gencost")

    if len(gencost) < len(gen):
        raise SchemaError(f"mpc.gencost: {len(gencost)} rows for {len(gen)} generators")
    if len(gencost) > len(gen):
        logger.warning(f"⚠️ Ignoring {len(gencost) - len(gen)} reactive cost rows in {name}")

    buses = []
    for row in bus:
        code = int(row[BUS_TYPE])
        if code == 4:
            raise UnsupportedFormatError(f"bus {int(row[BUS_I])}: isolated buses (type 4) are not supported")
        buses.append(Bus(
            id=int(row[BUS_I]), kind=BusKind.from_matpower(code),
            pd=row[PD], qd=row[QD], gs=row[GS], bs=row[BS],
            vm_min=row[VMIN], vm_max=row[VMAX], vm0=row[VM], va0=row[VA],
        ))

    gens = []
    for g, (row, cost_row) in enumerate(zip(gen, gencost)):
        if int(cost_row[MODEL]) != POLYNOMIAL:
            raise UnsupportedFormatError(
                f"gencost row {g}: model {int(cost_row[MODEL])} is not supported (polynomial model 2 only)")
        n = int(cost_row[NCOST])
        coefficients = cost_row[COST:COST + n]
        if n < 1 or len(coefficients) != n:
            raise SchemaError(f"gencost row {g}: declares {n} coefficients, found {len(coefficients)}")
        gens.append(Generator(
            bus=int(row[GEN_BUS]), pmin=row[PMIN], pmax=row[PMAX],
            qmin=row[QMIN], qmax=row[QMAX], pg0=row[PG], qg0=row[QG],
            status=row[GEN_STATUS] > 0, cost=tuple(coefficients),
        ))

    branches = [
        Branch(
            from_bus=int(row[F_BUS]), to_bus=int(row[T_BUS]),
            r=row[BR_R], x=row[BR_X], b=row[BR_B], tap=row[TAP], shift=row[SHIFT],
            rate_a=row[RATE_A], status=row[BR_STATUS] > 0,
        )
        for row in branch
    ]
    return GridCase(float(base_mva), tuple(buses), tuple(gens), tuple(branches), name=name)


def import_matpower_m(text: str, name: Optional[str] = None) -> GridCase:
    """Import a MATPOWER case function made of numeric matrix literals"""
    text = _strip_comments(text)
    if name is None:
        header = re.search(r"function\s+\w+\s*=\s*(\w+)", text)
        name = header.group(1) if header else "case"

    base = _SCALAR.search(text)
    if not base:
        raise SchemaError("mpc.baseMVA is not assigned")
    base_mva = _parse_entry(base.group(1).strip(), "baseMVA")

    matrices = _extract_matrices(text)
    for key in ("bus", "gen", "branch", "gencost"):
        if key not in matrices:
            raise SchemaError(f"mpc.{key} is not assigned")

    case = case_from_matrices(base_mva, matrices["bus"], matrices["gen"], matrices["branch"],
                              matrices["gencost"], name=name)
    logger.info(f"✅ Imported {name}: {case.n_bus} buses, {case.n_gen} generators, {case.n_branch} branches")
    return case


def import_ppc(ppc: dict, name: str = "case") -> GridCase:
    """Import a PYPOWER-style case dictionary"""
    try:
        return case_from_matrices(ppc["baseMVA"], ppc["bus"], ppc["gen"], ppc["branch"],
                                  ppc["gencost"], name=name)
    except KeyError as e:
        raise SchemaError(f"case dictionary is missing {e}")


def load_case(path) -> GridCase:
    """Read a case file, choosing the reader by suffix"""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".m":
        return import_matpower_m(text, name=path.stem)
    return parse_case_json(text, name=path.stem)
