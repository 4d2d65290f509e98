"""Problem documents (YAML) and the abstraction pipeline they drive."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .automaton import TimedAutomaton, build_cell_automaton, is_deterministic
from .bounds import SliceBounds, infer_orientation, slice_bounds
from .partition import (Partition, SliceFamily, build_partition, check_bisimilarity_condition,
                        check_determinism, check_refinable_precondition, initial_locations, locate)
from .system import LyapunovError, QuadraticLyapunov, VectorField, solve_lyapunov_equation


class SpecError(ValueError):
    """Malformed or inconsistent problem document (exit code 2)."""


_matrix = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": {"type": "number"}}}
_box = {"type": "array", "minItems": 1,
        "items": {"type": "array", "minItems": 2, "maxItems": 2, "items": {"type": "number"}}}
_window = {"type": "array", "minItems": 2, "maxItems": 2, "items": {"type": "number"}}

SCHEMA = {
    "type": "object",
    "required": ["system", "lyapunov", "domain_box"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "system": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "A": _matrix,
                "polynomial": {
                    "type": "array", "minItems": 1,
                    "items": {"type": "array", "items": {
                        "type": "array", "minItems": 2, "maxItems": 2,
                        "prefixItems": [{"type": "number"},
                                        {"type": "array", "items": {"type": "integer", "minimum": 0}}],
                    }},
                },
            },
            "oneOf": [{"required": ["A"]}, {"required": ["polynomial"]}],
        },
        "lyapunov": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "required": ["levels"],
                "additionalProperties": False,
                "properties": {
                    "P": _matrix,
                    "solve": {"type": "object", "required": ["Q"], "additionalProperties": False,
                              "properties": {"Q": _matrix}},
                    "subspace": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 0}},
                    "levels": {"type": "array", "minItems": 2, "items": {"type": "number", "exclusiveMinimum": 0}},
                    "orientation": {"enum": ["decreasing", "increasing"]},
                },
                "oneOf": [{"required": ["P"]}, {"required": ["solve"]}],
            },
        },
        "domain_box": _box,
        "grid_step": {"type": "number", "exclusiveMinimum": 0},
        "initial_box": _box,
        "initial_points": {"type": "array", "minItems": 1, "items": {"type": "array", "items": {"type": "number"}}},
        "queries": {"type": "array", "items": _window},
        "mode": {"enum": ["sound", "complete"]},
        "refinement_depth": {"type": "integer", "minimum": 0},
        "refinement_horizon": {"type": "number", "minimum": 0},
        "validation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "horizon": {"type": "number", "minimum": 0},
                "samples": {"type": "integer", "minimum": 0},
                "times_per_traj": {"type": "integer", "minimum": 1},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer"},
            },
        },
    },
}


@dataclass
class Problem:
    name: str
    field: VectorField
    families: list
    domain_box: tuple
    grid_step: float | None
    initial_box: tuple | None
    initial_points: list | None
    queries: list
    mode: str
    refinement_depth: int
    refinement_horizon: float | None = None
    horizon: float = 1.0
    samples: int = 1000
    times_per_traj: int = 20
    dt: float = 1e-3
    seed: int = 0
    doc: dict = field(default_factory=dict, repr=False)

    @property
    def spec_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.doc, sort_keys=True).encode()).hexdigest()[:16]


def _mat(rows, what) -> np.ndarray:
    if len({len(r) for r in rows}) != 1:
        raise SpecError(f"{what}: ragged matrix")
    return np.array(rows, dtype=float)


def parse_problem(doc: dict) -> Problem:
    """Validate a decoded document and build the system objects."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SpecError(f"{where}: {exc.message}") from None

    box = tuple((float(lo), float(hi)) for lo, hi in doc["domain_box"])
    n = len(box)
    if any(hi <= lo for lo, hi in box):
        raise SpecError("domain_box: every interval needs lo < hi")
    sysdoc = doc["system"]
    if "A" in sysdoc:
        A = _mat(sysdoc["A"], "system/A")
        if A.shape != (n, n):
            raise SpecError(f"system/A has shape {A.shape}, domain_box has dimension {n}")
        vf = VectorField.linear(A)
    else:
        terms = sysdoc["polynomial"]
        if len(terms) != n:
            raise SpecError(f"system/polynomial has {len(terms)} components, domain_box has dimension {n}")
        for j, comp in enumerate(terms):
            for c, e in comp:
                if len(e) != n:
                    raise SpecError(f"system/polynomial/{j}: exponent vector {e} has length {len(e)}, expected {n}")
        vf = VectorField.polynomial([[(c, e) for c, e in comp] for comp in terms])

    grid_step = doc.get("grid_step")
    families = []
    for i, fdoc in enumerate(doc["lyapunov"], start=1):
        where = f"lyapunov/{i - 1}"
        sub = fdoc.get("subspace")
        if sub is not None and (max(sub) >= n or len(set(sub)) != len(sub)):
            raise SpecError(f"{where}/subspace: indices must be distinct and < {n}")
        if "P" in fdoc:
            P = _mat(fdoc["P"], f"{where}/P")
            if P.shape != (n, n):
                raise SpecError(f"{where}/P has shape {P.shape}, expected ({n}, {n})")
            try:
                lyap = QuadraticLyapunov(P, index=i, subspace=sub)
            except ValueError as exc:
                raise SpecError(f"{where}/P: {exc}") from None
        else:
            if vf.kind != "linear":
                raise SpecError(f"{where}/solve needs a linear system")
            Q = _mat(fdoc["solve"]["Q"], f"{where}/solve/Q")
            if Q.shape != (n, n):
                raise SpecError(f"{where}/solve/Q has shape {Q.shape}, expected ({n}, {n})")
            if sub is not None and sorted(sub) != list(range(n)):
                raise SpecError(f"{where}: solve directives give full-dimensional forms; drop 'subspace'")
            try:
                lyap = solve_lyapunov_equation(vf.A, Q, index=i)
            except LyapunovError:
                raise
            except ValueError as exc:
                raise SpecError(f"{where}/solve/Q: {exc}") from None
        orientation = fdoc.get("orientation")
        if orientation is None:
            orientation = infer_orientation(lyap, vf, box=box, grid_step=grid_step or 0.05)
        try:
            families.append(SliceFamily(lyap, tuple(fdoc["levels"]), orientation))
        except ValueError as exc:
            raise SpecError(f"{where}/levels: {exc}") from None

    init = doc.get("initial_box")
    if init is not None:
        init = tuple((float(lo), float(hi)) for lo, hi in init)
        if len(init) != n:
            raise SpecError(f"initial_box has dimension {len(init)}, expected {n}")
    pts = doc.get("initial_points")
    if pts is not None:
        if init is not None:
            raise SpecError("give initial_box or initial_points, not both")
        pts = [tuple(float(v) for v in p) for p in pts]
        if any(len(p) != n for p in pts):
            raise SpecError(f"initial_points need dimension {n}")
    queries = [(float(a), float(b)) for a, b in doc.get("queries", [])]
    for a, b in queries:
        if not 0 <= a <= b:
            raise SpecError(f"query window [{a}, {b}] needs 0 <= t1 <= t2")
    val = doc.get("validation", {})
    return Problem(
        name=doc.get("name", "problem"), field=vf, families=families, domain_box=box,
        grid_step=grid_step, initial_box=init, initial_points=pts, queries=queries, mode=doc.get("mode", "sound"),
        refinement_depth=doc.get("refinement_depth", 0),
        refinement_horizon=doc.get("refinement_horizon"), horizon=val.get("horizon", 1.0),
        samples=val.get("samples", 1000), times_per_traj=val.get("times_per_traj", 20),
        dt=val.get("dt", 1e-3), seed=val.get("seed", 0), doc=doc,
    )


def load_problem(path) -> Problem:
    """Read a YAML problem document; ``bundled:NAME`` loads a shipped example."""
    path = str(path)
    try:
        if path.startswith("bundled:"):
            text = resources.files("lyapta.specs").joinpath(path.split(":", 1)[1] + ".yaml").read_text()
        else:
            text = Path(path).read_text()
    except (OSError, FileNotFoundError) as exc:
        raise SpecError(f"cannot read {path}: {exc}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SpecError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise SpecError(f"{path}: expected a mapping at top level")
    return parse_problem(doc)


def bundled_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("lyapta.specs").iterdir() if p.name.endswith(".yaml"))


# --------------------------------------------------------------------------
# pipeline
# --------------------------------------------------------------------------

@dataclass
class Abstraction:
    problem: Problem
    partition: Partition
    bounds: dict
    automaton: TimedAutomaton
    mode: str

    def summary(self) -> dict:
        det = check_determinism(self.partition)
        return {
            "fingerprint": self.partition.fingerprint,
            "locations": len(self.automaton.locations),
            "transitions": len(self.automaton.transitions),
            "deterministic": bool(det) and is_deterministic(self.automaton),
            "bisim_condition": check_bisimilarity_condition(self.partition),
            "refinable_pre": check_refinable_precondition(self.partition),
            "thin_components": list(self.partition.thin),
        }


def initial_regions(part: Partition, problem: Problem) -> list[str]:
    """L0 from the initial box (must be a union of cells) or from the cells
    containing the initial points."""
    if problem.initial_box is not None:
        return initial_locations(part, problem.initial_box)
    if problem.initial_points is not None:
        return sorted({locate(part, p) for p in problem.initial_points})
    return []


def build(problem: Problem, mode: str | None = None, grid_step: float | None = None,
          families=None) -> Abstraction:
    """Partition, bound and assemble the cell automaton for ``problem``."""
    mode = mode or problem.mode
    fams = problem.families if families is None else families
    part = build_partition(fams, problem.domain_box, grid_step or problem.grid_step)
    bounds: dict[int, list[SliceBounds]] = {f.index: slice_bounds(f, problem.field, part, mode) for f in fams}
    L0 = initial_regions(part, problem)
    ta = build_cell_automaton(part, bounds, L0)
    return Abstraction(problem, part, bounds, ta, mode)
