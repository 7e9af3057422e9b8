"""Measurement patterns: graphs, flows, colourings and compilation.

A pattern is a graph with input/output vertex sets, one measurement angle
per vertex (an integer multiple of pi/4, stored as an index 0..7) and a
flow: a total measurement order plus an injective successor map ``f`` such
that measuring vertex ``i`` pushes an X correction to ``f(i)`` and Z
corrections to the other neighbours of ``f(i)``.  Angle arithmetic stays in
exact integer units of pi/4 until the simulator boundary.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from math import pi
from pathlib import Path
from typing import Callable, Iterable, Mapping

ANGLE_UNIT = pi / 4.0
ANGLE_STEPS = 8  # the allowed angles are {k*pi/4 : k in 0..7}
HALF_TURN = 4  # pi in angle units


class NotBipartiteError(ValueError):
    """Raised by :func:`two_colour`; carries an odd cycle as the witness."""

    def __init__(self, cycle: list[int]):
        super().__init__(f"graph is not bipartite; odd cycle {cycle}")
        self.cycle = cycle


class FlowOrderError(RuntimeError):
    """A correction was requested before its dependencies were measured."""


def normalize_edges(edges: Iterable[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
    return tuple(sorted((min(a, b), max(a, b)) for a, b in edges))


@dataclass(frozen=True)
class MeasurementPattern:
    num_vertices: int
    edges: tuple[tuple[int, int], ...]
    inputs: tuple[int, ...]
    outputs: tuple[int, ...]
    angles: tuple[int, ...]  # index k meaning k*pi/4
    flow_order: tuple[int, ...]
    flow_successor: dict[int, int]

    # derived adjacency, built once
    _neighbours: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)
    _z_deps: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)
    _x_dep: tuple[int, ...] = field(init=False, repr=False, compare=False)
    _order_pos: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        n = self.num_vertices
        nbrs: list[list[int]] = [[] for _ in range(n)]
        for a, b in self.edges:
            if 0 <= a < n and 0 <= b < n and a != b:
                nbrs[a].append(b)
                nbrs[b].append(a)
        object.__setattr__(self, "_neighbours", tuple(tuple(sorted(x)) for x in nbrs))
        # Z dependencies of v: measured vertices i (with successor) such that
        # v is a neighbour of f(i), v != i.
        zdeps: list[list[int]] = [[] for _ in range(n)]
        for i, fi in self.flow_successor.items():
            if not 0 <= fi < n:
                continue
            for v in nbrs[fi]:
                if v != i:
                    zdeps[v].append(i)
        object.__setattr__(self, "_z_deps", tuple(tuple(sorted(x)) for x in zdeps))
        xdep = [-1] * n
        for i, fi in self.flow_successor.items():
            if 0 <= fi < n:
                xdep[fi] = i
        object.__setattr__(self, "_x_dep", tuple(xdep))
        pos = [-1] * n
        for idx, v in enumerate(self.flow_order):
            if 0 <= v < n:
                pos[v] = idx
        object.__setattr__(self, "_order_pos", tuple(pos))

    def neighbours(self, v: int) -> tuple[int, ...]:
        return self._neighbours[v]

    def degree(self, v: int) -> int:
        return len(self._neighbours[v])

    def x_dependency(self, v: int) -> int:
        """The flow predecessor of v, or -1 if none."""
        return self._x_dep[v]

    def z_dependencies(self, v: int) -> tuple[int, ...]:
        return self._z_deps[v]

    def angle_radians(self, v: int) -> float:
        return self.angles[v] * ANGLE_UNIT

    def to_dict(self) -> dict:
        return {
            "vertices": self.num_vertices,
            "edges": [list(e) for e in self.edges],
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "angles": list(self.angles),
            "flow_order": list(self.flow_order),
            "flow_successor": {str(k): v for k, v in self.flow_successor.items()},
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "MeasurementPattern":
        return cls(
            num_vertices=int(raw["vertices"]),
            edges=normalize_edges(tuple((int(a), int(b)) for a, b in raw["edges"])),
            inputs=tuple(int(v) for v in raw["inputs"]),
            outputs=tuple(int(v) for v in raw["outputs"]),
            angles=tuple(int(a) for a in raw["angles"]),
            flow_order=tuple(int(v) for v in raw["flow_order"]),
            flow_successor={int(k): int(v) for k, v in raw["flow_successor"].items()},
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "MeasurementPattern":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def validate_pattern(pattern: MeasurementPattern) -> list[str]:
    """All invariant violations; an empty list means the pattern is valid."""
    v: list[str] = []
    n = pattern.num_vertices
    if n <= 0:
        return ["pattern has no vertices"]
    for a, b in pattern.edges:
        if a == b:
            v.append(f"self-loop at vertex {a}")
        if not (0 <= a < n and 0 <= b < n):
            v.append(f"edge ({a}, {b}) references a missing vertex")
    if len(set(pattern.edges)) != len(pattern.edges):
        v.append("duplicate edges")
    for name, group in (("input", pattern.inputs), ("output", pattern.outputs)):
        for x in group:
            if not 0 <= x < n:
                v.append(f"{name} vertex {x} does not exist")
    if len(pattern.angles) != n:
        v.append(f"expected {n} angles, got {len(pattern.angles)}")
    for i, a in enumerate(pattern.angles):
        if not 0 <= a < ANGLE_STEPS:
            v.append(f"angle outside the allowed pi/4 grid at vertex {i} (index {a})")
    if sorted(pattern.flow_order) != list(range(n)):
        v.append("flow order is not a permutation of the vertices")
        return v
    pos = {vert: i for i, vert in enumerate(pattern.flow_order)}
    outputs = set(pattern.outputs)
    measured = [x for x in range(n) if x not in outputs]
    for i in measured:
        if i not in pattern.flow_successor:
            v.append(f"non-output vertex {i} has no flow successor")
    for i, fi in pattern.flow_successor.items():
        if i in outputs:
            v.append(f"output vertex {i} must not have a successor")
            continue
        if not 0 <= fi < n:
            v.append(f"flow successor of {i} does not exist")
            continue
        if fi not in set(pattern.neighbours(i)):
            v.append(f"flow successor of {i} is not a neighbour ({fi})")
        if pos[fi] <= pos[i]:
            v.append(f"flow successor of {i} is not measured later ({fi})")
        for k in pattern.neighbours(fi):
            if k != i and pos[k] < pos[i]:
                v.append(
                    f"vertex {k} neighbours f({i})={fi} but is measured before {i}"
                )
    successors = list(pattern.flow_successor.values())
    if len(set(successors)) != len(successors):
        v.append("flow successor map is not injective")
    return v


@dataclass(frozen=True)
class KColouring:
    k: int
    classes: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if self.k != len(self.classes):
            raise ValueError("k must equal the number of classes")

    def colour_of(self, v: int) -> int:
        for j, cls in enumerate(self.classes):
            if v in cls:
                return j
        raise KeyError(f"vertex {v} is uncoloured")

    def validate(self, num_vertices: int, edges: Iterable[tuple[int, int]]) -> list[str]:
        violations: list[str] = []
        seen: dict[int, int] = {}
        for j, cls in enumerate(self.classes):
            for v in cls:
                if v in seen:
                    violations.append(f"vertex {v} appears in classes {seen[v]} and {j}")
                seen[v] = j
        missing = set(range(num_vertices)) - set(seen)
        if missing:
            violations.append(f"vertices {sorted(missing)} are uncoloured")
        for a, b in edges:
            if a in seen and b in seen and seen[a] == seen[b]:
                violations.append(f"edge ({a}, {b}) is monochromatic")
        return violations

    def to_list(self) -> list[list[int]]:
        return [list(c) for c in self.classes]

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_list(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "KColouring":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        classes = tuple(tuple(int(v) for v in c) for c in raw)
        return cls(k=len(classes), classes=classes)


def two_colour(num_vertices: int, edges: Iterable[tuple[int, int]]) -> KColouring:
    """Proper 2-colouring by breadth-first labelling.

    Raises :class:`NotBipartiteError` with an odd-cycle witness when none
    exists.  Disconnected graphs are coloured component by component.
    """
    nbrs: list[list[int]] = [[] for _ in range(num_vertices)]
    for a, b in edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    colour = [-1] * num_vertices
    parent = [-1] * num_vertices
    for root in range(num_vertices):
        if colour[root] != -1:
            continue
        colour[root] = 0
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for w in nbrs[u]:
                if colour[w] == -1:
                    colour[w] = colour[u] ^ 1
                    parent[w] = u
                    queue.append(w)
                elif colour[w] == colour[u]:
                    raise NotBipartiteError(_odd_cycle(u, w, parent))
    classes: tuple[tuple[int, ...], ...] = (
        tuple(v for v in range(num_vertices) if colour[v] == 0),
        tuple(v for v in range(num_vertices) if colour[v] == 1),
    )
    return KColouring(k=2, classes=classes)


def _odd_cycle(u: int, w: int, parent: list[int]) -> list[int]:
    path_u, path_w = [u], [w]
    seen = {u: 0}
    x = u
    while parent[x] != -1:
        x = parent[x]
        seen[x] = len(path_u)
        path_u.append(x)
    x = w
    while x not in seen:
        x = parent[x]
        path_w.append(x)
    return path_u[: seen[x] + 1][::-1] + path_w[:-1]


def corrected_angle_index(
    pattern: MeasurementPattern, v: int, outcomes: Mapping[int, int]
) -> int:
    """Corrected angle of ``v`` in pi/4 units given decoded outcomes so far.

    ``(-1)^{s_X} * angle + s_Z * pi`` with ``s_X`` the outcome of the flow
    predecessor and ``s_Z`` the parity of the Z-dependency outcomes.
    """
    xd = pattern.x_dependency(v)
    s_x = 0
    if xd >= 0:
        if xd not in outcomes:
            raise FlowOrderError(f"vertex {v} measured before its X dependency {xd}")
        s_x = outcomes[xd]
    s_z = 0
    for i in pattern.z_dependencies(v):
        if i not in outcomes:
            raise FlowOrderError(f"vertex {v} measured before its Z dependency {i}")
        s_z ^= outcomes[i]
    sign = -1 if s_x else 1
    return (sign * pattern.angles[v] + s_z * HALF_TURN) % ANGLE_STEPS


def corrected_angle(
    pattern: MeasurementPattern, v: int, outcomes: Mapping[int, int]
) -> float:
    """Corrected measurement angle of ``v`` in radians."""
    return corrected_angle_index(pattern, v, outcomes) * ANGLE_UNIT


# --- circuit-model compilation -------------------------------------------

GateOp = tuple  # ("h", q) | ("rz", q, angle) | ("cz", a, b) | ("x", q)
AngleRule = Callable[[int, Mapping[int, int]], float]


@dataclass(frozen=True)
class RoundProgram:
    """A pattern lowered to the simulator's gate set.

    Preparation and entangling layers are concrete gates; measurements are
    adaptive, so the angle of each is resolved in flow order at execution
    time via ``measure_angle(vertex, outcomes_so_far)``.
    """

    num_qubits: int
    prep: tuple[GateOp, ...]
    entangle: tuple[GateOp, ...]
    measure_order: tuple[int, ...]
    measure_angle: AngleRule


def compile_round(
    pattern: MeasurementPattern,
    prep_angles: Mapping[int, float] | None = None,
    prep_bits: Mapping[int, int] | None = None,
    measure_angle: AngleRule | None = None,
) -> RoundProgram:
    """Lower a pattern to prep / CZ / adaptive-measure layers.

    Each vertex needs exactly one preparation: ``prep_angles[v]`` prepares
    ``|+_theta>`` (H then a Z rotation; zero rotations are elided) and
    ``prep_bits[v]`` prepares a computational-basis state.  The default
    measurement rule is the pattern's own corrected angle.
    """
    prep_angles = dict(prep_angles or {})
    prep_bits = dict(prep_bits or {})
    prep: list[GateOp] = []
    for v in range(pattern.num_vertices):
        if v in prep_angles and v in prep_bits:
            raise ValueError(f"vertex {v} has both a plus-state and a basis prep")
        if v in prep_angles:
            prep.append(("h", v))
            theta = prep_angles[v]
            if theta % (2 * pi) != 0.0:
                prep.append(("rz", v, theta))
        elif v in prep_bits:
            if prep_bits[v]:
                prep.append(("x", v))
        else:
            raise ValueError(f"vertex {v} has no preparation")
    entangle = tuple(("cz", a, b) for a, b in pattern.edges)
    if measure_angle is None:
        measure_angle = lambda v, outcomes: corrected_angle(pattern, v, outcomes)
    return RoundProgram(
        num_qubits=pattern.num_vertices,
        prep=tuple(prep),
        entangle=entangle,
        measure_order=tuple(pattern.flow_order),
        measure_angle=measure_angle,
    )


# --- the built-in 15-qubit CNOT pattern -----------------------------------

# Layout (tree, embeds in a heavy-hex patch):
#
#   target in  0 - 1 - 2 - 3 - 4 - 5          (top rail)
#                                  |
#                                  6          (bridge; target out)
#                                  |
#   control in 7 - 8 - 9 - 10 - 11 - 12 - 13 - 14   (bottom rail)
#
# The bottom rail carries the control through the junction vertex 11; the
# top rail carries the target and terminates on the bridge.  Angle indices
# are 0 everywhere except vertices 7 and 8 (pi/2), which square up the odd
# hop count of the bottom rail.  Outputs are read at angle 0.
_CNOT15_EDGES = normalize_edges(
    [
        (0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 11),
        (7, 8), (8, 9), (9, 10), (10, 11), (11, 12), (12, 13), (13, 14),
    ]
)
_CNOT15_ANGLES = (0, 0, 0, 0, 0, 0, 0, 2, 2, 0, 0, 0, 0, 0, 0)
_CNOT15_ORDER = (7, 8, 9, 10, 0, 1, 2, 3, 4, 5, 11, 12, 13, 6, 14)
_CNOT15_FLOW = {
    0: 1, 1: 2, 2: 3, 3: 4, 4: 5, 5: 6,
    7: 8, 8: 9, 9: 10, 10: 11, 11: 12, 12: 13, 13: 14,
}


def cnot15() -> tuple[MeasurementPattern, KColouring]:
    """The built-in 15-qubit CNOT pattern and its 2-colouring.

    Input vertex 7 carries the control bit and vertex 0 the target bit;
    output vertex 14 returns the control and vertex 6 the target.
    """
    pattern = MeasurementPattern(
        num_vertices=15,
        edges=_CNOT15_EDGES,
        inputs=(7, 0),
        outputs=(14, 6),
        angles=_CNOT15_ANGLES,
        flow_order=_CNOT15_ORDER,
        flow_successor=dict(_CNOT15_FLOW),
    )
    colouring = two_colour(pattern.num_vertices, pattern.edges)
    return pattern, colouring


# --- coupling maps and embedding ------------------------------------------


@dataclass(frozen=True)
class CouplingMap:
    num_qubits: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        for a, b in self.edges:
            if a == b:
                raise ValueError(f"self-loop at physical qubit {a}")
            if not (0 <= a < self.num_qubits and 0 <= b < self.num_qubits):
                raise ValueError(f"edge ({a}, {b}) out of range")

    def neighbour_sets(self) -> list[set[int]]:
        nbrs: list[set[int]] = [set() for _ in range(self.num_qubits)]
        for a, b in self.edges:
            nbrs[a].add(b)
            nbrs[b].add(a)
        return nbrs

    def to_dict(self) -> dict:
        return {"qubits": self.num_qubits, "edges": [list(e) for e in self.edges]}

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "CouplingMap":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        edges = normalize_edges(tuple((int(a), int(b)) for a, b in raw["edges"]))
        if "qubits" in raw:
            nq = int(raw["qubits"])
        else:
            nq = 1 + max((max(e) for e in edges), default=-1)
        return cls(num_qubits=nq, edges=edges)


def heavy_hex_coupling(rows: int = 3, row_length: int = 12) -> CouplingMap:
    """A heavy-hex patch: qubit rows joined by single bridge qubits.

    Bridges hang from every fourth row qubit, with the junction columns
    shifted by two on alternating row pairs, matching the usual
    superconducting heavy-hexagon layout (triangle-free, max degree 3).
    """
    ids: dict[tuple[str, int, int], int] = {}
    counter = 0
    for r in range(rows):
        for c in range(row_length):
            ids[("row", r, c)] = counter
            counter += 1
    edges: list[tuple[int, int]] = []
    for r in range(rows):
        for c in range(row_length - 1):
            edges.append((ids[("row", r, c)], ids[("row", r, c + 1)]))
    for r in range(rows - 1):
        offset = 0 if r % 2 == 0 else 2
        for c in range(offset, row_length, 4):
            ids[("bridge", r, c)] = counter
            bridge = counter
            counter += 1
            edges.append((ids[("row", r, c)], bridge))
            edges.append((bridge, ids[("row", r + 1, c)]))
    return CouplingMap(num_qubits=counter, edges=normalize_edges(edges))


def check_embedding(
    num_vertices: int,
    edges: Iterable[tuple[int, int]],
    coupling: CouplingMap,
) -> dict[int, int] | None:
    """Injective vertex -> physical-qubit map with every edge on a coupler.

    Backtracking search over a connectivity-first vertex order with degree
    pruning; fine for pattern-sized graphs.  Returns ``None`` on failure.
    """
    nbrs: list[set[int]] = [set() for _ in range(num_vertices)]
    for a, b in edges:
        nbrs[a].add(b)
        nbrs[b].add(a)
    phys = coupling.neighbour_sets()
    if num_vertices > coupling.num_qubits:
        return None

    # Order vertices so each (after the first) touches an already-placed one.
    order: list[int] = []
    placed: set[int] = set()
    remaining = set(range(num_vertices))
    while remaining:
        candidates = [v for v in remaining if nbrs[v] & placed]
        if candidates:
            nxt = max(candidates, key=lambda v: (len(nbrs[v] & placed), len(nbrs[v])))
        else:
            nxt = max(remaining, key=lambda v: len(nbrs[v]))
        order.append(nxt)
        placed.add(nxt)
        remaining.remove(nxt)

    mapping: dict[int, int] = {}
    used: set[int] = set()

    def candidates_for(v: int) -> Iterable[int]:
        anchors = [mapping[u] for u in nbrs[v] if u in mapping]
        if anchors:
            cands = set(phys[anchors[0]])
            for a in anchors[1:]:
                cands &= phys[a]
            return sorted(cands - used)
        return (q for q in range(coupling.num_qubits) if q not in used)

    def place(idx: int) -> bool:
        if idx == len(order):
            return True
        v = order[idx]
        need = len(nbrs[v])
        for q in candidates_for(v):
            if len(phys[q]) < need:
                continue
            mapping[v] = q
            used.add(q)
            if place(idx + 1):
                return True
            del mapping[v]
            used.remove(q)
        return False

    return dict(mapping) if place(0) else None
