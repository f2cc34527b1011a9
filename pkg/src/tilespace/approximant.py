"""Collared tiles, approximant complexes, and the cellular maps between them.

A level-n approximant is assembled from the n-collared tiles of the
substitution language.  Lower-dimensional cells are labeled by the pattern
of all tiles whose closures meet the cell, each carrying its (n-1)-corona;
cells with equal labels are identified.  With the closed-star convention
every boundary cell's label is determined by any collared tile containing
it, so the quotient is a well-defined CW complex and all boundary maps are
exact integer matrices.

Orientation convention: edges point along increasing coordinate, squares
are oriented counterclockwise, so a square's boundary is
bottom + right - top - left.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConsistencyError, PreconditionError, SchemaError
from .homalg import IntMatrix
from .rules import (
    Corona,
    Patch,
    Pos,
    SubstitutionRule,
    allowed_rect_patterns,
    allowed_square_patterns,
    allowed_words,
    canonical_label,
)

UNCOLLARED_CAVEAT = (
    "level 0 is uncollared: identifications use the transitive closure of "
    "tile adjacencies and the tower only computes the hull from level 1 up"
)


# ---------------------------------------------------------------------------
# cells and complexes


@dataclass(frozen=True)
class Cell:
    id: int
    dim: int
    label: bytes
    boundary: tuple[tuple[int, int], ...]
    kind: str
    pattern: Patch | None = None
    loop: tuple[tuple[int, int], ...] | None = None


class CellComplex:
    """Finite CW complex with integer incidence data."""

    def __init__(self, dimension: int, cells_by_dim, level=None, name=None, caveats=()):
        self.dimension = dimension
        self.cells_by_dim = tuple(tuple(cs) for cs in cells_by_dim)
        self.level = level
        self.name = name
        self.caveats = tuple(caveats)
        self._label_lookup = [
            {c.label: c.id for c in cells} for cells in self.cells_by_dim
        ]
        self._validate()

    # -- access

    def cells(self, k: int) -> tuple[Cell, ...]:
        return self.cells_by_dim[k] if 0 <= k <= self.dimension else ()

    def cell_count(self, k: int) -> int:
        return len(self.cells(k))

    def counts(self) -> tuple[int, ...]:
        return tuple(len(cs) for cs in self.cells_by_dim)

    def cell_id(self, k: int, label: bytes) -> int:
        try:
            return self._label_lookup[k][label]
        except KeyError:
            raise ConsistencyError(
                f"label lookup failed in dimension {k}: {label[:80]!r}"
            ) from None

    def boundary_matrix(self, k: int) -> IntMatrix:
        """Matrix of the boundary map C_k -> C_(k-1)."""
        if not 1 <= k <= self.dimension:
            raise PreconditionError(f"no boundary map in degree {k}")
        rows = self.cell_count(k - 1)
        mat = IntMatrix.zeros(rows, self.cell_count(k))
        for cell in self.cells(k):
            for target, coeff in cell.boundary:
                mat.data[target][cell.id] += coeff
        return mat

    def is_connected(self) -> bool:
        nv = self.cell_count(0)
        if nv <= 1:
            return True
        parent = list(range(nv))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for edge in self.cells(1):
            ids = [t for t, _ in edge.boundary]
            a = find(ids[0])
            b = find(ids[1])
            if a != b:
                parent[a] = b
        return len({find(i) for i in range(nv)}) == 1

    # -- invariants

    def _validate(self):
        for k, cells in enumerate(self.cells_by_dim):
            for i, cell in enumerate(cells):
                if cell.id != i or cell.dim != k:
                    raise ConsistencyError("cell ids must be dense and dimension-tagged")
                if k == 0 and cell.boundary:
                    raise ConsistencyError("vertices have empty boundary")
                if k == 1:
                    if len(cell.boundary) != 2 or sorted(c for _, c in cell.boundary) != [-1, 1]:
                        raise ConsistencyError("edges need a head (+1) and a tail (-1)")
                if k == 2 and cell.loop is not None:
                    chain: dict[int, int] = {}
                    for e, s in cell.loop:
                        chain[e] = chain.get(e, 0) + s
                    bchain: dict[int, int] = {}
                    for e, s in cell.boundary:
                        bchain[e] = bchain.get(e, 0) + s
                    if {k_: v for k_, v in chain.items() if v} != {
                        k_: v for k_, v in bchain.items() if v
                    }:
                        raise ConsistencyError("2-cell boundary chain disagrees with its loop")
            if len({c.label for c in cells}) != len(cells):
                raise ConsistencyError("duplicate cell labels within a dimension")
        for k in range(2, self.dimension + 1):
            if not (self.boundary_matrix(k - 1) @ self.boundary_matrix(k)).is_zero():
                raise ConsistencyError(f"boundary of boundary nonzero in degree {k}")

    def edge_endpoints(self, edge_id: int) -> tuple[int, int]:
        """(tail, head) vertex ids."""
        head = tail = None
        for target, coeff in self.cells(1)[edge_id].boundary:
            if coeff == 1:
                head = target
            else:
                tail = target
        return tail, head

    # -- serialization

    def dump(self) -> str:
        payload = {"dimension": self.dimension, "level": self.level, "name": self.name}
        cells = {}
        for k in range(self.dimension + 1):
            entries = []
            for cell in self.cells(k):
                entry = {
                    "label": cell.label.decode("utf-8"),
                    "boundary": [
                        [self.cells(k - 1)[t].label.decode("utf-8"), c]
                        for t, c in cell.boundary
                    ],
                }
                if cell.loop is not None:
                    entry["loop"] = [
                        [self.cells(1)[e].label.decode("utf-8"), s] for e, s in cell.loop
                    ]
                entries.append(entry)
            cells[str(k)] = entries
        payload["cells"] = cells
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def load_complex(text: str) -> CellComplex:
    """Parse the JSON complex dump format (cells referenced by label)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or "cells" in doc and not isinstance(doc["cells"], dict):
        raise SchemaError("complex document must be an object with a 'cells' map")
    cells_doc = doc.get("cells")
    if not isinstance(cells_doc, dict):
        raise SchemaError("complex document must be an object with a 'cells' map")
    dims = sorted(int(k) for k in cells_doc)
    if not dims or dims != list(range(len(dims))):
        raise SchemaError("cell dimensions must be contiguous from 0")
    dimension = doc.get("dimension", dims[-1])
    if dimension != dims[-1]:
        raise SchemaError("declared dimension does not match the cells")

    label_maps: list[dict[str, int]] = []
    cells_by_dim: list[list[Cell]] = []
    for k in dims:
        entries = cells_doc[str(k)]
        if not isinstance(entries, list):
            raise SchemaError(f"cells[{k}] must be an array")
        labels = [e.get("label") for e in entries]
        if any(not isinstance(l, str) for l in labels) or len(set(labels)) != len(labels):
            raise SchemaError(f"cells[{k}] labels must be unique strings")
        order = sorted(range(len(entries)), key=lambda i: labels[i].encode())
        label_map = {labels[i]: rank for rank, i in enumerate(order)}
        label_maps.append(label_map)
        built = []
        for rank, i in enumerate(order):
            entry = entries[i]
            bnd_doc = entry.get("boundary", [])
            loop_doc = entry.get("loop")
            if k == 0:
                if bnd_doc:
                    raise SchemaError("vertices must have empty boundary")
                boundary = ()
            else:
                resolved = []
                for item in bnd_doc:
                    if (
                        not isinstance(item, list)
                        or len(item) != 2
                        or item[0] not in label_maps[k - 1]
                        or not isinstance(item[1], int)
                    ):
                        raise SchemaError(f"bad boundary entry in cells[{k}][{i}]")
                    resolved.append((label_maps[k - 1][item[0]], item[1]))
                boundary = tuple(resolved)
            loop = None
            if k == 2:
                if loop_doc is None and not bnd_doc:
                    raise SchemaError("2-cells need a 'loop' or an explicit boundary")
                if loop_doc is not None:
                    loop = []
                    for item in loop_doc:
                        if (
                            not isinstance(item, list)
                            or len(item) != 2
                            or item[0] not in label_maps[1]
                            or item[1] not in (1, -1)
                        ):
                            raise SchemaError(f"bad loop entry in cells[2][{i}]")
                        loop.append((label_maps[1][item[0]], item[1]))
                    loop = tuple(loop)
                    if not bnd_doc:
                        boundary = loop
            if k == 1 and len(boundary) != 2:
                raise SchemaError("edges must have exactly two boundary entries")
            built.append(
                Cell(
                    id=rank,
                    dim=k,
                    label=labels[i].encode(),
                    boundary=boundary,
                    kind="file",
                    loop=loop,
                )
            )
        cells_by_dim.append(built)
    try:
        return CellComplex(
            dimension,
            cells_by_dim,
            level=doc.get("level"),
            name=doc.get("name"),
        )
    except ConsistencyError as exc:
        raise PreconditionError(str(exc)) from None


def load_complex_file(path) -> CellComplex:
    with open(path, "r", encoding="utf-8") as fh:
        return load_complex(fh.read())


# ---------------------------------------------------------------------------
# collared tiles


@dataclass(frozen=True)
class CollaredTile:
    id: int
    center_label: str
    collar: Corona
    level: int


class ApproximantComplex(CellComplex):
    """CellComplex plus the rule, collar level and collared-tile data."""

    def __init__(self, rule, level, cells_by_dim, collared, caveats=(), n0_slots=None):
        self.rule = rule
        self.collared = tuple(collared)
        self.n0_slots = n0_slots
        super().__init__(
            rule.dimension, cells_by_dim, level=level, caveats=caveats
        )


# pattern rectangles per cell kind, relative to the anchor tile at the origin


def _kind_offsets(kind: str, n: int) -> list[Pos]:
    if kind == "E":
        return [(x,) for x in range(-n, n + 1)]
    if kind == "V1":
        return [(x,) for x in range(-n, n)]
    if kind == "F":
        return [(x, y) for x in range(-n, n + 1) for y in range(-n, n + 1)]
    if kind == "EV":
        return [(x, y) for x in range(-n, n) for y in range(-n, n + 1)]
    if kind == "EH":
        return [(x, y) for x in range(-n, n + 1) for y in range(-n, n)]
    if kind == "V2":
        return [(x, y) for x in range(-n, n) for y in range(-n, n)]
    raise ConsistencyError(f"unknown cell kind {kind}")


def _cell_label(kind: str, pattern: Patch) -> bytes:
    return kind.encode() + b"!" + canonical_label(pattern)


def _pattern_from_word(word: str, n: int) -> Patch:
    return Patch.from_word(word, mark=n).translate((-n,))


def _pattern_from_grid(grid, x_off: int, y_off: int) -> Patch:
    cells = tuple(
        ((x - x_off, y - y_off), lab)
        for y, row in enumerate(grid)
        for x, lab in enumerate(row)
    )
    return Patch(2, cells, (0, 0))


def _subpattern(pattern: Patch, kind: str, n: int, anchor: Pos) -> Patch:
    offsets = _kind_offsets(kind, n)
    positions = [tuple(a + o for a, o in zip(anchor, off)) for off in offsets]
    sub = pattern.restrict(positions, mark=anchor)
    return sub.translate(tuple(-a for a in anchor))


def collared_tiles(rule: SubstitutionRule, n: int):
    """The complete set of n-collared tiles, ids sorted by canonical label."""
    if n < 0:
        raise PreconditionError("collar level must be >= 0")
    patterns = _face_patterns(rule, n)
    out = []
    origin = (0,) * rule.dimension
    for i, pat in enumerate(patterns):
        out.append(
            CollaredTile(
                id=i,
                center_label=pat.label_at(origin),
                collar=Corona(center=origin, level=n, patch=pat),
                level=n,
            )
        )
    return tuple(out)


def _face_patterns(rule: SubstitutionRule, n: int) -> list[Patch]:
    if rule.dimension == 1:
        if n == 0:
            words = allowed_words(rule, 1)
            pats = [Patch.from_word(w, mark=0) for w in words]
        else:
            pats = [_pattern_from_word(w, n) for w in allowed_words(rule, 2 * n + 1)]
    else:
        if n == 0:
            grids = allowed_square_patterns(rule, 1)
        else:
            grids = allowed_square_patterns(rule, 2 * n + 1)
        pats = [_pattern_from_grid(g, n, n) for g in grids]
    kind = "E" if rule.dimension == 1 else "F"
    pats.sort(key=lambda p: _cell_label(kind, p))
    return pats


def build_approximant(rule: SubstitutionRule, n: int) -> ApproximantComplex:
    """Assemble the level-n approximant complex.

    Level 0 is allowed but carries the uncollared caveat; levels >= 1 use
    the collared identification throughout.
    """
    if n < 0:
        raise PreconditionError("collar level must be >= 0")
    if n == 0:
        return _build_level0(rule)
    if rule.dimension == 1:
        return _build_1d(rule, n)
    return _build_2d(rule, n)


def _build_1d(rule, n):
    faces = _face_patterns(rule, n)
    vert_patterns = sorted(
        (_pattern_from_word(w, n) for w in allowed_words(rule, 2 * n)),
        key=lambda p: _cell_label("V1", p),
    )
    vertices = [
        Cell(i, 0, _cell_label("V1", p), (), "V1", pattern=p)
        for i, p in enumerate(vert_patterns)
    ]
    vlookup = {c.label: c.id for c in vertices}
    edges = []
    for i, pat in enumerate(faces):
        tail = _cell_label("V1", _subpattern(pat, "V1", n, (0,)))
        head = _cell_label("V1", _subpattern(pat, "V1", n, (1,)))
        edges.append(
            Cell(
                i,
                1,
                _cell_label("E", pat),
                ((vlookup[head], 1), (vlookup[tail], -1)),
                "E",
                pattern=pat,
            )
        )
    collared = collared_tiles(rule, n)
    return ApproximantComplex(rule, n, [vertices, edges], collared)


def _build_2d(rule, n):
    faces = _face_patterns(rule, n)
    vert_patterns = sorted(
        (_pattern_from_grid(g, n, n) for g in allowed_rect_patterns(rule, 2 * n, 2 * n)),
        key=lambda p: _cell_label("V2", p),
    )
    vertices = [
        Cell(i, 0, _cell_label("V2", p), (), "V2", pattern=p)
        for i, p in enumerate(vert_patterns)
    ]
    vlookup = {c.label: c.id for c in vertices}

    ev_patterns = [
        _pattern_from_grid(g, n, n) for g in allowed_rect_patterns(rule, 2 * n, 2 * n + 1)
    ]
    eh_patterns = [
        _pattern_from_grid(g, n, n) for g in allowed_rect_patterns(rule, 2 * n + 1, 2 * n)
    ]
    edge_items = sorted(
        [("EV", p) for p in ev_patterns] + [("EH", p) for p in eh_patterns],
        key=lambda item: _cell_label(item[0], item[1]),
    )
    edges = []
    for i, (kind, pat) in enumerate(edge_items):
        if kind == "EV":
            tail = _subpattern(pat, "V2", n, (0, 0))
            head = _subpattern(pat, "V2", n, (0, 1))
        else:
            tail = _subpattern(pat, "V2", n, (0, 0))
            head = _subpattern(pat, "V2", n, (1, 0))
        edges.append(
            Cell(
                i,
                1,
                _cell_label(kind, pat),
                (
                    (vlookup[_cell_label("V2", head)], 1),
                    (vlookup[_cell_label("V2", tail)], -1),
                ),
                kind,
                pattern=pat,
            )
        )
    elookup = {c.label: c.id for c in edges}

    squares = []
    for i, pat in enumerate(faces):
        bottom = elookup[_cell_label("EH", _subpattern(pat, "EH", n, (0, 0)))]
        right = elookup[_cell_label("EV", _subpattern(pat, "EV", n, (1, 0)))]
        top = elookup[_cell_label("EH", _subpattern(pat, "EH", n, (0, 1)))]
        left = elookup[_cell_label("EV", _subpattern(pat, "EV", n, (0, 0)))]
        loop = ((bottom, 1), (right, 1), (top, -1), (left, -1))
        squares.append(
            Cell(i, 2, _cell_label("F", pat), loop, "F", pattern=pat, loop=loop)
        )
    collared = collared_tiles(rule, n)
    return ApproximantComplex(rule, n, [vertices, edges, squares], collared)


# -- level 0: identifications by the transitive closure of adjacencies


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb

    def classes(self):
        out = {}
        for x in self.parent:
            out.setdefault(self.find(x), []).append(x)
        return [tuple(sorted(v)) for v in out.values()]


def _class_cells(uf, kind):
    classes = sorted(uf.classes())
    labels = [
        f"{kind}!{';'.join('/'.join(map(str, m)) for m in members)}".encode()
        for members in classes
    ]
    order = sorted(range(len(classes)), key=lambda i: labels[i])
    id_of_slot = {}
    ordered = []
    for rank, i in enumerate(order):
        ordered.append((labels[i], classes[i]))
        for member in classes[i]:
            id_of_slot[member] = rank
    return ordered, id_of_slot


def _build_level0(rule):
    caveats = (UNCOLLARED_CAVEAT,)
    if rule.dimension == 1:
        letters = list(allowed_words(rule, 1))
        pairs = allowed_words(rule, 2)
        uf = _UnionFind([(a, s) for a in letters for s in ("L", "R")])
        for w in pairs:
            uf.union((w[0], "R"), (w[1], "L"))
        vclasses, vslot = _class_cells(uf, "V0", 0)
        vertices = [
            Cell(i, 0, label, (), "V0") for i, (label, _members) in enumerate(vclasses)
        ]
        faces = _face_patterns(rule, 0)
        edges = []
        for i, pat in enumerate(faces):
            letter = pat.label_at((0,))
            edges.append(
                Cell(
                    i,
                    1,
                    _cell_label("E", pat),
                    ((vslot[(letter, "R")], 1), (vslot[(letter, "L")], -1)),
                    "E",
                    pattern=pat,
                )
            )
        collared = collared_tiles(rule, 0)
        return ApproximantComplex(
            rule, 0, [vertices, edges], collared, caveats=caveats,
            n0_slots={"V": vslot},
        )

    letters = [g[0][0] for g in allowed_square_patterns(rule, 1)]
    squares2 = allowed_square_patterns(rule, 2)
    euf = _UnionFind([(a, s) for a in letters for s in ("L", "R", "B", "T")])
    vuf = _UnionFind([(a, s) for a in letters for s in ("BL", "BR", "TL", "TR")])
    for g in squares2:
        bl, br = g[0][0], g[0][1]
        tl, tr = g[1][0], g[1][1]
        # shared edges inside the 2x2 block
        euf.union((bl, "R"), (br, "L"))
        euf.union((tl, "R"), (tr, "L"))
        euf.union((bl, "T"), (tl, "B"))
        euf.union((br, "T"), (tr, "B"))
        # vertex identifications from horizontal and vertical adjacency
        vuf.union((bl, "BR"), (br, "BL"))
        vuf.union((bl, "TR"), (br, "TL"))
        vuf.union((tl, "BR"), (tr, "BL"))
        vuf.union((tl, "TR"), (tr, "TL"))
        vuf.union((bl, "TL"), (tl, "BL"))
        vuf.union((bl, "TR"), (tl, "BR"))
        vuf.union((br, "TL"), (tr, "BL"))
        vuf.union((br, "TR"), (tr, "BR"))
        # the center point of the block
        vuf.union((bl, "TR"), (tr, "BL"))
    vclasses, vslot = _class_cells(vuf, "V0", 0)
    vertices = [Cell(i, 0, label, (), "V0") for i, (label, _m) in enumerate(vclasses)]

    eclasses, eslot = _class_cells(euf, "E0", 1)
    # edge orientation per class: vertical classes contain L/R slots only
    edges = []
    for i, (label, members) in enumerate(eclasses):
        letter, side = members[0]
        if side in ("L", "R"):
            if side == "L":
                tail, head = (letter, "BL"), (letter, "TL")
            else:
                tail, head = (letter, "BR"), (letter, "TR")
        else:
            if side == "B":
                tail, head = (letter, "BL"), (letter, "BR")
            else:
                tail, head = (letter, "TL"), (letter, "TR")
        edges.append(
            Cell(
                i,
                1,
                label,
                ((vslot[head], 1), (vslot[tail], -1)),
                "EV0" if side in ("L", "R") else "EH0",
            )
        )
    faces = _face_patterns(rule, 0)
    squares = []
    for i, pat in enumerate(faces):
        a = pat.label_at((0, 0))
        loop = (
            (eslot[(a, "B")], 1),
            (eslot[(a, "R")], 1),
            (eslot[(a, "T")], -1),
            (eslot[(a, "L")], -1),
        )
        squares.append(Cell(i, 2, _cell_label("F", pat), loop, "F", pattern=pat, loop=loop))
    collared = collared_tiles(rule, 0)
    return ApproximantComplex(
        rule, 0, [vertices, edges, squares], collared, caveats=caveats,
        n0_slots={"V": vslot, "E": eslot},
    )


# ---------------------------------------------------------------------------
# cellular maps


@dataclass(frozen=True)
class CellularMap:
    """Chain map between approximant complexes.

    matrices[k] has one column per source k-cell holding the signed image
    chain.  For degree <= 1 the geometric data is kept too: the image vertex
    of each vertex, and the ordered image edge path of each edge.
    """

    source: CellComplex
    target: CellComplex
    matrices: tuple[IntMatrix, ...]
    vertex_images: tuple[int, ...]
    edge_paths: tuple[tuple[tuple[int, int], ...], ...]

    def chain_matrix(self, k: int) -> IntMatrix:
        return self.matrices[k]

    def verify_commutation(self) -> bool:
        for k in range(1, self.source.dimension + 1):
            left = self.target.boundary_matrix(k) @ self.matrices[k]
            right = self.matrices[k - 1] @ self.source.boundary_matrix(k)
            if left != right:
                return False
        return True

    def compose(self, inner: "CellularMap") -> "CellularMap":
        """self o inner (inner applied first)."""
        if inner.target is not self.source:
            raise PreconditionError("cellular maps do not compose")
        mats = tuple(
            self.matrices[k] @ inner.matrices[k] for k in range(len(inner.matrices))
        )
        vimgs = tuple(self.vertex_images[v] for v in inner.vertex_images)
        paths = []
        for path in inner.edge_paths:
            out = []
            for e, s in path:
                seg = self.edge_paths[e]
                if s == 1:
                    out.extend(seg)
                else:
                    out.extend((e2, -s2) for e2, s2 in reversed(seg))
            paths.append(tuple(out))
        return CellularMap(inner.source, self.target, mats, vimgs, tuple(paths))


def _chain_matrices_from_images(source, target, images_by_dim):
    mats = []
    for k in range(source.dimension + 1):
        mat = IntMatrix.zeros(target.cell_count(k), source.cell_count(k))
        for j, chain in enumerate(images_by_dim[k]):
            for cell_id, coeff in chain:
                mat.data[cell_id][j] += coeff
        mats.append(mat)
    return tuple(mats)


def _finish_map(source, target, images_by_dim) -> CellularMap:
    mats = _chain_matrices_from_images(source, target, images_by_dim)
    vimgs = tuple(images_by_dim[0][j][0][0] for j in range(source.cell_count(0)))
    paths = tuple(tuple(chain) for chain in images_by_dim[1]) if source.dimension >= 1 else ()
    cmap = CellularMap(source, target, mats, vimgs, paths)
    if not cmap.verify_commutation():
        raise ConsistencyError("cellular map does not commute with the boundary")
    return cmap


def identity_map(complex_: CellComplex) -> CellularMap:
    images = [
        [((c.id, 1),) for c in complex_.cells(k)] for k in range(complex_.dimension + 1)
    ]
    return _finish_map(complex_, complex_, images)


def forgetful_map(source: ApproximantComplex, target: ApproximantComplex) -> CellularMap:
    """The corona-truncation map from a higher collar level to a lower one."""
    if source.rule != target.rule:
        raise PreconditionError("forgetful map requires the same rule on both sides")
    if source.level <= target.level:
        raise PreconditionError("forgetful map requires source level > target level")
    n = target.level
    images = [[] for _ in range(source.dimension + 1)]
    if n >= 1:
        for k in range(source.dimension + 1):
            for cell in source.cells(k):
                pat = _subpattern(cell.pattern, cell.kind, n, (0,) * source.dimension)
                tid = target.cell_id(k, _cell_label(cell.kind, pat))
                images[k].append(((tid, 1),))
    else:
        vslot = target.n0_slots["V"]
        for cell in source.cells(0):
            letter = cell.pattern.label_at((0,) * source.dimension)
            slot = (letter, "L") if source.dimension == 1 else (letter, "BL")
            images[0].append(((vslot[slot], 1),))
        if source.dimension == 1:
            for cell in source.cells(1):
                letter = cell.pattern.label_at((0,))
                pat = Patch.single(1, letter)
                images[1].append(((target.cell_id(1, _cell_label("E", pat)), 1),))
        else:
            eslot = target.n0_slots["E"]
            for cell in source.cells(1):
                letter = cell.pattern.label_at((0, 0))
                side = "L" if cell.kind == "EV" else "B"
                images[1].append(((eslot[(letter, side)], 1),))
            for cell in source.cells(2):
                letter = cell.pattern.label_at((0, 0))
                pat = Patch.single(2, letter)
                images[2].append(((target.cell_id(2, _cell_label("F", pat)), 1),))
    return _finish_map(source, target, images)


def _expand_pattern(rule, pattern: Patch) -> Patch:
    """One substitution step keeping the anchor's image block at the origin."""
    if rule.dimension == 1:
        cells = []
        xs = sorted(p[0] for p, _ in pattern.cells)
        lookup = {p[0]: lab for p, lab in pattern.cells}
        start = {}
        start[0] = 0
        for x in range(1, max(xs) + 1):
            start[x] = start[x - 1] + len(rule.image_word(lookup[x - 1]))
        for x in range(-1, min(xs) - 1, -1):
            start[x] = start[x + 1] - len(rule.image_word(lookup[x]))
        for x in xs:
            img = rule.image_word(lookup[x])
            for j, lab in enumerate(img):
                cells.append(((start[x] + j,), lab))
        return Patch(1, tuple(cells), (0,))
    b = rule.expansion
    cells = []
    for (x, y), lab in pattern.cells:
        block = rule.image_block(lab)
        for yy in range(b):
            for xx in range(b):
                cells.append(((b * x + xx, b * y + yy), block[yy][xx]))
    return Patch(2, tuple(cells), (0, 0))


def substitution_map(complex_: ApproximantComplex) -> CellularMap:
    """Self-map of a collared approximant induced by one substitution step.

    Refused for rules not declared aperiodic: for periodic hulls the
    inverse limit along this map is a solenoid rather than the hull, so the
    tower route must be used instead.
    """
    rule = complex_.rule
    if rule.declared_aperiodic is not True:
        raise PreconditionError(
            "substitution route refused: rule is not declared aperiodic; for "
            "periodic hulls this route computes a solenoid, use the tower route"
        )
    n = complex_.level
    if n < 1:
        raise PreconditionError("substitution route requires collar level >= 1")
    images = [[] for _ in range(complex_.dimension + 1)]
    if rule.dimension == 1:
        for cell in complex_.cells(0):
            big = _expand_pattern(rule, cell.pattern)
            pat = _subpattern(big, "V1", n, (0,))
            images[0].append(((complex_.cell_id(0, _cell_label("V1", pat)), 1),))
        for cell in complex_.cells(1):
            big = _expand_pattern(rule, cell.pattern)
            length = len(rule.image_word(cell.pattern.label_at((0,))))
            chain = []
            for j in range(length):
                pat = _subpattern(big, "E", n, (j,))
                chain.append((complex_.cell_id(1, _cell_label("E", pat)), 1))
            images[1].append(tuple(chain))
    else:
        b = rule.expansion
        for cell in complex_.cells(0):
            big = _expand_pattern(rule, cell.pattern)
            pat = _subpattern(big, "V2", n, (0, 0))
            images[0].append(((complex_.cell_id(0, _cell_label("V2", pat)), 1),))
        for cell in complex_.cells(1):
            big = _expand_pattern(rule, cell.pattern)
            chain = []
            for j in range(b):
                anchor = (0, j) if cell.kind == "EV" else (j, 0)
                pat = _subpattern(big, cell.kind, n, anchor)
                chain.append((complex_.cell_id(1, _cell_label(cell.kind, pat)), 1))
            images[1].append(tuple(chain))
        for cell in complex_.cells(2):
            big = _expand_pattern(rule, cell.pattern)
            chain = []
            for i in range(b):
                for j in range(b):
                    pat = _subpattern(big, "F", n, (i, j))
                    chain.append((complex_.cell_id(2, _cell_label("F", pat)), 1))
            images[2].append(tuple(chain))
    return _finish_map(complex_, complex_, images)


# ---------------------------------------------------------------------------
# cochain descent and pullback


@dataclass(frozen=True)
class Cochain:
    complex: CellComplex
    degree: int
    values: tuple[int, ...]

    def __post_init__(self):
        if len(self.values) != self.complex.cell_count(self.degree):
            raise PreconditionError("cochain values must cover every cell of the degree")

    def value(self, cell_id: int) -> int:
        return self.values[cell_id]

    def coboundary(self) -> "Cochain":
        k = self.degree
        if k >= self.complex.dimension:
            return Cochain(self.complex, k + 1, ())
        delta = self.complex.boundary_matrix(k + 1).transpose()
        return Cochain(self.complex, k + 1, tuple(delta.apply(list(self.values))))


def descend_cochain(
    complex_: ApproximantComplex, assignment, degree: int | None = None
) -> Cochain:
    """Build the cochain on the approximant from a context-label assignment.

    Keys may be full cell labels (bytes), canonical labels of the cells'
    pointed context patterns, or the patterns themselves.
    """
    normalized = {}
    for key, value in assignment.items():
        if isinstance(key, Patch):
            normalized[canonical_label(key)] = value
        elif isinstance(key, bytes):
            normalized[key] = value
        else:
            raise PreconditionError("assignment keys must be labels or pointed patches")

    def keys_for(cell):
        yield cell.label
        if cell.pattern is not None:
            yield canonical_label(cell.pattern)

    candidates = []
    for k in range(complex_.dimension + 1):
        if any(
            key in normalized for cell in complex_.cells(k) for key in keys_for(cell)
        ):
            candidates.append(k)
    if degree is None:
        if len(candidates) != 1:
            raise PreconditionError(
                f"cannot infer the degree of the assignment (candidates {candidates})"
            )
        degree = candidates[0]
    values = []
    missing = []
    for cell in complex_.cells(degree):
        for key in keys_for(cell):
            if key in normalized:
                values.append(normalized[key])
                break
        else:
            missing.append(cell.label.decode("utf-8", "replace"))
    if missing:
        raise PreconditionError(
            "assignment does not cover every cell: missing "
            + ", ".join(m[:60] for m in missing[:8])
            + (" ..." if len(missing) > 8 else "")
        )
    return Cochain(complex_, degree, tuple(values))


@dataclass(frozen=True)
class PatchCochain:
    host: Patch
    degree: int
    values: tuple[tuple[tuple, int], ...]  # ((descriptor, value), ...)
    undetermined: tuple[tuple, ...]

    def value_map(self) -> dict:
        return dict(self.values)


def host_cells(host: Patch, degree: int) -> list[tuple]:
    """Descriptors of the grid cells of the given degree touching the host."""
    if host.dimension == 1:
        xs = sorted(p[0] for p, _ in host.cells)
        if degree == 1:
            return [("edge", (x,)) for x in xs]
        if degree == 0:
            return [("vertex", (x,)) for x in range(xs[0], xs[-1] + 2)]
        raise PreconditionError("1D hosts have cells in degrees 0 and 1")
    tiles = {p for p, _ in host.cells}
    if degree == 2:
        return [("face", p) for p in sorted(tiles)]
    if degree == 1:
        out = set()
        for (x, y) in tiles:
            out.update({("ev", (x, y)), ("ev", (x + 1, y)), ("eh", (x, y)), ("eh", (x, y + 1))})
        return sorted(out)
    if degree == 0:
        out = set()
        for (x, y) in tiles:
            out.update(
                {("vertex", (x, y)), ("vertex", (x + 1, y)), ("vertex", (x, y + 1)), ("vertex", (x + 1, y + 1))}
            )
        return sorted(out)
    raise PreconditionError("2D hosts have cells in degrees 0, 1 and 2")


def _descriptor_kind_anchor(descriptor, dimension):
    kind_map_1d = {"edge": "E", "vertex": "V1"}
    kind_map_2d = {"face": "F", "ev": "EV", "eh": "EH", "vertex": "V2"}
    name, anchor = descriptor
    kind = (kind_map_1d if dimension == 1 else kind_map_2d)[name]
    return kind, tuple(anchor)


def context_of(host: Patch, descriptor, level: int) -> Patch | None:
    """The level-n context pattern of a host grid cell, or None if the host
    is too small to determine it."""
    kind, anchor = _descriptor_kind_anchor(descriptor, host.dimension)
    offsets = _kind_offsets(kind, level)
    try:
        sub = host.restrict(
            [tuple(a + o for a, o in zip(anchor, off)) for off in offsets], mark=anchor
        )
    except Exception:
        return None
    return sub.translate(tuple(-a for a in anchor))


def pullback_cochain(cochain: Cochain, host: Patch) -> PatchCochain:
    """Evaluate an approximant cochain on a finite window.

    Cells whose level-n context is not determined inside the host are
    reported as undetermined, never defaulted.
    """
    complex_ = cochain.complex
    if not isinstance(complex_, ApproximantComplex) or complex_.level < 1:
        raise PreconditionError("pullback requires a collared approximant cochain")
    if host.dimension != complex_.dimension:
        raise PreconditionError("host dimension does not match the complex")
    n = complex_.level
    values = []
    undetermined = []
    for descriptor in host_cells(host, cochain.degree):
        pat = context_of(host, descriptor, n)
        if pat is None:
            undetermined.append(descriptor)
            continue
        kind, _anchor = _descriptor_kind_anchor(descriptor, host.dimension)
        cid = complex_.cell_id(cochain.degree, _cell_label(kind, pat))
        values.append((descriptor, cochain.value(cid)))
    return PatchCochain(host, cochain.degree, tuple(values), tuple(undetermined))


def host_coboundary(pc: PatchCochain) -> PatchCochain:
    """Coboundary of a window cochain, defined where the whole boundary is."""
    host = pc.host
    vals = pc.value_map()
    out = []
    undet = []
    if host.dimension == 1:
        if pc.degree != 0:
            raise PreconditionError("1D window coboundary only from degree 0")
        for desc in host_cells(host, 1):
            (x,) = desc[1]
            head, tail = ("vertex", (x + 1,)), ("vertex", (x,))
            if head in vals and tail in vals:
                out.append((desc, vals[head] - vals[tail]))
            else:
                undet.append(desc)
        return PatchCochain(host, 1, tuple(out), tuple(undet))
    if pc.degree == 0:
        for desc in host_cells(host, 1):
            kind, (x, y) = desc
            if kind == "ev":
                head, tail = ("vertex", (x, y + 1)), ("vertex", (x, y))
            else:
                head, tail = ("vertex", (x + 1, y)), ("vertex", (x, y))
            if head in vals and tail in vals:
                out.append((desc, vals[head] - vals[tail]))
            else:
                undet.append(desc)
        return PatchCochain(host, 1, tuple(out), tuple(undet))
    if pc.degree == 1:
        for desc in host_cells(host, 2):
            _, (x, y) = desc
            parts = [
                (("eh", (x, y)), 1),
                (("ev", (x + 1, y)), 1),
                (("eh", (x, y + 1)), -1),
                (("ev", (x, y)), -1),
            ]
            if all(p in vals for p, _ in parts):
                out.append((desc, sum(s * vals[p] for p, s in parts)))
            else:
                undet.append(desc)
        return PatchCochain(host, 2, tuple(out), tuple(undet))
    raise PreconditionError("no window coboundary from the top degree")
