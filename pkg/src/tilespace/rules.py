"""Substitution rules, patches, coronas and translation equivalence.

Geometry is restricted to 1D unit-interval tiles and 2D unit-square block
substitutions with one integer expansion factor, so every coordinate is an
integer and all equivalence tests are exact.  "Combinatorial radius r"
always means the r-th closed-star corona (in 2D this includes the
corner-adjacent squares).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property, lru_cache
from importlib import resources
from math import sqrt
from typing import Iterable, Mapping

from .errors import BudgetError, PreconditionError, SchemaError, UndeterminedError

Pos = tuple[int, ...]
Grid = tuple[tuple[str, ...], ...]  # rows indexed by y ascending, row = labels by x

EXPANSION_CELL_BUDGET = 4_000_000
ENUMERATION_ROUND_CAP = 64


# ---------------------------------------------------------------------------
# rules


@dataclass(frozen=True)
class SubstitutionRule:
    """A 1D symbolic or 2D block substitution.

    ``images`` is aligned with ``alphabet``: for 1D each entry is a word
    (string of single-character labels), for 2D a B x B grid stored as rows
    with y ascending (row 0 is the bottom row).
    """

    dimension: int
    alphabet: tuple[str, ...]
    images: tuple
    expansion: int | None
    declared_aperiodic: bool | None

    def index(self, label: str) -> int:
        try:
            return self.alphabet.index(label)
        except ValueError:
            raise SchemaError(f"unknown label {label!r}") from None

    def image_word(self, label: str) -> str:
        return self.images[self.index(label)]

    def image_block(self, label: str) -> Grid:
        return self.images[self.index(label)]

    def abelianization(self) -> list[list[int]]:
        """M[i][j] = occurrences of letter i in the image of letter j."""
        k = len(self.alphabet)
        m = [[0] * k for _ in range(k)]
        for j, label in enumerate(self.alphabet):
            if self.dimension == 1:
                for c in self.images[j]:
                    m[self.index(c)][j] += 1
            else:
                for row in self.images[j]:
                    for c in row:
                        m[self.index(c)][j] += 1
        return m

    @property
    def tile_diameter_sq(self) -> int:
        """Squared diameter of a tile: 1 for unit intervals, 2 for squares."""
        return self.dimension


def parse_rule(document: str | Mapping) -> SubstitutionRule:
    """Parse a rule document (JSON text or an already-decoded mapping)."""
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from None
    else:
        doc = document
    if not isinstance(doc, Mapping):
        raise SchemaError("rule document must be a JSON object")

    dim = doc.get("dimension")
    if dim not in (1, 2):
        raise SchemaError("key 'dimension' must be 1 or 2")
    tiles = doc.get("tiles")
    if (
        not isinstance(tiles, list)
        or not tiles
        or not all(isinstance(t, str) and t for t in tiles)
    ):
        raise SchemaError("key 'tiles' must be a nonempty array of labels")
    if len(set(tiles)) != len(tiles):
        raise SchemaError("key 'tiles' contains duplicate labels")
    if dim == 1 and any(len(t) != 1 for t in tiles):
        raise SchemaError("key 'tiles': 1D labels must be single characters")

    expansion = doc.get("expansion")
    if dim == 2:
        if not isinstance(expansion, int) or expansion < 2:
            raise SchemaError("key 'expansion' must be an integer >= 2 for 2D rules")
    elif expansion is not None:
        raise SchemaError("key 'expansion' is only valid for 2D rules")

    rule_map = doc.get("rule")
    if not isinstance(rule_map, Mapping) or set(rule_map) != set(tiles):
        raise SchemaError("key 'rule' must map every tile label to its image")

    images = []
    for label in tiles:
        img = rule_map[label]
        if dim == 1:
            if not isinstance(img, str) or not img:
                raise SchemaError(f"rule[{label!r}]: 1D image must be a nonempty word")
            for c in img:
                if c not in tiles:
                    raise SchemaError(f"rule[{label!r}]: unknown label {c!r}")
            images.append(img)
        else:
            if not isinstance(img, list) or len(img) != expansion:
                raise SchemaError(f"rule[{label!r}]: ragged block, expected {expansion} rows")
            for row in img:
                if not isinstance(row, list) or len(row) != expansion:
                    raise SchemaError(
                        f"rule[{label!r}]: ragged block, expected {expansion}x{expansion}"
                    )
                for c in row:
                    if c not in tiles:
                        raise SchemaError(f"rule[{label!r}]: unknown label {c!r}")
            # file rows are listed top-to-bottom; store with y ascending
            images.append(tuple(tuple(row) for row in reversed(img)))

    aperiodic = doc.get("aperiodic")
    if aperiodic is not None and not isinstance(aperiodic, bool):
        raise SchemaError("key 'aperiodic' must be a boolean")

    return SubstitutionRule(
        dimension=dim,
        alphabet=tuple(tiles),
        images=tuple(images),
        expansion=expansion,
        declared_aperiodic=aperiodic,
    )


def load_rule(path) -> SubstitutionRule:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_rule(fh.read())


def bundled_rule_path(name: str):
    """Path of a rule document shipped with the package."""
    return resources.files("tilespace.data").joinpath(f"{name}.json")


def bundled_rule(name: str) -> SubstitutionRule:
    return parse_rule(bundled_rule_path(name).read_text(encoding="utf-8"))


BUNDLED_RULES = (
    "fibonacci",
    "thue_morse",
    "period_doubling",
    "periodic_1d",
    "periodic_2d",
    "chair_block",
)


@dataclass(frozen=True)
class ValidationReport:
    primitive: bool
    primitivity_power: int | None
    abelianization: tuple[tuple[int, ...], ...]
    expansion: Mapping
    declared_aperiodic: bool | None
    warnings: tuple[str, ...]
    notes: tuple[str, ...]


def validate_rule(rule: SubstitutionRule) -> ValidationReport:
    """Report-only sanity data: primitivity, abelianization, expansion."""
    m = rule.abelianization()
    k = len(rule.alphabet)
    power = None
    b = [row[:] for row in m]
    for p in range(1, k * k + 1):
        if all(x > 0 for row in b for x in row):
            power = p
            break
        b = [[sum(b[i][t] * m[t][j] for t in range(k)) for j in range(k)] for i in range(k)]

    warnings = []
    notes = []
    if rule.declared_aperiodic is None:
        warnings.append("aperiodicity not declared; substitution-route operations will refuse")
    if k == 1:
        warnings.append("periodic hull: approximant tower constant")
    if rule.dimension == 1:
        expansion = {"image_lengths": {a: len(rule.image_word(a)) for a in rule.alphabet}}
    else:
        expansion = {"block": rule.expansion}
    notes.append(
        "pattern enumeration stabilizes on a double round; sound for linearly "
        "recurrent substitutions, heuristic in general"
    )
    return ValidationReport(
        primitive=power is not None,
        primitivity_power=power,
        abelianization=tuple(tuple(row) for row in m),
        expansion=expansion,
        declared_aperiodic=rule.declared_aperiodic,
        warnings=tuple(warnings),
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# patches


@dataclass(frozen=True)
class Patch:
    """A finite labeled fragment of the integer grid, optionally pointed.

    ``cells`` is a sorted tuple of (position, label); the support must be
    connected through shared faces.
    """

    dimension: int
    cells: tuple[tuple[Pos, str], ...]
    mark: Pos | None = None

    def __post_init__(self):
        if not self.cells:
            raise SchemaError("patch must contain at least one cell")
        object.__setattr__(self, "cells", tuple(sorted(self.cells)))
        seen = set()
        for pos, _label in self.cells:
            if len(pos) != self.dimension:
                raise SchemaError("cell position arity does not match dimension")
            if pos in seen:
                raise SchemaError(f"duplicate cell position {pos}")
            seen.add(pos)
        if self.mark is not None and self.mark not in seen:
            raise SchemaError("mark must be an occupied position")
        if not _connected(seen, self.dimension):
            raise SchemaError("patch support is not face-connected")

    @cached_property
    def _lookup(self) -> dict[Pos, str]:
        return dict(self.cells)

    # -- constructors

    @staticmethod
    def from_word(word: str, mark: int | None = None) -> "Patch":
        cells = tuple(((i,), c) for i, c in enumerate(word))
        return Patch(1, cells, None if mark is None else (mark,))

    @staticmethod
    def from_grid(grid: Grid, mark: Pos | None = None) -> "Patch":
        cells = tuple(
            ((x, y), label) for y, row in enumerate(grid) for x, label in enumerate(row)
        )
        return Patch(2, cells, mark)

    @staticmethod
    def single(dimension: int, label: str) -> "Patch":
        origin = (0,) * dimension
        return Patch(dimension, (((origin), label),), origin)

    # -- queries

    def positions(self) -> frozenset[Pos]:
        return frozenset(self._lookup)

    def label_at(self, pos: Pos) -> str | None:
        return self._lookup.get(pos)

    def __len__(self) -> int:
        return len(self.cells)

    def bbox(self) -> tuple[Pos, Pos]:
        lo = tuple(min(p[i] for p, _ in self.cells) for i in range(self.dimension))
        hi = tuple(max(p[i] for p, _ in self.cells) for i in range(self.dimension))
        return lo, hi

    def word(self) -> str:
        if self.dimension != 1:
            raise PreconditionError("word() is only defined for 1D patches")
        xs = sorted(p[0] for p, _ in self.cells)
        if xs != list(range(xs[0], xs[0] + len(xs))):
            raise PreconditionError("1D patch is not contiguous")
        return "".join(self._lookup[(x,)] for x in xs)

    # -- transforms

    def translate(self, vec: Pos) -> "Patch":
        cells = tuple((tuple(a + b for a, b in zip(pos, vec)), lab) for pos, lab in self.cells)
        mark = None if self.mark is None else tuple(a + b for a, b in zip(self.mark, vec))
        return Patch(self.dimension, cells, mark)

    def with_mark(self, mark: Pos | None) -> "Patch":
        return Patch(self.dimension, self.cells, mark)

    def canonical(self) -> "Patch":
        """Translate so the lexicographically least occupied position is 0."""
        least = min(p for p, _ in self.cells)
        return self.translate(tuple(-c for c in least))

    def restrict(self, positions: Iterable[Pos], mark: Pos | None = None) -> "Patch":
        wanted = []
        for pos in positions:
            label = self._lookup.get(tuple(pos))
            if label is None:
                raise UndeterminedError(f"position {tuple(pos)} missing from patch")
            wanted.append((tuple(pos), label))
        return Patch(self.dimension, tuple(wanted), mark)


def _connected(positions: set[Pos], dim: int) -> bool:
    start = next(iter(positions))
    seen = {start}
    frontier = [start]
    while frontier:
        pos = frontier.pop()
        for axis in range(dim):
            for step in (-1, 1):
                nxt = tuple(c + step if i == axis else c for i, c in enumerate(pos))
                if nxt in positions and nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
    return len(seen) == len(positions)


def canonical_label(patch: Patch) -> bytes:
    """Translation-invariant label of a pointed patch.

    Two pointed patches get equal labels iff one is a translate of the other
    carrying the mark correspondingly.
    """
    if patch.mark is None:
        raise PreconditionError("canonical_label requires a pointed patch")
    canon = patch.canonical()
    body = ";".join(f"{','.join(map(str, pos))}:{lab}" for pos, lab in canon.cells)
    mark = ",".join(map(str, canon.mark))
    return f"{patch.dimension}|{body}|m{mark}".encode()


# ---------------------------------------------------------------------------
# expansion


def _expand_word_once(rule: SubstitutionRule, word: str) -> str:
    return "".join(rule.image_word(c) for c in word)


def _expand_grid_once(rule: SubstitutionRule, grid: Grid) -> Grid:
    b = rule.expansion
    out = []
    for row in grid:
        blocks = [rule.image_block(c) for c in row]
        for yy in range(b):
            out.append(tuple(lab for blk in blocks for lab in blk[yy]))
    return tuple(out)


def expand_patch(rule: SubstitutionRule, patch: Patch, iterations: int) -> Patch:
    """Apply the substitution ``iterations`` times and canonicalize."""
    if iterations < 0:
        raise PreconditionError("iterations must be >= 0")
    if patch.dimension != rule.dimension:
        raise PreconditionError("patch dimension does not match rule")
    current = patch
    for _ in range(iterations):
        if rule.dimension == 1:
            base = current.canonical()
            word = base.word()
            new_cells = []
            mark = None
            x = 0
            for i, c in enumerate(word):
                img = rule.image_word(c)
                if base.mark == (i,):
                    mark = (x,)
                for j, lab in enumerate(img):
                    new_cells.append(((x + j,), lab))
                x += len(img)
            if x > EXPANSION_CELL_BUDGET:
                raise BudgetError(f"expansion exceeds {EXPANSION_CELL_BUDGET} cells")
            current = Patch(1, tuple(new_cells), mark)
        else:
            b = rule.expansion
            if len(current) * b * b > EXPANSION_CELL_BUDGET:
                raise BudgetError(f"expansion exceeds {EXPANSION_CELL_BUDGET} cells")
            new_cells = []
            for (x, y), lab in current.cells:
                block = rule.image_block(lab)
                for yy in range(b):
                    for xx in range(b):
                        new_cells.append(((b * x + xx, b * y + yy), block[yy][xx]))
            mark = None
            if current.mark is not None:
                mark = (b * current.mark[0], b * current.mark[1])
            current = Patch(2, tuple(new_cells), mark)
    return current.canonical()


# ---------------------------------------------------------------------------
# coronas and T-equivalence


@dataclass(frozen=True)
class Corona:
    """The closed-star corona of a given level around a center tile."""

    center: Pos
    level: int
    patch: Patch

    def __post_init__(self):
        if self.level < 0:
            raise PreconditionError("corona level must be >= 0")


def _star_positions(center: Pos, level: int) -> list[Pos]:
    if len(center) == 1:
        return [(x,) for x in range(center[0] - level, center[0] + level + 1)]
    cx, cy = center
    return [
        (x, y)
        for x in range(cx - level, cx + level + 1)
        for y in range(cy - level, cy + level + 1)
    ]


def corona(rule: SubstitutionRule, host: Patch, center: Pos, n: int) -> Corona:
    """The level-n closed-star corona of ``center`` inside ``host``."""
    if n < 0:
        raise PreconditionError("corona level must be >= 0")
    center = tuple(center)
    if host.label_at(center) is None:
        raise PreconditionError(f"center {center} is not a cell of the host patch")
    try:
        sub = host.restrict(_star_positions(center, n), mark=center)
    except UndeterminedError:
        raise UndeterminedError(f"corona undetermined: level {n} around {center}") from None
    return Corona(center=center, level=n, patch=sub)


def t_equivalent(ctx1: Patch, ctx2: Patch, r: int) -> bool:
    """True iff the radius-r star contexts around the marks are translates."""
    if ctx1.mark is None or ctx2.mark is None:
        raise PreconditionError("t_equivalent requires pointed patches")
    if ctx1.dimension != ctx2.dimension:
        raise PreconditionError("patches have different dimensions")
    subs = []
    for ctx in (ctx1, ctx2):
        try:
            subs.append(ctx.restrict(_star_positions(ctx.mark, r), mark=ctx.mark))
        except UndeterminedError:
            raise UndeterminedError(f"context undetermined to radius {r}") from None
    a = subs[0].translate(tuple(-c for c in subs[0].mark))
    b = subs[1].translate(tuple(-c for c in subs[1].mark))
    return a.cells == b.cells


@dataclass(frozen=True)
class RadiusBound:
    """Exact metric radius (n+1) * L beyond which T-equivalence forces equal
    images in the level-n approximant.  L is the tile diameter: 1 in 1D,
    sqrt(2) for unit squares."""

    steps: int
    dimension: int

    @property
    def value(self) -> float:
        return self.steps * sqrt(self.dimension)

    def __str__(self) -> str:
        if self.dimension == 1:
            return str(self.steps)
        return f"{self.steps}*sqrt(2)"


def pe_radius_bound(rule: SubstitutionRule, n: int) -> RadiusBound:
    if n < 0:
        raise PreconditionError("collar level must be >= 0")
    return RadiusBound(steps=n + 1, dimension=rule.dimension)


# ---------------------------------------------------------------------------
# language enumeration
#
# Allowed patterns of a fixed shape are generated by substituting pattern
# sets of a smaller shape, which keeps every intermediate object polynomial
# in the answer size.  Seeds always include windows of small powers applied
# to single letters, and the base-size fixed point stops only after two
# consecutive rounds without growth.


def _require_primitive(rule: SubstitutionRule):
    if len(rule.alphabet) == 1:
        return
    if not validate_rule(rule).primitive:
        raise PreconditionError("unsupported: rule is not primitive")


def _windows_1d(word: str, m: int) -> set[str]:
    return {word[i : i + m] for i in range(len(word) - m + 1)}


@lru_cache(maxsize=None)
def allowed_words(rule: SubstitutionRule, length: int) -> tuple[str, ...]:
    """All length-``length`` words of the substitution language, sorted."""
    if rule.dimension != 1:
        raise PreconditionError("allowed_words requires a 1D rule")
    if length < 1:
        raise PreconditionError("length must be >= 1")
    if len(rule.alphabet) == 1:
        return (rule.alphabet[0] * length,)
    _require_primitive(rule)
    found: set[str] = set()
    words = {a: a for a in rule.alphabet}
    stable_rounds = 0
    for rounds in range(1, ENUMERATION_ROUND_CAP + 1):
        words = {a: _expand_word_once(rule, w) for a, w in words.items()}
        total = sum(len(w) for w in words.values())
        if total > EXPANSION_CELL_BUDGET:
            raise BudgetError(f"language enumeration budget exhausted after {rounds} rounds")
        before = len(found)
        extracting = False
        for w in words.values():
            if len(w) >= length:
                extracting = True
                found |= _windows_1d(w, length)
        if extracting and len(found) == before:
            stable_rounds += 1
            if stable_rounds >= 2:
                return tuple(sorted(found))
        else:
            stable_rounds = 0
    raise BudgetError(f"no stabilization after {ENUMERATION_ROUND_CAP} rounds")


def _grid_windows_fast(grid: Grid, w: int, h: int) -> set[Grid]:
    rows = len(grid)
    cols = len(grid[0]) if rows else 0
    out: set[Grid] = set()
    for y0 in range(rows - h + 1):
        band = grid[y0 : y0 + h]
        for x0 in range(cols - w + 1):
            out.add(tuple(r[x0 : x0 + w] for r in band))
    return out


@lru_cache(maxsize=None)
def allowed_square_patterns(rule: SubstitutionRule, size: int) -> tuple[Grid, ...]:
    """All allowed size x size patterns, sorted; grids rows-by-y-ascending."""
    if rule.dimension != 2:
        raise PreconditionError("allowed_square_patterns requires a 2D rule")
    if size < 1:
        raise PreconditionError("size must be >= 1")
    if len(rule.alphabet) == 1:
        lab = rule.alphabet[0]
        return (tuple((lab,) * size for _ in range(size)),)
    _require_primitive(rule)
    b = rule.expansion

    # seed windows from small substitution powers of single letters
    seeds: set[Grid] = set()
    grids = {a: ((a,),) for a in rule.alphabet}
    power = 1
    while b**power < size:
        power += 1
    for _ in range(power + 1):
        grids = {a: _expand_grid_once(rule, g) for a, g in grids.items()}
    for g in grids.values():
        seeds |= _grid_windows_fast(g, size, size)

    if size <= 3:
        current = set(seeds)
        stable_rounds = 0
        for rounds in range(1, ENUMERATION_ROUND_CAP + 1):
            new = set(current)
            for pat in current:
                new |= _grid_windows_fast(_expand_grid_once(rule, pat), size, size)
            if new == current:
                stable_rounds += 1
                if stable_rounds >= 2:
                    return tuple(sorted(current))
            else:
                stable_rounds = 0
                current = new
        raise BudgetError(f"no stabilization after {ENUMERATION_ROUND_CAP} rounds")

    # one substitution pass over the complete smaller pattern set
    q = -(-size // b) + 1
    base = allowed_square_patterns(rule, q)
    found = set(seeds)
    for pat in base:
        found |= _grid_windows_fast(_expand_grid_once(rule, pat), size, size)
    return tuple(sorted(found))


def allowed_rect_patterns(rule: SubstitutionRule, width: int, height: int) -> tuple[Grid, ...]:
    """All allowed width x height patterns (2D), sorted."""
    s = max(width, height)
    found: set[Grid] = set()
    for pat in allowed_square_patterns(rule, s):
        found |= _grid_windows_fast(pat, width, height)
    return tuple(sorted(found))
