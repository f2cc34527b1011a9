"""Exact integer homological algebra.

Everything here runs on arbitrary-precision Python integers: Smith normal
form with unimodular transforms, cohomology of cochain complexes over Z,
Z/k and Q, induced maps on cohomology, and direct limits along towers and
along endomorphisms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd, prod

from .errors import ConsistencyError, PreconditionError, SchemaError

PRIMES_TO_97 = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97)


# ---------------------------------------------------------------------------
# integer matrices


class IntMatrix:
    """Dense integer matrix (list-of-rows of Python ints)."""

    __slots__ = ("rows", "cols", "data")

    def __init__(self, data, rows=None, cols=None):
        if rows is not None:
            self.rows, self.cols = rows, cols
            self.data = [list(r) for r in data]
        else:
            self.data = [list(r) for r in data]
            self.rows = len(self.data)
            self.cols = len(self.data[0]) if self.data else 0
        for r in self.data:
            if len(r) != self.cols:
                raise SchemaError("ragged matrix data")

    @staticmethod
    def zeros(rows: int, cols: int) -> "IntMatrix":
        m = IntMatrix.__new__(IntMatrix)
        m.rows, m.cols = rows, cols
        m.data = [[0] * cols for _ in range(rows)]
        return m

    @staticmethod
    def identity(n: int) -> "IntMatrix":
        m = IntMatrix.zeros(n, n)
        for i in range(n):
            m.data[i][i] = 1
        return m

    @staticmethod
    def from_columns(cols: list[list[int]], rows: int) -> "IntMatrix":
        m = IntMatrix.zeros(rows, len(cols))
        for j, col in enumerate(cols):
            for i in range(rows):
                m.data[i][j] = col[i]
        return m

    def copy(self) -> "IntMatrix":
        return IntMatrix(self.data)

    def column(self, j: int) -> list[int]:
        return [self.data[i][j] for i in range(self.rows)]

    def transpose(self) -> "IntMatrix":
        return IntMatrix([[self.data[i][j] for i in range(self.rows)] for j in range(self.cols)])

    def __eq__(self, other):
        return (
            isinstance(other, IntMatrix)
            and self.rows == other.rows
            and self.cols == other.cols
            and self.data == other.data
        )

    def __hash__(self):
        return hash((self.rows, self.cols, tuple(tuple(r) for r in self.data)))

    def __matmul__(self, other: "IntMatrix") -> "IntMatrix":
        if self.cols != other.rows:
            raise PreconditionError("matrix shapes do not compose")
        out = IntMatrix.zeros(self.rows, other.cols)
        bt = other.data
        for i in range(self.rows):
            arow = self.data[i]
            orow = out.data[i]
            for k, a in enumerate(arow):
                if a:
                    brow = bt[k]
                    for j in range(other.cols):
                        if brow[j]:
                            orow[j] += a * brow[j]
        return out

    def __mul__(self, scalar: int) -> "IntMatrix":
        return IntMatrix([[x * scalar for x in row] for row in self.data])

    def __add__(self, other: "IntMatrix") -> "IntMatrix":
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise PreconditionError("matrix shapes differ")
        return IntMatrix(
            [[a + b for a, b in zip(ra, rb)] for ra, rb in zip(self.data, other.data)]
        )

    def __sub__(self, other: "IntMatrix") -> "IntMatrix":
        return self + (other * -1)

    def __pow__(self, k: int) -> "IntMatrix":
        if self.rows != self.cols:
            raise PreconditionError("matrix power requires a square matrix")
        if k < 0:
            raise PreconditionError("negative matrix powers are not defined here")
        out = IntMatrix.identity(self.rows)
        base = self
        while k:
            if k & 1:
                out = out @ base
            k >>= 1
            if k:
                base = base @ base
        return out

    def apply(self, vec: list[int]) -> list[int]:
        if len(vec) != self.cols:
            raise PreconditionError("vector length does not match matrix")
        return [sum(a * v for a, v in zip(row, vec) if a and v) for row in self.data]

    def is_zero(self) -> bool:
        return all(x == 0 for row in self.data for x in row)

    def is_identity(self) -> bool:
        return self.rows == self.cols and all(
            self.data[i][j] == (1 if i == j else 0)
            for i in range(self.rows)
            for j in range(self.cols)
        )

    def trace(self) -> int:
        return sum(self.data[i][i] for i in range(min(self.rows, self.cols)))

    def __repr__(self):
        return f"IntMatrix({self.data})"


def bareiss_rank(a: IntMatrix) -> int:
    """Rank over Q by fraction-free (Bareiss) elimination."""
    m = [row[:] for row in a.data]
    rows, cols = a.rows, a.cols
    rank = 0
    prev = 1
    r = 0
    for c in range(cols):
        piv = None
        for i in range(r, rows):
            if m[i][c]:
                piv = i
                break
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        for i in range(r + 1, rows):
            for j in range(c + 1, cols):
                m[i][j] = (m[i][j] * m[r][c] - m[i][c] * m[r][j]) // prev
            m[i][c] = 0
        prev = m[r][c]
        r += 1
        rank += 1
        if r == rows:
            break
    return rank


def bareiss_det(a: IntMatrix) -> int:
    """Exact determinant by fraction-free elimination."""
    if a.rows != a.cols:
        raise PreconditionError("determinant requires a square matrix")
    n = a.rows
    if n == 0:
        return 1
    m = [row[:] for row in a.data]
    sign = 1
    prev = 1
    for c in range(n - 1):
        piv = None
        for i in range(c, n):
            if m[i][c]:
                piv = i
                break
        if piv is None:
            return 0
        if piv != c:
            m[c], m[piv] = m[piv], m[c]
            sign = -sign
        for i in range(c + 1, n):
            for j in range(c + 1, n):
                m[i][j] = (m[i][j] * m[c][c] - m[i][c] * m[c][j]) // prev
            m[i][c] = 0
        prev = m[c][c]
    return sign * m[n - 1][n - 1]


def char_poly(a: IntMatrix) -> list[int]:
    """Characteristic polynomial coefficients [c_0, ..., c_n] with
    p(x) = sum c_k x^k and leading coefficient 1 (Faddeev-LeVerrier)."""
    if a.rows != a.cols:
        raise PreconditionError("char_poly requires a square matrix")
    n = a.rows
    coeffs = [0] * (n + 1)
    coeffs[n] = 1
    m = IntMatrix.identity(n)
    for k in range(1, n + 1):
        m = a @ m
        tr = m.trace()
        if tr % k:
            raise ConsistencyError("Faddeev-LeVerrier trace not divisible")
        c = -(tr // k)
        coeffs[n - k] = c
        for i in range(n):
            m.data[i][i] += c
    return coeffs


def rank_mod_p(a: IntMatrix, p: int) -> int:
    """Rank over the field F_p (p prime)."""
    m = [[x % p for x in row] for row in a.data]
    rows, cols = a.rows, a.cols
    rank = 0
    r = 0
    for c in range(cols):
        piv = None
        for i in range(r, rows):
            if m[i][c] % p:
                piv = i
                break
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        inv = pow(m[r][c], -1, p)
        m[r] = [(x * inv) % p for x in m[r]]
        for i in range(rows):
            if i != r and m[i][c]:
                f = m[i][c]
                m[i] = [(x - f * y) % p for x, y in zip(m[i], m[r])]
        r += 1
        rank += 1
        if r == rows:
            break
    return rank


# ---------------------------------------------------------------------------
# Smith normal form


@dataclass(frozen=True)
class SmithDecomposition:
    """U @ A @ V == D with U, V unimodular and D diagonal, d1 | d2 | ... >= 0."""

    u: IntMatrix
    d: IntMatrix
    v: IntMatrix
    u_inv: IntMatrix
    v_inv: IntMatrix

    @property
    def diagonal(self) -> list[int]:
        return [self.d.data[i][i] for i in range(min(self.d.rows, self.d.cols))]

    @property
    def rank(self) -> int:
        return sum(1 for x in self.diagonal if x)

    @property
    def invariant_factors(self) -> list[int]:
        return [x for x in self.diagonal if x]

    def verify(self, a: IntMatrix) -> bool:
        if (self.u @ a @ self.v) != self.d:
            return False
        if not (self.u @ self.u_inv).is_identity():
            return False
        if not (self.v @ self.v_inv).is_identity():
            return False
        diag = self.diagonal
        for i in range(len(diag) - 1):
            if diag[i + 1] and (diag[i] == 0 or diag[i + 1] % diag[i]):
                return False
            if diag[i] == 0 and diag[i + 1]:
                return False
        for i in range(self.d.rows):
            for j in range(self.d.cols):
                if i != j and self.d.data[i][j]:
                    return False
        return all(x >= 0 for x in diag)


def smith_normal_form(a: IntMatrix) -> SmithDecomposition:
    """Exact Smith normal form with all four transforms.

    Pivot choice is the smallest-magnitude nonzero entry, which keeps the
    coefficient growth tame on sparse incidence-style matrices.
    """
    m, n = a.rows, a.cols
    d = [row[:] for row in a.data]
    u = [[1 if i == j else 0 for j in range(m)] for i in range(m)]
    uinv = [[1 if i == j else 0 for j in range(m)] for i in range(m)]
    v = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
    vinv = [[1 if i == j else 0 for j in range(n)] for i in range(n)]

    def swap_rows(i, j):
        d[i], d[j] = d[j], d[i]
        u[i], u[j] = u[j], u[i]
        for r in range(m):
            uinv[r][i], uinv[r][j] = uinv[r][j], uinv[r][i]

    def swap_cols(i, j):
        for r in range(m):
            d[r][i], d[r][j] = d[r][j], d[r][i]
        for r in range(n):
            v[r][i], v[r][j] = v[r][j], v[r][i]
        vinv[i], vinv[j] = vinv[j], vinv[i]

    def row_add(i, j, c):
        # row i += c * row j
        di, dj = d[i], d[j]
        for k in range(n):
            if dj[k]:
                di[k] += c * dj[k]
        ui, uj = u[i], u[j]
        for k in range(m):
            if uj[k]:
                ui[k] += c * uj[k]
        for r in range(m):
            if uinv[r][i]:
                uinv[r][j] -= c * uinv[r][i]

    def col_add(j, i, c):
        # col j += c * col i
        for r in range(m):
            if d[r][i]:
                d[r][j] += c * d[r][i]
        for r in range(n):
            if v[r][i]:
                v[r][j] += c * v[r][i]
        vi, vj = vinv[i], vinv[j]
        for k in range(n):
            if vj[k]:
                vi[k] -= c * vj[k]

    def negate_row(i):
        d[i] = [-x for x in d[i]]
        u[i] = [-x for x in u[i]]
        for r in range(m):
            uinv[r][i] = -uinv[r][i]

    t = 0
    while t < min(m, n):
        # locate the smallest nonzero entry in the remaining block
        best = None
        for i in range(t, m):
            row = d[i]
            for j in range(t, n):
                x = row[j]
                if x:
                    ax = -x if x < 0 else x
                    if best is None or ax < best[0]:
                        best = (ax, i, j)
                        if ax == 1:
                            break
            if best is not None and best[0] == 1:
                break
        if best is None:
            break
        _, pi, pj = best
        if pi != t:
            swap_rows(t, pi)
        if pj != t:
            swap_cols(t, pj)

        while True:
            changed = False
            for i in range(m):
                if i != t and d[i][t]:
                    q = d[i][t] // d[t][t]
                    if q:
                        row_add(i, t, -q)
                    if d[i][t]:
                        swap_rows(t, i)
                        changed = True
            for j in range(n):
                if j != t and d[t][j]:
                    q = d[t][j] // d[t][t]
                    if q:
                        col_add(j, t, -q)
                    if d[t][j]:
                        swap_cols(t, j)
                        changed = True
            if changed:
                continue
            p = d[t][t]
            bad = None
            for i in range(t + 1, m):
                row = d[i]
                for j in range(t + 1, n):
                    if row[j] % p:
                        bad = i
                        break
                if bad is not None:
                    break
            if bad is None:
                break
            row_add(t, bad, 1)
        if d[t][t] < 0:
            negate_row(t)
        t += 1

    return SmithDecomposition(
        u=IntMatrix(u) if m else IntMatrix.zeros(0, 0),
        d=IntMatrix(d) if m else IntMatrix.zeros(0, n),
        v=IntMatrix(v) if n else IntMatrix.zeros(0, 0),
        u_inv=IntMatrix(uinv) if m else IntMatrix.zeros(0, 0),
        v_inv=IntMatrix(vinv) if n else IntMatrix.zeros(0, 0),
    )


def hermite_column_basis(cols: list[list[int]], rows: int) -> list[list[int]]:
    """Canonical basis of the column lattice (column-style Hermite form).

    Returns a list of basis columns; empty list for the zero lattice.
    """
    work = [list(c) for c in cols if any(c)]
    if not work:
        return []
    r = 0
    for i in range(rows):
        # gcd-reduce the row-i entries of columns >= r down to one pivot
        while True:
            piv = None
            for j in range(r, len(work)):
                if work[j][i] and (piv is None or abs(work[j][i]) < abs(work[piv][i])):
                    piv = j
            if piv is None:
                break
            done = True
            for j in range(r, len(work)):
                if j != piv and work[j][i]:
                    q = work[j][i] // work[piv][i]
                    if q:
                        work[j] = [x - q * y for x, y in zip(work[j], work[piv])]
                    if work[j][i]:
                        done = False
            if done:
                work[r], work[piv] = work[piv], work[r]
                break
        if piv is None:
            continue
        if work[r][i] < 0:
            work[r] = [-x for x in work[r]]
        for j in range(r):
            q = work[j][i] // work[r][i]
            if q:
                work[j] = [x - q * y for x, y in zip(work[j], work[r])]
        r += 1
        work = [c for c in work if any(c)]
        if r >= len(work):
            break
    return [c for c in work if any(c)]


# ---------------------------------------------------------------------------
# abelian groups


@dataclass(frozen=True)
class AbelianGroup:
    """Finitely generated abelian group in invariant-factor form."""

    free_rank: int
    torsion: tuple[int, ...] = ()

    def __post_init__(self):
        if self.free_rank < 0:
            raise PreconditionError("free rank must be >= 0")
        for i, t in enumerate(self.torsion):
            if t < 2:
                raise PreconditionError("torsion factors must be >= 2")
            if i and self.torsion[i] % self.torsion[i - 1]:
                raise PreconditionError("torsion factors must form a divisibility chain")

    @property
    def is_trivial(self) -> bool:
        return self.free_rank == 0 and not self.torsion

    @property
    def torsion_order(self) -> int:
        return prod(self.torsion) if self.torsion else 1

    def generator_count(self) -> int:
        return self.free_rank + len(self.torsion)


def render_group(g: AbelianGroup, coeff: tuple = ("int",)) -> str:
    if coeff[0] == "rat":
        return "0" if g.free_rank == 0 else ("Q" if g.free_rank == 1 else f"Q^{g.free_rank}")
    parts = []
    if g.free_rank == 1:
        parts.append("Z")
    elif g.free_rank > 1:
        parts.append(f"Z^{g.free_rank}")
    parts.extend(f"Z/{t}" for t in g.torsion)
    return " ⊕ ".join(parts) if parts else "0"


# ---------------------------------------------------------------------------
# subquotient presentations
#
# Quotients L / R with L a full-column-rank sublattice of Z^n given by a
# basis matrix and R a subgroup of L given by generators.  This one helper
# powers integer cohomology, mod-k cohomology, and torsion bookkeeping.


class Quotient:
    def __init__(self, ambient: int, lattice: IntMatrix, relations: IntMatrix):
        if lattice.rows != ambient or relations.rows != ambient:
            raise PreconditionError("lattice/relations must live in the ambient space")
        self.ambient = ambient
        self.lattice = lattice
        self._lat_snf = smith_normal_form(lattice)
        if self._lat_snf.rank != lattice.cols:
            raise ConsistencyError("lattice basis matrix is column rank deficient")
        # coordinates of the relation generators in the lattice basis
        w = IntMatrix.from_columns(
            [self._lattice_coords(relations.column(j)) for j in range(relations.cols)],
            lattice.cols,
        )
        self._w_snf = smith_normal_form(w)
        diag = self._w_snf.diagonal
        z = lattice.cols
        factors = diag + [0] * (z - len(diag))
        self._factors = factors
        torsion_idx = [i for i, f in enumerate(factors) if f >= 2]
        free_idx = [i for i, f in enumerate(factors) if f == 0]
        self._gen_index = torsion_idx + free_idx
        self.group = AbelianGroup(
            free_rank=len(free_idx),
            torsion=tuple(factors[i] for i in torsion_idx),
        )

    def _lattice_coords(self, vec: list[int]) -> list[int]:
        snf = self._lat_snf
        y = snf.u.apply(vec)
        z = self.lattice.cols
        coords = []
        for i in range(z):
            di = snf.d.data[i][i]
            if y[i] % di:
                raise ConsistencyError("vector does not lie in the lattice")
            coords.append(y[i] // di)
        for i in range(z, len(y)):
            if y[i]:
                raise ConsistencyError("vector does not lie in the lattice span")
        return snf.v.apply(coords)

    def generators(self) -> list[list[int]]:
        """Canonical generator vectors in the ambient space (torsion first)."""
        out = []
        z = self.lattice.cols
        for idx in self._gen_index:
            e = [0] * z
            e[idx] = 1
            w = self._w_snf.u_inv.apply(e)
            out.append(self.lattice.apply(w))
        return out

    def coordinates(self, vec: list[int]) -> tuple[int, ...]:
        """Canonical coordinates of an ambient vector lying in the lattice."""
        w = self._lattice_coords(vec)
        y = self._w_snf.u.apply(w)
        coords = []
        for idx in self._gen_index:
            f = self._factors[idx]
            coords.append(y[idx] % f if f else y[idx])
        return tuple(coords)


# ---------------------------------------------------------------------------
# cohomology


def _as_boundaries(complex_or_boundaries) -> tuple[list[IntMatrix], object]:
    """Normalize input to the list [d_1, ..., d_top] of boundary matrices."""
    obj = complex_or_boundaries
    if hasattr(obj, "boundary_matrix") and hasattr(obj, "dimension"):
        bnds = [obj.boundary_matrix(k) for k in range(1, obj.dimension + 1)]
        return bnds, obj
    if isinstance(obj, (list, tuple)):
        bnds = [b if isinstance(b, IntMatrix) else IntMatrix(b) for b in obj]
        for i in range(len(bnds) - 1):
            if bnds[i].cols != bnds[i + 1].rows:
                raise PreconditionError("boundary matrix shapes do not chain")
        return list(bnds), None
    raise PreconditionError("expected a cell complex or a list of boundary matrices")


def parse_coefficients(spec) -> tuple:
    if isinstance(spec, tuple):
        return spec
    if spec in ("int", "Z"):
        return ("int",)
    if spec in ("rat", "Q"):
        return ("rat",)
    if isinstance(spec, str) and spec.startswith("mod:"):
        k = int(spec.split(":", 1)[1])
        if k < 2:
            raise SchemaError("mod:k requires k >= 2")
        return ("mod", k)
    raise SchemaError(f"unknown coefficient spec {spec!r}")


@dataclass
class DegreeData:
    group: AbelianGroup
    n_cells: int
    _quotient: Quotient | None = None
    _gens: list[list[int]] | None = None

    def generators(self) -> list[list[int]]:
        if self._gens is None:
            self._gens = self._quotient.generators() if self._quotient else []
        return self._gens

    def coordinates(self, cocycle: list[int]) -> tuple[int, ...]:
        if self._quotient is None:
            raise PreconditionError("no cocycle data retained for this degree")
        return self._quotient.coordinates(cocycle)


@dataclass
class CohomologyResult:
    coeff: tuple
    degrees: dict[int, DegreeData]
    complex_token: object = None

    def group(self, k: int) -> AbelianGroup:
        return self.degrees[k].group

    def render(self) -> dict[int, str]:
        return {k: render_group(d.group, self.coeff) for k, d in sorted(self.degrees.items())}


def cohomology(complex_or_boundaries, coeff="int") -> CohomologyResult:
    """Cohomology of the cellular cochain complex with the chosen coefficients.

    Coboundaries are the transposes of the boundary matrices; the input is
    rejected (naming the degree) if it is not a complex.
    """
    coeff = parse_coefficients(coeff)
    boundaries, token = _as_boundaries(complex_or_boundaries)
    top = len(boundaries)
    counts = [boundaries[0].rows] + [b.cols for b in boundaries] if boundaries else [0]

    for k in range(top - 1):
        if not (boundaries[k] @ boundaries[k + 1]).is_zero():
            raise PreconditionError(f"not a complex: boundary square nonzero in degree {k + 1}")

    # delta_k : C^k -> C^(k+1) is the transpose of boundary_(k+1)
    deltas = []
    for k in range(top + 1):
        if k < top:
            deltas.append(boundaries[k].transpose())
        else:
            deltas.append(IntMatrix.zeros(0, counts[top]))

    degrees: dict[int, DegreeData] = {}
    if coeff[0] == "rat":
        for k in range(top + 1):
            n = counts[k]
            r_out = bareiss_rank(deltas[k])
            r_in = bareiss_rank(deltas[k - 1]) if k else 0
            degrees[k] = DegreeData(group=AbelianGroup(n - r_out - r_in), n_cells=n)
        return CohomologyResult(coeff=coeff, degrees=degrees, complex_token=token)

    for k in range(top + 1):
        n = counts[k]
        snf = smith_normal_form(deltas[k])
        rank = snf.rank
        if coeff[0] == "int":
            # kernel basis: trailing columns of V
            z = n - rank
            kernel = IntMatrix.from_columns(
                [snf.v.column(j) for j in range(rank, n)], n
            ) if z else IntMatrix.zeros(n, 0)
            image = deltas[k - 1] if k else IntMatrix.zeros(n, 0)
            q = Quotient(n, kernel, image) if z else Quotient(
                n, IntMatrix.zeros(n, 0), IntMatrix.zeros(n, 0)
            )
            degrees[k] = DegreeData(group=q.group, n_cells=n, _quotient=q)
        else:
            modulus = coeff[1]
            # lift of the mod-m kernel: x with delta x = 0 (mod m)
            diag = snf.diagonal + [0] * (n - len(snf.diagonal))
            scale = [modulus // gcd(diag[i], modulus) if diag[i] else 1 for i in range(n)]
            lattice = IntMatrix.from_columns(
                [[x * scale[j] for x in snf.v.column(j)] for j in range(n)], n
            )
            image = deltas[k - 1] if k else IntMatrix.zeros(n, 0)
            rel_cols = [image.column(j) for j in range(image.cols)]
            for i in range(n):
                e = [0] * n
                e[i] = modulus
                rel_cols.append(e)
            q = Quotient(n, lattice, IntMatrix.from_columns(rel_cols, n))
            degrees[k] = DegreeData(group=q.group, n_cells=n, _quotient=q)
    return CohomologyResult(coeff=coeff, degrees=degrees, complex_token=token)


# ---------------------------------------------------------------------------
# group homomorphisms and induced maps


@dataclass(frozen=True)
class GroupHom:
    """Homomorphism between groups presented on canonical generators.

    The matrix columns are the images of the source generators expressed in
    the target's canonical coordinates (torsion generators first).
    """

    source: AbelianGroup
    target: AbelianGroup
    matrix: IntMatrix
    coeff: tuple = ("int",)

    def __post_init__(self):
        if self.matrix.rows != self.target.generator_count():
            raise PreconditionError("hom matrix row count does not match target")
        if self.matrix.cols != self.source.generator_count():
            raise PreconditionError("hom matrix column count does not match source")
        # columns of torsion generators must respect the relations
        st = len(self.source.torsion)
        tt = len(self.target.torsion)
        for j in range(st):
            f = self.source.torsion[j]
            for i in range(self.matrix.rows):
                x = f * self.matrix.data[i][j]
                if i < tt:
                    if x % self.target.torsion[i]:
                        raise PreconditionError("hom does not respect torsion relations")
                elif x:
                    raise PreconditionError("hom maps torsion into the free part")

    @staticmethod
    def identity(group: AbelianGroup, coeff=("int",)) -> "GroupHom":
        return GroupHom(group, group, IntMatrix.identity(group.generator_count()), coeff)

    def compose(self, other: "GroupHom") -> "GroupHom":
        """self o other (apply ``other`` first)."""
        if other.target != self.source:
            raise PreconditionError("homs do not compose")
        m = self.matrix @ other.matrix
        tt = len(self.target.torsion)
        for i in range(tt):
            f = self.target.torsion[i]
            m.data[i] = [x % f for x in m.data[i]]
        return GroupHom(other.source, self.target, m, self.coeff)

    def apply(self, coords: list[int]) -> tuple[int, ...]:
        out = self.matrix.apply(list(coords))
        tt = len(self.target.torsion)
        return tuple(
            out[i] % self.target.torsion[i] if i < tt else out[i] for i in range(len(out))
        )

    def is_isomorphism(self) -> bool:
        if self.source != self.target and (
            self.source.free_rank != self.target.free_rank
            or self.source.torsion != self.target.torsion
        ):
            return False
        if self.coeff[0] == "rat":
            return self.matrix.rows == self.matrix.cols and bareiss_det(self.matrix) != 0
        # surjectivity test: cokernel of [matrix | target relations] trivial
        tt = len(self.target.torsion)
        cols = [self.matrix.column(j) for j in range(self.matrix.cols)]
        for i in range(tt):
            e = [0] * self.matrix.rows
            e[i] = self.target.torsion[i]
            cols.append(e)
        stacked = IntMatrix.from_columns(cols, self.matrix.rows)
        snf = smith_normal_form(stacked)
        return snf.rank == self.matrix.rows and all(f == 1 for f in snf.invariant_factors)


def induced_map(
    cellular_map,
    degree: int,
    coeff="int",
    source_result: CohomologyResult | None = None,
    target_result: CohomologyResult | None = None,
) -> GroupHom:
    """Map on degree-k cohomology induced by a cellular map f: X -> Y.

    Contravariant: the result goes H^k(Y) -> H^k(X), computed by pulling the
    canonical generator cocycles of Y back through the transposed chain
    matrix and reading off canonical coordinates in X.
    """
    coeff = parse_coefficients(coeff)
    f = cellular_map
    if coeff[0] == "rat":
        zhom = induced_map(f, degree, "int", None, None)
        tf = zhom.target.free_rank
        sf = zhom.source.free_rank
        tt = len(zhom.target.torsion)
        st = len(zhom.source.torsion)
        block = [
            [zhom.matrix.data[tt + i][st + j] for j in range(sf)] for i in range(tf)
        ]
        return GroupHom(
            AbelianGroup(sf), AbelianGroup(tf), IntMatrix(block, tf, sf), coeff
        )
    source_result = source_result or cohomology(f.source, coeff)
    target_result = target_result or cohomology(f.target, coeff)
    if source_result.complex_token is not f.source or target_result.complex_token is not f.target:
        raise PreconditionError("cohomology results do not match the map's complexes")
    sdata = target_result.degrees[degree]   # domain of the induced map
    tdata = source_result.degrees[degree]   # codomain of the induced map
    ft = f.chain_matrix(degree).transpose()
    cols = []
    for gen in sdata.generators():
        pulled = ft.apply(gen)
        cols.append(list(tdata.coordinates(pulled)))
    matrix = IntMatrix.from_columns(cols, tdata.group.generator_count())
    return GroupHom(sdata.group, tdata.group, matrix, coeff)


# ---------------------------------------------------------------------------
# direct limits


@dataclass(frozen=True)
class LimitGroup:
    """Direct limit of a tower (heuristic window) or of one endomorphism
    (exact).

    kind is one of "stabilized", "endo", "undetermined".  For "endo", parts
    is a tuple of ("free", k), ("loc", m), ("raw", IntMatrix) summands; a
    canonical decomposition exists iff no "raw" part is present.
    """

    kind: str
    group: AbelianGroup | None = None
    level: int | None = None
    window: int | None = None
    caveat: str | None = None
    rank: int | None = None
    matrix: IntMatrix | None = None
    parts: tuple | None = None
    surviving_torsion: tuple[int, ...] | None = None
    diagnostic: str | None = None
    coeff: tuple = ("int",)

    def canonical_decomposition(self):
        """(rank, multiset of inverted-prime sets, torsion) or None."""
        if self.kind == "stabilized":
            return (
                self.group.free_rank,
                tuple(sorted([frozenset()] * self.group.free_rank)),
                self.group.torsion,
            )
        if self.kind == "endo":
            prime_sets = []
            for part in self.parts:
                if part[0] == "raw":
                    return None
                if part[0] == "free":
                    prime_sets.extend([frozenset()] * part[1])
                else:
                    m = part[1]
                    prime_sets.append(frozenset(p for p in _prime_factors(m)))
            key = tuple(sorted(prime_sets, key=lambda s: tuple(sorted(s))))
            return (len(prime_sets), key, self.surviving_torsion or ())
        return None

    def rational_rank(self) -> int | None:
        if self.kind == "stabilized":
            return self.group.free_rank
        if self.kind == "endo":
            return self.rank
        return None

    def torsion_invariants(self) -> tuple[int, ...] | None:
        if self.kind == "stabilized":
            return self.group.torsion
        if self.kind == "endo":
            return self.surviving_torsion
        return None

    def p_divisibility_verdict(self, p: int) -> bool | None:
        """True iff the free-part transition matrix is invertible mod p."""
        if self.kind == "stabilized":
            return True
        if self.kind == "endo":
            if self.rank == 0:
                return True
            return bareiss_det(self.matrix) % p != 0
        return None

    def render(self) -> str:
        if self.kind == "undetermined":
            return f"undetermined ({self.diagnostic})"
        if self.kind == "stabilized":
            return render_group(self.group, self.coeff)
        pieces = []
        free = sum(p[1] for p in self.parts if p[0] == "free")
        if free == 1:
            pieces.append("Z")
        elif free > 1:
            pieces.append(f"Z^{free}")
        for part in self.parts:
            if part[0] == "loc":
                pieces.append(f"Z[1/{_radical(part[1])}]")
        for part in self.parts:
            if part[0] == "raw":
                mat = part[1]
                pieces.append(f"limit of Z^{mat.rows} under M = {mat.data}")
        for t in self.surviving_torsion or ():
            pieces.append(f"Z/{t}")
        return " ⊕ ".join(pieces) if pieces else "0"


def _prime_factors(n: int) -> list[int]:
    n = abs(n)
    out = []
    p = 2
    while p * p <= n:
        if n % p == 0:
            out.append(p)
            while n % p == 0:
                n //= p
        p += 1
    if n > 1:
        out.append(n)
    return out


def _radical(n: int) -> int:
    return prod(_prime_factors(n))


def direct_limit_sequence(groups, maps, window: int) -> LimitGroup:
    """Heuristic limit of a tower: stabilized iff the last ``window`` maps
    are isomorphisms; the verdict always carries a caveat flag."""
    if window < 1:
        raise PreconditionError("window must be >= 1")
    if len(maps) != len(groups) - 1:
        raise PreconditionError("need exactly one map between consecutive groups")
    coeff = maps[0].coeff if maps else ("int",)
    for i, hom in enumerate(maps):
        if hom.source != groups[i] or hom.target != groups[i + 1]:
            raise PreconditionError(f"map {i} does not match its endpoint groups")
    trajectory = ", ".join(render_group(g, coeff) for g in groups)
    if len(maps) < window:
        return LimitGroup(
            kind="undetermined",
            diagnostic=f"tower shorter than window {window}; levels: {trajectory}",
            coeff=coeff,
        )
    tail = maps[-window:]
    if all(h.is_isomorphism() for h in tail):
        level = len(groups) - window
        return LimitGroup(
            kind="stabilized",
            group=groups[-1],
            level=level,
            window=window,
            caveat=f"heuristic stabilization at level {level}, window {window}",
            coeff=coeff,
        )
    return LimitGroup(
        kind="undetermined",
        diagnostic=f"no isomorphism window of size {window}; levels: {trajectory}",
        coeff=coeff,
    )


def _saturate_columns(cols: list[list[int]], rows: int) -> IntMatrix:
    """Basis of the saturation (Q-span intersected with Z^rows)."""
    mat = IntMatrix.from_columns(cols, rows)
    snf = smith_normal_form(mat)
    r = snf.rank
    return IntMatrix.from_columns([snf.u_inv.column(i) for i in range(r)], rows)


def _restrict_to_lattice(m: IntMatrix, basis: IntMatrix) -> IntMatrix:
    """Matrix of m restricted to an m-invariant column lattice."""
    q = Quotient(basis.rows, basis, IntMatrix.zeros(basis.rows, 0))
    cols = []
    for j in range(basis.cols):
        image = m.apply(basis.column(j))
        cols.append(q._lattice_coords(image))
    return IntMatrix.from_columns(cols, basis.cols)


def _integer_eigenvalues(m: IntMatrix) -> list[int]:
    """Distinct integer roots of the characteristic polynomial."""
    coeffs = char_poly(m)
    const = abs(coeffs[0])
    if const == 0:
        # the caller only uses this on nonsingular matrices
        return []
    cands = set()
    d = 1
    while d * d <= const:
        if const % d == 0:
            cands.update({d, -d, const // d, -(const // d)})
        d += 1
    out = []
    for lam in sorted(cands):
        val = 0
        for c in reversed(coeffs):
            val = val * lam + c
        if val == 0:
            out.append(lam)
    return out


def _try_diagonal_parts(m: IntMatrix):
    """Summands [|lambda_i|] if m is integrally conjugate to a diagonal
    matrix; None otherwise."""
    n = m.rows
    if n == 0:
        return []
    eigen = _integer_eigenvalues(m)
    basis_cols: list[list[int]] = []
    lams: list[int] = []
    for lam in eigen:
        shifted = m - IntMatrix.identity(n) * lam
        snf = smith_normal_form(shifted)
        for j in range(snf.rank, n):
            basis_cols.append(snf.v.column(j))
            lams.append(lam)
    if len(basis_cols) != n:
        return None
    q = IntMatrix.from_columns(basis_cols, n)
    if abs(bareiss_det(q)) != 1:
        return None
    return sorted(abs(l) for l in lams)


def direct_limit_endomorphism(group: AbelianGroup, endo: GroupHom) -> LimitGroup:
    """Exact direct limit of (group, endo) along iteration of ``endo``.

    The free part is the limit of the eventual image lattice with its
    invertible-over-Q restriction; the torsion part is the stable image of
    the torsion subgroup.
    """
    if endo.source != group or endo.target != group:
        raise PreconditionError("endomorphism endpoints must equal the given group")
    tt = len(group.torsion)
    r = group.free_rank
    m_free = IntMatrix(
        [[endo.matrix.data[tt + i][tt + j] for j in range(r)] for i in range(r)], r, r
    )
    # eventual free image and the restriction of the endomorphism to it
    parts: list = []
    mprime = IntMatrix.zeros(0, 0)
    rank = 0
    if r:
        power = m_free**r
        cols = [power.column(j) for j in range(r)]
        basis = hermite_column_basis(cols, r)
        if basis:
            e = IntMatrix.from_columns(basis, r)
            mprime = _restrict_to_lattice(m_free, e)
            rank = e.cols
            det = bareiss_det(mprime)
            if det == 0:
                raise ConsistencyError("restriction to the eventual image is singular")
            if abs(det) == 1:
                parts = [("free", rank)]
            else:
                # split off unit eigenvalues: the quotient by the non-unit
                # invariant sublattice is finitely generated free, so the
                # limit splits off Z^k unconditionally
                w = (mprime @ mprime - IntMatrix.identity(rank)) ** rank
                nonunit_rank = bareiss_rank(w)
                unit_rank = rank - nonunit_rank
                target = mprime
                if unit_rank:
                    c = _saturate_columns([w.column(j) for j in range(rank)], rank)
                    target = _restrict_to_lattice(mprime, c)
                    parts.append(("free", unit_rank))
                diag = _try_diagonal_parts(target)
                if diag is not None:
                    for lam in diag:
                        if lam == 1:
                            parts.append(("free", 1))
                        else:
                            parts.append(("loc", lam))
                else:
                    parts.append(("raw", target))
    # torsion: iterate the endomorphism on the torsion subgroup until the
    # image chain stabilizes
    surviving: tuple[int, ...] = ()
    if tt:
        m_tors = IntMatrix(
            [[endo.matrix.data[i][j] for j in range(tt)] for i in range(tt)], tt, tt
        )
        moduli = list(group.torsion)
        gens = [m_tors.column(j) for j in range(tt)]
        diag_cols = [[moduli[i] if k == i else 0 for k in range(tt)] for i in range(tt)]
        prev = None
        for _ in range(sum(t.bit_length() for t in moduli) + 2):
            lattice = hermite_column_basis(gens + diag_cols, tt)
            if lattice == prev:
                break
            prev = lattice
            gens = [m_tors.apply(g) for g in gens]
        basis = IntMatrix.from_columns(prev, tt) if prev else IntMatrix.identity(tt)
        q = Quotient(tt, basis, IntMatrix.from_columns(diag_cols, tt))
        surviving = q.group.torsion
        if q.group.free_rank:
            raise ConsistencyError("torsion limit produced a free part")
    normalized: list = []
    free_total = sum(p[1] for p in parts if p[0] == "free")
    if free_total:
        normalized.append(("free", free_total))
    normalized.extend(sorted((p for p in parts if p[0] == "loc"), key=lambda t: t[1]))
    normalized.extend(p for p in parts if p[0] == "raw")
    return LimitGroup(
        kind="endo",
        rank=rank,
        matrix=mprime,
        parts=tuple(normalized),
        surviving_torsion=surviving,
        coeff=endo.coeff,
    )


def group_equal(a: LimitGroup, b: LimitGroup) -> str:
    """Sound, incomplete comparison: "equal", "distinct" or "indeterminate"."""
    ca = a.canonical_decomposition()
    cb = b.canonical_decomposition()
    if ca is not None and cb is not None:
        # canonical decompositions classify these groups completely
        return "equal" if ca == cb else "distinct"
    ra, rb = a.rational_rank(), b.rational_rank()
    if ra is not None and rb is not None and ra != rb:
        return "distinct"
    ta, tb = a.torsion_invariants(), b.torsion_invariants()
    if ta is not None and tb is not None and ta != tb:
        return "distinct"
    for p in PRIMES_TO_97:
        va, vb = a.p_divisibility_verdict(p), b.p_divisibility_verdict(p)
        if va is not None and vb is not None and va != vb:
            return "distinct"
    return "indeterminate"
