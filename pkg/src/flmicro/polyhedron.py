"""Complete Newton polyhedra in dimension at most three.

A complete polyhedron is the convex hull of finitely many points of the
nonnegative integer lattice that contains the origin as a vertex, has
nonempty interior, and whose facets off the coordinate hyperplanes all
carry strictly positive inner normals.  Everything here is computed with
exact rational arithmetic so that the invariants ``mu`` and ``delta``
come out as exact fractions.

Examples
--------
>>> P = build_polyhedron([(0, 0), (1, 0), (0, 2)])
>>> P.normals_inner
((Fraction(1, 1), Fraction(1, 2)),)
>>> orders(P)
(1, 2, Fraction(2, 1))
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import RejectDimension, RejectNotComplete

Point = tuple[int, ...]
Normal = tuple[Fraction, ...]


@dataclass(frozen=True)
class CompletePolyhedron:
    """Vertex set and derived invariants of a complete polyhedron.

    Attributes
    ----------
    vertices : tuple of int tuples
        Extreme points, sorted lexicographically.
    normals_inner : tuple of Fraction tuples
        The inner normals ``nu`` (all components positive) scaled so that
        ``nu . xi = 1`` on the corresponding facet.
    faces : tuple
        Pairs ``(nu, vertices on nu . xi = 1)``.
    mu0, mu1 : int
        Minimum and maximum ``|gamma|`` over the (nonzero) vertices.
    mu : Fraction
        Formal order ``max 1/nu_j``.
    delta : Fraction
        Interior exponent entering the delta condition.
    """

    vertices: tuple[Point, ...]
    normals_inner: tuple[Normal, ...]
    faces: tuple[tuple[Normal, tuple[Point, ...]], ...]
    mu0: int
    mu1: int
    mu: Fraction
    delta: Fraction

    @property
    def n(self) -> int:
        return len(self.vertices[0])

    @property
    def boundary_normals_axis(self) -> tuple[Point, ...]:
        return tuple(tuple(int(i == j) for i in range(self.n)) for j in range(self.n))

    def contains(self, beta: Sequence[int]) -> bool:
        """Membership test for a lattice point."""
        if any(b < 0 for b in beta):
            return False
        return all(_dot(nu, beta) <= 1 for nu in self.normals_inner)

    def to_dict(self) -> dict:
        """JSON-friendly report with rationals written as ``"p/q"``."""
        return {
            "vertices": [list(v) for v in self.vertices],
            "N1": [[_frac_str(c) for c in nu] for nu in self.normals_inner],
            "mu0": self.mu0,
            "mu1": self.mu1,
            "mu": _frac_str(self.mu),
            "delta": _frac_str(self.delta),
        }


def _frac_str(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


def _dot(a: Sequence, b: Sequence) -> Fraction:
    return sum((Fraction(x) * y for x, y in zip(a, b)), Fraction(0))


def _rank(rows: list[list[Fraction]]) -> int:
    """Rank of a small rational matrix by Gaussian elimination."""
    m = [list(map(Fraction, r)) for r in rows]
    rank = 0
    ncols = len(m[0]) if m else 0
    for c in range(ncols):
        piv = next((r for r in range(rank, len(m)) if m[r][c] != 0), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        for r in range(len(m)):
            if r != rank and m[r][c] != 0:
                f = m[r][c] / m[rank][c]
                m[r] = [a - f * b for a, b in zip(m[r], m[rank])]
        rank += 1
    return rank


def _hyperplane(pts: Sequence[Point]) -> tuple[tuple[int, ...], int] | None:
    """Integer normal ``a`` and offset ``d`` of the hyperplane through n points."""
    n = len(pts[0])
    base = pts[0]
    diffs = [[p[j] - base[j] for j in range(n)] for p in pts[1:]]
    if n == 1:
        return (1,), base[0]
    if n == 2:
        (u0, u1), = diffs
        a = (-u1, u0)
    else:
        (u0, u1, u2), (v0, v1, v2) = diffs
        a = (u1 * v2 - u2 * v1, u2 * v0 - u0 * v2, u0 * v1 - u1 * v0)
    if all(c == 0 for c in a):
        return None
    return a, sum(a[j] * base[j] for j in range(n))


def _facets(points: list[Point]) -> list[tuple[tuple[int, ...], int, frozenset[Point]]]:
    """Supporting hyperplanes through at least n affinely independent points."""
    n = len(points[0])
    seen: dict[frozenset[Point], tuple[tuple[int, ...], int]] = {}
    for combo in itertools.combinations(points, n):
        hp = _hyperplane(combo)
        if hp is None:
            continue
        a, d = hp
        vals = [sum(a[j] * p[j] for j in range(n)) - d for p in points]
        if all(v <= 0 for v in vals):
            pass
        elif all(v >= 0 for v in vals):
            a, d = tuple(-c for c in a), -d
        else:
            continue
        on = frozenset(p for p, v in zip(points, vals) if v == 0)
        if on not in seen:
            seen[on] = (a, d)
    return [(a, d, on) for on, (a, d) in seen.items()]


def build_polyhedron(vertices: Iterable[Sequence[int]]) -> CompletePolyhedron:
    """Build the complete polyhedron spanned by a finite lattice point set.

    Non-extreme input points (including points lying inside a facet or on
    an edge) are dropped.

    Parameters
    ----------
    vertices : iterable of integer sequences
        Candidate points; all must have the same length ``n <= 3``.

    Raises
    ------
    RejectDimension
        If ``n > 3`` (or ``n == 0``).
    RejectNotComplete
        If the origin is missing, only the origin is given, a coordinate is
        negative or non-integral, the hull has empty interior, or some facet
        off the coordinate hyperplanes has a normal with a zero component.
    """
    raw = [tuple(v) for v in vertices]
    if not raw:
        raise RejectNotComplete("empty vertex list")
    n = len(raw[0])
    if n == 0 or n > 3:
        raise RejectDimension(f"dimension {n} not supported (1 <= n <= 3)")
    pts: set[Point] = set()
    for v in raw:
        if len(v) != n:
            raise RejectNotComplete("points of mixed dimension")
        for c in v:
            if isinstance(c, bool) or int(c) != c:
                raise RejectNotComplete(f"non-integral coordinate in {v}")
            if c < 0:
                raise RejectNotComplete(f"point {v} outside the nonnegative orthant")
        pts.add(tuple(int(c) for c in v))
    origin = (0,) * n
    if origin not in pts:
        raise RejectNotComplete("origin is not a vertex")
    if pts == {origin}:
        raise RejectNotComplete("only the origin given")
    points = sorted(pts)
    if _rank([[Fraction(c) for c in p] for p in points if p != origin]) < n:
        raise RejectNotComplete("hull has empty interior")

    facets = _facets(points)
    normals: list[Normal] = []
    faces: list[tuple[Normal, tuple[Point, ...]]] = []
    for a, d, on in facets:
        if d == 0:
            # facet through the origin: must be a coordinate hyperplane
            nz = [j for j, c in enumerate(a) if c != 0]
            if len(nz) != 1:
                raise RejectNotComplete(f"facet through the origin with normal {a}")
            continue
        nu = tuple(Fraction(c, d) for c in a)
        if any(c <= 0 for c in nu):
            raise RejectNotComplete(f"inner normal {tuple(map(_frac_str, nu))} has a non-positive component")
        normals.append(nu)
        faces.append((nu, tuple(sorted(on))))

    # a point is a vertex when the facets through it pin it down
    all_facets = [(a, on) for a, _, on in facets]
    verts = [p for p in points if _rank([list(map(Fraction, a)) for a, on in all_facets if p in on]) == n]
    vset = set(verts)
    faces = sorted(((nu, tuple(p for p in on if p in vset)) for nu, on in faces), key=lambda t: t[0])
    normals.sort()

    nonzero = [v for v in verts if v != origin]
    mu0 = min(sum(v) for v in nonzero)
    mu1 = max(sum(v) for v in verts)
    mu = max(1 / c for nu in normals for c in nu)
    partial = CompletePolyhedron(tuple(verts), tuple(normals), tuple(faces), mu0, mu1, mu, Fraction(0))
    return CompletePolyhedron(tuple(verts), tuple(normals), tuple(faces), mu0, mu1, mu, delta(partial))


def orders(P: CompletePolyhedron) -> tuple[int, int, Fraction]:
    """Return ``(mu0, mu1, mu)``."""
    return P.mu0, P.mu1, P.mu


def lattice_points(P: CompletePolyhedron, interior_only: bool = False) -> list[Point]:
    """Enumerate the lattice points of ``P``.

    With ``interior_only`` the points must satisfy ``beta_j >= 1`` for all
    ``j`` and ``nu . beta < 1`` for every inner normal.
    """
    n = P.n
    bounds = [max(v[j] for v in P.vertices) for j in range(n)]
    lo = 1 if interior_only else 0
    out = []
    for beta in itertools.product(*(range(lo, b + 1) for b in bounds)):
        vals = [_dot(nu, beta) for nu in P.normals_inner]
        if interior_only:
            if all(v < 1 for v in vals):
                out.append(tuple(beta))
        elif all(v <= 1 for v in vals):
            out.append(tuple(beta))
    return out


def delta(P: CompletePolyhedron) -> Fraction:
    """Max of ``nu . beta`` over interior lattice points ``beta``; 0 if none."""
    best = Fraction(0)
    for beta in lattice_points(P, interior_only=True):
        for nu in P.normals_inner:
            best = max(best, _dot(nu, beta))
    return best


def quasi_homogeneous_polyhedron(M: Sequence[int]) -> CompletePolyhedron:
    """Polyhedron with vertices ``0`` and ``m_j e_j``."""
    n = len(M)
    verts = [(0,) * n] + [tuple(m if i == j else 0 for i in range(n)) for j, m in enumerate(M)]
    return build_polyhedron(verts)


def from_descriptor(desc: dict) -> CompletePolyhedron:
    """Build from ``{"vertices": [[...], ...]}``."""
    if "vertices" not in desc:
        raise RejectNotComplete("descriptor lacks 'vertices'")
    return build_polyhedron(desc["vertices"])
