"""Zonotope set arithmetic.

A zonotope ``<c, G>`` is the set ``{c + G @ beta : |beta|_inf <= 1}``. Every
operation here is a pure function returning a new :class:`Zonotope`; inputs
are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

LAMBDA_EPS = 1e-12
LP_TOL = 1e-9
DEFAULT_MAX_GENERATORS = 20


class DimensionError(ValueError):
    """Operands of a set operation have incompatible dimensions."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class Zonotope:
    """Immutable zonotope with center ``c`` (n,) and generators ``G`` (n, e)."""

    __slots__ = ("c", "G")

    def __init__(self, c, G=None):
        c = np.array(c, dtype=float).reshape(-1)
        n = c.shape[0]
        if G is None:
            G = np.zeros((n, 0))
        else:
            G = np.array(G, dtype=float)
            if G.ndim == 1:
                G = G.reshape(n, -1) if n else G.reshape(0, -1)
            if G.ndim != 2 or G.shape[0] != n:
                raise DimensionError(f"generator matrix has shape {G.shape}, expected ({n}, e)")
        object.__setattr__(self, "c", _frozen(c))
        object.__setattr__(self, "G", _frozen(G))

    def __setattr__(self, name, value):
        raise AttributeError("Zonotope is immutable")

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    @property
    def order(self) -> int:
        """Number of generators ``e``."""
        return self.G.shape[1]

    def __repr__(self):
        return f"Zonotope(c={self.c.tolist()}, G={self.G.tolist()})"

    def __str__(self):
        return to_text(self)

    def __eq__(self, other):
        if not isinstance(other, Zonotope):
            return NotImplemented
        return np.array_equal(self.c, other.c) and np.array_equal(self.G, other.G)

    __hash__ = None

    def project(self, dims=(0, 1)) -> "Zonotope":
        dims = list(dims)
        return Zonotope(self.c[dims], self.G[dims, :])

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``count`` member points (uniform in the coefficient cube)."""
        beta = rng.uniform(-1.0, 1.0, size=(self.order, count))
        return (self.c[:, None] + self.G @ beta).T


@dataclass(frozen=True)
class Strip:
    """The set ``{x : |h @ x - y| <= r}``."""

    h: np.ndarray
    y: float
    r: float

    def __post_init__(self):
        h = np.array(self.h, dtype=float).reshape(-1)
        object.__setattr__(self, "h", _frozen(h))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "r", float(self.r))
        if not self.r >= 0:
            raise ValueError(f"strip half-width must be >= 0, got {self.r}")

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.abs(x @ self.h - self.y) <= self.r + tol


def prune(z: Zonotope) -> Zonotope:
    """Drop all-zero generator columns (the set is unchanged)."""
    keep = np.any(z.G != 0.0, axis=0)
    if keep.all():
        return z
    return Zonotope(z.c, z.G[:, keep])


def point(c) -> Zonotope:
    return Zonotope(c)


def box(c, radii) -> Zonotope:
    return prune(Zonotope(c, np.diag(np.asarray(radii, dtype=float))))


def _check_dim(a: Zonotope, n: int, what: str = "operand"):
    if a.dim != n:
        raise DimensionError(f"{what} has dimension {a.dim}, expected {n}")


def minkowski_sum(a: Zonotope, b: Zonotope) -> Zonotope:
    _check_dim(b, a.dim)
    return prune(Zonotope(a.c + b.c, np.hstack([a.G, b.G])))


def linear_map(L, z: Zonotope) -> Zonotope:
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if L.shape[1] != z.dim:
        raise DimensionError(f"map has {L.shape[1]} columns, zonotope dimension is {z.dim}")
    return prune(Zonotope(L @ z.c, L @ z.G))


def intersect_strip(z: Zonotope, s: Strip, lam) -> Zonotope:
    """Over-approximate ``z ∩ s`` for any gain vector ``lam``.

    The center moves by ``lam * innovation`` and the generators become
    ``[(I - lam h) G, lam r]``.
    """
    n = z.dim
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if s.h.shape[0] != n or lam.shape[0] != n:
        raise DimensionError("strip row, gain and zonotope dimensions disagree")
    innovation = s.y - s.h @ z.c
    c = z.c + lam * innovation
    G = z.G - np.outer(lam, s.h @ z.G)
    return prune(Zonotope(c, np.hstack([G, (lam * s.r)[:, None]])))


def optimal_lambda(z: Zonotope, s: Strip, eps: float = LAMBDA_EPS) -> np.ndarray:
    """Gain minimising the Frobenius norm of the corrected generator matrix."""
    if s.h.shape[0] != z.dim:
        raise DimensionError("strip row and zonotope dimensions disagree")
    if not np.isfinite(s.r):
        return np.zeros(z.dim)
    p = z.G @ (z.G.T @ s.h)
    denom = s.h @ p + s.r * s.r
    if denom < eps:
        return np.zeros(z.dim)
    return p / denom


def fuse(zs, ws) -> Zonotope:
    """Weighted over-approximation of the intersection of several zonotopes."""
    zs = list(zs)
    ws = np.asarray(list(ws), dtype=float)
    if not zs:
        raise ValueError("cannot fuse an empty list of zonotopes")
    if ws.shape != (len(zs),):
        raise ValueError(f"expected {len(zs)} weights, got {ws.shape}")
    n = zs[0].dim
    for z in zs[1:]:
        _check_dim(z, n)
    total = ws.sum()
    if total == 0.0 or not np.isfinite(total):
        raise ValueError("fusion weights must have a nonzero finite sum")
    # offsets from the first center keep identical centers bit-exact
    ref = zs[0].c
    offset = sum(w * (z.c - ref) for w, z in zip(ws, zs)) / total
    G = np.hstack([w * z.G for w, z in zip(ws, zs)]) / total
    return prune(Zonotope(ref + offset, G))


def optimal_weights(zs) -> np.ndarray:
    zs = list(zs)
    if not zs:
        raise ValueError("need at least one zonotope")
    traces = np.array([np.sum(z.G * z.G) for z in zs])
    degenerate = np.flatnonzero(traces == 0.0)
    if degenerate.size:
        w = np.zeros(len(zs))
        w[degenerate[0]] = 1.0
        return w
    inv = 1.0 / traces
    return inv / inv.sum()


def interval_hull(z: Zonotope) -> tuple[np.ndarray, np.ndarray]:
    """Tightest axis-aligned box ``(center, radii)`` containing ``z``."""
    return z.c.copy(), np.abs(z.G).sum(axis=1)


def area_2d(z: Zonotope) -> float:
    """Area of the (x, y) projection, ``4 * sum |det[g_i g_j]|`` over pairs."""
    if z.dim < 2:
        raise DimensionError("area needs at least two dimensions")
    G = z.G[:2]
    if G.shape[1] < 2:
        return 0.0
    cross = np.outer(G[0], G[1]) - np.outer(G[1], G[0])
    return float(4.0 * np.abs(np.triu(cross, k=1)).sum())


def vertices_2d(z: Zonotope) -> np.ndarray:
    """Counter-clockwise vertex polygon of the (x, y) projection, closed."""
    G = z.G[:2]
    G = G[:, np.any(G != 0.0, axis=0)]
    c = z.c[:2]
    if G.shape[1] == 0:
        return np.array([c, c])
    # orient every generator into the upper half-plane, then sort by angle
    flip = (G[1] < 0) | ((G[1] == 0) & (G[0] < 0))
    G = np.where(flip, -G, G)
    order = np.argsort(np.arctan2(G[1], G[0]), kind="stable")
    G = G[:, order]
    start = c - G.sum(axis=1)
    steps = np.hstack([2 * G, -2 * G])
    pts = start + np.cumsum(steps, axis=1).T
    return np.vstack([start, pts[:-1], start])


def _membership_lp(G: np.ndarray, d: np.ndarray) -> float | None:
    """Smallest ``|beta|_inf`` with ``G beta = d``; None if infeasible."""
    n, e = G.shape
    if e == 0:
        return 0.0 if np.allclose(d, 0.0, atol=LP_TOL) else None
    cost = np.zeros(e + 1)
    cost[-1] = 1.0
    eye = np.eye(e)
    ones = np.ones((e, 1))
    A_ub = np.block([[eye, -ones], [-eye, -ones]])
    res = linprog(
        cost,
        A_ub=A_ub,
        b_ub=np.zeros(2 * e),
        A_eq=np.hstack([G, np.zeros((n, 1))]),
        b_eq=d,
        bounds=[(None, None)] * e + [(0, None)],
        method="highs",
    )
    if res.status != 0:
        return None
    return float(res.x[-1])


def contains_point(z: Zonotope, x, tol: float = LP_TOL) -> bool:
    """Exact membership test via a feasibility LP over the coefficients."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != z.dim:
        raise DimensionError("point and zonotope dimensions disagree")
    scale = 1.0 + np.abs(z.G).sum()
    d = x - z.c
    if z.order == 0:
        return bool(np.all(np.abs(d) <= tol * (1.0 + np.abs(z.c))))
    t = _membership_lp(z.G, d)
    if t is None:
        # retry with the residual absorbed by a tolerance box
        slack = Zonotope(z.c, np.hstack([z.G, tol * scale * np.eye(z.dim)]))
        t = _membership_lp(slack.G, d)
        if t is None:
            return False
    return t <= 1.0 + tol


def _facet_normals(G: np.ndarray) -> np.ndarray | None:
    """Facet normals of a full-dimensional zonotope in 1, 2 or 3 dimensions."""
    n, e = G.shape
    if n == 1:
        return np.ones((1, 1)) if e else None
    if np.linalg.matrix_rank(G) < n:
        return None
    if n == 2:
        N = np.stack([-G[1], G[0]], axis=1)
    elif n == 3:
        i, j = np.triu_indices(e, k=1)
        N = np.cross(G[:, i].T, G[:, j].T)
    else:
        return None
    norms = np.linalg.norm(N, axis=1)
    keep = norms > 1e-12 * max(norms.max(), 1e-300)
    return N[keep] / norms[keep, None]


def contains_points(z: Zonotope, X, tol: float = LP_TOL) -> np.ndarray:
    """Vectorised membership of each row of ``X``.

    Full-dimensional zonotopes in up to three dimensions are tested against
    their facet half-spaces; anything else falls back to the LP per point.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != z.dim:
        raise DimensionError("point and zonotope dimensions disagree")
    N = _facet_normals(z.G) if z.order else None
    if N is None:
        return np.array([contains_point(z, x, tol) for x in X], dtype=bool)
    bound = np.abs(N @ z.G).sum(axis=1)
    scale = 1.0 + np.abs(z.G).sum() + np.abs(z.c).max()
    return np.all(np.abs((X - z.c) @ N.T) <= bound + tol * scale, axis=1)


def hulls_overlap(a: Zonotope, b: Zonotope) -> bool:
    ca, ra = interval_hull(a)
    cb, rb = interval_hull(b)
    return bool(np.all(np.abs(ca - cb) <= ra + rb + LP_TOL * (1.0 + ra + rb)))


def intersects(a: Zonotope, b: Zonotope, method: str = "auto") -> bool:
    """True iff the two zonotopes share a point.

    ``a ∩ b`` is nonempty iff ``b.c - a.c`` lies in ``<0, [a.G, b.G]>``. After
    an interval-hull pre-check the question is answered either by the LP
    (``method="lp"``) or, in up to three dimensions, by the facet test.
    """
    _check_dim(b, a.dim)
    if not hulls_overlap(a, b):
        return False
    diff = Zonotope(np.zeros(a.dim), np.hstack([a.G, b.G]))
    d = b.c - a.c
    if method == "lp":
        return contains_point(diff, d)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    return bool(contains_points(diff, d[None, :])[0])


def reduce_order(z: Zonotope, max_generators: int = DEFAULT_MAX_GENERATORS) -> Zonotope:
    """Bound the generator count, boxing the smallest generators."""
    n = z.dim
    if max_generators < n:
        raise ValueError(f"max_generators={max_generators} is below the dimension {n}")
    z = prune(z)
    if z.order <= max_generators:
        return z
    keep = max_generators - n
    norms = np.linalg.norm(z.G, axis=0)
    order = np.argsort(-norms, kind="stable")
    kept = z.G[:, np.sort(order[:keep])]
    rest = z.G[:, order[keep:]]
    boxed = np.diag(np.abs(rest).sum(axis=1))
    return prune(Zonotope(z.c, np.hstack([kept, boxed])))


def _fmt(v: float) -> str:
    return format(float(v), ".9g")


def to_text(z: Zonotope) -> str:
    """Debug text form ``⟨c1, c2; (g11, g21), (g12, g22)⟩`` at 9 significant digits."""
    center = ", ".join(_fmt(v) for v in z.c)
    cols = ", ".join("(" + ", ".join(_fmt(v) for v in col) + ")" for col in z.G.T)
    return f"⟨{center}; {cols}⟩" if cols else f"⟨{center};⟩"


def from_text(text: str) -> Zonotope:
    body = text.strip()
    if not (body.startswith("⟨") and body.endswith("⟩")):
        raise ValueError(f"not a zonotope text form: {text!r}")
    head, _, tail = body[1:-1].partition(";")
    c = [float(v) for v in head.split(",") if v.strip()]
    cols = []
    for chunk in tail.split(")"):
        chunk = chunk.strip().lstrip(",").strip().lstrip("(")
        if chunk:
            cols.append([float(v) for v in chunk.split(",")])
    G = np.array(cols, dtype=float).T if cols else None
    return Zonotope(c, G)
