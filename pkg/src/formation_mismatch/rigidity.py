"""Rigidity matrix, infinitesimal rigidity tests and related planar geometry."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np

from .graph import FormationGraph, as_multipoint, edge_vectors

#: Quarter-turn (counter-clockwise) rotation.
K = np.array([[0.0, -1.0], [1.0, 0.0]])


class NotRigidError(ValueError):
    """Raised when an operation needs an infinitesimally rigid framework."""


def wedge(a, b):
    """Planar wedge product ``det [a b]``; broadcasts over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


@dataclass
class RigidityReport:
    rank: int
    is_infinitesimally_rigid: bool
    is_minimally_rigid: bool
    kept_edges: list[int]
    singular_values: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["singular_values"] = [float(s) for s in self.singular_values]
        return d


def rigidity_matrix(g: FormationGraph, x) -> np.ndarray:
    """``m x 2n`` rigidity matrix: row k holds ``z_k'`` in the head block and ``-z_k'`` in the tail block."""
    pts = as_multipoint(g, x)
    z = pts[g.heads] - pts[g.tails]
    R = np.zeros((g.m, 2 * g.n))
    rows = np.arange(g.m)
    for c in range(2):
        R[rows, 2 * g.heads + c] = z[:, c]
        R[rows, 2 * g.tails + c] = -z[:, c]
    return R


def mismatch_matrix(g: FormationGraph, x) -> np.ndarray:
    """``m x 2n`` matrix ``S`` with ``z_k'`` in the tail block of row k and zeros elsewhere."""
    pts = as_multipoint(g, x)
    z = pts[g.heads] - pts[g.tails]
    S = np.zeros((g.m, 2 * g.n))
    rows = np.arange(g.m)
    for c in range(2):
        S[rows, 2 * g.tails + c] = z[:, c]
    return S


def numerical_rank(A: np.ndarray, tol: float = 1e-9) -> int:
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def rigidity_test(g: FormationGraph, x, tol: float = 1e-9) -> RigidityReport:
    """Infinitesimal and minimal rigidity of the framework ``{g, x}``.

    The rank counts singular values above ``tol * sigma_max``.  Kept edges are
    chosen greedily in ascending label order, keeping a row whenever it raises
    the numerical rank; when the framework is infinitesimally rigid they form a
    minimally rigid spanning subframework.
    """
    R = rigidity_matrix(g, x)
    s = np.linalg.svd(R, compute_uv=False)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > tol * smax)) if smax > 0 else 0
    target = 2 * g.n - 3
    if rank > target:
        raise RuntimeError(f"rigidity matrix rank {rank} exceeds 2n-3 = {target}")

    kept: list[int] = []
    current = 0
    for k in range(g.m):
        if current == rank:
            break
        trial = R[kept + [k]]
        ts = np.linalg.svd(trial, compute_uv=False)
        r = int(np.sum(ts > tol * smax)) if smax > 0 else 0
        if r > current:
            kept.append(k)
            current = r

    inf_rigid = rank == target
    return RigidityReport(
        rank=rank,
        is_infinitesimally_rigid=inf_rigid,
        is_minimally_rigid=inf_rigid and g.m == target,
        kept_edges=kept,
        singular_values=[float(v) for v in s],
    )


def kernel_basis(g: FormationGraph, x, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Orthogonal basis ``(q0, q1, q2)`` of the rigidity-matrix kernel.

    ``q1`` and ``q2`` are the unit translations along each axis; ``q0`` is the
    infinitesimal rotation about the centroid.

    Raises
    ------
    NotRigidError
        If the framework is not infinitesimally rigid, since the kernel is then
        larger than the span of these three motions.
    """
    pts = as_multipoint(g, x)
    if numerical_rank(rigidity_matrix(g, pts), tol) != 2 * g.n - 3:
        raise NotRigidError("kernel has dimension > 3; framework is not infinitesimally rigid")
    n = g.n
    q1 = np.tile([1.0, 0.0], n)
    q2 = np.tile([0.0, 1.0], n)
    q3 = (pts @ K.T).ravel()
    v1, v2 = pts.mean(axis=0)
    q0 = q3 + v2 * q1 - v1 * q2
    return q0, q1, q2


def _segment_pairs(n: int):
    segs = list(combinations(range(n), 2))
    return segs, list(combinations(range(len(segs)), 2))


def unaligned_test(x, tol: float = 1e-9) -> tuple[bool, tuple[int, int, int, int] | None]:
    """Check that no two segments between formation points are parallel.

    Every pair of distinct segments over the full vertex set is examined,
    including pairs that share an endpoint.  A wedge counts as zero when its
    magnitude is below ``tol * scale**2`` with ``scale`` the largest pairwise
    distance.

    Returns
    -------
    unaligned : bool
    offending : (i, j, k, l) or None
        Indices of the first (most nearly) parallel pair ``x_i - x_j``,
        ``x_k - x_l`` when the formation is aligned.
    """
    pts = np.asarray(x, dtype=float).reshape(-1, 2)
    n = len(pts)
    if len(np.unique(pts, axis=0)) < 2:
        raise ValueError("need at least two distinct points")
    segs, pairs = _segment_pairs(n)
    diffs = np.array([pts[i] - pts[j] for i, j in segs])
    scale = np.max(np.linalg.norm(diffs, axis=1))
    a = np.array([p for p, _ in pairs])
    b = np.array([q for _, q in pairs])
    w = np.abs(wedge(diffs[a], diffs[b]))
    idx = int(np.argmin(w))
    if w[idx] <= tol * scale**2:
        (i, j), (k, l) = segs[a[idx]], segs[b[idx]]
        return False, (i, j, k, l)
    return True, None


def independent_edge_pair(g: FormationGraph, x, tol: float = 1e-9) -> tuple[int, int] | None:
    """Pair of edges sharing a vertex whose edge vectors are not parallel.

    Among all vertex-sharing pairs the one with the largest ``|z_p ^ z_q|`` is
    returned as ``(p, q)`` with ``p < q``.  ``None`` means no such pair exists,
    which rules out infinitesimal rigidity.
    """
    pts = as_multipoint(g, x)
    z = edge_vectors(g, pts)
    scale = max(np.max(np.linalg.norm(z, axis=1)), np.finfo(float).tiny)
    best, best_w = None, tol * scale**2
    for p, q in combinations(range(g.m), 2):
        if not set(g.edges[p]) & set(g.edges[q]):
            continue
        w = abs(wedge(z[p], z[q]))
        if w > best_w:
            best, best_w = (p, q), w
    return best


def rotation_to_vertical(q) -> np.ndarray:
    """Rotation taking the nonzero vector ``q`` to ``(0, |q|)``."""
    q1, q2 = q
    r = np.hypot(q1, q2)
    if r == 0.0:
        raise ValueError("rotation undefined for the zero vector")
    return np.array([[q2, -q1], [q1, q2]]) / r


def shape_coordinates(x) -> np.ndarray:
    """Translation- and rotation-invariant coordinates of a multipoint.

    Moves ``x_1`` to the origin and rotates so that ``x_2`` lies on the positive
    vertical axis; returns ``|x_2 - x_1|`` followed by the rotated positions of
    the remaining points (``2n - 3`` numbers).
    """
    pts = np.asarray(x, dtype=float).reshape(-1, 2)
    base = pts[1] - pts[0]
    if not np.any(base):
        raise ValueError("first two points coincide")
    T = rotation_to_vertical(base)
    rest = (pts[2:] - pts[0]) @ T.T
    return np.concatenate([[np.linalg.norm(base)], rest.ravel()])


def polarization(v1, v2, v3, v4, verify: bool = False):
    """Inner product ``(v1 - v2)'(v3 - v4)`` and optionally its squared-distance form.

    With ``verify=True`` returns ``(lhs, rhs)`` where ``rhs`` is computed purely
    from the four squared distances between the points.
    """
    v1, v2, v3, v4 = (np.asarray(v, dtype=float) for v in (v1, v2, v3, v4))
    lhs = float(np.dot(v1 - v2, v3 - v4))
    if not verify:
        return lhs

    def sq(a, b):
        return float(np.dot(a - b, a - b))

    rhs = 0.5 * (sq(v3, v2) + sq(v1, v4) - sq(v3, v1) - sq(v2, v4))
    return lhs, rhs
