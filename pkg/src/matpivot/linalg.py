"""Small dense matrix numerics: operator norms, wedge squares, singular gap,
projective distance, the alignment predicate, cones and spectral quantities.

Everything here is exact small-dimension (2 <= d <= 8) linear algebra; the
SVD engine comes from the dispatch layer (Jacobi under numba, LAPACK under
the numpy fallback).
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ._dispatch import svd_full, svd_values, svd_values_batch

MIN_DIM = 2
MAX_DIM = 8

UNIT_NORM_TOL = 1e-12
SIGN_EPS = 1e-12
PINV_CUT = 1e-13
IMAGE_TOL = 1e-10


class DomainError(ValueError):
    """Mathematically undefined request (zero matrix, empty word, ...)."""


def as_mat(g):
    """Validate and return a d x d float matrix, 2 <= d <= 8, finite."""
    g = np.asarray(g, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {g.shape}")
    d = g.shape[0]
    if not (MIN_DIM <= d <= MAX_DIM):
        raise ValueError(f"dimension {d} outside [{MIN_DIM}, {MAX_DIM}]")
    if not np.all(np.isfinite(g)):
        raise ValueError("matrix has non-finite entries")
    return g


@dataclass(frozen=True)
class ProjPoint:
    """Canonical representative of a projective class: unit norm, first
    coordinate of modulus > 1e-12 made positive."""

    coords: np.ndarray

    @property
    def dim(self):
        return len(self.coords)

    def __eq__(self, other):
        return isinstance(other, ProjPoint) and self.dim == other.dim and \
            np.array_equal(self.coords, other.coords)


def proj_point(x):
    x = np.asarray(x, dtype=float).reshape(-1)
    n = np.linalg.norm(x)
    if n == 0.0 or not np.all(np.isfinite(x)):
        raise DomainError("projective class of the zero vector is undefined")
    x = x / n
    for xi in x:
        if abs(xi) > SIGN_EPS:
            if xi < 0:
                x = -x
            break
    x.setflags(write=False)
    return ProjPoint(coords=x)


def _coords(x):
    if isinstance(x, ProjPoint):
        return x.coords
    return np.asarray(x, dtype=float).reshape(-1)


@dataclass(frozen=True)
class SingularData:
    values: np.ndarray
    left: ProjPoint
    right: ProjPoint


@dataclass(frozen=True)
class SpectralData:
    rho1: float
    rho2: float
    top_eigen: "ProjPoint | None"
    iterations: int
    converged: bool


def op_norm(g):
    """s1(g) = max ||gx||/||x||; 0 iff g = 0."""
    g = as_mat(g)
    return float(svd_values(g)[0])


def singular_data(g):
    g = as_mat(g)
    u, s, vt = svd_full(g)
    return SingularData(values=np.asarray(s), left=proj_point(u[:, 0]),
                        right=proj_point(vt[0]))


def wedge_square(g):
    """Matrix of the induced map on 2-vectors, basis (e_i ^ e_j)_{i<j}."""
    g = as_mat(g)
    d = g.shape[0]
    pairs = list(combinations(range(d), 2))
    out = np.empty((len(pairs), len(pairs)))
    for a, (i, j) in enumerate(pairs):
        for b, (k, l) in enumerate(pairs):
            out[a, b] = g[i, k] * g[j, l] - g[i, l] * g[j, k]
    return out


def wedge_square_batch(stack):
    """Vectorized wedge_square over a (..., d, d) stack."""
    stack = np.asarray(stack, dtype=float)
    d = stack.shape[-1]
    pairs = list(combinations(range(d), 2))
    ii = np.array([p[0] for p in pairs])
    jj = np.array([p[1] for p in pairs])
    a = stack[..., ii[:, None], ii[None, :]] * stack[..., jj[:, None], jj[None, :]]
    b = stack[..., ii[:, None], jj[None, :]] * stack[..., jj[:, None], ii[None, :]]
    return a - b


def sigma(g):
    """First singular gap s2/s1; undefined for the zero matrix."""
    g = as_mat(g)
    s = svd_values(g)
    if s[0] == 0.0:
        raise DomainError("sigma undefined for the zero matrix")
    return float(s[1] / s[0])


def sigma_batch(stack):
    s = svd_values_batch(stack)
    s0 = s[..., 0]
    if np.any(s0 == 0.0):
        raise DomainError("sigma undefined for the zero matrix")
    return s[..., 1] / s0


def proj_dist(x, y):
    """d([x],[y]) = ||x ^ y|| / (||x|| ||y||), values in [0, 1]."""
    xv = _coords(x)
    yv = _coords(y)
    if len(xv) != len(yv):
        raise ValueError(f"dimension mismatch: {len(xv)} vs {len(yv)}")
    nx = np.linalg.norm(xv)
    ny = np.linalg.norm(yv)
    if nx == 0.0 or ny == 0.0:
        raise DomainError("projective distance needs nonzero vectors")
    d = len(xv)
    acc = 0.0
    for i in range(d):
        for j in range(i + 1, d):
            m = xv[i] * yv[j] - xv[j] * yv[i]
            acc += m * m
    return min(1.0, np.sqrt(acc) / (nx * ny))


def proj_dist_batch(xs, ys):
    """Row-wise projective distances for (..., d) stacks of vectors."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    d = xs.shape[-1]
    acc = np.zeros(np.broadcast_shapes(xs.shape[:-1], ys.shape[:-1]))
    for i in range(d):
        for j in range(i + 1, d):
            m = xs[..., i] * ys[..., j] - xs[..., j] * ys[..., i]
            acc += m * m
    nx = np.linalg.norm(xs, axis=-1)
    ny = np.linalg.norm(ys, axis=-1)
    return np.minimum(1.0, np.sqrt(acc) / (nx * ny))


def _operand_norm(x):
    """Norm of an alignment operand: operator norm for matrices, Euclidean
    for vectors/covectors, modulus for scalars."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return abs(float(x))
    if x.ndim == 1:
        return float(np.linalg.norm(x))
    return float(svd_values(x)[0])


def is_aligned(g, h, eps):
    """||gh|| >= eps ||g|| ||h||.

    A 1-d array is read positionally: covector when on the left, vector when
    on the right; covector @ vector is the scalar case.
    """
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    ng = _operand_norm(g)
    nh = _operand_norm(h)
    if ng == 0.0 or nh == 0.0:
        raise DomainError("alignment undefined for a zero factor")
    prod = (g.reshape(1, -1) if g.ndim == 1 else g) @ \
        (h.reshape(-1, 1) if h.ndim == 1 else h)
    return _operand_norm(np.squeeze(prod)) >= eps * ng * nh


def alignment_ratio(g, h):
    """||gh|| / (||g|| ||h||), the quantity the predicate thresholds."""
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    ng = _operand_norm(g)
    nh = _operand_norm(h)
    if ng == 0.0 or nh == 0.0:
        raise DomainError("alignment undefined for a zero factor")
    prod = (g.reshape(1, -1) if g.ndim == 1 else g) @ \
        (h.reshape(-1, 1) if h.ndim == 1 else h)
    return _operand_norm(np.squeeze(prod)) / (ng * nh)


def cone_test(g, v, eps, which):
    """Membership tests for the cones V/U/W at level eps.

    V: direct test ||gv|| >= eps ||g|| ||v||.
    U: v lies in the image of g and its minimal-norm preimage (pseudo-inverse
       on the singular basis, cut at 1e-13 * s1) lies in V^eps.
    W: the U test on the transpose.
    """
    g = as_mat(g)
    v = np.asarray(v, dtype=float).reshape(-1)
    if np.linalg.norm(v) == 0.0:
        raise DomainError("cone test needs a nonzero vector")
    s1 = svd_values(g)[0]
    if s1 == 0.0:
        raise DomainError("cone test undefined for the zero matrix")
    if which == "V":
        return float(np.linalg.norm(g @ v)) >= eps * s1 * float(np.linalg.norm(v))
    if which == "W":
        return cone_test(g.T, v, eps, "U")
    if which != "U":
        raise ValueError("which must be one of 'V', 'U', 'W'")
    u, s, vt = svd_full(g)
    keep = s > PINV_CUT * s1
    coords = u.T @ v
    resid = np.linalg.norm(coords[~keep]) if np.any(~keep) else 0.0
    if resid > IMAGE_TOL * np.linalg.norm(v):
        return False
    pre = vt.T[:, keep] @ (coords[keep] / s[keep])
    return cone_test(g, pre, eps, "V")


def _canon_unit(x):
    n = np.linalg.norm(x)
    if n == 0.0:
        return x
    x = x / n
    for xi in x:
        if abs(xi) > SIGN_EPS:
            return -x if xi < 0 else x
    return x


def _power_iteration(m, tol, max_iter):
    """Projective power iteration; returns (rho, direction, iters, converged).

    rho is the geometric mean of the norm growth over the trailing window,
    which equals the top eigenvalue modulus whenever the projective iterate
    converges, and stays a sensible Gelfand estimate otherwise.
    """
    d = m.shape[0]
    x = np.ones(d) / np.sqrt(d)
    streak = 0
    window = []
    for it in range(1, max_iter + 1):
        y = m @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0, None, it, False
        window.append(np.log(ny))
        if len(window) > 64:
            window.pop(0)
        y = _canon_unit(y)
        step = proj_dist(y, x)
        x = y
        if step < tol:
            streak += 1
            if streak >= 8:
                return float(np.exp(np.mean(window[-8:]))), x, it, True
        else:
            streak = 0
    return float(np.exp(np.mean(window))), x, max_iter, False


def spectral(g, tol=1e-12, max_iter=10**6):
    """Top two eigenvalue moduli and the dominant eigendirection.

    rho1 by power iteration on g, rho1*rho2 by power iteration on the wedge
    square; non-convergence of the projective iterate (non-proximal input)
    is reported through converged=False.
    """
    g = as_mat(g)
    if svd_values(g)[0] == 0.0:
        raise DomainError("spectral undefined for the zero matrix")
    n1 = np.max(np.abs(g))
    rho1, x, it1, conv1 = _power_iteration(g / n1, tol, max_iter)
    rho1 *= n1
    w = wedge_square(g)
    nw = np.max(np.abs(w))
    if nw == 0.0:
        rho12, it2 = 0.0, 0
    else:
        rho12, _, it2, _ = _power_iteration(w / nw, tol, max_iter)
        rho12 *= nw
    rho2 = min(rho1, rho12 / rho1) if rho1 > 0.0 else 0.0
    converged = conv1 and rho1 > rho2
    top = proj_point(x) if (converged and x is not None) else None
    return SpectralData(rho1=float(rho1), rho2=float(rho2), top_eigen=top,
                        iterations=it1 + it2, converged=converged)


def top_image_direction(g):
    """Unit representative of U^1(g): image of the top right-singular
    vector (ties broken by the smallest singular index)."""
    g = as_mat(g)
    _, s, vt = svd_full(g)
    if s[0] == 0.0:
        raise DomainError("zero matrix has no image direction")
    return _canon_unit(g @ vt[0])


def top_row_direction(g):
    """Unit representative of W^1(g) (the transpose's image direction)."""
    return top_image_direction(np.asarray(g, dtype=float).T)
