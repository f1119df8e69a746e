"""Dense-matrix utilities: vectorization, orthonormal bases, subspace geometry.

Matrices are plain float64 ndarrays. A "basis" here always means a
column-orthonormal p x d matrix with p >= d; every function returning one
guarantees ||Phi^T Phi - I||_max <= 1e-10.
"""

import numpy as np

from .errors import DegenerateFactorizationError, DimensionError, ToleranceError

ORTHO_TOL = 1e-10


def vec(m):
    """Column-major flatten: stacks the columns of m into one vector."""
    return np.asarray(m, dtype=float).reshape(-1, order="F")


def vec_inv(v, d_x):
    """Inverse of vec: contiguous length-d_x blocks become the columns."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if d_x < 1 or v.size % d_x != 0:
        raise DimensionError(f"vector length {v.size} not divisible by d_x={d_x}")
    return v.reshape(d_x, v.size // d_x, order="F")


def thin_qr(m):
    """QR factorization with the positive-diagonal-R uniqueness convention.

    Returns (q, r) with q column-orthonormal, r upper-triangular with
    strictly positive diagonal, q @ r == m. Rank-deficient m is rejected.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] < m.shape[1]:
        raise DimensionError(f"thin_qr expects tall p x d input, got {m.shape}")
    sv = np.linalg.svd(m, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] <= 1e-12 * sv[0]:
        raise DegenerateFactorizationError(
            f"rank-deficient input (sigma_min/sigma_max = {sv[-1] / max(sv[0], 1e-300):.2e})"
        )
    q, r = np.linalg.qr(m)
    signs = np.where(np.diagonal(r) < 0, -1.0, 1.0)
    return q * signs, r * signs[:, None]


def subspace_distance(a, b):
    """Largest principal-angle sine between the column spans of a and b.

    Equals the spectral norm of a_perp^T b; both arguments must be
    column-orthonormal with the same shape.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    # (I - a a^T) b has the same spectral norm as a_perp^T b
    resid = b - a @ (a.T @ b)
    if resid.size == 0:
        return 0.0
    s = float(np.linalg.svd(resid, compute_uv=False)[0])
    return min(max(s, 0.0), 1.0)


def orthonormal_complement(a):
    """Orthonormal basis of the orthogonal complement of span(a)."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise DimensionError("expected a 2-d basis")
    p, d = a.shape
    if d >= p:
        raise DimensionError(f"no complement: basis has {d} columns in R^{p}")
    q = np.linalg.qr(a, mode="complete")[0]
    return q[:, d:]


def perturbed_basis(target, dist, rng):
    """Basis at a prescribed subspace distance (within 0.005) from target.

    Mixes target with a random orthonormal matrix drawn inside its
    complement and bisects on the mixing coefficient until the measured
    distance lands within tolerance.
    """
    target = np.asarray(target, dtype=float)
    if not 0.0 <= dist < 1.0:
        raise DimensionError(f"dist must lie in [0, 1), got {dist}")
    if dist == 0.0:
        return target.copy()
    comp = orthonormal_complement(target)
    d = target.shape[1]
    mix = comp @ rng.standard_normal((comp.shape[1], d))
    mix /= np.linalg.norm(mix, axis=0)
    lo, hi = 0.0, 1.0
    for _ in range(64):
        s = 0.5 * (lo + hi)
        cand = thin_qr((1.0 - s) * target + s * mix)[0]
        measured = subspace_distance(target, cand)
        if abs(measured - dist) <= 0.005:
            return cand
        if measured < dist:
            lo = s
        else:
            hi = s
    raise ToleranceError(f"bisection did not reach distance {dist} in 64 iterations")


def random_basis_at_distance(target, dist, rng):
    """Haar-random basis pulled to an exact subspace distance from target.

    Draws a random orthonormal basis, then walks the geodesic between
    target and the draw until the largest principal angle has sine equal
    to dist. Unlike perturbed_basis, the smaller principal angles keep
    the spread of a generic random draw instead of collapsing to a
    single common value.
    """
    target = np.asarray(target, dtype=float)
    if not 0.0 <= dist < 1.0:
        raise DimensionError(f"dist must lie in [0, 1), got {dist}")
    if dist == 0.0:
        return target.copy()
    p, d = target.shape
    draw = thin_qr(rng.standard_normal((p, d)))[0]
    u, cosines, vt = np.linalg.svd(target.T @ draw)
    cosines = np.clip(cosines, -1.0, 1.0)
    angles = np.arccos(cosines)
    if angles[-1] <= 0.0:
        raise ToleranceError("random draw is not separated from target")
    head = target @ u
    tail = draw @ vt.T - head * cosines
    sines = np.sin(angles)
    safe = np.where(sines > 1e-12, sines, 1.0)
    tail = np.where(sines > 1e-12, tail / safe, 0.0)
    scaled = angles * (np.arcsin(dist) / angles[-1])
    return thin_qr(head * np.cos(scaled) + tail * np.sin(scaled))[0]


def pinv(m, rel_tol=1e-10):
    """Moore-Penrose pseudoinverse, zeroing singular values < rel_tol * max."""
    m = np.asarray(m, dtype=float)
    return np.linalg.pinv(m, rcond=rel_tol)
