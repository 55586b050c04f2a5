"""Small SO(3) toolbox: exponential/log maps, minimal rotations, geodesic means.

Rotation vectors use the axis-angle convention (direction = axis, norm = angle
in rad). Batched routines accept (..., 3) / (..., 3, 3) arrays.
"""

import numpy as np
from scipy.spatial.transform import Rotation


def skew(v):
    """Cross-product matrix: skew(v) @ w == cross(v, w). Batched over leading dims."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def exp_so3(rotvec):
    """Rotation matrix for a rotation vector; batched."""
    rotvec = np.asarray(rotvec, dtype=float)
    single = rotvec.ndim == 1
    mats = Rotation.from_rotvec(np.atleast_2d(rotvec)).as_matrix()
    return mats[0] if single else mats.reshape(rotvec.shape[:-1] + (3, 3))


def log_so3(mat):
    """Rotation vector of a rotation matrix; batched, robust near 0 and pi."""
    mat = np.asarray(mat, dtype=float)
    single = mat.ndim == 2
    vecs = Rotation.from_matrix(mat.reshape(-1, 3, 3)).as_rotvec()
    return vecs[0] if single else vecs.reshape(mat.shape[:-2] + (3,))


def compose_rotvec(increment, base):
    """Rotation vector of exp(increment) @ exp(base): multiplicative update."""
    r = Rotation.from_rotvec(np.atleast_2d(increment)) * Rotation.from_rotvec(
        np.atleast_2d(base)
    )
    out = r.as_rotvec()
    return out[0] if np.asarray(increment).ndim == 1 else out


def rotation_between(a, b):
    """Smallest rotation taking unit vector(s) a onto unit vector(s) b; batched.

    Antiparallel pairs rotate by pi about an arbitrary axis orthogonal to a.
    """
    single = np.asarray(a).ndim == 1 and np.asarray(b).ndim == 1
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    n = max(a.shape[0], b.shape[0])
    a = np.broadcast_to(a, (n, 3))
    b = np.broadcast_to(b, (n, 3))
    axis = np.cross(a, b)
    s = np.linalg.norm(axis, axis=1)
    c = np.einsum("ij,ij->i", a, b)
    out = np.empty((n, 3, 3))

    regular = s > 1e-12
    if np.any(regular):
        ax = axis[regular] / s[regular, None]
        ang = np.arctan2(s[regular], c[regular])
        out[regular] = exp_so3(ax * ang[:, None])

    aligned = (~regular) & (c > 0.0)
    out[aligned] = np.eye(3)

    flipped = (~regular) & (c <= 0.0)
    if np.any(flipped):
        # any axis orthogonal to a works; pick deterministically
        ref = np.where(np.abs(a[flipped, 0:1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
        ax = np.cross(a[flipped], ref)
        ax /= np.linalg.norm(ax, axis=1, keepdims=True)
        out[flipped] = exp_so3(ax * np.pi)

    return out[0] if single else out


def geodesic_mean(ra, rb):
    """Midpoint rotation on SO(3): ra @ exp(0.5 * log(ra^T rb)); batched."""
    ra = np.asarray(ra, dtype=float)
    rb = np.asarray(rb, dtype=float)
    rel = np.swapaxes(ra, -1, -2) @ rb
    half = exp_so3(0.5 * log_so3(rel))
    return ra @ half
