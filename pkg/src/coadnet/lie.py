"""so(3) kernels with the Lie algebra identified with R^3.

All functions broadcast over leading axes: vectors have shape ``(..., 3)``.
The pairing is the Euclidean dot product and g is identified with g*.
"""

import numpy as np


def cross(a, b):
    """Cross product along the last axis.

    Written out componentwise because ``np.cross`` is several times slower
    on the small arrays used in the time steppers.
    """
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack((a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0), axis=-1)


def pairing(mu, xi):
    return np.sum(np.asarray(mu) * np.asarray(xi), axis=-1)


def ad(xi, eta):
    """Lie bracket [xi, eta] = xi x eta."""
    return cross(np.asarray(xi, dtype=float), np.asarray(eta, dtype=float))


def coad(xi, mu):
    """Coadjoint action ad*_xi mu = mu x xi.

    Satisfies <coad(xi, mu), eta> = <mu, ad(xi, eta)>.
    """
    return cross(np.asarray(mu, dtype=float), np.asarray(xi, dtype=float))


def hat(v):
    """Skew matrix with hat(v) @ w == v x w."""
    v = np.asarray(v, dtype=float)
    m = np.zeros(v.shape[:-1] + (3, 3))
    m[..., 0, 1] = -v[..., 2]
    m[..., 0, 2] = v[..., 1]
    m[..., 1, 0] = v[..., 2]
    m[..., 1, 2] = -v[..., 0]
    m[..., 2, 0] = -v[..., 1]
    m[..., 2, 1] = v[..., 0]
    return m


def block_hat(vectors):
    """Block-diagonal (3N, 3N) matrix of per-node hat maps."""
    vectors = np.asarray(vectors, dtype=float).reshape(-1, 3)
    n = vectors.shape[0]
    out = np.zeros((3 * n, 3 * n))
    blocks = hat(vectors)
    for i in range(n):
        out[3 * i:3 * i + 3, 3 * i:3 * i + 3] = blocks[i]
    return out


def matvec3(m, x):
    """Per-node 3x3 matrix-vector product, ``m`` (..., 3, 3), ``x`` (..., 3).

    Explicit sums keep the rounding independent of how many leading
    (batch) axes ``x`` carries.
    """
    x0, x1, x2 = x[..., 0], x[..., 1], x[..., 2]
    return np.stack(
        (
            m[..., 0, 0] * x0 + m[..., 0, 1] * x1 + m[..., 0, 2] * x2,
            m[..., 1, 0] * x0 + m[..., 1, 1] * x1 + m[..., 1, 2] * x2,
            m[..., 2, 0] * x0 + m[..., 2, 1] * x1 + m[..., 2, 2] * x2,
        ),
        axis=-1,
    )


def tangent_basis(v):
    """Two unit vectors spanning the plane orthogonal to each ``v``.

    Returns arrays ``(e1, e2)`` of the same shape as ``v`` with
    ``e1 x e2`` parallel to ``v``.
    """
    v = np.asarray(v, dtype=float)
    n = v / np.linalg.norm(v, axis=-1, keepdims=True)
    # helper axis: the coordinate axis least aligned with n
    idx = np.argmin(np.abs(n), axis=-1)
    helper = np.zeros_like(n)
    np.put_along_axis(helper, idx[..., None], 1.0, axis=-1)
    e1 = cross(n, helper)
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = cross(n, e1)
    return e1, e2
