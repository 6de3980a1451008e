"""Rotation algebra on SO(3).

Rotations are plain ``(..., 3, 3)`` float arrays and axis-angle vectors are
``(..., 3)`` arrays whose norm is the angle in radians. Every function
broadcasts over leading dimensions so that whole sequences can be converted
in one call.

Axis sign at an angle of exactly pi is ambiguous; :func:`rotation_to_axis_angle`
resolves it by making the first non-negligible axis component positive.
"""

import numpy as np

from .errors import InvalidArgumentError

SMALL_ANGLE = 1e-7
ORTHONORMAL_TOL = 1e-6
DRIFT_TOL = 1e-12
UNIT_TOL = 1e-9

# YZ-plane reflection: negates x.
MIRROR = np.diag([-1.0, 1.0, 1.0])


def _as_vectors(a, name="axis-angle"):
    a = np.asarray(a, dtype=float)
    if a.shape[-1:] != (3,):
        raise InvalidArgumentError(f"{name} must have trailing dimension 3, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return a


def _as_matrices(R, tol=ORTHONORMAL_TOL):
    R = np.asarray(R, dtype=float)
    if R.shape[-2:] != (3, 3):
        raise InvalidArgumentError(f"rotation must have trailing shape (3, 3), got {R.shape}")
    if not np.all(np.isfinite(R)):
        raise InvalidArgumentError("rotation contains non-finite values")
    if tol is not None:
        gram = np.swapaxes(R, -1, -2) @ R
        if np.max(np.abs(gram - np.eye(3)), initial=0.0) > tol:
            raise InvalidArgumentError("rotation matrix is not orthonormal")
        if np.any(np.linalg.det(R) <= 0.0):
            raise InvalidArgumentError("rotation matrix has negative determinant")
    return R


def skew(v):
    """Cross-product matrix ``[v]x`` such that ``skew(v) @ u == cross(v, u)``."""
    v = np.asarray(v, dtype=float)
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    o = np.zeros_like(x)
    return np.stack(
        [np.stack([o, -z, y], -1), np.stack([z, o, -x], -1), np.stack([-y, x, o], -1)], -2
    )


def vee(K):
    """Inverse of :func:`skew` applied to the skew-symmetric part of ``K``."""
    K = np.asarray(K, dtype=float)
    return 0.5 * np.stack(
        [K[..., 2, 1] - K[..., 1, 2], K[..., 0, 2] - K[..., 2, 0], K[..., 1, 0] - K[..., 0, 1]],
        -1,
    )


def is_rotation(R, tol=1e-9):
    """True when ``R`` is orthonormal with determinant +1 within ``tol``."""
    R = np.asarray(R, dtype=float)
    if R.shape[-2:] != (3, 3) or not np.all(np.isfinite(R)):
        return False
    gram = np.swapaxes(R, -1, -2) @ R
    ok_gram = np.max(np.abs(gram - np.eye(3)), initial=0.0) <= tol
    ok_det = np.all(np.abs(np.linalg.det(R) - 1.0) <= tol)
    return bool(ok_gram and ok_det)


def axis_angle_to_rotation(a):
    """Exponential map (Rodrigues formula).

    Args:
        a: ``(..., 3)`` axis-angle vectors.

    Returns:
        ``(..., 3, 3)`` rotation matrices.
    """
    a = _as_vectors(a)
    theta = np.linalg.norm(a, axis=-1)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    t2 = theta * theta
    # sin(t)/t and (1 - cos t)/t^2, the latter written as 2 sin^2(t/2)/t^2
    # so it stays accurate just above the Taylor cutoff.
    A = np.where(small, 1.0 - t2 / 6.0, np.sin(safe) / safe)
    B = np.where(small, 0.5 - t2 / 24.0, 2.0 * np.sin(0.5 * safe) ** 2 / (safe * safe))
    K = skew(a)
    return np.eye(3) + A[..., None, None] * K + B[..., None, None] * (K @ K)


def rotation_angle(R):
    """Rotation angle in ``[0, pi]``, accurate near both 0 and pi."""
    R = np.asarray(R, dtype=float)
    c = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    s = np.linalg.norm(vee(R), axis=-1)
    return np.arctan2(s, c)


def _canonical_sign(n):
    # first component with magnitude above 1e-12 made positive
    big = np.abs(n) > 1e-12
    first = np.argmax(big, axis=-1)
    lead = np.take_along_axis(n, first[..., None], axis=-1)[..., 0]
    return np.where(lead < 0.0, -1.0, 1.0)


def rotation_to_axis_angle(R):
    """Logarithm map with angle in ``[0, pi]``.

    Below ``pi/2`` the axis comes from the skew-symmetric part; above it from
    the dominant column of the symmetric part, which stays well conditioned
    up to pi. At pi itself the axis sign follows the "first nonzero component
    positive" convention, so a half-turn about z maps to ``(0, 0, pi)``.

    Raises:
        InvalidArgumentError: ``R`` is not a proper rotation within 1e-6.
    """
    R = _as_matrices(R)
    w = vee(R)
    c = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    s = np.linalg.norm(w, axis=-1)
    theta = np.arctan2(s, c)

    small = theta < SMALL_ANGLE
    safe_s = np.where(s > 0.0, s, 1.0)
    scale = np.where(small, 1.0 + theta * theta / 6.0, theta / safe_s)
    out = w * scale[..., None]

    wide = c < 0.0
    if np.any(wide):
        Rw, ww, cw, sw, tw = R[wide], w[wide], c[wide], s[wide], theta[wide]
        S = 0.5 * (Rw + np.swapaxes(Rw, -1, -2)) - cw[:, None, None] * np.eye(3)
        col = np.argmax(np.diagonal(S, axis1=-2, axis2=-1), axis=-1)
        n = np.take_along_axis(S, col[:, None, None], axis=-1)[..., 0]
        n = n / np.linalg.norm(n, axis=-1, keepdims=True)
        dot = np.einsum("...i,...i->...", n, ww)
        sign = np.where(dot < 0.0, -1.0, 1.0)
        ambiguous = sw < 1e-12
        sign = np.where(ambiguous, _canonical_sign(n), sign)
        out[wide] = (sign * tw)[:, None] * n
    return out


def compose(R1, R2):
    """Matrix product ``R1 @ R2``, re-orthonormalized if it drifted beyond 1e-12."""
    R1 = _as_matrices(R1)
    R2 = _as_matrices(R2)
    R = R1 @ R2
    drift = np.max(np.abs(np.swapaxes(R, -1, -2) @ R - np.eye(3)), initial=0.0)
    if drift > DRIFT_TOL:
        R = orthonormalize(R)
    return R


def orthonormalize(R):
    """Nearest rotation in the Frobenius sense (polar factor)."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=float))
    d = np.sign(np.linalg.det(U @ Vt))
    U = U.copy()
    U[..., :, 2] *= d[..., None]
    return U @ Vt


def geodesic_distance(R1, R2):
    """Angle of ``R1.T @ R2`` in ``[0, pi]``."""
    R1 = _as_matrices(R1)
    R2 = _as_matrices(R2)
    return rotation_angle(np.swapaxes(R1, -1, -2) @ R2)


def swing_twist_split(a_rel, f):
    """Split an axis-angle vector into its projection on ``f`` and the remainder.

    This is a Euclidean projection of the rotation vector, not a quaternion
    factorization; the two agree only to first order in the angle.

    Args:
        a_rel: ``(..., 3)`` axis-angle vectors.
        f: ``(..., 3)`` unit axes.

    Returns:
        ``(a_twist, a_swing)`` with ``a_twist + a_swing == a_rel``.
    """
    a_rel = _as_vectors(a_rel)
    f = _as_vectors(f, "axis")
    if np.any(np.abs(np.linalg.norm(f, axis=-1) - 1.0) > UNIT_TOL):
        raise InvalidArgumentError("twist axis must be a unit vector")
    a_twist = f * np.einsum("...i,...i->...", a_rel, f)[..., None]
    return a_twist, a_rel - a_twist


def mirror_conjugate(R):
    """``M @ R @ M.T`` with ``M = diag(-1, 1, 1)``; an involution on SO(3)."""
    R = _as_matrices(R)
    return MIRROR @ R @ MIRROR


def mirror_axis_angle(a):
    """Axis-angle counterpart of :func:`mirror_conjugate`."""
    a = _as_vectors(a)
    return a * np.array([1.0, -1.0, -1.0])


def canonicalize(a):
    """Wrap axis-angle vectors so the angle lies in ``[0, pi]``."""
    return rotation_to_axis_angle(axis_angle_to_rotation(a))


def nearest_branch(a, reference):
    """Equivalent rotation vector ``a + 2*pi*k*axis`` closest to ``reference``.

    Used to keep rotation-vector trajectories continuous across frames.
    """
    a = _as_vectors(a)
    reference = _as_vectors(reference, "reference")
    theta = np.linalg.norm(a, axis=-1, keepdims=True)
    axis = np.where(theta > 0.0, a / np.where(theta > 0.0, theta, 1.0), 0.0)
    ks = np.arange(-2, 3, dtype=float)
    cands = a[..., None, :] + 2.0 * np.pi * ks[:, None] * axis[..., None, :]
    dist = np.linalg.norm(cands - reference[..., None, :], axis=-1)
    best = np.argmin(dist, axis=-1)
    return np.take_along_axis(cands, best[..., None, None], axis=-2)[..., 0, :]
