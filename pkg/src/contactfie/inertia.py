"""Inertial parameter representations and the smooth maps between them.

Three representations are used for every link:

* ``pi``     standard parameters (mass, first mass moment, rotational inertia
             about the link-frame origin),
* ``P``      the pseudo-inertia, positive definite iff ``pi`` is realizable
             by a physical density,
* ``theta``  an unconstrained log-Cholesky vector with ``P = U U^T``.

Both the spatial (10 parameter, 4x4 pseudo-inertia) and the planar
(4 parameter, 3x3 pseudo-inertia) variants are provided. The planar variant
uses ``pi2 = [m, h_x, h_y, I_z]`` and a 6-vector ``theta2``.
"""
from __future__ import annotations

import numpy as np

N_PI_3D = 10
N_THETA_3D = 10
N_PI_2D = 4
N_THETA_2D = 6

THETA_2D_NAMES = ("alpha", "d1", "d2", "s12", "t1", "t2")
PI_2D_NAMES = ("m", "hx", "hy", "Iz")


def _finite(x, name):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} must be finite")
    return x


# --------------------------------------------------------------------------
# spatial (3D)
# --------------------------------------------------------------------------

def log_cholesky_factor_3d(theta):
    theta = _finite(theta, "theta")
    if theta.shape != (N_THETA_3D,):
        raise ValueError(f"theta must have shape (10,), got {theta.shape}")
    a, d1, d2, d3, s12, s23, s13, t1, t2, t3 = theta
    U = np.array([
        [np.exp(d1), s12, s13, t1],
        [0.0, np.exp(d2), s23, t2],
        [0.0, 0.0, np.exp(d3), t3],
        [0.0, 0.0, 0.0, 1.0],
    ])
    return np.exp(a) * U


def pi_to_pseudo_3d(pi):
    """Pseudo-inertia ``[[0.5 tr(I) 1 - I, h], [h^T, m]]``."""
    pi = _finite(pi, "pi")
    m, hx, hy, hz, ixx, iyy, izz, ixy, iyz, ixz = pi
    inertia = np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])
    P = np.empty((4, 4))
    P[:3, :3] = 0.5 * np.trace(inertia) * np.eye(3) - inertia
    P[:3, 3] = P[3, :3] = (hx, hy, hz)
    P[3, 3] = m
    return P


def pseudo_to_pi_3d(P):
    P = np.asarray(P, dtype=float)
    sigma = 0.5 * (P[:3, :3] + P[:3, :3].T)
    inertia = np.trace(sigma) * np.eye(3) - sigma
    h = 0.5 * (P[:3, 3] + P[3, :3])
    return np.array([
        P[3, 3], h[0], h[1], h[2],
        inertia[0, 0], inertia[1, 1], inertia[2, 2],
        inertia[0, 1], inertia[1, 2], inertia[0, 2],
    ])


def theta_to_pi_3d(theta):
    U = log_cholesky_factor_3d(theta)
    return pseudo_to_pi_3d(U @ U.T)


# (row, col) of the unit matrix each theta entry perturbs in U / e^alpha
_DU_3D = {1: (0, 0), 2: (1, 1), 3: (2, 2), 4: (0, 1), 5: (1, 2), 6: (0, 2),
          7: (0, 3), 8: (1, 3), 9: (2, 3)}


def pi_jacobian_3d(theta):
    """Closed-form ``d pi / d theta`` (10 x 10)."""
    U = log_cholesky_factor_3d(theta)
    ea = np.exp(theta[0])
    jac = np.empty((N_PI_3D, N_THETA_3D))
    for j in range(N_THETA_3D):
        if j == 0:
            dU = U
        else:
            r, c = _DU_3D[j]
            dU = np.zeros((4, 4))
            dU[r, c] = ea * (np.exp(theta[j]) if j <= 3 else 1.0)
        dP = dU @ U.T + U @ dU.T
        jac[:, j] = pseudo_to_pi_3d(dP)
    return jac


# --------------------------------------------------------------------------
# planar (2D)
# --------------------------------------------------------------------------

def log_cholesky_factor_2d(theta2):
    theta2 = _finite(theta2, "theta2")
    if theta2.shape != (N_THETA_2D,):
        raise ValueError(f"theta2 must have shape (6,), got {theta2.shape}")
    a, d1, d2, s12, t1, t2 = theta2
    U = np.array([
        [np.exp(d1), s12, t1],
        [0.0, np.exp(d2), t2],
        [0.0, 0.0, 1.0],
    ])
    return np.exp(a) * U


def pseudo_to_pi_2d(P2):
    P2 = np.asarray(P2, dtype=float)
    return np.array([P2[2, 2], 0.5 * (P2[0, 2] + P2[2, 0]),
                     0.5 * (P2[1, 2] + P2[2, 1]), P2[0, 0] + P2[1, 1]])


def pi_to_pseudo_2d(pi2):
    """Canonical planar pseudo-inertia with the given ``pi2``.

    Only ``tr(Sigma2)`` is fixed by ``pi2``; the block is chosen as
    ``h h^T / m + c/2 * 1`` with ``c = I_z - |h|^2 / m`` so that it is
    positive definite exactly when ``m > 0`` and ``I_z m > |h|^2``.
    """
    m, hx, hy, iz = _finite(pi2, "pi2")
    h = np.array([hx, hy])
    P = np.empty((3, 3))
    if m > 0:
        c = iz - h @ h / m
        P[:2, :2] = np.outer(h, h) / m + 0.5 * c * np.eye(2)
    else:
        P[:2, :2] = 0.5 * iz * np.eye(2)
    P[:2, 2] = P[2, :2] = h
    P[2, 2] = m
    return P


def theta_to_pi_2d(theta2):
    U = log_cholesky_factor_2d(theta2)
    return pseudo_to_pi_2d(U @ U.T)


_DU_2D = {1: (0, 0), 2: (1, 1), 3: (0, 1), 4: (0, 2), 5: (1, 2)}


def pi_jacobian_2d(theta2):
    """Closed-form ``d pi2 / d theta2`` (4 x 6)."""
    U = log_cholesky_factor_2d(theta2)
    ea = np.exp(theta2[0])
    jac = np.empty((N_PI_2D, N_THETA_2D))
    for j in range(N_THETA_2D):
        if j == 0:
            dU = U
        else:
            r, c = _DU_2D[j]
            dU = np.zeros((3, 3))
            dU[r, c] = ea * (np.exp(theta2[j]) if j <= 2 else 1.0)
        jac[:, j] = pseudo_to_pi_2d(dU @ U.T + U @ dU.T)
    return jac


def pi_to_theta_2d(pi2, aniso=0.0, s12=0.0):
    """A log-Cholesky vector reproducing ``pi2``.

    The planar map is many-to-one; ``aniso`` (``d1 - d2``) and ``s12`` select
    the representative. Raises ``ValueError`` for inconsistent ``pi2``.
    """
    m, hx, hy, iz = _finite(pi2, "pi2")
    if not (m > 0 and iz * m > hx * hx + hy * hy):
        raise ValueError(f"pi2 {list(pi2)} is not physically consistent")
    alpha = 0.5 * np.log(m)
    t1, t2 = hx / m, hy / m
    # e^{2d1} + e^{2d2} = rest, with d1 - d2 = aniso
    rest = iz / m - t1 * t1 - t2 * t2 - s12 * s12
    if rest <= 0:
        raise ValueError("s12 too large for the requested inertia")
    d2 = 0.5 * np.log(rest / (np.exp(2 * aniso) + 1.0))
    return np.array([alpha, d2 + aniso, d2, s12, t1, t2])


# --------------------------------------------------------------------------
# consistency
# --------------------------------------------------------------------------

def _cholesky_min_pivot(P):
    """Smallest pivot of an unpivoted Cholesky (``-inf`` if it breaks down)."""
    n = P.shape[0]
    L = np.zeros_like(P)
    min_piv = np.inf
    for j in range(n):
        d = P[j, j] - L[j, :j] @ L[j, :j]
        min_piv = min(min_piv, d)
        if d <= 0:
            return min_piv
        L[j, j] = np.sqrt(d)
        L[j + 1:, j] = (P[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return min_piv


def is_physically_consistent(pi):
    """Return ``(consistent, margin)`` for a 10- or 4-vector of parameters.

    ``consistent`` holds when every Cholesky pivot of the pseudo-inertia
    exceeds ``1e-12 * tr(P)``; ``margin`` is its smallest eigenvalue.
    """
    pi = _finite(pi, "pi")
    if pi.shape == (N_PI_3D,):
        P = pi_to_pseudo_3d(pi)
    elif pi.shape == (N_PI_2D,):
        if pi[0] <= 0:
            return False, float(pi[0])
        P = pi_to_pseudo_2d(pi)
    else:
        raise ValueError(f"expected 10 or 4 parameters, got {pi.shape}")
    margin = float(np.linalg.eigvalsh(P)[0])
    tr = np.trace(P)
    if tr <= 0:
        return False, margin
    return bool(_cholesky_min_pivot(P) > 1e-12 * tr), margin
