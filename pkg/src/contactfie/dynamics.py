"""Smooth planar dynamics: mass matrix, bias, contact kinematics, regressor.

Each link contributes through its origin velocity ``J_o v`` and angular
rate ``a . v``. In those coordinates the link's equations are linear in
``pi2 = [m, h_x, h_y, I_z]``:

    force  = m (o_dd - g) + w_dd J R h - w^2 R h
    torque = (o_dd - g) . (J R h) + I_z w_dd

and the generalized quantities are their projections through the link
Jacobian. Mass matrix and bias are therefore assembled link by link; the
same per-link terms give the regressor and the parameter derivatives.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .kinematics import point_derivatives, point_velocity_terms

_J = np.array([[0.0, -1.0], [1.0, 0.0]])


def _rot(beta):
    c, s = np.cos(beta), np.sin(beta)
    return np.array([[c, -s], [s, c]])


@dataclass
class DynamicsTerms:
    M: np.ndarray                       # (N, N)
    h: np.ndarray                       # (N,)
    dM_dq: Optional[np.ndarray] = None  # (N, N, N), last index is q_k
    dh_dq: Optional[np.ndarray] = None  # (N, N)
    dh_dv: Optional[np.ndarray] = None  # (N, N)
    M_pi: Optional[np.ndarray] = None   # (4L, N, N) d M / d pi
    h_pi: Optional[np.ndarray] = None   # (4L, N)    d h / d pi


def dynamics_terms(model, q, v, derivatives=False, params=False) -> DynamicsTerms:
    """``M(q)``, ``h(q, v)`` and optionally their derivatives.

    ``derivatives`` adds d/dq and d/dv; ``params`` adds the (exact, since
    linear) derivatives with respect to every link's ``pi2``.
    """
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    chain = model.chain
    nv = model.nv
    g = model.gravity
    order = 3 if derivatives else 2
    M = np.zeros((nv, nv))
    h = np.zeros(nv)
    if derivatives:
        dM = np.zeros((nv, nv, nv))
        dh_dq = np.zeros((nv, nv))
        dh_dv = np.zeros((nv, nv))
    if params:
        M_pi = np.zeros((4 * model.n_links, nv, nv))
        h_pi = np.zeros((4 * model.n_links, nv))

    betas = chain.link_angle_c + chain.link_angle_a @ q
    for i, link in enumerate(model.links):
        m, hx, hy, iz = link.pi2
        a = chain.link_angle_a[i]
        R = _rot(betas[i])
        if derivatives or params:
            derivs = point_derivatives(chain.origins[i], q, order)
            Jo, Ho = derivs[1], derivs[2]
            psi = np.einsum("xjk,j,k->x", Ho, v, v)       # J_dot v of the origin
        else:
            _, Jo, psi = point_velocity_terms(chain.origins[i], q, v)
        omega = a @ v
        acc = psi - g
        hl = np.array([hx, hy])
        Rh = R @ hl
        w = _J @ Rh

        Jtw = Jo.T @ w
        M += m * Jo.T @ Jo + np.outer(Jtw, a) + np.outer(a, Jtw) + iz * np.outer(a, a)
        f_lin = m * acc - omega ** 2 * Rh
        h += Jo.T @ f_lin + a * (acc @ w)

        if derivatives:
            To = derivs[3]
            dpsi_dq = np.einsum("xjkm,j,k->xm", To, v, v)
            dpsi_dv = 2.0 * np.einsum("xjk,j->xk", Ho, v)
            # d(Jo)/dq_k = Ho[:, :, k];  dRh/dq_k = w a_k;  dw/dq_k = -Rh a_k
            HtJ = np.einsum("xjk,xl->jlk", Ho, Jo)          # (Ho_k^T Jo)[j, l]
            dM += m * (HtJ + HtJ.transpose(1, 0, 2))
            dJtw = np.einsum("xjk,x->jk", Ho, w) - np.outer(Jo.T @ Rh, a)
            t2 = np.einsum("jk,l->jlk", dJtw, a)
            dM += t2 + t2.transpose(1, 0, 2)

            dh_dq += np.einsum("xjk,x->jk", Ho, f_lin)
            dh_dq += Jo.T @ (m * dpsi_dq - omega ** 2 * np.outer(w, a))
            dh_dq += np.outer(a, dpsi_dq.T @ w - (acc @ Rh) * a)

            dh_dv += Jo.T @ (m * dpsi_dv - 2.0 * omega * np.outer(Rh, a))
            dh_dv += np.outer(a, dpsi_dv.T @ w)

        if params:
            base = 4 * i
            M_pi[base] = Jo.T @ Jo
            h_pi[base] = Jo.T @ acc
            for c in range(2):
                Re = R[:, c]
                we = _J @ Re
                Jtwe = Jo.T @ we
                M_pi[base + 1 + c] = np.outer(Jtwe, a) + np.outer(a, Jtwe)
                h_pi[base + 1 + c] = -omega ** 2 * (Jo.T @ Re) + a * (acc @ we)
            M_pi[base + 3] = np.outer(a, a)

    out = DynamicsTerms(M, h)
    if derivatives:
        out.dM_dq, out.dh_dq, out.dh_dv = dM, dh_dq, dh_dv
    if params:
        out.M_pi, out.h_pi = M_pi, h_pi
    return out


def mass_matrix(model, q):
    return dynamics_terms(model, q, np.zeros(model.nv)).M


def bias(model, q, v):
    """Coriolis, centrifugal and gravity generalized force ``h(q, v)``."""
    return dynamics_terms(model, q, v).h


def free_velocity(model, q, v, u, dt):
    """Contact-free next velocity ``v + dt M^-1 (B u - h)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    terms = dynamics_terms(model, q, v)
    tau = model.actuation_matrix() @ np.atleast_1d(np.asarray(u, dtype=float)) - terms.h
    return np.asarray(v, dtype=float) + dt * np.linalg.solve(terms.M, tau)


def integrate_config(q, v_plus, dt):
    """Semi-implicit configuration update ``q + dt v_plus``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return np.asarray(q, dtype=float) + dt * np.asarray(v_plus, dtype=float)


def regressor(model, q, v, a):
    """``Y`` with ``Y @ model.pi_vector() == M(q) a + h(q, v)``."""
    terms = dynamics_terms(model, q, v, params=True)
    return (np.einsum("pjk,k->jp", terms.M_pi, np.asarray(a, dtype=float))
            + terms.h_pi.T)


@dataclass
class ContactKinematics:
    phi: np.ndarray        # (C,) signed distance to z = 0
    Jn: np.ndarray         # (C, N)
    Jt: np.ndarray         # (C, N)
    Hn: Optional[np.ndarray] = None   # (C, N, N) Hessian of the contact height
    Ht: Optional[np.ndarray] = None   # (C, N, N) Hessian of the contact x


def contact_kinematics(model, q, hessians=False) -> ContactKinematics:
    q = np.asarray(q, dtype=float)
    nc, nv = model.n_contacts, model.nv
    phi = np.zeros(nc)
    Jn = np.zeros((nc, nv))
    Jt = np.zeros((nc, nv))
    Hn = np.zeros((nc, nv, nv)) if hessians else None
    Ht = np.zeros((nc, nv, nv)) if hessians else None
    for c, terms in enumerate(model.chain.contacts):
        d = point_derivatives(terms, q, 2 if hessians else 1)
        phi[c] = d[0][1]
        Jt[c], Jn[c] = d[1][0], d[1][1]
        if hessians:
            Ht[c], Hn[c] = d[2][0], d[2][1]
    return ContactKinematics(phi, Jn, Jt, Hn, Ht)


def kinetic_energy(model, q, v):
    """Sum of per-link planar kinetic energies (independent of ``M``)."""
    chain = model.chain
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    betas = chain.link_angle_c + chain.link_angle_a @ q
    total = 0.0
    for i, link in enumerate(model.links):
        m, hx, hy, iz = link.pi2
        Jo = point_derivatives(chain.origins[i], q, 1)[1]
        od = Jo @ v
        om = chain.link_angle_a[i] @ v
        Rh = _rot(betas[i]) @ np.array([hx, hy])
        total += 0.5 * m * od @ od + om * od @ (_J @ Rh) + 0.5 * iz * om * om
    return total
