"""Planar forward kinematics with exact derivatives up to third order.

Every link orientation in a planar tree is affine in ``q``:
``beta = c + a . q``. Every point fixed to a link is therefore a finite sum
of terms ``R(c_t + a_t . q) w_t * l_t(q)`` where ``l_t`` is either ``1`` or a
single prismatic coordinate ``q_j``. Derivatives of such sums are closed-form,
which gives the Jacobians, Hessians and third-derivative tensors needed by
the dynamics and by the contact-step sensitivities.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PointTerms:
    c: np.ndarray      # (T,)   angle offsets
    a: np.ndarray      # (T, N) angle gradients
    w: np.ndarray      # (T, 2) vectors in the rotated frame
    j: np.ndarray      # (T,)   coordinate index multiplying the term, -1 if none


@dataclass(frozen=True)
class Chain:
    """Term expansions for every link origin and contact point."""
    nv: int
    link_angle_c: np.ndarray     # (L,)
    link_angle_a: np.ndarray     # (L, N)
    origins: tuple               # PointTerms per link
    contacts: tuple              # PointTerms per contact


def _terms(rows, nv):
    if not rows:
        return PointTerms(np.zeros(0), np.zeros((0, nv)), np.zeros((0, 2)), np.zeros(0, int))
    c = np.array([r[0] for r in rows], dtype=float)
    a = np.array([r[1] for r in rows], dtype=float)
    w = np.array([r[2] for r in rows], dtype=float)
    j = np.array([r[3] for r in rows], dtype=int)
    return PointTerms(c, a, w, j)


def build_chain(model) -> Chain:
    nv = model.nv
    e = np.eye(nv)
    angle_c, angle_a, origin_rows = [], [], []
    for i, link in enumerate(model.links):
        if i == 0:
            ca, aa = link.offset_angle, e[2].copy()
            rows = [(0.0, np.zeros(nv), (1.0, 0.0), 0),
                    (0.0, np.zeros(nv), (0.0, 1.0), 1),
                    (0.0, e[2].copy(), tuple(link.offset_xy), -1)]
        else:
            p = link.parent
            cp, ap = angle_c[p], angle_a[p]
            rows = list(origin_rows[p]) + [(cp, ap.copy(), tuple(link.offset_xy), -1)]
            ca, aa = cp + link.offset_angle, ap.copy()
            jq = 3 + i - 1
            if link.joint == "revolute":
                aa = aa + link.axis[0] * e[jq]
            else:
                rows.append((ca, aa.copy(), tuple(link.axis), jq))
        angle_c.append(ca)
        angle_a.append(aa)
        origin_rows.append(rows)

    contacts = []
    for ct in model.contacts:
        i = ct.link
        rows = list(origin_rows[i]) + [(angle_c[i], angle_a[i].copy(), tuple(ct.point), -1)]
        contacts.append(_terms(rows, nv))

    return Chain(nv, np.array(angle_c), np.array(angle_a),
                 tuple(_terms(r, nv) for r in origin_rows), tuple(contacts))


def _rotated(terms: PointTerms, q):
    beta = terms.c + terms.a @ q
    cb, sb = np.cos(beta), np.sin(beta)
    wx, wy = terms.w[:, 0], terms.w[:, 1]
    u = np.empty((len(beta), 2))
    u[:, 0] = cb * wx - sb * wy                                    # R w
    u[:, 1] = sb * wx + cb * wy
    ju = np.empty_like(u)                                          # J R w
    ju[:, 0] = -u[:, 1]
    ju[:, 1] = u[:, 0]
    ell = np.where(terms.j >= 0, q[np.maximum(terms.j, 0)], 1.0)
    return u, ju, ell


def _selector(terms: PointTerms, nv):
    sel = np.zeros((len(terms.c), nv))       # e_j rows
    has_j = terms.j >= 0
    sel[np.nonzero(has_j)[0], terms.j[has_j]] = 1.0
    return sel


def point_velocity_terms(terms: PointTerms, q, v):
    """Position ``r``, Jacobian ``J`` and the bias acceleration ``(dJ/dt) v``."""
    u, ju, ell = _rotated(terms, q)
    a = terms.a
    sel = _selector(terms, len(q))
    av = a @ v
    sv = sel @ v
    r = ell @ u
    J = (ju * ell[:, None]).T @ a + u.T @ sel
    jdv = -(ell * av * av) @ u + 2.0 * (av * sv) @ ju
    return r, J, jdv


def point_derivatives(terms: PointTerms, q, order=1):
    """Position and derivatives of a point up to ``order`` (0..3).

    Returns a list ``[r (2,), J (2,N), H (2,N,N), T (2,N,N,N)]`` truncated
    to ``order + 1`` entries.
    """
    nv = len(q)
    u, ju, ell = _rotated(terms, q)
    a = terms.a
    sel = _selector(terms, nv)

    out = [u.T @ ell]
    if order >= 1:
        out.append(np.einsum("tx,t,tk->xk", ju, ell, a) + u.T @ sel)
    if order >= 2:
        H = -np.einsum("tx,t,tk,tl->xkl", u, ell, a, a)
        cross = np.einsum("tx,tk,tl->xkl", ju, a, sel)
        out.append(H + cross + cross.transpose(0, 2, 1))
    if order >= 3:
        T = -np.einsum("tx,t,tk,tl,tm->xklm", ju, ell, a, a, a)
        aas = np.einsum("tx,tk,tl,tm->xklm", u, a, a, sel)
        T -= aas + aas.transpose(0, 1, 3, 2) + aas.transpose(0, 3, 2, 1)
        out.append(T)
    return out


def link_angles(chain: Chain, q):
    return chain.link_angle_c + chain.link_angle_a @ q


def contact_positions(chain: Chain, q):
    """World positions of all contact points, shape ``(C, 2)``."""
    return np.array([point_derivatives(t, q, 0)[0] for t in chain.contacts]).reshape(-1, 2)
