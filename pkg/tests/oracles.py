"""Reference computations written directly from first principles.

None of these call the package's kinematics or dynamics code; they rebuild
link frames from the model description and differentiate with complex steps.
"""
import numpy as np

CSTEP = 1e-30


def rot(beta):
    c, s = np.cos(beta), np.sin(beta)
    return np.array([[c, -s], [s, c]])


def link_frames(model, q):
    """World origin and angle of every link (works with complex ``q``)."""
    frames = []
    for i, link in enumerate(model.links):
        if i == 0:
            beta = link.offset_angle + q[2]
            origin = np.array([q[0], q[1]]) + rot(q[2]) @ link.offset_xy
        else:
            po, pb = frames[link.parent]
            origin = po + rot(pb) @ link.offset_xy
            beta = pb + link.offset_angle
            qj = q[3 + i - 1]
            if link.joint == "revolute":
                beta = beta + link.axis[0] * qj
            else:
                origin = origin + rot(beta) @ link.axis * qj
        frames.append((origin, beta))
    return frames


def contact_points(model, q):
    fr = link_frames(model, q)
    return [fr[c.link][0] + rot(fr[c.link][1]) @ c.point for c in model.contacts]


def _com_state(model, q, v):
    """COM positions, COM velocities, angles and rates of every link."""
    qc = np.asarray(q, dtype=complex) + 1j * CSTEP * np.asarray(v, dtype=float)
    out = []
    for (o, b), link in zip(link_frames(model, qc), model.links):
        m, hx, hy, _ = link.pi2
        com = o + rot(b) @ (np.array([hx, hy]) / m)
        out.append((com.real, com.imag / CSTEP, b.real, b.imag / CSTEP))
    return out


def kinetic_energy(model, q, v):
    total = 0.0
    for (_, cdot, _, w), link in zip(_com_state(model, q, v), model.links):
        m, hx, hy, iz = link.pi2
        icom = iz - (hx * hx + hy * hy) / m
        total += 0.5 * m * cdot @ cdot + 0.5 * icom * w * w
    return total


def mass_matrix(model, q):
    """Polarization of the (exactly quadratic) kinetic energy."""
    n = model.nv
    E = np.eye(n)
    M = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            M[i, j] = (kinetic_energy(model, q, E[i] + E[j]) - kinetic_energy(model, q, E[i])
                       - kinetic_energy(model, q, E[j]))
    return M


def potential(model, q):
    """Gravitational potential (supports complex ``q``)."""
    g = model.gravity
    total = 0.0
    for (o, b), link in zip(link_frames(model, q), model.links):
        m, hx, hy, _ = link.pi2
        total = total - (o * m + rot(b) @ np.array([hx, hy])) @ g
    return total


def gravity_force(model, q):
    n = model.nv
    return np.array([potential(model, np.asarray(q, dtype=complex) + 1j * CSTEP * e).imag / CSTEP
                     for e in np.eye(n)])


def bias(model, q, v, h=1e-6):
    """``h = Mdot v - dT/dq + dV/dq`` from the Lagrangian (central differences)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    Mdot = (mass_matrix(model, q + h * v) - mass_matrix(model, q - h * v)) / (2 * h)
    dT = np.array([(kinetic_energy(model, q + h * e, v) - kinetic_energy(model, q - h * e, v))
                   / (2 * h) for e in np.eye(model.nv)])
    return Mdot @ v - dT + gravity_force(model, q)


def jacobian_fd(fn, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    cols = [(np.asarray(fn(x + h * e)) - np.asarray(fn(x - h * e))) / (2 * h)
            for e in np.eye(x.size)]
    return np.stack(cols, axis=-1)


def bisect(f, lo, hi, tol=1e-15):
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def resting_particle_velocity(kappa, g=9.81, dt=0.01, m=1.0):
    """Root of ``m (v + g dt) - 2 / (kappa v) = 0`` for the barrier-supported particle."""
    return bisect(lambda v: m * (v + g * dt) - 2.0 / (kappa * v), 1e-12, 10.0)


def batch_least_squares(A, B, P, c, C, y, Wy, Wu, x0p, W0, pp, Wp):
    """Stacked normal-equations solution of a linear-Gaussian smoothing problem.

    Unknowns are ``(x0, u_0..u_{T-1}, p)``; returns states, inputs, parameters.
    """
    nx, nu = B.shape
    npar = P.shape[1]
    T = len(y) - 1
    nw = nx + T * nu + npar
    Phi = [np.zeros((nx, nw))]
    Phi[0][:, :nx] = np.eye(nx)
    e = [np.zeros(nx)]
    for k in range(T):
        Pk = A @ Phi[k]
        Pk[:, nx + k * nu:nx + (k + 1) * nu] += B
        Pk[:, nx + T * nu:] += P
        Phi.append(Pk)
        e.append(A @ e[k] + c)
    rows, rhs = [], []
    for k in range(T + 1):
        s = np.sqrt(Wy[k])
        rows.append(s[:, None] * (C @ Phi[k]))
        rhs.append(s * (y[k] - C @ e[k]))
    for k in range(T):
        R = np.zeros((nu, nw))
        R[:, nx + k * nu:nx + (k + 1) * nu] = np.diag(np.sqrt(Wu))
        rows.append(R)
        rhs.append(np.zeros(nu))
    R = np.zeros((nx, nw))
    R[:, :nx] = np.diag(np.sqrt(W0))
    rows.append(R)
    rhs.append(np.sqrt(W0) * x0p)
    if npar:
        R = np.zeros((npar, nw))
        R[:, nx + T * nu:] = np.diag(np.sqrt(Wp))
        rows.append(R)
        rhs.append(np.sqrt(Wp) * pp)
    H = np.vstack(rows)
    w = np.linalg.solve(H.T @ H, H.T @ np.concatenate(rhs))
    xs = np.array([Phi[k] @ w + e[k] for k in range(T + 1)])
    return xs, w[nx:nx + T * nu].reshape(T, nu), w[nx + T * nu:]


def random_lq(rng, nx, nu, npar, ny, T, sparse_meas=False):
    """Random LQ estimation instance and its stacked normal-equations solution."""
    A = np.eye(nx) + 0.1 * rng.normal(size=(nx, nx))
    B = rng.normal(size=(nx, nu))
    P = rng.normal(size=(nx, npar))
    c = 0.1 * rng.normal(size=nx)
    C = rng.normal(size=(ny, nx))
    y = rng.normal(size=(T + 1, ny))
    Wy = rng.uniform(0.5, 3.0, size=(T + 1, ny))
    if sparse_meas:
        Wy[rng.uniform(size=Wy.shape) < 0.3] = 0.0
    Wu = rng.uniform(0.5, 2.0, nu)
    x0p = rng.normal(size=nx)
    W0 = rng.uniform(0.5, 2.0, nx)
    pp = rng.normal(size=npar)
    Wp = rng.uniform(0.5, 2.0, npar)
    from contactfie.estimator import LeastSquaresOCP, LinearDynamics   # only to package the instance
    ocp = LeastSquaresOCP(LinearDynamics(A, B, P, c), y=y, Wy=Wy, Wu=Wu, x_prior=x0p, W0=W0,
                          C=C, p_prior=pp, Wp=Wp)
    ref = batch_least_squares(A, B, P, c, C, y, Wy, Wu, x0p, W0, pp, Wp)
    return ocp, ref
