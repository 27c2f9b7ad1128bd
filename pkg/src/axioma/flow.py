"""Flow integration on the torus and its cotangent lifts.

Fixed-step RK4 throughout (default step 1e-3), batched over points: every
routine accepts (m, n) arrays and loops only over time steps, never over
points. The covector lift integrates eta' = -DV(x)^T eta alongside the base
point instead of inverting an accumulated Jacobian, and the tangent lift
integrates v' = DV(x) v; the pairing <eta, v> is then conserved exactly by
the continuous system, which the tests use as an integration-quality check.
"""

import numpy as np

from .errors import NumericalDegeneracy
from .fields import evaluate_field, field_values

DEFAULT_STEP = 1e-3
FIBER_FLOOR = 1e-280


def _wrap(x):
    return np.mod(x, 1.0)


def integrate_flow(spec, x, t, step=DEFAULT_STEP):
    """phi^t(x) on T^n, batched. Negative t integrates the reversed field."""
    if t == 0:
        return _wrap(np.asarray(x, dtype=float).copy())
    single = np.asarray(x).ndim == 1
    pts = np.atleast_2d(np.asarray(x, dtype=float)).copy()
    h = step if t > 0 else -step
    nsteps = int(round(abs(t) / step))
    rem = abs(t) - nsteps * step
    for _ in range(nsteps):
        pts = _rk4_step(spec, pts, h)
    if rem > 1e-15:
        pts = _rk4_step(spec, pts, rem if t > 0 else -rem)
    pts = _wrap(pts)
    return pts[0] if single else pts


def _rk4_step(spec, pts, h):
    k1 = field_values(spec, pts)
    k2 = field_values(spec, _wrap(pts + 0.5 * h * k1))
    k3 = field_values(spec, _wrap(pts + 0.5 * h * k2))
    k4 = field_values(spec, _wrap(pts + h * k3))
    return pts + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _lift_rhs(spec, state, sign_eta=True, with_tangent=False):
    """RHS of the joint system (x, eta[, v]).

    state: (m, n + n [+ n]). eta' = -DV^T eta, v' = DV v.
    """
    n = spec.dim
    x, eta = state[:, :n], state[:, n:2 * n]
    vals, jac = evaluate_field(spec, x)
    deta = -np.einsum("mji,mj->mi", jac, eta)
    parts = [vals, deta]
    if with_tangent:
        v = state[:, 2 * n:3 * n]
        parts.append(np.einsum("mij,mj->mi", jac, v))
    return np.concatenate(parts, axis=1)


def _rk4_lift_step(spec, state, h, with_tangent):
    n = spec.dim

    def wrapped(s):
        s = s.copy()
        s[:, :n] = _wrap(s[:, :n])
        return s

    k1 = _lift_rhs(spec, wrapped(state), with_tangent=with_tangent)
    k2 = _lift_rhs(spec, wrapped(state + 0.5 * h * k1), with_tangent=with_tangent)
    k3 = _lift_rhs(spec, wrapped(state + 0.5 * h * k2), with_tangent=with_tangent)
    k4 = _lift_rhs(spec, wrapped(state + h * k3), with_tangent=with_tangent)
    return state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def cotangent_lift(spec, x, xi, t, step=DEFAULT_STEP, tangent=None):
    """Phi^t(x, xi) = (phi^t x, (D phi^t)^-T xi), batched.

    Optionally transports tangent vectors v by D phi^t in the same pass
    (returned third). Raises on fiber underflow.
    """
    x_arr = np.atleast_2d(np.asarray(x, dtype=float))
    xi_arr = np.atleast_2d(np.asarray(xi, dtype=float))
    single = np.asarray(x).ndim == 1
    with_tangent = tangent is not None
    parts = [x_arr.copy(), xi_arr.copy()]
    if with_tangent:
        parts.append(np.atleast_2d(np.asarray(tangent, dtype=float)).copy())
    state = np.concatenate(parts, axis=1)
    if t != 0:
        h = step if t > 0 else -step
        nsteps = int(round(abs(t) / step))
        rem = abs(t) - nsteps * step
        for _ in range(nsteps):
            state = _rk4_lift_step(spec, state, h, with_tangent)
        if rem > 1e-15:
            state = _rk4_lift_step(spec, state, rem if t > 0 else -rem, with_tangent)
    n = spec.dim
    xo = _wrap(state[:, :n])
    eo = state[:, n:2 * n]
    if np.any(np.linalg.norm(eo, axis=1) < FIBER_FLOOR):
        raise NumericalDegeneracy("covector norm underflow during lift")
    out = (xo[0], eo[0]) if single else (xo, eo)
    if with_tangent:
        vo = state[:, 2 * n:3 * n]
        out = out + ((vo[0] if single else vo),)
    return out


def unit_lift(spec, x, xi, t, step=DEFAULT_STEP):
    """Lift on S*M: cotangent lift followed by fiber normalization."""
    xo, eo = cotangent_lift(spec, x, xi, t, step=step)
    nrm = np.linalg.norm(np.atleast_2d(eo), axis=1)
    if np.asarray(x).ndim == 1:
        return xo, eo / nrm[0]
    return xo, eo / nrm[:, None]


def trajectory(spec, x, t_total, step=DEFAULT_STEP, stride=1):
    """Sample points along phi^t, t = 0, stride*step, ... (batched first axis).

    Returns array (nsamples, m, n); used by averaging quadratures.
    """
    pts = np.atleast_2d(np.asarray(x, dtype=float)).copy()
    h = step if t_total > 0 else -step
    nsteps = int(round(abs(t_total) / step))
    out = [np.mod(pts, 1.0)]
    for i in range(nsteps):
        pts = _rk4_step(spec, pts, h)
        if (i + 1) % stride == 0:
            out.append(_wrap(pts))
    return np.stack(out, axis=0)


def torus_distance(a, b):
    """Flat quotient metric, batched over leading axes."""
    d = np.abs(np.asarray(a) - np.asarray(b))
    d = np.minimum(d, 1.0 - d)
    return np.linalg.norm(d, axis=-1)
