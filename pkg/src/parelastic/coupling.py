"""Elastic coupling energy models and their generalized forces.

Four families are supported:

* ``linear``       -- U = 1/2 k (q_i - q_j)^2 between two generalized coordinates.
* ``distance``     -- U = k * integral_0^1 ||p_1(q,s) - p_2(q,s)||^2 ds between
                      two links ("segments"), with p_i the point at arc
                      fraction s along segment i.
* ``rejection``    -- U = k * integral_0^1 ||r_1||^2 + ||r_2||^2 ds, where r_i
                      is the vector rejection of p_i from the other segment's
                      point (both measured from the world origin).
* ``neo_hookean``  -- U = k (lambda^2 + lambda^-2 - 2) for a simple-shear
                      stretch lambda mapped from the coordinate difference
                      gamma = q_i - q_j via lambda = (gamma + sqrt(gamma^2 + 4))/2.

Units of k differ per family: N*m/rad^2 for the coordinate-difference models,
N/m (energy per squared meter of integrated mismatch) for the integral models.
Forces are exact gradients F = dU/dq and enter the dynamics on the left-hand
side, so they act as restoring forces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError
from .kinematics import jacobians_along, points_along

FAMILIES = ("linear", "distance", "rejection", "neo_hookean")

#: families whose energy depends on a pair of generalized coordinates
COORDINATE_FAMILIES = ("linear", "neo_hookean")
#: families whose energy integrates a mismatch between two segments
SEGMENT_FAMILIES = ("distance", "rejection")

_REJECTION_EPS = 1e-9


@dataclass(frozen=True)
class CouplingSpec:
    """One elastic coupling between two coordinates or two segments.

    ``coordinate_pair`` holds global coordinate indices (linear, neo_hookean);
    ``segment_pair`` holds two (chain, link) references (distance, rejection).
    """

    family: str
    k: float
    coordinate_pair: tuple[int, int] | None = None
    segment_pair: tuple[tuple[int, int], tuple[int, int]] | None = None
    quadrature_points: int = 20

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown coupling family {self.family!r}")
        if self.k < 0:
            raise ValueError(f"stiffness k must be >= 0, got {self.k}")
        if self.family in COORDINATE_FAMILIES:
            if self.coordinate_pair is None:
                raise ValueError(f"{self.family} coupling requires coordinate_pair")
            i, j = self.coordinate_pair
            if i == j:
                raise ValueError("coupled coordinates must be distinct")
        else:
            if self.segment_pair is None:
                raise ValueError(f"{self.family} coupling requires segment_pair")
            if self.segment_pair[0] == self.segment_pair[1]:
                raise ValueError("coupled segments must be distinct")
            if self.quadrature_points < 1:
                raise ValueError("quadrature_points must be positive")


def _quadrature(spec):
    # Gauss-Legendre on [0, 1]; interior nodes, so s = 0 is never sampled.
    x, w = np.polynomial.legendre.leggauss(spec.quadrature_points)
    return 0.5 * (x + 1.0), 0.5 * w


def _segment_points(spec, model, q):
    (c1, l1), (c2, l2) = spec.segment_pair
    s, w = _quadrature(spec)
    p1 = points_along(model, q, c1, l1, s)
    p2 = points_along(model, q, c2, l2, s)
    return s, w, p1, p2


def _segment_jacobians(spec, model, q):
    (c1, l1), (c2, l2) = spec.segment_pair
    s, _ = _quadrature(spec)
    J1 = jacobians_along(model, q, c1, l1, s)
    J2 = jacobians_along(model, q, c2, l2, s)
    return J1, J2


def _shear_stretch(gamma):
    return 0.5 * (gamma + np.sqrt(gamma * gamma + 4.0))


def coupling_energy(spec, model, q):
    """Elastic energy of one coupling (joules); zero at the relaxed relation."""
    q = np.asarray(q, dtype=float)
    if spec.family == "linear":
        i, j = spec.coordinate_pair
        d = q[i] - q[j]
        return 0.5 * spec.k * d * d
    if spec.family == "neo_hookean":
        i, j = spec.coordinate_pair
        lam = _shear_stretch(q[i] - q[j])
        return spec.k * (lam * lam + lam ** (-2) - 2.0)
    _, w, p1, p2 = _segment_points(spec, model, q)
    if spec.family == "distance":
        d = p1 - p2
        return spec.k * float(w @ np.einsum("sd,sd->s", d, d))
    # rejection
    return spec.k * float(w @ _rejection_density(p1, p2))


def _rejection_density(p1, p2):
    b1 = np.einsum("sd,sd->s", p1, p1)
    b2 = np.einsum("sd,sd->s", p2, p2)
    if np.any(b1 < _REJECTION_EPS**2) or np.any(b2 < _REJECTION_EPS**2):
        raise DegenerateGeometryError(
            "rejection coupling sampled a point at the base origin"
        )
    a = np.einsum("sd,sd->s", p1, p2)
    r1 = p1 - (a / b2)[:, None] * p2
    r2 = p2 - (a / b1)[:, None] * p1
    return np.einsum("sd,sd->s", r1, r1) + np.einsum("sd,sd->s", r2, r2)


def coupling_force(spec, model, q):
    """Generalized force F = dU/dq of one coupling, as an n-vector."""
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    if spec.family == "linear":
        i, j = spec.coordinate_pair
        f = np.zeros(n)
        d = spec.k * (q[i] - q[j])
        f[i] = d
        f[j] = -d
        return f
    if spec.family == "neo_hookean":
        i, j = spec.coordinate_pair
        gamma = q[i] - q[j]
        lam = _shear_stretch(gamma)
        # dU/dgamma = dU/dlam * dlam/dgamma, with dlam/dgamma = lam / sqrt(g^2+4)
        du_dlam = 2.0 * spec.k * (lam - lam ** (-3))
        dlam_dgamma = 0.5 * (1.0 + gamma / np.sqrt(gamma * gamma + 4.0))
        d = du_dlam * dlam_dgamma
        f = np.zeros(n)
        f[i] = d
        f[j] = -d
        return f
    _, w, p1, p2 = _segment_points(spec, model, q)
    J1, J2 = _segment_jacobians(spec, model, q)
    if spec.family == "distance":
        d = p1 - p2
        dJ = J1 - J2
        return spec.k * 2.0 * np.einsum("s,sd,sdn->n", w, d, dJ)
    return spec.k * _rejection_gradient(w, p1, p2, J1, J2)


def _rejection_gradient(w, p1, p2, J1, J2):
    b1 = np.einsum("sd,sd->s", p1, p1)
    b2 = np.einsum("sd,sd->s", p2, p2)
    if np.any(b1 < _REJECTION_EPS**2) or np.any(b2 < _REJECTION_EPS**2):
        raise DegenerateGeometryError(
            "rejection coupling sampled a point at the base origin"
        )
    a = np.einsum("sd,sd->s", p1, p2)
    da = np.einsum("sd,sdn->sn", p2, J1) + np.einsum("sd,sdn->sn", p1, J2)
    db1 = 2.0 * np.einsum("sd,sdn->sn", p1, J1)
    db2 = 2.0 * np.einsum("sd,sdn->sn", p2, J2)

    grad = np.zeros(J1.shape[2])
    for (pa, pb, Ja, Jb, bb, dbb) in (
        (p1, p2, J1, J2, b2, db2),
        (p2, p1, J2, J1, b1, db1),
    ):
        c = a / bb
        r = pa - c[:, None] * pb
        dc = (da * bb[:, None] - a[:, None] * dbb) / (bb * bb)[:, None]
        dr = Ja - c[:, None, None] * Jb - np.einsum("sd,sn->sdn", pb, dc)
        grad += 2.0 * np.einsum("s,sd,sdn->n", w, r, dr)
    return grad


def coupling_stiffness(spec, model, q):
    """Symmetric n x n Jacobian dF/dq of :func:`coupling_force`.

    Exact for the coordinate families (their energies are quadratic in the
    coordinate difference under the shear-stretch mapping); for the integral
    families it is a symmetrized central difference of the analytic force.
    """
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    if spec.family in COORDINATE_FAMILIES:
        i, j = spec.coordinate_pair
        kk = spec.k if spec.family == "linear" else 2.0 * spec.k
        K = np.zeros((n, n))
        K[i, i] = K[j, j] = kk
        K[i, j] = K[j, i] = -kk
        return K
    h = 1e-6
    K = np.empty((n, n))
    for idx in range(n):
        qp = q.copy()
        qm = q.copy()
        qp[idx] += h
        qm[idx] -= h
        K[:, idx] = (coupling_force(spec, model, qp) - coupling_force(spec, model, qm)) / (2 * h)
    return 0.5 * (K + K.T)


@dataclass(frozen=True)
class ElasticAssembly:
    """Total elastic force, tangent stiffness, and their actuated/unactuated blocks."""

    force: np.ndarray
    stiffness: np.ndarray
    force_a: np.ndarray
    force_u: np.ndarray
    K_aa: np.ndarray
    K_au: np.ndarray
    K_ua: np.ndarray
    K_uu: np.ndarray
    energy: float = field(default=0.0)


def total_elastic_energy(model, q):
    """Decoupled joint springs plus every coupling, as one scalar."""
    q = np.asarray(q, dtype=float)
    u = 0.5 * float(q @ (model.joint_stiffness * q))
    for spec in model.couplings:
        u += coupling_energy(spec, model, q)
    return u


def total_elastic_force(model, q):
    """Total generalized elastic force F_K(q) (decoupled springs + couplings)."""
    q = np.asarray(q, dtype=float)
    K = model.constant_stiffness
    if K is not None:
        return K @ q
    f = model.joint_stiffness * q
    for spec in model.couplings:
        f = f + coupling_force(spec, model, q)
    return f


def assemble_total_elastic(model, q):
    """Assemble F_K and the tangent stiffness K with partitioned blocks."""
    q = np.asarray(q, dtype=float)
    K = model.constant_stiffness
    if K is not None:
        f = K @ q
    else:
        f = model.joint_stiffness * q
        K = np.diag(model.joint_stiffness)
        for spec in model.couplings:
            f = f + coupling_force(spec, model, q)
            K = K + coupling_stiffness(spec, model, q)
    a = list(model.actuated_indices)
    u = list(model.unactuated_indices)
    return ElasticAssembly(
        force=f,
        stiffness=K,
        force_a=f[a],
        force_u=f[u],
        K_aa=K[np.ix_(a, a)],
        K_au=K[np.ix_(a, u)],
        K_ua=K[np.ix_(u, a)],
        K_uu=K[np.ix_(u, u)],
        energy=total_elastic_energy(model, q),
    )
