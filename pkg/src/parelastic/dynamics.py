"""Underactuated rigid-chain dynamics with parallel elastic coupling.

Equations of motion::

    M(q) qdd + C(q, qd) qd + G(q) + F_K(q) + D qd = A tau + w_ext

with q partitioned into actuated and unactuated coordinates. The Coriolis
matrix is built from the Christoffel symbols of M, so Mdot - 2C is
skew-symmetric. Time integration is classical fixed-step RK4.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import coupling as cpl
from ._fastpath import chain_gravity, chain_terms
from .errors import DivergenceError, IllConditionedError
from .kinematics import LinkGeometry

CONDITION_LIMIT = 1e12


@dataclass(eq=False)
class RobotModel:
    """Planar robot made of one or more serial chains from fixed anchors.

    Coordinates are the relative joint angles of all chains concatenated in
    chain order. ``joint_stiffness`` and ``joint_damping`` may be scalars
    (broadcast to every joint) or per-joint arrays.
    """

    chains: tuple
    actuated_indices: tuple
    joint_stiffness: np.ndarray = 0.0
    joint_damping: np.ndarray = 0.0
    couplings: tuple = ()
    gravity: np.ndarray = (0.0, -9.81)
    chain_anchors: tuple | None = None
    actuation: np.ndarray | None = None

    def __post_init__(self):
        self.chains = tuple(tuple(c) for c in self.chains)
        n = self.n
        self.actuated_indices = tuple(int(i) for i in self.actuated_indices)
        self.joint_stiffness = np.broadcast_to(
            np.asarray(self.joint_stiffness, dtype=float), (n,)
        ).copy()
        self.joint_damping = np.broadcast_to(
            np.asarray(self.joint_damping, dtype=float), (n,)
        ).copy()
        self.couplings = tuple(self.couplings)
        self.gravity = np.asarray(self.gravity, dtype=float)
        if self.chain_anchors is None:
            self.chain_anchors = tuple(np.zeros(2) for _ in self.chains)
        else:
            self.chain_anchors = tuple(
                np.asarray(a, dtype=float) for a in self.chain_anchors
            )
        if len(self.chain_anchors) != len(self.chains):
            raise ValueError("one anchor required per chain")
        m = len(self.actuated_indices)
        if not 1 <= m <= n:
            raise ValueError(f"need 1 <= m <= n actuated coordinates, got m={m}, n={n}")
        if len(set(self.actuated_indices)) != m or not all(
            0 <= i < n for i in self.actuated_indices
        ):
            raise ValueError("actuated_indices must be distinct and in range")
        if np.any(self.joint_stiffness < 0):
            raise ValueError("joint_stiffness must be >= 0")
        # D must be positive definite for the stability results; zero damping
        # is allowed here so conservative systems can be simulated, and the
        # control certificates check positivity themselves.
        if np.any(self.joint_damping < 0):
            raise ValueError("joint_damping must be >= 0")
        if self.actuation is not None:
            self.actuation = np.asarray(self.actuation, dtype=float)
            if self.actuation.shape != (n, m):
                raise ValueError(f"actuation map must be {n}x{m}")
            if np.linalg.matrix_rank(self.actuation) < m:
                raise ValueError("actuation map must have full column rank")

    @cached_property
    def n(self) -> int:
        return sum(len(c) for c in self.chains)

    @property
    def m(self) -> int:
        return len(self.actuated_indices)

    @cached_property
    def unactuated_indices(self) -> tuple:
        act = set(self.actuated_indices)
        return tuple(i for i in range(self.n) if i not in act)

    @cached_property
    def chain_slices(self) -> tuple:
        slices = []
        off = 0
        for c in self.chains:
            slices.append(slice(off, off + len(c)))
            off += len(c)
        return tuple(slices)

    @cached_property
    def A(self) -> np.ndarray:
        if self.actuation is not None:
            return self.actuation
        A = np.zeros((self.n, self.m))
        for col, idx in enumerate(self.actuated_indices):
            A[idx, col] = 1.0
        return A

    @cached_property
    def _chain_arrays(self) -> tuple:
        out = []
        for c, anchor in zip(self.chains, self.chain_anchors):
            out.append(
                (
                    np.array([lk.length for lk in c]),
                    np.array([lk.mass for lk in c]),
                    np.array([lk.com_offset for lk in c]),
                    np.array([lk.inertia_about_com for lk in c]),
                    anchor,
                )
            )
        return tuple(out)

    @cached_property
    def constant_stiffness(self) -> np.ndarray | None:
        """Assembled constant K when every coupling is linear, else None."""
        if any(s.family != "linear" for s in self.couplings):
            return None
        K = np.diag(self.joint_stiffness).copy()
        for s in self.couplings:
            i, j = s.coordinate_pair
            K[i, i] += s.k
            K[j, j] += s.k
            K[i, j] -= s.k
            K[j, i] -= s.k
        return K

    def coordinate_of(self, chain: int, link: int) -> int:
        return self.chain_slices[chain].start + link

    def link_of(self, coordinate: int) -> tuple[int, int]:
        for c, sl in enumerate(self.chain_slices):
            if sl.start <= coordinate < sl.stop:
                return c, coordinate - sl.start
        raise ValueError(f"coordinate {coordinate} out of range")


@dataclass
class State:
    """Configuration, velocity and time."""

    q: np.ndarray
    q_dot: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.q_dot = np.asarray(self.q_dot, dtype=float)
        if self.q.shape != self.q_dot.shape:
            raise ValueError("q and q_dot must have the same dimension")


def _terms(model, q, qd):
    """Global (M, dM, G, Ug, cvec); chains are only coupled elastically."""
    n = model.n
    if len(model.chains) == 1:
        l, m, a, i, anchor = model._chain_arrays[0]
        return chain_terms(l, m, a, i, anchor, model.gravity, q, qd)
    M = np.zeros((n, n))
    dM = np.zeros((n, n, n))
    G = np.zeros(n)
    cvec = np.zeros(n)
    Ug = 0.0
    for (l, m, a, i, anchor), sl in zip(model._chain_arrays, model.chain_slices):
        Mc, dMc, Gc, Ugc, cc = chain_terms(
            l, m, a, i, anchor, model.gravity, q[sl], qd[sl]
        )
        M[sl, sl] = Mc
        dM[sl, sl, sl] = dMc
        G[sl] = Gc
        cvec[sl] = cc
        Ug += Ugc
    return M, dM, G, Ug, cvec


def mass_matrix(model, q):
    """Symmetric positive-definite inertia matrix M(q)."""
    q = np.asarray(q, dtype=float)
    return _terms(model, q, np.zeros_like(q))[0]


def mass_matrix_gradient(model, q):
    """(n, n, n) tensor dM[i, j, l] = dM_ij/dq_l, exact."""
    q = np.asarray(q, dtype=float)
    return _terms(model, q, np.zeros_like(q))[1]


def coriolis_matrix(model, q, q_dot):
    """Christoffel-symbol Coriolis matrix; Mdot - 2C is skew-symmetric."""
    q = np.asarray(q, dtype=float)
    q_dot = np.asarray(q_dot, dtype=float)
    dM = _terms(model, q, q_dot)[1]
    # C_ij = 1/2 sum_k (dM_ij/dq_k + dM_ik/dq_j - dM_jk/dq_i) qd_k
    return 0.5 * (
        np.einsum("ijk,k->ij", dM, q_dot)
        + np.einsum("ikj,k->ij", dM, q_dot)
        - np.einsum("jki,k->ij", dM, q_dot)
    )


def _gravity_terms(model, q):
    n = model.n
    if len(model.chains) == 1:
        l, m, a, _, anchor = model._chain_arrays[0]
        return chain_gravity(l, m, a, anchor, model.gravity, q)
    G = np.zeros(n)
    Ug = 0.0
    for (l, m, a, _, anchor), sl in zip(model._chain_arrays, model.chain_slices):
        Gc, Ugc = chain_gravity(l, m, a, anchor, model.gravity, q[sl])
        G[sl] = Gc
        Ug += Ugc
    return G, Ug


def gravity_vector(model, q):
    """G(q) = dU_G/dq."""
    return _gravity_terms(model, np.asarray(q, dtype=float))[0]


def gravity_potential(model, q):
    """Gravitational potential energy, zero when all COM heights are zero."""
    return _gravity_terms(model, np.asarray(q, dtype=float))[1]


def _accel(model, q, qd, tau, ext=None):
    M, _, G, _, cvec = _terms(model, q, qd)
    rhs = model.A @ tau - cvec - G - cpl.total_elastic_force(model, q)
    rhs -= model.joint_damping * qd
    if ext is not None:
        rhs = rhs + ext
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError("inertia matrix is not positive definite") from exc
    y = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, y)


def forward_dynamics(model, state, tau, external_torque=None):
    """Acceleration qdd = M^-1 (A tau - C qd - G - F_K - D qd + w_ext)."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if tau.shape != (model.m,):
        raise ValueError(f"tau must have dimension {model.m}")
    M = mass_matrix(model, state.q)
    if np.linalg.cond(M) > CONDITION_LIMIT:
        raise IllConditionedError(
            f"inertia matrix condition number exceeds {CONDITION_LIMIT:g}"
        )
    return _accel(model, state.q, state.q_dot, tau, external_torque)


@dataclass
class TrajectoryLog:
    """Per-step record of a single simulation run."""

    t: np.ndarray
    q: np.ndarray
    q_dot: np.ndarray
    tau: np.ndarray
    e_kin: np.ndarray
    e_elastic: np.ndarray
    e_grav: np.ndarray
    v_lyap: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.t) - 1

    @classmethod
    def empty(cls, n: int, m: int):
        return cls(
            t=np.zeros(0),
            q=np.zeros((0, n)),
            q_dot=np.zeros((0, n)),
            tau=np.zeros((0, m)),
            e_kin=np.zeros(0),
            e_elastic=np.zeros(0),
            e_grav=np.zeros(0),
            v_lyap=np.zeros(0),
        )


def step(model, state, tau_provider, dt, n_steps, external_torque=None, lyapunov=None):
    """Integrate the closed-loop dynamics with classical RK4.

    ``tau_provider(state) -> tau`` is re-evaluated at every RK4 stage. If the
    provider has a ``post_step(state, dt)`` method it is called once per
    accepted step (controller-internal integrators). ``external_torque(state)``
    adds a generalized n-vector (disturbances, contact). ``lyapunov(state, M)``
    fills the log's Lyapunov column.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    n, m = model.n, model.m
    N = int(n_steps)
    log = TrajectoryLog(
        t=np.zeros(N + 1),
        q=np.zeros((N + 1, n)),
        q_dot=np.zeros((N + 1, n)),
        tau=np.zeros((N + 1, m)),
        e_kin=np.zeros(N + 1),
        e_elastic=np.zeros(N + 1),
        e_grav=np.zeros(N + 1),
        v_lyap=np.zeros(N + 1),
    )
    q = np.array(state.q, dtype=float)
    qd = np.array(state.q_dot, dtype=float)
    t = float(state.t)
    post_step = getattr(tau_provider, "post_step", None)

    def eval_rhs(qi, qdi, ti):
        s = State(qi, qdi, ti)
        tau = np.atleast_1d(np.asarray(tau_provider(s), dtype=float))
        ext = external_torque(s) if external_torque is not None else None
        return tau, _accel(model, qi, qdi, tau, ext)

    def record(i, qi, qdi, ti, tau):
        M, _, _, Ug, _ = _terms(model, qi, qdi)
        log.t[i] = ti
        log.q[i] = qi
        log.q_dot[i] = qdi
        log.tau[i] = tau
        log.e_kin[i] = 0.5 * qdi @ (M @ qdi)
        log.e_elastic[i] = cpl.total_elastic_energy(model, qi)
        log.e_grav[i] = Ug
        if lyapunov is not None:
            log.v_lyap[i] = lyapunov(State(qi, qdi, ti), M)

    for i in range(N):
        tau1, k1 = eval_rhs(q, qd, t)
        record(i, q, qd, t, tau1)
        h = dt
        tau2, k2 = eval_rhs(q + 0.5 * h * qd, qd + 0.5 * h * k1, t + 0.5 * h)
        qd2 = qd + 0.5 * h * k1
        tau3, k3 = eval_rhs(q + 0.5 * h * qd2, qd + 0.5 * h * k2, t + 0.5 * h)
        qd3 = qd + 0.5 * h * k2
        tau4, k4 = eval_rhs(q + h * qd3, qd + h * k3, t + h)
        q = q + (h / 6.0) * (qd + 2 * qd2 + 2 * qd3 + (qd + h * k3))
        qd = qd + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise DivergenceError(i + 1)
        if post_step is not None:
            post_step(State(q, qd, t), dt)
    tauN, _ = eval_rhs(q, qd, t)
    record(N, q, qd, t, tauN)
    return log


@dataclass(frozen=True)
class SystemBounds:
    """Sampled bounds of the system properties over a configuration box."""

    gamma_C: float
    lambda_min_M: float
    lambda_max_M: float
    gamma_UG: float
    gamma_G: float
    gamma_dG: float
    sample_grid: str


def estimate_bounds(model, region_lo, region_hi, grid_density=7, safety=0.1):
    """Grid-sample M, C coefficients, G, dG/dq, U_G over a configuration box.

    Maxima are inflated by ``safety``; lambda_min(M) is deflated by the same
    factor. The Coriolis bound uses sqrt(sum_k ||C(q, e_k)||^2), which
    dominates ||C(q, qd)|| / ||qd|| by Cauchy-Schwarz.
    """
    lo = np.broadcast_to(np.asarray(region_lo, dtype=float), (model.n,))
    hi = np.broadcast_to(np.asarray(region_hi, dtype=float), (model.n,))
    if np.any(hi < lo):
        raise ValueError("region upper bounds must be >= lower bounds")
    axes = [np.linspace(lo[i], hi[i], grid_density) for i in range(model.n)]
    h = 1e-6
    lam_min = np.inf
    lam_max = 0.0
    g_C = g_UG = g_G = g_dG = 0.0
    zeros = np.zeros(model.n)
    for point in itertools.product(*axes):
        q = np.array(point)
        M, dM, G, Ug, _ = _terms(model, q, zeros)
        ev = np.linalg.eigvalsh(M)
        lam_min = min(lam_min, ev[0])
        lam_max = max(lam_max, ev[-1])
        g_UG = max(g_UG, abs(Ug))
        g_G = max(g_G, np.linalg.norm(G))
        # gravity Hessian by central differences of G
        H = np.empty((model.n, model.n))
        for i in range(model.n):
            qp = q.copy()
            qm = q.copy()
            qp[i] += h
            qm[i] -= h
            H[:, i] = (gravity_vector(model, qp) - gravity_vector(model, qm)) / (2 * h)
        g_dG = max(g_dG, np.linalg.norm(H, 2))
        gamma = 0.5 * (dM + dM.transpose(0, 2, 1) - dM.transpose(2, 1, 0))
        g_C = max(
            g_C,
            np.sqrt(
                sum(
                    np.linalg.norm(gamma[:, :, k], 2) ** 2 for k in range(model.n)
                )
            ),
        )
    f = 1.0 + safety
    return SystemBounds(
        gamma_C=g_C * f,
        lambda_min_M=lam_min / f,
        lambda_max_M=lam_max * f,
        gamma_UG=g_UG * f,
        gamma_G=g_G * f,
        gamma_dG=g_dG * f,
        sample_grid=f"box {lo.tolist()}..{hi.tolist()}, {grid_density} points/axis",
    )


def uniform_rod_chain(lengths, masses):
    """Convenience: chain of uniform thin rods with COM at mid-length."""
    return tuple(LinkGeometry(length=l, mass=m) for l, m in zip(lengths, masses))
