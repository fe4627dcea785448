"""Regulators, equilibrium solving, gain certification, and force control.

The collocated regulator cancels gravity online and compensates the elastic
pull of the coupling either at the reference (feedforward), at the measured
unactuated state (feedback), or not at all (naive PD baseline). The gain
certificate evaluates the Sylvester conditions of the closed-loop Lyapunov
argument for the linear coupling family.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import coupling as cpl
from . import dynamics as dyn
from .dynamics import State
from .errors import (
    DegenerateGeometryError,
    EquilibriumSolveError,
    IllConditionedError,
    UnsupportedFamilyError,
)


def _as_spd_gain(value, m, name):
    value = np.asarray(value, dtype=float)
    if value.ndim == 0:
        value = float(value) * np.eye(m)
    if value.shape != (m, m):
        raise ValueError(f"{name} must be a scalar or {m}x{m} matrix")
    if not np.allclose(value, value.T):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(value)[0] <= 0:
        raise ValueError(f"{name} must be positive definite")
    return value


@dataclass
class RegulatorConfig:
    """Gains, reference and compensation mode for the collocated regulator."""

    k_p: np.ndarray
    k_d: np.ndarray
    q_bar_a: np.ndarray
    q_bar_u: np.ndarray | None = None
    compensation: str = "feedforward"

    def __post_init__(self):
        self.q_bar_a = np.atleast_1d(np.asarray(self.q_bar_a, dtype=float))
        m = self.q_bar_a.shape[0]
        self.k_p = _as_spd_gain(self.k_p, m, "k_p")
        self.k_d = _as_spd_gain(self.k_d, m, "k_d")
        if self.q_bar_u is not None:
            self.q_bar_u = np.atleast_1d(np.asarray(self.q_bar_u, dtype=float))
        if self.compensation not in ("feedforward", "feedback", "none"):
            raise ValueError(f"unknown compensation mode {self.compensation!r}")


def elastic_force_at(model, q_a, q_u):
    """F_K evaluated at a mixed configuration (reference/measured)."""
    q = np.empty(model.n)
    q[list(model.actuated_indices)] = q_a
    q[list(model.unactuated_indices)] = q_u
    return cpl.total_elastic_force(model, q)


def regulate(config, model, state, reference=None):
    """Collocated regulator torque.

    Feedforward adds the elastic force at (q_bar_a, q_bar_u); feedback
    replaces q_bar_u by the measured q_u(t); ``none`` is the naive PD with
    gravity cancellation only. ``reference`` optionally overrides
    config.q_bar_a (time-varying replay).
    """
    a = list(model.actuated_indices)
    u = list(model.unactuated_indices)
    q_bar_a = config.q_bar_a if reference is None else np.asarray(reference, float)
    e_a = q_bar_a - state.q[a]
    G = dyn.gravity_vector(model, state.q)
    tau = G[a] - config.k_d @ state.q_dot[a] + config.k_p @ e_a
    if config.compensation == "feedforward":
        if config.q_bar_u is None:
            raise ValueError("feedforward compensation requires q_bar_u")
        tau = tau + elastic_force_at(model, q_bar_a, config.q_bar_u)[a]
    elif config.compensation == "feedback":
        tau = tau + elastic_force_at(model, q_bar_a, state.q[u])[a]
    return tau


class Regulator:
    """Callable torque provider wrapping :func:`regulate`.

    ``reference_fn(t) -> q_bar_a`` enables trajectory replay; the stability
    claims only cover constant references.
    """

    def __init__(self, config, model, reference_fn=None):
        self.config = config
        self.model = model
        self.reference_fn = reference_fn

    def __call__(self, state):
        ref = self.reference_fn(state.t) if self.reference_fn is not None else None
        return regulate(self.config, self.model, state, reference=ref)


def equilibrium_solve(model, q_bar_a, initial_guess=None, tol=1e-10, max_iter=100):
    """Unactuated rest configuration for clamped q_a = q_bar_a.

    Newton iteration with step halving on the residual
    F_K,u(q_bar_a, q_u) + G_u(q_bar_a, q_u) = 0; for linear elasticity this is
    K_ua q_bar_a + K_uu q_u + G_u = 0.
    """
    a = list(model.actuated_indices)
    u = list(model.unactuated_indices)
    q_bar_a = np.atleast_1d(np.asarray(q_bar_a, dtype=float))
    q_u = (
        np.zeros(len(u))
        if initial_guess is None
        else np.atleast_1d(np.asarray(initial_guess, dtype=float)).copy()
    )

    def residual(q_u):
        q = np.empty(model.n)
        q[a] = q_bar_a
        q[u] = q_u
        asm = cpl.assemble_total_elastic(model, q)
        return asm.force_u + dyn.gravity_vector(model, q)[u], asm.K_uu, q

    r, K_uu, q = residual(q_u)
    h = 1e-6
    for _ in range(max_iter):
        norm = np.linalg.norm(r)
        if norm < tol:
            return q_u
        # Jacobian K_uu + dG_u/dq_u (gravity part by central differences)
        J = K_uu.copy()
        for col in range(len(u)):
            qp = q.copy()
            qm = q.copy()
            qp[u[col]] += h
            qm[u[col]] -= h
            J[:, col] += (
                dyn.gravity_vector(model, qp)[u] - dyn.gravity_vector(model, qm)[u]
            ) / (2 * h)
        try:
            delta = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise IllConditionedError("singular equilibrium Jacobian") from exc
        # step halving
        alpha = 1.0
        for _ in range(60):
            r_new, K_uu_new, q_new = residual(q_u + alpha * delta)
            if np.linalg.norm(r_new) < norm:
                break
            alpha *= 0.5
        q_u = q_u + alpha * delta
        r, K_uu, q = r_new, K_uu_new, q_new
    if np.linalg.norm(r) < tol:
        return q_u
    raise EquilibriumSolveError(float(np.linalg.norm(r)), max_iter)


@dataclass(frozen=True)
class GainCertificate:
    """Constants of the closed-loop Lyapunov argument and the Q-matrix verdict."""

    bounds: dyn.SystemBounds
    alpha_G: float
    alpha_UG: float
    alpha_dG: float
    alpha_GK: float
    gamma_1: float
    lambda_min_Dhat: float
    sigma_max_Dhat_a: float
    Q: np.ndarray
    kp_lower_bound: float
    verdict: bool
    failure: str = ""


def certify_gains(model, config, region_lo=-np.pi, region_hi=np.pi, grid_density=7,
                  bounds=None):
    """Evaluate the Sylvester conditions of the closed-loop stability proof.

    Only defined for purely linear coupling (the proof uses constant elastic
    blocks). ``kp_lower_bound`` is the certified lower bound on
    lambda_min(K_P + K_aa); the verdict reflects the configured gains.
    """
    if any(s.family != "linear" for s in model.couplings):
        raise UnsupportedFamilyError(
            "gain certificate is defined for the linear coupling family only"
        )
    if np.any(model.joint_damping <= 0):
        raise ValueError("certificate requires positive joint damping")
    a = list(model.actuated_indices)
    u = list(model.unactuated_indices)
    if bounds is None:
        bounds = dyn.estimate_bounds(model, region_lo, region_hi, grid_density)
    K = model.constant_stiffness
    K_aa = K[np.ix_(a, a)]
    K_au = K[np.ix_(a, u)]

    q_bar_u = config.q_bar_u
    if q_bar_u is None:
        q_bar_u = equilibrium_solve(model, config.q_bar_a)

    D_hat = np.diag(model.joint_damping).astype(float)
    D_hat[np.ix_(a, a)] += config.k_d
    lam_min_Dhat = float(np.linalg.eigvalsh(D_hat)[0])
    sigma_max_Dhat_a = float(np.linalg.norm(D_hat[a, :], 2))

    # proof constants unified with the sampled system-property bounds
    alpha_G = bounds.gamma_G
    alpha_UG = bounds.gamma_UG
    alpha_dG = bounds.gamma_dG
    alpha_GK = (
        2.0 * alpha_G
        + alpha_dG
        + 2.0 * np.linalg.norm(K_au, 2) * np.linalg.norm(q_bar_u)
    )

    gamma_1 = 1.01 * (
        (bounds.gamma_C + 4.0 * np.sqrt(2.0) * bounds.lambda_max_M)
        / (np.sqrt(2.0) * lam_min_Dhat)
    )

    q11 = gamma_1 * lam_min_Dhat - bounds.gamma_C / np.sqrt(2.0) - 4.0 * bounds.lambda_max_M
    q12 = -(gamma_1 * alpha_GK + sigma_max_Dhat_a)
    q22 = 2.0 * float(np.linalg.eigvalsh(config.k_p + K_aa)[0])
    Q = np.array([[q11, q12], [q12, q22]])

    kp_lower_bound = (2.0 * gamma_1 * alpha_GK + sigma_max_Dhat_a) ** 2 / (2.0 * q11) \
        if q11 > 0 else np.inf

    det_Q = q11 * q22 - q12 * q12
    if q11 <= 0:
        verdict, failure = False, f"Q11 = {q11:.6g} <= 0"
    elif det_Q <= 0:
        verdict, failure = False, f"det Q = {det_Q:.6g} <= 0"
    else:
        verdict, failure = True, ""
    return GainCertificate(
        bounds=bounds,
        alpha_G=alpha_G,
        alpha_UG=alpha_UG,
        alpha_dG=alpha_dG,
        alpha_GK=float(alpha_GK),
        gamma_1=float(gamma_1),
        lambda_min_Dhat=lam_min_Dhat,
        sigma_max_Dhat_a=sigma_max_Dhat_a,
        Q=Q,
        kp_lower_bound=float(kp_lower_bound),
        verdict=verdict,
        failure=failure,
    )


def lyapunov_zero_dynamics(model, q_bar_a, state, mass=None):
    """Lyapunov value of the clamped (zero) dynamics.

    V = 1/2 qd_u^T M_uu qd_u + U_K(q) + U_G(q); non-increasing along clamped
    trajectories since Vdot = -qd_u^T D_uu qd_u.
    """
    a = list(model.actuated_indices)
    u = list(model.unactuated_indices)
    if not np.allclose(state.q[a], q_bar_a, atol=1e-9):
        raise ValueError("zero-dynamics Lyapunov requires q_a clamped at q_bar_a")
    M = mass if mass is not None else dyn.mass_matrix(model, state.q)
    qd_u = state.q_dot[u]
    kin = 0.5 * qd_u @ (M[np.ix_(u, u)] @ qd_u)
    return kin + cpl.total_elastic_energy(model, state.q) + dyn.gravity_potential(
        model, state.q
    )


def lyapunov_closed_loop(model, config, state, gamma_1, q_bar_u=None, mass=None):
    """Closed-loop Lyapunov value of the regulation proof.

    Built as gamma_1 * (kinetic energy + shaped potential) + cross term,
    where the shaped potential

        W(q) = U_K(q) + U_G(q) + 1/2 e_a' K_P e_a - tau_bar' e_a - W(q_bar)

    adds the proportional-action spring and subtracts the work of the
    constant feedforward torque tau_bar = G_a(q_bar) + F_K,a(q_bar).  W is
    stationary at the closed-loop equilibrium (q_bar_a, q_bar_u) and zero
    there, so V >= 0 locally and V -> 0 on convergent runs.  The cross term
    2 e_a' (M qd)_a / (1 + 2 e_a'e_a) is the velocity-error coupling used to
    extract a strict decrease.
    """
    a = list(model.actuated_indices)
    u = list(model.unactuated_indices)
    if q_bar_u is None:
        q_bar_u = config.q_bar_u
    if q_bar_u is None:
        raise ValueError("closed-loop Lyapunov requires q_bar_u")
    K = model.constant_stiffness
    if K is None:
        raise UnsupportedFamilyError("closed-loop Lyapunov uses the linear family")
    q_bar = np.empty(model.n)
    q_bar[a] = config.q_bar_a
    q_bar[u] = q_bar_u

    e_a = state.q[a] - config.q_bar_a
    denom = 1.0 + 2.0 * float(e_a @ e_a)
    M = mass if mass is not None else dyn.mass_matrix(model, state.q)
    qd = state.q_dot
    tau_bar = dyn.gravity_vector(model, q_bar)[a] + (K @ q_bar)[a]
    kp_spring = 0.5 * float(e_a @ (config.k_p @ e_a))
    shaped = (
        0.5 * float(state.q @ (K @ state.q))
        + dyn.gravity_potential(model, state.q)
        + kp_spring
        - float(tau_bar @ e_a)
        - 0.5 * float(q_bar @ (K @ q_bar))
        - dyn.gravity_potential(model, q_bar)
    )
    cross = 2.0 * e_a @ (M[np.ix_(a, a)] @ qd[a] + M[np.ix_(a, u)] @ qd[u]) / denom
    return gamma_1 * (0.5 * qd @ (M @ qd) + shaped) + cross


def simulate_zero_dynamics(model, q_bar_a, state0, dt, n_steps):
    """Integrate the clamped dynamics (q_a forced to q_bar_a) with RK4.

    The log carries the full configuration with q_a clamped, the holding
    torque on the actuated coordinates, and the zero-dynamics Lyapunov value.
    """
    a = list(model.actuated_indices)
    u = list(model.unactuated_indices)
    q_bar_a = np.atleast_1d(np.asarray(q_bar_a, dtype=float))
    n = model.n
    N = int(n_steps)
    log = dyn.TrajectoryLog(
        t=np.zeros(N + 1),
        q=np.zeros((N + 1, n)),
        q_dot=np.zeros((N + 1, n)),
        tau=np.zeros((N + 1, model.m)),
        e_kin=np.zeros(N + 1),
        e_elastic=np.zeros(N + 1),
        e_grav=np.zeros(N + 1),
        v_lyap=np.zeros(N + 1),
    )

    def full(q_u, qd_u):
        q = np.empty(n)
        qd = np.zeros(n)
        q[a] = q_bar_a
        q[u] = q_u
        qd[u] = qd_u
        return q, qd

    def rhs(q_u, qd_u):
        q, qd = full(q_u, qd_u)
        M, _, G, _, cvec = dyn._terms(model, q, qd)
        f = cpl.total_elastic_force(model, q)
        force_u = -cvec[u] - G[u] - f[u] - model.joint_damping[u] * qd_u
        qdd_u = np.linalg.solve(M[np.ix_(u, u)], force_u)
        # holding torque on the actuated rows (A selects actuated coordinates)
        tau = M[np.ix_(a, u)] @ qdd_u + cvec[a] + G[a] + f[a]
        return qdd_u, tau

    q_u = np.array(state0.q[u] if len(state0.q) == n else state0.q, dtype=float)
    qd_u = np.array(state0.q_dot[u] if len(state0.q_dot) == n else state0.q_dot, dtype=float)
    t = float(state0.t)

    def record(i, q_u, qd_u, t, tau):
        q, qd = full(q_u, qd_u)
        M, _, _, Ug, _ = dyn._terms(model, q, qd)
        log.t[i] = t
        log.q[i] = q
        log.q_dot[i] = qd
        log.tau[i] = tau
        log.e_kin[i] = 0.5 * qd @ (M @ qd)
        log.e_elastic[i] = cpl.total_elastic_energy(model, q)
        log.e_grav[i] = Ug
        log.v_lyap[i] = lyapunov_zero_dynamics(model, q_bar_a, State(q, qd, t), mass=M)

    for i in range(N):
        k1, tau1 = rhs(q_u, qd_u)
        record(i, q_u, qd_u, t, tau1)
        h = dt
        v2 = qd_u + 0.5 * h * k1
        k2, _ = rhs(q_u + 0.5 * h * qd_u, v2)
        v3 = qd_u + 0.5 * h * k2
        k3, _ = rhs(q_u + 0.5 * h * v2, v3)
        k4, _ = rhs(q_u + h * v3, qd_u + h * k3)
        q_u = q_u + (h / 6.0) * (qd_u + 2 * v2 + 2 * v3 + (qd_u + h * k3))
        qd_u = qd_u + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    kN, tauN = rhs(q_u, qd_u)
    record(N, q_u, qd_u, t, tauN)
    return log


def estimate_tip_force(model, q, coordinate=None):
    """Contact force at the tip of an unactuated link, from elastic deflection.

    F_hat = -F_K,u / l, the force the elastic structure transmits to the
    environment at the link tip (positive along increasing joint angle).
    """
    if coordinate is None:
        if len(model.unactuated_indices) != 1:
            raise ValueError("specify the observed coordinate explicitly")
        coordinate = model.unactuated_indices[0]
    chain, link = model.link_of(coordinate)
    arm = model.chains[chain][link].length
    if arm < 1e-12:
        raise DegenerateGeometryError("zero moment arm at the designated tip")
    f = cpl.total_elastic_force(model, np.asarray(q, dtype=float))
    return -f[coordinate] / arm


@dataclass
class ForcePidConfig:
    """Sensorless force-control PID over the coupling-based force estimate."""

    k_p: float
    k_i: float
    k_d: float
    f_desired: float
    integral_clamp: float = 10.0
    q_bar: np.ndarray | None = None
    press_direction: float = 1.0
    include_gravity: bool = False

    def __post_init__(self):
        if min(self.k_p, self.k_i, self.k_d) < 0:
            raise ValueError("PID gains must be >= 0")
        if not self.integral_clamp > 0:
            raise ValueError("integral_clamp must be > 0")
        if self.q_bar is not None:
            self.q_bar = np.asarray(self.q_bar, dtype=float)
        if self.press_direction not in (-1.0, 1.0):
            raise ValueError("press_direction must be +1 or -1")


def force_pid(config, model, state, integral, dt):
    """One force-PID evaluation; returns (tau, updated integral).

    tau = s * (K_P e_f + K_I int e_f) - K_D qd_a + F_K,a(q_bar) [+ G_a], with
    e_f = F_d - F_hat and s the pressing direction, so a force deficit
    increases the pressing torque.
    """
    a = list(model.actuated_indices)
    if len(a) != 1:
        raise ValueError("force PID drives a single actuated coordinate")
    f_hat = estimate_tip_force(model, state.q) * config.press_direction
    e_f = config.f_desired - f_hat
    integral = float(np.clip(integral + e_f * dt, -config.integral_clamp,
                             config.integral_clamp))
    tau = config.press_direction * (config.k_p * e_f + config.k_i * integral)
    tau -= config.k_d * state.q_dot[a]
    if config.q_bar is not None:
        u = list(model.unactuated_indices)
        tau += elastic_force_at(model, config.q_bar[a], config.q_bar[u])[a]
    if config.include_gravity:
        tau += dyn.gravity_vector(model, state.q)[a]
    return np.atleast_1d(tau), integral


class ForcePidController:
    """Stateful torque provider for :func:`force_pid`.

    The integral is frozen during RK4 stages and advanced once per accepted
    step via ``post_step``.
    """

    def __init__(self, config, model):
        self.config = config
        self.model = model
        self.integral = 0.0

    def __call__(self, state):
        tau, _ = force_pid(self.config, self.model, state, self.integral, 0.0)
        return tau

    def post_step(self, state, dt):
        f_hat = estimate_tip_force(self.model, state.q) * self.config.press_direction
        e_f = self.config.f_desired - f_hat
        self.integral = float(
            np.clip(
                self.integral + e_f * dt,
                -self.config.integral_clamp,
                self.config.integral_clamp,
            )
        )


@dataclass(frozen=True)
class WallContact:
    """Unilateral spring-damper wall acting on one joint at its link tip."""

    coordinate: int
    angle: float
    k_wall: float = 1e3
    c_wall: float = 10.0
    side: float = 1.0  # +1: wall blocks increasing angle

    def normal_force(self, model, state):
        """Wall normal force (>= 0); zero outside penetration."""
        chain, link = model.link_of(self.coordinate)
        arm = model.chains[chain][link].length
        pen = arm * self.side * (state.q[self.coordinate] - self.angle)
        if pen <= 0.0:
            return 0.0
        rate = arm * self.side * state.q_dot[self.coordinate]
        return max(0.0, self.k_wall * pen + self.c_wall * rate)

    def torque(self, model, state):
        """Generalized torque of the wall on the full coordinate vector."""
        tau = np.zeros(model.n)
        fn = self.normal_force(model, state)
        if fn > 0.0:
            chain, link = model.link_of(self.coordinate)
            arm = model.chains[chain][link].length
            tau[self.coordinate] = -self.side * fn * arm
        return tau
