"""Scenario-driven command line runner.

Scenario files are JSON documents describing a robot, a controller, and an
experiment kind (``regulate``, ``zero_dynamics``, ``disturb``,
``force_control``, ``identify``, ``certify``).  The runner writes the
trajectory as CSV (17 significant digits, so round-trips are bit exact) plus
a JSON metrics summary, and returns a contract exit status: 0 on success,
1 on a failed gain certificate, 2 on parse/validation errors, 3 on
simulation divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field

import numpy as np

from . import control as ctl
from . import dynamics as dyn
from . import identification as ident
from .coupling import CouplingSpec
from .errors import ConfigError, DivergenceError, ParelasticError
from .kinematics import LinkGeometry

SCENARIO_KINDS = (
    "regulate",
    "zero_dynamics",
    "disturb",
    "force_control",
    "identify",
    "certify",
)


@dataclass
class Disturbance:
    """Constant torque pulse on one coordinate over [start, start+duration]."""

    coordinate: int
    amplitude: float
    start: float
    duration: float

    def torque(self, model, state):
        tau = np.zeros(model.n)
        if self.start <= state.t < self.start + self.duration:
            tau[self.coordinate] = self.amplitude
        return tau


@dataclass
class ScenarioConfig:
    """Validated scenario: robot, controller, horizon, optional extras."""

    kind: str
    robot: dyn.RobotModel
    duration: float
    dt: float
    controller: object = None
    initial_state: dyn.State = None
    disturbances: tuple = ()
    contact: ctl.WallContact | None = None
    reference: dict | None = None
    identify: dict | None = None
    certify: dict = field(default_factory=dict)
    seed: int = 0
    output_path: str = "scenario_out.csv"
    raw: dict = field(default_factory=dict, repr=False)


@dataclass
class MetricsSummary:
    """Headline numbers of one run, written alongside the CSV."""

    steady_state_error: list
    settling_time_2pct: float | None
    max_torque: float
    lyapunov_monotone: bool
    force_error_pct: float | None = None

    def to_dict(self):
        return {
            "steady_state_error": self.steady_state_error,
            "settling_time_2pct": self.settling_time_2pct,
            "max_torque": self.max_torque,
            "lyapunov_monotone": self.lyapunov_monotone,
            "force_error_pct": self.force_error_pct,
        }


def _require(mapping, key, context):
    if key not in mapping:
        raise ConfigError(f"{context}: missing required field '{key}'")
    return mapping[key]


def _build_robot(spec):
    try:
        chains = []
        anchors = []
        for ci, chain_spec in enumerate(_require(spec, "chains", "robot")):
            links = []
            for li, link_spec in enumerate(_require(chain_spec, "links", f"robot.chains[{ci}]")):
                links.append(
                    LinkGeometry(
                        length=_require(link_spec, "length", f"robot.chains[{ci}].links[{li}]"),
                        mass=_require(link_spec, "mass", f"robot.chains[{ci}].links[{li}]"),
                        com_offset=link_spec.get("com_offset", -1.0),
                        inertia_about_com=link_spec.get("inertia_about_com", -1.0),
                    )
                )
            chains.append(tuple(links))
            anchors.append(np.asarray(chain_spec.get("anchor", (0.0, 0.0)), dtype=float))
        couplings = []
        for cp in spec.get("couplings", ()):
            couplings.append(
                CouplingSpec(
                    family=_require(cp, "family", "robot.couplings"),
                    k=_require(cp, "k", "robot.couplings"),
                    coordinate_pair=tuple(cp["coordinate_pair"]) if "coordinate_pair" in cp else None,
                    segment_pair=tuple(tuple(s) for s in cp["segment_pair"]) if "segment_pair" in cp else None,
                    quadrature_points=cp.get("quadrature_points", 20),
                )
            )
        return dyn.RobotModel(
            chains=tuple(chains),
            actuated_indices=tuple(_require(spec, "actuated", "robot")),
            joint_stiffness=spec.get("joint_stiffness", 0.0),
            joint_damping=spec.get("joint_damping", 0.0),
            couplings=tuple(couplings),
            gravity=spec.get("gravity", (0.0, -9.81)),
            chain_anchors=tuple(anchors),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"robot: {exc}") from exc


def _build_controller(spec, model, kind):
    if spec is None:
        if kind in ("regulate", "disturb", "zero_dynamics", "certify"):
            raise ConfigError("controller: required for this scenario kind")
        return None
    ctype = spec.get("type", "regulator")
    try:
        if ctype == "regulator":
            q_bar_u = spec.get("q_bar_u")
            cfg = ctl.RegulatorConfig(
                k_p=_require(spec, "k_p", "controller"),
                k_d=_require(spec, "k_d", "controller"),
                q_bar_a=_require(spec, "q_bar_a", "controller"),
                q_bar_u=q_bar_u,
                compensation=spec.get("compensation", "feedforward"),
            )
            if cfg.q_bar_u is None and cfg.compensation == "feedforward":
                cfg.q_bar_u = ctl.equilibrium_solve(model, cfg.q_bar_a)
            return cfg
        if ctype == "force_pid":
            return ctl.ForcePidConfig(
                k_p=_require(spec, "k_p", "controller"),
                k_i=spec.get("k_i", 0.0),
                k_d=spec.get("k_d", 0.0),
                f_desired=_require(spec, "f_desired", "controller"),
                integral_clamp=spec.get("integral_clamp", 10.0),
                q_bar=spec.get("q_bar"),
                press_direction=spec.get("press_direction", 1.0),
                include_gravity=spec.get("include_gravity", False),
            )
    except ValueError as exc:
        raise ConfigError(f"controller: {exc}") from exc
    raise ConfigError(f"controller: unknown type {ctype!r}")


def _build_initial_state(spec, model, controller):
    n = model.n
    if spec is None:
        return dyn.State(np.zeros(n), np.zeros(n))
    try:
        if "equilibrium_at" in spec:
            q_a = np.atleast_1d(np.asarray(spec["equilibrium_at"], dtype=float))
            q_u = ctl.equilibrium_solve(model, q_a)
            q = np.empty(n)
            q[list(model.actuated_indices)] = q_a
            q[list(model.unactuated_indices)] = q_u
            return dyn.State(q, np.zeros(n))
        q = np.asarray(spec.get("q", np.zeros(n)), dtype=float)
        qd = np.asarray(spec.get("q_dot", np.zeros(n)), dtype=float)
        if q.shape != (n,) or qd.shape != (n,):
            raise ConfigError(
                f"initial_state: q/q_dot must have {n} entries"
            )
        return dyn.State(q, qd)
    except ValueError as exc:
        raise ConfigError(f"initial_state: {exc}") from exc


def parse_config(path):
    """Load and validate a scenario file; every error names its field."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"scenario file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc

    kind = _require(raw, "kind", "scenario")
    if kind not in SCENARIO_KINDS:
        raise ConfigError(f"kind: must be one of {SCENARIO_KINDS}, got {kind!r}")
    model = _build_robot(_require(raw, "robot", "scenario"))
    duration = float(raw.get("duration", 1.0))
    dt = float(raw.get("dt", 1e-3))
    if duration <= 0:
        raise ConfigError(f"duration: must be > 0, got {duration}")
    if dt <= 0 or dt > duration:
        raise ConfigError(f"dt: must satisfy 0 < dt <= duration, got {dt}")
    controller = _build_controller(raw.get("controller"), model, kind)
    initial_state = _build_initial_state(raw.get("initial_state"), model, controller)
    disturbances = []
    for d in raw.get("disturbances", ()):
        coord = int(_require(d, "coordinate", "disturbances"))
        if not 0 <= coord < model.n:
            raise ConfigError(f"disturbances.coordinate: {coord} out of range")
        disturbances.append(
            Disturbance(
                coordinate=coord,
                amplitude=float(_require(d, "amplitude", "disturbances")),
                start=float(d.get("start", 0.0)),
                duration=float(d.get("duration", duration)),
            )
        )
    contact = None
    if "contact" in raw:
        c = raw["contact"]
        try:
            contact = ctl.WallContact(
                coordinate=int(_require(c, "coordinate", "contact")),
                angle=float(_require(c, "angle", "contact")),
                k_wall=float(c.get("k_wall", 1e3)),
                c_wall=float(c.get("c_wall", 10.0)),
                side=float(c.get("side", 1.0)),
            )
        except ValueError as exc:
            raise ConfigError(f"contact: {exc}") from exc
    reference = raw.get("reference")
    if reference is not None and reference.get("type") != "sinusoid":
        raise ConfigError(f"reference.type: only 'sinusoid' is supported")
    return ScenarioConfig(
        kind=kind,
        robot=model,
        duration=duration,
        dt=dt,
        controller=controller,
        initial_state=initial_state,
        disturbances=tuple(disturbances),
        contact=contact,
        reference=reference,
        identify=raw.get("identify"),
        certify=raw.get("certify", {}),
        seed=int(raw.get("seed", 0)),
        output_path=raw.get("output_path", "scenario_out.csv"),
        raw=raw,
    )


def emit_config(config):
    """Serialize the raw parsed document (round-trips through parse_config)."""
    return json.dumps(config.raw, indent=2, sort_keys=True)


def export_csv(log, path, m=None):
    """Write a trajectory log as CSV with 17-significant-digit floats."""
    n = log.q.shape[1]
    m = log.tau.shape[1] if m is None else m
    header = (
        ["t"]
        + [f"q_{i + 1}" for i in range(n)]
        + [f"qd_{i + 1}" for i in range(n)]
        + [f"tau_{i + 1}" for i in range(m)]
        + ["E_kin", "E_elastic", "E_grav", "V_lyap"]
    )
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for i in range(len(log.t)):
                row = (
                    [log.t[i]]
                    + list(log.q[i])
                    + list(log.q_dot[i])
                    + list(log.tau[i])
                    + [log.e_kin[i], log.e_elastic[i], log.e_grav[i], log.v_lyap[i]]
                )
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    except OSError as exc:
        raise ParelasticError(f"cannot write CSV to {path}: {exc}") from exc


def _reference_fn(reference, q_bar_a):
    amp = np.atleast_1d(np.asarray(reference.get("amplitude", 0.0), dtype=float))
    freq = float(reference.get("frequency_hz", 0.5))
    center = np.asarray(reference.get("center", q_bar_a), dtype=float)

    def fn(t):
        return center + amp * np.sin(2.0 * np.pi * freq * t)

    return fn


def _settling_time(t, err, initial):
    """First time after which the error norm stays within 2% of its start."""
    if initial <= 0:
        return 0.0
    tol = 0.02 * initial
    outside = np.nonzero(err > tol)[0]
    if outside.size == 0:
        return float(t[0])
    if outside[-1] == len(t) - 1:
        return None  # never settled
    return float(t[outside[-1] + 1])


def _summarize(log, model, q_bar_a=None, force_target=None, force_final=None):
    a = list(model.actuated_indices)
    if q_bar_a is not None:
        err = np.abs(log.q[:, a] - q_bar_a[None, :])
        sse = [float(e) for e in err[-1]]
        settle = _settling_time(log.t, err.max(axis=1), err[0].max())
    else:
        sse = [float("nan")] * len(a)
        settle = None
    dv = np.diff(log.v_lyap)
    monotone = bool(dv.size == 0 or dv.max() <= 1e-8)
    fpct = None
    if force_target is not None and force_target != 0 and force_final is not None:
        fpct = float(abs(force_final - force_target) / abs(force_target) * 100.0)
    return MetricsSummary(
        steady_state_error=sse,
        settling_time_2pct=settle,
        max_torque=float(np.max(np.abs(log.tau))) if log.tau.size else 0.0,
        lyapunov_monotone=monotone,
        force_error_pct=fpct,
    )


def _external_torque(config):
    parts = list(config.disturbances)
    contact = config.contact
    if not parts and contact is None:
        return None

    def ext(state):
        tau = np.zeros(config.robot.n)
        for d in parts:
            tau += d.torque(config.robot, state)
        if contact is not None:
            tau += contact.torque(config.robot, state)
        return tau

    return ext


def run_scenario(config):
    """Dispatch one scenario; returns (TrajectoryLog, MetricsSummary)."""
    model = config.robot
    n_steps = int(round(config.duration / config.dt))
    if config.kind in ("regulate", "disturb"):
        cfg = config.controller
        ref_fn = None
        if config.reference is not None:
            ref_fn = _reference_fn(config.reference, cfg.q_bar_a)
        provider = ctl.Regulator(cfg, model, reference_fn=ref_fn)
        log = dyn.step(
            model,
            config.initial_state,
            provider,
            config.dt,
            n_steps,
            external_torque=_external_torque(config),
        )
        return log, _summarize(log, model, q_bar_a=cfg.q_bar_a)
    if config.kind == "zero_dynamics":
        cfg = config.controller
        log = ctl.simulate_zero_dynamics(
            model, cfg.q_bar_a, config.initial_state, config.dt, n_steps
        )
        return log, _summarize(log, model, q_bar_a=cfg.q_bar_a)
    if config.kind == "force_control":
        provider = ctl.ForcePidController(config.controller, model)
        if config.contact is None:
            raise ConfigError("contact: required for force_control scenarios")
        log = dyn.step(
            model,
            config.initial_state,
            provider,
            config.dt,
            n_steps,
            external_torque=_external_torque(config),
        )
        final = dyn.State(log.q[-1], log.q_dot[-1], log.t[-1])
        f_wall = config.contact.normal_force(model, final)
        summary = _summarize(
            log,
            model,
            force_target=config.controller.f_desired,
            force_final=f_wall,
        )
        return log, summary
    raise ConfigError(f"kind: {config.kind} is not a simulation scenario")


def run_identify(config, output_path):
    """Fit the configured families to a synthetic or on-disk dataset."""
    spec = config.identify or {}
    coordinate = spec.get("observed_coordinate")
    if "dataset_path" in spec:
        dataset = ident.load_dataset(spec["dataset_path"])
    else:
        lo, hi, count = spec.get("grid", (-0.8, 0.8, 90))
        dataset = ident.generate_synthetic_dataset(
            config.robot,
            spec.get("family", "linear"),
            spec.get("k_true", 1.0),
            np.linspace(float(lo), float(hi), int(count)),
            noise_std=float(spec.get("noise_std", 0.0)),
            seed=config.seed,
            coordinate=coordinate,
        )
    families = spec.get("fit_families", list(ident.FAMILIES))
    results = ident.rank_families(config.robot, dataset, families, coordinate)
    with open(output_path, "w", newline="") as fh:
        fh.write("family,k_hat,r_squared,n_samples\n")
        for r in results:
            fh.write(f"{r.family},{r.k_hat:.17g},{r.r_squared:.17g},{len(dataset)}\n")
    return results


def run_certify(config, out=sys.stdout):
    """Print the gain certificate; returns the certificate object."""
    spec = config.certify
    region = spec.get("region", (-np.pi, np.pi))
    cert = ctl.certify_gains(
        config.robot,
        config.controller,
        region_lo=float(region[0]),
        region_hi=float(region[1]),
        grid_density=int(spec.get("grid_density", 7)),
    )
    print(f"gamma_1            = {cert.gamma_1:.6g}", file=out)
    print(f"lambda_min(D_hat)  = {cert.lambda_min_Dhat:.6g}", file=out)
    print(f"alpha_GK           = {cert.alpha_GK:.6g}", file=out)
    print(f"Q                  = [[{cert.Q[0, 0]:.6g}, {cert.Q[0, 1]:.6g}],")
    print(f"                      [{cert.Q[1, 0]:.6g}, {cert.Q[1, 1]:.6g}]]", file=out)
    print(f"K_P lower bound    = {cert.kp_lower_bound:.6g}", file=out)
    if cert.verdict:
        print("certificate: PASS", file=out)
    else:
        print(f"certificate: FAIL ({cert.failure})", file=out)
    return cert


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="parelastic",
        description="Simulate, certify, and identify elastically coupled planar robots.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "certify", "identify", "validate"):
        p = sub.add_parser(name)
        p.add_argument("config", help="path to a .scenario JSON file")
        p.add_argument("--dt", type=float, default=None)
        p.add_argument("--duration", type=float, default=None)
        p.add_argument("--output", default=None)
        p.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)

    try:
        config = parse_config(args.config)
        if args.dt is not None:
            if args.dt <= 0:
                raise ConfigError(f"dt: must be > 0, got {args.dt}")
            config.dt = args.dt
        if args.duration is not None:
            if args.duration <= 0:
                raise ConfigError(f"duration: must be > 0, got {args.duration}")
            config.duration = args.duration
        if args.seed is not None:
            config.seed = args.seed
        if args.output is not None:
            config.output_path = args.output
    except ParelasticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.command == "validate":
        print(f"{args.config}: OK ({config.kind}, n={config.robot.n})")
        return 0

    try:
        if args.command == "certify" or config.kind == "certify":
            cert = run_certify(config)
            return 0 if cert.verdict else 1
        if args.command == "identify" or config.kind == "identify":
            results = run_identify(config, config.output_path)
            for r in results:
                print(f"{r.family}: k_hat={r.k_hat:.6g} R^2={r.r_squared:.6g}")
            print(f"wrote {config.output_path}")
            return 0
        log, summary = run_scenario(config)
    except DivergenceError as exc:
        print(f"error: simulation diverged at step {exc.step}", file=sys.stderr)
        return 3
    except ParelasticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    export_csv(log, config.output_path)
    metrics_path = str(config.output_path).rsplit(".", 1)[0] + ".metrics.json"
    with open(metrics_path, "w") as fh:
        json.dump(summary.to_dict(), fh, indent=2, sort_keys=True)
    print(f"wrote {config.output_path} and {metrics_path}")
    print(json.dumps(summary.to_dict(), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
