"""Closed-loop scenario runner.

Plant, actuators, ground vehicle, observer and controller march on one
fixed RK4 grid. Measurement noise is sampled once per control step and
held, and every run is a pure function of (config, seed): identical inputs
produce bit-identical logs.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .actuators import build_mixer
from .controller import DEFAULT_ANGLE_MARGIN, SaturationBounds
from .dynamics import RigidBodyState
from .errors import Diverged, NonFiniteState, SingularOrientation, ValidationError
from .observer import MeasurementFrame, ObserverGains, initial_observer_state
from .params import ControlGains, VehicleParams
from .reference import ReferenceState, TrajectoryProfile
from .signals import Disturbance

MODES = ("state_feedback", "output_feedback")

# extended-state block slices, reused by metrics
BLOCKS = (slice(0, 9), slice(9, 18), slice(18, 30))


@dataclass(frozen=True)
class NoiseStd:
    """Per-channel measurement noise standard deviations."""

    position: float = 0.005
    orientation: float = 0.002
    vehicle_position: float = 0.010

    def __post_init__(self):
        for name in ("position", "orientation", "vehicle_position"):
            if getattr(self, name) < 0.0:
                raise ValidationError(f"noise.{name}", ">= 0")

    def row(self) -> np.ndarray:
        return np.repeat([self.position, self.orientation, self.vehicle_position], 3)


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one closed-loop experiment."""

    duration: float = 40.0
    step: float = 1e-3
    seed: int = 20260809
    mode: str = "output_feedback"
    noise: NoiseStd = field(default_factory=NoiseStd)
    initial_state: RigidBodyState = field(
        default_factory=lambda: RigidBodyState(
            p1=[1.0, 1.0, -4.0], p2=[0.0] * 3, theta1=[0.0] * 3, theta2=[0.0] * 3
        )
    )
    initial_vehicle: ReferenceState = field(
        default_factory=lambda: ReferenceState(xc1=[5.0, 0.0, -0.5], xc2=[0.0] * 3)
    )
    profile: TrajectoryProfile = field(default_factory=TrajectoryProfile)
    gains: ControlGains = field(default_factory=ControlGains)
    observer: ObserverGains = field(default_factory=ObserverGains)
    params: VehicleParams = field(default_factory=VehicleParams)
    disturbance: Disturbance = field(default_factory=Disturbance)
    angle_margin: float = DEFAULT_ANGLE_MARGIN
    include_ref_jerk: bool = True
    observer_enabled: bool = True
    observer_init_mode: str = "measured"
    saturation_floor: float = 1e-3
    saturation_bounds: np.ndarray | None = None

    def __post_init__(self):
        if self.step <= 0.0:
            raise ValidationError("sim.step", "> 0")
        if self.duration < self.step:
            raise ValidationError("sim.duration", ">= sim.step")
        if self.mode not in MODES:
            raise ValidationError("sim.mode", f"one of {MODES}")
        if self.step > self.params.tau_m / 5.0 + 1e-15:
            raise ValidationError("sim.step", "<= tau_m / 5 (actuator time scale)")
        if self.mode == "output_feedback":
            if self.step > self.observer.epsilon / 5.0 + 1e-15:
                raise ValidationError("sim.step", "<= epsilon / 5 in output feedback")
        if not (0.0 < self.angle_margin < 0.5 * math.pi):
            raise ValidationError("gains.angle_margin", "in (0, pi/2)")
        if self.saturation_floor <= 0.0:
            raise ValidationError("observer.saturation_floor", "> 0")
        if self.saturation_bounds is not None:
            b = np.asarray(self.saturation_bounds, dtype=float)
            if b.shape != (kernels.CHI_DIM,) or (b <= 0.0).any():
                raise ValidationError(
                    "observer.saturation_bounds", "30 strictly positive entries"
                )
            object.__setattr__(self, "saturation_bounds", b)

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.duration / self.step + 1e-9))

    def descent_end(self) -> float:
        return self.profile.descent.start_time + self.profile.descent.duration

    def replace(self, **kw) -> "ScenarioConfig":
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class NoiseModel:
    """Seeded per-step measurement noise with zero-order hold."""

    seed: int
    std: NoiseStd

    def sequence(self, n_rows: int) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        return rng.standard_normal((n_rows, 9)) * self.std.row()


@dataclass
class SimLog:
    """Uniform-grid record of one run; arrays have n_steps + 1 rows."""

    t: np.ndarray
    state: np.ndarray  # [p1 p2 theta1 theta2]
    xc: np.ndarray  # vehicle [pos vel]
    omega: np.ndarray
    chi_hat: np.ndarray
    chi_true: np.ndarray
    cmd: np.ndarray  # [u_f tau]
    omega_des: np.ndarray
    theta_r: np.ndarray  # [theta_r thetar_dot]
    meas: np.ndarray  # [p1 theta1 xc1]
    dist: np.ndarray  # [sigma_rho sigma_xi]
    target: np.ndarray  # [target target_dot]
    diag: np.ndarray  # [saturation_hits alloc_clamps margin_hits]
    meta: dict
    config: ScenarioConfig | None = None
    bounds: SaturationBounds | None = None

    @property
    def rho1(self) -> np.ndarray:
        return self.chi_true[:, 0:3]

    @property
    def xi1(self) -> np.ndarray:
        return self.chi_true[:, 9:12]

    def estimation_error(self) -> np.ndarray:
        return self.chi_true - self.chi_hat


def rk4_step(derivative_map, state, t: float, h: float):
    """Classical fourth-order Runge-Kutta update of a flat state bundle."""
    if h <= 0.0:
        raise ValueError("step must be positive")
    y = np.asarray(state, dtype=float)
    k1 = np.asarray(derivative_map(t, y))
    k2 = np.asarray(derivative_map(t + 0.5 * h, y + 0.5 * h * k1))
    k3 = np.asarray(derivative_map(t + 0.5 * h, y + 0.5 * h * k2))
    k4 = np.asarray(derivative_map(t + h, y + h * k3))
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _pack_run(config: ScenarioConfig, bounds: np.ndarray):
    """Marshal a config into the flat arrays the simulation kernel consumes."""
    params = config.params
    n = params.n_rotors
    mixer = build_mixer(params)
    z_start = float(config.initial_state.p1[2])
    noise = NoiseModel(config.seed, config.noise).sequence(config.n_steps + 1)
    if config.mode == "state_feedback":
        chi0 = np.zeros(kernels.CHI_DIM)
        omega_hat0 = np.full(n, params.hover_rate())
    else:
        frame = MeasurementFrame(
            p1_meas=config.initial_state.p1 + noise[0, 0:3],
            theta1_meas=config.initial_state.theta1 + noise[0, 3:6],
            xc1_meas=config.initial_vehicle.xc1 + noise[0, 6:9],
            t=0.0,
        )
        obs0 = initial_observer_state(
            frame,
            np.zeros(3),
            params,
            init_mode=config.observer_init_mode,
            profile=config.profile,
            initial_altitude=z_start,
        )
        chi0 = obs0.chi_hat
        omega_hat0 = obs0.omega_hat
    state0 = np.concatenate(
        [
            config.initial_state.as_vector(),
            np.full(n, params.hover_rate()),
            config.initial_vehicle.as_vector(),
            chi0,
            omega_hat0,
        ]
    )
    gains_vec = np.array(
        [
            config.gains.beta1,
            config.gains.beta2,
            config.gains.gamma1,
            config.gains.gamma2,
            config.angle_margin,
        ]
    )
    return {
        "mixer": mixer,
        "noise": noise,
        "state0": state0,
        "gains_vec": gains_vec,
        "h10": config.observer.injection_coefficients(),
        "bounds": bounds,
        "prof": config.profile.packed(),
        "bl": config.profile.blend_packed(z_start),
        "dist": config.disturbance.table(),
    }


def compute_saturation_bounds(config: ScenarioConfig) -> SaturationBounds:
    """Saturation levels from a state-feedback pre-pass of the scenario.

    Each bound is 1.5x the peak |chi_i| observed under state feedback (so
    saturation is never invoked there), floored at ``saturation_floor`` to
    keep entries with identically zero trajectories well defined.
    """
    pre = config.replace(mode="state_feedback", saturation_bounds=None)
    log = run_scenario(pre)
    peak = np.abs(log.chi_true).max(axis=0)
    return SaturationBounds(np.maximum(1.5 * peak, config.saturation_floor))


def run_scenario(config: ScenarioConfig) -> SimLog:
    """Time-march the closed loop described by ``config``.

    In output-feedback mode the controller sees only noisy measurements and
    saturated observer estimates; in state-feedback mode it sees the truth,
    including the disturbance atoms. Saturation bounds are taken from the
    config or computed by an automatic state-feedback pre-pass.
    """
    bounds_obj = None
    if config.mode == "output_feedback":
        if config.saturation_bounds is not None:
            bounds_obj = SaturationBounds(config.saturation_bounds)
        else:
            bounds_obj = compute_saturation_bounds(config)
        bounds = bounds_obj.k_chi
    else:
        bounds = np.ones(kernels.CHI_DIM)
    packed = _pack_run(config, bounds)
    n = config.params.n_rotors
    rows = config.n_steps + 1
    log_state = np.empty((rows, 12))
    log_xc = np.empty((rows, 6))
    log_omega = np.empty((rows, n))
    log_chihat = np.empty((rows, kernels.CHI_DIM))
    log_chitrue = np.empty((rows, kernels.CHI_DIM))
    log_cmd = np.empty((rows, 4))
    log_omdes = np.empty((rows, n))
    log_thr = np.empty((rows, 6))
    log_meas = np.empty((rows, 9))
    log_dist = np.empty((rows, 6))
    log_tgt = np.empty((rows, 6))
    log_diag = np.zeros((rows, 3), dtype=np.int64)
    status, step = kernels.simulate_loop(
        0 if config.mode == "state_feedback" else 1,
        1 if config.observer_enabled else 0,
        1 if config.include_ref_jerk else 0,
        config.n_steps,
        config.step,
        packed["state0"],
        n,
        config.params.mass,
        config.params.inertia,
        config.params.inertia_inv,
        config.params.thrust_coeff,
        config.params.tau_m,
        packed["mixer"].M,
        packed["mixer"].M_pinv,
        packed["gains_vec"],
        packed["h10"],
        packed["bounds"],
        packed["prof"],
        packed["bl"],
        packed["dist"],
        packed["noise"],
        log_state,
        log_xc,
        log_omega,
        log_chihat,
        log_chitrue,
        log_cmd,
        log_omdes,
        log_thr,
        log_meas,
        log_dist,
        log_tgt,
        log_diag,
    )
    if status == kernels.DIVERGED:
        raise Diverged(f"state norm guard exceeded at step {step}", step=int(step))
    if status == kernels.SINGULAR:
        raise SingularOrientation(f"Euler singularity guard hit at step {step}")
    if status == kernels.NONFINITE:
        raise NonFiniteState(f"non-finite state at step {step}", step=int(step))
    meta = {
        "mode": config.mode,
        "step": config.step,
        "seed": config.seed,
        "n_rotors": n,
        "epsilon": config.observer.epsilon,
        "descent_end": config.descent_end(),
        "duration": config.duration,
    }
    return SimLog(
        t=np.arange(rows) * config.step,
        state=log_state,
        xc=log_xc,
        omega=log_omega,
        chi_hat=log_chihat,
        chi_true=log_chitrue,
        cmd=log_cmd,
        omega_des=log_omdes,
        theta_r=log_thr,
        meas=log_meas,
        dist=log_dist,
        target=log_tgt,
        diag=log_diag,
        meta=meta,
        config=config,
        bounds=bounds_obj,
    )


@dataclass(frozen=True)
class Metrics:
    """Summary statistics of a run; all derivable from the serialized log."""

    rms_rho1: float
    max_rho1: float
    rms_xi1: float
    max_xi1: float
    est_err_rms_total: float
    est_err_rms_blocks: tuple
    peak_est_err_blocks: tuple
    touchdown_horizontal: float
    touchdown_vertical: float
    saturation_hits: int
    allocation_clamps: int
    margin_hits: int

    def lines(self) -> list:
        items = []
        for f in dataclasses.fields(self):
            items.append(f"{f.name} = {getattr(self, f.name)!r}")
        return items


def metrics(log: SimLog) -> Metrics:
    """RMS/max tracking errors over the final quarter, estimation-error RMS
    per observer block, touchdown offsets at descent end, and counters."""
    rows = log.t.shape[0]
    if rows == 0:
        raise ValueError("empty log")
    tail = slice((3 * rows) // 4, rows)
    rho1_norm = np.sqrt((log.rho1 ** 2).sum(axis=1))
    xi1_norm = np.sqrt((log.xi1 ** 2).sum(axis=1))
    err = log.estimation_error()
    err_norm = np.sqrt((err ** 2).sum(axis=1))
    block_rms = tuple(
        float(np.sqrt((np.linalg.norm(err[tail, b], axis=1) ** 2).mean()))
        for b in BLOCKS
    )
    block_peak = tuple(float(np.abs(err[:, b]).max()) for b in BLOCKS)
    descent_end = log.meta.get("descent_end", float("inf"))
    if descent_end <= log.t[-1]:
        k = int(round(descent_end / log.meta["step"]))
        horiz = float(np.linalg.norm(log.state[k, 0:2] - log.xc[k, 0:2]))
        vert = float(abs(log.state[k, 2] - log.target[k, 2]))
    else:
        horiz = float("nan")
        vert = float("nan")
    return Metrics(
        rms_rho1=float(np.sqrt((rho1_norm[tail] ** 2).mean())),
        max_rho1=float(rho1_norm[tail].max()),
        rms_xi1=float(np.sqrt((xi1_norm[tail] ** 2).mean())),
        max_xi1=float(xi1_norm[tail].max()),
        est_err_rms_total=float(np.sqrt((err_norm[tail] ** 2).mean())),
        est_err_rms_blocks=block_rms,
        peak_est_err_blocks=block_peak,
        touchdown_horizontal=horiz,
        touchdown_vertical=vert,
        saturation_hits=int(log.diag[:, 0].sum()),
        allocation_clamps=int(log.diag[:, 1].sum()),
        margin_hits=int(log.diag[:, 2].sum()),
    )


def csv_columns(n_rotors: int) -> list:
    """Fixed CSV column order for a log with the given rotor count."""
    cols = ["t"]
    cols += [f"p1_{a}" for a in "xyz"] + [f"p2_{a}" for a in "xyz"]
    cols += [f"theta1_{a}" for a in ("phi", "theta", "psi")]
    cols += [f"theta2_{a}" for a in ("phi", "theta", "psi")]
    cols += [f"xc1_{a}" for a in "xyz"] + [f"xc2_{a}" for a in "xyz"]
    cols += [f"chi_hat_{i:02d}" for i in range(kernels.CHI_DIM)]
    cols += [f"chi_true_{i:02d}" for i in range(kernels.CHI_DIM)]
    cols += [f"omega_{i}" for i in range(n_rotors)]
    cols += [f"omega_des_{i}" for i in range(n_rotors)]
    cols += ["u_f", "tau_x", "tau_y", "tau_z"]
    cols += [f"theta_r_{a}" for a in ("phi", "theta", "psi")]
    cols += [f"thetar_dot_{a}" for a in ("phi", "theta", "psi")]
    cols += [f"p1_meas_{a}" for a in "xyz"]
    cols += [f"theta1_meas_{a}" for a in ("phi", "theta", "psi")]
    cols += [f"xc1_meas_{a}" for a in "xyz"]
    cols += [f"sigma_rho_{a}" for a in "xyz"] + [f"sigma_xi_{a}" for a in "xyz"]
    cols += [f"target_{a}" for a in "xyz"] + [f"target_dot_{a}" for a in "xyz"]
    cols += ["diag_saturation", "diag_alloc_clamp", "diag_margin"]
    return cols


def log_to_csv(log: SimLog, path) -> None:
    """Serialize at 17 significant digits so rereads are bit-exact.

    Run metadata rides in leading ``# key=value`` comment lines.
    """
    n = log.meta["n_rotors"]
    table = np.column_stack(
        [
            log.t,
            log.state,
            log.xc,
            log.chi_hat,
            log.chi_true,
            log.omega,
            log.omega_des,
            log.cmd,
            log.theta_r,
            log.meas,
            log.dist,
            log.target,
            log.diag.astype(float),
        ]
    )
    header_meta = "".join(f"# {k}={log.meta[k]!r}\n" for k in sorted(log.meta))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header_meta)
        fh.write(",".join(csv_columns(n)) + "\n")
        np.savetxt(fh, table, fmt="%.17g", delimiter=",")


def log_from_csv(path) -> SimLog:
    """Rebuild a SimLog from :func:`log_to_csv` output."""
    import ast

    def parse_meta(value):
        try:
            return ast.literal_eval(value)
        except (ValueError, SyntaxError):
            try:
                return float(value)
            except ValueError:
                return value

    meta = {}
    with open(path, "r", encoding="utf-8") as fh:
        line = fh.readline()
        while line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = parse_meta(value)
            line = fh.readline()
        header = line.strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    n = int(meta.get("n_rotors", 4))
    if header != csv_columns(n):
        raise ValueError(f"unexpected CSV columns in {path}")
    c = 0

    def take(width):
        nonlocal c
        block = data[:, c : c + width]
        c += width
        return block

    t = take(1)[:, 0]
    state = take(12)
    xc = take(6)
    chi_hat = take(kernels.CHI_DIM)
    chi_true = take(kernels.CHI_DIM)
    omega = take(n)
    omega_des = take(n)
    cmd = take(4)
    theta_r = take(6)
    meas = take(9)
    dist = take(6)
    target = take(6)
    diag = take(3).astype(np.int64)
    return SimLog(
        t=t,
        state=state,
        xc=xc,
        omega=omega,
        chi_hat=chi_hat,
        chi_true=chi_true,
        cmd=cmd,
        omega_des=omega_des,
        theta_r=theta_r,
        meas=meas,
        dist=dist,
        target=target,
        diag=diag,
        meta=meta,
    )
