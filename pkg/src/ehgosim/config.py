"""Flat INI-style scenario configuration.

Six sections (vehicle, gains, observer, profile, sim, noise) of
``key = value`` lines plus an optional [sweep] section for the epsilon
sweep. Values are scalars, whitespace-separated float lists, or the
disturbance atom syntax of :mod:`ehgosim.signals`. ``--set section.key=value``
overrides replace file values after parsing. Errors carry the offending
line (ParseError) or the dotted field and violated constraint
(ValidationError).
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .controller import DEFAULT_ANGLE_MARGIN
from .dynamics import RigidBodyState
from .errors import ParseError, ValidationError
from .observer import ObserverGains
from .params import ControlGains, VehicleParams
from .reference import DescentProfile, ReferenceState, TrajectoryProfile
from .sim import NoiseStd, ScenarioConfig
from .signals import Disturbance, VectorSignal

BUNDLED = ("paper_landing", "hover_smoke", "sweep_default")

DEFAULTS = {
    ("vehicle", "mass"): "1.2",
    ("vehicle", "inertia"): "0.015 0.015 0.025",
    ("vehicle", "thrust_coeff"): "1.8e-5",
    ("vehicle", "motor_time_constant"): "0.01",
    ("vehicle", "n_rotors"): "4",
    ("vehicle", "arm_length"): "0.20",
    ("vehicle", "torque_ratio"): "0.012",
    ("gains", "beta1"): "16.0",
    ("gains", "beta2"): "8.0",
    ("gains", "gamma1"): "4.0",
    ("gains", "gamma2"): "4.0",
    ("gains", "angle_margin"): str(DEFAULT_ANGLE_MARGIN),
    ("observer", "epsilon"): "0.01",
    ("observer", "alpha1"): "3 3 1",
    ("observer", "alpha2"): "3 3 1",
    ("observer", "alpha3"): "4 6 4 1",
    ("observer", "enabled"): "true",
    ("observer", "init_mode"): "measured",
    ("observer", "saturation_floor"): "1e-3",
    ("observer", "saturation_bounds"): "",
    ("observer", "include_ref_jerk"): "true",
    ("profile", "kind"): "figure8",
    ("profile", "amplitude_x"): "3.0",
    ("profile", "amplitude_y"): "1.5",
    ("profile", "angular_rate"): "0.3",
    ("profile", "center"): "5 0 -0.5",
    ("profile", "descent_start"): "inf",
    ("profile", "descent_duration"): "10",
    ("profile", "final_clearance"): "0.0",
    ("sim", "duration"): "40",
    ("sim", "step"): "0.001",
    ("sim", "seed"): "20260809",
    ("sim", "mode"): "output_feedback",
    ("sim", "initial_position"): "1 1 -4",
    ("sim", "initial_velocity"): "0 0 0",
    ("sim", "initial_attitude"): "0 0 0",
    ("sim", "initial_rates"): "0 0 0",
    ("sim", "vehicle_position"): "",  # empty: start at profile.center
    ("sim", "vehicle_velocity"): "0 0 0",
    ("sim", "disturbance_rho"): "0 | 0 | 0",
    ("sim", "disturbance_xi"): "0 | 0 | 0",
    ("noise", "position"): "0.005",
    ("noise", "orientation"): "0.002",
    ("noise", "vehicle_position"): "0.010",
    ("sweep", "epsilons"): "0.04 0.02 0.01 0.005",
}

SECTIONS = tuple(sorted({s for s, _ in DEFAULTS}))


def resolve_config(name_or_path) -> Path:
    """Filesystem path for a config file or the name of a bundled one."""
    p = Path(name_or_path)
    if p.exists():
        return p
    stem = p.stem if p.suffix == ".cfg" else str(name_or_path)
    if stem in BUNDLED:
        return Path(str(resources.files("ehgosim").joinpath(f"configs/{stem}.cfg")))
    raise ValidationError("config", f"existing file or one of {BUNDLED}")


def parse_file(path) -> dict:
    """Raw (section, key) -> string values from a config file."""
    values = {}
    section = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("["):
                if not line.endswith("]"):
                    raise ParseError(lineno, "unterminated section header")
                section = line[1:-1].strip().lower()
                if section not in SECTIONS:
                    raise ParseError(lineno, f"unknown section [{section}]")
                continue
            if "=" not in line:
                raise ParseError(lineno, "expected key = value")
            if section is None:
                raise ParseError(lineno, "key outside any [section]")
            key, _, value = line.partition("=")
            key = key.strip().lower()
            if (section, key) not in DEFAULTS:
                raise ParseError(lineno, f"unknown key {section}.{key}")
            values[(section, key)] = value.strip()
    return values


def apply_overrides(values: dict, overrides) -> dict:
    """Apply dotted ``section.key=value`` strings over parsed values."""
    out = dict(values)
    for item in overrides or ():
        if "=" not in item:
            raise ValidationError("override", f"'{item}' must look like section.key=value")
        dotted, _, value = item.partition("=")
        if "." not in dotted:
            raise ValidationError("override", f"'{dotted}' must be section.key")
        section, _, key = dotted.strip().lower().partition(".")
        if (section, key) not in DEFAULTS:
            raise ValidationError("override", f"unknown key {section}.{key}")
        out[(section, key)] = value.strip()
    return out


def _get(values, section, key):
    return values.get((section, key), DEFAULTS[(section, key)])


def _float(values, section, key) -> float:
    raw = _get(values, section, key)
    try:
        return float(raw)
    except ValueError:
        raise ValidationError(f"{section}.{key}", f"a number (got {raw!r})") from None


def _int(values, section, key) -> int:
    raw = _get(values, section, key)
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"{section}.{key}", f"an integer (got {raw!r})") from None


def _bool(values, section, key) -> bool:
    raw = _get(values, section, key).lower()
    if raw in ("true", "1", "yes", "on"):
        return True
    if raw in ("false", "0", "no", "off"):
        return False
    raise ValidationError(f"{section}.{key}", f"a boolean (got {raw!r})")


def _floats(values, section, key, count=None) -> np.ndarray:
    raw = _get(values, section, key)
    try:
        arr = np.array([float(v) for v in raw.split()])
    except ValueError:
        raise ValidationError(f"{section}.{key}", f"float list (got {raw!r})") from None
    if count is not None and arr.size != count:
        raise ValidationError(f"{section}.{key}", f"{count} values (got {arr.size})")
    return arr


def _signal(values, section, key) -> VectorSignal:
    raw = _get(values, section, key)
    try:
        return VectorSignal.parse(raw)
    except ValueError as exc:
        raise ValidationError(f"{section}.{key}", str(exc)) from None


def build_scenario(values: dict) -> ScenarioConfig:
    """Typed ScenarioConfig from raw values; invariants checked on build."""
    inertia_vals = _floats(values, "vehicle", "inertia")
    if inertia_vals.size == 3:
        inertia = np.diag(inertia_vals)
    elif inertia_vals.size == 9:
        inertia = inertia_vals.reshape(3, 3)
    else:
        raise ValidationError("vehicle.inertia", "3 (diagonal) or 9 (full) values")
    params = VehicleParams(
        mass=_float(values, "vehicle", "mass"),
        inertia=inertia,
        thrust_coeff=_float(values, "vehicle", "thrust_coeff"),
        tau_m=_float(values, "vehicle", "motor_time_constant"),
        n_rotors=_int(values, "vehicle", "n_rotors"),
        arm_length=_float(values, "vehicle", "arm_length"),
        torque_ratio=_float(values, "vehicle", "torque_ratio"),
    )
    gains = ControlGains(
        beta1=_float(values, "gains", "beta1"),
        beta2=_float(values, "gains", "beta2"),
        gamma1=_float(values, "gains", "gamma1"),
        gamma2=_float(values, "gains", "gamma2"),
    )
    observer = ObserverGains(
        alpha1=tuple(_floats(values, "observer", "alpha1", 3)),
        alpha2=tuple(_floats(values, "observer", "alpha2", 3)),
        alpha3=tuple(_floats(values, "observer", "alpha3", 4)),
        epsilon=_float(values, "observer", "epsilon"),
    )
    profile = TrajectoryProfile(
        kind=_get(values, "profile", "kind").strip().lower(),
        amplitude_x=_float(values, "profile", "amplitude_x"),
        amplitude_y=_float(values, "profile", "amplitude_y"),
        angular_rate=_float(values, "profile", "angular_rate"),
        center=_floats(values, "profile", "center", 3),
        descent=DescentProfile(
            start_time=_float(values, "profile", "descent_start"),
            duration=_float(values, "profile", "descent_duration"),
            final_clearance=_float(values, "profile", "final_clearance"),
        ),
    )
    initial_state = RigidBodyState(
        p1=_floats(values, "sim", "initial_position", 3),
        p2=_floats(values, "sim", "initial_velocity", 3),
        theta1=_floats(values, "sim", "initial_attitude", 3),
        theta2=_floats(values, "sim", "initial_rates", 3),
    )
    initial_vehicle = ReferenceState(
        xc1=_floats(values, "profile", "center", 3),
        xc2=_floats(values, "sim", "vehicle_velocity", 3),
    )
    disturbance = Disturbance(
        sigma_rho=_signal(values, "sim", "disturbance_rho"),
        sigma_xi=_signal(values, "sim", "disturbance_xi"),
    )
    bounds_raw = _get(values, "observer", "saturation_bounds").strip()
    bounds = None
    if bounds_raw:
        bounds = _floats(values, "observer", "saturation_bounds", 30)
    return ScenarioConfig(
        duration=_float(values, "sim", "duration"),
        step=_float(values, "sim", "step"),
        seed=_int(values, "sim", "seed"),
        mode=_get(values, "sim", "mode").strip().lower(),
        noise=NoiseStd(
            position=_float(values, "noise", "position"),
            orientation=_float(values, "noise", "orientation"),
            vehicle_position=_float(values, "noise", "vehicle_position"),
        ),
        initial_state=initial_state,
        initial_vehicle=initial_vehicle,
        profile=profile,
        gains=gains,
        observer=observer,
        params=params,
        disturbance=disturbance,
        angle_margin=_float(values, "gains", "angle_margin"),
        include_ref_jerk=_bool(values, "observer", "include_ref_jerk"),
        observer_enabled=_bool(values, "observer", "enabled"),
        observer_init_mode=_get(values, "observer", "init_mode").strip().lower(),
        saturation_floor=_float(values, "observer", "saturation_floor"),
        saturation_bounds=bounds,
    )


def sweep_epsilons(values: dict) -> list:
    return [float(v) for v in _get(values, "sweep", "epsilons").split()]


def load_config(path, overrides=()) -> ScenarioConfig:
    """Parse, override and validate a scenario config file."""
    values = apply_overrides(parse_file(resolve_config(path)), overrides)
    return build_scenario(values)


def load_config_raw(path, overrides=()) -> dict:
    """Raw values (for commands that read extra sections, e.g. sweep)."""
    return apply_overrides(parse_file(resolve_config(path)), overrides)
