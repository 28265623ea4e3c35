"""Ground-vehicle reference system and the landing altitude profile.

The vehicle follows a lemniscate-of-Gerono figure-8 (or coasts at constant
velocity) and is unknown to the controller; only its position is measured.
The landing target tracks the vehicle horizontally while a quintic blend
lowers the vertical target from the multirotor's initial altitude to the
vehicle altitude plus a clearance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ValidationError

PROFILE_KINDS = ("stationary", "constant_velocity", "figure8")

# PD pull gains driving arbitrary initial states onto the figure-8 curve;
# critically damped.
CURVE_PULL_GAIN = 4.0
CURVE_PULL_DAMPING = 4.0


@dataclass(frozen=True)
class ReferenceState:
    """Vehicle position and velocity."""

    xc1: np.ndarray
    xc2: np.ndarray

    def __post_init__(self):
        for name in ("xc1", "xc2"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,) or not np.isfinite(v).all():
                raise ValidationError(f"reference.{name}", "finite 3-vector")
            object.__setattr__(self, name, v)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.xc1, self.xc2])


@dataclass(frozen=True)
class DescentProfile:
    """Vertical approach window: start, duration and final clearance."""

    start_time: float = float("inf")
    duration: float = 10.0
    final_clearance: float = 0.0

    def __post_init__(self):
        if self.duration <= 0.0:
            raise ValidationError("profile.descent.duration", "> 0")


@dataclass(frozen=True)
class TrajectoryProfile:
    """Vehicle trajectory description plus the landing descent window."""

    kind: str = "figure8"
    amplitude_x: float = 3.0
    amplitude_y: float = 1.5
    angular_rate: float = 0.3
    center: np.ndarray = field(default_factory=lambda: np.array([5.0, 0.0, -0.5]))
    descent: DescentProfile = field(default_factory=DescentProfile)

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValidationError("profile.kind", f"one of {PROFILE_KINDS}")
        if self.amplitude_x < 0.0 or self.amplitude_y < 0.0:
            raise ValidationError("profile.amplitude", ">= 0")
        if self.angular_rate < 0.0:
            raise ValidationError("profile.angular_rate", ">= 0")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    def packed(self) -> np.ndarray:
        """Kernel parameter row [kind, ax, ay, w, cx, cy, cz, kc, kd]."""
        return np.array(
            [
                float(PROFILE_KINDS.index(self.kind)),
                self.amplitude_x,
                self.amplitude_y,
                self.angular_rate,
                self.center[0],
                self.center[1],
                self.center[2],
                CURVE_PULL_GAIN,
                CURVE_PULL_DAMPING,
            ]
        )

    def blend_packed(self, initial_altitude: float) -> np.ndarray:
        """Kernel blend row [mode, start, duration, clearance, z_start]."""
        return np.array(
            [
                1.0,
                self.descent.start_time,
                self.descent.duration,
                self.descent.final_clearance,
                float(initial_altitude),
            ]
        )


def figure8_curve(t: float, profile: TrajectoryProfile):
    """Closed-form curve point and its first three derivatives."""
    c = np.empty(3)
    cd = np.empty(3)
    cdd = np.empty(3)
    cddd = np.empty(3)
    kernels.figure8_chain(profile.packed(), float(t), c, cd, cdd, cddd)
    return c, cd, cdd, cddd


def reference_acceleration(
    t: float, xc: ReferenceState, profile: TrajectoryProfile
) -> np.ndarray:
    """Vehicle acceleration: curve feed-forward plus PD pull onto the curve."""
    acc = np.empty(3)
    jerk = np.empty(3)
    kernels.reference_accel_jerk(profile.packed(), float(t), xc.as_vector(), acc, jerk)
    return acc


def reference_jerk(t: float, xc: ReferenceState, profile: TrajectoryProfile) -> np.ndarray:
    """Time derivative of :func:`reference_acceleration` along the flow."""
    acc = np.empty(3)
    jerk = np.empty(3)
    kernels.reference_accel_jerk(profile.packed(), float(t), xc.as_vector(), acc, jerk)
    return jerk


def reference_derivative(
    t: float, xc: ReferenceState, profile: TrajectoryProfile
) -> ReferenceState:
    """Vehicle state derivative (velocity, acceleration)."""
    return ReferenceState(xc1=xc.xc2, xc2=reference_acceleration(t, xc, profile))


def quintic_blend(t: float, t0: float, duration: float):
    """0 -> 1 blend with zero first and second derivatives at both ends.

    Returns (s, s', s'', s''').
    """
    bl = np.array([1.0, t0, duration, 0.0, 0.0])
    return kernels.blend_chain(bl, float(t))


def landing_reference(
    t: float, xc_est, profile: TrajectoryProfile, initial_altitude: float
) -> np.ndarray:
    """Target position: vehicle position horizontally, blended altitude vertically."""
    xc1 = np.asarray(xc_est, dtype=float)
    zero = np.zeros(3)
    pr = np.empty(3)
    prd = np.empty(3)
    prdd = np.empty(3)
    prddd = np.empty(3)
    kernels.target_chain(
        profile.blend_packed(initial_altitude),
        float(t),
        xc1,
        zero,
        zero,
        zero,
        pr,
        prd,
        prdd,
        prddd,
    )
    return pr


def target_chain(
    t: float,
    xc1,
    xc2,
    xc3,
    sigma_xc,
    profile: TrajectoryProfile,
    initial_altitude: float,
):
    """Target position and first three derivatives from a reference chain."""
    pr = np.empty(3)
    prd = np.empty(3)
    prdd = np.empty(3)
    prddd = np.empty(3)
    kernels.target_chain(
        profile.blend_packed(initial_altitude),
        float(t),
        np.asarray(xc1, float),
        np.asarray(xc2, float),
        np.asarray(xc3, float),
        np.asarray(sigma_xc, float),
        pr,
        prd,
        prdd,
        prddd,
    )
    return pr, prd, prdd, prddd
