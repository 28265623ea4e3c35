"""Continuous-time truth model of the multirotor.

Euler-angle kinematics, rotational and translational rigid-body dynamics
with lumped disturbances, and error-coordinate transforms. Inertial z
points down, so hover altitude is a negative z value and gravity enters as
``+g`` on the z velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NegativeThrust, SingularOrientation
from .params import VehicleParams
from .signals import Disturbance

GRAVITY = kernels.GRAV


def _vec3(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"{name} must have shape (3,), got {v.shape}")
    return v


def _check_attitude(theta1: np.ndarray, tol_sing: float) -> None:
    lim = 0.5 * math.pi - tol_sing
    if abs(theta1[0]) >= lim or abs(theta1[1]) >= lim:
        raise SingularOrientation(
            f"roll/pitch within {tol_sing} rad of the pi/2 singularity: "
            f"phi={theta1[0]:.6f}, theta={theta1[1]:.6f}"
        )


@dataclass(frozen=True)
class RigidBodyState:
    """Position, velocity, Euler angles and Euler rates in the inertial frame."""

    p1: np.ndarray
    p2: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p1", _vec3(self.p1, "p1"))
        object.__setattr__(self, "p2", _vec3(self.p2, "p2"))
        th1 = _vec3(self.theta1, "theta1").copy()
        _check_attitude(th1, 0.0)
        th1[2] = kernels.wrap_angle(th1[2])
        object.__setattr__(self, "theta1", th1)
        object.__setattr__(self, "theta2", _vec3(self.theta2, "theta2"))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p1, self.p2, self.theta1, self.theta2])

    @staticmethod
    def from_vector(y: np.ndarray) -> "RigidBodyState":
        y = np.asarray(y, dtype=float)
        return RigidBodyState(y[0:3], y[3:6], y[6:9], y[9:12])


@dataclass(frozen=True)
class StateDerivative:
    """Time derivative of a RigidBodyState (no attitude invariants apply)."""

    p1: np.ndarray
    p2: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p1, self.p2, self.theta1, self.theta2])


@dataclass(frozen=True)
class ErrorState:
    """Translational and rotational tracking errors."""

    rho1: np.ndarray
    rho2: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray

    def __post_init__(self):
        for name in ("rho1", "rho2", "xi1", "xi2"):
            object.__setattr__(self, name, _vec3(getattr(self, name), name))


def psi(theta1, tol_sing: float = 1e-6) -> np.ndarray:
    """Euler-rate matrix mapping body rates to Euler-angle rates."""
    theta1 = _vec3(theta1, "theta1")
    _check_attitude(theta1, tol_sing)
    out = np.empty((3, 3))
    kernels.psi_mat(theta1[0], theta1[1], out)
    return out


def psi_inv(theta1, tol_sing: float = 1e-6) -> np.ndarray:
    """Analytic inverse of :func:`psi`."""
    theta1 = _vec3(theta1, "theta1")
    _check_attitude(theta1, tol_sing)
    out = np.empty((3, 3))
    kernels.psi_inv_mat(theta1[0], theta1[1], out)
    return out


def psi_dot(theta1, theta1_dot, tol_sing: float = 1e-6) -> np.ndarray:
    """Entrywise time derivative of :func:`psi` along the given angle rates."""
    theta1 = _vec3(theta1, "theta1")
    theta1_dot = _vec3(theta1_dot, "theta1_dot")
    _check_attitude(theta1, tol_sing)
    out = np.empty((3, 3))
    kernels.psi_dot_mat(theta1[0], theta1[1], theta1_dot[0], theta1_dot[1], out)
    return out


def r3(theta1) -> np.ndarray:
    """Unit thrust-direction vector; total function of the angles."""
    theta1 = _vec3(theta1, "theta1")
    out = np.empty(3)
    kernels.r3_vec(theta1[0], theta1[1], theta1[2], out)
    return out


def rotational_drift(
    xi: ErrorState, theta1, thetar_dot, params: VehicleParams, tol_sing: float = 1e-6
) -> np.ndarray:
    """Drift term of the rotational tracking-error dynamics."""
    theta1 = _vec3(theta1, "theta1")
    thetar_dot = _vec3(thetar_dot, "thetar_dot")
    _check_attitude(theta1, tol_sing)
    rate = xi.xi2 + thetar_dot
    out = np.empty(3)
    kernels.rot_drift(rate, theta1[0], theta1[1], params.inertia, params.inertia_inv, out)
    return out


def rigid_body_derivative(
    state: RigidBodyState,
    u_f: float,
    tau,
    dist: Disturbance,
    t: float,
    params: VehicleParams,
    tol_sing: float = 1e-6,
) -> StateDerivative:
    """Rigid-body dynamics under total thrust, torques and lumped disturbances."""
    if u_f < 0.0:
        raise NegativeThrust(f"u_f = {u_f}")
    _check_attitude(state.theta1, tol_sing)
    tau = _vec3(tau, "tau")
    out = np.empty(12)
    status = kernels.rigid_deriv(
        state.as_vector(),
        float(u_f),
        tau,
        dist.sigma_rho.value(t),
        dist.sigma_xi.value(t),
        params.mass,
        params.inertia,
        params.inertia_inv,
        out,
    )
    if status == kernels.SINGULAR:
        raise SingularOrientation("attitude inside singularity guard band")
    return StateDerivative(out[0:3], out[3:6], out[6:9], out[9:12])


def error_coordinates(
    state: RigidBodyState, p_r, pr_dot, theta_r, thetar_dot
) -> ErrorState:
    """Tracking errors relative to a reference; yaw error wrapped to (-pi, pi]."""
    p_r = _vec3(p_r, "p_r")
    pr_dot = _vec3(pr_dot, "pr_dot")
    theta_r = _vec3(theta_r, "theta_r")
    thetar_dot = _vec3(thetar_dot, "thetar_dot")
    xi1 = state.theta1 - theta_r
    xi1[2] = kernels.wrap_angle(xi1[2])
    return ErrorState(
        rho1=state.p1 - p_r,
        rho2=state.p2 - pr_dot,
        xi1=xi1,
        xi2=state.theta2 - thetar_dot,
    )
