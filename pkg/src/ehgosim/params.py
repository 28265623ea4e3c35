"""Vehicle parameters and controller gains."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

GRAVITY = 9.81  # m/s^2, inertial z axis points down


@dataclass(frozen=True)
class VehicleParams:
    """Physical constants of the multirotor.

    ``inertia`` is the 3x3 body inertia matrix (symmetric positive-definite),
    ``thrust_coeff`` maps squared rotor rate to force (N s^2), ``tau_m`` is
    the BLDC/ESC lag time constant.
    """

    mass: float = 1.2
    inertia: np.ndarray = field(
        default_factory=lambda: np.diag([0.015, 0.015, 0.025])
    )
    thrust_coeff: float = 1.8e-5
    tau_m: float = 0.01
    n_rotors: int = 4
    arm_length: float = 0.20
    torque_ratio: float = 0.012

    def __post_init__(self):
        J = np.asarray(self.inertia, dtype=float)
        if J.shape != (3, 3):
            raise ValidationError("vehicle.inertia", "3x3 matrix")
        if not np.allclose(J, J.T, atol=1e-12):
            raise ValidationError("vehicle.inertia", "symmetric")
        if np.linalg.eigvalsh(J).min() <= 0.0:
            raise ValidationError("vehicle.inertia", "positive definite")
        for name in ("mass", "thrust_coeff", "tau_m", "arm_length", "torque_ratio"):
            if getattr(self, name) <= 0.0:
                raise ValidationError(f"vehicle.{name}", "> 0")
        if self.n_rotors not in (4, 6, 8):
            raise ValidationError("vehicle.n_rotors", "one of {4, 6, 8}")
        object.__setattr__(self, "inertia", J)

    @property
    def inertia_inv(self) -> np.ndarray:
        return np.linalg.inv(self.inertia)

    def hover_rate(self) -> float:
        """Rotor rate at which total thrust balances weight."""
        return float(
            np.sqrt(self.mass * GRAVITY / (self.n_rotors * self.thrust_coeff))
        )


@dataclass(frozen=True)
class ControlGains:
    """Feedback-linearization gains; positivity makes both error systems Hurwitz."""

    beta1: float = 16.0
    beta2: float = 8.0
    gamma1: float = 4.0
    gamma2: float = 4.0

    def __post_init__(self):
        for name in ("beta1", "beta2", "gamma1", "gamma2"):
            if getattr(self, name) <= 0.0:
                raise ValidationError(f"gains.{name}", "> 0")

    def rotational_matrix(self) -> np.ndarray:
        """Closed-loop matrix of the linearized attitude error system."""
        return np.block(
            [
                [np.zeros((3, 3)), np.eye(3)],
                [-self.beta1 * np.eye(3), -self.beta2 * np.eye(3)],
            ]
        )

    def translational_matrix(self) -> np.ndarray:
        """Closed-loop matrix of the linearized position error system."""
        return np.block(
            [
                [np.zeros((3, 3)), np.eye(3)],
                [-self.gamma1 * np.eye(3), -self.gamma2 * np.eye(3)],
            ]
        )
