"""BLDC actuator lag, rotor force law and thrust/torque mixing.

Rotor ``i`` produces force ``b * omega_i**2``. A 4 x n geometry matrix maps
squared rates to ``[u_f, tau_x, tau_y, tau_z]``; its minimum-norm right
inverse performs control allocation. Arms are evenly spaced in an
X configuration (no arm on the body x axis), which keeps the matrix full
rank for n in {4, 6, 8}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InfeasibleWrench, RankDeficientMixer
from .params import VehicleParams


@dataclass(frozen=True)
class ActuatorState:
    """Rotor angular rates, each nonnegative."""

    omega: np.ndarray

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float)
        if om.ndim != 1:
            raise ValueError("omega must be a vector")
        if (om < 0.0).any():
            raise ValueError("rotor rates must be nonnegative")
        object.__setattr__(self, "omega", om)


@dataclass(frozen=True)
class MixingMatrix:
    """Geometry matrix and its cached minimum-norm right inverse."""

    M: np.ndarray
    M_pinv: np.ndarray

    @property
    def n_rotors(self) -> int:
        return self.M.shape[1]


def build_mixer(params: VehicleParams) -> MixingMatrix:
    """Mixing matrix for an X configuration with evenly spaced arms.

    Row 0 sums thrust; rows 1-2 are roll/pitch moment arms from the arm
    azimuths; row 3 alternates the drag-torque ratio. The pseudo-inverse is
    computed once via the normal equations (M is tiny and constant).
    """
    n = params.n_rotors
    length = params.arm_length
    d = params.torque_ratio
    azimuth = (2.0 * np.arange(n) + 1.0) * math.pi / n
    M = np.empty((4, n))
    M[0] = 1.0
    M[1] = -length * np.sin(azimuth)
    M[2] = length * np.cos(azimuth)
    M[3] = d * (-1.0) ** np.arange(n)
    gram = M @ M.T
    if np.linalg.matrix_rank(M, tol=1e-10) < 4:
        raise RankDeficientMixer(f"mixer rank {np.linalg.matrix_rank(M)} < 4 for n={n}")
    M_pinv = np.linalg.solve(gram, M).T
    residual = np.abs(M @ M_pinv - np.eye(4)).max()
    if residual > 1e-10:
        raise RankDeficientMixer(f"pseudo-inverse residual {residual:.2e} > 1e-10")
    return MixingMatrix(M=M, M_pinv=M_pinv)


def mix_forward(omega, mixer: MixingMatrix, b: float) -> np.ndarray:
    """Wrench ``b * M * omega**2``; first entry is the total thrust."""
    om = omega.omega if isinstance(omega, ActuatorState) else np.asarray(omega, float)
    if (om < 0.0).any():
        raise ValueError("rotor rates must be nonnegative")
    out = np.empty(4)
    kernels.mix_forward_kernel(mixer.M, b, om, out)
    return out


def allocate(
    wrench_des, mixer: MixingMatrix, b: float, clamp_report_tol: float = 1e-9
) -> np.ndarray:
    """Desired rotor rates reproducing the wrench (minimum-norm for n > 4).

    Negative squared rates are clamped to zero before the square root. When
    the largest clamped value exceeds ``clamp_report_tol`` the allocation is
    saturated and :class:`InfeasibleWrench` is raised carrying the clamped
    fallback, so callers may log and continue.
    """
    w = np.asarray(wrench_des, dtype=float)
    if w.shape != (4,):
        raise ValueError("wrench must have shape (4,)")
    if w[0] < 0.0:
        raise ValueError("thrust component of the wrench must be nonnegative")
    omega_des = np.empty(mixer.n_rotors)
    clamp = kernels.allocate_kernel(mixer.M_pinv, b, w, omega_des)
    if clamp > clamp_report_tol:
        raise InfeasibleWrench(
            f"allocation clamped a squared rate of {clamp:.3e}",
            omega_des=omega_des,
            clamp_magnitude=float(clamp),
        )
    return omega_des


def actuator_derivative(omega, omega_des, tau_m: float) -> np.ndarray:
    """First-order lag toward the commanded rates."""
    if tau_m <= 0.0:
        raise ValueError("tau_m must be positive")
    om = omega.omega if isinstance(omega, ActuatorState) else np.asarray(omega, float)
    return (np.asarray(omega_des, dtype=float) - om) / tau_m
