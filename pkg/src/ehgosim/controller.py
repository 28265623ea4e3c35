"""Feedback-linearizing controllers and the output-feedback pipeline.

The translational loop turns a forcing vector into roll/pitch references
and a thrust command by inverting the thrust-direction geometry; the
rotational loop cancels the Euler-rate drift exactly. Output feedback runs
the same laws on observer estimates that are saturated entrywise first, so
the observer's peaking transient never reaches the actuators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .actuators import MixingMatrix
from .errors import DegenerateForcing, SingularOrientation, ValidationError
from .params import ControlGains, VehicleParams

DEFAULT_ANGLE_MARGIN = 0.35  # rad; reference angles stay |.| < pi/2 - margin


def _vec3(x, name):
    v = np.asarray(x, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"{name} must have shape (3,)")
    return v


@dataclass(frozen=True)
class EstimateBundle:
    """Named partition of the 30 extended states used by the controller."""

    rho1_hat: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rho2_hat: np.ndarray = field(default_factory=lambda: np.zeros(3))
    sigma_rho_hat: np.ndarray = field(default_factory=lambda: np.zeros(3))
    xi1_hat: np.ndarray = field(default_factory=lambda: np.zeros(3))
    xi2_hat: np.ndarray = field(default_factory=lambda: np.zeros(3))
    varsigma_xi_hat: np.ndarray = field(default_factory=lambda: np.zeros(3))
    xc1_hat: np.ndarray = field(default_factory=lambda: np.zeros(3))
    xc2_hat: np.ndarray = field(default_factory=lambda: np.zeros(3))
    xc3_hat: np.ndarray = field(default_factory=lambda: np.zeros(3))
    sigma_xc_hat: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            object.__setattr__(self, name, _vec3(getattr(self, name), name))


@dataclass(frozen=True)
class SaturationBounds:
    """Per-entry saturation levels for the 30 extended-state estimates."""

    k_chi: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.k_chi, dtype=float)
        if k.shape != (kernels.CHI_DIM,):
            raise ValidationError("bounds.k_chi", f"shape ({kernels.CHI_DIM},)")
        if (k <= 0.0).any():
            raise ValidationError("bounds.k_chi", "strictly positive entries")
        object.__setattr__(self, "k_chi", k)

    @staticmethod
    def uniform(value: float) -> "SaturationBounds":
        return SaturationBounds(np.full(kernels.CHI_DIM, float(value)))


@dataclass(frozen=True)
class ControlCommand:
    """Thrust, torques, attitude references and allocated rotor commands."""

    u_f: float
    tau: np.ndarray
    theta_r: np.ndarray
    thetar_dot: np.ndarray
    omega_des: np.ndarray


@dataclass(frozen=True)
class StepDiagnostics:
    """Per-step event counters: saturation, allocation clamps, margin hits."""

    saturation_hits: int = 0
    allocation_clamps: int = 0
    margin_hits: int = 0
    held_previous: bool = False


def forcing(est: EstimateBundle, gains: ControlGains) -> np.ndarray:
    """Translational forcing from tracking-error and disturbance estimates."""
    return (
        -gains.gamma1 * est.rho1_hat
        - gains.gamma2 * est.rho2_hat
        - est.sigma_rho_hat
        + est.xc3_hat
    )


def translational_control(f_t, m: float, delta: float = DEFAULT_ANGLE_MARGIN):
    """Invert the translational model: (phi_r, theta_r, psi_r, u_fd).

    Raises :class:`DegenerateForcing` when the commanded thrust direction is
    undefined. Reference angles outside the margin ``pi/2 - delta`` are
    clamped (the caller sees the event through control_step diagnostics).
    """
    f_t = _vec3(f_t, "f_t")
    phi_r, theta_r, u_fd, _margin, degen = kernels.translational_ctrl(
        f_t, float(m), float(delta)
    )
    if degen:
        raise DegenerateForcing("forcing too close to (0, *, g): thrust direction undefined")
    return phi_r, theta_r, 0.0, u_fd


def reference_rates(f_t, f_t_dot) -> np.ndarray:
    """Analytic (phi_r_dot, theta_r_dot, 0) from the forcing and its rate."""
    f_t = _vec3(f_t, "f_t")
    f_t_dot = _vec3(f_t_dot, "f_t_dot")
    dphi, dtheta, degen = kernels.reference_rates_kernel(f_t, f_t_dot)
    if degen:
        raise DegenerateForcing("forcing magnitude too small for reference rates")
    return np.array([dphi, dtheta, 0.0])


def f_t_dot_estimate(
    est: EstimateBundle,
    u_f: float,
    theta_r,
    gains: ControlGains,
    params: VehicleParams,
    include_ref_jerk: bool = True,
) -> np.ndarray:
    """Forcing rate with the (unknown) disturbance derivative set to zero.

    The reference-jerk term comes from the observer's extended chain; the
    switch exists because the underlying model leaves it optional.
    """
    theta_r = _vec3(theta_r, "theta_r")
    r3 = np.empty(3)
    kernels.r3_vec(theta_r[0], theta_r[1], theta_r[2], r3)
    bracket = (
        -(u_f / params.mass) * r3
        + np.array([0.0, 0.0, kernels.GRAV])
        + est.sigma_rho_hat
        - est.xc3_hat
    )
    out = -gains.gamma1 * est.rho2_hat - gains.gamma2 * bracket
    if include_ref_jerk:
        out = out + est.sigma_xc_hat
    return out


def rotational_control(
    est: EstimateBundle,
    theta1,
    thetar_dot_bar,
    gains: ControlGains,
    params: VehicleParams,
    tol_sing: float = 1e-6,
) -> np.ndarray:
    """Feedback-linearizing torque from estimated rotational errors."""
    theta1 = _vec3(theta1, "theta1")
    lim = 0.5 * math.pi - tol_sing
    if abs(theta1[0]) >= lim or abs(theta1[1]) >= lim:
        raise SingularOrientation("attitude inside singularity guard band")
    tau = np.empty(3)
    kernels.rotational_ctrl(
        est.xi1_hat,
        est.xi2_hat,
        est.varsigma_xi_hat,
        theta1[0],
        theta1[1],
        _vec3(thetar_dot_bar, "thetar_dot_bar"),
        gains.beta1,
        gains.beta2,
        params.inertia,
        params.inertia_inv,
        tau,
    )
    return tau


def saturate_estimates(raw: EstimateBundle, bounds: SaturationBounds) -> EstimateBundle:
    """Entrywise saturation of every estimate; idempotent by construction."""
    from .observer import bundle_from_chi, pack_estimates

    chi = pack_estimates(raw)
    out = np.empty_like(chi)
    kernels.saturate_chi(chi, bounds.k_chi, out)
    return bundle_from_chi(out)


@dataclass
class Controller:
    """Output-feedback pipeline with a one-deep previous-command cache.

    The cache implements the hold-previous policy on degenerate forcing, so
    a controller instance is confined to a single stepping sequence.
    """

    gains: ControlGains
    bounds: SaturationBounds
    mixer: MixingMatrix
    params: VehicleParams
    delta: float = DEFAULT_ANGLE_MARGIN
    include_ref_jerk: bool = True
    _previous: ControlCommand | None = None

    def control_step(self, measurements, observer_estimates: EstimateBundle):
        """One pipeline pass; returns (ControlCommand, StepDiagnostics).

        ``measurements`` must expose ``theta1_meas``. Degenerate forcing is
        downgraded to holding the previous command with a diagnostic.
        """
        from .observer import pack_estimates

        chi_raw = pack_estimates(observer_estimates)
        th1m = _vec3(measurements.theta1_meas, "theta1_meas")
        gains_vec = np.array(
            [
                self.gains.beta1,
                self.gains.beta2,
                self.gains.gamma1,
                self.gains.gamma2,
                self.delta,
            ]
        )
        tau = np.empty(3)
        omega_des = np.empty(self.mixer.n_rotors)
        (
            u_fd,
            phi_r,
            theta_r,
            dphi_r,
            dtheta_r,
            sat_hits,
            margin,
            clamp,
            degen,
            status,
        ) = kernels.output_feedback_ctrl(
            chi_raw,
            self.bounds.k_chi,
            th1m,
            gains_vec,
            1 if self.include_ref_jerk else 0,
            self.params.mass,
            self.params.inertia,
            self.params.inertia_inv,
            self.params.thrust_coeff,
            self.mixer.M_pinv,
            tau,
            omega_des,
        )
        if status == kernels.SINGULAR:
            raise SingularOrientation("measured attitude inside singularity guard band")
        if degen:
            if self._previous is None:
                hover = np.full(
                    self.mixer.n_rotors,
                    self.params.hover_rate(),
                )
                self._previous = ControlCommand(
                    u_f=self.params.mass * kernels.GRAV,
                    tau=np.zeros(3),
                    theta_r=np.zeros(3),
                    thetar_dot=np.zeros(3),
                    omega_des=hover,
                )
            diag = StepDiagnostics(
                saturation_hits=int(sat_hits), margin_hits=int(margin), held_previous=True
            )
            return self._previous, diag
        cmd = ControlCommand(
            u_f=float(u_fd),
            tau=tau,
            theta_r=np.array([phi_r, theta_r, 0.0]),
            thetar_dot=np.array([dphi_r, dtheta_r, 0.0]),
            omega_des=omega_des,
        )
        self._previous = cmd
        diag = StepDiagnostics(
            saturation_hits=int(sat_hits),
            allocation_clamps=1 if clamp > 1e-9 else 0,
            margin_hits=int(margin),
        )
        return cmd, diag
