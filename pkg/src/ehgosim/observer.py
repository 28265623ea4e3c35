"""Multi-input multi-output extended high-gain observer.

Thirty extended states in three blocks

* translational: position error, velocity error, lumped disturbance (9)
* rotational: angle error, rate error, lumped disturbance (9)
* reference: vehicle position, velocity, acceleration, jerk (12)

plus ``n`` simulated rotor rates. Injection gains scale as ``alpha_j / eps**j``
per block, so estimates converge on the fast time scale at the price of an
``O(1/eps**(rho-1))`` peaking transient, which the controller suppresses by
saturating estimates before use.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .controller import EstimateBundle
from .errors import NotHurwitz, SingularOrientation, ValidationError
from .params import VehicleParams
from .actuators import MixingMatrix
from .reference import TrajectoryProfile

BLOCK_ORDERS = (3, 3, 4)

CHI_SLICES = {
    "rho1_hat": slice(0, 3),
    "rho2_hat": slice(3, 6),
    "sigma_rho_hat": slice(6, 9),
    "xi1_hat": slice(9, 12),
    "xi2_hat": slice(12, 15),
    "varsigma_xi_hat": slice(15, 18),
    "xc1_hat": slice(18, 21),
    "xc2_hat": slice(21, 24),
    "xc3_hat": slice(24, 27),
    "sigma_xc_hat": slice(27, 30),
}


def _check_hurwitz(alpha, order: int, block: int) -> None:
    if len(alpha) != order:
        raise ValidationError(f"observer.alpha{block}", f"{order} coefficients")
    roots = np.roots(np.concatenate([[1.0], np.asarray(alpha, dtype=float)]))
    worst = roots[np.argmax(roots.real)]
    if worst.real >= 0.0:
        raise NotHurwitz(
            f"observer block {block}: root {worst:.4g} of the characteristic "
            "polynomial has nonnegative real part"
        )


@dataclass(frozen=True)
class ObserverGains:
    """Injection-gain design: per-block Hurwitz coefficients and epsilon."""

    alpha1: tuple = (3.0, 3.0, 1.0)
    alpha2: tuple = (3.0, 3.0, 1.0)
    alpha3: tuple = (4.0, 6.0, 4.0, 1.0)
    epsilon: float = 0.01

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise ValidationError("observer.epsilon", "in (0, 1)")
        for i, (alpha, order) in enumerate(
            zip((self.alpha1, self.alpha2, self.alpha3), BLOCK_ORDERS), start=1
        ):
            _check_hurwitz(alpha, order, i)
            object.__setattr__(self, f"alpha{i}", tuple(float(a) for a in alpha))

    def injection_coefficients(self) -> np.ndarray:
        """Flat [alpha_j / eps**j] for blocks 1..3 (3 + 3 + 4 entries)."""
        out = []
        for alpha in (self.alpha1, self.alpha2, self.alpha3):
            out.extend(a / self.epsilon ** (j + 1) for j, a in enumerate(alpha))
        return np.array(out)


def build_gains(alpha, epsilon: float) -> ObserverGains:
    """Validated gains from three coefficient lists of lengths (3, 3, 4)."""
    if len(alpha) != 3:
        raise ValidationError("observer.alpha", "three coefficient lists")
    return ObserverGains(
        alpha1=tuple(alpha[0]), alpha2=tuple(alpha[1]), alpha3=tuple(alpha[2]),
        epsilon=float(epsilon),
    )


@dataclass(frozen=True)
class ObserverState:
    """Extended-state estimate vector plus simulated rotor rates."""

    chi_hat: np.ndarray
    omega_hat: np.ndarray

    def __post_init__(self):
        chi = np.asarray(self.chi_hat, dtype=float)
        if chi.shape != (kernels.CHI_DIM,):
            raise ValidationError("observer.chi_hat", f"shape ({kernels.CHI_DIM},)")
        om = np.asarray(self.omega_hat, dtype=float)
        object.__setattr__(self, "chi_hat", chi)
        object.__setattr__(self, "omega_hat", om)


@dataclass(frozen=True)
class MeasurementFrame:
    """Sampled outputs: multirotor position/attitude and vehicle position."""

    p1_meas: np.ndarray
    theta1_meas: np.ndarray
    xc1_meas: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for name in ("p1_meas", "theta1_meas", "xc1_meas"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,) or not np.isfinite(v).all():
                raise ValidationError(f"measurement.{name}", "finite 3-vector")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class ObserverDerivative:
    chi_hat: np.ndarray
    omega_hat: np.ndarray


def observer_derivative(
    obs: ObserverState,
    meas: MeasurementFrame,
    cmd,
    gains: ObserverGains,
    params: VehicleParams,
    mixer: MixingMatrix,
    profile: TrajectoryProfile | None = None,
    initial_altitude: float = 0.0,
) -> ObserverDerivative:
    """Observer vector field at the given measurement and held command.

    ``cmd`` must carry ``theta_r``, ``thetar_dot`` and ``omega_des`` so the
    measured tracking errors can be formed. With ``profile=None`` the target
    is the estimated vehicle position itself; otherwise the landing blend
    shapes the vertical target.
    """
    if profile is None:
        bl = np.array([0.0, 0.0, 1.0, 0.0, 0.0])
    else:
        bl = profile.blend_packed(initial_altitude)
    dchi = np.empty(kernels.CHI_DIM)
    domega = np.empty(len(obs.omega_hat))
    status = kernels.observer_deriv_kernel(
        obs.chi_hat,
        obs.omega_hat,
        float(meas.t),
        meas.p1_meas,
        meas.theta1_meas,
        meas.xc1_meas,
        np.asarray(cmd.theta_r, float),
        np.asarray(cmd.thetar_dot, float),
        np.asarray(cmd.omega_des, float),
        gains.injection_coefficients(),
        params.mass,
        params.inertia,
        params.inertia_inv,
        params.thrust_coeff,
        params.tau_m,
        mixer.M,
        bl,
        dchi,
        domega,
    )
    if status == kernels.SINGULAR:
        raise SingularOrientation("measured attitude inside singularity guard band")
    return ObserverDerivative(chi_hat=dchi, omega_hat=domega)


def bundle_from_chi(chi) -> EstimateBundle:
    """Named estimate bundle from a flat extended-state vector."""
    chi = np.asarray(chi, dtype=float)
    return EstimateBundle(**{name: chi[s].copy() for name, s in CHI_SLICES.items()})


def extract_estimates(obs: ObserverState) -> EstimateBundle:
    """Slice the extended-state vector into the named estimate bundle."""
    return bundle_from_chi(obs.chi_hat)


def pack_estimates(bundle: EstimateBundle) -> np.ndarray:
    """Inverse of :func:`extract_estimates`."""
    chi = np.empty(kernels.CHI_DIM)
    for name, s in CHI_SLICES.items():
        chi[s] = getattr(bundle, name)
    return chi


def scaled_error(chi, chi_hat, gains: ObserverGains) -> np.ndarray:
    """Estimation error in the fast-time-scale coordinates.

    Slot j of a block of order rho is divided by eps**(rho - j), making the
    transient analysis uniform across slots.
    """
    chi = np.asarray(chi, dtype=float)
    chi_hat = np.asarray(chi_hat, dtype=float)
    eta = np.empty(kernels.CHI_DIM)
    idx = 0
    for order in BLOCK_ORDERS:
        for j in range(1, order + 1):
            scale = gains.epsilon ** (order - j)
            for _ in range(3):
                eta[idx] = (chi[idx] - chi_hat[idx]) / scale
                idx += 1
    return eta


def initial_observer_state(
    meas: MeasurementFrame,
    cmd_theta_r,
    params: VehicleParams,
    init_mode: str = "measured",
    profile: TrajectoryProfile | None = None,
    initial_altitude: float = 0.0,
) -> ObserverState:
    """Startup estimate: measured positions/orientations in the first slots.

    ``init_mode='zeros'`` skips the measurement seeding (used to exercise
    observer convergence from a deliberately wrong initial estimate).
    Simulated rotors start at the hover allocation.
    """
    chi = np.zeros(kernels.CHI_DIM)
    if init_mode == "measured":
        from .reference import landing_reference

        theta_r = np.asarray(cmd_theta_r, dtype=float)
        xi1 = meas.theta1_meas - theta_r
        xi1[2] = kernels.wrap_angle(xi1[2])
        if profile is None:
            target = meas.xc1_meas
        else:
            target = landing_reference(meas.t, meas.xc1_meas, profile, initial_altitude)
        chi[CHI_SLICES["xc1_hat"]] = meas.xc1_meas
        chi[CHI_SLICES["rho1_hat"]] = meas.p1_meas - target
        chi[CHI_SLICES["xi1_hat"]] = xi1
    elif init_mode != "zeros":
        raise ValidationError("observer.init_mode", "'measured' or 'zeros'")
    omega_hat = np.full(params.n_rotors, params.hover_rate())
    return ObserverState(chi_hat=chi, omega_hat=omega_hat)
