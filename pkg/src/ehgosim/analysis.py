"""Numeric stability certificates and convergence experiments.

Solves the 6x6 Lyapunov equations of the linearized error loops, derives
the domain-of-operation constants, builds composite-Lyapunov cascade
weights, and runs the empirical epsilon sweep that exhibits the observer's
O(eps) steady-state estimation error.
"""

from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import IllConditioned, NotHurwitz, ValidationError
from .params import ControlGains, VehicleParams
from .sim import BLOCKS, ScenarioConfig, SimLog, compute_saturation_bounds, run_scenario
from .signals import Disturbance


@dataclass(frozen=True)
class LyapunovCertificate:
    """Solution of P A + A^T P = -I with its conditioning evidence."""

    P: np.ndarray
    residual_norm: float
    lambda_min: float
    lambda_max: float


@dataclass(frozen=True)
class DomainConstants:
    """Sublevel-set sizes restricting operation away from singularities."""

    delta: float
    c_xi: float
    c_rho: float
    rho_max: float
    L_e: float


@dataclass(frozen=True)
class CascadeWeight:
    """Composite-Lyapunov weight b and the certified quadratic form Q."""

    b: float
    Q: np.ndarray
    lambda_min: float


def _sym_basis(dim: int):
    pairs = [(i, j) for i in range(dim) for j in range(i, dim)]
    mats = []
    for i, j in pairs:
        e = np.zeros((dim, dim))
        e[i, j] = 1.0
        e[j, i] = 1.0
        mats.append(e)
    return pairs, mats


def solve_lyapunov(A: np.ndarray) -> LyapunovCertificate:
    """Solve P A + A^T P = -I for symmetric P on the 21-entry vectorization.

    The matrix must be Hurwitz; the certificate records the residual and the
    eigenvalue range of P (positive definiteness).
    """
    A = np.asarray(A, dtype=float)
    if A.shape != (6, 6):
        raise ValueError("A must be 6x6")
    eigs = np.linalg.eigvals(A)
    if eigs.real.max() >= 0.0:
        raise NotHurwitz(f"eigenvalue {eigs[np.argmax(eigs.real)]:.4g} not in open left half plane")
    pairs, mats = _sym_basis(6)
    m = len(pairs)
    lhs = np.empty((m, m))
    for col, e in enumerate(mats):
        img = e @ A + A.T @ e
        lhs[:, col] = [img[i, j] for i, j in pairs]
    rhs = np.array([-1.0 if i == j else 0.0 for i, j in pairs])
    coeffs = np.linalg.solve(lhs, rhs)
    P = np.zeros((6, 6))
    for c, e in zip(coeffs, mats):
        P += c * e
    residual = float(np.abs(P @ A + A.T @ P + np.eye(6)).max())
    if residual > 1e-10:
        raise IllConditioned(f"Lyapunov residual {residual:.2e} > 1e-10")
    lam = np.linalg.eigvalsh(P)
    if lam[0] <= 0.0:
        raise IllConditioned(f"P not positive definite, lambda_min = {lam[0]:.2e}")
    return LyapunovCertificate(
        P=P, residual_norm=residual, lambda_min=float(lam[0]), lambda_max=float(lam[-1])
    )


def rotational_certificate(gains: ControlGains) -> LyapunovCertificate:
    return solve_lyapunov(gains.rotational_matrix())


def translational_certificate(gains: ControlGains) -> LyapunovCertificate:
    return solve_lyapunov(gains.translational_matrix())


def estimate_lipschitz_e_theta(
    params: VehicleParams, u_f_max: float, delta: float, grid: int = 9
) -> float:
    """Numeric Lipschitz bound of the attitude-induced thrust error.

    Maximizes ||R3(theta_r + xi1) - R3(theta_r)|| * u_f_max / (m ||xi1||)
    over reference angles in the margin set and ||xi1|| <= delta, then adds
    a 10% safety margin.
    """
    if u_f_max < 0.0 or delta <= 0.0:
        raise ValueError("u_f_max >= 0 and delta > 0 required")
    if u_f_max == 0.0:
        return 0.0
    lim = 0.5 * math.pi - delta
    angles = np.linspace(-lim, lim, grid)
    dirs = []
    for dx in (-1.0, 0.0, 1.0):
        for dy in (-1.0, 0.0, 1.0):
            for dz in (-1.0, 0.0, 1.0):
                v = np.array([dx, dy, dz])
                norm = np.linalg.norm(v)
                if norm > 0.0:
                    dirs.append(v / norm)
    radii = (delta, 0.5 * delta, 0.1 * delta)
    base = np.empty(3)
    pert = np.empty(3)
    worst = 0.0
    for phi_r in angles:
        for theta_r in angles:
            kernels.r3_vec(phi_r, theta_r, 0.0, base)
            for d in dirs:
                for r in radii:
                    xi = r * d
                    kernels.r3_vec(phi_r + xi[0], theta_r + xi[1], xi[2], pert)
                    ratio = np.linalg.norm(pert - base) / r
                    if ratio > worst:
                        worst = ratio
    return 1.1 * worst * u_f_max / params.mass


def domain_constants(gains: ControlGains, delta: float, L_e: float) -> DomainConstants:
    """Sublevel-set constants keeping the closed loop away from singularities."""
    if not (0.0 < delta < 0.5 * math.pi):
        raise ValueError("delta must lie in (0, pi/2)")
    if L_e <= 0.0:
        raise ValueError("L_e must be positive")
    c_xi = 0.9 * (gains.beta1 + 1.0) * delta * delta / (2.0 * gains.beta2)
    cert_rho = translational_certificate(gains)
    rho_max = 2.0 * L_e * delta * cert_rho.lambda_max
    c_rho = cert_rho.lambda_max * rho_max * rho_max
    return DomainConstants(delta=delta, c_xi=c_xi, c_rho=c_rho, rho_max=rho_max, L_e=L_e)


def cascade_weight(c: float, k: float, L: float, c3: float) -> CascadeWeight:
    """Composite-Lyapunov weight at half the positive-definiteness bound.

    The admissible range is b < 4*c*c3 / (k*L)^2; taking the midpoint makes
    Q = [[b c, -b k L / 2], [-b k L / 2, c3]] strictly positive definite.
    """
    for name, value in (("c", c), ("k", k), ("L", L), ("c3", c3)):
        if value <= 0.0:
            raise ValueError(f"{name} must be positive")
    b = 0.5 * 4.0 * c * c3 / (k * L) ** 2
    Q = np.array([[b * c, -b * k * L / 2.0], [-b * k * L / 2.0, c3]])
    lam = float(np.linalg.eigvalsh(Q)[0])
    if lam <= 0.0:
        raise IllConditioned(f"cascade Q not positive definite, lambda_min = {lam:.2e}")
    return CascadeWeight(b=b, Q=Q, lambda_min=lam)


def fit_power_law(epsilons, errors):
    """Least-squares slope and intercept of log(error) vs log(epsilon)."""
    eps = np.asarray(epsilons, dtype=float)
    err = np.asarray(errors, dtype=float)
    if eps.size < 3:
        raise ValidationError("sweep.epsilons", ">= 3 surviving points")
    slope, intercept = np.polyfit(np.log(eps), np.log(err), 1)
    return float(slope), float(intercept)


@dataclass(frozen=True)
class SweepResult:
    epsilons: tuple
    errors: tuple
    block_errors: tuple
    slope: float
    intercept: float
    excluded: tuple


def _max_threads() -> int:
    raw = os.environ.get("EHGO_SIM_THREADS", "")
    try:
        cap = int(raw)
    except ValueError:
        cap = os.cpu_count() or 1
    return max(1, cap)


def epsilon_sweep(base_config: ScenarioConfig, epsilons) -> SweepResult:
    """Steady-state estimation error vs epsilon, with a log-log slope fit.

    Runs the scenario per epsilon (noise disabled, disturbances kept), using
    one shared state-feedback pre-pass for the saturation bounds. Diverged
    runs are excluded with a warning entry; the fit needs three survivors.
    """
    eps_list = [float(e) for e in epsilons]
    if len(eps_list) < 3:
        raise ValidationError("sweep.epsilons", ">= 3 values")
    for e in eps_list:
        if not (0.0 < e < 1.0):
            raise ValidationError("sweep.epsilons", "each in (0, 1)")
    from .sim import NoiseStd

    quiet = base_config.replace(noise=NoiseStd(0.0, 0.0, 0.0), mode="output_feedback")
    if quiet.saturation_bounds is None:
        bounds = compute_saturation_bounds(quiet).k_chi
    else:
        bounds = quiet.saturation_bounds

    def one(eps: float):
        observer = dataclasses.replace(quiet.observer, epsilon=eps)
        step = min(quiet.step, eps / 5.0)
        cfg = quiet.replace(observer=observer, step=step, saturation_bounds=bounds)
        log = run_scenario(cfg)
        from .sim import metrics as _metrics

        m = _metrics(log)
        return m.est_err_rms_total, m.est_err_rms_blocks

    results = {}
    excluded = []
    with ThreadPoolExecutor(max_workers=min(len(eps_list), _max_threads())) as pool:
        futures = {pool.submit(one, e): e for e in eps_list}
        for fut, e in futures.items():
            try:
                results[e] = fut.result()
            except Exception as exc:  # Diverged runs are excluded, not fatal
                excluded.append((e, f"{type(exc).__name__}: {exc}"))
    survivors = [e for e in eps_list if e in results]
    errors = [results[e][0] for e in survivors]
    blocks = [results[e][1] for e in survivors]
    slope, intercept = fit_power_law(survivors, errors)
    return SweepResult(
        epsilons=tuple(survivors),
        errors=tuple(errors),
        block_errors=tuple(blocks),
        slope=slope,
        intercept=intercept,
        excluded=tuple(excluded),
    )


@dataclass(frozen=True)
class CertifyReport:
    """Pointwise Lyapunov evidence extracted from a simulation log."""

    invariance_violations: int
    invariance_entry_index: int
    decrease_fraction: float
    decay_rate: float
    d1: float
    window: tuple
    v_xi_max_after_entry: float

    def lines(self) -> list:
        out = []
        for f in dataclasses.fields(self):
            out.append(f"{f.name} = {getattr(self, f.name)!r}")
        return out


def certify_log(
    log: SimLog,
    cert_xi: LyapunovCertificate,
    cert_rho: LyapunovCertificate,
    constants: DomainConstants,
    settle_time: float = 1.0,
    floor_factor: float = 100.0,
) -> CertifyReport:
    """Evaluate the composite Lyapunov function along a logged run.

    Reports (a) positive-invariance violations of {V_xi <= c_xi} after first
    entry, (b) the fraction of decreasing steps of V = d1 V_rho + V_xi over
    the decay window, and (c) the fitted exponential decay rate there. The
    decay window starts at ``settle_time`` and ends on first entry into the
    steady-state floor (``floor_factor`` times the median of the final
    quarter), where decrease statistics stop being informative.
    """
    xi = log.chi_true[:, 9:15]
    rho = log.chi_true[:, 0:6]
    v_xi = np.einsum("ni,ij,nj->n", xi, cert_xi.P, xi)
    v_rho = np.einsum("ni,ij,nj->n", rho, cert_rho.P, rho)
    k_grad = 2.0 * cert_rho.lambda_max
    d1 = cascade_weight(1.0, k_grad, constants.L_e, 1.0).b
    v = d1 * v_rho + v_xi
    inside = v_xi <= constants.c_xi
    if inside.any():
        entry = int(np.argmax(inside))
        violations = int((v_xi[entry:] > constants.c_xi).sum())
        v_max_after = float(v_xi[entry:].max())
    else:
        entry = -1
        violations = 0
        v_max_after = float("nan")
    rows = v.shape[0]
    start = min(rows - 2, int(round(settle_time / log.meta["step"])))
    floor = floor_factor * float(np.median(v[(3 * rows) // 4 :]))
    below = np.nonzero(v[start:] <= floor)[0]
    end = (start + int(below[0])) if below.size else rows - 1
    if end - start < 2:
        end = min(rows - 1, start + 2)
    window = v[start : end + 1]
    dv = np.diff(window)
    fraction = float((dv < 0.0).mean()) if dv.size else float("nan")
    tt = log.t[start : end + 1]
    positive = window > 0.0
    if positive.sum() >= 2:
        rate = -float(np.polyfit(tt[positive], np.log(window[positive]), 1)[0])
    else:
        rate = float("nan")
    return CertifyReport(
        invariance_violations=violations,
        invariance_entry_index=entry,
        decrease_fraction=fraction,
        decay_rate=rate,
        d1=d1,
        window=(float(log.t[start]), float(log.t[end])),
        v_xi_max_after_entry=v_max_after,
    )
