"""Hot numerical kernels.

Everything here is written in numba-compatible scalar/array style and
compiled through :func:`ehgosim._accel.maybe_jit` (pure-numpy fallback via
``EHGO_SIM_NUMBA=0``). The public modules (:mod:`dynamics`,
:mod:`controller`, :mod:`observer`, ...) delegate their math to these
functions so the simulation loop and the tested API surfaces execute the
same arithmetic.

Conventions: inertial z points down (hover altitude is negative z), angles
are ZYX Euler ``[phi theta psi]``, ``g = 9.81`` exactly.
"""

import math

import numpy as np

from ._accel import maybe_jit

GRAV = 9.81
SING_TOL = 1e-6  # guard band (rad) around the |angle| = pi/2 singularity
DEGEN_TOL = 1e-9
TWO_PI = 2.0 * math.pi

# status codes returned by derivative/loop kernels
OK = 0
DIVERGED = 1
SINGULAR = 2
NONFINITE = 3

# extended-state layout: three observer blocks of sizes 9, 9, 12
CHI_RHO1 = 0
CHI_RHO2 = 3
CHI_SIGMA_RHO = 6
CHI_XI1 = 9
CHI_XI2 = 12
CHI_VARSIGMA_XI = 15
CHI_XC1 = 18
CHI_XC2 = 21
CHI_XC3 = 24
CHI_SIGMA_XC = 27
CHI_DIM = 30

# profile kind codes
PROF_STATIONARY = 0
PROF_CONST_VEL = 1
PROF_FIGURE8 = 2


@maybe_jit
def wrap_angle(x):
    """Wrap to (-pi, pi]."""
    return x - TWO_PI * math.ceil((x - math.pi) / TWO_PI)


@maybe_jit
def sat_unit(y):
    """Unit saturation: y for |y| <= 1, sign(y) outside."""
    if y > 1.0:
        return 1.0
    if y < -1.0:
        return -1.0
    return y


@maybe_jit
def mat3_vec(a, v, out):
    for i in range(3):
        out[i] = a[i, 0] * v[0] + a[i, 1] * v[1] + a[i, 2] * v[2]


@maybe_jit
def cross3(a, b, out):
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


@maybe_jit
def psi_mat(phi, theta, out):
    """Euler-rate matrix: theta_dot = Psi(phi, theta) * body_rate."""
    sp = math.sin(phi)
    cp = math.cos(phi)
    ct = math.cos(theta)
    tt = math.tan(theta)
    out[0, 0] = 1.0
    out[0, 1] = sp * tt
    out[0, 2] = cp * tt
    out[1, 0] = 0.0
    out[1, 1] = cp
    out[1, 2] = -sp
    out[2, 0] = 0.0
    out[2, 1] = sp / ct
    out[2, 2] = cp / ct


@maybe_jit
def psi_inv_mat(phi, theta, out):
    """Analytic inverse of the Euler-rate matrix."""
    sp = math.sin(phi)
    cp = math.cos(phi)
    st = math.sin(theta)
    ct = math.cos(theta)
    out[0, 0] = 1.0
    out[0, 1] = 0.0
    out[0, 2] = -st
    out[1, 0] = 0.0
    out[1, 1] = cp
    out[1, 2] = sp * ct
    out[2, 0] = 0.0
    out[2, 1] = -sp
    out[2, 2] = cp * ct


@maybe_jit
def psi_dot_mat(phi, theta, dphi, dtheta, out):
    """Entrywise time derivative of Psi along the given angle rates."""
    sp = math.sin(phi)
    cp = math.cos(phi)
    st = math.sin(theta)
    ct = math.cos(theta)
    tt = st / ct
    sec2 = 1.0 / (ct * ct)
    out[0, 0] = 0.0
    out[0, 1] = cp * tt * dphi + sp * sec2 * dtheta
    out[0, 2] = -sp * tt * dphi + cp * sec2 * dtheta
    out[1, 0] = 0.0
    out[1, 1] = -sp * dphi
    out[1, 2] = -cp * dphi
    out[2, 0] = 0.0
    out[2, 1] = (cp / ct) * dphi + sp * st * sec2 * dtheta
    out[2, 2] = (-sp / ct) * dphi + cp * st * sec2 * dtheta


@maybe_jit
def r3_vec(phi, theta, psi, out):
    """Thrust direction column of the body-to-inertial rotation."""
    sp = math.sin(phi)
    cp = math.cos(phi)
    st = math.sin(theta)
    ct = math.cos(theta)
    spsi = math.sin(psi)
    cpsi = math.cos(psi)
    out[0] = cp * st * cpsi + sp * spsi
    out[1] = cp * st * spsi - sp * cpsi
    out[2] = cp * ct


@maybe_jit
def rot_drift(rate, phi, theta, J, Jinv, out):
    """Drift of the Euler-rate dynamics at total angle rate ``rate``.

    Computes PsiDot*PsiInv*rate - Psi*Jinv*(PsiInv*rate x J*PsiInv*rate),
    with PsiDot formed along the same ``rate``.
    """
    p = np.empty((3, 3))
    pinv = np.empty((3, 3))
    pdot = np.empty((3, 3))
    psi_mat(phi, theta, p)
    psi_inv_mat(phi, theta, pinv)
    psi_dot_mat(phi, theta, rate[0], rate[1], pdot)
    om = np.empty(3)
    jom = np.empty(3)
    gyro = np.empty(3)
    tmp = np.empty(3)
    mat3_vec(pinv, rate, om)
    mat3_vec(J, om, jom)
    cross3(om, jom, gyro)
    mat3_vec(Jinv, gyro, tmp)
    mat3_vec(p, tmp, gyro)
    mat3_vec(pdot, om, tmp)
    for i in range(3):
        out[i] = tmp[i] - gyro[i]


@maybe_jit
def singular_attitude(phi, theta):
    lim = 0.5 * math.pi - SING_TOL
    return abs(phi) >= lim or abs(theta) >= lim


@maybe_jit
def rigid_deriv(y, u_f, tau, sig_rho, sig_xi, m, J, Jinv, out):
    """Rigid-body derivative of [p1 p2 theta1 theta2]; returns a status code."""
    phi = y[6]
    theta = y[7]
    if singular_attitude(phi, theta):
        return SINGULAR
    r3 = np.empty(3)
    r3_vec(phi, theta, y[8], r3)
    for i in range(3):
        out[i] = y[3 + i]
        out[3 + i] = -(u_f / m) * r3[i] + sig_rho[i]
        out[6 + i] = y[9 + i]
    out[5] += GRAV
    rate = np.empty(3)
    rate[0] = y[9]
    rate[1] = y[10]
    rate[2] = y[11]
    drift = np.empty(3)
    rot_drift(rate, phi, theta, J, Jinv, drift)
    p = np.empty((3, 3))
    psi_mat(phi, theta, p)
    jt = np.empty(3)
    gt = np.empty(3)
    mat3_vec(Jinv, tau, jt)
    mat3_vec(p, jt, gt)
    for i in range(3):
        out[9 + i] = drift[i] + gt[i] + sig_xi[i]
    return OK


@maybe_jit
def eval_channel(table, t):
    """Evaluate one atom-table channel; rows with kind < 0 terminate."""
    acc = 0.0
    for i in range(table.shape[0]):
        kind = table[i, 0]
        if kind < 0.0:
            break
        a = table[i, 1]
        w = table[i, 2]
        p = table[i, 3]
        if kind == 0.0:
            acc += a
        elif kind == 1.0:
            acc += a * math.sin(w * t + p)
        elif kind == 2.0:
            acc += a * math.cos(w * t + p)
        else:
            acc += a * t ** w
    return acc


@maybe_jit
def eval_channel_dot(table, t):
    """Exact time derivative of an atom-table channel."""
    acc = 0.0
    for i in range(table.shape[0]):
        kind = table[i, 0]
        if kind < 0.0:
            break
        a = table[i, 1]
        w = table[i, 2]
        p = table[i, 3]
        if kind == 1.0:
            acc += a * w * math.cos(w * t + p)
        elif kind == 2.0:
            acc -= a * w * math.sin(w * t + p)
        elif kind == 3.0 and w > 0.0:
            acc += a * w * t ** (w - 1.0)
    return acc


@maybe_jit
def eval_disturbance(dist, t, sig_rho, sig_xi):
    for i in range(3):
        sig_rho[i] = eval_channel(dist[i], t)
        sig_xi[i] = eval_channel(dist[3 + i], t)


@maybe_jit
def eval_disturbance_dot(dist, t, sig_rho_dot, sig_xi_dot):
    for i in range(3):
        sig_rho_dot[i] = eval_channel_dot(dist[i], t)
        sig_xi_dot[i] = eval_channel_dot(dist[3 + i], t)


@maybe_jit
def figure8_chain(prof, t, c, cd, cdd, cddd):
    """Closed-form lemniscate-of-Gerono curve and first three derivatives."""
    ax = prof[1]
    ay = prof[2]
    w = prof[3]
    s1 = math.sin(w * t)
    c1 = math.cos(w * t)
    s2 = math.sin(2.0 * w * t)
    c2 = math.cos(2.0 * w * t)
    c[0] = prof[4] + ax * s1
    c[1] = prof[5] + ay * s2
    c[2] = prof[6]
    cd[0] = ax * w * c1
    cd[1] = 2.0 * ay * w * c2
    cd[2] = 0.0
    cdd[0] = -ax * w * w * s1
    cdd[1] = -4.0 * ay * w * w * s2
    cdd[2] = 0.0
    cddd[0] = -ax * w * w * w * c1
    cddd[1] = -8.0 * ay * w * w * w * c2
    cddd[2] = 0.0


@maybe_jit
def reference_accel_jerk(prof, t, xc, acc, jerk):
    """Vehicle acceleration and its derivative along the flow.

    figure8 profiles use the curve feed-forward plus a PD pull so arbitrary
    initial states converge to the curve; other profiles coast.
    """
    if prof[0] < PROF_FIGURE8 - 0.5:
        for i in range(3):
            acc[i] = 0.0
            jerk[i] = 0.0
        return
    c = np.empty(3)
    cd = np.empty(3)
    cdd = np.empty(3)
    cddd = np.empty(3)
    figure8_chain(prof, t, c, cd, cdd, cddd)
    kc = prof[7]
    kd = prof[8]
    for i in range(3):
        acc[i] = cdd[i] + kc * (c[i] - xc[i]) + kd * (cd[i] - xc[3 + i])
    for i in range(3):
        jerk[i] = cddd[i] + kc * (cd[i] - xc[3 + i]) + kd * (cdd[i] - acc[i])


@maybe_jit
def blend_chain(bl, t):
    """Quintic 0->1 altitude blend and derivatives; returns (s, sd, sdd, sddd).

    bl = [mode, start_time, duration, clearance, z_start]; mode 0 tracks the
    reference chain directly (s == 1).
    """
    if bl[0] < 0.5:
        return 1.0, 0.0, 0.0, 0.0
    t0 = bl[1]
    dur = bl[2]
    if t <= t0:
        return 0.0, 0.0, 0.0, 0.0
    if t >= t0 + dur:
        return 1.0, 0.0, 0.0, 0.0
    u = (t - t0) / dur
    s = ((6.0 * u - 15.0) * u + 10.0) * u * u * u
    sd = ((30.0 * u - 60.0) * u + 30.0) * u * u / dur
    sdd = ((120.0 * u - 180.0) * u + 60.0) * u / (dur * dur)
    sddd = ((360.0 * u - 360.0) * u + 60.0) / (dur * dur * dur)
    return s, sd, sdd, sddd


@maybe_jit
def target_chain(bl, t, xc1, xc2, xc3, sxc, pr, prd, prdd, prddd):
    """Landing target and derivatives built from a reference-state chain.

    Horizontal target follows the chain directly; the vertical target blends
    from z_start to chain z + clearance.
    """
    s, sd, sdd, sddd = blend_chain(bl, t)
    cl = bl[3]
    zs = bl[4]
    dz = xc1[2] + cl - zs
    pr[0] = xc1[0]
    pr[1] = xc1[1]
    pr[2] = zs + s * dz
    prd[0] = xc2[0]
    prd[1] = xc2[1]
    prd[2] = sd * dz + s * xc2[2]
    prdd[0] = xc3[0]
    prdd[1] = xc3[1]
    prdd[2] = sdd * dz + 2.0 * sd * xc2[2] + s * xc3[2]
    prddd[0] = sxc[0]
    prddd[1] = sxc[1]
    prddd[2] = sddd * dz + 3.0 * sdd * xc2[2] + 3.0 * sd * xc3[2] + s * sxc[2]


@maybe_jit
def mix_forward_kernel(M, b, omega, wrench):
    for r in range(4):
        acc = 0.0
        for i in range(omega.shape[0]):
            acc += M[r, i] * omega[i] * omega[i]
        wrench[r] = b * acc


@maybe_jit
def allocate_kernel(Mp, b, wrench, omega_des):
    """Minimum-norm squared-rate allocation; returns largest clamped value."""
    clamp = 0.0
    for i in range(omega_des.shape[0]):
        ws = 0.0
        for r in range(4):
            ws += Mp[i, r] * wrench[r]
        ws /= b
        if ws < 0.0:
            if -ws > clamp:
                clamp = -ws
            ws = 0.0
        omega_des[i] = math.sqrt(ws)
    return clamp


@maybe_jit
def translational_ctrl(f_t, m, delta):
    """Invert the translational model for attitude references and thrust.

    Returns (phi_r, theta_r, u_fd, margin_hits, degenerate). The theta
    branch keeps |theta_r| < pi/2 while the commanded vertical forcing
    stays below gravity; both reference angles are clamped to the margin
    pi/2 - delta with a diagnostic count, never silently.
    """
    dz = f_t[2] - GRAV
    if abs(dz) < DEGEN_TOL and abs(f_t[0]) < DEGEN_TOL:
        return 0.0, 0.0, 0.0, 0, 1
    hyp = math.sqrt(f_t[0] * f_t[0] + dz * dz)
    phi_r = math.atan(-f_t[1] / hyp)
    theta_r = -math.atan2(f_t[0], -dz)
    lim = 0.5 * math.pi - delta
    margin = 0
    if phi_r > lim:
        phi_r = lim
        margin += 1
    elif phi_r < -lim:
        phi_r = -lim
        margin += 1
    if theta_r > lim:
        theta_r = lim
        margin += 1
    elif theta_r < -lim:
        theta_r = -lim
        margin += 1
    u_fd = -m * dz / (math.cos(phi_r) * math.cos(theta_r))
    if u_fd < 0.0:
        u_fd = 0.0
        margin += 1
    return phi_r, theta_r, u_fd, margin, 0


@maybe_jit
def reference_rates_kernel(f_t, f_t_dot):
    """Analytic reference-angle rates; returns (dphi_r, dtheta_r, degenerate)."""
    dz = f_t[2] - GRAV
    den = f_t[0] * f_t[0] + dz * dz
    if den < 1e-18:
        return 0.0, 0.0, 1
    hyp = math.sqrt(den)
    num_phi = f_t[1] * (f_t_dot[0] * f_t[0] + f_t_dot[2] * dz) - f_t_dot[1] * den
    dphi = num_phi / (hyp * (den + f_t[1] * f_t[1]))
    dtheta = (f_t_dot[0] * dz - f_t[0] * f_t_dot[2]) / den
    return dphi, dtheta, 0


@maybe_jit
def rotational_ctrl(xi1, xi2, varsigma, phi, theta, thetar_dot, beta1, beta2, J, Jinv, tau):
    """Feedback-linearizing torque: J*PsiInv*(forcing - drift)."""
    rate = np.empty(3)
    for i in range(3):
        rate[i] = xi2[i] + thetar_dot[i]
    drift = np.empty(3)
    rot_drift(rate, phi, theta, J, Jinv, drift)
    v = np.empty(3)
    for i in range(3):
        v[i] = -beta1 * xi1[i] - beta2 * xi2[i] - varsigma[i] - drift[i]
    pinv = np.empty((3, 3))
    psi_inv_mat(phi, theta, pinv)
    tmp = np.empty(3)
    mat3_vec(pinv, v, tmp)
    mat3_vec(J, tmp, tau)


@maybe_jit
def saturate_chi(chi, bounds, out):
    """Per-entry saturation; returns the number of clipped entries."""
    hits = 0
    for i in range(chi.shape[0]):
        k = bounds[i]
        out[i] = k * sat_unit(chi[i] / k)
        if abs(chi[i]) > k:
            hits += 1
    return hits


@maybe_jit
def observer_deriv_kernel(
    chi,
    omega_hat,
    t,
    p1m,
    th1m,
    xc1m,
    theta_r,
    thetar_dot_bar,
    omega_des,
    h10,
    m,
    J,
    Jinv,
    b,
    tau_m,
    M,
    bl,
    dchi,
    domega_hat,
):
    """Derivative of the 30-state extended observer plus simulated rotors.

    Injection gains h10 hold alpha_j / eps^j for the three blocks
    (3 + 3 + 4 entries). Measurements and the command are zero-order held
    by the caller; the vertical target for the translational residual is
    rebuilt from the current reference-block estimate each evaluation.
    """
    phi = th1m[0]
    theta = th1m[1]
    if singular_attitude(phi, theta):
        return SINGULAR
    n = omega_hat.shape[0]
    # simulated wrench from simulated rotor rates
    wrench = np.empty(4)
    mix_forward_kernel(M, b, omega_hat, wrench)
    # vertical landing target from the estimated reference chain
    s, _sd, _sdd, _sddd = blend_chain(bl, t)
    cl = bl[3]
    zs = bl[4]
    pr_z = zs + s * (chi[CHI_XC1 + 2] + cl - zs)
    # measurement residuals (one per block); psi residual wrapped
    e1 = np.empty(3)
    e1[0] = (p1m[0] - chi[CHI_XC1 + 0]) - chi[CHI_RHO1 + 0]
    e1[1] = (p1m[1] - chi[CHI_XC1 + 1]) - chi[CHI_RHO1 + 1]
    e1[2] = (p1m[2] - pr_z) - chi[CHI_RHO1 + 2]
    e2 = np.empty(3)
    e2[0] = (th1m[0] - theta_r[0]) - chi[CHI_XI1 + 0]
    e2[1] = (th1m[1] - theta_r[1]) - chi[CHI_XI1 + 1]
    e2[2] = wrap_angle(th1m[2] - theta_r[2] - chi[CHI_XI1 + 2])
    e3 = np.empty(3)
    for i in range(3):
        e3[i] = xc1m[i] - chi[CHI_XC1 + i]
    r3 = np.empty(3)
    r3_vec(phi, theta, th1m[2], r3)
    # rotational drift at estimated tracking error
    xi2 = np.empty(3)
    for i in range(3):
        xi2[i] = chi[CHI_XI2 + i] + thetar_dot_bar[i]
    drift = np.empty(3)
    rot_drift(xi2, phi, theta, J, Jinv, drift)
    p = np.empty((3, 3))
    psi_mat(phi, theta, p)
    tau_hat = np.empty(3)
    tau_hat[0] = wrench[1]
    tau_hat[1] = wrench[2]
    tau_hat[2] = wrench[3]
    jt = np.empty(3)
    gt = np.empty(3)
    mat3_vec(Jinv, tau_hat, jt)
    mat3_vec(p, jt, gt)
    for i in range(3):
        # translational block: double integrator driven by thrust model,
        # gravity, disturbance estimate and the reference-acceleration slot
        dchi[CHI_RHO1 + i] = chi[CHI_RHO2 + i] + h10[0] * e1[i]
        acc = -(wrench[0] / m) * r3[i] + chi[CHI_SIGMA_RHO + i] - chi[CHI_XC3 + i]
        if i == 2:
            acc += GRAV
        dchi[CHI_RHO2 + i] = acc + h10[1] * e1[i]
        dchi[CHI_SIGMA_RHO + i] = h10[2] * e1[i]
        # rotational block
        dchi[CHI_XI1 + i] = chi[CHI_XI2 + i] + h10[3] * e2[i]
        dchi[CHI_XI2 + i] = drift[i] + gt[i] + chi[CHI_VARSIGMA_XI + i] + h10[4] * e2[i]
        dchi[CHI_VARSIGMA_XI + i] = h10[5] * e2[i]
        # reference block: pure integrator chain driven by injection only
        dchi[CHI_XC1 + i] = chi[CHI_XC2 + i] + h10[6] * e3[i]
        dchi[CHI_XC2 + i] = chi[CHI_XC3 + i] + h10[7] * e3[i]
        dchi[CHI_XC3 + i] = chi[CHI_SIGMA_XC + i] + h10[8] * e3[i]
        dchi[CHI_SIGMA_XC + i] = h10[9] * e3[i]
    for i in range(n):
        domega_hat[i] = (omega_des[i] - omega_hat[i]) / tau_m
    return OK


@maybe_jit
def output_feedback_ctrl(
    chi_raw,
    bounds,
    th1m,
    gains,
    inc_jerk,
    m,
    J,
    Jinv,
    b,
    Mp,
    tau_d,
    omega_des,
):
    """Full output-feedback pipeline on saturated estimates.

    gains = [beta1 beta2 gamma1 gamma2 delta]. Returns
    (u_fd, phi_r, theta_r, dphi_r, dtheta_r, sat_hits, margin_hits,
    clamp_magnitude, degenerate, status).
    """
    if singular_attitude(th1m[0], th1m[1]):
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0, 0, 0.0, 0, SINGULAR
    chi_s = np.empty(CHI_DIM)
    sat_hits = saturate_chi(chi_raw, bounds, chi_s)
    g1 = gains[2]
    g2 = gains[3]
    f_t = np.empty(3)
    for i in range(3):
        f_t[i] = (
            -g1 * chi_s[CHI_RHO1 + i]
            - g2 * chi_s[CHI_RHO2 + i]
            - chi_s[CHI_SIGMA_RHO + i]
            + chi_s[CHI_XC3 + i]
        )
    phi_r, theta_r, u_fd, margin, degen = translational_ctrl(f_t, m, gains[4])
    if degen == 1:
        return 0.0, 0.0, 0.0, 0.0, 0.0, sat_hits, margin, 0.0, 1, OK
    r3 = np.empty(3)
    r3_vec(phi_r, theta_r, 0.0, r3)
    ftd = np.empty(3)
    for i in range(3):
        bracket = -(u_fd / m) * r3[i] + chi_s[CHI_SIGMA_RHO + i] - chi_s[CHI_XC3 + i]
        if i == 2:
            bracket += GRAV
        ftd[i] = -g1 * chi_s[CHI_RHO2 + i] - g2 * bracket
        if inc_jerk == 1:
            ftd[i] += chi_s[CHI_SIGMA_XC + i]
    dphi_r, dtheta_r, degen2 = reference_rates_kernel(f_t, ftd)
    if degen2 == 1:
        return 0.0, 0.0, 0.0, 0.0, 0.0, sat_hits, margin, 0.0, 1, OK
    trd = np.empty(3)
    trd[0] = dphi_r
    trd[1] = dtheta_r
    trd[2] = 0.0
    rotational_ctrl(
        chi_s[CHI_XI1 : CHI_XI1 + 3],
        chi_s[CHI_XI2 : CHI_XI2 + 3],
        chi_s[CHI_VARSIGMA_XI : CHI_VARSIGMA_XI + 3],
        th1m[0],
        th1m[1],
        trd,
        gains[0],
        gains[1],
        J,
        Jinv,
        tau_d,
    )
    wrench = np.empty(4)
    wrench[0] = u_fd
    wrench[1] = tau_d[0]
    wrench[2] = tau_d[1]
    wrench[3] = tau_d[2]
    clamp = allocate_kernel(Mp, b, wrench, omega_des)
    return u_fd, phi_r, theta_r, dphi_r, dtheta_r, sat_hits, margin, clamp, 0, OK


@maybe_jit
def state_feedback_ctrl(
    t,
    y,
    xc,
    xc_acc,
    xc_jerk,
    dist,
    bl,
    prev_trd,
    have_prev,
    h,
    gains,
    m,
    J,
    Jinv,
    b,
    Mp,
    tau_d,
    omega_des,
):
    """State-feedback twin: exact errors, disturbances and reference chain.

    Returns the same tuple layout as :func:`output_feedback_ctrl` with
    sat_hits = 0.
    """
    if singular_attitude(y[6], y[7]):
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0, 0, 0.0, 0, SINGULAR
    sig_rho = np.empty(3)
    sig_xi = np.empty(3)
    eval_disturbance(dist, t, sig_rho, sig_xi)
    sig_rho_dot = np.empty(3)
    sig_xi_dot = np.empty(3)
    eval_disturbance_dot(dist, t, sig_rho_dot, sig_xi_dot)
    pr = np.empty(3)
    prd = np.empty(3)
    prdd = np.empty(3)
    prddd = np.empty(3)
    target_chain(bl, t, xc[0:3], xc[3:6], xc_acc, xc_jerk, pr, prd, prdd, prddd)
    g1 = gains[2]
    g2 = gains[3]
    rho1 = np.empty(3)
    rho2 = np.empty(3)
    f_t = np.empty(3)
    for i in range(3):
        rho1[i] = y[i] - pr[i]
        rho2[i] = y[3 + i] - prd[i]
        f_t[i] = -g1 * rho1[i] - g2 * rho2[i] - sig_rho[i] + prdd[i]
    phi_r, theta_r, u_fd, margin, degen = translational_ctrl(f_t, m, gains[4])
    if degen == 1:
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0, margin, 0.0, 1, OK
    r3 = np.empty(3)
    r3_vec(phi_r, theta_r, 0.0, r3)
    ftd = np.empty(3)
    for i in range(3):
        bracket = -(u_fd / m) * r3[i] + sig_rho[i] - prdd[i]
        if i == 2:
            bracket += GRAV
        ftd[i] = -g1 * rho2[i] - g2 * bracket - sig_rho_dot[i] + prddd[i]
    dphi_r, dtheta_r, degen2 = reference_rates_kernel(f_t, ftd)
    if degen2 == 1:
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0, margin, 0.0, 1, OK
    trd = np.empty(3)
    trd[0] = dphi_r
    trd[1] = dtheta_r
    trd[2] = 0.0
    xi1 = np.empty(3)
    xi2 = np.empty(3)
    xi1[0] = y[6] - phi_r
    xi1[1] = y[7] - theta_r
    xi1[2] = wrap_angle(y[8])
    for i in range(3):
        xi2[i] = y[9 + i] - trd[i]
    # second reference-angle derivative by one-step backward difference
    varsigma = np.empty(3)
    for i in range(3):
        tr_dd = (trd[i] - prev_trd[i]) / h if have_prev == 1 else 0.0
        varsigma[i] = sig_xi[i] - tr_dd
    rotational_ctrl(
        xi1, xi2, varsigma, y[6], y[7], trd, gains[0], gains[1], J, Jinv, tau_d
    )
    wrench = np.empty(4)
    wrench[0] = u_fd
    wrench[1] = tau_d[0]
    wrench[2] = tau_d[1]
    wrench[3] = tau_d[2]
    clamp = allocate_kernel(Mp, b, wrench, omega_des)
    return u_fd, phi_r, theta_r, dphi_r, dtheta_r, 0, margin, clamp, 0, OK


@maybe_jit
def true_extended_state(
    t, y, xc, xc_acc, xc_jerk, dist, bl, theta_r, trd, trd_prev, have_prev, h, chi_true
):
    """True chi for estimation-error logging under output feedback."""
    sig_rho = np.empty(3)
    sig_xi = np.empty(3)
    eval_disturbance(dist, t, sig_rho, sig_xi)
    pr = np.empty(3)
    prd = np.empty(3)
    prdd = np.empty(3)
    prddd = np.empty(3)
    target_chain(bl, t, xc[0:3], xc[3:6], xc_acc, xc_jerk, pr, prd, prdd, prddd)
    for i in range(3):
        chi_true[CHI_RHO1 + i] = y[i] - pr[i]
        chi_true[CHI_RHO2 + i] = y[3 + i] - prd[i]
        chi_true[CHI_SIGMA_RHO + i] = sig_rho[i]
        chi_true[CHI_XI1 + i] = y[6 + i] - theta_r[i]
        chi_true[CHI_XI2 + i] = y[9 + i] - trd[i]
        tr_dd = (trd[i] - trd_prev[i]) / h if have_prev == 1 else 0.0
        chi_true[CHI_VARSIGMA_XI + i] = sig_xi[i] - tr_dd
        chi_true[CHI_XC1 + i] = xc[i]
        chi_true[CHI_XC2 + i] = xc[3 + i]
        chi_true[CHI_XC3 + i] = xc_acc[i]
        chi_true[CHI_SIGMA_XC + i] = xc_jerk[i]
    chi_true[CHI_XI1 + 2] = wrap_angle(y[8] - theta_r[2])


@maybe_jit
def closed_loop_deriv(
    t,
    state,
    n,
    run_observer,
    omega_des,
    p1m,
    th1m,
    xc1m,
    theta_r,
    trd_bar,
    m,
    J,
    Jinv,
    b,
    tau_m,
    M,
    h10,
    prof,
    bl,
    dist,
    dstate,
):
    """Concatenated derivative of plant, rotors, vehicle and observer.

    state = [rigid 12 | rotor rates n | vehicle 6 | chi 30 | sim rotors n].
    Command and measurements are zero-order held across the step.
    """
    sig_rho = np.empty(3)
    sig_xi = np.empty(3)
    eval_disturbance(dist, t, sig_rho, sig_xi)
    wrench = np.empty(4)
    mix_forward_kernel(M, b, state[12 : 12 + n], wrench)
    tau = np.empty(3)
    tau[0] = wrench[1]
    tau[1] = wrench[2]
    tau[2] = wrench[3]
    status = rigid_deriv(state[0:12], wrench[0], tau, sig_rho, sig_xi, m, J, Jinv, dstate[0:12])
    if status != OK:
        return status
    for i in range(n):
        dstate[12 + i] = (omega_des[i] - state[12 + i]) / tau_m
    iv = 12 + n
    xc = state[iv : iv + 6]
    acc = np.empty(3)
    jerk = np.empty(3)
    reference_accel_jerk(prof, t, xc, acc, jerk)
    for i in range(3):
        dstate[iv + i] = xc[3 + i]
        dstate[iv + 3 + i] = acc[i]
    ic = iv + 6
    io = ic + CHI_DIM
    if run_observer == 1:
        status = observer_deriv_kernel(
            state[ic:io],
            state[io : io + n],
            t,
            p1m,
            th1m,
            xc1m,
            theta_r,
            trd_bar,
            omega_des,
            h10,
            m,
            J,
            Jinv,
            b,
            tau_m,
            M,
            bl,
            dstate[ic:io],
            dstate[io : io + n],
        )
        if status != OK:
            return status
    else:
        for i in range(ic, io + n):
            dstate[i] = 0.0
    return OK


@maybe_jit
def simulate_loop(
    mode,
    observer_enabled,
    inc_jerk,
    n_steps,
    h,
    state0,
    n,
    m,
    J,
    Jinv,
    b,
    tau_m,
    M,
    Mp,
    gains,
    h10,
    bounds,
    prof,
    bl,
    dist,
    noise,
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
):
    """Fixed-step closed-loop time march; fills the per-step log arrays.

    mode 0 runs state feedback (controller sees truth), mode 1 output
    feedback (controller sees saturated observer estimates only). Returns
    (status, step_index); on a nonzero status the log is valid up to and
    including step_index.
    """
    dim = state0.shape[0]
    state = state0.copy()
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    ytmp = np.empty(dim)
    tau_d = np.empty(3)
    omega_des = np.empty(n)
    chi_true = np.empty(CHI_DIM)
    chi_ctrl = np.empty(CHI_DIM)
    theta_r = np.zeros(3)
    trd_bar = np.zeros(3)
    prev_trd = np.zeros(3)
    prev_theta_r = np.zeros(3)
    prev_u = m * GRAV
    prev_tau = np.zeros(3)
    prev_omdes = np.empty(n)
    hov = math.sqrt(m * GRAV / (n * b))
    for i in range(n):
        prev_omdes[i] = hov
    have_prev = 0
    acc_t = np.empty(3)
    jerk_t = np.empty(3)
    iv = 12 + n
    ic = iv + 6
    io = ic + CHI_DIM
    for k in range(n_steps + 1):
        t = k * h
        p1m = np.empty(3)
        th1m = np.empty(3)
        xc1m = np.empty(3)
        for i in range(3):
            p1m[i] = state[i] + noise[k, i]
            th1m[i] = state[6 + i] + noise[k, 3 + i]
            xc1m[i] = state[iv + i] + noise[k, 6 + i]
        xc = state[iv : iv + 6]
        reference_accel_jerk(prof, t, xc, acc_t, jerk_t)
        # --- controller ---
        if mode == 0:
            (
                u_fd,
                phi_r,
                th_r,
                dphi_r,
                dth_r,
                sat_hits,
                margin,
                clamp,
                degen,
                status,
            ) = state_feedback_ctrl(
                t,
                state[0:12],
                xc,
                acc_t,
                jerk_t,
                dist,
                bl,
                prev_trd,
                have_prev,
                h,
                gains,
                m,
                J,
                Jinv,
                b,
                Mp,
                tau_d,
                omega_des,
            )
        else:
            if observer_enabled == 1:
                for i in range(CHI_DIM):
                    chi_ctrl[i] = state[ic + i]
            else:
                # degraded mode: estimates are raw measurements held
                s_bl, _sd, _sdd, _sddd = blend_chain(bl, t)
                for i in range(CHI_DIM):
                    chi_ctrl[i] = 0.0
                pr_z = bl[4] + s_bl * (xc1m[2] + bl[3] - bl[4])
                chi_ctrl[CHI_RHO1 + 0] = p1m[0] - xc1m[0]
                chi_ctrl[CHI_RHO1 + 1] = p1m[1] - xc1m[1]
                chi_ctrl[CHI_RHO1 + 2] = p1m[2] - pr_z
                for i in range(3):
                    chi_ctrl[CHI_XI1 + i] = th1m[i] - prev_theta_r[i]
                    chi_ctrl[CHI_XC1 + i] = xc1m[i]
                chi_ctrl[CHI_XI1 + 2] = wrap_angle(chi_ctrl[CHI_XI1 + 2])
            (
                u_fd,
                phi_r,
                th_r,
                dphi_r,
                dth_r,
                sat_hits,
                margin,
                clamp,
                degen,
                status,
            ) = output_feedback_ctrl(
                chi_ctrl,
                bounds,
                th1m,
                gains,
                inc_jerk,
                m,
                J,
                Jinv,
                b,
                Mp,
                tau_d,
                omega_des,
            )
        if status != OK:
            return status, k
        if degen == 1:
            # hold the previous command for one step (measure-zero event)
            u_fd = prev_u
            for i in range(3):
                tau_d[i] = prev_tau[i]
                theta_r[i] = prev_theta_r[i]
                trd_bar[i] = prev_trd[i]
            for i in range(n):
                omega_des[i] = prev_omdes[i]
        else:
            theta_r[0] = phi_r
            theta_r[1] = th_r
            theta_r[2] = 0.0
            trd_bar[0] = dphi_r
            trd_bar[1] = dth_r
            trd_bar[2] = 0.0
        true_extended_state(
            t,
            state[0:12],
            xc,
            acc_t,
            jerk_t,
            dist,
            bl,
            theta_r,
            trd_bar,
            prev_trd,
            have_prev,
            h,
            chi_true,
        )
        # --- log step k ---
        for i in range(12):
            log_state[k, i] = state[i]
        for i in range(6):
            log_xc[k, i] = state[iv + i]
        for i in range(n):
            log_omega[k, i] = state[12 + i]
            log_omdes[k, i] = omega_des[i]
        for i in range(CHI_DIM):
            log_chitrue[k, i] = chi_true[i]
            if mode == 0:
                log_chihat[k, i] = chi_true[i]
            elif observer_enabled == 1:
                log_chihat[k, i] = state[ic + i]
            else:
                log_chihat[k, i] = chi_ctrl[i]
        log_cmd[k, 0] = u_fd
        for i in range(3):
            log_cmd[k, 1 + i] = tau_d[i]
            log_thr[k, i] = theta_r[i]
            log_thr[k, 3 + i] = trd_bar[i]
            log_meas[k, i] = p1m[i]
            log_meas[k, 3 + i] = th1m[i]
            log_meas[k, 6 + i] = xc1m[i]
            log_dist[k, i] = chi_true[CHI_SIGMA_RHO + i]
            log_dist[k, 3 + i] = eval_channel(dist[3 + i], t)
        pr = np.empty(3)
        prd = np.empty(3)
        prdd = np.empty(3)
        prddd = np.empty(3)
        target_chain(bl, t, xc[0:3], xc[3:6], acc_t, jerk_t, pr, prd, prdd, prddd)
        for i in range(3):
            log_tgt[k, i] = pr[i]
            log_tgt[k, 3 + i] = prd[i]
        log_diag[k, 0] = sat_hits
        log_diag[k, 1] = 1 if clamp > 1e-9 else 0
        log_diag[k, 2] = margin + degen
        # remember command for hold-previous and finite differencing
        prev_u = u_fd
        for i in range(3):
            prev_tau[i] = tau_d[i]
            prev_theta_r[i] = theta_r[i]
            prev_trd[i] = trd_bar[i]
        for i in range(n):
            prev_omdes[i] = omega_des[i]
        have_prev = 1
        if k == n_steps:
            break
        # --- RK4 step with zero-order-held command and measurements ---
        run_obs = 1 if (mode == 1 and observer_enabled == 1) else 0
        status = closed_loop_deriv(
            t, state, n, run_obs, omega_des, p1m, th1m, xc1m, theta_r, trd_bar,
            m, J, Jinv, b, tau_m, M, h10, prof, bl, dist, k1,
        )
        if status != OK:
            return status, k
        for i in range(dim):
            ytmp[i] = state[i] + 0.5 * h * k1[i]
        status = closed_loop_deriv(
            t + 0.5 * h, ytmp, n, run_obs, omega_des, p1m, th1m, xc1m, theta_r,
            trd_bar, m, J, Jinv, b, tau_m, M, h10, prof, bl, dist, k2,
        )
        if status != OK:
            return status, k
        for i in range(dim):
            ytmp[i] = state[i] + 0.5 * h * k2[i]
        status = closed_loop_deriv(
            t + 0.5 * h, ytmp, n, run_obs, omega_des, p1m, th1m, xc1m, theta_r,
            trd_bar, m, J, Jinv, b, tau_m, M, h10, prof, bl, dist, k3,
        )
        if status != OK:
            return status, k
        for i in range(dim):
            ytmp[i] = state[i] + h * k3[i]
        status = closed_loop_deriv(
            t + h, ytmp, n, run_obs, omega_des, p1m, th1m, xc1m, theta_r,
            trd_bar, m, J, Jinv, b, tau_m, M, h10, prof, bl, dist, k4,
        )
        if status != OK:
            return status, k
        for i in range(dim):
            state[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        # housekeeping: wrap yaw, keep rotor rates nonnegative
        state[8] = wrap_angle(state[8])
        for i in range(n):
            if state[12 + i] < 0.0:
                state[12 + i] = 0.0
            if state[io + i] < 0.0:
                state[io + i] = 0.0
        # guards: plant/rotor/vehicle at 1e6; observer tolerates peaking
        for i in range(dim):
            if not math.isfinite(state[i]):
                return NONFINITE, k + 1
        for i in range(ic):
            if abs(state[i]) > 1e6:
                return DIVERGED, k + 1
        for i in range(ic, dim):
            if abs(state[i]) > 1e12:
                return DIVERGED, k + 1
    return OK, n_steps
