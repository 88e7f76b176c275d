"""Compiled per-path simulation kernel.

One call simulates one path with its own ``numpy.random.Generator``. Parameters
arrive packed in a float array ``fp`` and an int array ``ip`` (slot constants
below); the scipy special functions needed for the bridge test are passed in
as ctypes callables so the kernel stays cacheable.
"""
import ctypes
import math

import numba as nb
import numpy as np
from numba.extending import get_cython_function_address

_D2 = ctypes.CFUNCTYPE(ctypes.c_double, ctypes.c_double, ctypes.c_double)
KVE = _D2(get_cython_function_address("scipy.special.cython_special", "__pyx_fuse_1kve"))
IVE = _D2(get_cython_function_address("scipy.special.cython_special", "__pyx_fuse_1ive"))
SPECIAL = (KVE, IVE)

TWO_PI = 2.0 * math.pi

# extension kinds
K_ABSORBED, K_CONE, K_ENTRANCE, K_CYL_SYM, K_CYL_NEUMANN, K_CYL_NONLOCAL = range(6)

# float parameter slots
F_ALPHA, F_A, F_HOLD_MEAN, F_EPS, F_DT_MAX, F_STEP_SCALE, F_HORIZON, F_WALL, F_STOP_LEVEL = range(9)
N_FP = 9
# int parameter slots
I_KIND, I_TRACK_THETA, I_STOP_AT_HIT, I_RECORD, I_STRIDE, I_MU_P_KIND, I_MU_M_KIND, I_MAX_STEPS = range(8)
N_IP = 8

# per-path statistics slots
(S_T0, S_T_ABSORB, S_TIME_AT_Z, S_N_HITS, S_N_POS, S_N_NEG, S_N_SIGN_CHANGES, S_QV_THETA,
 S_QV_THETA_REAL, S_QV_Y_REAL, S_STOP_SIGN, S_STOP_TIME, S_NONFINITE, S_MIN_R_AFTER_START,
 S_N_RETURNS, S_X_END, S_THETA_END, S_N_STEPS, S_MAX_R, S_T_END) = range(20)
N_STATS = 20

# event codes
EV_HITZ, EV_EXSTART, EV_ABSORB, EV_WALL = 1, 2, 3, 4

IN_M, AT_Z, ABSORBED = 0, 1, 2


@nb.njit(cache=True)
def besq_step(rng, z, d, dt):
    lam = z / (2.0 * dt)
    n = rng.poisson(lam) if lam > 0.0 else 0
    shape = 0.5 * d + n
    if shape <= 0.0:
        return 0.0
    return dt * rng.gamma(shape, 2.0)


@nb.njit(cache=True)
def bridge_hit_prob(kve, ive, z0, z1, dt, nu):
    if z0 <= 0.0 or z1 <= 0.0:
        return 1.0
    u = math.sqrt(z0 * z1) / dt
    if u > 350.0:
        return 0.0
    p = (2.0 / math.pi) * math.sin(nu * math.pi) * kve(nu, u) / ive(-nu, u) * math.exp(-2.0 * u)
    if p > 1.0:
        return 1.0
    if p < 0.0 or p != p:
        return 0.0
    return p


@nb.njit(cache=True)
def sample_angle(rng, kind, xs, cdf):
    u = rng.random()
    i = np.searchsorted(cdf, u, side="right")
    if i >= cdf.size:
        i = cdf.size - 1
    if kind == 1:
        return xs[i]
    return xs[i] + rng.random() * (xs[i + 1] - xs[i])


@nb.njit(cache=True)
def in_arcs(theta, arc_lo, arc_hi):
    th = theta % TWO_PI
    for j in range(arc_lo.size):
        width = (arc_hi[j] - arc_lo[j]) % TWO_PI
        off = (th - arc_lo[j]) % TWO_PI
        if off > 0.0 and off < width:
            return True
    return False


@nb.njit(cache=True)
def cylinder_sign(rng, kind, hit_theta, incoming, arc_lo, arc_hi):
    if kind == K_CYL_NEUMANN:
        return incoming
    if kind == K_CYL_NONLOCAL:
        return 1 if in_arcs(hit_theta, arc_lo, arc_hi) else -1
    return 1 if rng.random() < 0.5 else -1


@nb.njit(cache=True)
def dispatch(rng, kind, a, hold_mean, mup_kind, mup_x, mup_c, mum_kind, mum_x, mum_c):
    """Hold duration, sign and entrance angle for a cone/entrance exit from Z."""
    hold = 0.0
    if kind == K_CONE and hold_mean > 0.0:
        hold = rng.exponential(hold_mean)
    if rng.random() < a:
        return hold, 1, sample_angle(rng, mup_kind, mup_x, mup_c)
    return hold, -1, sample_angle(rng, mum_kind, mum_x, mum_c)


@nb.njit(cache=True)
def interior_step(rng, kve, ive, r, alpha, dt):
    """One exact radial step from |x| = r > 0, with theta variance and hit resolution.

    Returns ``(r_new, elapsed, hit, q)``: on a hit ``r_new = 0`` and ``elapsed`` is
    the hitting time within the step; ``q`` is the theta variance accrued.
    Only for ``d = 1 - alpha >= 0``.

    The hitting time of 0 is ``z / (2 G)`` with ``G ~ Gamma(1 - d/2)``. It is drawn
    first; when it exceeds ``dt`` the endpoint is drawn from the reflecting kernel
    conditioned on no visit to 0, by rejection against the bridge probability.
    """
    d = 1.0 - alpha
    z = r * r
    if d < 2.0:
        k = 1.0 - 0.5 * d
        tau = z / (2.0 * rng.gamma(k, 1.0))
        if tau <= dt:
            return 0.0, tau, True, tau * (0.5 * r) ** (2.0 * alpha)
        while True:
            z1 = besq_step(rng, z, d, dt)
            if z1 <= 0.0:
                continue
            u_draw = rng.random()
            # p_hit <= 2.5 exp(-2u) for every order, so most draws skip the Bessel calls
            if u_draw >= 2.5 * math.exp(-2.0 * math.sqrt(z * z1) / dt):
                break
            if u_draw >= bridge_hit_prob(kve, ive, z, z1, dt, k):
                break
    else:
        z1 = besq_step(rng, z, d, dt)
    r1 = math.sqrt(z1)
    return r1, dt, False, dt * (0.5 * (r + r1)) ** (2.0 * alpha)


@nb.njit(cache=True)
def _grow(a):
    b = np.empty(2 * a.size, a.dtype)
    b[: a.size] = a
    return b


@nb.njit(cache=True, nogil=True)
def run_path(rng, kve, ive, fp, ip, mup_x, mup_c, mum_x, mum_c,
             arc_lo, arc_hi, obs_t, x0, th0):
    alpha = fp[F_ALPHA]
    a = fp[F_A]
    hold_mean = fp[F_HOLD_MEAN]
    eps = fp[F_EPS]
    dt_max = fp[F_DT_MAX]
    c = fp[F_STEP_SCALE]
    horizon = fp[F_HORIZON]
    wall = fp[F_WALL]
    stop_level = fp[F_STOP_LEVEL]
    kind = ip[I_KIND]
    track_theta = ip[I_TRACK_THETA] != 0
    stop_at_hit = ip[I_STOP_AT_HIT] != 0
    record = ip[I_RECORD]
    stride = max(ip[I_STRIDE], 1)
    mup_kind = ip[I_MU_P_KIND]
    mum_kind = ip[I_MU_M_KIND]
    max_steps = ip[I_MAX_STEPS]

    d = 1.0 - alpha
    cone = alpha < 0.0
    have_y = alpha > -1.0
    p_nat = 1.0 + alpha
    two_alpha = 2.0 * alpha
    is_cyl = kind == K_CYL_SYM or kind == K_CYL_NEUMANN or kind == K_CYL_NONLOCAL

    stats = np.zeros(N_STATS)
    stats[S_T0] = np.inf
    stats[S_T_ABSORB] = np.inf
    stats[S_STOP_TIME] = np.inf
    stats[S_MIN_R_AFTER_START] = np.inf

    n_obs = obs_t.size
    obs_x = np.zeros(n_obs)
    obs_th = np.zeros(n_obs)

    cap = 64 if record >= 2 else 1
    s_t = np.empty(cap)
    s_x = np.empty(cap)
    s_th = np.empty(cap)
    n_s = 0
    ecap = 16 if record >= 1 else 1
    e_t = np.empty(ecap)
    e_code = np.empty(ecap, np.int64)
    e_sign = np.empty(ecap, np.int64)
    e_x = np.empty(ecap)
    e_th = np.empty(ecap)
    n_e = 0

    t = 0.0
    th = th0
    if x0 != 0.0:
        phase = IN_M
        r = abs(x0)
        sgn = 1 if x0 > 0.0 else -1
        last_sign = sgn
    else:
        phase = AT_Z
        r = 0.0
        sgn = 1
        last_sign = 0
    arrived = phase == AT_Z  # dispatch decision pending for a path that starts on Z
    hold_until = 0.0
    next_sign = 1
    next_theta = 0.0
    started = False
    first_hit_done = False
    pending_abs = -1.0  # scheduled absorption time below the shell when d < 0
    steps = 0
    obs_i = 0
    stopped = False

    if record >= 2:
        s_t[0] = 0.0
        s_x[0] = sgn * r
        s_th[0] = 0.0 if (cone and r == 0.0) else th % TWO_PI
        n_s = 1

    while True:
        if arrived:
            arrived = False
            if kind == K_ABSORBED or d <= 0.0:
                phase = ABSORBED
                stats[S_T_ABSORB] = t
                if record >= 1:
                    if n_e >= e_t.size:
                        e_t = _grow(e_t); e_code = _grow(e_code); e_sign = _grow(e_sign); e_x = _grow(e_x); e_th = _grow(e_th)
                    e_t[n_e] = t; e_code[n_e] = EV_ABSORB; e_sign[n_e] = 0; e_x[n_e] = 0.0
                    e_th[n_e] = 0.0 if cone else th % TWO_PI
                    n_e += 1
            elif is_cyl:
                hold_until = t
                next_sign = cylinder_sign(rng, kind, th, sgn, arc_lo, arc_hi)
                next_theta = th
            else:
                hold, next_sign, next_theta = dispatch(rng, kind, a, hold_mean, mup_kind, mup_x, mup_c,
                                                       mum_kind, mum_x, mum_c)
                hold_until = t + hold

        # observations due at the current time
        while obs_i < n_obs and obs_t[obs_i] <= t:
            if phase == IN_M:
                obs_x[obs_i] = sgn * r
                obs_th[obs_i] = th
            else:
                obs_x[obs_i] = 0.0
                obs_th[obs_i] = 0.0 if cone else th
            obs_i += 1
        if stopped or t >= horizon or steps >= max_steps:
            break
        t_next = horizon
        if obs_i < n_obs and obs_t[obs_i] < t_next:
            t_next = obs_t[obs_i]

        if phase == ABSORBED:
            stats[S_TIME_AT_Z] += t_next - t
            t = t_next
            continue

        if phase == AT_Z:
            if t < hold_until:
                h = min(hold_until, t_next) - t
                stats[S_TIME_AT_Z] += h
                t += h
                continue
            # leave the singular set onto the epsilon shell
            phase = IN_M
            r = eps
            sgn = next_sign
            th = next_theta
            if sgn > 0:
                stats[S_N_POS] += 1
            else:
                stats[S_N_NEG] += 1
            if last_sign != 0 and sgn != last_sign:
                stats[S_N_SIGN_CHANGES] += 1
            last_sign = sgn
            started = True
            if r < stats[S_MIN_R_AFTER_START]:
                stats[S_MIN_R_AFTER_START] = r
            if record >= 1:
                if n_e >= e_t.size:
                    e_t = _grow(e_t); e_code = _grow(e_code); e_sign = _grow(e_sign); e_x = _grow(e_x); e_th = _grow(e_th)
                e_t[n_e] = t; e_code[n_e] = EV_EXSTART; e_sign[n_e] = sgn; e_x[n_e] = sgn * r
                e_th[n_e] = th % TWO_PI
                n_e += 1
            continue

        # phase == IN_M: one interior step
        hit = False
        q = 0.0
        if d >= 0.0:
            dt = min(dt_max, t_next - t)
            if track_theta:
                dt = min(dt, max(c * r * r, eps * eps))
            r1, elapsed, hit, q = interior_step(rng, kve, ive, r, alpha, dt)
        else:
            if pending_abs < 0.0 and r < eps:
                g = rng.gamma(1.0 - 0.5 * d, 1.0)
                pending_abs = t + r * r / (2.0 * g)
            if pending_abs >= 0.0:
                # below the shell: wait for the exactly sampled absorption time
                if pending_abs <= t_next:
                    elapsed = pending_abs - t
                    hit = True
                    r1 = 0.0
                else:
                    elapsed = t_next - t
                    r1 = r
                q = elapsed * (0.5 * r) ** two_alpha
            else:
                dt = min(dt_max, c * r * r, t_next - t)
                r1 = r - alpha * dt / (2.0 * r) + math.sqrt(dt) * rng.standard_normal()
                elapsed = dt
                if r1 <= 0.0:
                    hit = True
                    r1 = 0.0
                    q = dt * (0.5 * r) ** two_alpha
                else:
                    q = dt * (0.5 * (r + r1)) ** two_alpha

        dth = math.sqrt(q) * rng.standard_normal()
        if not first_hit_done:
            stats[S_QV_THETA] += q
            stats[S_QV_THETA_REAL] += dth * dth
            if have_y:
                dy = (r1 ** p_nat - r ** p_nat) / p_nat
                stats[S_QV_Y_REAL] += dy * dy
        th += dth
        t += elapsed
        r = r1
        steps += 1

        if not hit and wall > 0.0 and r > wall:
            for _ in range(8):
                if r > wall:
                    r = 2.0 * wall - r
                if r < 0.0:
                    r = -r
            if record >= 1:
                if n_e >= e_t.size:
                    e_t = _grow(e_t); e_code = _grow(e_code); e_sign = _grow(e_sign); e_x = _grow(e_x); e_th = _grow(e_th)
                e_t[n_e] = t; e_code[n_e] = EV_WALL; e_sign[n_e] = sgn; e_x[n_e] = sgn * r; e_th[n_e] = th % TWO_PI
                n_e += 1

        if not (math.isfinite(r) and math.isfinite(th)):
            stats[S_NONFINITE] = 1.0
            stopped = True
        if r > stats[S_MAX_R]:
            stats[S_MAX_R] = r

        if hit:
            phase = AT_Z
            pending_abs = -1.0
            stats[S_N_HITS] += 1
            if started:
                stats[S_N_RETURNS] += 1
            if not first_hit_done:
                first_hit_done = True
                stats[S_T0] = t
            if record >= 1:
                if n_e >= e_t.size:
                    e_t = _grow(e_t); e_code = _grow(e_code); e_sign = _grow(e_sign); e_x = _grow(e_x); e_th = _grow(e_th)
                e_t[n_e] = t; e_code[n_e] = EV_HITZ; e_sign[n_e] = sgn; e_x[n_e] = 0.0
                e_th[n_e] = 0.0 if cone else th % TWO_PI
                n_e += 1
            if stop_at_hit:
                stopped = True
            else:
                arrived = True
        else:
            if started and r < stats[S_MIN_R_AFTER_START]:
                stats[S_MIN_R_AFTER_START] = r
            if stop_level > 0.0 and r >= stop_level:
                stats[S_STOP_SIGN] = sgn
                stats[S_STOP_TIME] = t
                stopped = True

        if record >= 2 and (steps % stride == 0 or hit or stopped):
            if n_s >= s_t.size:
                s_t = _grow(s_t); s_x = _grow(s_x); s_th = _grow(s_th)
            if t > s_t[n_s - 1]:
                s_t[n_s] = t
                s_x[n_s] = 0.0 if hit else sgn * r
                s_th[n_s] = 0.0 if (hit and cone) else th % TWO_PI
                n_s += 1

    if record >= 2 and t > s_t[n_s - 1]:
        if n_s >= s_t.size:
            s_t = _grow(s_t); s_x = _grow(s_x); s_th = _grow(s_th)
        s_t[n_s] = t
        s_x[n_s] = sgn * r if phase == IN_M else 0.0
        s_th[n_s] = 0.0 if (cone and phase != IN_M) else th % TWO_PI
        n_s += 1

    stats[S_X_END] = sgn * r if phase == IN_M else 0.0
    stats[S_THETA_END] = 0.0 if (cone and phase != IN_M) else th
    stats[S_N_STEPS] = steps
    stats[S_T_END] = t
    return (stats, obs_x, obs_th, s_t[:n_s], s_x[:n_s], s_th[:n_s],
            e_t[:n_e], e_code[:n_e], e_sign[:n_e], e_x[:n_e], e_th[:n_e])
