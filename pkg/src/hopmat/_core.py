"""Compiled kernels shared by the dynamics, controller and behavior modules.

Everything here works on flat float arrays so the whole closed loop can run
inside numba. The public modules wrap these functions with dataclasses.

Generalized coordinates (nq = 10 + nf):
    p(3), quaternion wxyz(4), theta_x, theta_y, l_s, delta(nf)
Generalized speeds (nv = 9 + nf):
    p_dot(3), omega world(3), theta_x_dot, theta_y_dot, l_s_dot, delta_dot(nf)

Leg nodes: node 0 is the actuator slider at distance l_s from the hip; node
k >= 1 is the distal end of segment k-1 and carries that segment's mass. The
last node is the foot.
"""

import math

import numpy as np
from numba import njit

# model parameter vector
P_BASE_MASS = 0
P_IXX = 1
P_IYY = 2
P_IZZ = 3
P_HIP_X = 4
P_HIP_Y = 5
P_HIP_Z = 6
P_GRAVITY = 7
P_ACT_MASS = 8
P_LEG_K = 9
P_LEG_C = 10
P_LS_REST = 11
P_LS_MIN = 12
P_LS_MAX = 13
P_STOP_K = 14
P_STOP_C = 15
P_GROUND_K = 16
P_GROUND_C = 17
P_MU = 18
P_FRICTION_C = 19
P_GRADE = 20
P_CONTACT_ON = 21
N_PARAMS = 22

# controller gains vector
G_TST = 0
G_K1 = 1
G_K2 = 2
G_K3 = 3
G_XMAX = 4
G_KPF = 5
G_KDF = 6
G_KPS = 7
G_KDS = 8
G_KHOP = 9
G_HDES = 10
G_F0 = 11
G_TAU_MAX = 12
G_F_MAX = 13
G_TST_ALPHA = 14
G_TST_WARMUP = 15
G_REACH = 16
N_GAINS = 17

# controller state vector
C_F = 0
C_HPREV = 1
C_XDES_X = 2
C_XDES_Y = 3
C_TST = 4
C_PHASE = 5
C_T_TD = 6
C_Z_TD = 7
C_APEX = 8
C_N_TD = 9
C_LATCH = 10
C_N_SAT = 11
C_HAVE_H = 12
C_N_STANCE = 13
N_CSTATE = 14

# behavior vector
B_KIND = 0
B_SPEED = 1
B_GRADE = 2
B_RADIUS = 3
B_OX = 4
B_OY = 5
N_BEHAVIOR = 6

KIND_STATIC = 0
KIND_FORWARD = 1
KIND_RAMP = 2
KIND_CIRCULAR = 3

# step status codes
OK = 0
NONFINITE = 1
DEFLECTION = 2
SINGULAR = 3
APEX = 4

# contact output vector
K_PEN = 0
K_FX = 1
K_FY = 2
K_FZ = 3
K_FOOT_X = 4
K_FOOT_Y = 5
K_FOOT_Z = 6
K_STANCE = 7
N_CONTACT = 8


@njit(cache=True)
def quat_to_rot(q, i0, R):
    w = q[i0]
    x = q[i0 + 1]
    y = q[i0 + 2]
    z = q[i0 + 3]
    R[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[0, 1] = 2.0 * (x * y - z * w)
    R[0, 2] = 2.0 * (x * z + y * w)
    R[1, 0] = 2.0 * (x * y + z * w)
    R[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[1, 2] = 2.0 * (y * z - x * w)
    R[2, 0] = 2.0 * (x * z - y * w)
    R[2, 1] = 2.0 * (y * z + x * w)
    R[2, 2] = 1.0 - 2.0 * (x * x + y * y)


@njit(cache=True)
def rot_to_euler(R):
    """Roll, pitch, yaw for R = Rz(yaw) Ry(pitch) Rx(roll)."""
    roll = math.atan2(R[2, 1], R[2, 2])
    s = -R[2, 0]
    if s > 1.0:
        s = 1.0
    elif s < -1.0:
        s = -1.0
    pitch = math.asin(s)
    yaw = math.atan2(R[1, 0], R[0, 0])
    return roll, pitch, yaw


@njit(cache=True)
def euler_rates(roll, pitch, wbx, wby, wbz):
    sr = math.sin(roll)
    cr = math.cos(roll)
    cp = math.cos(pitch)
    if abs(cp) < 1e-9:
        cp = 1e-9 if cp >= 0.0 else -1e-9
    tp = math.sin(pitch) / cp
    roll_dot = wbx + sr * tp * wby + cr * tp * wbz
    pitch_dot = cr * wby - sr * wbz
    yaw_dot = (sr * wby + cr * wbz) / cp
    return roll_dot, pitch_dot, yaw_dot


@njit(cache=True)
def leg_direction(tx, ty, d, dx, dy, dxx, dxy, dyy):
    """Unit leg direction in the body frame and its angle derivatives.

    d = Rx(theta_x) Ry(theta_y) (0, 0, -1)
    """
    sx = math.sin(tx)
    cx = math.cos(tx)
    sy = math.sin(ty)
    cy = math.cos(ty)
    d[0] = -sy
    d[1] = sx * cy
    d[2] = -cx * cy
    dx[0] = 0.0
    dx[1] = cx * cy
    dx[2] = sx * cy
    dy[0] = -cy
    dy[1] = -sx * sy
    dy[2] = cx * sy
    dxx[0] = 0.0
    dxx[1] = -sx * cy
    dxx[2] = cx * cy
    dxy[0] = 0.0
    dxy[1] = -cx * sy
    dxy[2] = -sx * sy
    dyy[0] = sy
    dyy[1] = -sx * cy
    dyy[2] = cx * cy


@njit(cache=True)
def leg_ik(length, px, py):
    """Leg angles placing the foot at (px, py) in the body frame.

    Returns (theta_x, theta_y, ok). ok is False when the target is out of
    reach, in which case the angles are NaN.
    """
    r2 = px * px + py * py
    if not r2 < length * length:
        return math.nan, math.nan, False
    sy = -px / length
    ty = math.asin(sy)
    tx = math.asin(py / (length * math.cos(ty)))
    return tx, ty, True


@njit(cache=True)
def leg_fk(length, tx, ty):
    sx = math.sin(tx)
    cx = math.cos(tx)
    sy = math.sin(ty)
    cy = math.cos(ty)
    return -length * sy, length * sx * cy, -length * cx * cy


@njit(cache=True)
def terrain_height(grade, x, y):
    return grade * x


@njit(cache=True)
def terrain_normal(grade):
    s = math.sqrt(1.0 + grade * grade)
    return -grade / s, 0.0, 1.0 / s


@njit(cache=True)
def _mat3_vec(R, v, out):
    for i in range(3):
        out[i] = R[i, 0] * v[0] + R[i, 1] * v[1] + R[i, 2] * v[2]


@njit(cache=True)
def _cross(a, b, out):
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


@njit(cache=True)
def _cholesky_solve(A, b, n):
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s -= A[j, k] * A[j, k]
        if not s > 0.0:
            return False
        A[j, j] = math.sqrt(s)
        for i in range(j + 1, n):
            s = A[i, j]
            for k in range(j):
                s -= A[i, k] * A[j, k]
            A[i, j] = s / A[j, j]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= A[i, k] * b[k]
        b[i] = s / A[i, i]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, n):
            s -= A[k, i] * b[k]
        b[i] = s / A[i, i]
    return True


@njit(cache=True)
def node_positions(q, P, seg_len, seg_k, dof, s):
    """Axial distance of every node from the hip."""
    n = seg_len.shape[0]
    s[0] = q[9]
    for j in range(n):
        dj = 0.0
        if seg_k[j] > 0.0:
            dj = q[10 + dof[j]]
        s[j + 1] = s[j] + seg_len[j] + dj


@njit(cache=True)
def assemble(q, v, tau, dt, P, seg_len, seg_mass, seg_k, seg_c, dof, M, f, D, contact):
    """Mass matrix, generalized force and damping Jacobian at (q, v).

    ``D`` is -df/dv for the damping terms treated implicitly by ``step``.
    ``contact`` receives the ground interaction at this state.
    """
    n = seg_len.shape[0]
    nv = M.shape[0]
    for i in range(nv):
        f[i] = 0.0
        for j in range(nv):
            M[i, j] = 0.0
            D[i, j] = 0.0

    R = np.empty((3, 3))
    quat_to_rot(q, 3, R)
    d = np.empty(3)
    dx = np.empty(3)
    dy = np.empty(3)
    dxx = np.empty(3)
    dxy = np.empty(3)
    dyy = np.empty(3)
    leg_direction(q[7], q[8], d, dx, dy, dxx, dxy, dyy)

    tdx = v[6]
    tdy = v[7]
    ddot = np.empty(3)
    dbias = np.empty(3)
    for i in range(3):
        ddot[i] = dx[i] * tdx + dy[i] * tdy
        dbias[i] = dxx[i] * tdx * tdx + 2.0 * dxy[i] * tdx * tdy + dyy[i] * tdy * tdy

    Rd = np.empty(3)
    RDx = np.empty(3)
    RDy = np.empty(3)
    Rdd = np.empty(3)
    Rdb = np.empty(3)
    Rh = np.empty(3)
    hip = np.empty(3)
    hip[0] = P[P_HIP_X]
    hip[1] = P[P_HIP_Y]
    hip[2] = P[P_HIP_Z]
    _mat3_vec(R, d, Rd)
    _mat3_vec(R, dx, RDx)
    _mat3_vec(R, dy, RDy)
    _mat3_vec(R, ddot, Rdd)
    _mat3_vec(R, dbias, Rdb)
    _mat3_vec(R, hip, Rh)

    w = np.empty(3)
    w[0] = v[3]
    w[1] = v[4]
    w[2] = v[5]

    s = np.empty(n + 1)
    sd = np.empty(n + 1)
    node_positions(q, P, seg_len, seg_k, dof, s)
    sd[0] = v[8]
    for j in range(n):
        ddj = 0.0
        if seg_k[j] > 0.0:
            ddj = v[9 + dof[j]]
        sd[j + 1] = sd[j] + ddj

    g = P[P_GRAVITY]
    J = np.zeros((3, nv))
    a = np.empty(3)
    tmp = np.empty(3)
    tmp2 = np.empty(3)
    bias = np.empty(3)
    F = np.empty(3)
    Cc = np.zeros((3, 3))

    for k in range(n + 1):
        mk = P[P_ACT_MASS] if k == 0 else seg_mass[k - 1]
        for i in range(3):
            a[i] = Rh[i] + s[k] * Rd[i]
        # Jacobian
        for i in range(3):
            for c in range(nv):
                J[i, c] = 0.0
            J[i, i] = 1.0
            J[i, 6] = s[k] * RDx[i]
            J[i, 7] = s[k] * RDy[i]
            J[i, 8] = Rd[i]
        J[0, 4] = a[2]
        J[0, 5] = -a[1]
        J[1, 3] = -a[2]
        J[1, 5] = a[0]
        J[2, 3] = a[1]
        J[2, 4] = -a[0]
        for j in range(k):
            if seg_k[j] > 0.0:
                c = 9 + dof[j]
                for i in range(3):
                    J[i, c] = Rd[i]
        # velocity-product acceleration
        _cross(w, a, tmp)
        _cross(w, tmp, bias)
        for i in range(3):
            tmp[i] = sd[k] * Rd[i] + s[k] * Rdd[i]
        _cross(w, tmp, tmp2)
        for i in range(3):
            bias[i] += 2.0 * tmp2[i] + 2.0 * sd[k] * Rdd[i] + s[k] * Rdb[i]

        F[0] = 0.0
        F[1] = 0.0
        F[2] = -mk * g
        if k == n:
            # foot contact
            vf = np.zeros(3)
            for i in range(3):
                acc = 0.0
                for c in range(nv):
                    acc += J[i, c] * v[c]
                vf[i] = acc
            fx = q[0] + a[0]
            fy = q[1] + a[1]
            fz = q[2] + a[2]
            contact[K_FOOT_X] = fx
            contact[K_FOOT_Y] = fy
            contact[K_FOOT_Z] = fz
            contact[K_FX] = 0.0
            contact[K_FY] = 0.0
            contact[K_FZ] = 0.0
            contact[K_STANCE] = 0.0
            grade = P[P_GRADE]
            nx, ny, nz = terrain_normal(grade)
            pen = (terrain_height(grade, fx, fy) - fz) * nz
            contact[K_PEN] = pen
            if P[P_CONTACT_ON] > 0.0 and pen > 0.0:
                contact[K_STANCE] = 1.0
                vn = vf[0] * nx + vf[1] * ny + vf[2] * nz
                # ground spring treated linearly implicit: extra damping dt * k
                cg = P[P_GROUND_C] + dt * P[P_GROUND_K]
                fn = P[P_GROUND_K] * pen - cg * vn
                if fn > 0.0:
                    nvec = np.empty(3)
                    nvec[0] = nx
                    nvec[1] = ny
                    nvec[2] = nz
                    vt = np.empty(3)
                    for i in range(3):
                        vt[i] = vf[i] - vn * nvec[i]
                    ct = P[P_FRICTION_C]
                    ftx = -ct * vt[0]
                    fty = -ct * vt[1]
                    ftz = -ct * vt[2]
                    ftn = math.sqrt(ftx * ftx + fty * fty + ftz * ftz)
                    limit = P[P_MU] * fn
                    sticking = ftn <= limit
                    if not sticking:
                        scale = limit / ftn
                        ftx *= scale
                        fty *= scale
                        ftz *= scale
                    cfx = fn * nx + ftx
                    cfy = fn * ny + fty
                    cfz = fn * nz + ftz
                    F[0] += cfx
                    F[1] += cfy
                    F[2] += cfz
                    contact[K_FX] = cfx
                    contact[K_FY] = cfy
                    contact[K_FZ] = cfz
                    for i in range(3):
                        for jj in range(3):
                            val = cg * nvec[i] * nvec[jj]
                            if sticking:
                                eye = 1.0 if i == jj else 0.0
                                val += ct * (eye - nvec[i] * nvec[jj])
                            Cc[i, jj] = val
                    for r in range(nv):
                        for c in range(nv):
                            acc = 0.0
                            for i in range(3):
                                for jj in range(3):
                                    acc += J[i, r] * Cc[i, jj] * J[jj, c]
                            D[r, c] += acc

        for i in range(3):
            F[i] -= mk * bias[i]
        for r in range(nv):
            acc = 0.0
            for i in range(3):
                acc += J[i, r] * F[i]
            f[r] += acc
            for c in range(r, nv):
                acc = J[0, r] * J[0, c] + J[1, r] * J[1, c] + J[2, r] * J[2, c]
                M[r, c] += mk * acc
    for r in range(nv):
        for c in range(r):
            M[r, c] = M[c, r]

    # floating base
    mb = P[P_BASE_MASS]
    for i in range(3):
        M[i, i] += mb
    f[2] -= mb * g
    Iw = np.zeros((3, 3))
    for i in range(3):
        for jj in range(3):
            Iw[i, jj] = (
                R[i, 0] * P[P_IXX] * R[jj, 0] + R[i, 1] * P[P_IYY] * R[jj, 1] + R[i, 2] * P[P_IZZ] * R[jj, 2]
            )
            M[3 + i, 3 + jj] += Iw[i, jj]
    _mat3_vec(Iw, w, tmp)
    _cross(w, tmp, tmp2)
    for i in range(3):
        f[3 + i] -= tmp2[i]

    # hip torques
    f[6] += tau[0]
    f[7] += tau[1]

    # sprung prismatic actuator
    ls = q[9]
    lsd = v[8]
    # actuator spring and travel stops are linearly implicit like the ground;
    # only the material chain is integrated explicitly
    cl = P[P_LEG_C] + dt * P[P_LEG_K]
    qls = tau[2] + P[P_LEG_K] * (P[P_LS_REST] - ls) - cl * lsd
    D[8, 8] += cl
    cs = P[P_STOP_C] + dt * P[P_STOP_K]
    if ls < P[P_LS_MIN]:
        qls += P[P_STOP_K] * (P[P_LS_MIN] - ls) - cs * lsd
        D[8, 8] += cs
    elif ls > P[P_LS_MAX]:
        qls += P[P_STOP_K] * (P[P_LS_MAX] - ls) - cs * lsd
        D[8, 8] += cs
    f[8] += qls

    # material spring chain
    for j in range(n):
        if seg_k[j] > 0.0:
            c = 9 + dof[j]
            f[c] += -seg_k[j] * q[10 + dof[j]] - seg_c[j] * v[c]
            D[c, c] += seg_c[j]


@njit(cache=True)
def _advance(q, v, dt, M, f, D, seg_len, seg_k, dof):
    nv = v.shape[0]
    for i in range(nv):
        f[i] *= dt
        for j in range(nv):
            M[i, j] += dt * D[i, j]
    if not _cholesky_solve(M, f, nv):
        return SINGULAR
    for i in range(nv):
        v[i] += f[i]

    for i in range(3):
        q[i] += dt * v[i]
    # orientation: left-multiply by exp(omega dt)
    wx = v[3]
    wy = v[4]
    wz = v[5]
    wn = math.sqrt(wx * wx + wy * wy + wz * wz)
    half = 0.5 * wn * dt
    if wn > 1e-12:
        sh = math.sin(half) / wn
        dw = math.cos(half)
        dxq = wx * sh
        dyq = wy * sh
        dzq = wz * sh
    else:
        dw = 1.0
        dxq = 0.5 * dt * wx
        dyq = 0.5 * dt * wy
        dzq = 0.5 * dt * wz
    qw = q[3]
    qx = q[4]
    qy = q[5]
    qz = q[6]
    nw = dw * qw - dxq * qx - dyq * qy - dzq * qz
    nx = dw * qx + dxq * qw + dyq * qz - dzq * qy
    ny = dw * qy - dxq * qz + dyq * qw + dzq * qx
    nz = dw * qz + dxq * qy - dyq * qx + dzq * qw
    norm = math.sqrt(nw * nw + nx * nx + ny * ny + nz * nz)
    q[3] = nw / norm
    q[4] = nx / norm
    q[5] = ny / norm
    q[6] = nz / norm
    for i in range(6, nv):
        q[i + 1] += dt * v[i]

    for i in range(q.shape[0]):
        if not math.isfinite(q[i]):
            return NONFINITE
    for i in range(nv):
        if not math.isfinite(v[i]):
            return NONFINITE
    n = seg_len.shape[0]
    for j in range(n):
        if seg_k[j] > 0.0:
            if abs(q[10 + dof[j]]) > 0.5 * seg_len[j]:
                return DEFLECTION
    return OK


@njit(cache=True)
def step(q, v, tau, dt, P, seg_len, seg_mass, seg_k, seg_c, dof, contact):
    """Advance (q, v) in place by one semi-implicit Euler step.

    Velocities are updated first, with damping forces taken implicitly,
    then positions are advanced with the new velocities. Returns a status
    code; on failure q and v hold the offending values.
    """
    nv = v.shape[0]
    M = np.empty((nv, nv))
    f = np.empty(nv)
    D = np.empty((nv, nv))
    assemble(q, v, tau, dt, P, seg_len, seg_mass, seg_k, seg_c, dof, M, f, D, contact)
    return _advance(q, v, dt, M, f, D, seg_len, seg_k, dof)


@njit(cache=True)
def contact_state(q, v, P, seg_len, seg_mass, seg_k, seg_c, dof, contact):
    nv = v.shape[0]
    M = np.empty((nv, nv))
    f = np.empty(nv)
    D = np.empty((nv, nv))
    tau = np.zeros(3)
    assemble(q, v, tau, 0.0, P, seg_len, seg_mass, seg_k, seg_c, dof, M, f, D, contact)


@njit(cache=True)
def mass_matrix(q, P, seg_len, seg_mass, seg_k, seg_c, dof):
    nv = q.shape[0] - 1
    M = np.empty((nv, nv))
    f = np.empty(nv)
    D = np.empty((nv, nv))
    v = np.zeros(nv)
    tau = np.zeros(3)
    contact = np.empty(N_CONTACT)
    assemble(q, v, tau, 0.0, P, seg_len, seg_mass, seg_k, seg_c, dof, M, f, D, contact)
    return M


# ----------------------------------------------------------------- behaviors


@njit(cache=True)
def reference(B, t):
    kind = int(B[B_KIND])
    ox = B[B_OX]
    oy = B[B_OY]
    v = B[B_SPEED]
    if kind == KIND_FORWARD or kind == KIND_RAMP:
        return ox + v * t, oy, v, 0.0
    if kind == KIND_CIRCULAR:
        r = B[B_RADIUS]
        ang = v * t / r
        c = math.cos(ang)
        s = math.sin(ang)
        return ox + r * c, oy + r * s, -v * s, v * c
    return ox, oy, 0.0, 0.0


# ---------------------------------------------------------------- controller


@njit(cache=True)
def desired_velocity(k2, k3, xmax, ex, ey, prev_x, prev_y):
    vx = -k2 * ex + k3 * prev_x
    vy = -k2 * ey + k3 * prev_y
    vx = min(max(vx, -xmax), xmax)
    vy = min(max(vy, -xmax), xmax)
    return vx, vy


@njit(cache=True)
def foot_placement(t_st, k1, vx, vy, vdx, vdy):
    return 0.5 * t_st * vx + k1 * (vx - vdx), 0.5 * t_st * vy + k1 * (vy - vdy)


@njit(cache=True)
def flight_pd(kp, kd, ex, ey, edx, edy):
    return -kp * ex - kd * edx, -kp * ey - kd * edy


@njit(cache=True)
def stance_pd(kp, kd, ex, ey, edx, edy):
    return kp * ex + kd * edx, kp * ey + kd * edy


@njit(cache=True)
def hop_force_update(f_prev, k_hop, h_des, h_prev):
    f_new = f_prev + k_hop * (h_des - h_prev)
    if f_new < 0.0:
        f_new = 0.0
    return f_new


@njit(cache=True)
def controller_step(t, q, v, contact, G, C, B, P, leg_length, tau):
    """One control update; writes (tau_1, tau_2, tau_3) into ``tau``."""
    R = np.empty((3, 3))
    quat_to_rot(q, 3, R)
    roll, pitch, yaw = rot_to_euler(R)
    wbx = R[0, 0] * v[3] + R[1, 0] * v[4] + R[2, 0] * v[5]
    wby = R[0, 1] * v[3] + R[1, 1] * v[4] + R[2, 1] * v[5]
    wbz = R[0, 2] * v[3] + R[1, 2] * v[4] + R[2, 2] * v[5]
    roll_dot, pitch_dot, _ = euler_rates(roll, pitch, wbx, wby, wbz)

    stance = contact[K_STANCE] > 0.0
    phase_prev = C[C_PHASE]
    pz = q[2]

    if stance and phase_prev == 0.0:
        # touchdown closes the previous hop cycle
        if C[C_N_TD] > 0.0:
            C[C_HPREV] = C[C_APEX] - C[C_Z_TD]
            C[C_HAVE_H] = 1.0
        C[C_N_TD] += 1.0
        C[C_T_TD] = t
        C[C_Z_TD] = pz
        C[C_APEX] = pz
        C[C_LATCH] = 0.0
    elif (not stance) and phase_prev == 1.0:
        C[C_N_STANCE] += 1.0
        if C[C_N_STANCE] > G[G_TST_WARMUP]:
            a = G[G_TST_ALPHA]
            C[C_TST] = (1.0 - a) * C[C_TST] + a * (t - C[C_T_TD])
    C[C_PHASE] = 1.0 if stance else 0.0
    if pz > C[C_APEX]:
        C[C_APEX] = pz

    if stance:
        t1, t2 = stance_pd(G[G_KPS], G[G_KDS], roll, pitch, roll_dot, pitch_dot)
        t3 = 0.0
        if contact[K_FZ] > 0.0 and v[2] > 0.0:
            if C[C_LATCH] == 0.0:
                if C[C_HAVE_H] > 0.0:
                    C[C_F] = hop_force_update(C[C_F], G[G_KHOP], G[G_HDES], C[C_HPREV])
                C[C_LATCH] = 1.0
            t3 = C[C_F]
    else:
        cyaw = math.cos(yaw)
        syaw = math.sin(yaw)
        xd, yd, _, _ = reference(B, t)
        exw = q[0] - xd
        eyw = q[1] - yd
        ex = cyaw * exw + syaw * eyw
        ey = -syaw * exw + cyaw * eyw
        vx = cyaw * v[0] + syaw * v[1]
        vy = -syaw * v[0] + cyaw * v[1]
        vdx, vdy = desired_velocity(G[G_K2], G[G_K3], G[G_XMAX], ex, ey, C[C_XDES_X], C[C_XDES_Y])
        C[C_XDES_X] = vdx
        C[C_XDES_Y] = vdy
        px, py = foot_placement(C[C_TST], G[G_K1], vx, vy, vdx, vdy)
        reach = G[G_REACH] * leg_length
        r = math.sqrt(px * px + py * py)
        if r > reach:
            px *= reach / r
            py *= reach / r
            C[C_N_SAT] += 1.0
        # desired leg direction in the heading frame, then into the body frame
        dwx = px / leg_length
        dwy = py / leg_length
        dwz = -math.sqrt(max(0.0, 1.0 - dwx * dwx - dwy * dwy))
        # R_tilt = Rz(-yaw) R ; body = R_tilt^T heading
        hx = cyaw * R[0, 0] + syaw * R[1, 0]
        hy = -syaw * R[0, 0] + cyaw * R[1, 0]
        bx = hx * dwx + hy * dwy + R[2, 0] * dwz
        hx = cyaw * R[0, 1] + syaw * R[1, 1]
        hy = -syaw * R[0, 1] + cyaw * R[1, 1]
        by = hx * dwx + hy * dwy + R[2, 1] * dwz
        tx_des, ty_des, ok = leg_ik(leg_length, bx * leg_length, by * leg_length)
        if not ok:
            tx_des = 0.0
            ty_des = 0.0
        t1, t2 = flight_pd(G[G_KPF], G[G_KDF], q[7] - tx_des, q[8] - ty_des, v[6], v[7])
        t3 = 0.0

    tmax = G[G_TAU_MAX]
    tau[0] = min(max(t1, -tmax), tmax)
    tau[1] = min(max(t2, -tmax), tmax)
    tau[2] = min(max(t3, 0.0), G[G_F_MAX])


# ------------------------------------------------------------- closed loop


@njit(cache=True)
def trace_width(nf):
    # t, q-ish (p3, phi3, th2, ls, delta nf), v-ish (9 + nf), tau3, F3, phase, foot3
    return 1 + (9 + nf) + (9 + nf) + 3 + 3 + 1 + 3


@njit(cache=True)
def _record(row, t, q, v, tau, contact, nf):
    R = np.empty((3, 3))
    quat_to_rot(q, 3, R)
    roll, pitch, yaw = rot_to_euler(R)
    wbx = R[0, 0] * v[3] + R[1, 0] * v[4] + R[2, 0] * v[5]
    wby = R[0, 1] * v[3] + R[1, 1] * v[4] + R[2, 1] * v[5]
    wbz = R[0, 2] * v[3] + R[1, 2] * v[4] + R[2, 2] * v[5]
    rd, pd, yd = euler_rates(roll, pitch, wbx, wby, wbz)
    c = 0
    row[c] = t
    c += 1
    for i in range(3):
        row[c] = q[i]
        c += 1
    row[c] = roll
    row[c + 1] = pitch
    row[c + 2] = yaw
    c += 3
    for i in range(7, 10 + nf):
        row[c] = q[i]
        c += 1
    for i in range(3):
        row[c] = v[i]
        c += 1
    row[c] = rd
    row[c + 1] = pd
    row[c + 2] = yd
    c += 3
    for i in range(6, 9 + nf):
        row[c] = v[i]
        c += 1
    for i in range(3):
        row[c] = tau[i]
        c += 1
    row[c] = contact[K_FX]
    row[c + 1] = contact[K_FY]
    row[c + 2] = contact[K_FZ]
    c += 3
    row[c] = contact[K_STANCE]
    c += 1
    row[c] = contact[K_FOOT_X]
    row[c + 1] = contact[K_FOOT_Y]
    row[c + 2] = contact[K_FOOT_Z]


@njit(cache=True)
def simulate(q, v, t0, dt, n_steps, decimation, P, seg_len, seg_mass, seg_k, seg_c, dof,
             G, C, B, leg_length, apex_limit, out):
    """Closed-loop run. Returns (status, rows written, steps taken).

    ``out`` may have zero rows when no trace is wanted. ``apex_limit`` (if
    positive) aborts with APEX when the base rises above it relative to the
    start height.
    """
    nf = v.shape[0] - 9
    nv = v.shape[0]
    tau = np.zeros(3)
    zero = np.zeros(3)
    contact = np.zeros(N_CONTACT)
    M = np.empty((nv, nv))
    f = np.empty(nv)
    D = np.empty((nv, nv))
    rows = out.shape[0]
    written = 0
    z0 = q[2]
    status = OK
    i = 0
    while i < n_steps:
        t = t0 + i * dt
        assemble(q, v, zero, dt, P, seg_len, seg_mass, seg_k, seg_c, dof, M, f, D, contact)
        controller_step(t, q, v, contact, G, C, B, P, leg_length, tau)
        if i % decimation == 0 and written < rows:
            _record(out[written], t, q, v, tau, contact, nf)
            written += 1
        f[6] += tau[0]
        f[7] += tau[1]
        f[8] += tau[2]
        status = _advance(q, v, dt, M, f, D, seg_len, seg_k, dof)
        i += 1
        if status != OK:
            break
        if apex_limit > 0.0 and q[2] - z0 > apex_limit:
            status = APEX
            break
    if status == OK and n_steps % decimation == 0 and written < rows:
        t = t0 + n_steps * dt
        assemble(q, v, zero, dt, P, seg_len, seg_mass, seg_k, seg_c, dof, M, f, D, contact)
        controller_step(t, q, v, contact, G, C, B, P, leg_length, tau)
        _record(out[written], t, q, v, tau, contact, nf)
        written += 1
    return status, written, i
