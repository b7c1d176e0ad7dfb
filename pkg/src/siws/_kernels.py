"""Compiled inner loops.

Every kernel works on stacked arrays so that the single-virus model is the
``l = 1`` case of the competing-virus one:

    z  : (l, N)     per-virus stacked state, N = n + m
    Bf : (l, N, N)  per-virus equivalent-graph adjacency
    Df : (l, N)     per-virus healing / decay rates
"""

import numpy as np
from numba import njit


@njit(cache=True)
def field(z, Bf, Df, n):
    """Continuous-time vector field -D_f z + (I - sum_a Z^a) B_f z, per virus."""
    l, N = z.shape
    free = np.ones(n)
    for k in range(l):
        for i in range(n):
            free[i] -= z[k, i]
    out = np.empty_like(z)
    for k in range(l):
        inf = Bf[k] @ z[k]
        for i in range(N):
            g = inf[i] * free[i] if i < n else inf[i]
            out[k, i] = g - Df[k, i] * z[k, i]
    return out


@njit(cache=True)
def euler_step(z, Bf, Df, h, n):
    l, N = z.shape
    free = np.ones(n)
    for k in range(l):
        for i in range(n):
            free[i] -= z[k, i]
    out = np.empty_like(z)
    for k in range(l):
        inf = Bf[k] @ z[k]
        for i in range(N):
            if i < n:
                out[k, i] = z[k, i] + h * (free[i] * inf[i] - Df[k, i] * z[k, i])
            else:
                out[k, i] = z[k, i] + h * (inf[i] - Df[k, i] * z[k, i])
    return out


@njit(cache=True)
def iterate_map(z, Bf, Df, h, n, nsteps, tol, stride, t0):
    """Run up to ``nsteps`` steps of the discrete map.

    Stops early once the max-norm of successive states drops below ``tol``.
    States at global steps divisible by ``stride`` are recorded (the
    starting state is not).  Returns (z, steps_taken, converged, records,
    record_steps, n_records).
    """
    cap = nsteps // stride + 2
    rec = np.empty((cap, z.shape[0], z.shape[1]))
    rec_t = np.empty(cap, dtype=np.int64)
    count = 0
    converged = False
    steps = 0
    for s in range(nsteps):
        znew = euler_step(z, Bf, Df, h, n)
        diff = np.max(np.abs(znew - z))
        z = znew
        steps = s + 1
        t = t0 + steps
        if t % stride == 0 and count < cap:
            rec[count] = z
            rec_t[count] = t
            count += 1
        if diff < tol:
            converged = True
            break
    return z, steps, converged, rec, rec_t, count


@njit(cache=True)
def rk4_run(z, Bf, Df, dt, n, nsteps, tol, stride):
    """Classical RK4 on the continuous field with step ``dt``.

    Stops early once ``max|z_{k+1} - z_k| / dt`` (about the field norm)
    falls below ``tol``; pass a negative ``tol`` to run all steps.
    """
    cap = nsteps // stride + 2
    rec = np.empty((cap, z.shape[0], z.shape[1]))
    rec_t = np.empty(cap, dtype=np.int64)
    count = 0
    converged = False
    steps = 0
    for s in range(nsteps):
        k1 = field(z, Bf, Df, n)
        k2 = field(z + 0.5 * dt * k1, Bf, Df, n)
        k3 = field(z + 0.5 * dt * k2, Bf, Df, n)
        k4 = field(z + dt * k3, Bf, Df, n)
        znew = z + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rate = np.max(np.abs(znew - z)) / dt
        z = znew
        steps = s + 1
        if steps % stride == 0 and count < cap:
            rec[count] = z
            rec_t[count] = steps
            count += 1
        if rate < tol:
            converged = True
            break
    return z, steps, converged, rec, rec_t, count


@njit(cache=True)
def power_iteration(M, shift, tol, maxit):
    """Perron root and right vector of nonnegative ``M`` via shifted iteration.

    Each step multiplies by ``M + s I`` with ``s`` half the current
    Collatz-Wielandt upper bound ``max_i (M v)_i / v_i`` (never more than
    the initial ``shift``).  The shift leaves the Perron vector unchanged and
    damps the eigenvalues on the spectral circle of periodic matrices.

    Returns (rho, v, iterations, residual, converged); ``v`` has unit 1-norm
    and the residual is max|M v - rho v|.
    """
    N = M.shape[0]
    v = np.full(N, 1.0 / N)
    rho = 0.0
    res = np.inf
    for it in range(1, maxit + 1):
        Mv = M @ v
        rho = np.sum(Mv)  # equals rho once v is the eigenvector, as sum(v) = 1
        res = np.max(np.abs(Mv - rho * v))
        if res <= tol:
            return rho, v, it, res, True
        ub = 0.0
        for i in range(N):
            if v[i] > 0.0:
                r = Mv[i] / v[i]
                if r > ub:
                    ub = r
        s_k = min(shift, 0.5 * ub)
        y = Mv + s_k * v
        total = np.sum(y)
        if total <= 0.0:
            # nilpotent pattern reached: spectral radius is zero
            return 0.0, v, it, np.max(np.abs(Mv)), np.max(np.abs(Mv)) <= tol
        v = y / total
    return rho, v, maxit, res, False
