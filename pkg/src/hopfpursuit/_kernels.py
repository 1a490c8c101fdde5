"""Compiled inner loops of the Newton iterations.

Since ``A`` is nilpotent every Hamiltonian row is affine in the sample time:
``B_i^T e^{-tau A^T} p = <B_i, p> - tau <A B_i, p>``. The loops below therefore work on
the projections ``alpha = B^T p`` and ``beta = (A B)^T p`` and walk contiguous sample
arrays. They mirror ``hopf_solver.hopf_objective`` / ``smoothed_objective``, which stay
the reference implementation; the tests compare both.

``eps = 0`` gives the exact objective (``sqrt(u^2) = |u|``, ``sgn(0) = 0``).
"""
import numba
import numpy as np


@numba.njit(cache=True)
def _value(p, z, V0_inv, Bt, ABt, d, ad, tau, qp, q_e, h, eps):
    n = p.shape[0]
    value = 1.0
    for a in range(n):
        acc = 0.0
        for b in range(n):
            acc += V0_inv[a, b] * p[b]
        value += 0.25 * p[a] * acc - z[a] * p[a]
    if h > 0.0:
        k = Bt.shape[0]
        alpha = np.zeros(k)
        beta = np.zeros(k)
        ae = 0.0
        be = 0.0
        for b in range(n):
            for i in range(k):
                alpha[i] += Bt[i, b] * p[b]
                beta[i] += ABt[i, b] * p[b]
            ae += d[b] * p[b]
            be += ad[b] * p[b]
        e2 = eps * eps
        hint = 0.0
        for r in range(tau.shape[0]):
            t = tau[r]
            for i in range(k):
                u = alpha[i] - t * beta[i]
                hint += qp[r, i] * (np.sqrt(u * u + e2) - eps)
            w = ae - t * be
            hint -= q_e * (np.sqrt(w * w + e2) - eps)
        value += h * hint
    return value


@numba.njit(cache=True)
def _derivs(p, z, V0_inv, Bt, ABt, d, ad, tau, qp, q_e, h, eps, grad, hess):
    """Gradient and a positive definite Hessian model (pursuer curvature only; the
    concave evader curvature is left out)."""
    n = p.shape[0]
    for a in range(n):
        acc = 0.0
        for b in range(n):
            acc += V0_inv[a, b] * p[b]
            hess[a, b] = 0.5 * V0_inv[a, b]
        grad[a] = 0.5 * acc - z[a]
    if h <= 0.0:
        return
    k = Bt.shape[0]
    e2 = eps * eps
    ae = 0.0
    be = 0.0
    for b in range(n):
        ae += d[b] * p[b]
        be += ad[b] * p[b]
    for i in range(k):
        al = 0.0
        bt = 0.0
        for b in range(n):
            al += Bt[i, b] * p[b]
            bt += ABt[i, b] * p[b]
        s0 = 0.0
        s1 = 0.0
        c0 = 0.0
        c1 = 0.0
        c2 = 0.0
        for r in range(tau.shape[0]):
            t = tau[r]
            u = al - t * bt
            s = np.sqrt(u * u + e2)
            if s == 0.0:
                continue
            q = qp[r, i]
            rho = q * u / s
            s0 += rho
            s1 += rho * t
            c = q * e2 / (s * s * s)
            c0 += c
            c1 += c * t
            c2 += c * t * t
        for a in range(n):
            grad[a] += h * (s0 * Bt[i, a] - s1 * ABt[i, a])
            if c0 != 0.0:
                for b in range(n):
                    hess[a, b] += h * (c0 * Bt[i, a] * Bt[i, b]
                                       - c1 * (Bt[i, a] * ABt[i, b] + ABt[i, a] * Bt[i, b])
                                       + c2 * ABt[i, a] * ABt[i, b])
    s0 = 0.0
    s1 = 0.0
    for r in range(tau.shape[0]):
        t = tau[r]
        w = ae - t * be
        s = np.sqrt(w * w + e2)
        if s == 0.0:
            continue
        s0 += w / s
        s1 += w / s * t
    for a in range(n):
        grad[a] -= h * q_e * (s0 * d[a] - s1 * ad[a])


@numba.njit(cache=True)
def objective(p, z, V0_inv, Bt, ABt, d, ad, tau, qp, q_e, h, eps):
    """Value, gradient and Hessian model; the compiled twin of the numpy objectives."""
    n = p.shape[0]
    grad = np.empty(n)
    hess = np.empty((n, n))
    _derivs(p, z, V0_inv, Bt, ABt, d, ad, tau, qp, q_e, h, eps, grad, hess)
    return _value(p, z, V0_inv, Bt, ABt, d, ad, tau, qp, q_e, h, eps), grad, hess


@numba.njit(cache=True)
def relaxed_newton(p0, z, V0_inv, newton, Bt, ABt, d, ad, tau, qp, q_e, h, tol,
                   max_iter, min_step):
    n = p0.shape[0]
    p = p0.copy()
    g = np.empty(n)
    hess = np.empty((n, n))
    p_new = np.empty(n)
    dvec = np.empty(n)
    f = _value(p, z, V0_inv, Bt, ABt, d, ad, tau, qp, q_e, h, 0.0)
    _derivs(p, z, V0_inv, Bt, ABt, d, ad, tau, qp, q_e, h, 0.0, g, hess)
    step_norm = np.inf
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        d_norm = 0.0
        for a in range(n):
            acc = 0.0
            for b in range(n):
                acc += newton[a, b] * g[b]
            dvec[a] = -acc
            d_norm += acc * acc
        d_norm = np.sqrt(d_norm)
        if d_norm <= tol:
            step_norm = d_norm
            converged = True
            break
        alpha = 1.0
        while True:
            for a in range(n):
                p_new[a] = p[a] + alpha * dvec[a]
            f_new = _value(p_new, z, V0_inv, Bt, ABt, d, ad, tau, qp, q_e, h, 0.0)
            if f_new <= f:
                break
            alpha *= 0.5
            if alpha < min_step:
                break
        if f_new > f:
            # no decrease along the Newton direction
            step_norm = 0.0
            converged = True
            break
        step_norm = alpha * d_norm
        for a in range(n):
            p[a] = p_new[a]
        f = f_new
        _derivs(p, z, V0_inv, Bt, ABt, d, ad, tau, qp, q_e, h, 0.0, g, hess)
        if step_norm <= tol:
            converged = True
            break
    return p, f, it, converged, step_norm


@numba.njit(cache=True)
def smoothed_newton(p0, z, V0_inv, Bt, ABt, d, ad, tau, qp, q_e, h, eps0, eps_factor,
                    eps_rel_end, tol, stage_tol, max_iter, min_step):
    n = p0.shape[0]
    p = p0.copy()
    grad = np.empty(n)
    hess = np.empty((n, n))
    p_new = np.empty(n)
    total = 0
    eps = eps0
    converged = False
    step_norm = np.inf
    while True:
        last = eps <= eps_rel_end * max(1.0, np.sqrt(np.sum(p * p)))
        f = _value(p, z, V0_inv, Bt, ABt, d, ad, tau, qp, q_e, h, eps)
        stage_converged = False
        for it in range(max_iter):
            total += 1
            _derivs(p, z, V0_inv, Bt, ABt, d, ad, tau, qp, q_e, h, eps, grad, hess)
            dvec = -np.linalg.solve(hess, grad)
            d_norm = np.sqrt(np.sum(dvec * dvec))
            alpha = 1.0
            while True:
                for a in range(n):
                    p_new[a] = p[a] + alpha * dvec[a]
                f_new = _value(p_new, z, V0_inv, Bt, ABt, d, ad, tau, qp, q_e, h, eps)
                if f_new <= f:
                    break
                alpha *= 0.5
                if alpha < min_step:
                    break
            if f_new > f:
                step_norm = 0.0
                stage_converged = True
                break
            step_norm = alpha * d_norm
            for a in range(n):
                p[a] = p_new[a]
            f = f_new
            if step_norm <= (tol if last else stage_tol) * (1.0 + np.sqrt(np.sum(p * p))):
                stage_converged = True
                break
        if last or eps == 0.0:
            converged = stage_converged
            break
        eps *= eps_factor
    return p, total, converged, step_norm


# --------------------------------------------------------------------------- exact pieces
#
# For the package's systems V0^-1 splits into 2x2 blocks over (position, velocity) of
# each axis of each vehicle, and the Hamiltonian only sees the lateral pairs
# y_i = (p_dy, p_dvy): pursuer row j of vehicle i is |y2 - tau_j y1| and the evader
# row is |sum_i (y2_i - tau_j y1_i)|. Fixing the evader signs (one sign change along
# the decreasing tau_j) leaves k independent convex plane problems, each solved
# exactly by checking the origin, every wedge between sample lines and every line.


@numba.njit(cache=True)
def _pair_solve(w1, w2, T, wp, wv):
    """argmin and min of ``1/4 y^T M y - w^T y`` with ``M = E diag(wp, wv) E^T``,
    ``E = [[1, -T], [0, 1]]``."""
    eta1 = (w1 + T * w2) / wp
    eta2 = w2 / wv
    val = -((w1 + T * w2) * eta1 + w2 * eta2)
    return val, 2.0 * eta1, 2.0 * (T * eta1 + eta2)


@numba.njit(cache=True)
def _plane_min(g1, g2, T, wp, wv, tau, Cc, Ct):
    """Exact minimum of ``1/4 y^T M y - g^T y + sum_j c_j |y2 - tau_j y1|``."""
    N = tau.shape[0]
    best, b1, b2 = 0.0, 0.0, 0.0
    for m in range(N + 1):
        v1 = 2.0 * Ct[m] - Ct[N]
        v2 = Cc[N] - 2.0 * Cc[m]
        for s1 in (1.0, -1.0):
            val, y1, y2 = _pair_solve(g1 - s1 * v1, g2 - s1 * v2, T, wp, wv)
            if val >= best:
                continue
            # rows j < m have sign -s1, rows j >= m sign +s1; extremes suffice
            if m > 0 and (s1 * (y2 - tau[0] * y1) > 0.0 or s1 * (y2 - tau[m - 1] * y1) > 0.0):
                continue
            if m < N and (s1 * (y2 - tau[m] * y1) < 0.0 or s1 * (y2 - tau[N - 1] * y1) < 0.0):
                continue
            best, b1, b2 = val, y1, y2
    for j in range(N):
        t0 = tau[j]
        K = (Ct[j] - t0 * Cc[j]) + (t0 * (Cc[N] - Cc[j + 1]) - (Ct[N] - Ct[j + 1]))
        b = g1 + t0 * g2
        ab = abs(b)
        if ab <= K:
            continue
        a = wp + wv * (t0 - T) * (t0 - T)
        val = -(ab - K) * (ab - K) / a
        if val < best:
            t = 2.0 * (ab - K) / a * (1.0 if b > 0 else -1.0)
            best, b1, b2 = val, t, t * t0
    return best, b1, b2


@numba.njit(cache=True)
def _prefix(tau, qp, h):
    N, k = qp.shape
    Cc = np.zeros((k, N + 1))
    Ct = np.zeros((k, N + 1))
    Pt = np.zeros(N + 1)
    for j in range(N):
        Pt[j + 1] = Pt[j] + tau[j]
        for i in range(k):
            c = h * qp[j, i]
            Cc[i, j + 1] = Cc[i, j] + c
            Ct[i, j + 1] = Ct[i, j] + c * tau[j]
    return Cc, Ct, Pt


@numba.njit(cache=True)
def _piece(z, W, T, tau, Cc, Ct, l1, l2, p):
    """Exact minimum with the evader rows replaced by the linear term ``l`` on every
    lateral pair; writes the minimizer into ``p`` and returns the objective."""
    k = Cc.shape[0]
    f = 1.0
    for i in range(k):
        o = 4 * i
        val, x1, x2 = _pair_solve(z[o], z[o + 2], T, W[o], W[o + 2])
        f += val
        p[o], p[o + 2] = x1, x2
        val, y1, y2 = _plane_min(z[o + 1] - l1, z[o + 3] - l2, T, W[o + 1], W[o + 3],
                                 tau, Cc[i], Ct[i])
        f += val
        p[o + 1], p[o + 3] = y1, y2
    return f


@numba.njit(cache=True)
def _pattern(p, tau):
    """Evader sign pattern ``(c, s)`` at ``p``: sign s before row c, -s from row c."""
    k = p.shape[0] // 4
    a = 0.0
    b = 0.0
    for i in range(k):
        a -= p[4 * i + 3]
        b -= p[4 * i + 1]
    N = tau.shape[0]
    s = 1.0
    for j in range(N):
        w = a - tau[j] * b
        if w != 0.0:
            s = 1.0 if w > 0 else -1.0
            break
    for j in range(N):
        w = a - tau[j] * b
        if s * w < 0.0:
            return j, s
    return N, s


@numba.njit(cache=True)
def _evader_term(c, s, N, Pt, h, q_e):
    # -h q_e sum_j sigma_j w_j with w_j = -sum_i (y2_i - tau_j y1_i)
    S1 = s * (2.0 * c - N)
    St = s * (2.0 * Pt[c] - Pt[N])
    return -h * q_e * St, h * q_e * S1


@numba.njit(cache=True)
def exact_refine(p0, z, W, T, tau, qp, q_e, h, max_rounds):
    """Exact minimum of the piece containing ``p0`` followed by a descent over evader
    sign patterns (each pattern solved exactly) until neither the pattern read at the
    iterate nor its neighbours improve. With ``q_e = 0`` this is the global minimum."""
    n = p0.shape[0]
    N = tau.shape[0]
    Cc, Ct, Pt = _prefix(tau, qp, h)
    p = np.empty(n)
    if q_e == 0.0 or N == 0:
        f = _piece(z, W, T, tau, Cc, Ct, 0.0, 0.0, p)
        return p, f, 1
    best_p = np.empty(n)
    c, s = _pattern(p0, tau)
    l1, l2 = _evader_term(c, s, N, Pt, h, q_e)
    best = _piece(z, W, T, tau, Cc, Ct, l1, l2, best_p)
    rounds = 1
    while rounds < max_rounds:
        improved = False
        c0, s0 = _pattern(best_p, tau)
        for dc in (0, -1, 1):
            cc = c0 + dc
            if cc < 0 or cc > N:
                continue
            l1, l2 = _evader_term(cc, s0, N, Pt, h, q_e)
            f = _piece(z, W, T, tau, Cc, Ct, l1, l2, p)
            rounds += 1
            if f < best:
                best = f
                best_p[:] = p
                improved = True
                break
        if not improved:
            break
    return best_p, best, rounds


@numba.njit(cache=True)
def exact_global(z, W, T, tau, qp, q_e, h):
    """Global minimum: every evader sign pattern solved exactly (O(k N^2))."""
    n = z.shape[0]
    N = tau.shape[0]
    Cc, Ct, Pt = _prefix(tau, qp, h)
    p = np.empty(n)
    best_p = np.empty(n)
    if q_e == 0.0 or N == 0:
        f = _piece(z, W, T, tau, Cc, Ct, 0.0, 0.0, best_p)
        return best_p, f
    best = np.inf
    for c in range(N + 1):
        for s in (1.0, -1.0):
            l1, l2 = _evader_term(c, s, N, Pt, h, q_e)
            f = _piece(z, W, T, tau, Cc, Ct, l1, l2, p)
            if f < best:
                best = f
                best_p[:] = p
    return best_p, best
