"""Numeric kernels shared by the solver layer.

Everything here works on the Gram ("covariance") form of the least-squares
problems: ``G = 2 X'X (+ 2 ridge I)`` and ``b = 2 X'y`` where columns of X
are donor pre-treatment paths.  Intercepts are profiled out by the callers
(center X and y, recover the intercept afterwards), so no kernel carries
intercept logic.

All kernels are deterministic: fixed iteration order, no randomness.  The
power iteration uses a fixed start vector.  Iterative solves are finished
with an exact active-set ("polish") step so that reported solutions satisfy
their KKT conditions to near machine precision; plain first-order iterations
alone stall on badly conditioned replication-sized problems.
"""

import numpy as np

from .backend import kernel


@kernel
def proj_simplex(v):
    """Euclidean projection of v onto {w : w >= 0, sum(w) = 1}."""
    n = v.shape[0]
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = 0
    for j in range(n):
        if u[j] * (j + 1.0) > css[j] - 1.0:
            rho = j
    theta = (css[rho] - 1.0) / (rho + 1.0)
    w = np.empty(n)
    for i in range(n):
        wi = v[i] - theta
        w[i] = wi if wi > 0.0 else 0.0
    return w


@kernel
def top_eig(G):
    """Largest eigenvalue of a PSD matrix by power iteration, fixed start."""
    n = G.shape[0]
    v = np.empty(n)
    for i in range(n):
        v[i] = 1.0 + 0.5 * (i + 1.0) / n
    nv = np.sqrt(np.dot(v, v))
    for i in range(n):
        v[i] /= nv
    lam = 0.0
    for _ in range(500):
        u = np.dot(G, v)
        nu = np.sqrt(np.dot(u, u))
        if nu <= 1e-300:
            return 0.0
        for i in range(n):
            u[i] /= nu
        lam_new = np.dot(u, np.dot(G, u))
        done = abs(lam_new - lam) <= 1e-13 * (1.0 + abs(lam_new))
        lam = lam_new
        v = u
        if done:
            break
    return lam


@kernel
def enet_kkt(G, b, w, la, lr, nonneg):
    """Max stationarity/complementarity violation of the elastic-net KKT
    system at w (absolute, caller normalizes).  la = lam*alpha,
    lr = lam*(1-alpha)."""
    n = b.shape[0]
    q = np.dot(G, w)
    res = 0.0
    for i in range(n):
        gi = q[i] - b[i]
        wi = w[i]
        if wi > 0.0:
            r = abs(gi + lr * wi + la)
        elif wi < 0.0:
            r = abs(gi + lr * wi - la)
        elif nonneg:
            r = -gi - la
            if r < 0.0:
                r = 0.0
        else:
            r = abs(gi) - la
            if r < 0.0:
                r = 0.0
        if r > res:
            res = r
    return res


@kernel
def _enet_polish(G, b, w, la, lr, nonneg):
    """Exact working-set solve of the elastic-net problem starting from the
    support of w.  Returns (ok, w_new); ok=False when the working-set loop
    hit its cap (caller keeps iterating)."""
    n = b.shape[0]
    active = np.zeros(n, np.bool_)
    sign = np.zeros(n)
    for i in range(n):
        if w[i] > 0.0:
            active[i] = True
            sign[i] = 1.0
        elif w[i] < 0.0:
            active[i] = True
            sign[i] = -1.0
    wt = np.zeros(n)
    for _ in range(4 * n + 8):
        idx = np.where(active)[0]
        k = idx.shape[0]
        for i in range(n):
            wt[i] = 0.0
        if k > 0:
            A = np.empty((k, k))
            rhs = np.empty(k)
            for a in range(k):
                ia = idx[a]
                for c in range(k):
                    A[a, c] = G[ia, idx[c]]
                A[a, a] += lr
                rhs[a] = b[ia] - la * sign[ia]
            if lr > 0.0:
                x = np.linalg.solve(A, rhs)
            else:
                x = np.linalg.lstsq(A, rhs, 1e-12)[0]
            # drop the worst sign-infeasible coordinate, one per cycle
            worst = -1
            worstval = 0.0
            for a in range(k):
                vv = x[a] * sign[idx[a]]
                if vv < worstval:
                    worstval = vv
                    worst = a
            if worst >= 0:
                active[idx[worst]] = False
                sign[idx[worst]] = 0.0
                continue
            for a in range(k):
                wt[idx[a]] = x[a]
        # admit the worst violated inactive coordinate, if any
        q = np.dot(G, wt)
        addi = -1
        addval = la * (1.0 + 1e-10)
        for i in range(n):
            if not active[i]:
                gi = q[i] - b[i]
                viol = -gi if nonneg else abs(gi)
                if viol > addval:
                    addval = viol
                    addi = i
        if addi < 0:
            return True, wt
        active[addi] = True
        if nonneg:
            sign[addi] = 1.0
        else:
            sign[addi] = 1.0 if (b[addi] - q[addi]) > 0.0 else -1.0
    return False, w


@kernel
def enet_cd(G, b, lam, alpha, nonneg, max_sweeps, coef_tol, kkt_tol):
    """Cyclic coordinate descent with exact soft-threshold updates on the
    Gram form of  ||y - Xw||^2 + lam*((1-alpha)/2 ||w||^2 + alpha ||w||_1),
    finished by the exact working-set polish.

    Returns (w, sweeps, kkt, converged) with kkt normalized by the gradient
    scale max(1, ||b||_inf).
    """
    n = b.shape[0]
    la = lam * alpha
    lr = lam * (1.0 - alpha)
    scale = 1.0
    for i in range(n):
        if abs(b[i]) > scale:
            scale = abs(b[i])
    w = np.zeros(n)
    q = np.zeros(n)  # G @ w, maintained incrementally
    kkt = enet_kkt(G, b, w, la, lr, nonneg) / scale
    if kkt <= kkt_tol:
        return w, 0, kkt, True
    sweeps = 0
    for sweep in range(1, max_sweeps + 1):
        sweeps = sweep
        maxd = 0.0
        for i in range(n):
            wi = w[i]
            rho = b[i] - q[i] + G[i, i] * wi
            denom = G[i, i] + lr
            if denom <= 0.0:
                wn = 0.0
            elif nonneg:
                z = rho - la
                wn = z / denom if z > 0.0 else 0.0
            else:
                z = abs(rho) - la
                if z > 0.0:
                    wn = z / denom if rho > 0.0 else -z / denom
                else:
                    wn = 0.0
            if wn != wi:
                d = wn - wi
                q += G[i] * d
                w[i] = wn
                if abs(d) > maxd:
                    maxd = abs(d)
        wmax = 1.0
        for i in range(n):
            if abs(w[i]) > wmax:
                wmax = abs(w[i])
        coef_ok = maxd <= coef_tol * wmax
        if coef_ok or sweep % 5 == 0:
            q = np.dot(G, w)  # refresh against incremental drift
            kkt = enet_kkt(G, b, w, la, lr, nonneg) / scale
            if kkt <= kkt_tol:
                return w, sweeps, kkt, True
            ok, wt = _enet_polish(G, b, w, la, lr, nonneg)
            if ok:
                k2 = enet_kkt(G, b, wt, la, lr, nonneg) / scale
                if k2 < kkt:
                    w = wt
                    q = np.dot(G, w)
                    kkt = k2
                    if kkt <= kkt_tol:
                        return w, sweeps, kkt, True
            if coef_ok and maxd == 0.0:
                break
    q = np.dot(G, w)
    kkt = enet_kkt(G, b, w, la, lr, nonneg) / scale
    return w, sweeps, kkt, kkt <= kkt_tol


@kernel
def qp_kkt(G, b, w, simplex):
    """Max KKT violation for min w'Gw/2 - b'w over the simplex (simplex=True)
    or the nonnegative orthant (simplex=False).  Absolute scale."""
    n = b.shape[0]
    q = np.dot(G, w)
    if simplex:
        gmin = np.inf
        amax = -np.inf
        for i in range(n):
            g = q[i] - b[i]
            if g < gmin:
                gmin = g
            if w[i] > 0.0 and g > amax:
                amax = g
        if amax == -np.inf:
            return np.inf
        return amax - gmin
    res = 0.0
    for i in range(n):
        g = q[i] - b[i]
        if w[i] > 0.0:
            if abs(g) > res:
                res = abs(g)
        elif -g > res:
            res = -g
    return res


@kernel
def _qp_polish(G, b, w, simplex):
    """Exact active-face working-set solve of the constrained QP starting
    from the support of w.  Returns (ok, w_new)."""
    n = b.shape[0]
    active = np.zeros(n, np.bool_)
    for i in range(n):
        if w[i] > 0.0:
            active[i] = True
    scale = 1.0
    for i in range(n):
        if abs(b[i]) > scale:
            scale = abs(b[i])
    margin = 1e-12 * scale
    wt = np.zeros(n)
    for _ in range(4 * n + 8):
        idx = np.where(active)[0]
        k = idx.shape[0]
        if simplex and k == 0:
            return False, w
        for i in range(n):
            wt[i] = 0.0
        theta = 0.0
        if simplex:
            A = np.zeros((k + 1, k + 1))
            rhs = np.zeros(k + 1)
            for a in range(k):
                ia = idx[a]
                for c in range(k):
                    A[a, c] = G[ia, idx[c]]
                A[a, k] = 1.0
                A[k, a] = 1.0
                rhs[a] = b[ia]
            rhs[k] = 1.0
            x = np.linalg.lstsq(A, rhs, 1e-12)[0]
            theta = x[k]
            ssum = 0.0
            for a in range(k):
                ssum += x[a]
            if abs(ssum - 1.0) > 1e-9:
                return False, w
        elif k > 0:
            A = np.empty((k, k))
            rhs = np.empty(k)
            for a in range(k):
                ia = idx[a]
                for c in range(k):
                    A[a, c] = G[ia, idx[c]]
                rhs[a] = b[ia]
            x = np.linalg.lstsq(A, rhs, 1e-12)[0]
        else:
            x = np.zeros(0)
        worst = -1
        worstval = 0.0
        for a in range(k):
            if x[a] < worstval:
                worstval = x[a]
                worst = a
        if worst >= 0:
            active[idx[worst]] = False
            continue
        for a in range(k):
            wt[idx[a]] = x[a]
        q = np.dot(G, wt)
        addi = -1
        addval = -margin
        for i in range(n):
            if not active[i]:
                g = q[i] - b[i]
                slack = (g - theta) if simplex else g
                if slack < addval:
                    addval = slack
                    addi = i
        if addi < 0:
            return True, wt
        active[addi] = True
    return False, w


@kernel
def qp_solve(G, b, simplex, max_iters, kkt_tol):
    """Accelerated projected gradient (FISTA) for min w'Gw/2 - b'w subject
    to the simplex (simplex=True) or w >= 0 (simplex=False), finished by the
    exact active-face polish.  Step from the top Gram eigenvalue.

    Returns (w, iters, kkt, converged), kkt normalized by max(1,||b||_inf).
    Iterates are feasible at every step (projection output).
    """
    n = b.shape[0]
    scale = 1.0
    for i in range(n):
        if abs(b[i]) > scale:
            scale = abs(b[i])
    L = top_eig(G) * 1.01
    if L <= 0.0:
        L = 1.0
    if simplex:
        w = np.full(n, 1.0 / n)
    else:
        w = np.zeros(n)
    kkt = qp_kkt(G, b, w, simplex) / scale
    if kkt <= kkt_tol:
        return w, 0, kkt, True
    v = w.copy()
    t = 1.0
    iters = 0
    for it in range(1, max_iters + 1):
        iters = it
        g = np.dot(G, v) - b
        y = v - g / L
        if simplex:
            wn = proj_simplex(y)
        else:
            wn = np.empty(n)
            for i in range(n):
                wn[i] = y[i] if y[i] > 0.0 else 0.0
        tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / tn
        v = wn + beta * (wn - w)
        w = wn
        t = tn
        if it % 10 == 0 or it == max_iters:
            kkt = qp_kkt(G, b, w, simplex) / scale
            if kkt <= kkt_tol:
                return w, iters, kkt, True
            ok, wt = _qp_polish(G, b, w, simplex)
            if ok:
                k2 = qp_kkt(G, b, wt, simplex) / scale
                if k2 < kkt:
                    w = wt
                    v = wt.copy()
                    t = 1.0
                    kkt = k2
                    if kkt <= kkt_tol:
                        return w, iters, kkt, True
    return w, iters, kkt, False


@kernel
def gram(X_rows, ridge):
    """G = 2 X'X + 2 ridge I and column norms, where X_rows holds the design
    transposed (one row per predictor)."""
    n = X_rows.shape[0]
    G = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            gij = 2.0 * np.dot(X_rows[i], X_rows[j])
            G[i, j] = gij
            G[j, i] = gij
        G[i, i] += 2.0 * ridge
    return G


@kernel
def gram_rhs(X_rows, y):
    """b = 2 X'y for the transposed design."""
    n = X_rows.shape[0]
    b = np.empty(n)
    for i in range(n):
        b[i] = 2.0 * np.dot(X_rows[i], y)
    return b


@kernel
def cv_enet_errors(paths, evals, lam, alpha, nonneg, no_intercept,
                   max_sweeps, coef_tol, kkt_tol):
    """Pseudo-treated-unit cross-validation errors for one (alpha, lambda).

    paths: N x T0 matrix of donor pre-treatment paths (row per unit).
    evals: N x P matrix of the same units' outcomes at the scoring periods.
    For each unit j, fits the elastic net of row j on the other rows and
    scores the squared prediction error at the P scoring periods (averaged
    over periods).  Returns the N-vector of per-unit errors.
    """
    N, T0 = paths.shape
    P = evals.shape[1]
    errs = np.zeros(N)
    Xd = np.empty((N - 1, T0))
    for j in range(N):
        k = 0
        for i in range(N):
            if i != j:
                for s in range(T0):
                    Xd[k, s] = paths[i, s]
                k += 1
        y = paths[j]
        ybar = 0.0
        xbar = np.zeros(N - 1)
        if no_intercept:
            Xc = Xd.copy()
            yc = y.copy()
        else:
            ybar = np.mean(y)
            yc = y - ybar
            Xc = np.empty((N - 1, T0))
            for i in range(N - 1):
                xbar[i] = np.mean(Xd[i])
                for s in range(T0):
                    Xc[i, s] = Xd[i, s] - xbar[i]
        G = gram(Xc, 0.0)
        b = gram_rhs(Xc, yc)
        w, sweeps, kkt, conv = enet_cd(G, b, lam, alpha, nonneg,
                                       max_sweeps, coef_tol, kkt_tol)
        mu = 0.0 if no_intercept else ybar - np.dot(xbar, w)
        se = 0.0
        for p in range(P):
            pred = mu
            k = 0
            for i in range(N):
                if i != j:
                    pred += w[k] * evals[i, p]
                    k += 1
            d = evals[j, p] - pred
            se += d * d
        errs[j] = se / P
    return errs
