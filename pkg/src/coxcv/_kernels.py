"""Compiled inner loops.

Every kernel here works on subjects already sorted by *descending* time, so the
Breslow risk set of the subject at position ``i`` is the prefix
``0 .. tie_end[i]`` and the events whose risk set contains ``i`` are the events
at positions ``tie_start[i] ..``.
"""

import numpy as np
from numba import njit

_NEG_INF = -np.inf


@njit(cache=True, nogil=True)
def risk_log_sums(eta, tie_end):
    """log sum_{k in R(t_i)} exp(eta_k) for every position, running max-shift."""
    n = eta.shape[0]
    prefix = np.empty(n)
    m = _NEG_INF
    s = 0.0
    for i in range(n):
        e = eta[i]
        if e > m:
            s = s * np.exp(m - e) + 1.0
            m = e
        else:
            s += np.exp(e - m)
        prefix[i] = m + np.log(s)
    out = np.empty(n)
    for i in range(n):
        out[i] = prefix[tie_end[i]]
    return out


@njit(cache=True, nogil=True)
def cox_loglik(eta, status, tie_end):
    log_risk = risk_log_sums(eta, tie_end)
    ll = 0.0
    for i in range(eta.shape[0]):
        if status[i] > 0.0:
            ll += eta[i] - log_risk[i]
    return ll


@njit(cache=True, nogil=True)
def cox_stats(eta, status, tie_start, tie_end):
    """Log partial likelihood and its gradient with respect to eta."""
    n = eta.shape[0]
    log_risk = risk_log_sums(eta, tie_end)
    ll = 0.0
    for i in range(n):
        if status[i] > 0.0:
            ll += eta[i] - log_risk[i]

    # suffix log-sum of exp(-log_risk_j) over events j at positions >= q
    suffix = np.empty(n)
    m = _NEG_INF
    s = 0.0
    for q in range(n - 1, -1, -1):
        if status[q] > 0.0:
            e = -log_risk[q]
            if e > m:
                s = s * np.exp(m - e) + 1.0
                m = e
            else:
                s += np.exp(e - m)
        if s > 0.0:
            suffix[q] = m + np.log(s)
        else:
            suffix[q] = _NEG_INF

    grad = np.empty(n)
    for i in range(n):
        ls = suffix[tie_start[i]]
        if ls == _NEG_INF:
            grad[i] = status[i]
        else:
            grad[i] = status[i] - np.exp(eta[i] + ls)
    return ll, grad


@njit(cache=True, nogil=True)
def active_hessian(X, eta, status, tie_start, tie_end, expected, cols, n_cols):
    """Hessian of -loglik/n restricted to columns ``cols[:n_cols]``.

    Summed risk-set covariances split as ``X' diag(expected) X - M' D M`` where
    the rows of ``M`` are risk-set weighted covariate means at each event time
    and ``D`` holds the event counts there (Breslow ties).
    """
    n = X.shape[0]
    k = n_cols
    XA = np.empty((n, k))
    XW = np.empty((n, k))
    for a in range(k):
        j = cols[a]
        for i in range(n):
            XA[i, a] = X[i, j]
            XW[i, a] = X[i, j] * expected[i]
    H = np.dot(XW.T, XA)

    M = np.empty((n, k))
    MD = np.empty((n, k))
    s1 = np.zeros(k)
    m = _NEG_INF
    s0 = 0.0
    d = 0.0
    g = 0
    for i in range(n):
        e = eta[i]
        if e > m:
            if s0 > 0.0:
                f = np.exp(m - e)
                s0 *= f
                for a in range(k):
                    s1[a] *= f
            m = e
        r = np.exp(e - m)
        s0 += r
        for a in range(k):
            s1[a] += r * XA[i, a]
        if tie_start[i] == i:
            d = 0.0
        d += status[i]
        if tie_end[i] == i and d > 0.0:
            for a in range(k):
                mu = s1[a] / s0
                M[g, a] = mu
                MD[g, a] = mu * d
            g += 1
    H -= np.dot(MD[:g].T, M[:g])
    inv_n = 1.0 / n
    for a in range(k):
        for b in range(a, k):
            v = 0.5 * (H[a, b] + H[b, a]) * inv_n
            H[a, b] = v
            H[b, a] = v
    return H


@njit(cache=True, nogil=True)
def _penalty(beta, lam, alpha, pf):
    total = 0.0
    for j in range(beta.shape[0]):
        b = beta[j]
        if b != 0.0:
            total += pf[j] * (alpha * abs(b) + 0.5 * (1.0 - alpha) * b * b)
    return lam * total


@njit(cache=True, nogil=True)
def _matvec(X, beta, out):
    n, p = X.shape
    for i in range(n):
        out[i] = 0.0
    for j in range(p):
        b = beta[j]
        if b != 0.0:
            for i in range(n):
                out[i] += X[i, j] * b


@njit(cache=True, nogil=True)
def _solve_quadratic(H, G, beta, cols, k, lam, alpha, pf, tol, budget):
    """Cyclic coordinate descent on the penalized local quadratic model.

    Minimises ``-G.d + d.H.d / 2 + penalty(beta + d)`` over the active
    coordinates and returns (candidate beta, updates used).
    """
    cand = beta.copy()
    u = np.zeros(k)  # H @ (cand - beta) on the active set
    used = 0
    while used < budget:
        max_change = 0.0
        for a in range(k):
            j = cols[a]
            h = H[a, a]
            if h <= 1e-14:
                continue
            z = h * cand[j] + G[j] - u[a]
            thr = lam * alpha * pf[j]
            den = h + lam * (1.0 - alpha) * pf[j]
            if z > thr:
                new = (z - thr) / den
            elif z < -thr:
                new = (z + thr) / den
            else:
                new = 0.0
            delta = new - cand[j]
            if delta != 0.0:
                for b in range(k):
                    u[b] += H[b, a] * delta
                cand[j] = new
                if abs(delta) > max_change:
                    max_change = abs(delta)
        used += k
        if max_change < tol:
            break
    return cand, used


INNER_SWEEPS = 200


@njit(cache=True, nogil=True)
def penalized_fit(X, status, tie_start, tie_end, lam, alpha, pf, beta0,
                  tol, max_updates, trace):
    """Minimise -loglik/n + penalty at one lambda by proximal Newton steps.

    Each outer iteration refreshes the quadratic model at the current iterate
    (gradient over all columns, exact Hessian over the working set of nonzero,
    unpenalized and KKT-violating columns), solves it by cyclic coordinate
    descent and backtracks on the true objective. ``trace`` receives the
    objective at the start and after every accepted outer step.

    Stops when the KKT residual drops below ``tol`` or the step stalls.
    Returns (beta, converged, updates, n_trace).
    """
    n, p = X.shape
    inv_n = 1.0 / n
    beta = beta0.copy()
    eta = np.empty(n)
    _matvec(X, beta, eta)
    ll, grad = cox_stats(eta, status, tie_start, tie_end)
    q_old = -ll * inv_n + _penalty(beta, lam, alpha, pf)
    n_trace = 0
    if trace.shape[0] > 0:
        trace[0] = q_old
        n_trace = 1

    G = np.empty(p)
    cols = np.empty(p, dtype=np.int64)
    eta_try = np.empty(n)
    beta_try = np.empty(p)
    expected = np.empty(n)
    updates = 0
    converged = False

    while updates < max_updates:
        # gradient of loglik/n in beta
        k = 0
        kkt = 0.0
        for j in range(p):
            acc = 0.0
            for i in range(n):
                acc += X[i, j] * grad[i]
            G[j] = acc * inv_n
            thr = lam * alpha * pf[j]
            if beta[j] != 0.0:
                sub = thr if beta[j] > 0.0 else -thr
                v = abs(G[j] - sub - lam * (1.0 - alpha) * pf[j] * beta[j])
            else:
                v = abs(G[j]) - thr
            if v > kkt:
                kkt = v
            if beta[j] != 0.0 or pf[j] == 0.0 or abs(G[j]) > thr:
                cols[k] = j
                k += 1
        # optimality certified directly; flat directions need not settle
        if k == 0 or kkt < tol:
            converged = True
            break
        for i in range(n):
            expected[i] = status[i] - grad[i]
        H = active_hessian(X, eta, status, tie_start, tie_end, expected, cols, k)
        # inexact inner solves are fine: the line search and KKT check guard the outer loop
        budget = min(max_updates - updates, INNER_SWEEPS * k)
        cand, used = _solve_quadratic(H, G, beta, cols, k, lam, alpha, pf, 0.1 * tol, budget)
        updates += used

        max_step = 0.0
        for j in range(p):
            dj = abs(cand[j] - beta[j])
            if dj > max_step:
                max_step = dj
        if max_step == 0.0:
            converged = True
            break

        step_size = 1.0
        accepted = False
        for _ in range(40):
            for j in range(p):
                beta_try[j] = beta[j] + step_size * (cand[j] - beta[j])
            _matvec(X, beta_try, eta_try)
            q_try = -cox_loglik(eta_try, status, tie_end) * inv_n + _penalty(beta_try, lam, alpha, pf)
            if q_try <= q_old:
                accepted = True
                break
            step_size *= 0.5
        if not accepted:
            # no decrease along the Newton direction: numerically stationary
            converged = max_step < 1e3 * tol
            break

        for j in range(p):
            beta[j] = beta_try[j]
        for i in range(n):
            eta[i] = eta_try[i]
        q_old = q_try
        if n_trace < trace.shape[0]:
            trace[n_trace] = q_old
            n_trace += 1
        if max_step * step_size < tol:
            converged = True
            break
        ll, grad = cox_stats(eta, status, tie_start, tie_end)

    return beta, converged, updates, n_trace


@njit(cache=True, nogil=True)
def _fenwick_add(tree, i):
    n = tree.shape[0]
    i += 1
    while i <= n:
        tree[i - 1] += 1
        i += i & (-i)


@njit(cache=True, nogil=True)
def _fenwick_prefix(tree, i):
    """Count of inserted ranks < i."""
    total = 0
    while i > 0:
        total += tree[i - 1]
        i -= i & (-i)
    return total


@njit(cache=True, nogil=True)
def concordance_counts(ranks, status, tie_start, n_ranks):
    """Harrell pair counts for subjects sorted by descending time.

    ``ranks`` are dense ranks of the predictor. A pair is comparable when the
    earlier time is an event and strictly earlier than the other time.
    Returns (concordant, tied_on_predictor, comparable).
    """
    n = ranks.shape[0]
    tree = np.zeros(n_ranks, dtype=np.int64)
    concordant = 0
    tied = 0
    comparable = 0
    inserted = 0
    start = 0
    while start < n:
        stop = start
        while stop < n and tie_start[stop] == start:
            stop += 1
        for i in range(start, stop):
            if status[i] > 0.0:
                below = _fenwick_prefix(tree, ranks[i])
                upto = _fenwick_prefix(tree, ranks[i] + 1)
                concordant += below
                tied += upto - below
                comparable += inserted
        for i in range(start, stop):
            _fenwick_add(tree, ranks[i])
            inserted += 1
        start = stop
    return concordant, tied, comparable
