"""Compiled inner loops for the node and intercept updates.

All randomness is passed in as pre-drawn uniforms / standard normals so the
chain is driven entirely by one numpy Generator.
"""

import math

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True)
def log_expit(x):
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


@njit(cache=True)
def _dist(a, b):
    s = 0.0
    for c in range(a.shape[0]):
        t = a[c] - b[c]
        s += t * t
    return math.sqrt(s)


@njit(cache=True)
def _log_mvn(x, mean, var):
    d = x.shape[0]
    s = 0.0
    for c in range(d):
        t = x[c] - mean[c]
        s += t * t
    return -0.5 * d * (LOG_2PI + math.log(var)) - 0.5 * s / var


@njit(cache=True)
def _logsumexp(v):
    m = -np.inf
    for k in range(v.shape[0]):
        if v[k] > m:
            m = v[k]
    if m == -np.inf:
        return m
    s = 0.0
    for k in range(v.shape[0]):
        s += math.exp(v[k] - m)
    return m + math.log(s)


@njit(cache=True)
def node_between_loglik(i, gamma, Y, obs, log_tau, log1m_tau, out):
    """out[k] = log-likelihood of the observed dyads between node i and
    nodes outside block k, if node i had label k."""
    K = out.shape[0]
    # per block l: observed out-edges, out-non-edges, in-edges, in-non-edges
    c = np.zeros((K, 4))
    for j in range(gamma.shape[0]):
        if j == i:
            continue
        l = gamma[j]
        if obs[i, j]:
            if Y[i, j]:
                c[l, 0] += 1.0
            else:
                c[l, 1] += 1.0
        if obs[j, i]:
            if Y[j, i]:
                c[l, 2] += 1.0
            else:
                c[l, 3] += 1.0
    for k in range(K):
        s = 0.0
        for l in range(K):
            if l == k:
                continue
            if c[l, 0] > 0:
                s += c[l, 0] * log_tau[k, l]
            if c[l, 1] > 0:
                s += c[l, 1] * log1m_tau[k, l]
            if c[l, 2] > 0:
                s += c[l, 2] * log_tau[l, k]
            if c[l, 3] > 0:
                s += c[l, 3] * log1m_tau[l, k]
        out[k] = s


@njit(cache=True)
def node_within_loglik(i, z, gamma, Z, Y, obs, beta, out):
    """out[k] = log-likelihood of the observed dyads between node i (at
    position z) and the members of block k, if node i had label k."""
    K = out.shape[0]
    for k in range(K):
        out[k] = 0.0
    for j in range(gamma.shape[0]):
        if j == i:
            continue
        o_ij = obs[i, j]
        o_ji = obs[j, i]
        if not (o_ij or o_ji):
            continue
        l = gamma[j]
        eta = beta[l] - _dist(z, Z[j])
        # log(1 - expit(eta)) = log_expit(eta) - eta
        lp = log_expit(eta)
        if o_ij:
            out[l] += lp if Y[i, j] else lp - eta
        if o_ji:
            out[l] += lp if Y[j, i] else lp - eta


@njit(cache=True)
def node_label_loglik(i, z, gamma, Z, Y, obs, log_tau, log1m_tau, beta, out):
    """out[k] = log-likelihood of every observed dyad touching node i if
    node i had label k and position z (other nodes fixed)."""
    w = np.empty(out.shape[0])
    node_between_loglik(i, gamma, Y, obs, log_tau, log1m_tau, out)
    node_within_loglik(i, z, gamma, Z, Y, obs, beta, w)
    out += w


@njit(cache=True)
def _block_mean(k, i, gamma, Z, out):
    """Mean position of block k's members other than i; returns the count."""
    d = Z.shape[1]
    for c in range(d):
        out[c] = 0.0
    cnt = 0
    for j in range(gamma.shape[0]):
        if j != i and gamma[j] == k:
            cnt += 1
            for c in range(d):
                out[c] += Z[j, c]
    if cnt > 0:
        for c in range(d):
            out[c] /= cnt
    return cnt


@njit(cache=True)
def _neighbour_mean(k, i, gamma, Z, Y, obs, out):
    """Mean position of node i's observed neighbours (either direction) in
    block k; falls back to the block mean. Returns the count used."""
    d = Z.shape[1]
    for c in range(d):
        out[c] = 0.0
    cnt = 0
    for j in range(gamma.shape[0]):
        if j == i or gamma[j] != k:
            continue
        if (obs[i, j] and Y[i, j]) or (obs[j, i] and Y[j, i]):
            cnt += 1
            for c in range(d):
                out[c] += Z[j, c]
    if cnt == 0:
        return _block_mean(k, i, gamma, Z, out)
    for c in range(d):
        out[c] /= cnt
    return cnt


@njit(cache=True)
def _centre(k, i, gamma, Z, Y, obs, mode, out):
    if mode == 1:
        return _neighbour_mean(k, i, gamma, Z, Y, obs, out)
    return _block_mean(k, i, gamma, Z, out)


@njit(cache=True)
def propose_node(i, gamma, Z, Y, obs, log_tau, log1m_tau, beta, log_pi, sigma,
                 delta, u_label, eps, z_new, centre_mode=0):
    """Joint (label, position) proposal for node i.

    Writes the proposed position into ``z_new`` and returns
    ``(label, log_q_fwd, log_q_rev, ll_new, ll_old, lp_new, lp_old)`` where
    ll_* cover only the dyads touching node i and lp_* are the log joint
    prior of (label, position).
    """
    K = log_pi.shape[0]
    d = Z.shape[1]
    gt = gamma[i]
    zt = Z[i]
    between = np.empty(K)
    node_between_loglik(i, gamma, Y, obs, log_tau, log1m_tau, between)
    cur = np.empty(K)
    node_within_loglik(i, zt, gamma, Z, Y, obs, beta, cur)
    cur += between

    logits = log_pi + cur
    lse = _logsumexp(logits)
    g = K - 1
    acc = 0.0
    for k in range(K):
        acc += math.exp(logits[k] - lse)
        if u_label < acc:
            g = k
            break
    log_q_fwd = logits[g] - lse

    mean = np.empty(d)
    sd = math.sqrt(delta)
    if g == gt:
        for c in range(d):
            z_new[c] = zt[c] + sd * eps[c]
        lq = _log_mvn(z_new, zt, delta)
        log_q_fwd += lq
        log_q_rev = lq
    else:
        if _centre(g, i, gamma, Z, Y, obs, centre_mode, mean) > 0:
            for c in range(d):
                z_new[c] = mean[c] + sd * eps[c]
            log_q_fwd += _log_mvn(z_new, mean, delta)
        else:
            for c in range(d):
                mean[c] = 0.0
                z_new[c] = sigma[g] * eps[c]
            log_q_fwd += _log_mvn(z_new, mean, sigma[g] ** 2)
        if _centre(gt, i, gamma, Z, Y, obs, centre_mode, mean) > 0:
            log_q_rev = _log_mvn(zt, mean, delta)
        else:
            for c in range(d):
                mean[c] = 0.0
            log_q_rev = _log_mvn(zt, mean, sigma[gt] ** 2)

    if d > 0:
        new = np.empty(K)
        node_within_loglik(i, z_new, gamma, Z, Y, obs, beta, new)
        new += between
    else:
        new = cur
    logits2 = log_pi + new
    log_q_rev += logits2[gt] - _logsumexp(logits2)

    zero = np.zeros(d)
    lp_new = log_pi[g] + _log_mvn(z_new, zero, sigma[g] ** 2)
    lp_old = log_pi[gt] + _log_mvn(zt, zero, sigma[gt] ** 2)
    return g, log_q_fwd, log_q_rev, new[g], cur[gt], lp_new, lp_old


@njit(cache=True)
def sweep_nodes(gamma, Z, Y, obs, log_tau, log1m_tau, beta, log_pi, sigma,
                delta, u_label, eps, u_acc, centre_mode=0):
    """One Metropolis-Hastings pass over nodes 0..N-1 (in place).

    Returns (accepted moves, accepted label changes).
    """
    n = gamma.shape[0]
    d = Z.shape[1]
    z_new = np.empty(d)
    n_acc = 0
    n_switch = 0
    for i in range(n):
        g, lqf, lqr, lln, llo, lpn, lpo = propose_node(
            i, gamma, Z, Y, obs, log_tau, log1m_tau, beta, log_pi, sigma,
            delta, u_label[i], eps[i], z_new, centre_mode)
        log_r = lln - llo + lqr - lqf + lpn - lpo
        if math.log(u_acc[i]) < log_r:
            n_acc += 1
            if g != gamma[i]:
                n_switch += 1
            gamma[i] = g
            for c in range(d):
                Z[i, c] = z_new[c]
    return n_acc, n_switch


@njit(cache=True)
def block_loglik(k, beta_k, gamma, Z, Y, obs):
    """Log-likelihood of the observed within-block-k dyads."""
    members = np.flatnonzero(gamma == k)
    m = members.shape[0]
    s = 0.0
    for a in range(m):
        i = members[a]
        for b in range(m):
            if a == b:
                continue
            j = members[b]
            if not obs[i, j]:
                continue
            eta = beta_k - _dist(Z[i], Z[j])
            s += log_expit(eta) if Y[i, j] else log_expit(-eta)
    return s


@njit(cache=True)
def sweep_beta(beta, gamma, Z, Y, obs, mu, sigma_beta, delta_beta, eps, u):
    """Random-walk MH on each intercept in turn (in place)."""
    K = beta.shape[0]
    var = sigma_beta * sigma_beta
    n_acc = 0
    for k in range(K):
        prop = beta[k] + delta_beta * eps[k]
        log_r = (block_loglik(k, prop, gamma, Z, Y, obs)
                 - block_loglik(k, beta[k], gamma, Z, Y, obs)
                 - 0.5 * ((prop - mu) ** 2 - (beta[k] - mu) ** 2) / var)
        if math.log(u[k]) < log_r:
            beta[k] = prop
            n_acc += 1
    return n_acc


@njit(cache=True)
def block_counts(gamma, Y, obs, K):
    """Observed ordered-dyad counts: edges e[k, l] and dyads n[k, l]."""
    e = np.zeros((K, K), dtype=np.int64)
    cnt = np.zeros((K, K), dtype=np.int64)
    n = gamma.shape[0]
    for i in range(n):
        k = gamma[i]
        for j in range(n):
            if i == j or not obs[i, j]:
                continue
            l = gamma[j]
            cnt[k, l] += 1
            if Y[i, j]:
                e[k, l] += 1
    return e, cnt


@njit(cache=True)
def log_tables(tau, pi):
    """log(tau), log(1 - tau) with the unused diagonal set to 0, and
    log(pi)."""
    K = pi.shape[0]
    lt = np.zeros((K, K))
    l1 = np.zeros((K, K))
    lp = np.empty(K)
    for k in range(K):
        lp[k] = math.log(pi[k]) if pi[k] > 0 else -np.inf
        for l in range(K):
            if k != l:
                t = tau[k, l]
                lt[k, l] = math.log(t) if t > 0 else -np.inf
                l1[k, l] = math.log1p(-t) if t < 1 else -np.inf
    return lt, l1, lp
