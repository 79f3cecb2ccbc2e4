"""Compiled per-node kernel of the monotone explicit scheme."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from numba import njit


@njit(cache=True, inline="always", error_model="numpy")
def _interp_pair(up, base, pstr, d, n, axes, frac):
    """I u(x + d) + I u(x - d), multilinear interpolation in index offsets.

    The two points are mirror images through the node, so they share the
    corner weights: corner ``base + o`` of the first pairs with ``base - o``.
    """
    nfree = 0
    off = 0
    for k in range(n):
        f = np.floor(d[k])
        t = d[k] - f
        off += int(f) * pstr[k]
        if t > 0.0:
            axes[nfree] = pstr[k]
            frac[nfree] = t
            nfree += 1
    total = 0.0
    for mask in range(1 << nfree):
        w = 1.0
        o = off
        for j in range(nfree):
            if (mask >> j) & 1:
                w *= frac[j]
                o += axes[j]
            else:
                w *= 1.0 - frac[j]
        total += w * (up[base + o] + up[base - o])
    return total


@njit(cache=True, inline="always", error_model="numpy")
def _directions(xi, nrm2, rho, sigma, R, W, alpha):
    """Orthonormal directions W[j] and weights alpha[j] with P = sum_j alpha_j W_j W_j^T.

    P = (1 + sigma) I - xi xi^T / (|xi|^2 + rho): nu = xi/|xi| carries
    1 + sigma - theta, theta = |xi|^2/(|xi|^2 + rho), and an orthonormal
    basis of nu's complement (Householder) carries 1 + sigma.
    """
    if nrm2 == 0.0:
        for j in range(R):
            for r in range(R):
                W[j, r] = 0.0
            W[j, j] = 1.0
            alpha[j] = 1.0 + sigma
        return
    inv = 1.0 / np.sqrt(nrm2)
    alpha[0] = 1.0 + sigma - nrm2 / (nrm2 + rho)
    if R == 2:
        W[0, 0], W[0, 1] = xi[0] * inv, xi[1] * inv
        W[1, 0], W[1, 1] = -W[0, 1], W[0, 0]
        alpha[1] = 1.0 + sigma
        return
    s0 = 1.0 if xi[0] >= 0.0 else -1.0
    # v = nu + s0 e_0; H = I - 2 v v^T / |v|^2 sends e_0 to -s0 nu
    vv = 0.0
    for r in range(R):
        v = xi[r] * inv
        if r == 0:
            v += s0
        W[0, r] = v
        vv += v * v
    for j in range(R - 1, -1, -1):
        vj = W[0, j]
        for r in range(R):
            hr = -2.0 * W[0, r] * vj / vv
            if r == j:
                hr += 1.0
            if j > 0:
                W[j, r] = hr
    for r in range(R):
        W[0, r] = xi[r] * inv
    for j in range(1, R):
        alpha[j] = 1.0 + sigma


@lru_cache(maxsize=None)
def level_set_kernel(n: int, R: int, mr: int, has_sym: bool):
    """Kernel specialised to its loop bounds, which lets the compiler unroll them."""

    def level_set_rhs(up, uc, shape, pstr, pad, h, a, S, rho, sigma, reach, ar, dt, keep, tau2, out):
        """out = keep u + dt F, F = sum_ij P_ij (X_i X_j u)*, P = (1 + sigma) I - xi xi^T / (|xi|^2 + rho).

        Returns (max |right horizontal gradient|^2, number of nodes with
        |xi|^2 < tau2, min u, max u, number of non-finite outputs).

        ``up`` holds the padded values and ``uc`` the padded field the
        coefficients are taken from (the same array except for frozen-coefficient
        steps). ``a[node, r, k]`` are the weighted frame rows, ``S[node, r, s, k]``
        the symmetrised first-order parts (ignored unless ``has_sym``) and ``ar``
        the right-frame horizontal rows used for the Lipschitz metric.
        """
        N = out.shape[0]
        idx = np.zeros(n, np.int64)
        g = np.zeros(n)
        xi = np.zeros(R)
        W = np.zeros((R, R))
        alpha = np.zeros(R)
        c = np.zeros(n)
        d = np.zeros(n)
        axes = np.zeros(n, np.int64)
        frac = np.zeros(n)
        ih = 1.0 / h
        lip2 = 0.0
        nmask = 0
        bad = 0
        umin = np.inf
        umax = -np.inf
        iK2 = 1.0 / (reach * reach)
        ih2 = 0.5 / h
        base = 0
        for k in range(n):
            base += pad * pstr[k]
        for node in range(N):
            if node > 0:
                # odometer step of the C-order multi-index
                k = n - 1
                idx[k] += 1
                base += pstr[k]
                while idx[k] == shape[k]:
                    idx[k] = 0
                    base -= shape[k] * pstr[k]
                    k -= 1
                    idx[k] += 1
                    base += pstr[k]
            u0 = up[base]
            if u0 < umin:
                umin = u0
            if u0 > umax:
                umax = u0
            for k in range(n):
                g[k] = (uc[base + pstr[k]] - uc[base - pstr[k]]) * ih2[k]
            nrm2 = 0.0
            for r in range(R):
                s = 0.0
                for k in range(n):
                    s += a[node, r, k] * g[k]
                xi[r] = s
                nrm2 += s * s
            if nrm2 < tau2:
                nmask += 1
            l2 = 0.0
            for r in range(mr):
                s = 0.0
                for k in range(n):
                    s += ar[node, r, k] * g[k]
                l2 += s * s
            if l2 > lip2:
                lip2 = l2

            _directions(xi, nrm2, rho, sigma, R, W, alpha)
            total = 0.0
            for j in range(R):
                if alpha[j] <= 0.0:
                    continue
                big = 0.0
                for k in range(n):
                    s = 0.0
                    for r in range(R):
                        s += a[node, r, k] * W[j, r]
                    c[k] = s * ih[k]
                    q = abs(c[k])
                    if q > big:
                        big = q
                if big < 1e-14:
                    continue
                t = reach / big
                for k in range(n):
                    d[k] = t * c[k]
                pair = _interp_pair(up, base, pstr, d, n, axes, frac)
                total += alpha[j] * (pair - 2.0 * u0) * (big * big * iK2)
            if has_sym:
                irho = 1.0 / (nrm2 + rho)
                for k in range(n):
                    b = 0.0
                    for r in range(R):
                        for s_ in range(R):
                            p = -xi[r] * xi[s_] * irho
                            if r == s_:
                                p += 1.0 + sigma
                            b += p * S[node, r, s_, k]
                    if b > 0.0:
                        total += b * (up[base + pstr[k]] - u0) * ih[k]
                    elif b < 0.0:
                        total += b * (u0 - up[base - pstr[k]]) * ih[k]
            v = keep * u0 + dt * total
            if not np.isfinite(v):
                bad += 1
            out[node] = v
        return lip2, nmask, umin, umax, bad

    return njit(cache=True, error_model="numpy")(level_set_rhs)


@njit(cache=True, error_model="numpy")
def diagonal_weight(shape, h, a, S, has_sym, rho, sigma, reach, dt, grads):
    """Smallest coefficient of u(x) in u + dt F over nodes, for gradients ``grads``.

    Uses the bound 2 alpha / t^2 per direction (interpolation never lands on
    the node itself) plus |b_k| / h_k for the upwind first-order part.
    """
    n = shape.shape[0]
    R = a.shape[1]
    N = a.shape[0]
    worst = 1.0
    xi = np.zeros(R)
    W = np.zeros((R, R))
    alpha = np.zeros(R)
    for node in range(N):
        nrm2 = 0.0
        for r in range(R):
            s = 0.0
            for k in range(n):
                s += a[node, r, k] * grads[node, k]
            xi[r] = s
            nrm2 += s * s
        _directions(xi, nrm2, rho, sigma, R, W, alpha)
        lose = 0.0
        for j in range(R):
            big = 0.0
            for k in range(n):
                s = 0.0
                for r in range(R):
                    s += a[node, r, k] * W[j, r]
                q = abs(s) / h[k]
                if q > big:
                    big = q
            if big < 1e-14 or alpha[j] <= 0.0:
                continue
            t = reach / big
            lose += 2.0 * alpha[j] / (t * t)
        if has_sym:
            for k in range(n):
                b = 0.0
                for r in range(R):
                    for s_ in range(R):
                        p = -xi[r] * xi[s_] / (nrm2 + rho)
                        if r == s_:
                            p += 1.0 + sigma
                        b += p * S[node, r, s_, k]
                lose += abs(b) / h[k]
        val = 1.0 - dt * lose
        if val < worst:
            worst = val
    return worst
