import itertools
import math

import numpy as np


def tetrad_difference_of(m, i1, i2, j1, j2):
    return (m[i1][j1] - m[i1][j2]) - (m[i2][j1] - m[i2][j2])


def brute_moments(w, dstar_matrix):
    """Gamma and Psi by visiting every ordered tetrad in four nested loops."""
    n, _, k = w.shape
    gamma = np.zeros((k, k))
    psi = np.zeros(k)
    count = 0
    for i1 in range(n):
        for i2 in range(n):
            for j1 in range(n):
                for j2 in range(n):
                    if len({i1, i2, j1, j2}) < 4:
                        continue
                    wt = np.array(
                        [tetrad_difference_of(w[:, :, c], i1, i2, j1, j2)
                         for c in range(k)]
                    )
                    dt = tetrad_difference_of(dstar_matrix, i1, i2, j1, j2)
                    gamma += np.outer(wt, wt)
                    psi += wt * dt
                    count += 1
    return gamma / count, psi / count


def brute_h(net, g, theta, gamma_n):
    n = net.n
    w = g.pair_tensor(net.x)
    theta = np.atleast_1d(theta)
    total = 0.0
    for i1, i2, j1, j2 in itertools.permutations(range(n), 4):
        dt = tetrad_difference_of(net.d.astype(int), i1, i2, j1, j2)
        if abs(dt) != 2:
            continue
        if abs(net.v[i1, j1] - net.v[i1, j2]) < gamma_n:
            continue
        if abs(net.v[i2, j1] - net.v[i2, j2]) < gamma_n:
            continue
        vt = tetrad_difference_of(net.v, i1, i2, j1, j2)
        wt = np.array(
            [tetrad_difference_of(w[:, :, c], i1, i2, j1, j2) for c in range(theta.size)]
        )
        total += dt * np.sign(vt + wt @ theta)
    return total / (n * (n - 1) * (n - 2) * (n - 3))


def brute_chi_bar(w, l1, l2):
    """Average of W-tilde over tetrads (l1, i2, l2, j2)."""
    n = w.shape[0]
    acc = np.zeros(w.shape[2])
    count = 0
    for i2 in range(n):
        for j2 in range(n):
            if len({l1, i2, l2, j2}) < 4:
                continue
            acc += (w[l1, l2] - w[l1, j2]) - (w[i2, l2] - w[i2, j2])
            count += 1
    return acc / count


def gaussian(u):
    return math.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)


def brute_unconditional(net, h, i, j):
    n = net.n
    total = 0.0
    for k1 in range(n):
        for k2 in range(n):
            if k1 == k2 or k1 in (i, j) or k2 in (i, j):
                continue
            total += gaussian((net.v[k1, k2] - net.v[i, j]) / h)
    return total / ((n - 2) * (n - 3) * h)


def brute_conditional(net, h, i, j):
    n = net.n
    big_l = 2 * net.k
    joint = 0.0
    marginal = 0.0
    for k1 in range(n):
        for k2 in range(n):
            if k1 == k2 or k1 in (i, j) or k2 in (i, j):
                continue
            kx = 1.0
            for c in range(net.k):
                kx *= gaussian((net.x[k1, c] - net.x[i, c]) / h)
                kx *= gaussian((net.x[k2, c] - net.x[j, c]) / h)
            joint += gaussian((net.v[k1, k2] - net.v[i, j]) / h) * kx
            marginal += kx
    pairs = (n - 2) * (n - 3)
    return (joint / (pairs * h ** (big_l + 1))) / (marginal / (pairs * h ** big_l))
