"""Pure-python fallback for the matrix-factorization SGD inner loop.

Slow but dependency-free; arithmetic order mirrors the compiled kernel
exactly so the two backends produce bit-identical parameters.
"""

from __future__ import annotations


def sgd_epoch(users, items, ratings, order, mu, p, q, bu, bi, lr, reg):
    """One full pass of per-sample gradient updates in the given order."""
    d = p.shape[1]
    for t in range(order.shape[0]):
        k = order[t]
        u = users[k]
        i = items[k]
        dot = 0.0
        for j in range(d):
            dot += p[u, j] * q[i, j]
        err = ratings[k] - (mu + bu[u] + bi[i] + dot)
        bu[u] += lr * (err - reg * bu[u])
        bi[i] += lr * (err - reg * bi[i])
        for j in range(d):
            pj = p[u, j]
            p[u, j] = pj + lr * (err * q[i, j] - reg * pj)
            q[i, j] = q[i, j] + lr * (err * pj - reg * q[i, j])
