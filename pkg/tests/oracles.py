"""Brute-force reference implementations shared by the unit and acceptance tests."""

import itertools

import numpy as np


def mann_whitney(scores, labels):
    """P(attack score > legit score) + 1/2 P(tie), by counting every pair."""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins2 = 0
    for p in pos:
        for q in neg:
            wins2 += 2 if p > q else 1 if p == q else 0
    return wins2 / (2 * len(pos) * len(neg))


def simplex_grid(n, m, cap):
    """All a in (1/m) Z^n with sum 1 and 0 <= a_i <= cap, via stars and bars."""
    kmax = int(np.floor(cap * m + 1e-9))
    bars = np.array(list(itertools.combinations(range(m + n - 1), n - 1)), dtype=np.int32)
    edges = np.concatenate([np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), m + n - 1)], axis=1)
    k = np.diff(edges, axis=1) - 1
    k = k[(k <= kmax).all(axis=1)]
    return k / m


def grid_dual_minimum(K, C, m=24):
    best = np.inf
    A = simplex_grid(len(K), m, C)
    for chunk in np.array_split(A, max(1, len(A) // 200_000)):
        vals = 0.5 * np.einsum("ij,jk,ik->i", chunk, K, chunk)
        best = min(best, float(vals.min()))
    return best


def active_set_dual_minimum(K, C):
    """Exact optimum of min 1/2 a'Ka s.t. 0<=a<=C, sum a = 1.

    Tries every split of the indices into lower-bound / free / upper-bound
    sets, solves the equality-constrained system on the free set and keeps
    the best feasible candidate."""
    n = len(K)
    best = np.inf
    for assign in itertools.product((0, 1, 2), repeat=n):
        assign = np.array(assign)
        free = np.flatnonzero(assign == 1)
        upper = np.flatnonzero(assign == 2)
        a = np.zeros(n)
        a[upper] = C
        rest = 1.0 - C * len(upper)
        if len(free) == 0:
            if abs(rest) > 1e-12:
                continue
        else:
            # [K_FF  -1][a_F]   [-K_FU a_U]
            # [1'     0][rho] = [rest     ]
            f = len(free)
            M = np.zeros((f + 1, f + 1))
            M[:f, :f] = K[np.ix_(free, free)]
            M[:f, f] = -1.0
            M[f, :f] = 1.0
            rhs = np.concatenate([-K[np.ix_(free, upper)] @ a[upper], [rest]])
            try:
                sol = np.linalg.solve(M, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
            a[free] = sol[:f]
        if np.all(a >= -1e-10) and np.all(a <= C + 1e-10) and abs(a.sum() - 1) < 1e-9:
            best = min(best, 0.5 * float(a @ K @ a))
    return best


def finite_difference_check(loss_and_grads, params, X, target, eps=1e-6):
    """Max relative error between analytic and central-difference gradients, per parameter."""
    _, grads = loss_and_grads(params, X, target)
    worst = {}
    for name, P in params.items():
        err = 0.0
        for idx in np.ndindex(P.shape):
            keep = P[idx]
            P[idx] = keep + eps
            up, _ = loss_and_grads(params, X, target)
            P[idx] = keep - eps
            down, _ = loss_and_grads(params, X, target)
            P[idx] = keep
            num = (up - down) / (2 * eps)
            ana = grads[name][idx]
            err = max(err, abs(ana - num) / max(abs(ana) + abs(num), 1e-7))
        worst[name] = err
    return worst
