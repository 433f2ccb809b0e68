"""Shared brute-force oracles for the relocation program tests."""

import itertools
import math

import numpy as np

from transitshare.queueing import RhoTable
from transitshare import relocation as rel


def make_instance(rng, n=3, b_max=3, c_max=3, theta=None, eta=0.95, b_queue=0):
    while True:
        y = rng.integers(0, b_max + 1, size=n)
        if 1 <= y.sum() <= b_max:
            break
    C = np.array([int(rng.integers(y[j], c_max + 1)) for j in range(n)])
    pts = rng.uniform(-10, 10, size=(n, 2))
    t = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                t[i, j] = math.hypot(*(pts[i] - pts[j])) / 0.6
    return rel.RelocationInstance(
        lam=rng.uniform(0.0, 0.25, n),
        mu=rng.uniform(0.02, 0.5, n),
        t=t, r=t.copy(), y=y, C=C,
        theta=theta if theta is not None else float(rng.uniform(0.05, 1.0)),
        rho_table=RhoTable(eta, b_queue, m_max=max(int(C.max()), 1)))


# -- exhaustive oracle ---------------------------------------------------------

def oracle_max_capacity(rho_table, slots, stationed, must_serve):
    """Independent re-enumeration of staircase extreme points."""
    if stationed <= 0:
        return 0.0
    inc = rho_table.increments()[:slots]
    best = -1.0
    lo = 1 if must_serve else 0
    for a in range(lo, min(stationed, slots) + 1):
        rem = stationed - a
        if rem == 0:
            best = max(best, sum(inc[:a]))
            continue
        for k in range(1, slots - a + 1):
            if rem / k <= 1 + 1e-12:
                best = max(best, sum(inc[:a]) + (rem / k) * sum(inc[a:a + k]))
    return max(best, 0.0)


def oracle_optimum(instance, intensity):
    """Brute force over integer flows and assignments; None if infeasible."""
    ins = instance
    n, B = ins.n, ins.B
    flow_cost_by_counts = {}
    rows = []
    for i in range(n):
        opts = [w for w in itertools.product(range(int(ins.y[i]) + 1), repeat=n)
                if sum(w) <= ins.y[i] and w[i] == 0]
        rows.append(opts)
    for combo in itertools.product(*rows):
        W = np.array(combo)
        counts = tuple(ins.y - W.sum(axis=1) + W.sum(axis=0))
        if any(c > ins.C[j] for j, c in enumerate(counts)):
            continue
        cost = ins.theta * float((W * ins.r).sum())
        if counts not in flow_cost_by_counts or cost < flow_cost_by_counts[counts] - 1e-12:
            flow_cost_by_counts[counts] = cost
    best = None
    for counts, wcost in flow_cost_by_counts.items():
        caps = [ins.mu[j] * oracle_max_capacity(ins.rho_table, int(ins.C[j]),
                                                counts[j], must_serve=True)
                for j in range(n)]
        for assign in itertools.product(range(n), repeat=n):
            if any(counts[j] < 1 for j in assign):
                continue
            if intensity:
                load = np.zeros(n)
                for i, j in enumerate(assign):
                    load[j] += ins.lam[i]
                if any(load[j] > caps[j] + 1e-12 for j in range(n)):
                    continue
            xcost = sum(ins.lam[i] * ins.t[i, j] for i, j in enumerate(assign))
            total = xcost + wcost
            if best is None or total < best - 1e-12:
                best = total
    return best


