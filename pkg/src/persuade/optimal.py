"""Optimal signaling schemes when the prior is known."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import lp
from .core import SignalingScheme
from .errors import NotDirect, PriorPrefersAction1, SenderPreferenceViolated, StrengthOutOfRange

# Relative size below which the knapsack item at the threshold is treated as weightless.
DEGENERATE_RTOL = 1e-12


def optimal_scheme_general(prior, u, v) -> tuple[SignalingScheme, float]:
    """Best direct persuasive scheme for ``prior`` via the persuasiveness LP."""
    prior = np.asarray(prior, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n_a, n_s = u.shape

    def var(w, a):
        return w * n_a + a

    n = n_s * n_a
    obj = np.zeros(n)
    for w in range(n_s):
        for a in range(n_a):
            obj[var(w, a)] = prior[w] * u[a, w]
    prog = lp.LinearProgram(objective=obj.tolist())
    for a in range(n_a):
        for b in range(n_a):
            if a == b:
                continue
            row = np.zeros(n)
            for w in range(n_s):
                row[var(w, a)] = prior[w] * (v[a, w] - v[b, w])
            prog.add(row, lp.GE, 0.0)
    for w in range(n_s):
        row = np.zeros(n)
        row[w * n_a:(w + 1) * n_a] = 1.0
        prog.add(row, lp.EQ, 1.0)
    sol = lp.solve(prog)
    if not sol.optimal:
        raise lp.NumericalFailure(f"persuasion LP returned {sol.status}")
    cond = np.clip(sol.x.reshape(n_s, n_a), 0.0, None)
    cond /= cond.sum(axis=1, keepdims=True)
    return SignalingScheme(cond, direct=True), sol.objective_value


@dataclass(frozen=True)
class BinaryOrdering:
    order: tuple[int, ...]  # original state indices, greedy order
    n_minus: int

    @property
    def n_states(self) -> int:
        return len(self.order)


def order_states_binary(u, v) -> BinaryOrdering:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape[0] != 2:
        raise ValueError("binary-action instances only")
    if np.any(u[1] <= u[0]):
        raise SenderPreferenceViolated("u(1, w) <= u(0, w) for some state")
    weight = v[0] - v[1]
    minus = [w for w in range(u.shape[1]) if weight[w] <= 0]
    plus = [w for w in range(u.shape[1]) if weight[w] > 0]
    plus.sort(key=lambda w: (-(u[1, w] - u[0, w]) / weight[w], w))
    return BinaryOrdering(tuple(minus + plus), len(minus))


@dataclass(frozen=True)
class BinaryOptimum:
    scheme: SignalingScheme
    threshold_state: int  # original state index of the threshold state
    threshold_position: int  # its position in ``ordering.order``
    m_star: float
    ordering: BinaryOrdering
    value: float


def optimal_scheme_binary(prior, u, v) -> BinaryOptimum:
    """Greedy fractional-knapsack solution of the binary-action LP."""
    prior = np.asarray(prior, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    weight = prior * (v[0] - v[1])
    if not weight.sum() > 0:
        raise PriorPrefersAction1(f"sum prior*(v0-v1) = {weight.sum():g}")
    ordering = order_states_binary(u, v)
    scale = np.abs(weight).max()

    send = np.zeros(prior.size)
    cum = 0.0
    pos = dagger = None
    for pos, w in enumerate(ordering.order):
        if cum + weight[w] > 0:
            dagger = w
            if weight[w] > DEGENERATE_RTOL * scale:
                send[w] = min(max(-cum / weight[w], 0.0), 1.0)
            break
        send[w] = 1.0
        cum += weight[w]
    cond = np.column_stack([1.0 - send, send])
    value = float(prior @ (send * (u[1] - u[0])) + prior @ u[0])
    return BinaryOptimum(
        scheme=SignalingScheme(cond, direct=True),
        threshold_state=int(dagger),
        threshold_position=int(pos),
        m_star=float(send.sum()),
        ordering=ordering,
        value=value,
    )


def scheme_from_strength(M: float, ordering: BinaryOrdering) -> SignalingScheme:
    n = ordering.n_states
    if not 0 <= M <= n:
        raise StrengthOutOfRange(f"M = {M} outside [0, {n}]")
    whole = min(int(math.floor(M)), n)
    send = np.zeros(n)
    for k, w in enumerate(ordering.order):
        if k < whole:
            send[w] = 1.0
        elif k == whole:
            send[w] = M - whole
    return SignalingScheme(np.column_stack([1.0 - send, send]), direct=True)


def strength_of(scheme: SignalingScheme) -> float:
    if not scheme.direct or scheme.signal_count != 2:
        raise NotDirect("persuasion strength needs a binary direct scheme")
    return float(scheme.cond[:, 1].sum())


def optimal_value(instance) -> float:
    """U* for an instance, using the exact knapsack route whenever it applies."""
    if instance.action_count == 2 and np.all(instance.u[1] > instance.u[0]):
        weight = instance.prior @ (instance.v[0] - instance.v[1])
        if weight > 0:
            return optimal_scheme_binary(instance.prior, instance.u, instance.v).value
        # receiver already plays action 1 without information
        return float(instance.prior @ instance.u[1])
    return optimal_scheme_general(instance.prior, instance.u, instance.v)[1]
