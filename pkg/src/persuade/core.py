"""Single-period persuasion primitives.

Beliefs are plain 1-d numpy arrays over states.  Utility matrices are indexed
``[action, state]``.  Signaling schemes hold a ``[state, signal]`` matrix of
conditional probabilities.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import lp
from .errors import (
    AssumptionDViolated,
    AssumptionGViolated,
    NotDirect,
    PriorSupportViolated,
    ZeroProbabilitySignal,
)

SUM_TOL = 1e-9
PERS_TOL = 1e-9
ZERO_SIGNAL = 1e-15
# Expected utilities within this *relative* distance of the best count as tied.
# A relative rule keeps instances whose utility gaps are ~1e-15 meaningful.
TIE_RTOL = 1e-14


def as_belief(probs: Sequence[float]) -> np.ndarray:
    b = np.asarray(probs, dtype=float)
    if b.ndim != 1 or b.size == 0:
        raise ValueError("a belief is a non-empty 1-d vector")
    if np.any(b < 0) or abs(b.sum() - 1.0) > SUM_TOL:
        raise ValueError(f"not a probability vector: {b}")
    return b


class TieRule(str, enum.Enum):
    SENDER_PREFERRED = "sender_preferred"
    LOWEST_INDEX = "lowest_index"
    RECOMMENDED_THEN_SENDER = "recommended_then_sender"


@dataclass(frozen=True)
class SignalingScheme:
    cond: np.ndarray  # [state, signal]
    direct: bool = False

    def __post_init__(self):
        cond = np.array(self.cond, dtype=float)
        if cond.ndim != 2 or cond.shape[1] < 1:
            raise ValueError("scheme matrix must be [state, signal]")
        if np.any(cond < -SUM_TOL) or np.any(np.abs(cond.sum(axis=1) - 1.0) > SUM_TOL):
            raise ValueError("each state's row must be a probability vector")
        cond = np.clip(cond, 0.0, None)
        cond.setflags(write=False)
        object.__setattr__(self, "cond", cond)

    @property
    def signal_count(self) -> int:
        return self.cond.shape[1]

    @property
    def state_count(self) -> int:
        return self.cond.shape[0]

    def fingerprint(self) -> str:
        h = hashlib.sha1(np.ascontiguousarray(self.cond).tobytes())
        h.update(b"d" if self.direct else b"n")
        return h.hexdigest()[:16]

    @classmethod
    def uninformative(cls, n_states: int) -> "SignalingScheme":
        return cls(np.ones((n_states, 1)), direct=False)

    @classmethod
    def full_revelation(cls, n_states: int) -> "SignalingScheme":
        return cls(np.eye(n_states), direct=False)

    @classmethod
    def recommend(cls, actions: Sequence[int], n_actions: int) -> "SignalingScheme":
        """Direct scheme that deterministically recommends ``actions[state]``."""
        cond = np.zeros((len(actions), n_actions))
        cond[np.arange(len(actions)), actions] = 1.0
        return cls(cond, direct=True)


@dataclass(frozen=True)
class Instance:
    """One single-period game: utilities, hidden prior and the public p0."""

    u: np.ndarray  # [action, state]
    v: np.ndarray  # [action, state]
    prior: np.ndarray
    p0: float
    states: tuple[str, ...] = ()
    actions: tuple[str, ...] = ()
    # receiver utilities were mapped v -> (v + shift) / scale before storage
    v_affine: tuple[float, float] = (0.0, 1.0)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        v = np.array(self.v, dtype=float)
        prior = as_belief(self.prior)
        if u.shape != v.shape or u.ndim != 2:
            raise ValueError("u and v must share the [action, state] shape")
        if u.shape[1] != prior.size:
            raise ValueError("prior length must equal the state count")
        for name, mat in (("u", u), ("v", v)):
            if np.any(mat < 0) or np.any(mat > 1):
                raise ValueError(f"{name} entries must lie in [0, 1]")
        if not self.p0 > 0:
            raise PriorSupportViolated("p0 must be positive")
        if prior.min() < self.p0 * (1 - 1e-12):
            raise PriorSupportViolated(f"min prior {prior.min():g} < p0 = {self.p0:g}")
        for arr in (u, v, prior):
            arr.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "prior", prior)
        object.__setattr__(self, "p0", float(self.p0))
        n_a, n_s = u.shape
        if not self.states:
            object.__setattr__(self, "states", tuple(f"s{i}" for i in range(n_s)))
        if not self.actions:
            object.__setattr__(self, "actions", tuple(f"a{i}" for i in range(n_a)))

    @property
    def state_count(self) -> int:
        return self.u.shape[1]

    @property
    def action_count(self) -> int:
        return self.u.shape[0]


def posterior_update(prior: np.ndarray, scheme: SignalingScheme, signal: int) -> np.ndarray:
    joint = np.asarray(prior) * scheme.cond[:, signal]
    total = joint.sum()
    if total <= ZERO_SIGNAL:
        raise ZeroProbabilitySignal(f"signal {signal} has probability {total:g}")
    return joint / total


def argmax_set(values: np.ndarray) -> np.ndarray:
    best = values.max()
    scale = np.abs(values).max()
    return np.flatnonzero(values >= best - TIE_RTOL * scale)


def best_response(
    belief: np.ndarray,
    v: np.ndarray,
    tie: TieRule | str = TieRule.SENDER_PREFERRED,
    u_for_ties: np.ndarray | None = None,
    recommended: int | None = None,
) -> int:
    """Receiver action maximizing expected ``v`` under ``belief``.

    ``belief`` may be unnormalized (a joint column ``prior * pi(s|.)``); the
    argmax does not depend on the normalization.
    """
    tie = TieRule(tie)
    candidates = argmax_set(v @ belief)
    if candidates.size == 1 or tie is TieRule.LOWEST_INDEX:
        return int(candidates[0])
    if tie is TieRule.RECOMMENDED_THEN_SENDER and recommended is not None and recommended in candidates:
        return int(recommended)
    if u_for_ties is None:
        return int(candidates[0])
    sender = u_for_ties[candidates] @ belief
    return int(candidates[np.argmax(sender)])


def default_tie(scheme: SignalingScheme) -> TieRule:
    return TieRule.RECOMMENDED_THEN_SENDER if scheme.direct else TieRule.SENDER_PREFERRED


def signal_actions(
    prior: np.ndarray,
    scheme: SignalingScheme,
    u: np.ndarray,
    v: np.ndarray,
    tie: TieRule | str | None = None,
) -> np.ndarray:
    """Receiver response to each signal; -1 marks zero-probability signals."""
    tie = default_tie(scheme) if tie is None else TieRule(tie)
    joint = np.asarray(prior)[:, None] * scheme.cond
    mass = joint.sum(axis=0)
    out = np.full(scheme.signal_count, -1, dtype=int)
    for s in range(scheme.signal_count):
        if mass[s] > ZERO_SIGNAL:
            post = joint[:, s] / mass[s]
            out[s] = best_response(post, v, tie, u, recommended=s if scheme.direct else None)
    return out


def expected_utility(
    prior: np.ndarray,
    scheme: SignalingScheme,
    u: np.ndarray,
    v: np.ndarray,
    tie: TieRule | str | None = None,
) -> float:
    """U(prior, scheme): sender's expected utility when the receiver has ``prior``."""
    acts = signal_actions(prior, scheme, u, v, tie)
    joint = np.asarray(prior)[:, None] * scheme.cond
    total = 0.0
    for s, a in enumerate(acts):
        if a >= 0:
            total += joint[:, s] @ u[a]
    return float(total)


def sender_utility(instance: Instance, scheme: SignalingScheme, tie: TieRule | str | None = None) -> float:
    return expected_utility(instance.prior, scheme, instance.u, instance.v, tie)


def persuasiveness_slack(prior: np.ndarray, scheme: SignalingScheme, v: np.ndarray) -> np.ndarray:
    """Matrix ``[a, a']`` of sum_w prior(w) pi(a|w) (v(a,w) - v(a',w))."""
    if not scheme.direct or scheme.signal_count != v.shape[0]:
        raise NotDirect("persuasiveness is defined for direct schemes only")
    joint = np.asarray(prior)[:, None] * scheme.cond  # [state, a]
    gain = joint.T @ v.T  # [a, a'] = sum_w joint(w, a) v(a', w)
    return np.diag(gain)[:, None] - gain


def is_persuasive(
    prior: np.ndarray, scheme: SignalingScheme, v: np.ndarray, tol: float = PERS_TOL
) -> tuple[np.ndarray, bool]:
    slack = persuasiveness_slack(prior, scheme, v)
    per_action = np.all(slack >= -tol, axis=1)
    return per_action, bool(per_action.all())


@dataclass(frozen=True)
class Margins:
    G: float
    optimal_action: np.ndarray  # a_w per state
    D: float
    eta: np.ndarray  # [action, state], row a is the witness belief for a
    distinguishable_pair: tuple[int, int] | None


def optimal_actions(v: np.ndarray) -> np.ndarray:
    return np.argmax(v, axis=0)


def _dominance_lp(v: np.ndarray, a: int) -> tuple[float, np.ndarray]:
    """max t s.t. E_eta[v(a) - v(a')] >= t for all a' != a, eta in the simplex."""
    n_a, n_s = v.shape
    prog = lp.LinearProgram(
        objective=[0.0] * n_s + [1.0],
        bounds=[(0.0, np.inf)] * n_s + [(-np.inf, np.inf)],
    )
    prog.add([1.0] * n_s + [0.0], lp.EQ, 1.0)
    for b in range(n_a):
        if b != a:
            prog.add(list(v[a] - v[b]) + [-1.0], lp.GE, 0.0)
    sol = lp.solve(prog)
    eta = np.clip(sol.x[:n_s], 0.0, None)
    return sol.objective_value, eta / eta.sum()


def compute_margins(u: np.ndarray, v: np.ndarray, p0: float | None = None) -> Margins:
    """Derive G, D (with witnesses) and a distinguishable pair from public data.

    ``u`` and ``p0`` are accepted for interface symmetry; the margins depend
    on ``v`` only.
    """
    v = np.asarray(v, dtype=float)
    n_a, n_s = v.shape
    acts = optimal_actions(v)
    gaps = []
    for w in range(n_s):
        others = np.delete(v[:, w], acts[w])
        gaps.append(v[acts[w], w] - others.max() if others.size else np.inf)
    gap = min(gaps)
    if not gap > 0:
        raise AssumptionGViolated(f"minimum gap {gap:g}")

    values, witnesses = [], []
    for a in range(n_a):
        t, eta = _dominance_lp(v, a) if n_a > 1 else (np.inf, np.full(n_s, 1.0 / n_s))
        if not t > 1e-12:
            raise AssumptionDViolated(f"action {a} has margin {t:g}")
        values.append(t)
        witnesses.append(eta)

    pair = None
    for i in range(n_s):
        for j in range(i + 1, n_s):
            if acts[i] != acts[j]:
                pair = (i, j)
                break
        if pair:
            break
    return Margins(
        G=gap / 2,
        optimal_action=acts,
        D=float(min(values)),
        eta=np.array(witnesses),
        distinguishable_pair=pair,
    )
