"""Episode runner, regret accounting, instance generators and brute-force oracles."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .core import (
    TIE_RTOL,
    Instance,
    SignalingScheme,
    TieRule,
    best_response,
    compute_margins,
    default_tie,
)
from .errors import (
    AssumptionViolation,
    IncompatibleLearner,
    InvalidGrid,
    RejectionBudgetExceeded,
    UnsupportedShape,
)
from .learners import Learner
from .optimal import optimal_value, order_states_binary, scheme_from_strength

BLOCK = 4096
WAIT_BLOCK = 64


def substream(seed: int, label: str) -> np.random.Generator:
    """Independent generator for ``label`` derived from the episode seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(label.encode())]))


def _draw(cum: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw: index of the first cumulative entry exceeding ``r``."""
    idx = (cum[..., :] <= r[..., None]).sum(axis=-1)
    return np.minimum(idx, cum.shape[-1] - 1)


@dataclass
class _Played:
    """Everything the runner needs about one scheme, computed once."""

    index: int
    scheme: SignalingScheme
    cum: np.ndarray  # [state, signal] row-wise cumulative
    actions: np.ndarray  # receiver response per signal (-1 if never sent)
    utility: float


def scheme_response(instance: Instance, scheme: SignalingScheme, tie: TieRule | None = None):
    """(response per signal, sender's expected utility) for the true prior.

    Any signal with positive mass gets a response, however small the mass.
    """
    tie = default_tie(scheme) if tie is None else TieRule(tie)
    joint = instance.prior[:, None] * scheme.cond
    actions = np.full(scheme.signal_count, -1, dtype=np.int64)
    total = 0.0
    for s in range(scheme.signal_count):
        if joint[:, s].sum() > 0:
            a = best_response(joint[:, s], instance.v, tie, instance.u,
                              recommended=s if scheme.direct else None)
            actions[s] = a
            total += joint[:, s] @ instance.u[a]
    return actions, float(total)


@dataclass
class EpisodeTrace:
    learner: str
    seed: int
    u_star: float
    schemes: list[SignalingScheme]
    scheme_ids: np.ndarray
    state: np.ndarray
    signal: np.ndarray
    action: np.ndarray
    instant_regret: np.ndarray
    realized: np.ndarray  # sender payoff actually received, for diagnostics
    cumulative: np.ndarray = field(init=False)

    def __post_init__(self):
        self.cumulative = np.cumsum(self.instant_regret)

    @property
    def T(self) -> int:
        return self.instant_regret.size

    @property
    def t(self) -> np.ndarray:
        return np.arange(1, self.T + 1)

    @property
    def fingerprints(self) -> list[str]:
        return [s.fingerprint() for s in self.schemes]

    @property
    def total_regret(self) -> float:
        return float(self.cumulative[-1]) if self.T else 0.0

    def records(self):
        fps = self.fingerprints
        for k in range(self.T):
            yield (k + 1, fps[self.scheme_ids[k]], int(self.state[k]), int(self.signal[k]),
                   int(self.action[k]), float(self.instant_regret[k]))


def run_episode(instance: Instance, learner: Learner, T: int, seed: int,
                tie: TieRule | str | None = None, reveal_states: bool = True,
                u_star: float | None = None) -> EpisodeTrace:
    """Play ``T`` periods of ``learner`` against fresh receivers.

    Regret is measured with the expected utility of each played scheme under
    the true prior.  ``tie=None`` lets every scheme use its natural rule
    (recommendation-following for direct schemes).
    """
    if learner.state_observing and not reveal_states:
        raise IncompatibleLearner(f"{learner.name} needs state observations")
    tie = None if tie is None else TieRule(tie)
    uniforms = _PairStream(substream(seed, "env"))
    u_star = optimal_value(instance) if u_star is None else u_star
    prior_cum = np.cumsum(instance.prior)

    state = np.empty(T, dtype=np.int64)
    signal = np.empty(T, dtype=np.int64)
    action = np.empty(T, dtype=np.int64)
    ids = np.empty(T, dtype=np.int64)
    regret = np.empty(T)
    cache: dict[int, _Played] = {}
    schemes: list[SignalingScheme] = []

    def lookup(scheme: SignalingScheme) -> _Played:
        hit = cache.get(id(scheme))
        if hit is None or hit.scheme is not scheme:
            acts, util = scheme_response(instance, scheme, tie)
            hit = _Played(len(schemes), scheme, np.cumsum(scheme.cond, axis=1), acts, util)
            schemes.append(scheme)
            cache[id(scheme)] = hit
        return hit

    t = 0
    while t < T:
        played = lookup(learner.propose())
        waiting = learner.pending_signal
        k = int(min(T - t, learner.stable_periods() if waiting is None else WAIT_BLOCK, BLOCK))
        r = uniforms.peek(k)
        st = _draw(prior_cum, r[:, 0])
        sg = _draw(played.cum[st], r[:, 1])
        if waiting is not None:
            hits = np.flatnonzero(sg == waiting)
            if hits.size:
                k = int(hits[0]) + 1
                st, sg = st[:k], sg[:k]
        uniforms.consume(k)
        ac = played.actions[sg]
        sl = slice(t, t + k)
        state[sl], signal[sl], action[sl] = st, sg, ac
        ids[sl] = played.index
        regret[sl] = u_star - played.utility
        t += k
        if k == 1:
            learner.observe(int(sg[0]), int(ac[0]), int(st[0]) if reveal_states else None)
        else:
            learner.observe_block(sg, ac, st if reveal_states else None)

    realized = instance.u[action, state] if T else np.empty(0)
    return EpisodeTrace(learner.name, seed, u_star, schemes, ids, state, signal, action, regret, realized)


class _PairStream:
    """Buffered (state, signal) uniform pairs, consumed strictly in order.

    Blocks are drawn ahead and only the used prefix is consumed, so the
    sequence of pairs a period sees does not depend on block sizes.
    """

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.buf = np.empty((0, 2))
        self.pos = 0

    def peek(self, k: int) -> np.ndarray:
        if self.pos + k > len(self.buf):
            rest = self.buf[self.pos:]
            fresh = self.rng.random(2 * max(BLOCK, k)).reshape(-1, 2)
            self.buf, self.pos = np.vstack([rest, fresh]), 0
        return self.buf[self.pos:self.pos + k]

    def consume(self, k: int) -> None:
        self.pos += k


# ----------------------------------------------------------------------------
# instance generators


def gen_example_basic() -> Instance:
    """Two states (innocent, guilty), two actions (acquit, convict)."""
    return Instance(
        u=[[0.0, 0.0], [1.0, 1.0]],
        v=[[1.0, 0.0], [0.0, 1.0]],
        prior=[0.7, 0.3],
        p0=0.25,
        states=("innocent", "guilty"),
        actions=("acquit", "convict"),
        meta={"generator": "example_basic"},
    )


def gen_random(n_states: int, n_actions: int, seed: int, binary: bool = False,
               min_prior: float = 0.05, min_margin: float = 1e-3, budget: int = 10_000) -> Instance:
    """Rejection-sample an instance satisfying every modelling assumption.

    ``binary`` forces two actions, a sender who strictly prefers action 1 and
    a receiver who prefers action 0 at the prior.  The recorded p0 is the
    smallest prior entry.
    """
    if not (1 <= n_states <= 8 and 1 <= n_actions <= 8):
        raise UnsupportedShape("generator supports up to 8 states and 8 actions")
    if binary:
        n_actions = 2
    rng = np.random.default_rng(seed)
    for attempt in range(budget):
        prior = rng.dirichlet(np.ones(n_states))
        u = rng.random((n_actions, n_states))
        v = rng.random((n_actions, n_states))
        if prior.min() < min_prior:
            continue
        if binary:
            u = np.sort(u, axis=0)
            if np.any(u[1] - u[0] < min_margin) or prior @ (v[0] - v[1]) <= min_margin:
                continue
        try:
            margins = compute_margins(u, v)
        except AssumptionViolation:
            continue
        if margins.G < min_margin or margins.D < min_margin or margins.distinguishable_pair is None:
            continue
        p0 = float(prior.min())
        return Instance(u=u, v=v, prior=prior, p0=p0,
                        meta={"generator": "random", "seed": seed, "attempts": attempt + 1,
                              "p0": p0, "G": margins.G, "D": margins.D})
    raise RejectionBudgetExceeded(f"no valid instance after {budget} attempts")


@dataclass(frozen=True)
class LowerBoundGrid:
    p0: float
    kappa: float
    gamma: np.ndarray
    eps_v: float

    @property
    def K(self) -> int:
        return self.gamma.size - 1


def lower_bound_grid(kappa: float, p0: float = 0.1) -> LowerBoundGrid:
    ratio = 2 * p0 / kappa
    K = round(ratio)
    if kappa <= 0 or K < 1 or abs(ratio - K) > 1e-9 * max(1.0, ratio):
        raise InvalidGrid(f"kappa = {kappa:g} must divide 2*p0 = {2 * p0:g}")
    gamma = p0 + kappa * np.arange(K + 1)
    return LowerBoundGrid(p0=p0, kappa=kappa, gamma=gamma, eps_v=1.0 / (20 * K))


def gen_lower_bound_general(kappa: float, prior_index: int, p0: float = 0.1) -> Instance:
    """Two states, actions (a, b, c); the receiver takes c only near posterior 1/2.

    ``prior_index`` picks the probability of state 1 from the grid.
    """
    grid = lower_bound_grid(kappa, p0)
    if not 0 <= prior_index <= grid.K:
        raise InvalidGrid(f"prior_index {prior_index} outside 0..{grid.K}")
    mu = float(grid.gamma[prior_index])
    mid = 0.5 + grid.eps_v
    return Instance(
        u=[[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]],
        v=[[1.0, 0.0], [0.0, 1.0], [mid, mid]],
        prior=[1.0 - mu, mu],
        p0=p0,
        states=("0", "1"),
        actions=("a", "b", "c"),
        meta={"generator": "lower_bound_general", "kappa": kappa, "prior_index": prior_index,
              "eps_v": grid.eps_v, "mu": mu},
    )


def gen_lower_bound_binary(T: int, v_star: float) -> Instance:
    """Two-state, two-action family whose optimal strength encodes ``v_star``.

    Receiver action 1 pays -eps in state 0; the stored matrix is the affine
    image (v + eps) / (1 + eps), which leaves best responses unchanged.
    """
    if not 0 < v_star <= 1:
        # v_star = 0 puts zero prior mass on state 1
        raise InvalidGrid("v_star must lie in (0, 1]")
    if T < 2:
        raise InvalidGrid("T must be at least 2")
    eps = float(T) ** -3
    prior = np.array([1.0 / (1.0 + eps * v_star), eps * v_star / (1.0 + eps * v_star)])
    raw = np.array([[0.0, 0.0], [-eps, 1.0]])
    v = (raw + eps) / (1.0 + eps)
    v[1, 0] = 0.0  # exact zero rather than a rounding residue
    return Instance(
        u=[[0.0, 0.0], [1.0, 1.0]],
        v=v,
        prior=prior,
        p0=float(prior.min()),
        states=("0", "1"),
        actions=("0", "1"),
        v_affine=(eps, 1.0 + eps),
        meta={"generator": "lower_bound_binary", "T": T, "v_star": v_star, "eps": eps},
    )


GENERATORS = {
    "example_basic": gen_example_basic,
    "random": gen_random,
    "lower_bound_general": gen_lower_bound_general,
    "lower_bound_binary": gen_lower_bound_binary,
}


# ----------------------------------------------------------------------------
# brute-force oracle


def _grid_best(joint: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Sender payoff of each signal column under sender-preferred ties.

    ``joint`` is [state, grid]; returns [grid].
    """
    recv = v @ joint
    scale = np.abs(recv).max(axis=0)
    best = recv >= recv.max(axis=0) - TIE_RTOL * scale
    send = np.where(best, u @ joint, -np.inf)
    out = send.max(axis=0)
    return np.where(joint.sum(axis=0) > 0, out, 0.0)


def grid_optimal_two_state(prior, u, v, step: float = 1e-3) -> float:
    """Scan every two-signal scheme on a ``step`` grid (two states only)."""
    prior = np.asarray(prior, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if prior.size != 2:
        raise UnsupportedShape("the two-signal scan needs exactly two states")
    n = int(round(1 / step))
    xs = np.linspace(0.0, 1.0, n + 1)
    x, y = np.meshgrid(xs, xs, indexing="ij")
    x, y = x.ravel(), y.ravel()
    s0 = np.vstack([prior[0] * x, prior[1] * y])
    s1 = np.vstack([prior[0] * (1 - x), prior[1] * (1 - y)])
    return float(np.max(_grid_best(s0, u, v) + _grid_best(s1, u, v)))


def oracle_grid_optimal(instance: Instance, step: float = 1e-3) -> float:
    """Brute-force U*, independent of the LP and the knapsack routine."""
    if instance.state_count == 2:
        return grid_optimal_two_state(instance.prior, instance.u, instance.v, step)
    if instance.action_count == 2 and np.all(instance.u[1] > instance.u[0]):
        ordering = order_states_binary(instance.u, instance.v)
        best = -math.inf
        for M in np.arange(0.0, instance.state_count + step / 2, step):
            scheme = scheme_from_strength(min(M, instance.state_count), ordering)
            best = max(best, scheme_response(instance, scheme)[1])
        return best
    raise UnsupportedShape("grid oracle needs two states or two actions")
