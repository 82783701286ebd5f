"""Designer-side learning algorithms behind a propose/observe contract.

The search algorithms are written as generators: each ``yield`` hands a
scheme to the environment for one period and receives the feedback tuple
``(signal, action, state)`` back.  Sub-searches compose with ``yield from``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Generator

import numpy as np

from .core import Instance, SignalingScheme, compute_margins, optimal_actions
from .errors import HorizonExhausted, NoDistinguishablePair, PreconditionViolated
from .optimal import optimal_scheme_binary, optimal_scheme_general, order_states_binary, scheme_from_strength
from .robustify import RobustificationParams, project_to_floor, robust_optimal, robustify_detailed

Feedback = tuple[int, int, "int | None"]


@dataclass(frozen=True)
class Wait:
    """Play ``scheme`` until ``signal`` is realized; other periods are idle."""

    scheme: SignalingScheme
    signal: int


Search = Generator["SignalingScheme | Wait", Feedback, object]


class Learner:
    """Base class: ``propose`` the scheme for the current period, then
    ``observe`` what happened.  ``done`` returns the exploitation scheme once
    the learner has committed to one."""

    name = "learner"
    state_observing = False

    def __init__(self):
        self.final_scheme: SignalingScheme | None = None
        self.pending_signal: int | None = None
        self._gen = self._run()
        self._set(next(self._gen))

    def _set(self, item) -> None:
        if isinstance(item, Wait):
            self._scheme, self.pending_signal = item.scheme, item.signal
        else:
            self._scheme, self.pending_signal = item, None

    def _run(self) -> Search:
        raise NotImplementedError

    def _exploit(self, scheme: SignalingScheme):
        self.final_scheme = scheme
        while True:
            yield scheme

    def propose(self) -> SignalingScheme:
        return self._scheme

    def observe(self, signal: int, action: int, state: int | None = None) -> None:
        if self.final_scheme is None:
            self._set(self._gen.send((signal, action, state)))

    def observe_block(self, signals, actions, states=None) -> None:
        for k in range(len(signals)):
            if self.final_scheme is not None:
                return
            self.observe(int(signals[k]), int(actions[k]), None if states is None else int(states[k]))

    def done(self) -> SignalingScheme | None:
        return self.final_scheme

    def stable_periods(self) -> float:
        """Periods for which ``propose`` is guaranteed not to change."""
        return math.inf if self.final_scheme is not None else 1


# ----------------------------------------------------------------------------
# ratio search between two states


@dataclass
class RatioEstimate:
    rho: float
    ell: float
    r: float
    a1: int
    a_tilde: int
    probes: list[tuple[float, int]] = field(default_factory=list)
    periods: int = 0
    complete: bool = False


def probe_scheme(q: float, w1: int, w2: int, n_states: int) -> SignalingScheme:
    """Two-signal scheme whose signal 0 fires only in w1/w2 with odds ratio q.

    Signal 1 carries all remaining mass.
    """
    send = np.zeros(n_states)
    if q <= 1:
        send[w1], send[w2] = 1.0, q
    else:
        send[w1], send[w2] = 1.0 / q, 1.0
    return SignalingScheme(np.column_stack([send, 1.0 - send]))


def ratio_search(w1: int, w2: int, eps: float, G: float, p0: float, v: np.ndarray,
                 record: RatioEstimate | None = None) -> Search:
    """Binary search for prior(w1)/prior(w2); returns a RatioEstimate.

    The estimate satisfies rho <= ratio <= rho + eps when the receiver
    best-responds.  ``record`` (if given) is updated in place so a caller
    can read a partial estimate when the horizon runs out.
    """
    v = np.asarray(v, dtype=float)
    n_states = v.shape[1]
    a1 = int(np.argmax(v[:, w1]))
    est = record if record is not None else RatioEstimate(0.0, 0.0, 0.0, a1, a1)
    est.a1 = a1
    est.a_tilde = int(np.argmax(v[:, w2]))
    if est.a_tilde == a1:
        raise NoDistinguishablePair(f"states {w1} and {w2} share the optimal action")
    est.ell, est.r = 0.0, 1.0 / (G * p0)

    def estimate(ell):
        return ell * (v[est.a_tilde, w2] - v[a1, w2]) / (v[a1, w1] - v[est.a_tilde, w1])

    while est.r - est.ell > eps * G:
        q = (est.ell + est.r) / 2
        if not est.ell < q < est.r:
            break  # bracket is down to adjacent floats; it cannot shrink further
        probe = Wait(probe_scheme(q, w1, w2, n_states), 0)
        while True:
            signal, action, _ = yield probe
            est.periods += 1
            if signal == 0:
                break
        est.probes.append((q, action))
        if action == a1:
            est.ell = q
        else:
            est.r = q
            est.a_tilde = action
        est.rho = estimate(est.ell)
    est.rho = estimate(est.ell)
    est.complete = True
    return est


@dataclass
class PairEstimate:
    rho: float
    parts: list[RatioEstimate]
    pivot: int | None = None


def ratio_any_pair(wi: int, wj: int, eps: float, margins, p0: float, v: np.ndarray) -> Search:
    if eps > p0 / 2:
        raise PreconditionViolated(f"eps = {eps:g} exceeds p0/2 = {p0 / 2:g}")
    acts = margins.optimal_action
    if acts[wi] != acts[wj]:
        est = yield from ratio_search(wi, wj, eps, margins.G, p0, v)
        return PairEstimate(est.rho, [est])
    if margins.distinguishable_pair is None:
        raise NoDistinguishablePair("every state shares one optimal action")
    wk = next(w for w in margins.distinguishable_pair if acts[w] != acts[wi])
    ik = yield from ratio_search(wi, wk, eps, margins.G, p0, v)
    jk = yield from ratio_search(wj, wk, eps, margins.G, p0, v)
    return PairEstimate(ik.rho / jk.rho, [ik, jk], pivot=wk)


def check_pers(M: float, ordering) -> Search:
    """Play pi^M until signal 1 fires; True iff the receiver then takes action 1."""
    probe = Wait(scheme_from_strength(M, ordering), 1)
    while True:
        signal, action, _ = yield probe
        if signal == 1:
            return action == 1


class SubroutineLearner(Learner):
    """Runs one search generator, stores its return value in ``result`` and
    then plays ``fallback`` (uninformative by default) forever."""

    name = "subroutine"

    def __init__(self, factory: Callable[[], Search], n_states: int, fallback: SignalingScheme | None = None):
        self._factory = factory
        self._fallback = fallback or SignalingScheme.uninformative(n_states)
        self.result = None
        self.finished = False
        super().__init__()

    def _run(self):
        self.result = yield from self._factory()
        self.finished = True
        yield from self._exploit(self._fallback)

    def outcome(self):
        """The search's return value; raises if the horizon cut it short."""
        if not self.finished:
            raise HorizonExhausted("search did not finish within the horizon")
        return self.result


# ----------------------------------------------------------------------------
# full algorithms


class LearnAndRobustify(Learner):
    """Ratio-search every state against the first, rebuild the prior and
    play the robustified optimal scheme for the estimate."""

    name = "alg3"

    def __init__(self, u, v, p0: float, T: int, eps_exponent: float = 5.0, rng=None):
        self.u = np.asarray(u, dtype=float)
        self.v = np.asarray(v, dtype=float)
        self.p0 = p0
        self.T = T
        self.n = self.v.shape[1]
        self.trivial = len(set(optimal_actions(self.v).tolist())) == 1
        self.margins = None if self.trivial else compute_margins(self.u, self.v, p0)
        self.eps = math.nan if self.trivial else p0**eps_exponent * self.margins.D / (42 * self.n * T)
        self.radius = 6 * self.n * self.eps / p0**3
        self.estimates: list[PairEstimate] = []
        self.mu_hat: np.ndarray | None = None
        self.exploration_periods = 0
        self.robust = None
        super().__init__()

    def _run(self):
        if self.trivial:
            # the receiver plays the same action whatever he believes
            yield from self._exploit(SignalingScheme.uninformative(self.n))
        rhos = []
        for i in range(1, self.n):
            est = yield from ratio_any_pair(i, 0, self.eps, self.margins, self.p0, self.v)
            self.estimates.append(est)
            rhos.append(est.rho)
        self.exploration_periods = sum(p.periods for e in self.estimates for p in e.parts)
        first = 1.0 / (1.0 + sum(rhos))
        self.mu_hat = np.array([first] + [r * first for r in rhos])
        self.robust = robust_optimal(self.mu_hat, self.radius, self.p0, self.margins, self.u, self.v)
        yield from self._exploit(self.robust.scheme)


class StrengthSearch(Learner):
    """Binary-action search for the optimal persuasion strength."""

    name = "alg5"

    def __init__(self, u, v, p0: float, T: int, rng=None):
        self.u = np.asarray(u, dtype=float)
        self.v = np.asarray(v, dtype=float)
        self.p0 = p0
        self.T = T
        self.ordering = order_states_binary(self.u, self.v)
        self.n = self.v.shape[1]
        self.probes: list[tuple[float, bool]] = []
        self.phase = "I"
        self.m_low: float | None = None
        self.interval: tuple[float, float] | None = None
        super().__init__()

    def _check(self, M: float):
        if M > self.n:
            # beyond the family; M* <= |states| so the answer is known
            result = False
        else:
            result = yield from check_pers(M, self.ordering)
        self.probes.append((M, result))
        return result

    def _run(self):
        m_low = float(self.n)
        while not (yield from self._check(m_low)):
            m_low /= 2
        self.m_low = m_low
        self.phase = "II"
        L, R = m_low, 2 * m_low
        self.interval = (L, R)
        while R - L > 1.0 / self.T:
            step = (R - L) ** 2 / (2 * L)
            i = 1
            while (yield from self._check(L + i * step)):
                i += 1
            L, R = L + (i - 1) * step, L + i * step
            self.interval = (L, R)
        self.phase = "exploit"
        yield from self._exploit(scheme_from_strength(min(L, self.n), self.ordering))


class EmpiricalBaseline(Learner):
    """Estimate the prior from observed states and play a robustified
    optimal scheme with a shrinking confidence radius."""

    name = "baseline_empirical"
    state_observing = True

    def __init__(self, u, v, p0: float, T: int, cadence: int | float = 1, geometric: float | None = None, rng=None):
        self.u = np.asarray(u, dtype=float)
        self.v = np.asarray(v, dtype=float)
        self.p0 = p0
        self.T = T
        self.n = self.v.shape[1]
        self.margins = compute_margins(self.u, self.v, p0)
        self.limit = p0**2 * self.margins.D / 2
        self.cadence = int(cadence)
        self.geometric = geometric
        self.counts = np.zeros(self.n, dtype=np.int64)
        self.t = 0
        self.recomputes = 0
        self.final_scheme = None
        self.pending_signal = None
        self._recompute()

    def radius(self, t: int) -> float:
        if t == 0:
            return self.limit
        return min(self.limit, math.sqrt(2 * self.n * math.log(2 * self.T) / t))

    def estimate(self) -> np.ndarray:
        return (self.counts + 1.0) / (self.t + self.n)

    def _recompute(self):
        mu_hat, widen = project_to_floor(self.estimate(), self.p0)
        eps = min(self.limit, self.radius(self.t) + widen)
        pi_hat, _ = optimal_scheme_general(mu_hat, self.u, self.v)
        params = RobustificationParams.from_margins(eps, self.p0, self.margins)
        self._scheme = robustify_detailed(mu_hat, pi_hat, params, self.u, self.v, self.margins.optimal_action).scheme
        self.recomputes += 1
        if self.geometric:
            self._next = max(self.t + 1, math.ceil(self.t * self.geometric))
        else:
            self._next = self.t + self.cadence

    def observe(self, signal, action, state=None):
        self.observe_block([signal], [action], None if state is None else [state])

    def observe_block(self, signals, actions, states=None):
        if states is None:
            raise PreconditionViolated("the empirical baseline needs to observe states")
        self.counts += np.bincount(np.asarray(states, dtype=int), minlength=self.n)
        self.t += len(states)
        if self.t >= self._next:
            self._recompute()

    def stable_periods(self) -> float:
        return max(1, self._next - self.t)


class FixedScheme(Learner):
    name = "fixed"

    def __init__(self, scheme: SignalingScheme):
        self._fixed = scheme
        super().__init__()

    def _run(self):
        yield from self._exploit(self._fixed)


def oracle_scheme(instance: Instance) -> SignalingScheme:
    """Optimal scheme for the true prior (knapsack route when it applies)."""
    u, v, prior = instance.u, instance.v, instance.prior
    if instance.action_count == 2 and np.all(u[1] > u[0]) and prior @ (v[0] - v[1]) > 0:
        return optimal_scheme_binary(prior, u, v).scheme
    return optimal_scheme_general(prior, u, v)[0]


LEARNER_NAMES = ("alg3", "alg5", "baseline_empirical", "oracle", "never_inform", "full_reveal")


def make_learner(name: str, instance: Instance, T: int, params: dict | None = None,
                 rng: np.random.Generator | None = None) -> Learner:
    """Build a learner from public data; only ``oracle`` reads the true prior."""
    params = dict(params or {})
    u, v, p0 = instance.u, instance.v, instance.p0
    if name == "alg3":
        learner = LearnAndRobustify(u, v, p0, T, eps_exponent=params.pop("eps_exponent", 5.0), rng=rng)
    elif name == "alg5":
        learner = StrengthSearch(u, v, p0, T, rng=rng)
    elif name == "baseline_empirical":
        learner = EmpiricalBaseline(u, v, p0, T, cadence=params.pop("cadence", 1),
                                    geometric=params.pop("geometric", None), rng=rng)
    elif name == "oracle":
        learner = FixedScheme(oracle_scheme(instance))
    elif name == "never_inform":
        learner = FixedScheme(SignalingScheme.uninformative(instance.state_count))
    elif name == "full_reveal":
        learner = FixedScheme(SignalingScheme.full_revelation(instance.state_count))
    else:
        raise KeyError(f"unknown learner {name!r}")
    if params:
        raise KeyError(f"unused parameters for {name}: {sorted(params)}")
    learner.name = name
    return learner


def learn_and_robustify_bound(n_states: int, T: int, p0: float, G: float, D: float) -> float:
    """Closed-form regret guarantee for LearnAndRobustify."""
    return (2 * n_states / p0) * math.log2(42 * n_states * T / (G**2 * p0**6 * D)) + 2


def strength_search_bound(n_states: int, T: int, p0: float) -> float:
    """Closed-form regret guarantee for StrengthSearch."""
    return (7 + 3 * math.log2(math.log2(2 * n_states * T))) / p0 + 1
