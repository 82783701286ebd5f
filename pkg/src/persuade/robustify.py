"""Turn a scheme persuasive for an estimated prior into one that stays
persuasive on a whole l1-ball of priors around it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lp
from .core import (
    PERS_TOL,
    ZERO_SIGNAL,
    Margins,
    SignalingScheme,
    is_persuasive,
    persuasiveness_slack,
)
from .errors import DecompositionInfeasible, NotPersuasiveInput, PreconditionEpsTooLarge

# Mixture weights below this are rounding noise and are treated as zero.
Y_FLOOR = 1e-13


@dataclass(frozen=True)
class RobustificationParams:
    eps: float
    p0: float
    D: float
    eta: np.ndarray  # [action, state]

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be non-negative")
        if self.eps > self.max_eps * (1 + 1e-12):
            raise PreconditionEpsTooLarge(f"eps = {self.eps:g} > p0^2 D / 2 = {self.max_eps:g}")

    @property
    def max_eps(self) -> float:
        return self.p0**2 * self.D / 2

    @property
    def delta(self) -> float:
        return 2 * self.eps / (self.p0 * self.D)

    @classmethod
    def from_margins(cls, eps: float, p0: float, margins: Margins) -> "RobustificationParams":
        return cls(eps=eps, p0=p0, D=margins.D, eta=margins.eta)


def decompose_small_y(mu, xi) -> tuple[float, np.ndarray]:
    """Write ``mu = (1 - y) xi + y chi`` with the smallest y and chi a belief.

    When ``y == 0`` the returned chi is ``mu`` itself; it carries zero weight.
    """
    mu = np.asarray(mu, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if np.any(xi <= 0):
        raise DecompositionInfeasible("xi must be strictly positive")
    y = float(max(0.0, np.max(1.0 - mu / xi)))
    if y <= Y_FLOOR:
        # mu and xi agree to rounding; chi would be 0/0
        return 0.0, mu.copy()
    if y > 1.0:
        raise DecompositionInfeasible(f"y = {y:g} exceeds 1")
    chi = (mu - (1.0 - y) * xi) / y
    if np.any(chi < -1e-9):
        raise DecompositionInfeasible(f"chi has negative mass {chi.min():g}")
    chi = np.clip(chi, 0.0, None)
    return y, chi / chi.sum()


def project_to_floor(mu, p0: float) -> tuple[np.ndarray, float]:
    """l1-closest belief with every entry >= p0; returns (belief, l1 distance)."""
    mu = np.asarray(mu, dtype=float)
    deficit = np.clip(p0 - mu, 0.0, None)
    need = deficit.sum()
    if need <= 0:
        return mu.copy(), 0.0
    excess = np.clip(mu - p0, 0.0, None)
    if excess.sum() < need:
        raise PreconditionEpsTooLarge("p0 * |states| exceeds one")
    out = mu + deficit - excess * (need / excess.sum())
    return out, float(np.abs(out - mu).sum())


@dataclass(frozen=True)
class Robustified:
    scheme: SignalingScheme  # coalesced direct scheme
    nondirect: np.ndarray  # [state, |A| + |states|] before coalescing
    mu_hat: np.ndarray
    eps: float
    delta: float
    y: float
    chi: np.ndarray
    xi_a: dict[int, np.ndarray]
    signal_prob: np.ndarray


def robustify_detailed(mu_hat, pi_hat: SignalingScheme, params: RobustificationParams, u, v,
                       optimal_action=None) -> Robustified:
    v = np.asarray(v, dtype=float)
    n_a, n_s = v.shape
    mu_hat = np.asarray(mu_hat, dtype=float)
    _, ok = is_persuasive(mu_hat, pi_hat, v, PERS_TOL)
    if not ok:
        raise NotPersuasiveInput("input scheme is not persuasive for the estimate")

    eps = params.eps
    if mu_hat.min() < params.p0 - 1e-9:
        mu_hat, widen = project_to_floor(mu_hat, params.p0)
        eps += widen
        params = RobustificationParams(eps=eps, p0=params.p0, D=params.D, eta=params.eta)
        # pi_hat may lose persuasiveness after projection; the caller must re-optimize
        if not is_persuasive(mu_hat, pi_hat, v, PERS_TOL)[1]:
            raise NotPersuasiveInput("input scheme is not persuasive for the projected estimate")
    delta = params.delta
    acts = np.argmax(v, axis=0) if optimal_action is None else np.asarray(optimal_action)

    joint = mu_hat[:, None] * pi_hat.cond
    prob = joint.sum(axis=0)
    xi_a: dict[int, np.ndarray] = {}
    for a in range(n_a):
        if prob[a] > ZERO_SIGNAL:
            xi_a[a] = (1 - delta) * joint[:, a] / prob[a] + delta * params.eta[a]
    kept = sum(prob[a] for a in xi_a)
    xi = sum(prob[a] * xi_a[a] for a in xi_a) / kept
    y, chi = decompose_small_y(mu_hat, xi)

    nondirect = np.zeros((n_s, n_a + n_s))
    for a, xa in xi_a.items():
        nondirect[:, a] = (1 - y) * (prob[a] / kept) * xa / mu_hat
    nondirect[np.arange(n_s), n_a + np.arange(n_s)] = y * chi / mu_hat
    direct = nondirect[:, :n_a].copy()
    direct[np.arange(n_s), acts] += nondirect[np.arange(n_s), n_a + np.arange(n_s)]
    direct = np.clip(direct, 0.0, None)
    direct /= direct.sum(axis=1, keepdims=True)
    return Robustified(
        scheme=SignalingScheme(direct, direct=True),
        nondirect=nondirect,
        mu_hat=mu_hat,
        eps=eps,
        delta=delta,
        y=y,
        chi=chi,
        xi_a=xi_a,
        signal_prob=prob,
    )


def robustify(mu_hat, pi_hat: SignalingScheme, params: RobustificationParams, u, v) -> SignalingScheme:
    return robustify_detailed(mu_hat, pi_hat, params, u, v).scheme


def sample_ball(mu_hat, eps: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Priors in the simplex within l1 distance ``eps`` of ``mu_hat``.

    Starts with every pairwise vertex ``mu_hat + eps/2 (e_i - e_j)`` (clipped
    to the simplex), then fills up with uniformly scaled random directions.
    """
    mu_hat = np.asarray(mu_hat, dtype=float)
    k = mu_hat.size
    points = []
    for i in range(k):
        for j in range(k):
            if i != j:
                step = min(eps / 2, mu_hat[j])
                p = mu_hat.copy()
                p[i] += step
                p[j] -= step
                points.append(p)
    while len(points) < n:
        d = rng.standard_normal(k)
        d -= d.mean()
        norm = np.abs(d).sum()
        if norm == 0:
            continue
        d *= eps * rng.random() / norm
        neg = d < 0
        if np.any(mu_hat[neg] + d[neg] < 0):
            d *= np.min(mu_hat[neg] / -d[neg])
        points.append(mu_hat + d)
    return np.array(points[:n])


def worst_ball_slack(scheme: SignalingScheme, priors: np.ndarray, v) -> float:
    """Smallest persuasiveness slack over the sampled priors (>= 0 means persuasive).

    Only pairs of distinct actions count; the diagonal is identically zero.
    """
    off = ~np.eye(np.asarray(v).shape[0], dtype=bool)
    return float(min(persuasiveness_slack(p, scheme, v)[off].min() for p in priors))


def exact_ball_slack(scheme: SignalingScheme, mu_hat, eps: float, v) -> float:
    """Exact minimum slack over B1(mu_hat, eps) intersected with the simplex.

    One LP per ordered action pair: mu = mu_hat + p - q, p, q >= 0.
    """
    v = np.asarray(v, dtype=float)
    mu_hat = np.asarray(mu_hat, dtype=float)
    n_a, k = v.shape
    worst = np.inf
    for a in range(n_a):
        for b in range(n_a):
            if a == b:
                continue
            coef = scheme.cond[:, a] * (v[a] - v[b])
            # maximize -(coef @ (mu_hat + p - q))
            prog = lp.LinearProgram(objective=list(-coef) + list(coef))
            prog.add([1.0] * k + [1.0] * k, lp.LE, eps)
            prog.add([1.0] * k + [-1.0] * k, lp.EQ, 0.0)
            for w in range(k):
                row = np.zeros(2 * k)
                row[w], row[k + w] = 1.0, -1.0
                prog.add(row, lp.GE, -mu_hat[w])
            sol = lp.solve(prog)
            worst = min(worst, coef @ mu_hat - sol.objective_value)
    return float(worst)


def robust_optimal(mu_hat, eps: float, p0: float, margins: Margins, u, v) -> Robustified:
    """Project the estimate onto {min >= p0}, optimize for it, then robustify.

    The projection distance is added to the radius so the ball still covers
    every prior the original radius covered.
    """
    from .optimal import optimal_scheme_general

    projected, widen = project_to_floor(mu_hat, p0)
    pi_hat, _ = optimal_scheme_general(projected, u, v)
    params = RobustificationParams.from_margins(eps + widen, p0, margins)
    return robustify_detailed(projected, pi_hat, params, u, v, margins.optimal_action)
