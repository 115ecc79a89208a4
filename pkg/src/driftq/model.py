"""Problem data for drift control of a reflected queue.

An instance describes a one-dimensional reflected diffusion whose drift is
chosen from a ladder theta_0 < theta_1 < ... < theta_K built by switching on
promotion activities 1..K. Activity k adds mu_k to the drift at marginal cost
rate c_k per unit of drift, with 0 < c_1 < ... < c_K, so the cheapest
activities are used first. Holding cost h accrues per unit of state per unit
time, and reflection at the origin is billed at p per unit of pushed-back
mass (idleness). The activation cost c(x) of sustaining drift x, its step
selector psi, and its convex conjugate phi are the primitives every solver
route is built on.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, UnboundedError, ValidationError

__all__ = [
    "ProblemInstance",
    "ConjugatePair",
    "build_instance",
    "conjugate_pair",
    "cost_c",
    "psi",
    "phi",
    "beta_lower",
    "lipschitz_bound",
    "never_promote_cost",
    "theta_to_delta",
    "delta_cost",
]


@dataclass(frozen=True)
class ProblemInstance:
    """Validated problem data plus derived ladder quantities.

    Attributes derived at construction:
        theta: drift ladder (theta_0, ..., theta_K), strictly increasing.
        c_at_theta: activation cost at each ladder point, c_at_theta[j] =
            sum_{i<=j} c_i mu_i (exact prefix sums, c_at_theta[0] = 0).
        j_star: largest j with theta_j < 0 (exists because theta_0 < 0).
    """

    theta0: float
    mu: tuple[float, ...]
    c: tuple[float, ...]
    sigma2: float
    h: float
    p: float
    theta: tuple[float, ...] = field(init=False, repr=False)
    c_at_theta: tuple[float, ...] = field(init=False, repr=False)
    j_star: int = field(init=False, repr=False)

    def __post_init__(self) -> None:
        scalars = [("theta0", self.theta0), ("sigma2", self.sigma2),
                   ("h", self.h), ("p", self.p)]
        for name, val in scalars + [("mu", x) for x in self.mu] + [("c", x) for x in self.c]:
            if not math.isfinite(val):
                raise ValidationError(f"{name} must be finite, got {val!r}")
        if len(self.mu) == 0:
            raise ValidationError("at least one promotion activity is required")
        if len(self.mu) != len(self.c):
            raise ValidationError(
                f"mu and c must have equal length, got {len(self.mu)} and {len(self.c)}")
        if not self.theta0 < 0:
            raise ValidationError(f"theta0 must be negative, got {self.theta0}")
        if any(m <= 0 for m in self.mu):
            raise ValidationError("every mu_k must be positive")
        if self.c[0] <= 0 or any(a >= b for a, b in zip(self.c, self.c[1:])):
            raise ValidationError("c must be positive and strictly increasing")
        if not self.sigma2 > 0:
            raise ValidationError(f"sigma2 must be positive, got {self.sigma2}")
        if not self.h > 0:
            raise ValidationError(f"h must be positive, got {self.h}")
        if not self.p > 0:
            raise ValidationError(f"p must be positive, got {self.p}")

        ladder = [self.theta0]
        costs = [0.0]
        for m, rate in zip(self.mu, self.c):
            ladder.append(ladder[-1] + m)
            costs.append(costs[-1] + rate * m)
        object.__setattr__(self, "theta", tuple(ladder))
        object.__setattr__(self, "c_at_theta", tuple(costs))
        # theta_0 < 0 guarantees the set {j : theta_j < 0} is nonempty
        object.__setattr__(self, "j_star", max(j for j, t in enumerate(ladder) if t < 0))

    @property
    def n_activities(self) -> int:
        return len(self.mu)

    @property
    def domain_tol(self) -> float:
        """Absolute slack allowed when clamping a drift to [theta_0, theta_K]."""
        return 1e-9 * (self.theta[-1] - self.theta[0])


@dataclass(frozen=True)
class ConjugatePair:
    """The activation cost's convex conjugate, tabulated at its kinks.

    phi(y) = max over admissible drifts x of (y x - c(x)); piecewise linear
    with slopes equal to the ladder points and kinks at the marginal costs.
    """

    breakpoints: tuple[float, ...]   # kink locations in y: (c_1, ..., c_K)
    levels: tuple[float, ...]        # slopes: the drift ladder (theta_0..theta_K)
    phi_at_kinks: tuple[float, ...]  # phi evaluated at each breakpoint
    beta_lower: float                # -inf phi, finite iff theta_K >= 0


def build_instance(theta0: float, mu: Sequence[float], c: Sequence[float],
                   sigma2: float, h: float, p: float) -> ProblemInstance:
    """Validate raw parameters and return a ProblemInstance."""
    return ProblemInstance(float(theta0), tuple(float(m) for m in mu),
                           tuple(float(x) for x in c), float(sigma2),
                           float(h), float(p))


def _clamp_to_ladder(inst: ProblemInstance, x: float, what: str) -> float:
    lo, hi = inst.theta[0], inst.theta[-1]
    tol = inst.domain_tol
    if x < lo - tol or x > hi + tol:
        raise DomainError(f"{what} {x} outside admissible drift range [{lo}, {hi}]")
    return min(max(x, lo), hi)


def cost_c(inst: ProblemInstance, x: float) -> float:
    """Activation cost of sustaining drift x: fill activities cheapest-first.

    Piecewise linear, convex, nondecreasing, with cost_c(theta_0) = 0.
    Inputs within a small tolerance of the action interval are clamped;
    anything further out raises DomainError.
    """
    x = _clamp_to_ladder(inst, x, "drift")
    i = bisect_left(inst.theta, x)
    if i == 0:
        return 0.0
    return inst.c_at_theta[i - 1] + inst.c[i - 1] * (x - inst.theta[i - 1])


def psi(inst: ProblemInstance, y: float) -> float:
    """Step selector: the cheapest maximizer of y x - c(x) over the drifts.

    Constant at theta_{k-1} on the half-open interval (c_{k-1}, c_k]; below
    c_1 it sits at theta_0 and above c_K at theta_K. Breakpoint membership
    is decided by exact comparison.
    """
    return inst.theta[bisect_left(inst.c, y)]


def phi(inst: ProblemInstance, y: float) -> float:
    """Convex conjugate of the activation cost, max_x {y x - c(x)}."""
    i = bisect_left(inst.c, y)
    return inst.theta[i] * y - inst.c_at_theta[i]


def conjugate_pair(inst: ProblemInstance) -> ConjugatePair:
    """Tabulate phi at its kinks together with the lower cost bound."""
    return ConjugatePair(
        breakpoints=inst.c,
        levels=inst.theta,
        phi_at_kinks=tuple(phi(inst, ck) for ck in inst.c),
        beta_lower=beta_lower(inst),
    )


def beta_lower(inst: ProblemInstance) -> float:
    """Lower bound on the achievable long-run average cost, -inf phi.

    phi decreases at rate |theta_0| to the left of c_1, so its infimum sits
    at a kink whenever the right tail does not fall: slope theta_K > 0 means
    both tails rise, theta_K = 0 means the right tail is flat at the last
    kink value. theta_K < 0 leaves phi unbounded below (UnboundedError).
    """
    if inst.theta[-1] < 0:
        raise UnboundedError(
            "all ladder drifts are negative, so the conjugate has no finite infimum")
    return -min(phi(inst, ck) for ck in inst.c)


def lipschitz_bound(inst: ProblemInstance) -> float:
    """Lipschitz constant of phi: the largest drift magnitude on the ladder."""
    return max(abs(t) for t in inst.theta)


def never_promote_cost(inst: ProblemInstance) -> float:
    """Cost rate of holding the drift at theta_0 forever.

    Equals p|theta_0| + h sigma^2 / (2|theta_0|); every solver route uses it
    as the upper end of its bisection bracket.
    """
    a = abs(inst.theta0)
    return inst.p * a + inst.h * inst.sigma2 / (2.0 * a)


def theta_to_delta(inst: ProblemInstance, x: float) -> np.ndarray:
    """Activity levels that realize drift x, filling cheapest activities first.

    Returns delta in [0, 1]^K with theta_0 + sum_k mu_k delta_k = x and
    sum_k c_k mu_k delta_k = cost_c(x).
    """
    x = _clamp_to_ladder(inst, x, "drift")
    theta = inst.theta
    delta = np.empty(inst.n_activities)
    for k, m in enumerate(inst.mu):
        delta[k] = min(1.0, max(0.0, (x - theta[k]) / m))
    return delta


def delta_cost(inst: ProblemInstance, delta: Sequence[float]) -> float:
    """Promotion outlay rate sum_k c_k mu_k delta_k for activity levels delta."""
    arr = np.asarray(delta, dtype=float)
    if arr.shape != (inst.n_activities,):
        raise DomainError(
            f"expected {inst.n_activities} activity levels, got shape {arr.shape}")
    if np.any(arr < -1e-9) or np.any(arr > 1.0 + 1e-9):
        raise DomainError("activity levels must lie in [0, 1]")
    return float(np.sum(np.asarray(inst.c) * np.asarray(inst.mu) * np.clip(arr, 0.0, 1.0)))


def band_count(thresholds_asc: Sequence[float], z: float) -> int:
    """Number of thresholds at or below z, for thresholds sorted ascending.

    With the nested thresholds stored ascending as (z_K, ..., z_1), a state z
    with band_count m is governed by ladder drift theta_{K-m}: band membership
    uses z_k <= z < z_{k-1}. The closed-form policy, the policy objects, and
    the simulator all share this convention so they agree exactly.
    """
    return bisect_right(thresholds_asc, z)
