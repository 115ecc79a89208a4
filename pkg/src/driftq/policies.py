"""Benchmark policies and their exact long-run average costs.

A static policy holds one negative drift forever; its cost has the closed
form c(theta) + h sigma^2 / (2|theta|) + p|theta| (stationary mean state of
a negatively drifted reflected diffusion plus reflection billing plus the
promotion outlay). A randomized static policy time-shares several drifts
with fixed weights: the state sees the effective drift sum_i w_i theta_i
while the outlay averages the per-drift activation costs, which beats every
plain static choice between the same ladder points. The dynamic policy is
the nested-threshold band rule produced by the solver routes.

All three expose drift_at (state -> drift) and bands() (threshold/drift/
outlay tables indexed by band membership), which is the exact contract the
simulator consumes, so simulated and analytic costs are comparable with no
translation layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .closedform import SolveResult
from .errors import DomainError, ValidationError
from .model import ProblemInstance, band_count, cost_c

__all__ = [
    "StaticPolicy",
    "RandomizedStaticPolicy",
    "DynamicPolicy",
    "static_cost",
    "randomized_static_cost",
    "best_static_ladder",
    "best_static",
]


def _validated_static_drift(inst: ProblemInstance, theta: float) -> float:
    """Clamp theta into [theta_0, 0) or raise DomainError."""
    if not math.isfinite(theta):
        raise DomainError(f"static drift must be finite, got {theta!r}")
    if theta >= 0.0:
        raise DomainError(
            f"static drift must be negative for a stationary regime, got {theta!r}")
    if theta < inst.theta[0] - inst.domain_tol:
        raise DomainError(
            f"static drift {theta!r} below the admissible minimum {inst.theta[0]!r}")
    return max(theta, inst.theta[0])


@dataclass(frozen=True)
class StaticPolicy:
    """Hold one drift in [theta_0, 0) forever."""

    instance: ProblemInstance
    theta: float

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "theta", _validated_static_drift(self.instance, self.theta))

    def drift_at(self, z: float) -> float:
        if z < 0.0:
            raise DomainError(f"state must be nonnegative, got {z!r}")
        return self.theta

    def bands(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (np.empty(0),
                np.array([self.theta]),
                np.array([cost_c(self.instance, self.theta)]))


@dataclass(frozen=True)
class RandomizedStaticPolicy:
    """Time-share several drifts with fixed weights.

    The state evolves under the effective drift sum_i w_i theta_i (which
    must be negative) while the promotion outlay is the weighted average of
    the individual activation costs. Weights must be nonnegative and sum to
    one within 1e-9.
    """

    instance: ProblemInstance
    drifts: tuple[float, ...]
    weights: tuple[float, ...]
    effective_drift: float = field(init=False, repr=False)
    outlay_rate: float = field(init=False, repr=False)

    def __post_init__(self) -> None:
        drifts = tuple(float(d) for d in self.drifts)
        weights = tuple(float(w) for w in self.weights)
        if len(drifts) == 0 or len(drifts) != len(weights):
            raise ValidationError(
                f"need equal, nonzero counts of drifts and weights, "
                f"got {len(drifts)} and {len(weights)}")
        if any(not math.isfinite(w) or w < 0.0 for w in weights):
            raise ValidationError("weights must be nonnegative and finite")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ValidationError(
                f"weights must sum to one, got {sum(weights)!r}")
        lo, hi = self.instance.theta[0], self.instance.theta[-1]
        tol = self.instance.domain_tol
        clamped = []
        for d in drifts:
            if not math.isfinite(d) or d < lo - tol or d > hi + tol:
                raise DomainError(
                    f"drift {d!r} outside admissible range [{lo}, {hi}]")
            clamped.append(min(max(d, lo), hi))
        drifts = tuple(clamped)
        eff = sum(w * d for w, d in zip(weights, drifts))
        if eff >= 0.0:
            raise DomainError(
                f"effective drift must be negative, got {eff!r}")
        outlay = sum(w * cost_c(self.instance, d)
                     for w, d in zip(weights, drifts))
        object.__setattr__(self, "drifts", drifts)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "effective_drift", eff)
        object.__setattr__(self, "outlay_rate", outlay)

    def drift_at(self, z: float) -> float:
        if z < 0.0:
            raise DomainError(f"state must be nonnegative, got {z!r}")
        return self.effective_drift

    def bands(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (np.empty(0),
                np.array([self.effective_drift]),
                np.array([self.outlay_rate]))


@dataclass(frozen=True)
class DynamicPolicy:
    """Nested-threshold band rule.

    thresholds are stored outermost first (z_1 >= ... >= z_K >= 0, one per
    activity). A state with m thresholds at or below it gets ladder drift
    theta_{K-m}: full push below every threshold, base drift above z_1.
    """

    instance: ProblemInstance
    thresholds: tuple[float, ...]

    def __post_init__(self) -> None:
        th = tuple(float(z) for z in self.thresholds)
        if len(th) != self.instance.n_activities:
            raise ValidationError(
                f"expected {self.instance.n_activities} thresholds, got {len(th)}")
        if any(not math.isfinite(z) or z < 0.0 for z in th):
            raise ValidationError("thresholds must be finite and nonnegative")
        if any(a < b for a, b in zip(th, th[1:])):
            raise ValidationError(
                f"thresholds must be nonincreasing outermost-first, got {th}")
        object.__setattr__(self, "thresholds", th)

    @classmethod
    def from_result(cls, result: SolveResult) -> "DynamicPolicy":
        return cls(instance=result.instance, thresholds=result.thresholds)

    @property
    def thresholds_asc(self) -> tuple[float, ...]:
        return self.thresholds[::-1]

    def drift_at(self, z: float) -> float:
        if z < 0.0:
            raise DomainError(f"state must be nonnegative, got {z!r}")
        m = band_count(self.thresholds_asc, z)
        return self.instance.theta[self.instance.n_activities - m]

    def bands(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = self.instance.n_activities
        drift = np.array([self.instance.theta[n - m] for m in range(n + 1)])
        cost = np.array([self.instance.c_at_theta[n - m] for m in range(n + 1)])
        return np.asarray(self.thresholds_asc, dtype=float), drift, cost


def static_cost(inst: ProblemInstance, theta: float) -> float:
    """Exact long-run average cost of holding drift theta in [theta_0, 0).

    Activation outlay plus h times the stationary mean sigma^2/(2|theta|)
    plus reflection billing p|theta|.
    """
    theta = _validated_static_drift(inst, theta)
    a = -theta
    return cost_c(inst, theta) + inst.h * inst.sigma2 / (2.0 * a) + inst.p * a


def randomized_static_cost(inst: ProblemInstance, drifts: Sequence[float],
                           weights: Sequence[float]) -> float:
    """Exact long-run average cost of time-sharing drifts with the given
    weights: averaged outlay plus the stationary cost of the effective
    drift."""
    pol = RandomizedStaticPolicy(inst, tuple(drifts), tuple(weights))
    a = -pol.effective_drift
    return pol.outlay_rate + inst.h * inst.sigma2 / (2.0 * a) + inst.p * a


def best_static_ladder(inst: ProblemInstance) -> tuple[float, float]:
    """Cheapest static policy among the negative ladder drifts.

    Returns (theta, cost); ties go to the drift encountered first walking
    up the ladder from theta_0.
    """
    best_theta, best_cost = None, math.inf
    for j in range(inst.j_star + 1):
        cost = static_cost(inst, inst.theta[j])
        if cost < best_cost:
            best_theta, best_cost = inst.theta[j], cost
    return best_theta, best_cost


def best_static(inst: ProblemInstance) -> tuple[float, float]:
    """Cheapest static policy over the whole admissible interval [theta_0, 0).

    The cost is piecewise smooth in |theta| with at most one interior
    minimum per linear segment of the activation cost, at
    |theta| = sqrt(h sigma^2 / (2 (p - c_k))) when p > c_k, so the optimum
    is found exactly from ladder points and per-segment interior candidates.
    Returns (theta, cost).
    """
    candidates = [inst.theta[j] for j in range(inst.j_star + 1)]
    for k in range(1, inst.n_activities + 1):
        seg_lo, seg_hi = inst.theta[k - 1], inst.theta[k]
        if seg_lo >= 0.0:
            break
        ck = inst.c[k - 1]
        if inst.p <= ck:
            continue
        a_star = math.sqrt(inst.h * inst.sigma2 / (2.0 * (inst.p - ck)))
        theta_star = -a_star
        if seg_lo < theta_star < min(seg_hi, 0.0):
            candidates.append(theta_star)
    best_theta, best_cost = None, math.inf
    for theta in candidates:
        cost = static_cost(inst, theta)
        if cost < best_cost:
            best_theta, best_cost = theta, cost
    return best_theta, best_cost
