"""Closed-form solve of the average-cost equation by band matching.

The derivative v of the relative value function satisfies a first-order ODE
whose right side is piecewise linear in v: between consecutive levels
p - c_k the drift in force is fixed, so v is exponential-affine on each
queue band (quadratic where that band's drift is exactly zero). Walking the
bands outward from the origin with value matching at each band edge yields
v in closed form for any candidate cost rate beta and locates the
queue-length thresholds z_k where v crosses p - c_k. On the outermost band
the coefficient of the growing exponential classifies beta: positive means
v increases without bound, negative means v eventually turns decreasing,
and the optimal rate beta* is the unique sign change, found by bisection
plus a guarded secant polish.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .errors import BracketError, DomainError, SolverError
from .model import (
    ProblemInstance,
    band_count,
    beta_lower,
    never_promote_cost,
    phi,
)

__all__ = [
    "Piece",
    "ValueFunction",
    "TurnsDecreasing",
    "SolveResult",
    "build_value_function",
    "tail_coefficient",
    "find_beta_star",
    "v_eval",
    "f_eval",
    "policy_eval",
    "bellman_residual",
]

_EXP_CAP = 700.0  # exp argument cap; beyond this the value is effectively infinite


@dataclass(frozen=True)
class Piece:
    """One band of the closed-form derivative:

        v(x) = coef * exp(rate * (x - x_lo)) + q0 + q1 x + q2 x^2

    Exponential-affine bands have q2 = 0; zero-drift bands have
    coef = rate = 0 and q2 = -h / sigma^2. x_hi is +inf on the last band.
    """

    theta: float
    x_lo: float
    x_hi: float
    coef: float
    rate: float
    q0: float
    q1: float
    q2: float

    def value(self, x: float) -> float:
        out = self.q0 + self.q1 * x + self.q2 * x * x
        if self.coef != 0.0:
            out += self.coef * math.exp(min(self.rate * (x - self.x_lo), _EXP_CAP))
        return out

    def derivative(self, x: float) -> float:
        out = self.q1 + 2.0 * self.q2 * x
        if self.coef != 0.0:
            out += self.coef * self.rate * math.exp(
                min(self.rate * (x - self.x_lo), _EXP_CAP))
        return out

    def integral_from_lo(self, x: float) -> float:
        """Integral of the band expression from x_lo to x."""
        lo = self.x_lo
        out = (self.q0 * (x - lo) + 0.5 * self.q1 * (x * x - lo * lo)
               + self.q2 * (x ** 3 - lo ** 3) / 3.0)
        if self.coef != 0.0:
            out += (self.coef / self.rate) * math.expm1(
                min(self.rate * (x - lo), _EXP_CAP))
        return out


@dataclass(frozen=True)
class TurnsDecreasing:
    """Marker: the candidate rate is too low; the walk turned decreasing.

    branch is the band number k (drift theta_{k-1} in force) where the turn
    happened, x_turn the state at which the derivative first vanishes.
    """

    branch: int
    x_turn: float
    beta: float


@dataclass(frozen=True)
class ValueFunction:
    """Closed-form derivative of the relative value function at a given beta."""

    beta: float
    pieces: tuple[Piece, ...]
    thresholds: tuple[float, ...]       # z_1 >= ... >= z_K, zeros for unused activities
    instance: ProblemInstance

    @property
    def thresholds_asc(self) -> tuple[float, ...]:
        return self.thresholds[::-1]

    @property
    def tail_coefficient(self) -> float:
        return self.pieces[-1].coef

    def _piece_at(self, x: float) -> Piece:
        if x < 0.0:
            raise DomainError(f"value function is defined on [0, inf), got {x}")
        starts = [pc.x_lo for pc in self.pieces]
        i = bisect_left(starts, x)
        # bisect_left gives the first start >= x; the containing piece is the
        # one before it unless x sits exactly on a start
        if i == len(starts) or starts[i] > x:
            i -= 1
        return self.pieces[i]

    def value(self, x: float) -> float:
        return self._piece_at(x).value(x)

    def derivative(self, x: float) -> float:
        return self._piece_at(x).derivative(x)

    def integral(self, x: float) -> float:
        """Integral of the derivative expression from 0 to x."""
        if x < 0.0:
            raise DomainError(f"value function is defined on [0, inf), got {x}")
        total = 0.0
        for pc in self.pieces:
            if x >= pc.x_hi:
                total += pc.integral_from_lo(pc.x_hi)
            else:
                total += pc.integral_from_lo(x)
                break
        return total


@dataclass(frozen=True)
class SolveResult:
    """Optimal cost rate, thresholds, and the value function at the optimum."""

    beta_star: float
    thresholds: tuple[float, ...]
    value_function: ValueFunction
    beta_lower: float
    bracket_upper: float
    tail_residual: float           # tail coefficient left when iteration stopped
    max_bellman_residual: float    # worst residual on the diagnostic grid
    iterations: int
    instance: ProblemInstance


BuildOutcome = Union[ValueFunction, TurnsDecreasing]


def _branch_params(inst: ProblemInstance, beta: float, theta: float,
                   x_a: float, v_a: float, drift_index: int) -> Piece:
    """Band expression anchored at (x_a, v_a) for the band with given drift."""
    s2, h, p = inst.sigma2, inst.h, inst.p
    c_theta = inst.c_at_theta[drift_index]
    if theta != 0.0:
        rate = -2.0 * theta / s2
        q1 = -h / theta
        q0 = (beta + theta * p - c_theta) / theta + h * s2 / (2.0 * theta * theta)
        coef = v_a - (q0 + q1 * x_a)
        return Piece(theta, x_a, math.inf, coef, rate, q0, q1, 0.0)
    slope = 2.0 * (beta - c_theta) / s2
    q2 = -h / s2
    q0 = v_a - slope * x_a - q2 * x_a * x_a
    return Piece(theta, x_a, math.inf, 0.0, 0.0, q0, slope, q2)


def _turn_point(piece: Piece) -> float:
    """State where the band's derivative vanishes, or +inf if it never does.

    Only meaningful when the derivative is positive at the band start.
    """
    if piece.q2 != 0.0:
        return -piece.q1 / (2.0 * piece.q2)
    if piece.coef == 0.0:
        return math.inf
    ratio = -piece.q1 / (piece.coef * piece.rate)
    if ratio <= 0.0:
        return math.inf
    return piece.x_lo + math.log(ratio) / piece.rate


def _first_crossing(piece: Piece, target: float, x_limit: float, p_scale: float) -> float:
    """Smallest x > x_lo with piece.value(x) == target, given value(x_lo) < target
    and a guaranteed crossing inside (x_lo, x_limit]."""
    lo = piece.x_lo
    if math.isfinite(x_limit):
        hi = x_limit
    else:
        dv = piece.derivative(lo)
        step = max((target - piece.value(lo)) / dv, 1e-9) if dv > 0 else 1e-9
        hi = lo + step
        for _ in range(200):
            if piece.value(hi) >= target:
                break
            step *= 2.0
            hi = lo + step
        else:
            raise SolverError("band crossing search failed to bracket the level")
    eps = np.finfo(float).eps
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if piece.value(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 2.0 * eps * max(1.0, abs(hi)):
            break
    mid = 0.5 * (lo + hi)
    if abs(piece.value(mid) - target) > 1e-12 * p_scale:
        raise SolverError("band crossing bisection did not reach the level tolerance")
    return mid


def build_value_function(inst: ProblemInstance, beta: float) -> BuildOutcome:
    """Assemble the closed-form derivative for a candidate cost rate.

    Walks the queue bands outward from the origin, matching values at each
    level p - c_k. Returns the assembled ValueFunction, or TurnsDecreasing
    if the walk's derivative vanishes before the outermost band is reached
    (the candidate rate is below the optimum). Raises DomainError for beta
    at or below the conjugate lower bound, where no classification exists.
    """
    bl = beta_lower(inst)
    if beta <= bl:
        raise DomainError(
            f"beta = {beta} is not above the lower bound {bl}; the walk is undefined")
    p = inst.p
    n = inst.n_activities
    # highest drift index ever used: activities with c_k >= p never activate
    m = bisect_left(inst.c, p)
    thresholds = [0.0] * n
    pieces: list[Piece] = []
    x_a, v_a = 0.0, 0.0
    for j in range(m, 0, -1):
        target = p - inst.c[j - 1]
        piece = _branch_params(inst, beta, inst.theta[j], x_a, v_a, j)
        if piece.derivative(x_a) <= 0.0:
            return TurnsDecreasing(branch=j + 1, x_turn=x_a, beta=beta)
        x_turn = _turn_point(piece)
        if math.isfinite(x_turn) and piece.value(x_turn) < target:
            return TurnsDecreasing(branch=j + 1, x_turn=x_turn, beta=beta)
        z = _first_crossing(piece, target, x_turn, p)
        pieces.append(replace(piece, x_hi=z))
        thresholds[j - 1] = z
        x_a, v_a = z, target
    tail = _branch_params(inst, beta, inst.theta[0], x_a, v_a, 0)
    pieces.append(tail)
    return ValueFunction(beta=beta, pieces=tuple(pieces),
                         thresholds=tuple(thresholds), instance=inst)


def tail_coefficient(inst: ProblemInstance, beta: float,
                     v_at_z1: float, z1: float) -> float:
    """Coefficient of the growing exponential on the outermost band.

    Anchored at a point (z1, v_at_z1) already inside the band where only the
    base drift is in force. Positive means v grows without bound, negative
    means it eventually turns decreasing; the optimum is the sign change.
    """
    t0 = inst.theta0
    affine0 = beta / t0 + inst.p + inst.h * inst.sigma2 / (2.0 * t0 * t0)
    return v_at_z1 - (affine0 - (inst.h / t0) * z1)


def _force_zero_tail(vf: ValueFunction) -> ValueFunction:
    tail = replace(vf.pieces[-1], coef=0.0)
    return replace(vf, pieces=vf.pieces[:-1] + (tail,))


def _diagnostic_grid(inst: ProblemInstance, vf: ValueFunction, n: int = 10_000) -> np.ndarray:
    z1 = vf.thresholds[0] if vf.thresholds and vf.thresholds[0] > 0 else 0.0
    span = 2.0 * z1 if z1 > 0 else 5.0 * inst.sigma2 / (2.0 * abs(inst.theta0))
    return np.linspace(0.0, span, n)


def _max_residual(inst: ProblemInstance, vf: ValueFunction) -> float:
    worst = 0.0
    for z in _diagnostic_grid(inst, vf):
        r = abs(_residual(inst, vf, float(z)))
        if r > worst:
            worst = r
    return worst


def _residual(inst: ProblemInstance, vf: ValueFunction, z: float) -> float:
    lhs = 0.5 * inst.sigma2 * vf.derivative(z) + inst.h * z - phi(inst, inst.p - vf.value(z))
    return vf.beta - lhs


def _short_circuit_result(inst: ProblemInstance, bl: float, upper: float) -> SolveResult:
    # promotion never pays (p <= c_1): the base drift is kept forever and the
    # derivative is the exact affine tail through the origin
    beta = upper
    tail = _branch_params(inst, beta, inst.theta0, 0.0, 0.0, 0)
    tail = replace(tail, coef=0.0)
    vf = ValueFunction(beta=beta, pieces=(tail,),
                       thresholds=tuple([0.0] * inst.n_activities), instance=inst)
    return SolveResult(
        beta_star=beta, thresholds=vf.thresholds, value_function=vf,
        beta_lower=bl, bracket_upper=upper, tail_residual=0.0,
        max_bellman_residual=_max_residual(inst, vf), iterations=0, instance=inst)


def find_beta_star(inst: ProblemInstance, tol: float | None = None,
                   tol_c: float | None = None) -> SolveResult:
    """Optimal long-run average cost rate and thresholds via band matching.

    Bisects the tail-coefficient sign change on (beta_lower, never-promote
    cost], then polishes with a bracket-guarded secant until the coefficient
    is at float-noise level, and rebuilds the optimal derivative with the
    growing exponential removed exactly (the tail is affine at the optimum).

    tol is the bisection bracket width (default 1e-9 times the upper
    bracket); tol_c the acceptable residual tail coefficient (default 1e-9
    times p + c_K). Raises BracketError if the upper bracket fails to
    classify as growing, which signals a bug or an instance outside the
    theory; UnboundedError propagates when no finite lower bound exists.
    """
    bl = beta_lower(inst)
    upper = never_promote_cost(inst)
    if inst.p <= inst.c[0]:
        return _short_circuit_result(inst, bl, upper)
    if tol is None:
        tol = 1e-9 * upper
    if tol_c is None:
        tol_c = 1e-9 * (inst.p + inst.c[-1])

    iterations = 0

    def build(beta: float) -> BuildOutcome:
        nonlocal iterations
        iterations += 1
        return build_value_function(inst, beta)

    hi = upper
    out_hi = build(hi)
    if isinstance(out_hi, TurnsDecreasing) or out_hi.tail_coefficient < 0.0:
        raise BracketError(
            "upper bracket (never-promote cost) did not classify as growing")
    lo = bl + max(1e-9, 1e-9 * upper)
    c_lo: float | None = None
    c_hi = out_hi.tail_coefficient

    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        out = build(mid)
        if isinstance(out, TurnsDecreasing):
            lo, c_lo = mid, None
        elif out.tail_coefficient > 0.0:
            hi, c_hi = mid, out.tail_coefficient
        else:
            lo, c_lo = mid, out.tail_coefficient

    # polish: inside the final bracket the tail coefficient is a smooth,
    # increasing function of beta, so regula falsi drives it to float noise
    noise = 1e-13 * (inst.p + inst.c[-1])
    best: ValueFunction | None = None
    best_c = math.inf
    beta = 0.5 * (lo + hi)
    for _ in range(60):
        out = build(beta)
        if isinstance(out, TurnsDecreasing):
            lo, c_lo = beta, None
            beta = 0.5 * (lo + hi)
            continue
        cb = out.tail_coefficient
        if abs(cb) < abs(best_c):
            best, best_c = out, cb
        if abs(cb) <= noise:
            break
        if cb > 0.0:
            hi, c_hi = beta, cb
        else:
            lo, c_lo = beta, cb
        if c_lo is not None and c_hi > c_lo:
            beta = hi - c_hi * (hi - lo) / (c_hi - c_lo)
            margin = 0.01 * (hi - lo)
            beta = min(max(beta, lo + margin), hi - margin)
        else:
            beta = 0.5 * (lo + hi)
        if hi - lo <= 4.0 * np.finfo(float).eps * hi:
            break

    if best is None or abs(best_c) > tol_c:
        raise SolverError(
            f"tail coefficient {best_c} did not reach tolerance {tol_c}")

    vf = _force_zero_tail(best)
    return SolveResult(
        beta_star=best.beta, thresholds=vf.thresholds, value_function=vf,
        beta_lower=bl, bracket_upper=upper, tail_residual=best_c,
        max_bellman_residual=_max_residual(inst, vf),
        iterations=iterations, instance=inst)


def _as_vf(result: SolveResult | ValueFunction) -> ValueFunction:
    return result.value_function if isinstance(result, SolveResult) else result


def v_eval(result: SolveResult | ValueFunction, x: float) -> float:
    """Derivative of the relative value function at state x."""
    return _as_vf(result).value(x)


def f_eval(result: SolveResult | ValueFunction, z: float) -> float:
    """Relative value function at state z: integral of v minus p z.

    Normalized so f(0) = 0 and f'(0) = -p: near the origin an extra unit of
    queue is worth the idleness it saves.
    """
    vf = _as_vf(result)
    return vf.integral(z) - vf.instance.p * z


def policy_eval(result: SolveResult | ValueFunction, z: float) -> float:
    """Optimal drift at state z: theta_{k-1} on the band z_k <= z < z_{k-1}."""
    vf = _as_vf(result)
    if z < 0.0:
        raise DomainError(f"policy is defined on [0, inf), got {z}")
    m = band_count(vf.thresholds_asc, z)
    return vf.instance.theta[vf.instance.n_activities - m]


def bellman_residual(result: SolveResult | ValueFunction, z: float) -> float:
    """Pointwise defect of the average-cost equation at state z."""
    vf = _as_vf(result)
    return _residual(vf.instance, vf, z)
