"""Monte Carlo validation: Euler simulation of the reflected state under a
band policy, with per-replication cost rates and confidence intervals.

The recursion is the standard one for reflected dynamics: propose
z + drift dt + sigma sqrt(dt) xi, reflect at zero, and bill the reflected
mass as idleness. Promotion outlay and holding cost accrue per step from the
policy's band tables; everything before the burn-in fraction of the horizon
is discarded. Replications use independent substreams spawned from one seed
(numpy PCG64 via SeedSequence.spawn), so results are reproducible
bit-for-bit for a given configuration regardless of chunking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ConfigError, DomainError
from .model import ProblemInstance

RNG_DESCRIPTION = "numpy PCG64 (SeedSequence spawn per replication)"

_CHUNK = 1 << 20


@dataclass(frozen=True)
class SimConfig:
    """Simulation run parameters.

    dt: Euler step (time units). horizon: simulated time per replication.
    burn_in_fraction: leading fraction of each replication excluded from
    billing. replications: independent substreams. seed: root seed for the
    substream spawn. initial_state: starting state of every replication.
    """

    dt: float = 1e-3
    horizon: float = 2e4
    burn_in_fraction: float = 0.1
    replications: int = 20
    seed: int = 0
    initial_state: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise ConfigError(f"dt must be positive, got {self.dt!r}")
        if not (math.isfinite(self.horizon) and self.horizon > 0.0):
            raise ConfigError(f"horizon must be positive, got {self.horizon!r}")
        if not (0.0 <= self.burn_in_fraction < 1.0):
            raise ConfigError(
                f"burn_in_fraction must lie in [0, 1), got {self.burn_in_fraction!r}")
        if self.replications < 1:
            raise ConfigError(
                f"replications must be at least 1, got {self.replications!r}")
        if self.seed < 0:
            raise ConfigError(f"seed must be nonnegative, got {self.seed!r}")
        if not (math.isfinite(self.initial_state) and self.initial_state >= 0.0):
            raise ConfigError(
                f"initial_state must be nonnegative, got {self.initial_state!r}")
        if self.n_steps < 2:
            raise ConfigError("horizon/dt must give at least two steps")
        if self.burn_in_steps >= self.n_steps:
            raise ConfigError("burn-in leaves no billed steps")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def burn_in_steps(self) -> int:
        return int(round(self.burn_in_fraction * self.n_steps))

    @property
    def billed_time(self) -> float:
        return (self.n_steps - self.burn_in_steps) * self.dt


@dataclass(frozen=True)
class SimulationReport:
    """Aggregated Monte Carlo estimates for one policy.

    Rates are per unit time, averaged over the billed window and then over
    replications; *_se are standard errors over replications and cost_ci is
    the 95% Student-t interval. per_replication_cost holds each
    replication's own cost rate. trace, when requested, is (times, states,
    cumulative idleness) snapshots from the first replication.
    """

    config: SimConfig
    cost_rate: float
    cost_rate_se: float
    cost_ci: tuple[float, float]
    outlay_rate: float
    holding_rate: float
    idleness_cost_rate: float
    mean_queue: float
    mean_queue_se: float
    idleness_rate: float
    idleness_rate_se: float
    per_replication_cost: np.ndarray
    rng_description: str = RNG_DESCRIPTION
    trace: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(values))
    if values.size < 2:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / math.sqrt(values.size))


def simulate_policy(policy, config: SimConfig | None = None,
                    trace_stride: int | None = None) -> SimulationReport:
    """Estimate the long-run average cost of a band policy by simulation.

    policy is any object exposing bands() -> (ascending thresholds, drift
    per band, outlay rate per band) over its instance — the static,
    randomized static, and dynamic policies all qualify. trace_stride, if
    given, snapshots the first replication every that-many steps.
    """
    if config is None:
        config = SimConfig()
    if trace_stride is not None and trace_stride < 1:
        raise ConfigError(f"trace_stride must be positive, got {trace_stride!r}")
    inst: ProblemInstance = policy.instance
    thresholds, cell_drift, cell_cost = policy.bands()
    thresholds = np.ascontiguousarray(thresholds, dtype=np.float64)
    cell_drift = np.ascontiguousarray(cell_drift, dtype=np.float64)
    cell_cost = np.ascontiguousarray(cell_cost, dtype=np.float64)

    from . import _kernels  # deferred: compiles on first use

    n_steps = config.n_steps
    burn = config.burn_in_steps
    t_bill = config.billed_time
    sig_sqdt = math.sqrt(inst.sigma2) * math.sqrt(config.dt)

    seeds = np.random.SeedSequence(config.seed).spawn(config.replications)
    outlay = np.empty(config.replications)
    queue_time = np.empty(config.replications)
    idleness = np.empty(config.replications)

    trace_arrays = None
    if trace_stride is not None:
        n_snap = -(-n_steps // trace_stride)  # ceil
        trace_times = (np.arange(n_snap, dtype=np.float64) * trace_stride
                       + 1.0) * config.dt
        trace_z = np.empty(n_snap)
        trace_l = np.empty(n_snap)
        trace_arrays = (trace_times, trace_z, trace_l)

    for r, child in enumerate(seeds):
        gen = np.random.Generator(np.random.PCG64(child))
        z = config.initial_state
        acc = np.zeros(4)
        done = 0
        cursor = 0
        while done < n_steps:
            take = min(_CHUNK, n_steps - done)
            normals = gen.standard_normal(take)
            bill_from = min(max(burn - done, 0), take)
            if r == 0 and trace_arrays is not None:
                z, cursor = _kernels.euler_chunk_traced(
                    z, config.dt, sig_sqdt, thresholds, cell_drift,
                    cell_cost, normals, bill_from, acc, trace_stride,
                    done, trace_arrays[1], trace_arrays[2], cursor)
            else:
                z = _kernels.euler_chunk(
                    z, config.dt, sig_sqdt, thresholds, cell_drift,
                    cell_cost, normals, bill_from, acc)
            done += take
        outlay[r] = acc[0] / t_bill
        queue_time[r] = acc[1] / t_bill
        idleness[r] = acc[2] / t_bill

    holding = inst.h * queue_time
    idle_cost = inst.p * idleness
    per_rep_cost = outlay + holding + idle_cost

    cost_mean, cost_se = _mean_se(per_rep_cost)
    queue_mean, queue_se = _mean_se(queue_time)
    idle_mean, idle_se = _mean_se(idleness)
    if config.replications > 1:
        half = float(stats.t.ppf(0.975, config.replications - 1)) * cost_se
    else:
        half = math.inf
    return SimulationReport(
        config=config,
        cost_rate=cost_mean,
        cost_rate_se=cost_se,
        cost_ci=(cost_mean - half, cost_mean + half),
        outlay_rate=float(np.mean(outlay)),
        holding_rate=float(np.mean(holding)),
        idleness_cost_rate=float(np.mean(idle_cost)),
        mean_queue=queue_mean,
        mean_queue_se=queue_se,
        idleness_rate=idle_mean,
        idleness_rate_se=idle_se,
        per_replication_cost=per_rep_cost,
        trace=trace_arrays,
    )


def stationary_reference(policy) -> tuple[float, float]:
    """Exact stationary (mean state, idleness rate) for a constant-drift
    policy: sigma^2 / (2|theta|) and |theta|. DomainError for band policies
    whose drift actually varies with the state."""
    thresholds, cell_drift, _ = policy.bands()
    if len(thresholds) > 0 and len(set(float(d) for d in cell_drift)) > 1:
        raise DomainError(
            "stationary reference requires a constant drift policy")
    theta = float(cell_drift[0])
    inst: ProblemInstance = policy.instance
    return inst.sigma2 / (2.0 * abs(theta)), abs(theta)
