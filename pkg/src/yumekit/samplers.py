"""ODE and SDE samplers over a shared time-schedule and NFE-accounting contract.

All samplers walk a strictly decreasing schedule t_{N-1} > ... > t_0 and
finish with a step onto the implicit sentinel t_{-1} = 0 whenever t_0 > 0, so
an N-step schedule costs exactly N velocity evaluations for the plain Euler
walk. Velocity callables may carry a ``cost`` attribute (defaults to 1) that
the counter adds per call; a guided pair therefore counts 2 per step. A batch
evaluation counts as one call regardless of batch size.

The stochastic step evaluates the velocity once and reuses it for both the
Euler drift and the score-based correction:

    pred_clean = z - t * v
    beta       = 0.5 * eta^2 * (z - pred_clean) / t^2      (= 0.5 eta^2 v / t)
    z'         = z + dt * v + dt * beta + eta * sqrt(|dt|) * xi

The look-ahead sampler keeps two RNG streams (outer steps, look-ahead steps)
spawned from one seed, so toggling the look-ahead never perturbs outer noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .errors import (
    BadRefineSteps,
    DimensionMismatch,
    EmptySchedule,
    InvalidTravelParams,
    ValidationError,
    ZeroTime,
)

VelocityFn = Callable[[np.ndarray, float], np.ndarray]


class LowPassOperator(Protocol):
    def low_pass(self, z: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class TimeSchedule:
    """Strictly decreasing times in [0, 1], stored start-first.

    ``times[0]`` is the starting (highest) noise level. A trailing value of 0
    is legal for the plain ODE walk but rejected by the stochastic samplers,
    whose drift divides by t.
    """

    times: tuple[float, ...]

    def __post_init__(self) -> None:
        times = tuple(float(t) for t in self.times)
        if not times:
            raise EmptySchedule("schedule needs at least one time")
        for t in times:
            if not (0.0 <= t <= 1.0) or not np.isfinite(t):
                raise ValidationError(f"schedule time {t} outside [0, 1]")
        for a, b in zip(times, times[1:]):
            if not (a > b):
                raise ValidationError("schedule times must be strictly decreasing")
        object.__setattr__(self, "times", times)

    def __len__(self) -> int:
        return len(self.times)

    @classmethod
    def uniform(cls, steps: int) -> "TimeSchedule":
        """(steps/steps, ..., 1/steps): equal spacing ending one step above 0."""
        if steps < 1:
            raise EmptySchedule(f"steps must be >= 1, got {steps}")
        return cls(tuple((i + 1) / steps for i in range(steps - 1, -1, -1)))

    def extended(self) -> tuple[float, ...]:
        """Times plus the sentinel 0 when the schedule does not already end there."""
        if self.times[-1] > 0.0:
            return self.times + (0.0,)
        return self.times


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs shared by the stochastic samplers.

    eta scales injected noise; travel_interval / travel_depth control the
    look-ahead cadence and length; refine_steps is the number of early
    recomposition steps in the two-stage sampler; rng_seed feeds a
    SeedSequence from which all streams are spawned.
    """

    eta: float = 0.2
    travel_interval: int = 5
    travel_depth: int = 5
    refine_steps: int = 5
    cfg_scale: float | None = None
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.eta < 0:
            raise ValidationError(f"eta must be >= 0, got {self.eta}")
        if self.travel_interval < 1 or self.travel_depth < 1:
            raise InvalidTravelParams(
                f"travel interval/depth must be >= 1, got "
                f"{self.travel_interval}/{self.travel_depth}"
            )
        if self.refine_steps < 0:
            raise BadRefineSteps(f"refine_steps must be >= 0, got {self.refine_steps}")


class NfeCounter:
    """Monotone counter of velocity-function evaluations."""

    def __init__(self) -> None:
        self.count = 0

    def add(self, n: int = 1) -> None:
        if n < 0:
            raise ValidationError("NFE increments must be non-negative")
        self.count += int(n)


def nfe_report(counter: NfeCounter) -> int:
    return int(counter.count)


def evaluation_cost(velocity_fn: VelocityFn) -> int:
    return int(getattr(velocity_fn, "cost", 1))


def _eval(
    velocity_fn: VelocityFn, z: np.ndarray, t: float, counter: NfeCounter | None
) -> np.ndarray:
    if counter is not None:
        counter.add(evaluation_cost(velocity_fn))
    return np.asarray(velocity_fn(z, float(t)), dtype=float)


def cfg_velocity(v_cond: np.ndarray, v_uncond: np.ndarray, scale: float) -> np.ndarray:
    """Guidance combination v_uncond + scale * (v_cond - v_uncond)."""
    v_cond = np.asarray(v_cond, dtype=float)
    v_uncond = np.asarray(v_uncond, dtype=float)
    if v_cond.shape != v_uncond.shape:
        raise DimensionMismatch(
            f"guidance branches disagree: {v_cond.shape} vs {v_uncond.shape}"
        )
    return v_uncond + float(scale) * (v_cond - v_uncond)


@dataclass(frozen=True)
class CfgVelocity:
    """Velocity pair combined with classifier-free guidance; costs both branches."""

    cond: VelocityFn
    uncond: VelocityFn
    scale: float

    def __call__(self, z: np.ndarray, t: float) -> np.ndarray:
        return cfg_velocity(self.cond(z, t), self.uncond(z, t), self.scale)

    @property
    def cost(self) -> int:
        return evaluation_cost(self.cond) + evaluation_cost(self.uncond)


def euler_ode_sample(
    velocity_fn: VelocityFn,
    schedule: TimeSchedule,
    z_init: np.ndarray,
    counter: NfeCounter | None = None,
) -> np.ndarray:
    """Deterministic Euler walk z <- z + (t_next - t) * v(z, t) down to 0."""
    z = np.asarray(z_init, dtype=float)
    ts = schedule.extended()
    for j in range(len(ts) - 1):
        t, t_next = ts[j], ts[j + 1]
        v = _eval(velocity_fn, z, t, counter)
        z = z + (t_next - t) * v
    return z


def _sde_update(
    z: np.ndarray,
    t_cur: float,
    t_next: float,
    v: np.ndarray,
    eta: float,
    rng: np.random.Generator,
) -> np.ndarray:
    # eta = 0 reduces bit-exactly to the Euler update: no correction, no draw.
    dt = t_next - t_cur
    if eta == 0.0:
        return z + dt * v
    pred_clean = z - t_cur * v
    beta = 0.5 * eta * eta * (z - pred_clean) / (t_cur * t_cur)
    noise = eta * np.sqrt(abs(dt)) * rng.standard_normal(z.shape)
    return z + dt * v + dt * beta + noise


def sde_step(
    z: np.ndarray,
    t_cur: float,
    t_next: float,
    velocity_fn: VelocityFn,
    eta: float,
    rng: np.random.Generator,
    counter: NfeCounter | None = None,
) -> np.ndarray:
    """One stochastic step from t_cur to t_next; evaluates the velocity once."""
    if t_cur <= 0.0:
        raise ZeroTime(f"stochastic step undefined at t = {t_cur}")
    z = np.asarray(z, dtype=float)
    v = _eval(velocity_fn, z, t_cur, counter)
    return _sde_update(z, t_cur, t_next, v, eta, rng)


def sde_sample(
    velocity_fn: VelocityFn,
    schedule: TimeSchedule,
    z_init: np.ndarray,
    eta: float,
    rng: np.random.Generator,
    counter: NfeCounter | None = None,
) -> np.ndarray:
    """Stochastic walk down the schedule, one sde_step per interval."""
    z = np.asarray(z_init, dtype=float)
    ts = schedule.extended()
    for j in range(len(ts) - 1):
        z = sde_step(z, ts[j], ts[j + 1], velocity_fn, eta, rng, counter)
    return z


def tts_sde_sample(
    velocity_fn: VelocityFn,
    schedule: TimeSchedule,
    z_init: np.ndarray,
    config: SamplerConfig,
    counter: NfeCounter | None = None,
) -> np.ndarray:
    """Stochastic sampler with periodic look-ahead (time-travel) refinement.

    Every travel_interval-th outer index i (i >= 1) runs up to travel_depth
    extra stochastic steps ahead from the outer result, then recommits the
    outer step using the velocity observed at the deepest look-ahead state:
    z <- z_in + (t_{i-1} - t_i) * v_last. Look-ahead states are discarded.

    With eta = 0 and travel_interval > len(schedule) this is bit-identical to
    ``euler_ode_sample``.
    """
    if schedule.times[-1] == 0.0:
        raise ZeroTime("stochastic schedules must end above 0")
    z = np.asarray(z_init, dtype=float)
    n = len(schedule.times)

    def t_at(i: int) -> float:
        # Schedule index i counts from the low end: t_0 = times[-1].
        return schedule.times[n - 1 - i] if i >= 0 else 0.0

    seed_seq = np.random.SeedSequence(config.rng_seed)
    outer_ss, inner_ss = seed_seq.spawn(2)
    outer_rng = np.random.default_rng(outer_ss)
    inner_rng = np.random.default_rng(inner_ss)

    for i in range(n - 1, -1, -1):
        t_i, t_prev = t_at(i), t_at(i - 1)
        z_in = z
        v = _eval(velocity_fn, z_in, t_i, counter)
        z = _sde_update(z_in, t_i, t_prev, v, config.eta, outer_rng)
        if i % config.travel_interval == 0 and i >= 1:
            k_low = max(i - config.travel_depth, 0)
            walker = z
            v_last: np.ndarray | None = None
            for k in range(i - 1, k_low - 1, -1):
                v_last = _eval(velocity_fn, walker, t_at(k), counter)
                walker = _sde_update(walker, t_at(k), t_at(k - 1), v_last, config.eta, inner_rng)
            if v_last is not None:
                z = z_in + (t_prev - t_i) * v_last
    return z


def aam_sample(
    velocity_fn_stage1: VelocityFn,
    velocity_fn_stage2: VelocityFn,
    schedule1: TimeSchedule,
    schedule2: TimeSchedule,
    low_pass_op: LowPassOperator,
    refine_steps: int,
    z_noise: np.ndarray,
    counter: NfeCounter | None = None,
) -> np.ndarray:
    """Two-stage sampler: draft pass, then low-frequency-anchored refinement.

    Stage 1 runs a plain Euler walk from z_noise. Stage 2 restarts from the
    same z_noise; for its first ``refine_steps`` steps the state is rebuilt as

        low_pass((1 - t) * z_orig + t * z_noise) + (z - low_pass(z))

    before stepping, pinning low frequencies to a re-noised draft while the
    high-frequency band evolves freely. refine_steps = 0 degenerates to a
    plain Euler walk, bit-identically.
    """
    if not (0 <= refine_steps < len(schedule2)):
        raise BadRefineSteps(
            f"refine_steps must be in [0, {len(schedule2)}), got {refine_steps}"
        )
    z_noise = np.asarray(z_noise, dtype=float)
    z_orig = euler_ode_sample(velocity_fn_stage1, schedule1, z_noise, counter)
    ts = schedule2.extended()
    z = z_noise
    for j in range(len(ts) - 1):
        t, t_next = ts[j], ts[j + 1]
        if j < refine_steps:
            renoised = (1.0 - t) * z_orig + t * z_noise
            z = low_pass_op.low_pass(renoised) + (z - low_pass_op.low_pass(z))
        v = _eval(velocity_fn_stage2, z, t, counter)
        z = z + (t_next - t) * v
    return z
