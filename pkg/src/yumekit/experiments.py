"""Config-driven sampling experiments against the analytic mixture oracle.

A config names a sampler, a schedule, a target mixture, and sampler knobs;
the runner draws initial noise, integrates, and reports empirical moments,
component frequencies, and the exact NFE count.

Sampling is batched: n_samples rows integrate as one array. Work splits into
fixed-size chunks of CHUNK_ROWS, each chunk seeded by its own SeedSequence
child, so results are bit-identical regardless of how many worker threads
(YUME_KIT_THREADS) execute the chunks. A batched evaluation counts as one
call, so every chunk sees the same NFE; the runner verifies that and reports
the per-run value.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import InputParseError, InternalError, ValidationError
from .flow import GaussianMixture, OracleVelocity, mixture_from_dict
from .freqops import IdentityLowPass, build_operator
from .samplers import (
    CfgVelocity,
    NfeCounter,
    SamplerConfig,
    TimeSchedule,
    aam_sample,
    euler_ode_sample,
    sde_sample,
    tts_sde_sample,
)

CHUNK_ROWS = 4096

SAMPLER_NAMES = ("euler", "sde", "tts-sde", "aam")


def threads_from_env(env: dict | None = None) -> int:
    env = env if env is not None else os.environ
    raw = env.get("YUME_KIT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise InputParseError(f"YUME_KIT_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise InputParseError(f"YUME_KIT_THREADS must be >= 1, got {n}")
    return n


def schedule_from_dict(obj: dict) -> TimeSchedule:
    if not isinstance(obj, dict) or "type" not in obj:
        raise InputParseError("schedule needs a 'type' of 'uniform' or 'explicit'")
    if obj["type"] == "uniform":
        try:
            steps = int(obj["steps"])
        except (KeyError, TypeError, ValueError):
            raise InputParseError("uniform schedule needs integer 'steps'") from None
        return TimeSchedule.uniform(steps)
    if obj["type"] == "explicit":
        times = obj.get("times")
        if not isinstance(times, list) or not times:
            raise InputParseError("explicit schedule needs a non-empty 'times' list")
        return TimeSchedule(tuple(float(t) for t in times))
    raise InputParseError(f"unknown schedule type {obj['type']!r}")


def _resolve_mixture(cfg: dict, key: str, base_dir: str | None) -> GaussianMixture | None:
    inline = cfg.get(key)
    path = cfg.get(f"{key}_path")
    if isinstance(inline, str) and path is None:
        path = inline
        inline = None
    if inline is not None:
        return mixture_from_dict(inline)
    if path:
        from .flow import load_mixture

        if base_dir is not None and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return load_mixture(path)
    return None


def _build_velocity(mix: GaussianMixture, uncond: GaussianMixture | None, cfg_scale):
    base = OracleVelocity(mix)
    if cfg_scale is None:
        return base
    other = OracleVelocity(uncond) if uncond is not None else OracleVelocity(mix)
    return CfgVelocity(cond=base, uncond=other, scale=float(cfg_scale))


def _build_operator(entry):
    if entry in (None, "identity"):
        return IdentityLowPass()
    try:
        return build_operator(
            np.asarray(entry["kernel_h"], dtype=float),
            np.asarray(entry["kernel_w"], dtype=float),
            int(entry["h"]),
            int(entry["w"]),
        )
    except (TypeError, KeyError):
        raise InputParseError(
            "aam_operator needs 'kernel_h', 'kernel_w', 'h', 'w' or the string 'identity'"
        ) from None


def run_sampling_experiment(cfg: dict, base_dir: str | None = None) -> dict:
    """Execute one experiment config; returns a JSON-ready result dict."""
    if not isinstance(cfg, dict):
        raise InputParseError("experiment config must be a JSON object")
    sampler = cfg.get("sampler")
    if sampler not in SAMPLER_NAMES:
        raise InputParseError(f"sampler must be one of {SAMPLER_NAMES}, got {sampler!r}")
    mix = _resolve_mixture(cfg, "mixture", base_dir)
    if mix is None:
        raise InputParseError("config needs 'mixture' (inline) or 'mixture_path'")
    uncond = _resolve_mixture(cfg, "mixture_uncond", base_dir)
    stage2_mix = _resolve_mixture(cfg, "mixture_stage2", base_dir) or mix
    schedule = schedule_from_dict(cfg.get("schedule", {"type": "uniform", "steps": 50}))
    n_samples = int(cfg.get("n_samples", 1000))
    if n_samples < 1:
        raise ValidationError(f"n_samples must be >= 1, got {n_samples}")
    seed = int(cfg.get("seed", 0))
    cfg_scale = cfg.get("cfg_scale")
    sampler_config = SamplerConfig(
        eta=float(cfg.get("eta", 0.2)),
        travel_interval=int(cfg.get("travel_interval", 5)),
        travel_depth=int(cfg.get("travel_depth", 5)),
        refine_steps=int(cfg.get("refine_steps", 5)),
        cfg_scale=cfg_scale,
        rng_seed=seed,
    )

    if sampler == "aam":
        schedule2 = schedule_from_dict(
            cfg.get("schedule2", {"type": "uniform", "steps": len(schedule)})
        )
        operator = _build_operator(cfg.get("aam_operator"))
        # Guidance applies to the refinement stage only; the draft stage runs bare.
        velocity1 = _build_velocity(mix, None, None)
        velocity2 = _build_velocity(stage2_mix, uncond, cfg_scale)
    else:
        schedule2 = None
        operator = None
        velocity1 = _build_velocity(mix, uncond, cfg_scale)
        velocity2 = None

    n_chunks = (n_samples + CHUNK_ROWS - 1) // CHUNK_ROWS
    chunk_sizes = [
        min(CHUNK_ROWS, n_samples - c * CHUNK_ROWS) for c in range(n_chunks)
    ]

    def run_chunk(c: int) -> tuple[np.ndarray, int]:
        rows = chunk_sizes[c]
        chunk_ss = np.random.SeedSequence([seed, c])
        init_ss, sampler_ss = chunk_ss.spawn(2)
        z_init = np.random.default_rng(init_ss).standard_normal((rows, mix.dim))
        counter = NfeCounter()
        if sampler == "euler":
            out = euler_ode_sample(velocity1, schedule, z_init, counter)
        elif sampler == "sde":
            rng = np.random.default_rng(sampler_ss)
            out = sde_sample(velocity1, schedule, z_init, sampler_config.eta, rng, counter)
        elif sampler == "tts-sde":
            chunk_seed = int(sampler_ss.generate_state(1, np.uint64)[0])
            chunk_config = SamplerConfig(
                eta=sampler_config.eta,
                travel_interval=sampler_config.travel_interval,
                travel_depth=sampler_config.travel_depth,
                refine_steps=sampler_config.refine_steps,
                cfg_scale=sampler_config.cfg_scale,
                rng_seed=chunk_seed,
            )
            out = tts_sde_sample(velocity1, schedule, z_init, chunk_config, counter)
        else:
            out = aam_sample(
                velocity1,
                velocity2,
                schedule,
                schedule2,
                operator,
                sampler_config.refine_steps,
                z_init,
                counter,
            )
        return out, counter.count

    threads = threads_from_env()
    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_chunk, range(n_chunks)))
    else:
        results = [run_chunk(c) for c in range(n_chunks)]

    samples = np.concatenate([r[0] for r in results], axis=0)
    nfe_counts = [r[1] for r in results]
    if len(set(nfe_counts)) != 1:
        raise InternalError(f"per-chunk NFE diverged: {nfe_counts}")

    emp_mean = samples.mean(axis=0)
    emp_cov = np.cov(samples.T) if n_samples > 1 else np.zeros((mix.dim, mix.dim))
    target_mean = mix.mean()
    assignments = mix.assign_components(samples)
    freqs = np.bincount(assignments, minlength=len(mix)) / n_samples

    return {
        "sampler": sampler,
        "seed": seed,
        "n_samples": n_samples,
        "nfe": nfe_counts[0],
        "samples": samples.tolist(),
        "empirical_mean": emp_mean.tolist(),
        "empirical_cov": np.atleast_2d(emp_cov).tolist(),
        "target_mean": target_mean.tolist(),
        "mean_abs_deviation": float(np.abs(emp_mean - target_mean).max()),
        "component_frequencies": freqs.tolist(),
        "component_weights": mix.weights.tolist(),
        "max_frequency_deviation": float(np.abs(freqs - mix.weights).max()),
    }
