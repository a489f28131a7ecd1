"""Rectified-flow interpolation, losses, and an analytic mixture velocity oracle.

Convention: t = 0 is clean data, t = 1 is standard Gaussian noise, and the
interpolant is z_t = (1 - t) * x + t * eps. The matched velocity target is
eps - x, so integrating dz/dt = v from 1 down to 0 transports noise to data.

For a Gaussian-mixture target the marginal velocity has a closed form. With
component k ~ N(mu_k, Sigma_k) and S_k(t) = (1 - t)^2 Sigma_k + t^2 I:

    z_t | k ~ N((1 - t) mu_k, S_k(t))
    E[x   | z, k] = mu_k + (1 - t) Sigma_k S_k^{-1} (z - (1 - t) mu_k)
    E[eps | z, k] = t S_k^{-1} (z - (1 - t) mu_k)
    v(z, t) = sum_k resp_k(z, t) * (E[eps | z, k] - E[x | z, k])

Responsibilities are computed in log space and the linear systems via Cholesky
solves; no covariance is ever explicitly inverted. Conditioning degenerates at
the exact endpoints for point-like covariances, so t is clamped to
[TIME_CLAMP, 1 - TIME_CLAMP] inside the oracle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    DegenerateTime,
    DimensionMismatch,
    EmptyInput,
    InputParseError,
    ShapeMismatch,
    TOutOfRange,
    ValidationError,
)

# Half-width of the band excluded around t = 0 and t = 1 inside the oracle.
TIME_CLAMP = 1e-6

# Mixture weights must sum to 1 within this tolerance.
WEIGHT_TOLERANCE = 1e-12

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class FlowState:
    """A latent together with its noise level."""

    z: np.ndarray
    t: float

    def __post_init__(self) -> None:
        z = np.asarray(self.z, dtype=float)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "t", float(self.t))
        if not (0.0 <= self.t <= 1.0):
            raise TOutOfRange(f"t = {self.t} outside [0, 1]")


@dataclass(frozen=True)
class MixtureComponent:
    """One Gaussian component; ``cov`` is a full (d, d) matrix or a scalar variance."""

    weight: float
    mean: np.ndarray
    cov: np.ndarray | float

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float)
        if mean.ndim != 1 or mean.size == 0:
            raise ValidationError("component mean must be a non-empty 1-D vector")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "weight", float(self.weight))
        if not (self.weight > 0.0):
            raise ValidationError(f"component weight must be positive, got {self.weight}")
        if np.ndim(self.cov) == 0:
            var = float(self.cov)
            if not (var > 0.0) or not math.isfinite(var):
                raise ValidationError(f"scalar variance must be positive, got {var}")
            object.__setattr__(self, "cov", var)
        else:
            cov = np.asarray(self.cov, dtype=float)
            if cov.shape != (mean.size, mean.size):
                raise DimensionMismatch(
                    f"covariance shape {cov.shape} does not match dim {mean.size}"
                )
            if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
                raise ValidationError("covariance must be symmetric")
            if np.linalg.eigvalsh(cov).min() <= 0.0:
                raise ValidationError("covariance must be positive definite")
            object.__setattr__(self, "cov", cov)

    @property
    def is_isotropic(self) -> bool:
        return np.ndim(self.cov) == 0


class GaussianMixture:
    """A finite Gaussian mixture used as data distribution and velocity oracle."""

    def __init__(self, components: list[MixtureComponent] | tuple[MixtureComponent, ...]):
        components = tuple(components)
        if not components:
            raise ValidationError("mixture needs at least one component")
        dim = components[0].mean.size
        for c in components:
            if c.mean.size != dim:
                raise DimensionMismatch("all components must share one dimension")
        total = math.fsum(c.weight for c in components)
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise ValidationError(f"weights sum to {total!r}, not 1")
        self.components = components
        self.dim = dim
        self.weights = np.array([c.weight for c in components])

    def __len__(self) -> int:
        return len(self.components)

    def mean(self) -> np.ndarray:
        return sum(c.weight * c.mean for c in self.components)

    def covariance(self) -> np.ndarray:
        m = self.mean()
        acc = np.zeros((self.dim, self.dim))
        for c in self.components:
            cov = c.cov * np.eye(self.dim) if c.is_isotropic else c.cov
            d = c.mean - m
            acc += c.weight * (cov + np.outer(d, d))
        return acc

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n points; component choices first, then one normal block, so the
        draw sequence is independent of which components end up used."""
        idx = rng.choice(len(self.components), size=n, p=self.weights)
        normals = rng.standard_normal((n, self.dim))
        out = np.empty((n, self.dim))
        for k, c in enumerate(self.components):
            sel = idx == k
            if not np.any(sel):
                continue
            if c.is_isotropic:
                out[sel] = c.mean + math.sqrt(c.cov) * normals[sel]
            else:
                chol = np.linalg.cholesky(c.cov)
                out[sel] = c.mean + normals[sel] @ chol.T
        return out

    def log_component_densities(self, x: np.ndarray) -> np.ndarray:
        """log(w_k N(x; mu_k, Sigma_k)) for data-space points, shape (n, K)."""
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        cols = []
        for c in self.components:
            diff = x - c.mean
            if c.is_isotropic:
                maha = (diff * diff).sum(axis=1) / c.cov
                logdet = self.dim * math.log(c.cov)
            else:
                factor = cho_factor(c.cov, lower=True)
                sol = cho_solve(factor, diff.T).T
                maha = np.einsum("nd,nd->n", diff, sol)
                logdet = 2.0 * float(np.log(np.diag(factor[0])).sum())
            cols.append(
                math.log(c.weight) - 0.5 * (self.dim * _LOG_2PI + logdet + maha)
            )
        return np.stack(cols, axis=1)

    def assign_components(self, x: np.ndarray) -> np.ndarray:
        """Index of the most likely component for each data-space point."""
        return np.argmax(self.log_component_densities(x), axis=1)


def _clamp_time(t: float) -> float:
    t = float(t)
    if not (0.0 <= t <= 1.0) or not math.isfinite(t):
        raise DegenerateTime(f"t = {t} outside [0, 1]")
    return min(max(t, TIME_CLAMP), 1.0 - TIME_CLAMP)


def _flatten_latents(mix: GaussianMixture, z: np.ndarray) -> tuple[np.ndarray, tuple[int, ...]]:
    z = np.asarray(z, dtype=float)
    if z.ndim == 0 or z.shape[-1] != mix.dim:
        raise ShapeMismatch(f"latent last axis must be {mix.dim}, got shape {z.shape}")
    return z.reshape(-1, mix.dim), z.shape


def _component_conditionals(
    mix: GaussianMixture, zb: np.ndarray, t: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-component log joint densities and conditional means at noise level t.

    Returns (logps (n, K), e_data (K, n, d), e_noise (K, n, d)).
    """
    n, d = zb.shape
    s = 1.0 - t
    logps = np.empty((n, len(mix.components)))
    e_data = np.empty((len(mix.components), n, d))
    e_noise = np.empty((len(mix.components), n, d))
    for k, c in enumerate(mix.components):
        diff = zb - s * c.mean
        if c.is_isotropic:
            var = s * s * c.cov + t * t
            sol = diff / var
            maha = (diff * sol).sum(axis=1)
            logdet = d * math.log(var)
            e_data[k] = c.mean + (s * c.cov) * sol
        else:
            cov_t = s * s * c.cov + t * t * np.eye(d)
            factor = cho_factor(cov_t, lower=True)
            sol = cho_solve(factor, diff.T).T
            maha = np.einsum("nd,nd->n", diff, sol)
            logdet = 2.0 * float(np.log(np.diag(factor[0])).sum())
            e_data[k] = c.mean + s * (sol @ c.cov)
        e_noise[k] = t * sol
        logps[:, k] = math.log(c.weight) - 0.5 * (d * _LOG_2PI + logdet + maha)
    return logps, e_data, e_noise


def _softmax_rows(logps: np.ndarray) -> np.ndarray:
    shifted = logps - logps.max(axis=1, keepdims=True)
    w = np.exp(shifted)
    return w / w.sum(axis=1, keepdims=True)


def responsibilities(mix: GaussianMixture, z: np.ndarray, t: float) -> np.ndarray:
    """Posterior component probabilities given z at noise level t, shape (..., K)."""
    t = _clamp_time(t)
    zb, shape = _flatten_latents(mix, z)
    logps, _, _ = _component_conditionals(mix, zb, t)
    return _softmax_rows(logps).reshape(shape[:-1] + (len(mix),))


def oracle_velocity(mix: GaussianMixture, z: np.ndarray, t: float) -> np.ndarray:
    """Exact marginal rectified-flow velocity E[eps - x | z_t = z] for the mixture."""
    t = _clamp_time(t)
    zb, shape = _flatten_latents(mix, z)
    logps, e_data, e_noise = _component_conditionals(mix, zb, t)
    resp = _softmax_rows(logps)
    v = np.einsum("nk,knd->nd", resp, e_noise - e_data)
    return v.reshape(shape)


def posterior_data_mean(mix: GaussianMixture, z: np.ndarray, t: float) -> np.ndarray:
    """E[x | z_t = z]: the mixture-posterior clean-sample expectation."""
    t = _clamp_time(t)
    zb, shape = _flatten_latents(mix, z)
    logps, e_data, _ = _component_conditionals(mix, zb, t)
    resp = _softmax_rows(logps)
    return np.einsum("nk,knd->nd", resp, e_data).reshape(shape)


class OracleVelocity:
    """Callable adapter exposing ``oracle_velocity`` to the samplers.

    ``latent_shape`` lets grid-shaped latents ride on a flat mixture: inputs
    are flattened on the trailing axes before evaluation and restored after.
    """

    cost = 1

    def __init__(self, mix: GaussianMixture, latent_shape: tuple[int, ...] | None = None):
        if latent_shape is not None and int(np.prod(latent_shape)) != mix.dim:
            raise ShapeMismatch(
                f"latent shape {latent_shape} has {int(np.prod(latent_shape))} entries, "
                f"mixture dim is {mix.dim}"
            )
        self.mix = mix
        self.latent_shape = tuple(latent_shape) if latent_shape is not None else None

    def __call__(self, z: np.ndarray, t: float) -> np.ndarray:
        if self.latent_shape is None:
            return oracle_velocity(self.mix, z, t)
        z = np.asarray(z, dtype=float)
        k = len(self.latent_shape)
        if z.shape[-k:] != self.latent_shape:
            raise ShapeMismatch(
                f"latent trailing shape {z.shape[-k:]} != {self.latent_shape}"
            )
        flat = z.reshape(z.shape[:-k] + (self.mix.dim,))
        return oracle_velocity(self.mix, flat, t).reshape(z.shape)


# -- interpolation and losses --------------------------------------------------


def _check_same_shape(*arrays: np.ndarray) -> list[np.ndarray]:
    out = [np.asarray(a, dtype=float) for a in arrays]
    first = out[0].shape
    for a in out[1:]:
        if a.shape != first:
            raise DimensionMismatch(f"shapes differ: {first} vs {a.shape}")
    return out


def interpolate(x: np.ndarray, eps: np.ndarray, t: float) -> np.ndarray:
    """z_t = (1 - t) * x + t * eps."""
    t = float(t)
    if not (0.0 <= t <= 1.0):
        raise TOutOfRange(f"t = {t} outside [0, 1]")
    x, eps = _check_same_shape(x, eps)
    return (1.0 - t) * x + t * eps


def predict_clean(z: np.ndarray, velocity: np.ndarray, t: float) -> np.ndarray:
    """Clean-sample estimate z - t * v implied by a velocity at noise level t."""
    z, velocity = _check_same_shape(z, velocity)
    return z - float(t) * velocity


def flow_matching_loss(v_pred: np.ndarray, x: np.ndarray, eps: np.ndarray) -> float:
    """Squared error ||v_pred - (eps - x)||^2 summed over all entries."""
    v_pred, x, eps = _check_same_shape(v_pred, x, eps)
    diff = v_pred - (eps - x)
    return float((diff * diff).sum())


def hinge_discriminator_loss(d_real: np.ndarray, d_fake: np.ndarray) -> float:
    """mean(relu(1 - d_real)) + mean(relu(1 + d_fake))."""
    d_real = np.asarray(d_real, dtype=float)
    d_fake = np.asarray(d_fake, dtype=float)
    if d_real.size == 0 or d_fake.size == 0:
        raise EmptyInput("discriminator scores must be non-empty")
    return float(np.maximum(1.0 - d_real, 0.0).mean() + np.maximum(1.0 + d_fake, 0.0).mean())


def adversarial_generator_loss(d_fake: np.ndarray) -> float:
    """-mean(d_fake): the generator pushes fake scores up."""
    d_fake = np.asarray(d_fake, dtype=float)
    if d_fake.size == 0:
        raise EmptyInput("discriminator scores must be non-empty")
    return float(-d_fake.mean())


def total_distillation_loss(
    flow_loss: float, generator_loss: float, adversarial_weight: float
) -> float:
    """flow_loss + adversarial_weight * generator_loss.

    The weight is deliberately a required argument; no default is claimed.
    """
    return float(flow_loss) + float(adversarial_weight) * float(generator_loss)


# -- mixture (de)serialization ---------------------------------------------------


def mixture_from_dict(obj: dict) -> GaussianMixture:
    try:
        raw = obj["components"]
    except (TypeError, KeyError):
        raise InputParseError("mixture config needs a 'components' list") from None
    if not isinstance(raw, list) or not raw:
        raise InputParseError("'components' must be a non-empty list")
    comps = []
    for entry in raw:
        try:
            comps.append(
                MixtureComponent(
                    weight=entry["weight"], mean=entry["mean"], cov=entry["cov"]
                )
            )
        except (TypeError, KeyError):
            raise InputParseError(
                "each component needs 'weight', 'mean', and 'cov'"
            ) from None
    return GaussianMixture(comps)


def mixture_to_dict(mix: GaussianMixture) -> dict:
    comps = []
    for c in mix.components:
        cov = c.cov if c.is_isotropic else np.asarray(c.cov).tolist()
        comps.append({"weight": c.weight, "mean": c.mean.tolist(), "cov": cov})
    return {"components": comps}


def load_mixture(path: str) -> GaussianMixture:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputParseError(f"invalid JSON in {path}: {exc}") from exc
    return mixture_from_dict(obj)
