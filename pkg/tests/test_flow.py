import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from yumekit import (
    GaussianMixture,
    MixtureComponent,
    OracleVelocity,
    adversarial_generator_loss,
    flow_matching_loss,
    hinge_discriminator_loss,
    interpolate,
    load_mixture,
    mixture_from_dict,
    oracle_velocity,
    posterior_data_mean,
    predict_clean,
    responsibilities,
    total_distillation_loss,
)
from yumekit.errors import (
    DegenerateTime,
    InputParseError,
    TOutOfRange,
    ValidationError,
)
from yumekit.flow import mixture_to_dict


def two_component_mixture():
    return GaussianMixture(
        [
            MixtureComponent(weight=0.35, mean=[-3.0, 2.5], cov=0.4),
            MixtureComponent(weight=0.65, mean=[2.0, -1.5], cov=[[0.5, 0.1], [0.1, 0.3]]),
        ]
    )


# -- interpolation and inversion ---------------------------------------------------


def test_interpolate_endpoints():
    x = np.array([1.0, -2.0, 0.5])
    eps = np.array([0.3, 0.3, 0.3])
    assert_allclose(interpolate(x, eps, 0.0), x)
    assert_allclose(interpolate(x, eps, 1.0), eps)


def test_interpolate_quarter():
    out = interpolate(np.array([2.0, 0.0]), np.array([0.0, 2.0]), 0.25)
    assert_allclose(out, [1.5, 0.5])


def test_interpolate_rejects_bad_t():
    with pytest.raises(TOutOfRange):
        interpolate(np.zeros(2), np.zeros(2), -0.01)
    with pytest.raises(TOutOfRange):
        interpolate(np.zeros(2), np.zeros(2), 1.01)


def test_predict_clean_zero_velocity():
    z = np.array([0.1, 0.2])
    assert_allclose(predict_clean(z, np.zeros(2), 0.7), z)


def test_predict_clean_inverts_interpolation():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(4)
    eps = rng.standard_normal(4)
    t = 0.37
    z = interpolate(x, eps, t)
    assert_allclose(predict_clean(z, eps - x, t), x, atol=1e-14)


def test_predict_clean_arithmetic():
    out = predict_clean(np.array([1.0, 1.0]), np.array([2.0, 0.0]), 0.5)
    assert_allclose(out, [0.0, 1.0])


# -- losses -------------------------------------------------------------------


def test_flow_matching_loss_zero_at_target():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(5)
    eps = rng.standard_normal(5)
    assert flow_matching_loss(eps - x, x, eps) == 0.0


def test_flow_matching_loss_sum_of_squares():
    assert flow_matching_loss(np.zeros(2), np.zeros(2), np.array([3.0, 4.0])) == 25.0
    rng = np.random.default_rng(2)
    v = rng.standard_normal(8)
    x = rng.standard_normal(8)
    eps = rng.standard_normal(8)
    ref = float(np.sum((v - (eps - x)) ** 2))
    assert abs(flow_matching_loss(v, x, eps) - ref) < 1e-12


def test_hinge_losses():
    assert hinge_discriminator_loss(np.array([1.0, 2.0]), np.array([-1.0, -5.0])) == 0.0
    assert hinge_discriminator_loss(np.array([0.0]), np.array([0.0])) == 2.0
    rng = np.random.default_rng(3)
    dr, df = rng.standard_normal(10), rng.standard_normal(10)
    ref = np.maximum(0, 1 - dr).mean() + np.maximum(0, 1 + df).mean()
    assert hinge_discriminator_loss(dr, df) == pytest.approx(ref, abs=1e-12)


def test_generator_loss():
    assert adversarial_generator_loss(np.array([0.0, 0.0])) == 0.0
    assert adversarial_generator_loss(np.array([1.0, 3.0])) == -2.0
    d = np.array([0.4, -1.2, 3.0])
    assert adversarial_generator_loss(5 * d) == pytest.approx(
        5 * adversarial_generator_loss(d), abs=1e-12
    )


def test_total_loss_combination():
    assert total_distillation_loss(1.5, -2.0, 0.1) == pytest.approx(1.3)


# -- mixture construction ----------------------------------------------------------


def test_mixture_weights_must_sum_to_one():
    with pytest.raises(ValidationError):
        GaussianMixture(
            [
                MixtureComponent(weight=0.5, mean=[0.0], cov=1.0),
                MixtureComponent(weight=0.6, mean=[1.0], cov=1.0),
            ]
        )


def test_mixture_covariance_must_be_spd():
    with pytest.raises(ValidationError):
        GaussianMixture(
            [MixtureComponent(weight=1.0, mean=[0.0, 0.0], cov=[[1.0, 2.0], [2.0, 1.0]])]
        )


def test_mixture_moments():
    mix = two_component_mixture()
    assert_allclose(mix.mean(), 0.35 * np.array([-3.0, 2.5]) + 0.65 * np.array([2.0, -1.5]))
    # law of total covariance, computed by hand
    mu = mix.mean()
    cov = np.zeros((2, 2))
    for w, m, c in [
        (0.35, np.array([-3.0, 2.5]), 0.4 * np.eye(2)),
        (0.65, np.array([2.0, -1.5]), np.array([[0.5, 0.1], [0.1, 0.3]])),
    ]:
        cov += w * (c + np.outer(m - mu, m - mu))
    assert_allclose(mix.covariance(), cov, atol=1e-12)


def test_mixture_sampling_moments():
    mix = two_component_mixture()
    rng = np.random.default_rng(4)
    draws = mix.sample(rng, 200_000)
    assert_allclose(draws.mean(axis=0), mix.mean(), atol=0.02)
    assert_allclose(np.cov(draws.T), mix.covariance(), atol=0.03)


def test_serialization_round_trip(tmp_path):
    mix = two_component_mixture()
    d = mixture_to_dict(mix)
    again = mixture_from_dict(d)
    assert_allclose(again.mean(), mix.mean())
    path = tmp_path / "mix.json"
    path.write_text(json.dumps(d))
    loaded = load_mixture(str(path))
    assert_allclose(loaded.covariance(), mix.covariance())


def test_mixture_from_dict_rejects_garbage():
    with pytest.raises(InputParseError):
        mixture_from_dict({"nope": 1})
    with pytest.raises(InputParseError):
        mixture_from_dict({"components": [{"weight": 1.0}]})


# -- oracle velocity ---------------------------------------------------------------


def test_responsibilities_sum_to_one():
    mix = two_component_mixture()
    rng = np.random.default_rng(5)
    for _ in range(20):
        z = rng.standard_normal(2) * 3
        t = rng.uniform(0.05, 0.95)
        r = responsibilities(mix, z, t)
        assert r.shape == (2,)
        assert r.min() >= 0
        assert abs(r.sum() - 1.0) < 1e-12


def test_velocity_zero_for_standard_normal_target_at_half():
    mix = GaussianMixture([MixtureComponent(weight=1.0, mean=[0.0, 0.0], cov=1.0)])
    rng = np.random.default_rng(6)
    for _ in range(10):
        z = rng.standard_normal(2) * 2
        v = oracle_velocity(mix, z, 0.5)
        assert_allclose(v, 0.0, atol=1e-12)


def test_velocity_single_gaussian_closed_form():
    # for N(mu, s^2 I): v = ((1-t)(z - mu) adjustment) with scalar algebra,
    # checked against the direct formula for the two conditional means
    mu = np.array([1.0, -2.0])
    s2 = 0.7
    mix = GaussianMixture([MixtureComponent(weight=1.0, mean=mu, cov=s2)])
    rng = np.random.default_rng(7)
    for _ in range(20):
        z = rng.standard_normal(2) * 3
        t = rng.uniform(0.05, 0.95)
        denom = (1 - t) ** 2 * s2 + t**2
        e_x = mu + (1 - t) * s2 * (z - (1 - t) * mu) / denom
        e_eps = t * (z - (1 - t) * mu) / denom
        assert_allclose(oracle_velocity(mix, z, t), e_eps - e_x, atol=1e-12)


def test_velocity_near_dirac_limit():
    c = np.array([2.0, -1.0])
    mix = GaussianMixture([MixtureComponent(weight=1.0, mean=c, cov=1e-12)])
    rng = np.random.default_rng(8)
    for _ in range(10):
        z = rng.standard_normal(2)
        t = rng.uniform(0.2, 0.9)
        v = oracle_velocity(mix, z, t)
        ref = (z - c) / t
        assert np.abs(v - ref).max() / max(np.abs(ref).max(), 1.0) < 1e-3


def test_velocity_consistency_with_posterior_mean():
    # z + (1-t) v = E[eps|z] and z - t v = E[x|z]; combining them,
    # the posterior data mean must satisfy z - t*v = posterior_data_mean
    mix = two_component_mixture()
    rng = np.random.default_rng(9)
    for _ in range(20):
        z = rng.standard_normal(2) * 2
        t = rng.uniform(0.05, 0.95)
        v = oracle_velocity(mix, z, t)
        assert_allclose(z - t * v, posterior_data_mean(mix, z, t), atol=1e-10)


def test_velocity_monte_carlo_smoke():
    # small-scale version of the rejection-sampling check; the full-size
    # run lives in the acceptance suite
    mix = two_component_mixture()
    rng = np.random.default_rng(10)
    t = 0.45
    x0 = mix.sample(rng, 1)[0]
    e0 = rng.standard_normal(2)
    z = (1 - t) * x0 + t * e0

    x = mix.sample(rng, 2_000_000)
    eps = rng.standard_normal((2_000_000, 2))
    zt = (1 - t) * x + t * eps
    m = np.square(zt - z).sum(axis=1) <= 0.03**2
    hits = eps[m] - x[m]
    assert m.sum() > 100
    se = hits.std(axis=0, ddof=1) / np.sqrt(m.sum())
    v = oracle_velocity(mix, z, t)
    assert np.all(np.abs(v - hits.mean(axis=0)) < 4 * se)


def test_velocity_time_endpoints_clamped():
    mix = two_component_mixture()
    z = np.array([0.5, 0.5])
    v0 = oracle_velocity(mix, z, 0.0)
    v1 = oracle_velocity(mix, z, 1.0)
    assert np.all(np.isfinite(v0))
    assert np.all(np.isfinite(v1))
    with pytest.raises(DegenerateTime):
        oracle_velocity(mix, z, -0.2)
    with pytest.raises(DegenerateTime):
        oracle_velocity(mix, z, 1.2)


def test_oracle_velocity_wrapper_shape_and_cost():
    mix = two_component_mixture()
    vel = OracleVelocity(mix)
    assert vel.cost == 1
    batch = np.zeros((7, 2))
    assert vel(batch, 0.5).shape == (7, 2)
    shaped = OracleVelocity(
        GaussianMixture([MixtureComponent(weight=1.0, mean=np.zeros(6), cov=1.0)]),
        latent_shape=(2, 3),
    )
    z = np.zeros((4, 2, 3))
    assert shaped(z, 0.5).shape == (4, 2, 3)
