"""Acceptance gate: ten end-to-end checks, each printed as one PASS/FAIL line
with its runtime. Tolerances and time budgets are part of the contract; the
random seeds are frozen so every run sees the same draws."""

import time
from contextlib import contextmanager

import numpy as np

from yumekit import (
    CfgVelocity,
    GaussianMixture,
    IdentityLowPass,
    MixtureComponent,
    NfeCounter,
    OracleVelocity,
    SamplerConfig,
    TimeSchedule,
    aam_sample,
    banded_stencil_matrix,
    block_importance_scores,
    build_operator,
    default_motion_set,
    euler_ode_sample,
    framepack_plan,
    gated_fusion,
    mask_tokens,
    masked_forward,
    normalize_trajectory_scale,
    oracle_velocity,
    quantize_trajectory,
    run_with_cache,
    select_cacheable_layers,
    speed_stats,
    synthesize_trajectory,
    translation_pose,
    tts_sde_sample,
)
from yumekit.blocks import CachePlan, IdentityBlock, ToyBlockStack
from yumekit.se3 import batch_se3_distances, relative_transform

TARGET_MIX = GaussianMixture(
    [
        MixtureComponent(weight=0.35, mean=[-3.0, 2.5], cov=0.4),
        MixtureComponent(weight=0.65, mean=[2.0, -1.5], cov=[[0.5, 0.1], [0.1, 0.3]]),
    ]
)


@contextmanager
def criterion(capsys, number, label, budget_s):
    t0 = time.perf_counter()
    ok = False
    try:
        yield
        ok = True
    finally:
        dt = time.perf_counter() - t0
        verdict = "PASS" if ok and dt < budget_s else "FAIL"
        with capsys.disabled():
            print(f"criterion {number:02d} {label}: {verdict} ({dt:.2f}s, budget {budget_s:g}s)")
    assert dt < budget_s, f"{label} took {dt:.2f}s, budget {budget_s:g}s"


def test_criterion_01_nfe_accounting(capsys):
    with criterion(capsys, 1, "nfe accounting", 1.0):
        cond = OracleVelocity(TARGET_MIX)
        uncond = OracleVelocity(
            GaussianMixture([MixtureComponent(weight=1.0, mean=[0.0, 0.0], cov=1.0)])
        )
        guided = CfgVelocity(cond=cond, uncond=uncond, scale=2.0)
        z = np.zeros((4, 2))

        counter = NfeCounter()
        euler_ode_sample(guided, TimeSchedule.uniform(50), z, counter)
        assert counter.count == 100

        counter = NfeCounter()
        aam_sample(cond, guided, TimeSchedule.uniform(30), TimeSchedule.uniform(30),
                   IdentityLowPass(), 5, z, counter)
        assert counter.count == 90


def test_criterion_02_context_compression_tiers(capsys):
    with criterion(capsys, 2, "context compression tiers", 1.0):
        plan = framepack_plan(23, 64, 64)
        assert [(t.frames, t.ratios) for t in plan.tiers] == [
            (2, (1, 2, 2)),
            (4, (1, 4, 4)),
            (17, (1, 8, 8)),
        ]
        assert plan.tiers[0].newest_offset == 1
        assert plan.tiers[-1].oldest_offset == 23
        assert plan.includes_initial_frame
        assert plan.to_dict()["initial_frame"]["ratios"] == [1, 2, 2]


def test_criterion_03_quantizer_recovery(capsys):
    with criterion(capsys, 3, "motion quantizer recovery", 10.0):
        motions = default_motion_set()
        names = motions.names()
        stacked = motions.stacked_matrices()
        rng = np.random.default_rng(20)
        for trial in range(1000):
            motion = motions.motions[trial % len(motions)]
            poses = synthesize_trajectory(
                motion, 6, rng=rng, rotation_noise=0.02,
                translation_noise=0.05 * motions.step_length,
            )
            normalized, _ = normalize_trajectory_scale(poses, motions.step_length)
            labels = quantize_trajectory(normalized, motions)
            assert all(l.motion_name == motion.name for l in labels)
            rels = np.stack([
                relative_transform(a, b).matrix
                for a, b in zip(normalized, normalized[1:])
            ])
            argmins = np.argmin(batch_se3_distances(rels, stacked), axis=1)
            assert all(names[int(i)] == motion.name for i in argmins)


def test_criterion_04_speed_metric_oracles(capsys):
    with criterion(capsys, 4, "speed metric oracles", 5.0):
        rng = np.random.default_rng(21)
        worst = 0.0
        for _ in range(1000):
            ts = np.linspace(0.0, 1.0, 8)
            coef = rng.standard_normal((3, 3))
            phase = rng.uniform(0, 2 * np.pi, 3)
            pos = np.stack(
                [
                    sum(
                        coef[d, k] * np.sin((k + 1) * 2 * np.pi * ts + phase[k])
                        for k in range(3)
                    )
                    for d in range(3)
                ],
                axis=1,
            )
            poses = [translation_pose(p) for p in pos]
            st = speed_stats(poses)
            v = st.translations
            for i in range(len(v) - 1):
                ref = np.arctan2(
                    np.linalg.norm(np.cross(v[i], v[i + 1])), np.dot(v[i], v[i + 1])
                )
                worst = max(worst, abs(st.direction_angles[i] - ref))
            axes = np.stack([p.viewing_axis for p in poses])
            for i in range(len(axes) - 1):
                ref = np.arctan2(
                    np.linalg.norm(np.cross(axes[i], axes[i + 1])),
                    np.dot(axes[i], axes[i + 1]),
                )
                worst = max(worst, abs(st.rotation_angles[i] - ref))
        assert worst < 1e-9

        right = speed_stats(
            [translation_pose([0, 0, 0]), translation_pose([1, 0, 0]),
             translation_pose([1, 1, 0])]
        )
        assert abs(right.direction_angles[0] - np.pi / 2) < 1e-12


def test_criterion_05_frequency_operator_identities(capsys):
    with criterion(capsys, 5, "frequency operator identities", 10.0):
        kernel_h = np.array([0.1, 0.8, 0.1])
        kernel_w = np.array([0.2, 0.6, 0.2])
        op = build_operator(kernel_h, kernel_w, 32, 48)
        rng = np.random.default_rng(22)
        for _ in range(100):
            z = rng.standard_normal((32, 48))
            low = op.low_pass(z)
            assert np.abs(op.low_pass(low) - low).max() < 1e-5
            assert np.abs(op.apply(z - low)).max() < 1e-4

        small = build_operator(kernel_h, kernel_w, 8, 6)
        dense = np.kron(
            banded_stencil_matrix(kernel_h, 8), banded_stencil_matrix(kernel_w, 6)
        )
        for _ in range(100):
            z = rng.standard_normal((8, 6))
            want = (dense @ z.reshape(-1)).reshape(8, 6)
            assert np.abs(small.apply(z) - want).max() < 1e-6


def test_criterion_06_sampler_distributional_accuracy(capsys):
    with criterion(capsys, 6, "sampler distributional accuracy", 60.0):
        vel = OracleVelocity(TARGET_MIX)
        target_mean = TARGET_MIX.mean()
        n = 10**4
        z = np.random.default_rng(np.random.SeedSequence([0, 10])).standard_normal((n, 2))

        def check(out):
            assert np.abs(out.mean(axis=0) - target_mean).max() < 0.05
            freqs = np.bincount(TARGET_MIX.assign_components(out), minlength=2) / n
            assert np.abs(freqs - TARGET_MIX.weights).max() < 0.03

        check(euler_ode_sample(vel, TimeSchedule.uniform(50), z))
        check(tts_sde_sample(
            vel, TimeSchedule.uniform(50), z,
            SamplerConfig(eta=0.2, travel_interval=5, travel_depth=5, rng_seed=0),
        ))
        check(aam_sample(
            vel, vel, TimeSchedule.uniform(30), TimeSchedule.uniform(30),
            IdentityLowPass(), 5, z,
        ))


def test_criterion_07_degeneracy_equalities(capsys):
    with criterion(capsys, 7, "degeneracy equalities", 10.0):
        vel = OracleVelocity(TARGET_MIX)
        sched = TimeSchedule.uniform(12)
        z = np.random.default_rng(23).standard_normal((50, 2))
        ref = euler_ode_sample(vel, sched, z)

        quiet = SamplerConfig(eta=0.0, travel_interval=10**6, travel_depth=5, rng_seed=0)
        assert np.array_equal(tts_sde_sample(vel, sched, z, quiet), ref)

        assert np.array_equal(
            aam_sample(vel, vel, sched, sched, IdentityLowPass(), 0, z), ref
        )

        stack = ToyBlockStack.seeded(n_blocks=6, dim=5, seed=4)
        inputs = [np.random.default_rng(24).standard_normal((7, 5)) for _ in range(5)]
        plan = CachePlan(cacheable_layers=frozenset(), interval=2)
        for x, out in zip(inputs, run_with_cache(stack, inputs, plan)):
            assert np.array_equal(out, stack.forward(x))


def test_criterion_08_velocity_oracle_vs_monte_carlo(capsys):
    with criterion(capsys, 8, "velocity oracle vs monte carlo", 120.0):
        n_points, n_pairs, chunk, window = 20, 10**7, 10**6, 0.02
        rng = np.random.default_rng(np.random.SeedSequence([5, 0]))
        ts = rng.uniform(0.1, 0.9, n_points)
        x0 = TARGET_MIX.sample(rng, n_points)
        e0 = rng.standard_normal((n_points, 2))
        zs = (1.0 - ts)[:, None] * x0 + ts[:, None] * e0

        pair_rng = np.random.default_rng(np.random.SeedSequence([5, 1]))
        sums = np.zeros((n_points, 2))
        sqs = np.zeros((n_points, 2))
        counts = np.zeros(n_points, dtype=np.int64)
        for _ in range(n_pairs // chunk):
            x = TARGET_MIX.sample(pair_rng, chunk)
            eps = pair_rng.standard_normal((chunk, 2))
            for j in range(n_points):
                zt = (1.0 - ts[j]) * x + ts[j] * eps
                d2 = np.square(zt - zs[j]).sum(axis=1)
                hit = d2 <= window * window
                if hit.any():
                    target = eps[hit] - x[hit]
                    sums[j] += target.sum(axis=0)
                    sqs[j] += np.square(target).sum(axis=0)
                    counts[j] += int(hit.sum())

        for j in range(n_points):
            hits = counts[j]
            assert hits >= 2, f"point {j} collected only {hits} paired samples"
            mc = sums[j] / hits
            var = (sqs[j] / hits - mc * mc) * hits / (hits - 1)
            se = np.sqrt(var / hits)
            v = oracle_velocity(TARGET_MIX, zs[j], float(ts[j]))
            assert np.all(np.abs(v - mc) <= 3.0 * se), (
                f"point {j}: oracle {v} vs MC {mc} (se {se})"
            )


def test_criterion_09_block_importance_profiling(capsys):
    with criterion(capsys, 9, "block importance profiling", 30.0):
        stack = ToyBlockStack.seeded(n_blocks=10, dim=6, seed=3)
        insert_at = 4
        widened = stack.with_block_inserted(insert_at, IdentityBlock())
        rng = np.random.default_rng(25)
        videos = [
            [rng.standard_normal((5, 6)) for _ in range(6)] for _ in range(2)
        ]
        interval = 2
        scores = block_importance_scores(widened, videos, interval)
        assert abs(scores[insert_at]) <= 1e-12
        assert select_cacheable_layers(scores, 1) == [insert_at]

        expected = np.zeros(len(widened))
        measurements = 0
        for seq in videos:
            for m in range(len(seq) // (interval + 1)):
                x = seq[m * (interval + 1) + interval]
                ref = widened.forward(x)
                for i in range(len(widened)):
                    d = widened.forward(x, skip_block=i) - ref
                    expected[i] += (d * d).mean()
                measurements += 1
        assert np.array_equal(scores, expected / measurements)


def test_criterion_10_token_masking_pipeline(capsys):
    with criterion(capsys, 10, "token masking pipeline", 5.0):
        rng = np.random.default_rng(26)
        z100 = rng.standard_normal((100, 6))
        visible, mask = mask_tokens(z100, 0.3, np.random.default_rng(27))
        assert visible.shape[0] == 70
        assert mask.n_visible == 70

        stack = ToyBlockStack.seeded(n_blocks=8, dim=6, seed=5)
        z = rng.standard_normal((40, 6))
        bypass = masked_forward(stack, z, 0.0, encoder_depth=3,
                                rng=np.random.default_rng(28))
        assert np.array_equal(bypass, stack.forward(z))

        trace = {}
        masked_forward(stack, z, 0.3, encoder_depth=3,
                       rng=np.random.default_rng(29), trace=trace)
        kept = trace["mask"]
        h = z[~kept.mask]
        for block in stack.blocks[:3]:
            h = block(h)
        assert np.array_equal(trace["fused"][~kept.mask], h)

        full = rng.standard_normal((10, 4))
        interp = rng.standard_normal((10, 4))
        _, small_mask = mask_tokens(full, 0.3, np.random.default_rng(30))
        fused = gated_fusion(full, interp, small_mask)
        assert np.array_equal(fused[~small_mask.mask], full[~small_mask.mask])
        assert np.array_equal(fused[small_mask.mask], interp[small_mask.mask])
