import numpy as np
import pytest

from yumekit import (
    concat_noisy_history,
    draw_history_regime,
    framepack_plan,
    latent_frame_count,
    tile_static_condition,
    token_count,
)
from yumekit.errors import IndivisibleDims, ShapeMismatch, TOutOfRange, ValidationError
from yumekit.framepack import CompressionPlan, CompressionTier


def tier_shapes(plan):
    return [(t.frames, t.ratios) for t in plan.tiers]


# -- tier layout --------------------------------------------------------------


def test_history_23_layout():
    plan = framepack_plan(23, 64, 64)
    assert tier_shapes(plan) == [
        (2, (1, 2, 2)),
        (4, (1, 4, 4)),
        (17, (1, 8, 8)),
    ]
    assert plan.tiers[0].newest_offset == 1
    assert plan.tiers[-1].oldest_offset == 23
    assert plan.includes_initial_frame
    assert plan.to_dict()["initial_frame"]["ratios"] == [1, 2, 2]


def test_tiny_histories():
    one = framepack_plan(1, 64, 64)
    assert tier_shapes(one) == [(1, (1, 2, 2))]
    two = framepack_plan(2, 64, 64)
    assert tier_shapes(two) == [(2, (1, 2, 2))]
    assert two.tiers[0].oldest_offset == 2


def test_geometric_extension_beyond_23():
    plan = framepack_plan(1400, 256, 256)
    assert tier_shapes(plan) == [
        (2, (1, 2, 2)),
        (4, (1, 4, 4)),
        (17, (1, 8, 8)),
        (64, (1, 16, 16)),
        (256, (2, 16, 16)),
        (1024, (2, 32, 32)),
        (33, (2, 64, 64)),
    ]


def test_every_frame_lands_in_exactly_one_tier():
    for n in range(1, 2001):
        plan = framepack_plan(n, 256, 256)
        assert plan.tiers[0].newest_offset == 1
        assert plan.tiers[-1].oldest_offset == n
        for a, b in zip(plan.tiers, plan.tiers[1:]):
            assert b.newest_offset == a.oldest_offset + 1
        assert sum(t.frames for t in plan.tiers) == n


def test_ratios_never_shrink_with_depth():
    plan = framepack_plan(2000, 256, 256)
    for a, b in zip(plan.tiers, plan.tiers[1:]):
        assert all(rb >= ra for ra, rb in zip(a.ratios, b.ratios))


def test_per_frame_cost_decreases_with_depth():
    plan = framepack_plan(343, 256, 256)
    costs = [plan.tier_token_count(t) / t.frames for t in plan.tiers]
    assert all(b <= a for a, b in zip(costs, costs[1:]))


def test_token_count_monotone_in_history():
    prev = 0
    for n in range(1, 400):
        total = token_count(framepack_plan(n, 128, 128))
        assert total >= prev
        prev = total


# -- token accounting ---------------------------------------------------------


def test_reference_budget_68x120():
    plan = framepack_plan(23, 68, 120)
    assert token_count(plan) == 10200
    d = plan.to_dict()
    assert d["token_count"] == 10200
    assert [t["tokens"] for t in d["tiers"]] == [4080, 2040, 2040]
    assert d["initial_frame"]["tokens"] == 2040


def test_single_tier_token_counts():
    uncompressed = CompressionPlan(
        tiers=(CompressionTier(1, 1, (1, 1, 1)),),
        history_len=1, latent_height=4, latent_width=4, draft=True,
    )
    assert token_count(uncompressed) == 16
    paired = CompressionPlan(
        tiers=(CompressionTier(1, 2, (1, 2, 2)),),
        history_len=2, latent_height=8, latent_width=8, draft=True,
    )
    assert token_count(paired) == 32


def test_temporal_grouping_ceils():
    # 5 frames grouped in pairs -> 3 groups
    plan = CompressionPlan(
        tiers=(CompressionTier(1, 5, (2, 2, 2)),),
        history_len=5, latent_height=4, latent_width=4, draft=True,
    )
    assert token_count(plan) == 3 * 2 * 2


def test_dropped_rows_and_cols_are_reported():
    d = framepack_plan(23, 33, 49).to_dict()
    deep = d["tiers"][2]
    assert deep["ratios"] == [1, 8, 8]
    assert deep["token_rows"] == 33 // 8
    assert deep["dropped_rows"] == 33 % 8
    assert deep["dropped_cols"] == 49 % 8


def test_oversized_ratios_rejected():
    with pytest.raises(IndivisibleDims):
        framepack_plan(23, 4, 4)
    with pytest.raises(IndivisibleDims):
        framepack_plan(1, 1, 64)
    with pytest.raises(ValidationError):
        framepack_plan(0, 64, 64)


def test_table_totals_agree_with_dict():
    plan = framepack_plan(23, 68, 120)
    text = plan.table()
    assert text.splitlines()[-1] == f"total tokens: {token_count(plan)}"
    assert "initial" in text


# -- draft variant ------------------------------------------------------------


def test_draft_layout_and_no_initial_tier():
    plan = framepack_plan(23, 64, 64, draft=True)
    assert tier_shapes(plan) == [
        (1, (1, 2, 2)),
        (4, (1, 4, 4)),
        (17, (1, 8, 8)),
        (1, (1, 16, 16)),
    ]
    assert not plan.includes_initial_frame
    d = plan.to_dict()
    assert "initial_frame" not in d
    assert d["variant"] == "draft"


def test_draft_budget_excludes_initial_frame():
    final = framepack_plan(2, 64, 64)
    draft = framepack_plan(2, 64, 64, draft=True)
    # final: 2 frames + initial at (1,2,2); draft: 1 frame at (1,2,2), 1 at (1,4,4)
    assert token_count(final) == 3 * 32 * 32
    assert token_count(draft) == 32 * 32 + 16 * 16


# -- latent frame arithmetic --------------------------------------------------


def test_latent_frame_count():
    assert latent_frame_count(1) == 1
    assert latent_frame_count(4) == 2
    assert latent_frame_count(33) == 9
    assert latent_frame_count(400) == 101
    with pytest.raises(ValidationError):
        latent_frame_count(0)


# -- training-side helpers ----------------------------------------------------


def test_history_regime_frequencies_and_bounds():
    rng = np.random.default_rng(7)
    draws = [draw_history_regime(rng) for _ in range(100_000)]
    short = [d for d in draws if d.name == "short-history"]
    assert abs(len(short) / len(draws) - 0.3) < 0.01
    for d in draws:
        lo, hi = d.bounds
        assert lo <= d.history_frames <= hi
        assert d.predict_frames == 33
    assert {d.bounds for d in draws} == {(33, 400), (400, 800)}


def test_history_regime_is_seed_reproducible():
    a = [draw_history_regime(np.random.default_rng(11)) for _ in range(50)]
    b = [draw_history_regime(np.random.default_rng(11)) for _ in range(50)]
    assert a == b


def test_tile_static_condition():
    rng = np.random.default_rng(0)
    frame = rng.standard_normal((3, 5, 4))
    tiled = tile_static_condition(frame)
    assert tiled.shape == (16, 3, 5, 4)
    assert np.array_equal(tiled[0], frame)
    assert np.array_equal(tiled[0], tiled[15])
    assert np.array_equal(tile_static_condition(np.zeros((2, 2))), np.zeros((16, 2, 2)))
    with pytest.raises(ValidationError):
        tile_static_condition(frame, repeats=0)


def test_concat_noisy_history_endpoints():
    rng = np.random.default_rng(1)
    hist = rng.standard_normal((4, 6, 5))
    cur = rng.standard_normal((3, 6, 5))
    noise = rng.standard_normal((4, 6, 5))
    clean = concat_noisy_history(hist, cur, noise, t=0.0)
    assert clean.shape == (7, 6, 5)
    assert np.array_equal(clean[:4], hist)
    assert np.array_equal(clean[4:], cur)
    noisy = concat_noisy_history(hist, cur, noise, t=1.0)
    assert np.array_equal(noisy[:4], noise)
    mid = concat_noisy_history(hist, cur, noise, t=0.25)
    np.testing.assert_allclose(mid[:4], 0.75 * hist + 0.25 * noise)


def test_concat_noisy_history_validation():
    hist = np.zeros((4, 6, 5))
    cur = np.zeros((3, 6, 5))
    with pytest.raises(ShapeMismatch):
        concat_noisy_history(hist, cur, np.zeros((4, 6, 4)), t=0.5)
    with pytest.raises(ShapeMismatch):
        concat_noisy_history(hist, np.zeros((3, 5, 5)), np.zeros((4, 6, 5)), t=0.5)
    with pytest.raises(TOutOfRange):
        concat_noisy_history(hist, cur, np.zeros((4, 6, 5)), t=1.5)
