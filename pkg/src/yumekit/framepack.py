"""Geometric context compression plans for long frame histories.

Recent frames keep fine patchify ratios and older frames are squeezed harder,
so total context length stays bounded while the horizon grows. The finalized
tier arrangement covers the newest two frames at (1, 2, 2), the next four at
(1, 4, 4), the next seventeen at (1, 8, 8), and extends geometrically for
longer histories: 64 frames at (1, 16, 16), 256 at (2, 16, 16), then spatial
ratios double with capacity x4 per tier. The initial frame of the clip always
rides along at (1, 2, 2) regardless of its age.

Ratios are (temporal, height, width). Spatial division floors, and the plan
records the dropped rows/columns per tier; temporal grouping ceils, so a
partial group still emits tokens. A ratio larger than the latent dimension it
divides is rejected.

The earlier draft arrangement (newest frame alone at (1, 2, 2), no
initial-frame tier) stays available behind ``draft=True``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import IndivisibleDims, ShapeMismatch, TOutOfRange, ValidationError

INITIAL_FRAME_RATIOS = (1, 2, 2)

# History-length regimes (raw video frames) and their sampling probability.
SHORT_HISTORY_RANGE = (33, 400)
LONG_HISTORY_RANGE = (400, 800)
SHORT_HISTORY_PROB = 0.3
PREDICT_FRAMES = 33

STATIC_TILE_COUNT = 16


def latent_frame_count(raw_frames: int) -> int:
    """Temporal latent length for a raw frame count: 1 + raw // 4."""
    if raw_frames < 1:
        raise ValidationError(f"raw_frames must be >= 1, got {raw_frames}")
    return 1 + raw_frames // 4


def _tier_sequence(draft: bool) -> Iterator[tuple[int, tuple[int, int, int]]]:
    """(capacity, ratios) tiers, newest first, extended indefinitely."""
    first_capacity = 1 if draft else 2
    yield first_capacity, (1, 2, 2)
    yield 4, (1, 4, 4)
    yield 17, (1, 8, 8)
    capacity, r_t, r_s = 64, 1, 16
    while True:
        yield capacity, (r_t, r_s, r_s)
        capacity *= 4
        if r_t == 1:
            r_t = 2
        else:
            r_s *= 2


@dataclass(frozen=True)
class CompressionTier:
    """Frames ``newest_offset`` .. ``oldest_offset`` back (1-based, inclusive)."""

    newest_offset: int
    oldest_offset: int
    ratios: tuple[int, int, int]

    @property
    def frames(self) -> int:
        return self.oldest_offset - self.newest_offset + 1


@dataclass(frozen=True)
class CompressionPlan:
    tiers: tuple[CompressionTier, ...]
    history_len: int
    latent_height: int
    latent_width: int
    draft: bool

    @property
    def includes_initial_frame(self) -> bool:
        return not self.draft

    def _spatial_tokens(self, ratios: tuple[int, int, int]) -> tuple[int, int]:
        return self.latent_height // ratios[1], self.latent_width // ratios[2]

    def tier_token_count(self, tier: CompressionTier) -> int:
        groups = math.ceil(tier.frames / tier.ratios[0])
        th, tw = self._spatial_tokens(tier.ratios)
        return groups * th * tw

    def to_dict(self) -> dict:
        tiers = []
        for tier in self.tiers:
            th, tw = self._spatial_tokens(tier.ratios)
            tiers.append(
                {
                    "newest_offset": tier.newest_offset,
                    "oldest_offset": tier.oldest_offset,
                    "frames": tier.frames,
                    "ratios": list(tier.ratios),
                    "token_rows": th,
                    "token_cols": tw,
                    "dropped_rows": self.latent_height % tier.ratios[1],
                    "dropped_cols": self.latent_width % tier.ratios[2],
                    "tokens": self.tier_token_count(tier),
                }
            )
        out = {
            "history_len": self.history_len,
            "latent_height": self.latent_height,
            "latent_width": self.latent_width,
            "variant": "draft" if self.draft else "final",
            "tiers": tiers,
            "token_count": token_count(self),
        }
        if self.includes_initial_frame:
            th, tw = self._spatial_tokens(INITIAL_FRAME_RATIOS)
            out["initial_frame"] = {
                "ratios": list(INITIAL_FRAME_RATIOS),
                "tokens": th * tw,
            }
        return out

    def table(self) -> str:
        rows = [f"{'frames back':>12}  {'ratios':>10}  {'tokens':>8}"]
        for tier in self.tiers:
            span = (
                f"{tier.newest_offset}-{tier.oldest_offset}"
                if tier.frames > 1
                else f"{tier.newest_offset}"
            )
            ratios = "x".join(str(r) for r in tier.ratios)
            rows.append(f"{span:>12}  {ratios:>10}  {self.tier_token_count(tier):>8}")
        if self.includes_initial_frame:
            th, tw = self._spatial_tokens(INITIAL_FRAME_RATIOS)
            rows.append(f"{'initial':>12}  {'1x2x2':>10}  {th * tw:>8}")
        rows.append(f"total tokens: {token_count(self)}")
        return "\n".join(rows)


def framepack_plan(
    history_len: int, latent_height: int, latent_width: int, draft: bool = False
) -> CompressionPlan:
    """Assign every history frame to a compression tier, newest first."""
    if history_len < 1:
        raise ValidationError(f"history_len must be >= 1, got {history_len}")
    if latent_height < 1 or latent_width < 1:
        raise ValidationError("latent dimensions must be >= 1")
    tiers: list[CompressionTier] = []
    offset = 1
    remaining = history_len
    for capacity, ratios in _tier_sequence(draft):
        if remaining == 0:
            break
        take = min(capacity, remaining)
        if latent_height // ratios[1] == 0 or latent_width // ratios[2] == 0:
            raise IndivisibleDims(
                f"ratios {ratios} exceed latent dims "
                f"{latent_height}x{latent_width}"
            )
        tiers.append(
            CompressionTier(
                newest_offset=offset, oldest_offset=offset + take - 1, ratios=ratios
            )
        )
        offset += take
        remaining -= take
    if not draft and (latent_height // 2 == 0 or latent_width // 2 == 0):
        raise IndivisibleDims(
            f"initial-frame ratios {INITIAL_FRAME_RATIOS} exceed latent dims"
        )
    return CompressionPlan(
        tiers=tuple(tiers),
        history_len=history_len,
        latent_height=int(latent_height),
        latent_width=int(latent_width),
        draft=draft,
    )


def token_count(plan: CompressionPlan) -> int:
    """Total context tokens: all tiers plus the initial-frame tier if present."""
    total = sum(plan.tier_token_count(t) for t in plan.tiers)
    if plan.includes_initial_frame:
        th, tw = plan._spatial_tokens(INITIAL_FRAME_RATIOS)
        total += th * tw
    return total


# -- training-side helpers --------------------------------------------------------


@dataclass(frozen=True)
class RegimeDraw:
    name: str
    bounds: tuple[int, int]
    history_frames: int
    predict_frames: int = PREDICT_FRAMES


def draw_history_regime(rng: np.random.Generator) -> RegimeDraw:
    """Sample the training history regime: short with probability 0.3, else long;
    history length uniform (inclusive) within the regime's raw-frame bounds."""
    if rng.random() < SHORT_HISTORY_PROB:
        name, bounds = "short-history", SHORT_HISTORY_RANGE
    else:
        name, bounds = "long-history", LONG_HISTORY_RANGE
    length = int(rng.integers(bounds[0], bounds[1] + 1))
    return RegimeDraw(name=name, bounds=bounds, history_frames=length)


def tile_static_condition(frame: np.ndarray, repeats: int = STATIC_TILE_COUNT) -> np.ndarray:
    """Stack ``repeats`` identical copies of a frame along a new leading temporal axis."""
    if repeats < 1:
        raise ValidationError(f"repeats must be >= 1, got {repeats}")
    frame = np.asarray(frame, dtype=float)
    return np.repeat(frame[None, ...], repeats, axis=0)


def concat_noisy_history(
    history: np.ndarray, current: np.ndarray, noise: np.ndarray, t: float
) -> np.ndarray:
    """Prepend a partially re-noised history to the current latent on the frame axis.

    The history is mixed as (1 - t) * history + t * noise and concatenated
    with ``current`` along axis -3 (frames). History and noise must share a
    shape; current must match on all axes except the frame axis.
    """
    t = float(t)
    if not (0.0 <= t <= 1.0):
        raise TOutOfRange(f"t = {t} outside [0, 1]")
    history = np.asarray(history, dtype=float)
    current = np.asarray(current, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if history.ndim < 3 or current.ndim != history.ndim:
        raise ShapeMismatch("latents must have >= 3 dims (frames, height, width)")
    if history.shape != noise.shape:
        raise ShapeMismatch(f"history {history.shape} and noise {noise.shape} differ")
    if (
        history.shape[:-3] != current.shape[:-3]
        or history.shape[-2:] != current.shape[-2:]
    ):
        raise ShapeMismatch(
            f"history {history.shape} and current {current.shape} only "
            "may differ on the frame axis"
        )
    noised = (1.0 - t) * history + t * noise
    return np.concatenate([noised, current], axis=-3)
