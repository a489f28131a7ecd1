"""Toy residual block stack with token masking, residual caching, and
block-importance profiling.

The stack stands in for a deep transformer at desk scale: each block computes
x + tanh(x W + b) on (tokens, dim) arrays, deterministically seeded. Three
mechanisms run on top of it:

- masked forward: drop a fraction of token rows, encode the survivors through
  the first ``encoder_depth`` blocks, reconstruct the dropped rows with a
  single attention mixing layer over learnable placeholder tokens, then fuse
  and run the remaining blocks on the full set. Ratio 0 bypasses the whole
  path bit-exactly.

- residual caching: on a full-compute step each cacheable block stores its
  residual (output minus input) rounded to bfloat16; for the next ``interval``
  steps those blocks apply the cached residual instead of computing.

- importance profiling: a block's score is the mean squared output change
  caused by skipping it, averaged over segment-end steps of each input
  sequence; the lowest-scoring blocks are the caching candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    BadDepth,
    BadK,
    BadRatio,
    EmptyInput,
    ShapeMismatch,
    TooFewTimesteps,
    ValidationError,
)

# SeedSequence stream tags; distinct constants keep the parameter draws
# independent of the block-weight draws.
_BLOCK_STREAM = 0
_INTERP_STREAM = 1
_TOKEN_STREAM = 2


def round_to_bfloat16(x: np.ndarray) -> np.ndarray:
    """Round to bfloat16 (round-to-nearest-even) and widen back.

    Inputs are taken through float32 first (the storage pipeline this models
    computes in fp32), then the low 16 mantissa bits are rounded away:
    bits + 0x7FFF + (bit 16) keeps the upper half, ties to even. NaNs map to
    a quiet NaN preserving the sign; overflow saturates to infinity exactly as
    the hardware conversion does. For finite inputs |result - x| <= 2^-8 |x|.
    """
    arr = np.asarray(x)
    out_dtype = arr.dtype if arr.dtype.kind == "f" else np.dtype(np.float32)
    f32 = np.ascontiguousarray(arr, dtype=np.float32)
    bits = f32.view(np.uint32)
    rounded = (bits + np.uint32(0x7FFF) + ((bits >> np.uint32(16)) & np.uint32(1))) & np.uint32(
        0xFFFF0000
    )
    quiet_nan = (bits & np.uint32(0xFFFF0000)) | np.uint32(0x00400000)
    out_bits = np.where(np.isnan(f32), quiet_nan, rounded)
    return out_bits.view(np.float32).astype(out_dtype)


class AffineTanhBlock:
    """Residual block x + tanh(x W + b)."""

    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        self.weight = np.asarray(weight, dtype=float)
        self.bias = np.asarray(bias, dtype=float)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x + np.tanh(x @ self.weight + self.bias)


class IdentityBlock:
    """Block that changes nothing; useful as a zero-importance control."""

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x


@dataclass(frozen=True)
class ToyBlockStack:
    """Deterministically seeded stack of residual blocks on (tokens, dim) arrays."""

    blocks: tuple
    dim: int
    seed: int

    @classmethod
    def seeded(cls, n_blocks: int = 40, dim: int = 8, seed: int = 0) -> "ToyBlockStack":
        if n_blocks < 1 or dim < 1:
            raise ValidationError("n_blocks and dim must be >= 1")
        rng = np.random.default_rng(np.random.SeedSequence([seed, _BLOCK_STREAM]))
        blocks = []
        for _ in range(n_blocks):
            w = rng.standard_normal((dim, dim)) / math.sqrt(dim)
            b = 0.1 * rng.standard_normal(dim)
            blocks.append(AffineTanhBlock(w, b))
        return cls(blocks=tuple(blocks), dim=dim, seed=seed)

    def __len__(self) -> int:
        return len(self.blocks)

    def forward(self, x: np.ndarray, skip_block: int | None = None) -> np.ndarray:
        """Run all blocks in order; ``skip_block`` replaces that block with identity."""
        h = np.asarray(x, dtype=float)
        for idx, block in enumerate(self.blocks):
            if idx == skip_block:
                continue
            h = block(h)
        return h

    def with_block_inserted(self, index: int, block) -> "ToyBlockStack":
        if not (0 <= index <= len(self.blocks)):
            raise ValidationError(f"insert index {index} outside [0, {len(self.blocks)}]")
        blocks = self.blocks[:index] + (block,) + self.blocks[index:]
        return ToyBlockStack(blocks=blocks, dim=self.dim, seed=self.seed)

    def interpolator_projections(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Query/key/value projections of the side interpolator, seed-derived."""
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, _INTERP_STREAM]))
        scale = 1.0 / math.sqrt(self.dim)
        return tuple(scale * rng.standard_normal((self.dim, self.dim)) for _ in range(3))

    def learnable_tokens(self, count: int) -> np.ndarray:
        """First ``count`` rows of the seed-derived placeholder-token bank.

        Drawn row-major from a fresh tagged stream, so token i is identical
        across calls with different counts.
        """
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, _TOKEN_STREAM]))
        return rng.standard_normal((count, self.dim))


# -- token masking and fusion -------------------------------------------------------


@dataclass(frozen=True)
class TokenMask:
    """Boolean mask over token rows; True marks a dropped (masked) row."""

    mask: np.ndarray
    ratio: float

    def __post_init__(self) -> None:
        mask = np.asarray(self.mask, dtype=bool)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def n_tokens(self) -> int:
        return int(self.mask.size)

    @property
    def n_masked(self) -> int:
        return int(np.count_nonzero(self.mask))

    @property
    def n_visible(self) -> int:
        return self.n_tokens - self.n_masked


def mask_tokens(
    z: np.ndarray, ratio: float, rng: np.random.Generator
) -> tuple[np.ndarray, TokenMask]:
    """Drop a uniform random subset of token rows.

    The visible count is round((1 - ratio) * N), ties to even. Returns the
    visible rows and the mask.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 2:
        raise ShapeMismatch(f"tokens must be (N, dim), got shape {z.shape}")
    if not (0.0 <= ratio < 1.0):
        raise BadRatio(f"ratio must be in [0, 1), got {ratio}")
    n = z.shape[0]
    if n < 1:
        raise EmptyInput("need at least one token row")
    n_visible = int(round((1.0 - ratio) * n))
    n_masked = n - n_visible
    mask = np.zeros(n, dtype=bool)
    if n_masked > 0:
        mask[rng.choice(n, size=n_masked, replace=False)] = True
    return z[~mask], TokenMask(mask=mask, ratio=float(ratio))


def gated_fusion(z_full: np.ndarray, z_interp: np.ndarray, mask: TokenMask) -> np.ndarray:
    """Row-wise select: masked rows from z_interp, visible rows from z_full.

    Pure selection, no arithmetic, so surviving rows are bit-identical to
    their source.
    """
    z_full = np.asarray(z_full, dtype=float)
    z_interp = np.asarray(z_interp, dtype=float)
    if z_full.shape != z_interp.shape or z_full.ndim != 2:
        raise ShapeMismatch(
            f"fusion inputs must be equal 2-D shapes, got {z_full.shape} vs {z_interp.shape}"
        )
    if z_full.shape[0] != mask.n_tokens:
        raise ShapeMismatch(
            f"mask covers {mask.n_tokens} rows, inputs have {z_full.shape[0]}"
        )
    return np.where(mask.mask[:, None], z_interp, z_full)


def _self_attention(
    tokens: np.ndarray, projections: tuple[np.ndarray, np.ndarray, np.ndarray]
) -> np.ndarray:
    wq, wk, wv = projections
    q = tokens @ wq
    k = tokens @ wk
    v = tokens @ wv
    logits = (q @ k.T) / math.sqrt(tokens.shape[1])
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    weights /= weights.sum(axis=1, keepdims=True)
    return weights @ v


def masked_forward(
    stack: ToyBlockStack,
    z: np.ndarray,
    ratio: float,
    encoder_depth: int,
    rng: np.random.Generator,
    trace: dict | None = None,
) -> np.ndarray:
    """Masked pipeline: encode visible rows, interpolate masked rows, fuse, decode.

    Visible rows pass through the first ``encoder_depth`` blocks; masked rows
    are reconstructed by one attention layer over [placeholder tokens,
    encoded visible rows]; fusion selects rows without arithmetic; the
    remaining blocks run on the fused set. ratio = 0 runs the plain stack on
    the untouched input, bit-exactly.
    """
    z = np.asarray(z, dtype=float)
    if not (0 <= encoder_depth < len(stack)):
        raise BadDepth(f"encoder_depth must be in [0, {len(stack)}), got {encoder_depth}")
    z_visible, token_mask = mask_tokens(z, ratio, rng)
    if trace is not None:
        trace["mask"] = token_mask
    if token_mask.n_masked == 0:
        out = stack.forward(z)
        if trace is not None:
            trace["encoder_tokens"] = token_mask.n_tokens
            trace["fused"] = z
        return out
    h = z_visible
    for block in stack.blocks[:encoder_depth]:
        h = block(h)
    placeholders = stack.learnable_tokens(token_mask.n_masked)
    mixed = _self_attention(
        np.concatenate([placeholders, h], axis=0), stack.interpolator_projections()
    )
    interpolated = mixed[: token_mask.n_masked]
    full = np.zeros_like(z)
    full[~token_mask.mask] = h
    interp_full = np.zeros_like(z)
    interp_full[token_mask.mask] = interpolated
    fused = gated_fusion(full, interp_full, token_mask)
    if trace is not None:
        trace["encoder_tokens"] = token_mask.n_visible
        trace["encoder_output"] = h
        trace["fused"] = fused
    out = fused
    for block in stack.blocks[encoder_depth:]:
        out = block(out)
    return out


# -- residual caching ----------------------------------------------------------------


@dataclass(frozen=True)
class CachePlan:
    """Which blocks reuse cached residuals, for how many steps, at what precision."""

    cacheable_layers: frozenset
    interval: int
    precision: str = "bfloat16"

    def __post_init__(self) -> None:
        layers = frozenset(int(i) for i in self.cacheable_layers)
        object.__setattr__(self, "cacheable_layers", layers)
        if any(i < 0 for i in layers):
            raise ValidationError("cacheable layer indices must be >= 0")
        if self.interval < 1:
            raise ValidationError(f"cache interval must be >= 1, got {self.interval}")
        if self.precision not in ("bfloat16", "full"):
            raise ValidationError(
                f"precision must be 'bfloat16' or 'full', got {self.precision!r}"
            )


def run_with_cache(
    stack: ToyBlockStack, inputs: Sequence[np.ndarray], plan: CachePlan
) -> list[np.ndarray]:
    """Run the stack over a step sequence reusing cached residuals.

    Step indices divisible by (interval + 1) compute fully and refresh the
    cache; the following ``interval`` steps apply x + cached_residual for
    cacheable blocks. An empty cacheable set reproduces plain forwards
    bit-identically.
    """
    if len(inputs) == 0:
        raise EmptyInput("need at least one input step")
    if plan.cacheable_layers and max(plan.cacheable_layers) >= len(stack):
        raise ValidationError(
            f"cacheable layer {max(plan.cacheable_layers)} outside stack of {len(stack)}"
        )
    outputs: list[np.ndarray] = []
    cache: dict[int, np.ndarray] = {}
    for step, x in enumerate(inputs):
        h = np.asarray(x, dtype=float)
        full = step % (plan.interval + 1) == 0
        for idx, block in enumerate(stack.blocks):
            if idx in plan.cacheable_layers and not full:
                h = h + cache[idx]
            elif idx in plan.cacheable_layers:
                out = block(h)
                residual = out - h
                if plan.precision == "bfloat16":
                    residual = round_to_bfloat16(residual)
                cache[idx] = residual
                h = out
            else:
                h = block(h)
        outputs.append(h)
    return outputs


# -- importance profiling --------------------------------------------------------------


def block_importance_scores(
    stack: ToyBlockStack, videos: Sequence[Sequence[np.ndarray]], interval: int
) -> np.ndarray:
    """Mean squared output change from skipping each block, per caching segment.

    Each sequence contributes one measurement per complete cache segment
    (interval + 1 steps), taken at the segment-end step. Every sequence must
    span at least interval + 1 steps; otherwise no measurement exists.
    """
    if interval < 1:
        raise ValidationError(f"interval must be >= 1, got {interval}")
    if len(videos) == 0:
        raise EmptyInput("need at least one input sequence")
    totals = np.zeros(len(stack))
    measurements = 0
    for seq in videos:
        segments = len(seq) // (interval + 1)
        for m in range(segments):
            end_step = m * (interval + 1) + interval
            x = np.asarray(seq[end_step], dtype=float)
            reference = stack.forward(x)
            for idx in range(len(stack)):
                ablated = stack.forward(x, skip_block=idx)
                diff = ablated - reference
                totals[idx] += float((diff * diff).mean())
            measurements += 1
    if measurements == 0:
        raise TooFewTimesteps(
            f"no sequence spans a full cache segment of {interval + 1} steps"
        )
    return totals / measurements


def select_cacheable_layers(scores: np.ndarray, k: int) -> list[int]:
    """Indices of the k lowest scores, ascending by (score, index)."""
    scores = np.asarray(scores, dtype=float)
    if not (0 <= k <= scores.size):
        raise BadK(f"k must be in [0, {scores.size}], got {k}")
    order = sorted(range(scores.size), key=lambda i: (scores[i], i))
    return [int(i) for i in order[:k]]
