"""Separable 2-D blur operator with an SVD pseudo-inverse and band projectors.

The operator A acts on the trailing two axes of a latent as A_H z A_W^T, where
each axis factor is a banded stencil matrix: row i holds the kernel centered
at column i, with out-of-range taps dropped (no renormalization at the edges,
so border rows genuinely attenuate).

Factorizing each axis matrix by SVD gives a pseudo-inverse in which reciprocal
singular values at or below SINGULAR_CUTOFF are zeroed. The induced projector

    B(z) = pinv(A) A z

is then an orthogonal projection onto the row space of the separable operator,
which for smoothing kernels is its low-frequency pass band; z - B(z) is the
complementary null-space (high-frequency) component.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadDims, BadKernel, ShapeMismatch

# Reciprocals of singular values at or below this are zeroed in the pseudo-inverse.
SINGULAR_CUTOFF = 1e-6


def banded_stencil_matrix(kernel: np.ndarray, size: int) -> np.ndarray:
    """Dense (size, size) matrix with ``kernel`` centered on the diagonal.

    A[i, j] = kernel[j - i + half] for in-range j; taps falling outside the
    grid are simply dropped.
    """
    kernel = np.asarray(kernel, dtype=float)
    half = len(kernel) // 2
    a = np.zeros((size, size))
    for i in range(size):
        for j in range(max(0, i - half), min(size, i + half + 1)):
            a[i, j] = kernel[j - i + half]
    return a


@dataclass(frozen=True)
class _AxisFactors:
    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray
    s_pinv: np.ndarray


def _factorize(kernel: np.ndarray, size: int) -> _AxisFactors:
    a = banded_stencil_matrix(kernel, size)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    keep = s > SINGULAR_CUTOFF
    s_pinv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    return _AxisFactors(u=u, s=s, vt=vt, s_pinv=s_pinv)


def _apply_axis_last(x: np.ndarray, f: _AxisFactors) -> np.ndarray:
    # Multiplies the last axis by the factored matrix: rows -> rows @ A^T.
    return ((x @ f.vt.T) * f.s) @ f.u.T


def _apply_pinv_axis_last(y: np.ndarray, f: _AxisFactors) -> np.ndarray:
    # Last axis times pinv(A)^T, zeroed reciprocals included.
    return ((y @ f.u) * f.s_pinv) @ f.vt


def _validate_kernel(kernel: np.ndarray, limit: int, name: str) -> np.ndarray:
    kernel = np.asarray(kernel, dtype=float)
    if kernel.ndim != 1 or kernel.size == 0:
        raise BadKernel(f"{name} must be a non-empty 1-D tap vector")
    if kernel.size % 2 == 0:
        raise BadKernel(f"{name} must have odd length, got {kernel.size}")
    if kernel.size >= limit:
        raise BadKernel(f"{name} length {kernel.size} must be < min(height, width) = {limit}")
    if not np.all(np.isfinite(kernel)):
        raise BadKernel(f"{name} contains non-finite taps")
    return kernel


@dataclass(frozen=True)
class SeparableOperator2D:
    """Separable blur A_H (.) A_W^T with cached SVD factors per axis."""

    height_factors: _AxisFactors
    width_factors: _AxisFactors
    shape: tuple[int, int]
    kernel_h: tuple[float, ...]
    kernel_w: tuple[float, ...]

    def _check(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.ndim < 2 or z.shape[-2:] != self.shape:
            raise ShapeMismatch(
                f"latent trailing shape {z.shape[-2:] if z.ndim >= 2 else z.shape} "
                f"!= operator shape {self.shape}"
            )
        return z

    def apply(self, z: np.ndarray) -> np.ndarray:
        """Forward blur: height axis first, then width."""
        z = self._check(z)
        zh = np.swapaxes(z, -2, -1)
        zh = _apply_axis_last(zh, self.height_factors)
        zh = np.swapaxes(zh, -2, -1)
        return _apply_axis_last(zh, self.width_factors)

    def pseudo_inverse(self, y: np.ndarray) -> np.ndarray:
        """Pseudo-inverse of ``apply``: width axis first, then height."""
        y = self._check(y)
        yw = _apply_pinv_axis_last(y, self.width_factors)
        yw = np.swapaxes(yw, -2, -1)
        yw = _apply_pinv_axis_last(yw, self.height_factors)
        return np.swapaxes(yw, -2, -1)

    def low_pass(self, z: np.ndarray) -> np.ndarray:
        """Projection onto the operator's pass band: pinv(A) A z."""
        return self.pseudo_inverse(self.apply(z))

    def null_space_project(self, z: np.ndarray) -> np.ndarray:
        """Complementary band: z - low_pass(z), by definition."""
        z = self._check(z)
        return z - self.low_pass(z)

    def null_space_basis(self, axis: str) -> np.ndarray:
        """Rows of V^T whose singular values fall at or below the cutoff."""
        f = {"height": self.height_factors, "width": self.width_factors}.get(axis)
        if f is None:
            raise ShapeMismatch(f"axis must be 'height' or 'width', got {axis!r}")
        return f.vt[f.s <= SINGULAR_CUTOFF]


def build_operator(
    kernel_h: np.ndarray, kernel_w: np.ndarray, height: int, width: int
) -> SeparableOperator2D:
    """Construct the separable operator for an (height, width) grid."""
    if height < 2 or width < 2:
        raise BadDims(f"grid must be at least 2x2, got {height}x{width}")
    limit = min(height, width)
    kh = _validate_kernel(kernel_h, limit, "kernel_h")
    kw = _validate_kernel(kernel_w, limit, "kernel_w")
    return SeparableOperator2D(
        height_factors=_factorize(kh, height),
        width_factors=_factorize(kw, width),
        shape=(int(height), int(width)),
        kernel_h=tuple(kh.tolist()),
        kernel_w=tuple(kw.tolist()),
    )


class IdentityLowPass:
    """Degenerate operator whose pass band is the whole space.

    ``low_pass`` returns its input unchanged, making recomposition in the
    two-stage sampler an exact state replacement.
    """

    def apply(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float)

    def pseudo_inverse(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=float)

    def low_pass(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float)

    def null_space_project(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.zeros_like(z)
