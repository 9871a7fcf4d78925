"""Kernel algebra: per-modality RBF kernels, their simplex-weighted linear
combination, and the relatedness-scaled block kernel used for transfer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ParameterError, SegmentationError
from .features import FeatureObservation, Modality

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class RbfKernel:
    length_scale: float
    signal_variance: float = 1.0

    def __post_init__(self):
        if not (self.length_scale > 0):
            raise ParameterError(f"length_scale must be > 0, got {self.length_scale}")
        if not (self.signal_variance > 0):
            raise ParameterError(
                f"signal_variance must be > 0, got {self.signal_variance}"
            )


def rbf_eval(kernel: RbfKernel, x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise SegmentationError(f"dimension mismatch: {x.shape} vs {y.shape}")
    sq = float(np.sum((x - y) ** 2))
    return kernel.signal_variance * np.exp(-sq / (2.0 * kernel.length_scale**2))


def _rbf_matrix(kernel: RbfKernel, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    # Squared distances via the expansion |x-y|^2 = |x|^2 + |y|^2 - 2 x.y,
    # clipped at zero against rounding.
    xn = np.sum(xs**2, axis=1)[:, None]
    yn = np.sum(ys**2, axis=1)[None, :]
    sq = np.maximum(xn + yn - 2.0 * xs @ ys.T, 0.0)
    return kernel.signal_variance * np.exp(-sq / (2.0 * kernel.length_scale**2))


def project_simplex(weights: Sequence[float]) -> np.ndarray:
    """Clip to nonnegative and renormalize to sum one."""
    w = np.clip(np.asarray(weights, dtype=float), 0.0, None)
    total = w.sum()
    if total <= 0.0:
        return np.full(w.size, 1.0 / w.size)
    return w / total


@dataclass(frozen=True)
class CombinedKernel:
    """Simplex-weighted sum of one RBF kernel per modality segment."""

    parts: tuple[tuple[Modality, RbfKernel], ...]
    weights: np.ndarray

    def __post_init__(self):
        parts = tuple(self.parts)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "parts", parts)
        object.__setattr__(self, "weights", weights)
        if weights.shape != (len(parts),):
            raise ParameterError(
                f"need one weight per part, got {weights.shape} for {len(parts)} parts"
            )
        if np.any(weights < -SIMPLEX_TOL) or np.any(weights > 1.0 + SIMPLEX_TOL):
            raise ParameterError(f"weights must lie in [0, 1], got {weights}")
        if abs(float(np.sum(np.abs(weights))) - 1.0) > SIMPLEX_TOL:
            raise ParameterError(f"weights must sum to 1, got sum {weights.sum()}")

    @property
    def modalities(self) -> tuple[Modality, ...]:
        return tuple(mod for mod, _ in self.parts)

    def with_weights(self, weights: Sequence[float]) -> "CombinedKernel":
        return CombinedKernel(self.parts, np.asarray(weights, dtype=float))


def uniform_combined(parts: Sequence[tuple[Modality, RbfKernel]]) -> CombinedKernel:
    parts = tuple(parts)
    return CombinedKernel(parts, np.full(len(parts), 1.0 / len(parts)))


def _check_segmentation(kernel: CombinedKernel, obs: FeatureObservation) -> None:
    if obs.modalities != kernel.modalities:
        raise SegmentationError(
            f"observation modalities {obs.modalities} do not match kernel parts "
            f"{kernel.modalities}"
        )


def combined_eval(
    kernel: CombinedKernel, x: FeatureObservation, y: FeatureObservation
) -> float:
    _check_segmentation(kernel, x)
    _check_segmentation(kernel, y)
    total = 0.0
    for gamma, (mod, part) in zip(kernel.weights, kernel.parts):
        total += gamma * rbf_eval(part, x.segment(mod), y.segment(mod))
    return float(total)


def _stack(observations: Sequence[FeatureObservation], modality: Modality) -> np.ndarray:
    return np.stack([obs.segment(modality) for obs in observations])


def _as_points(X) -> np.ndarray:
    xs = np.asarray(X, dtype=float)
    if xs.ndim == 1:  # a flat list of scalars is n one-dimensional points
        xs = xs[:, None]
    return xs


def cross_gram(kernel, X, Y) -> np.ndarray:
    """Kernel matrix between two observation lists (rows: X, cols: Y)."""
    if isinstance(kernel, RbfKernel):
        return _rbf_matrix(kernel, _as_points(X), _as_points(Y))
    if not isinstance(kernel, CombinedKernel):
        raise TypeError(f"unsupported kernel type {type(kernel).__name__}")
    for obs in list(X) + list(Y):
        _check_segmentation(kernel, obs)
    out = np.zeros((len(X), len(Y)))
    for gamma, (mod, part) in zip(kernel.weights, kernel.parts):
        if gamma == 0.0:
            continue
        out += gamma * _rbf_matrix(part, _stack(X, mod), _stack(Y, mod))
    return out


def gram(kernel, X) -> np.ndarray:
    """Symmetric kernel matrix over one observation list."""
    if len(X) == 0:
        raise ParameterError("gram of an empty observation list")
    k = cross_gram(kernel, X, X)
    return 0.5 * (k + k.T)


def kernel_diag(kernel, X) -> np.ndarray:
    """Diagonal of gram(kernel, X) without building the full matrix."""
    if isinstance(kernel, RbfKernel):
        return np.full(_as_points(X).shape[0], kernel.signal_variance)
    value = float(
        sum(g * p.signal_variance for g, (_, p) in zip(kernel.weights, kernel.parts))
    )
    return np.full(len(X), value)


@dataclass(frozen=True)
class DependentKernel:
    """Block kernel that scales old/new cross-covariance by a relatedness
    factor in [0, 1]: 0 decouples the blocks, 1 merges the two objects."""

    base: CombinedKernel
    rho: float

    def __post_init__(self):
        if not (0.0 <= self.rho <= 1.0):
            raise ParameterError(f"rho must lie in [0, 1], got {self.rho}")


def dependent_gram(kernel: DependentKernel, X_old, X_new) -> np.ndarray:
    """[[K_oo, rho K_on], [rho K_no, K_nn]] over the pooled observations."""
    if not (0.0 <= kernel.rho <= 1.0):
        raise ParameterError(f"rho must lie in [0, 1], got {kernel.rho}")
    n_old, n_new = len(X_old), len(X_new)
    if n_old == 0:
        return gram(kernel.base, X_new)
    if n_new == 0:
        return gram(kernel.base, X_old)
    out = np.empty((n_old + n_new, n_old + n_new))
    out[:n_old, :n_old] = gram(kernel.base, X_old)
    out[n_old:, n_old:] = gram(kernel.base, X_new)
    cross = kernel.rho * cross_gram(kernel.base, X_old, X_new)
    out[:n_old, n_old:] = cross
    out[n_old:, :n_old] = cross.T
    return 0.5 * (out + out.T)


def training_gram(kernel, X, n_old: int = 0) -> np.ndarray:
    """Gram over a training list whose first ``n_old`` entries are the
    transferred block (scaled cross-covariance for dependent kernels)."""
    if isinstance(kernel, DependentKernel):
        return dependent_gram(kernel, X[:n_old], X[n_old:])
    return gram(kernel, X)


def prediction_cross(kernel, X_train, X_star, n_old: int = 0) -> np.ndarray:
    """Covariance between training points and query points (queries live on
    the new-object side of a dependent kernel)."""
    if isinstance(kernel, DependentKernel):
        top = kernel.rho * cross_gram(kernel.base, X_train[:n_old], X_star)
        bottom = cross_gram(kernel.base, X_train[n_old:], X_star)
        return np.vstack([top, bottom]) if n_old else bottom
    return cross_gram(kernel, X_train, X_star)


def prediction_diag(kernel, X_star) -> np.ndarray:
    if isinstance(kernel, DependentKernel):
        return kernel_diag(kernel.base, X_star)
    return kernel_diag(kernel, X_star)


def median_heuristic(
    observations: Sequence[FeatureObservation],
    modalities: Sequence[Modality],
    signal_variance: float = 1.0,
    scale: float = 0.5,
) -> CombinedKernel:
    """Uniform-weight combined kernel with per-modality length scales set to
    ``scale`` times the median nonzero pairwise distance (1.0 when
    degenerate). The default half-median keeps sparse classes separated."""
    parts = []
    for mod in modalities:
        xs = _stack(observations, mod)
        if xs.shape[0] > 1:
            sq = (
                np.sum(xs**2, axis=1)[:, None]
                + np.sum(xs**2, axis=1)[None, :]
                - 2.0 * xs @ xs.T
            )
            dists = np.sqrt(np.maximum(sq[np.triu_indices(xs.shape[0], 1)], 0.0))
            dists = dists[dists > 0]
            width = scale * float(np.median(dists)) if dists.size else 1.0
        else:
            width = 1.0
        parts.append((mod, RbfKernel(max(width, 1e-2), signal_variance)))
    return uniform_combined(parts)
