"""Weight and output-distribution geometry.

svd_diff splits a weight update into scaling (singular-value ratios) and
rotation (subspace reorientation); linear_cka, kl_mean, l2_distance and
fisher_distance quantify representation drift; log_minmax is the per-series
normalization used to put those metrics on a common [0, 1] scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ConstantSeries,
    DegenerateInput,
    InvalidDistribution,
    LengthMismatch,
    NegativeWeight,
    NumericFailure,
    ShapeMismatch,
    ShortSeries,
)

KL_SMOOTHING = 1e-6
LOG_MINMAX_EPS = 1e-8
DEFAULT_SVD_TOL = 1e-6


@dataclass(frozen=True)
class MatrixPair:
    name: str
    pre: np.ndarray
    post: np.ndarray

    def __post_init__(self) -> None:
        if self.pre.ndim != 2 or self.post.ndim != 2:
            raise ShapeMismatch(f"{self.name}: matrices must be 2-D")
        if self.pre.shape != self.post.shape:
            raise ShapeMismatch(
                f"{self.name}: pre {self.pre.shape} vs post {self.post.shape}"
            )


@dataclass(frozen=True)
class SVDReport:
    name: str
    scaling_ratios: tuple[float, ...]
    left_alignment: float
    right_alignment: float
    recon_residual: float
    degenerate_directions: int = 0

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "scaling_ratios": list(self.scaling_ratios),
            "left_alignment": self.left_alignment,
            "right_alignment": self.right_alignment,
            "recon_residual": self.recon_residual,
            "degenerate_directions": self.degenerate_directions,
        }


@dataclass(frozen=True)
class SimilarityReport:
    """Raw similarity metrics plus their per-series normalized values.

    Normalization is per metric across the series context (one value per
    scale tag), never across metrics or models.
    """

    scale_tags: tuple[int, ...]
    raw: dict[str, tuple[float, ...]]
    normalized: dict[str, tuple[float, ...]]

    def to_record(self) -> dict:
        return {
            "scale_tags": list(self.scale_tags),
            "raw": {k: list(v) for k, v in self.raw.items()},
            "normalized": {k: list(v) for k, v in self.normalized.items()},
        }


def svd_diff(pair: MatrixPair, rank: Optional[int] = None, tol: float = DEFAULT_SVD_TOL) -> SVDReport:
    """Compare the singular structure of a pre/post weight matrix pair.

    Scaling ratios are post/pre singular values over the top-`rank`
    directions, excluding directions where the pre spectrum is degenerate
    (sigma_i < tol * sigma_1). Alignment is the mean squared cosine of the
    principal angles between the top-`rank` singular subspaces, computed for
    the left and right factors separately.
    """
    w, w2 = np.asarray(pair.pre, dtype=np.float64), np.asarray(pair.post, dtype=np.float64)
    if not (np.isfinite(w).all() and np.isfinite(w2).all()):
        raise NumericFailure(f"{pair.name}: non-finite entries")
    max_rank = min(w.shape)
    if rank is None:
        rank = min(32, max_rank)
    if not 1 <= rank <= max_rank:
        raise ValueError(f"rank must be in 1..{max_rank}")

    try:
        u, s, vt = np.linalg.svd(w, full_matrices=False)
        u2, s2, vt2 = np.linalg.svd(w2, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"{pair.name}: SVD failed: {exc}") from exc

    if s[0] <= 0.0:
        raise DegenerateInput(f"{pair.name}: zero pre matrix")

    keep = s[:rank] >= tol * s[0]
    ratios = tuple(float(r) for r in (s2[:rank][keep] / s[:rank][keep]))
    degenerate = int(rank - keep.sum())

    left = _subspace_alignment(u[:, :rank], u2[:, :rank])
    right = _subspace_alignment(vt[:rank].T, vt2[:rank].T)

    recon = u2 @ np.diag(s2) @ vt2
    denom = np.linalg.norm(w2)
    residual = float(np.linalg.norm(recon - w2) / denom) if denom > 0 else 0.0
    if residual > tol:
        raise NumericFailure(
            f"{pair.name}: SVD recomposition residual {residual:.3e} exceeds {tol:.3e}"
        )

    return SVDReport(
        name=pair.name,
        scaling_ratios=ratios,
        left_alignment=left,
        right_alignment=right,
        recon_residual=residual,
        degenerate_directions=degenerate,
    )


def _subspace_alignment(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared cosine of principal angles between span(a) and span(b).

    The cosines are the singular values of a^T b for orthonormal bases; SVD
    bases are already orthonormal, so no re-orthogonalization is needed.
    """
    cos = np.linalg.svd(a.T @ b, compute_uv=False)
    cos = np.clip(cos, 0.0, 1.0)
    return float(np.mean(cos**2))


def linear_cka(x: np.ndarray, y: np.ndarray) -> float:
    """Linear CKA between two representations with matched rows.

    Columns are centered first; the value is ||y^T x||_F^2 divided by
    ||x^T x||_F * ||y^T y||_F, which lies in [0, 1] and is invariant to
    orthogonal transforms and isotropic scaling of either argument.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2:
        raise ShapeMismatch("inputs must be 2-D")
    if x.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"row counts differ: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    xc = x - x.mean(axis=0, keepdims=True)
    yc = y - y.mean(axis=0, keepdims=True)
    cross = np.linalg.norm(yc.T @ xc) ** 2
    norm_x = np.linalg.norm(xc.T @ xc)
    norm_y = np.linalg.norm(yc.T @ yc)
    if norm_x == 0.0 or norm_y == 0.0:
        raise DegenerateInput("zero-variance representation")
    return float(cross / (norm_x * norm_y))


def _check_distribution(vec: Sequence[float], length: int = 4) -> np.ndarray:
    arr = np.asarray(vec, dtype=np.float64)
    if arr.shape != (length,):
        raise InvalidDistribution(f"expected a {length}-vector, got shape {arr.shape}")
    if (arr < 0).any():
        raise InvalidDistribution("negative probability mass")
    if abs(float(arr.sum()) - 1.0) > 1e-3:
        raise InvalidDistribution(f"probabilities sum to {arr.sum():.6f}")
    return arr


def kl_divergence(p: Sequence[float], q: Sequence[float], smoothing: float = KL_SMOOTHING) -> float:
    """KL(p || q) in nats over two discrete distributions.

    With smoothing > 0, the value is added to zero entries of both vectors
    and each is renormalized, so the result is always finite. With smoothing
    disabled, 0 * ln 0 is taken as 0 and a zero in q under positive p mass
    is an infinite divergence.
    """
    p_arr = _check_distribution(p, length=len(p))
    q_arr = _check_distribution(q, length=len(q))
    if p_arr.shape != q_arr.shape:
        raise LengthMismatch("p and q differ in length")
    if smoothing > 0:
        p_arr = np.where(p_arr == 0.0, smoothing, p_arr)
        q_arr = np.where(q_arr == 0.0, smoothing, q_arr)
        p_arr = p_arr / p_arr.sum()
        q_arr = q_arr / q_arr.sum()
    total = 0.0
    for pi, qi in zip(p_arr, q_arr):
        if pi == 0.0:
            continue
        if qi == 0.0:
            return math.inf
        total += float(pi) * math.log(float(pi) / float(qi))
    return max(total, 0.0)


def kl_mean(
    p_list: Sequence[Sequence[float]],
    q_list: Sequence[Sequence[float]],
    smoothing: float = KL_SMOOTHING,
) -> float:
    """Mean KL(p || q) over aligned lists of 4-way choice distributions."""
    if len(p_list) != len(q_list):
        raise LengthMismatch(f"{len(p_list)} vs {len(q_list)} distributions")
    if not p_list:
        raise LengthMismatch("empty distribution lists")
    divs = []
    for p, q in zip(p_list, q_list):
        _check_distribution(p)
        _check_distribution(q)
        divs.append(kl_divergence(p, q, smoothing=smoothing))
    return float(np.mean(divs))


def l2_distance(pair: MatrixPair) -> float:
    """Frobenius norm of the weight update."""
    return float(np.linalg.norm(np.asarray(pair.post, dtype=np.float64) - np.asarray(pair.pre, dtype=np.float64)))


def fisher_distance(pair: MatrixPair, fisher: np.ndarray) -> float:
    """Diagonal-Fisher-weighted update norm: sqrt(sum F * (dW)^2).

    Fisher weights are ingested (mean squared gradients exported by a model
    runner), never computed here.
    """
    f = np.asarray(fisher, dtype=np.float64)
    if f.shape != pair.pre.shape:
        raise ShapeMismatch(f"fisher {f.shape} vs weights {pair.pre.shape}")
    if (f < 0).any():
        raise NegativeWeight("fisher weights must be non-negative")
    delta = np.asarray(pair.post, dtype=np.float64) - np.asarray(pair.pre, dtype=np.float64)
    return float(np.sqrt(np.sum(f * delta * delta)))


def log_minmax(series: Sequence[float], eps: float = LOG_MINMAX_EPS) -> list[float]:
    """Per-series normalization: add eps, take log10, rescale to [0, 1].

    Order-preserving; the minimum maps to 0 and the maximum to 1.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    values = [float(v) for v in series]
    if len(values) < 2:
        raise ShortSeries("need at least two values")
    if any(v < 0 for v in values):
        raise ValueError("series values must be non-negative")
    logs = [math.log10(v + eps) for v in values]
    low, high = min(logs), max(logs)
    if high == low:
        raise ConstantSeries("all series values are equal")
    return [(v - low) / (high - low) for v in logs]


def similarity_series(
    per_scale: dict[int, dict[str, float]],
    eps: float = LOG_MINMAX_EPS,
) -> SimilarityReport:
    """Assemble raw metric series over scale tags and normalize each metric
    independently. Series too short or constant keep raw values and get no
    normalized counterpart."""
    tags = tuple(sorted(per_scale))
    metrics = sorted({m for vals in per_scale.values() for m in vals})
    raw: dict[str, tuple[float, ...]] = {}
    normalized: dict[str, tuple[float, ...]] = {}
    for metric in metrics:
        series = tuple(float(per_scale[t][metric]) for t in tags if metric in per_scale[t])
        if len(series) != len(tags):
            continue
        raw[metric] = series
        try:
            normalized[metric] = tuple(log_minmax(series, eps=eps))
        except (ConstantSeries, ShortSeries):
            pass
    return SimilarityReport(scale_tags=tags, raw=raw, normalized=normalized)
