"""Training loss terms and their weighted combination.

Reconstruction is measured per part: input points are hard-assigned to the
part whose sampled primitive surface is nearest, each group is pulled back
into that part's canonical frame, and a symmetric squared-nearest-neighbor
(Chamfer) loss compares it with the part's decoded points.  Two more terms
keep the primitives honest: a bidirectional primitive-to-points distance and
an overlap penalty charging each primitive for other parts' surface samples
that fall inside it.  The KL of the global posterior completes the objective.

The hard assignment is recomputed every evaluation and treated as a constant
during differentiation (no gradient flows through the partition itself).
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
import torch

from . import geometry, latent, networks
from .geometry import Pose, SuperquadricParams
from .latent import PosteriorParams
from .networks import DecodedShape, PartVAE


def default_omega_o(category: str, n_parts: int) -> float:
    """Per-category overlap weight defaults.

    Toy categories inherit the weight of the shape family they imitate;
    unknown categories get the most conservative (smallest) weight.
    """
    base = category.lower().removeprefix("toy")
    if base == "chair":
        return 1e-6 if n_parts <= 3 else 1e-5
    if base in ("plane", "airplane"):
        return 1e-5
    if base == "table":
        return 1e-10
    return 1e-10


@dataclass
class LossWeights:
    w_point: float = 1.0
    w_prim: float = 1.0
    omega_o: float = 1e-6
    beta: float = 1e-3

    def __post_init__(self):
        for name in ("w_point", "w_prim", "omega_o", "beta"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
            setattr(self, name, v)


@dataclass
class LossBreakdown:
    """Individual terms (torch scalars, graph preserved) and the weighted total."""

    l_point: torch.Tensor
    l_prim: torch.Tensor
    l_overlap: torch.Tensor
    l_kl: torch.Tensor
    total: torch.Tensor

    def detached(self) -> dict[str, float]:
        return {
            "l_point": float(self.l_point.detach()),
            "l_prim": float(self.l_prim.detach()),
            "l_overlap": float(self.l_overlap.detach()),
            "l_kl": float(self.l_kl.detach()),
            "total": float(self.total.detach()),
        }


def _pairwise_sq(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    # (N, 3) x (K, 3) -> (N, K) squared Euclidean distances
    return (x.unsqueeze(1) - y.unsqueeze(0)).pow(2).sum(-1)


def chamfer(x, y) -> torch.Tensor:
    """Symmetric mean squared nearest-neighbor distance, halved per direction."""
    x = geometry.as_points(x)
    y = geometry.as_points(y)
    d2 = _pairwise_sq(x, y)
    return 0.5 * d2.min(dim=1).values.mean() + 0.5 * d2.min(dim=0).values.mean()


def _part_surface_samples(
    parts: list[tuple[SuperquadricParams, Pose]],
    n_samples: int,
    seed: int | None,
) -> torch.Tensor:
    samples = []
    for m, (prim, pose) in enumerate(parts):
        if seed is None:
            surf = geometry.sample_superquadric(prim, n_samples, scheme="grid")
        else:
            surf = geometry.sample_superquadric(
                prim, n_samples, scheme="random", seed=seed * 7919 + m
            )
        samples.append(geometry.apply_pose(pose, surf))
    return torch.stack(samples)


def assign_points_to_parts(
    x,
    parts: list[tuple[SuperquadricParams, Pose]],
    samples: torch.Tensor | None = None,
    n_samples: int = 64,
    seed: int | None = None,
) -> torch.Tensor:
    """Hard-assign each point to the part with the nearest surface sample.

    ``samples`` may carry pre-drawn world-frame surface points, shape
    (M, S, 3); otherwise each primitive is sampled here.  Ties go to the
    lowest part index (first-occurrence argmin, evaluated detached: the
    partition carries no gradient).
    """
    x = geometry.as_points(x)
    if samples is None:
        samples = _part_surface_samples(parts, n_samples, seed)
    with torch.no_grad():
        d2 = torch.stack([_pairwise_sq(x, s).min(dim=1).values for s in samples], dim=1)
    labels = np.argmin(d2.cpu().numpy(), axis=1)
    return torch.from_numpy(np.ascontiguousarray(labels)).to(torch.long)


def parts_point_loss(decoded: DecodedShape, x, labels: torch.Tensor | None = None) -> torch.Tensor:
    """Sum over parts of Chamfer between assigned points (pulled back to the
    part's canonical frame) and that part's decoded points.

    Parts that attract no input points contribute zero, keeping early
    training finite when assignments are degenerate.
    """
    x = geometry.as_points(x)
    if labels is None:
        pairs = list(zip(decoded.primitives, decoded.poses))
        labels = assign_points_to_parts(x, pairs, samples=decoded.prim_samples)
    total = x.new_zeros(())
    for m in range(decoded.n_parts):
        x_m = x[labels == m]
        if x_m.shape[0] == 0:
            continue
        canonical = geometry.apply_pose(decoded.poses[m], x_m, direction="inverse")
        total = total + chamfer(canonical, decoded.canonical_points[m])
    return total


def primitive_distance_loss(
    decoded: DecodedShape, x, labels: torch.Tensor | None = None
) -> torch.Tensor:
    """Bidirectional squared distance between primitive surfaces and points.

    Surface-to-points: per part, mean over its surface samples of the squared
    distance to the nearest assigned point (all of ``x`` when the part is
    empty), averaged over parts.  Points-to-surface: mean over ``x`` of the
    squared distance to the nearest sample of any part.
    """
    x = geometry.as_points(x)
    if labels is None:
        pairs = list(zip(decoded.primitives, decoded.poses))
        labels = assign_points_to_parts(x, pairs, samples=decoded.prim_samples)
    m_parts = decoded.n_parts
    surf_to_pts = x.new_zeros(())
    for m in range(m_parts):
        x_m = x[labels == m]
        target = x_m if x_m.shape[0] else x
        d2 = _pairwise_sq(decoded.prim_samples[m], target)
        surf_to_pts = surf_to_pts + d2.min(dim=1).values.mean() / m_parts
    all_samples = decoded.prim_samples.reshape(-1, 3)
    pts_to_surf = _pairwise_sq(x, all_samples).min(dim=1).values.mean()
    return surf_to_pts + pts_to_surf


def overlap_loss(
    parts: list[tuple[SuperquadricParams, Pose]],
    samples: torch.Tensor | list[torch.Tensor],
) -> torch.Tensor:
    """Mean over parts of the hinge max(1 - H_m, 0) evaluated on every other
    part's surface samples; zero when nothing intrudes (and trivially for
    a single part, whose cross-sample set is empty).
    """
    m_parts = len(parts)
    if m_parts != len(samples):
        raise ValueError("one sample set per part required")
    if m_parts == 1:
        ref = samples[0]
        return ref.new_zeros(())
    total = samples[0].new_zeros(())
    for m, (prim, pose) in enumerate(parts):
        cross = torch.cat([samples[j] for j in range(m_parts) if j != m])
        h = geometry.smoothed_indicator(prim, pose, cross)
        total = total + torch.clamp(1.0 - h, min=0.0).mean()
    return total / m_parts


def total_loss(
    model: PartVAE,
    x,
    post: PosteriorParams,
    weights: LossWeights,
    seed: int,
) -> LossBreakdown:
    """Reparameterize, decode, and combine every term per LossWeights.

    The step seed drives both the reparameterization noise and the primitive
    surface resampling, making the evaluation reproducible.
    """
    x = geometry.as_points(x)
    gen = torch.Generator(device="cpu").manual_seed(int(seed))
    noise = torch.randn(post.mu.shape, generator=gen, dtype=torch.float64)
    z = latent.reparameterize(post, noise.to(post.mu.dtype))
    decoded = networks.decode_shape(model, z, sample_seed=seed)
    pairs = list(zip(decoded.primitives, decoded.poses))
    labels = assign_points_to_parts(x, pairs, samples=decoded.prim_samples)
    l_point = parts_point_loss(decoded, x, labels=labels)
    l_prim = primitive_distance_loss(decoded, x, labels=labels)
    l_overlap = overlap_loss(pairs, decoded.prim_samples)
    l_kl = latent.kl_divergence(post)
    total = (
        weights.w_point * l_point
        + weights.w_prim * l_prim
        + weights.omega_o * l_overlap
        + weights.beta * l_kl
    )
    return LossBreakdown(l_point=l_point, l_prim=l_prim, l_overlap=l_overlap, l_kl=l_kl, total=total)
