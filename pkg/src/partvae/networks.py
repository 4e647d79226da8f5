"""Encoder and per-part decoder branches.

The encoder is a PointNet-style stack of shared per-point transforms
(widths 64, 128, 128, 256, each stage batch-normalized with LeakyReLU)
max-pooled over points into a single feature vector, followed by two linear
heads producing the posterior mean and log-variance.  Max pooling makes the
whole map permutation invariant.

Each part owns an independent branch (no weight sharing across parts):

* a tree-expansion point decoder that grows a single root feature through
  branching factors (1, 2, 4, 32) into 256 points, mixing per-level ancestor
  terms, a per-node branching tensor, and a low-rank "loop" perturbation with
  K supports;
* a one-layer pose decoder emitting a unit quaternion and a bounded
  translation;
* a one-layer primitive decoder whose outputs are squashed into the valid
  superquadric parameter ranges.

``decode_shape`` wires a global latent through the linear split and all
branches into a :class:`DecodedShape` holding canonical points, poses,
primitives, their world-frame images, and the assembled union cloud.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn as nn

from . import geometry, latent
from .geometry import Pose, SuperquadricParams
from .latent import LatentBundle, PosteriorParams


@dataclass
class ModelConfig:
    n_parts: int = 3
    global_dim: int = 256
    part_dims: tuple[int, int, int] = (32, 8, 8)
    encoder_widths: tuple[int, ...] = (64, 128, 128, 256)
    tree_features: tuple[int, ...] = (32, 32, 16, 16, 3)
    tree_degrees: tuple[int, ...] = (1, 2, 4, 32)
    loop_supports: int = 10
    leaky_slope: float = 0.2
    t_max: float = 1.0
    use_global_map: bool = True
    prim_samples: int = 64

    def __post_init__(self):
        if self.n_parts < 1:
            raise ValueError("n_parts must be >= 1")
        if len(self.tree_features) != len(self.tree_degrees) + 1:
            raise ValueError("tree_features must have one more entry than tree_degrees")
        if self.tree_features[0] != self.part_dims[0]:
            raise ValueError("tree root feature width must equal the point-style latent dim")
        if self.tree_features[-1] != 3:
            raise ValueError("tree leaves must be 3-d points")
        if not self.use_global_map and self.global_dim != self.n_parts * sum(self.part_dims):
            raise ValueError(
                "without the global map, global_dim must equal n_parts * sum(part_dims)"
            )

    @property
    def part_block(self) -> int:
        return sum(self.part_dims)

    @property
    def points_per_part(self) -> int:
        return math.prod(self.tree_degrees)


class PointNetEncoder(nn.Module):
    """Shared per-point stages + max pool + (mu, logvar) heads."""

    def __init__(self, widths=(64, 128, 128, 256), out_dim=256, slope=0.2):
        super().__init__()
        layers = []
        prev = 3
        for w in widths:
            layers += [nn.Conv1d(prev, w, 1), nn.BatchNorm1d(w), nn.LeakyReLU(slope)]
            prev = w
        self.stages = nn.Sequential(*layers)
        self.mu_head = nn.Linear(prev, out_dim)
        self.logvar_head = nn.Linear(prev, out_dim)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        # x: (B, N, 3) -> features over points, then symmetric max reduction
        feat = self.stages(x.transpose(1, 2))
        pooled = feat.max(dim=2).values
        return self.mu_head(pooled), self.logvar_head(pooled)


class TreeBlock(nn.Module):
    """One expansion level of the tree generator.

    Child features combine an ancestor term (every prior level mapped and
    broadcast to its descendants), a per-node branching tensor that fans each
    parent into ``degree`` children, and a two-linear loop term of rank
    ``in_features * supports``.  All levels except the last apply LeakyReLU.
    """

    def __init__(self, level, features, degrees, supports=10, slope=0.2, final=False):
        super().__init__()
        self.degree = degrees[level]
        self.nodes = math.prod(degrees[:level]) if level else 1
        self.final = final
        in_f, out_f = features[level], features[level + 1]
        self.ancestors = nn.ModuleList(
            nn.Linear(features[a], out_f, bias=False) for a in range(level + 1)
        )
        self.branch = nn.Parameter(torch.empty(self.nodes, in_f, self.degree * in_f))
        self.loop = nn.Sequential(
            nn.Linear(in_f, in_f * supports, bias=False),
            nn.Linear(in_f * supports, out_f, bias=False),
        )
        self.bias = nn.Parameter(torch.empty(1, self.degree, out_f))
        self.act = nn.LeakyReLU(slope)
        nn.init.xavier_uniform_(self.branch)
        bound = 1.0 / math.sqrt(out_f)
        nn.init.uniform_(self.bias, -bound, bound)

    def forward(self, tree: list[torch.Tensor]) -> list[torch.Tensor]:
        batch = tree[0].shape[0]
        n_children = self.nodes * self.degree
        root = 0
        for a, lin in enumerate(self.ancestors):
            mapped = lin(tree[a])
            root = root + mapped.repeat_interleave(n_children // mapped.shape[1], dim=1)
        parent = tree[-1]
        branched = self.act(parent.unsqueeze(2) @ self.branch)
        branched = branched.reshape(batch, n_children, -1)
        child = root + self.loop(branched)
        child = child + self.bias.repeat(1, self.nodes, 1)
        if not self.final:
            child = self.act(child)
        tree = list(tree)
        tree.append(child)
        return tree


class TreePointDecoder(nn.Module):
    """Point-style latent -> fixed-cardinality canonical point cloud."""

    def __init__(self, features=(32, 32, 16, 16, 3), degrees=(1, 2, 4, 32), supports=10, slope=0.2):
        super().__init__()
        n_levels = len(degrees)
        self.blocks = nn.ModuleList(
            TreeBlock(i, features, degrees, supports, slope, final=(i == n_levels - 1))
            for i in range(n_levels)
        )
        self.n_points = math.prod(degrees)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        tree = [z.unsqueeze(1)]
        for block in self.blocks:
            tree = block(tree)
        return tree[-1]


class PoseDecoder(nn.Module):
    """One affine layer to (quaternion, translation).

    The quaternion is normalized, falling back to the identity rotation when
    the raw norm is degenerate; the translation is squashed to
    [-t_max, t_max]^3.
    """

    def __init__(self, in_dim=8, t_max=1.0):
        super().__init__()
        self.layer = nn.Linear(in_dim, 7)
        self.t_max = t_max

    def forward(self, z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        raw = self.layer(z)
        q_raw, t_raw = raw[..., :4], raw[..., 4:]
        norm = q_raw.norm(dim=-1, keepdim=True)
        identity = torch.zeros_like(q_raw)
        identity[..., 0] = 1.0
        q = torch.where(norm > 1e-8, q_raw / norm.clamp_min(1e-8), identity)
        return q, self.t_max * torch.tanh(t_raw)


class PrimitiveDecoder(nn.Module):
    """One affine layer to superquadric (alpha, epsilon, taper), squashed
    into the valid parameter ranges."""

    def __init__(self, in_dim=8):
        super().__init__()
        self.layer = nn.Linear(in_dim, 7)

    def forward(self, z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        raw = self.layer(z)
        a_lo, a_hi = geometry.ALPHA_RANGE
        e_lo, e_hi = geometry.EPSILON_RANGE
        alpha = a_lo + (a_hi - a_lo) * torch.sigmoid(raw[..., :3])
        epsilon = e_lo + (e_hi - e_lo) * torch.sigmoid(raw[..., 3:5])
        taper = geometry.TAPER_RANGE[1] * torch.tanh(raw[..., 5:7])
        return alpha, epsilon, taper


class PartBranch(nn.Module):
    """The three decoders of one part; parameters are not shared across parts."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.point = TreePointDecoder(
            cfg.tree_features, cfg.tree_degrees, cfg.loop_supports, cfg.leaky_slope
        )
        self.pose = PoseDecoder(cfg.part_dims[1], cfg.t_max)
        self.primitive = PrimitiveDecoder(cfg.part_dims[2])


class PartVAE(nn.Module):
    """Encoder, global-to-parts linear map, and M independent decoder branches."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = PointNetEncoder(cfg.encoder_widths, cfg.global_dim, cfg.leaky_slope)
        if cfg.use_global_map:
            self.global_map = nn.Linear(cfg.global_dim, cfg.n_parts * cfg.part_block, bias=False)
            nn.init.normal_(self.global_map.weight, std=cfg.global_dim**-0.5)
        else:
            self.global_map = None
        self.branches = nn.ModuleList(PartBranch(cfg) for _ in range(cfg.n_parts))

    def encode(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Batched (B, N, 3) -> (mu, logvar), each (B, global_dim)."""
        return self.encoder(x)

    def split(self, z: torch.Tensor) -> LatentBundle:
        A = self.global_map.weight if self.global_map is not None else None
        return latent.split_latent(A, z, self.cfg.n_parts, self.cfg.part_dims)


@dataclass
class DecodedShape:
    """All per-part outputs of one decode, plus the assembled union cloud."""

    canonical_points: torch.Tensor        # (M, P, 3), part frames
    poses: list[Pose]
    primitives: list[SuperquadricParams]
    world_points: torch.Tensor            # (M, P, 3)
    prim_samples: torch.Tensor            # (M, S, 3), world frame
    points: torch.Tensor = field(init=False)      # (M * P, 3)
    part_index: torch.Tensor = field(init=False)  # (M * P,)

    def __post_init__(self):
        m, p, _ = self.world_points.shape
        self.points = self.world_points.reshape(m * p, 3)
        self.part_index = torch.arange(m).repeat_interleave(p)

    @property
    def n_parts(self) -> int:
        return self.world_points.shape[0]


def encoder_forward(model: PartVAE, x: torch.Tensor) -> PosteriorParams:
    """Single-cloud (N, 3) encoder pass to posterior parameters."""
    x = geometry.as_points(x)
    mu, logvar = model.encode(x.unsqueeze(0))
    return PosteriorParams(mu=mu.squeeze(0), logvar=logvar.squeeze(0))


def decode_bundle(
    model: PartVAE,
    bundle: LatentBundle,
    prim_samples: int | None = None,
    sample_seed: int | None = None,
) -> DecodedShape:
    """Run every part branch on an already-split latent bundle.

    Primitive surfaces are sampled on a deterministic grid unless a seed is
    given, in which case angles are drawn uniformly (used during training so
    the surface discretization does not bias gradients).
    """
    n_samples = prim_samples if prim_samples is not None else model.cfg.prim_samples
    canonical, world, samples, poses, prims = [], [], [], [], []
    for m, part in enumerate(bundle.parts):
        branch = model.branches[m]
        pts = branch.point(part.z_y.unsqueeze(0)).squeeze(0)
        q, t = branch.pose(part.z_t.unsqueeze(0))
        pose = Pose(q=q.squeeze(0), t=t.squeeze(0))
        alpha, epsilon, taper = branch.primitive(part.z_p.unsqueeze(0))
        prim = SuperquadricParams(
            alpha=alpha.squeeze(0), epsilon=epsilon.squeeze(0), taper=taper.squeeze(0)
        )
        if sample_seed is None:
            surf = geometry.sample_superquadric(prim, n_samples, scheme="grid")
        else:
            surf = geometry.sample_superquadric(
                prim, n_samples, scheme="random", seed=sample_seed * 7919 + m
            )
        canonical.append(pts)
        poses.append(pose)
        prims.append(prim)
        world.append(geometry.apply_pose(pose, pts))
        samples.append(geometry.apply_pose(pose, surf))
    return DecodedShape(
        canonical_points=torch.stack(canonical),
        poses=poses,
        primitives=prims,
        world_points=torch.stack(world),
        prim_samples=torch.stack(samples),
    )


def decode_shape(
    model: PartVAE,
    z: torch.Tensor,
    prim_samples: int | None = None,
    sample_seed: int | None = None,
) -> DecodedShape:
    """Global latent -> split -> all branches -> assembled shape."""
    return decode_bundle(model, model.split(z), prim_samples, sample_seed)
