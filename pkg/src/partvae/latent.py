"""Global latent space and its disentangled per-part split.

A shape is abstracted by a single global latent z with a standard-normal
prior.  The approximate posterior is a diagonal Gaussian (mu, logvar); the
reparameterization trick keeps sampling differentiable, and the KL to the
prior has the usual closed form.

Disentanglement happens through one bias-free linear map A: the stacked
part latents are z_l = A z, partitioned contiguously into M blocks of
(point-style | pose | primitive) sub-latents.  Because A is strictly linear,
convex combinations of global latents map exactly to the same convex
combinations of every part latent, which is what makes interpolation and
part-level edits well behaved.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

LOGVAR_CLAMP = 10.0
DEFAULT_PART_DIMS = (32, 8, 8)
DEFAULT_GLOBAL_DIM = 256


@dataclass
class PosteriorParams:
    """Diagonal Gaussian posterior over the global latent."""

    mu: torch.Tensor
    logvar: torch.Tensor

    def __post_init__(self):
        self.mu = torch.as_tensor(self.mu)
        self.logvar = torch.clamp(torch.as_tensor(self.logvar), -LOGVAR_CLAMP, LOGVAR_CLAMP)
        if self.mu.shape != self.logvar.shape:
            raise ValueError(
                f"mu/logvar shape mismatch: {tuple(self.mu.shape)} vs {tuple(self.logvar.shape)}"
            )


@dataclass
class PartLatent:
    """The (point-style, pose, primitive) latent triple of one part."""

    z_y: torch.Tensor
    z_t: torch.Tensor
    z_p: torch.Tensor


@dataclass
class LatentBundle:
    """Global latent plus its M disentangled part latents."""

    z: torch.Tensor
    parts: list[PartLatent]

    @property
    def n_parts(self) -> int:
        return len(self.parts)

    def flat(self) -> torch.Tensor:
        """Concatenate all part latents back into the (M * sum(dims),) layout."""
        return torch.cat([torch.cat([p.z_y, p.z_t, p.z_p]) for p in self.parts])

    def replace(self, index: int, **fields) -> "LatentBundle":
        """Copy of the bundle with one part's sub-latents swapped out."""
        parts = list(self.parts)
        old = parts[index]
        parts[index] = PartLatent(
            z_y=fields.get("z_y", old.z_y),
            z_t=fields.get("z_t", old.z_t),
            z_p=fields.get("z_p", old.z_p),
        )
        return LatentBundle(z=self.z, parts=parts)


def reparameterize(post: PosteriorParams, noise: torch.Tensor) -> torch.Tensor:
    """z = mu + exp(logvar / 2) * noise; differentiable in mu and logvar."""
    noise = torch.as_tensor(noise, dtype=post.mu.dtype)
    if noise.shape != post.mu.shape:
        raise ValueError(f"noise shape {tuple(noise.shape)} != mu shape {tuple(post.mu.shape)}")
    return post.mu + torch.exp(0.5 * post.logvar) * noise


def kl_divergence(post: PosteriorParams) -> torch.Tensor:
    """Closed-form KL(N(mu, diag exp(logvar)) || N(0, I)); non-negative."""
    return 0.5 * torch.sum(post.mu.pow(2) + torch.exp(post.logvar) - 1 - post.logvar)


def partition(z_l: torch.Tensor, n_parts: int, part_dims=DEFAULT_PART_DIMS) -> list[PartLatent]:
    """Slice a stacked part-latent vector into M (z_y, z_t, z_p) triples."""
    d_y, d_t, d_p = part_dims
    block = d_y + d_t + d_p
    if z_l.shape != (n_parts * block,):
        raise ValueError(
            f"stacked latent must have shape ({n_parts * block},), got {tuple(z_l.shape)}"
        )
    parts = []
    for m in range(n_parts):
        base = m * block
        parts.append(
            PartLatent(
                z_y=z_l[base : base + d_y],
                z_t=z_l[base + d_y : base + d_y + d_t],
                z_p=z_l[base + d_y + d_t : base + block],
            )
        )
    return parts


def split_latent(
    A: torch.Tensor | None,
    z: torch.Tensor,
    n_parts: int,
    part_dims=DEFAULT_PART_DIMS,
) -> LatentBundle:
    """z_l = A z, partitioned into per-part (z_y, z_t, z_p) blocks.

    Strictly linear: no bias, no nonlinearity, so the split commutes with
    affine combinations of z.  Passing ``A=None`` uses identity slicing (the
    no-global-map ablation), which requires z to already have the stacked
    part dimension.
    """
    z = torch.as_tensor(z)
    block = sum(part_dims)
    if A is None:
        z_l = z
    else:
        if A.shape[0] != n_parts * block or A.shape[1] != z.shape[0]:
            raise ValueError(
                f"A must be ({n_parts * block}, {z.shape[0]}), got {tuple(A.shape)}"
            )
        z_l = A @ z
    return LatentBundle(z=z, parts=partition(z_l, n_parts, part_dims))


def sample_prior(seed: int, n: int, dim: int = DEFAULT_GLOBAL_DIM, dtype=torch.float32) -> torch.Tensor:
    """n i.i.d. standard-normal latents as an (n, dim) tensor; seeded."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    gen = torch.Generator(device="cpu").manual_seed(int(seed))
    return torch.randn(n, dim, generator=gen, dtype=torch.float64).to(dtype)
