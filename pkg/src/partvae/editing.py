"""Part-level shape editing on the disentangled latents.

Every branch reads only its own slice of the split latent, so edits are
local by construction: replacing one part's style latent cannot perturb any
other part's decoder inputs, and resampling keeps pose outputs bitwise
fixed because the pose latents are never touched.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import torch

from . import geometry, latent, losses, networks
from .latent import LatentBundle
from .networks import DecodedShape, PartVAE


@dataclass
class EditSelection:
    part_indices: frozenset[int]
    mode: str = "mix"

    def __post_init__(self):
        self.part_indices = frozenset(int(i) for i in self.part_indices)
        if any(i < 0 for i in self.part_indices):
            raise ValueError("part indices must be non-negative")
        if self.mode not in ("mix", "resample"):
            raise ValueError(f"mode must be 'mix' or 'resample', got {self.mode!r}")


def _indices(sel, n_parts: int) -> frozenset[int]:
    idx = sel.part_indices if isinstance(sel, EditSelection) else frozenset(int(i) for i in sel)
    for i in idx:
        if not 0 <= i < n_parts:
            raise IndexError(f"part index {i} out of range for {n_parts} parts")
    return idx


@contextmanager
def _inference(model: PartVAE):
    # Editing is read-only on the model: run in eval mode (frozen
    # normalization statistics) without gradient tracking, then restore.
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            yield
    finally:
        model.train(was_training)


def generate(model: PartVAE, seed: int, n: int) -> list[DecodedShape]:
    """Decode n prior draws; deterministic given the seed."""
    if n < 0:
        raise ValueError("n must be >= 0")
    dtype = next(model.parameters()).dtype
    z = latent.sample_prior(seed, n, model.cfg.global_dim, dtype=dtype)
    with _inference(model):
        return [networks.decode_shape(model, z[i]) for i in range(n)]


def encode_shape(
    model: PartVAE, x, deterministic: bool = True, seed: int = 0
) -> LatentBundle:
    """Encode a cloud to a split latent bundle.

    ``deterministic`` takes the posterior mean; otherwise the latent is
    reparameterized with seeded noise.
    """
    x = geometry.as_points(x).to(next(model.parameters()).dtype)
    with _inference(model):
        post = networks.encoder_forward(model, x)
        if deterministic:
            z = post.mu
        else:
            gen = torch.Generator(device="cpu").manual_seed(int(seed))
            noise = torch.randn(post.mu.shape, generator=gen, dtype=torch.float64)
            z = latent.reparameterize(post, noise.to(post.mu.dtype))
        return model.split(z)


def mixed_bundle(
    model: PartVAE,
    target: LatentBundle,
    reference: LatentBundle,
    sel,
    transfer_primitive: bool = False,
) -> LatentBundle:
    """The edited bundle behind mix_parts, without decoding it."""
    idx = _indices(sel, model.cfg.n_parts)
    if len(reference.parts) != len(target.parts):
        raise ValueError("target and reference bundles must have the same part count")
    bundle = target
    for m in idx:
        fields = {"z_y": reference.parts[m].z_y}
        if transfer_primitive:
            fields["z_p"] = reference.parts[m].z_p
        bundle = bundle.replace(m, **fields)
    return bundle


def mix_parts(
    model: PartVAE,
    target: LatentBundle,
    reference: LatentBundle,
    sel,
    transfer_primitive: bool = False,
) -> DecodedShape:
    """Transfer selected parts' style latents from reference into target.

    The target keeps every pose latent and (unless ``transfer_primitive``)
    every primitive latent, so mixed parts land in the target's arrangement
    with the reference's point style.
    """
    bundle = mixed_bundle(model, target, reference, sel, transfer_primitive)
    with _inference(model):
        return networks.decode_bundle(model, bundle)


def resampled_bundle(model: PartVAE, bundle: LatentBundle, sel, seed: int) -> LatentBundle:
    """The edited bundle behind resample_parts, without decoding it."""
    idx = _indices(sel, model.cfg.n_parts)
    dtype = next(model.parameters()).dtype
    fresh_z = latent.sample_prior(seed, 1, model.cfg.global_dim, dtype=dtype)[0]
    with torch.no_grad():
        fresh = model.split(fresh_z)
    edited = bundle
    for m in idx:
        edited = edited.replace(m, z_y=fresh.parts[m].z_y)
    return edited


def resample_parts(model: PartVAE, bundle: LatentBundle, sel, seed: int) -> DecodedShape:
    """Redraw selected parts' style latents from a fresh prior draw pushed
    through the global-to-parts map; poses and primitives stay fixed."""
    edited = resampled_bundle(model, bundle, sel, seed)
    with _inference(model):
        return networks.decode_bundle(model, edited)


def segment_cloud(model: PartVAE, x) -> tuple[torch.Tensor, DecodedShape]:
    """Unsupervised part labels for a cloud: encode it, decode the part
    primitives, and assign each point to the nearest primitive surface."""
    x = geometry.as_points(x).to(next(model.parameters()).dtype)
    bundle = encode_shape(model, x, deterministic=True)
    with _inference(model):
        decoded = networks.decode_bundle(model, bundle)
    pairs = list(zip(decoded.primitives, decoded.poses))
    labels = losses.assign_points_to_parts(x, pairs, samples=decoded.prim_samples)
    return labels, decoded


def interpolate(
    model: PartVAE, z1: torch.Tensor, z2: torch.Tensor, weights
) -> list[DecodedShape]:
    """Decode convex combinations (1-w) z1 + w z2 for each weight."""
    z1 = torch.as_tensor(z1)
    z2 = torch.as_tensor(z2)
    if z1.shape != z2.shape:
        raise ValueError("latents must have identical shape")
    ws = [float(w) for w in weights]
    if any(not 0.0 <= w <= 1.0 for w in ws):
        raise ValueError("interpolation weights must lie in [0, 1]")
    with _inference(model):
        return [networks.decode_shape(model, (1.0 - w) * z1 + w * z2) for w in ws]
