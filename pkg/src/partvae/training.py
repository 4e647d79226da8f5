"""Optimizer loop: seeded mini-batching, adaptive-moment updates, logging.

One step encodes a batch, evaluates the full objective per cloud with a
step-derived seed (covering reparameterization noise and primitive surface
resampling), averages, and applies one Adam update.  Everything is
deterministic given (config, dataset, seed); two runs with the same seed
produce identical loss traces and final parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch

from . import losses
from .data import LabeledCloud
from .latent import PosteriorParams
from .losses import LossBreakdown, LossWeights
from .networks import ModelConfig, PartVAE


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 1000
    batch_size: int = 30
    n_parts: int = 3
    global_dim: int = 256
    part_latent_dims: tuple[int, int, int] = (32, 8, 8)
    weights: LossWeights = field(default_factory=LossWeights)
    use_global_map: bool = True
    seed: int = 0
    points_per_cloud: int = 2048
    prim_samples: int = 64
    grad_clip: float | None = 10.0
    check_finite: bool = True
    checkpoint_every: int = 0  # epochs; 0 disables the callback cadence

    def __post_init__(self):
        if self.learning_rate <= 0 or not math.isfinite(self.learning_rate):
            raise ValueError("learning_rate must be positive and finite")
        if self.epochs < 0 or self.batch_size < 1 or self.points_per_cloud < 1:
            raise ValueError("epochs must be >= 0; batch_size and points_per_cloud >= 1")
        if self.n_parts < 1 or self.global_dim < 1:
            raise ValueError("n_parts and global_dim must be >= 1")
        block = sum(self.part_latent_dims)
        if not self.use_global_map and self.global_dim != self.n_parts * block:
            raise ValueError(
                f"without the global map, global_dim must be n_parts * {block} "
                f"= {self.n_parts * block}, got {self.global_dim}"
            )
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive or None")

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            n_parts=self.n_parts,
            global_dim=self.global_dim,
            part_dims=self.part_latent_dims,
            use_global_map=self.use_global_map,
            prim_samples=self.prim_samples,
        )


def build_model(cfg: TrainConfig) -> PartVAE:
    """Construct a model with seed-reproducible initialization."""
    torch.manual_seed(cfg.seed)
    return PartVAE(cfg.model_config())


def build_optimizer(model: PartVAE, cfg: TrainConfig) -> torch.optim.Optimizer:
    return torch.optim.Adam(
        model.parameters(), lr=cfg.learning_rate, betas=(0.9, 0.999), eps=1e-8
    )


def _as_cloud_tensor(item) -> torch.Tensor:
    if isinstance(item, LabeledCloud):
        return item.cloud
    return torch.as_tensor(item)


def _mean_breakdown(parts: list[LossBreakdown]) -> LossBreakdown:
    n = len(parts)
    return LossBreakdown(
        l_point=sum(b.l_point for b in parts) / n,
        l_prim=sum(b.l_prim for b in parts) / n,
        l_overlap=sum(b.l_overlap for b in parts) / n,
        l_kl=sum(b.l_kl for b in parts) / n,
        total=sum(b.total for b in parts) / n,
    )


def _check_breakdown_finite(b: LossBreakdown) -> None:
    for name in ("l_point", "l_prim", "l_overlap", "l_kl", "total"):
        value = getattr(b, name).detach()
        if not torch.isfinite(value).all():
            raise RuntimeError(f"non-finite loss term {name} = {float(value)}")


def train_step(
    model: PartVAE,
    opt: torch.optim.Optimizer,
    batch: list,
    cfg: TrainConfig,
    step_seed: int,
) -> tuple[PartVAE, torch.optim.Optimizer, LossBreakdown]:
    """One gradient step on a batch; model and optimizer update in place."""
    if not batch:
        raise ValueError("batch must be non-empty")
    clouds = [_as_cloud_tensor(item) for item in batch]
    model.train()
    stacked = torch.stack(clouds)
    mu, logvar = model.encode(stacked)
    per_item = []
    for i, cloud in enumerate(clouds):
        post = PosteriorParams(mu=mu[i], logvar=logvar[i])
        item_seed = (step_seed * 1_000_003 + i) % (2**31)
        per_item.append(losses.total_loss(model, cloud, post, cfg.weights, item_seed))
    mean = _mean_breakdown(per_item)
    _check_breakdown_finite(mean)
    opt.zero_grad()
    mean.total.backward()
    if cfg.grad_clip is not None:
        torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
    opt.step()
    if cfg.check_finite:
        for name, p in model.named_parameters():
            if not torch.isfinite(p).all():
                raise RuntimeError(f"parameter {name} became non-finite after the update")
    return model, opt, mean


def epoch_means(log: list[dict]) -> dict[int, float]:
    """Epoch -> mean total loss over its steps."""
    sums: dict[int, list[float]] = {}
    for rec in log:
        sums.setdefault(rec["epoch"], []).append(rec["total"])
    return {e: sum(v) / len(v) for e, v in sums.items()}


def train(
    dataset: list,
    cfg: TrainConfig,
    callbacks: dict | None = None,
    model: PartVAE | None = None,
) -> tuple[PartVAE, list[dict]]:
    """Full seeded loop over the dataset.

    Returns the trained model and a flat log of per-step records
    {epoch, step, l_point, l_prim, l_overlap, l_kl, total}.  Callbacks:
    ``on_epoch(epoch, mean_total)`` after every epoch and
    ``checkpoint(model, epoch)`` every ``cfg.checkpoint_every`` epochs.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    callbacks = callbacks or {}
    if model is None:
        model = build_model(cfg)
    opt = build_optimizer(model, cfg)
    log: list[dict] = []
    for epoch in range(cfg.epochs):
        order_gen = torch.Generator().manual_seed((cfg.seed * 1_000_003 + epoch) % (2**31))
        order = torch.randperm(len(dataset), generator=order_gen).tolist()
        step = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [dataset[i] for i in order[start : start + cfg.batch_size]]
            step_seed = ((cfg.seed * 1_000_003 + epoch) * 1_000_033 + step) % (2**31)
            _, _, breakdown = train_step(model, opt, batch, cfg, step_seed)
            log.append({"epoch": epoch, "step": step, **breakdown.detached()})
            step += 1
        if "on_epoch" in callbacks:
            means = [r["total"] for r in log if r["epoch"] == epoch]
            callbacks["on_epoch"](epoch, sum(means) / len(means))
        if cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            if "checkpoint" in callbacks:
                callbacks["checkpoint"](model, epoch)
    return model, log
