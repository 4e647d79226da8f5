"""Versioned, checksummed binary checkpoints.

Layout: magic, little-endian uint32 header length, a UTF-8 JSON header
(format version, training config, tensor directory, optimizer metadata, log
tail, dataset category), the concatenated float32 tensor payloads in
directory order, and a
trailing SHA-256 of everything before it.  Integer tensors (normalization
step counters) are stored as float32 too; their values are small counts, so
the round trip is exact.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from .losses import LossWeights
from .networks import PartVAE
from .training import TrainConfig, build_optimizer

MAGIC = b"PVC1"
VERSION = 1

# Fields that must agree for a checkpoint to load into a requested config.
STRUCTURAL_FIELDS = ("n_parts", "global_dim", "part_latent_dims", "use_global_map")


class CheckpointError(RuntimeError):
    """Unreadable, corrupt, or wrong-version checkpoint."""


class ConfigMismatchError(CheckpointError):
    """Checkpoint structure differs from the requested configuration."""


@dataclass
class Checkpoint:
    version: int
    cfg: TrainConfig
    model: PartVAE
    optimizer_state: dict | None
    log_tail: list[dict]
    category: str = ""


def _cfg_to_json(cfg: TrainConfig) -> dict:
    raw = asdict(cfg)
    raw["weights"] = asdict(cfg.weights)
    return raw


def _cfg_from_json(raw: dict) -> TrainConfig:
    raw = dict(raw)
    raw["weights"] = LossWeights(**raw["weights"])
    raw["part_latent_dims"] = tuple(raw["part_latent_dims"])
    return TrainConfig(**raw)


def _tensor_payload(t: torch.Tensor) -> bytes:
    return t.detach().cpu().to(torch.float32).numpy().astype("<f4").tobytes()


def save_checkpoint(
    model: PartVAE,
    opt: torch.optim.Optimizer | None,
    cfg: TrainConfig,
    path,
    log_tail: list[dict] | None = None,
    category: str = "",
) -> None:
    directory: list[dict] = []
    payloads: list[bytes] = []

    def add(name: str, tensor: torch.Tensor):
        directory.append(
            {"name": name, "shape": list(tensor.shape), "dtype": str(tensor.dtype).removeprefix("torch.")}
        )
        payloads.append(_tensor_payload(tensor))

    for name, tensor in model.state_dict().items():
        add(name, tensor)

    opt_meta = None
    if opt is not None:
        sd = opt.state_dict()
        opt_meta = {"param_groups": sd["param_groups"], "state_keys": {}}
        for pid, entry in sd["state"].items():
            keys = []
            for key, value in entry.items():
                tensor = value if isinstance(value, torch.Tensor) else torch.tensor(float(value))
                add(f"opt.{pid}.{key}", tensor)
                keys.append(key)
            opt_meta["state_keys"][str(pid)] = keys

    header = {
        "version": VERSION,
        "config": _cfg_to_json(cfg),
        "tensors": directory,
        "optimizer": opt_meta,
        "log_tail": list(log_tail or []),
        "category": category,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = MAGIC + struct.pack("<I", len(header_bytes)) + header_bytes + b"".join(payloads)
    Path(path).write_bytes(body + hashlib.sha256(body).digest())


def _read_verified(path) -> bytes:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 4 + 32:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch (corrupt or truncated)")
    if body[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {body[:4]!r}")
    return body


def load_checkpoint(path, expected: TrainConfig | None = None) -> Checkpoint:
    """Rebuild the model (and optimizer state) stored at ``path``.

    ``expected`` pins structural config fields; any disagreement raises
    ConfigMismatchError rather than silently reinterpreting tensors.
    """
    body = _read_verified(path)
    (header_len,) = struct.unpack_from("<I", body, 4)
    header_start = 8
    payload_start = header_start + header_len
    if payload_start > len(body):
        raise CheckpointError(f"{path}: header length exceeds file size")
    try:
        header = json.loads(body[header_start:payload_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
    if header.get("version") != VERSION:
        raise CheckpointError(
            f"{path}: format version {header.get('version')} unsupported (expected {VERSION})"
        )
    cfg = _cfg_from_json(header["config"])
    if expected is not None:
        diffs = [
            f for f in STRUCTURAL_FIELDS if getattr(cfg, f) != getattr(expected, f)
        ]
        if diffs:
            detail = ", ".join(
                f"{f}: checkpoint={getattr(cfg, f)} requested={getattr(expected, f)}"
                for f in diffs
            )
            raise ConfigMismatchError(f"{path}: config mismatch ({detail})")

    tensors: dict[str, torch.Tensor] = {}
    offset = payload_start
    for meta in header["tensors"]:
        count = int(np.prod(meta["shape"])) if meta["shape"] else 1
        end = offset + 4 * count
        if end > len(body):
            raise CheckpointError(f"{path}: tensor payload truncated at {meta['name']}")
        arr = np.frombuffer(body, dtype="<f4", count=count, offset=offset).reshape(meta["shape"])
        tensors[meta["name"]] = torch.from_numpy(arr.copy()).to(getattr(torch, meta["dtype"]))
        offset = end
    if offset != len(body):
        raise CheckpointError(f"{path}: {len(body) - offset} unexpected trailing bytes")

    model = PartVAE(cfg.model_config())
    state = {k: v for k, v in tensors.items() if not k.startswith("opt.")}
    model.load_state_dict(state, strict=True)

    opt_state = None
    if header["optimizer"] is not None:
        meta = header["optimizer"]
        state_dict = {"param_groups": meta["param_groups"], "state": {}}
        for pid_str, keys in meta["state_keys"].items():
            entry = {}
            for key in keys:
                tensor = tensors[f"opt.{pid_str}.{key}"]
                entry[key] = tensor
            state_dict["state"][int(pid_str)] = entry
        opt_state = state_dict

    return Checkpoint(
        version=header["version"],
        cfg=cfg,
        model=model,
        optimizer_state=opt_state,
        log_tail=list(header.get("log_tail", [])),
        category=header.get("category", ""),
    )


def restore_optimizer(ckpt: Checkpoint) -> torch.optim.Optimizer:
    opt = build_optimizer(ckpt.model, ckpt.cfg)
    if ckpt.optimizer_state is not None:
        opt.load_state_dict(ckpt.optimizer_state)
    return opt
