"""Point-cloud ingestion, normalization, and synthetic labeled toy shapes.

Two on-disk formats are supported: ASCII xyz with one ``x y z [label]`` line
per point, and a compact binary format (magic ``PCB1``, little-endian uint32
count, uint8 label flag, float32 coordinates, optional uint8 labels).

The toy generator builds small multi-part assemblies (chairs, tables,
planes) with exact per-point part labels, giving a desk-scale dataset where
an unsupervised 3-part decomposition has an unambiguous ground truth.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

BINARY_MAGIC = b"PCB1"
CLOUD_SUFFIXES = (".xyz", ".pcb")


class CloudFormatError(ValueError):
    """Raised for unreadable or malformed cloud files."""


@dataclass
class LabeledCloud:
    cloud: torch.Tensor                 # (N, 3) float32
    labels: torch.Tensor | None = None  # (N,) int64 part indices
    category: str = ""

    def __post_init__(self):
        self.cloud = torch.as_tensor(self.cloud, dtype=torch.float32)
        if self.cloud.ndim != 2 or self.cloud.shape[1] != 3 or self.cloud.shape[0] < 1:
            raise ValueError(f"cloud must be (N, 3) with N >= 1, got {tuple(self.cloud.shape)}")
        if not torch.isfinite(self.cloud).all():
            raise ValueError("cloud contains non-finite coordinates")
        if self.labels is not None:
            self.labels = torch.as_tensor(self.labels, dtype=torch.int64)
            if self.labels.shape != (self.cloud.shape[0],):
                raise ValueError("labels length must match point count")
            if (self.labels < 0).any():
                raise ValueError("labels must be non-negative")

    @property
    def n_points(self) -> int:
        return self.cloud.shape[0]


def _parse_xyz(raw: bytes, path: Path) -> tuple[np.ndarray, np.ndarray | None]:
    points, labels = [], []
    lines = raw.decode("utf-8", errors="strict").splitlines()
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split()
        if len(fields) not in (3, 4):
            raise CloudFormatError(f"{path}:{lineno}: expected 3 or 4 fields, got {len(fields)}")
        try:
            points.append([float(v) for v in fields[:3]])
        except ValueError as exc:
            raise CloudFormatError(f"{path}:{lineno}: non-numeric coordinate: {exc}") from exc
        if len(fields) == 4:
            try:
                labels.append(int(fields[3]))
            except ValueError as exc:
                raise CloudFormatError(f"{path}:{lineno}: non-integer label: {exc}") from exc
        elif labels:
            raise CloudFormatError(f"{path}:{lineno}: inconsistent label column")
    if not points:
        raise CloudFormatError(f"{path}: no points")
    if labels and len(labels) != len(points):
        raise CloudFormatError(f"{path}: label column present on only some lines")
    pts = np.asarray(points, dtype=np.float32)
    lab = np.asarray(labels, dtype=np.int64) if labels else None
    return pts, lab


def _parse_binary(raw: bytes, path: Path) -> tuple[np.ndarray, np.ndarray | None]:
    header = struct.calcsize("<4sIB")
    if len(raw) < header:
        raise CloudFormatError(f"{path}: truncated header")
    magic, n, has_labels = struct.unpack_from("<4sIB", raw)
    if magic != BINARY_MAGIC:
        raise CloudFormatError(f"{path}: bad magic {magic!r}")
    need = header + 12 * n + (n if has_labels else 0)
    if len(raw) != need:
        raise CloudFormatError(f"{path}: expected {need} bytes, found {len(raw)}")
    if n < 1:
        raise CloudFormatError(f"{path}: no points")
    pts = np.frombuffer(raw, dtype="<f4", count=3 * n, offset=header).reshape(n, 3).copy()
    lab = None
    if has_labels:
        lab = np.frombuffer(raw, dtype=np.uint8, count=n, offset=header + 12 * n)
        lab = lab.astype(np.int64)
    return pts, lab


def write_cloud(path, cloud: LabeledCloud) -> None:
    """Write the binary format; labels included when present."""
    path = Path(path)
    pts = cloud.cloud.detach().cpu().numpy().astype("<f4")
    has = cloud.labels is not None
    blob = struct.pack("<4sIB", BINARY_MAGIC, pts.shape[0], int(has)) + pts.tobytes()
    if has:
        lab = cloud.labels.cpu().numpy()
        if lab.max(initial=0) > 255:
            raise ValueError("binary format stores labels as uint8")
        blob += lab.astype(np.uint8).tobytes()
    path.write_bytes(blob)


def write_xyz(path, cloud: LabeledCloud) -> None:
    path = Path(path)
    pts = cloud.cloud.detach().cpu().numpy()
    lab = cloud.labels.cpu().numpy() if cloud.labels is not None else None
    with path.open("w", encoding="utf-8") as fh:
        for i, (x, y, z) in enumerate(pts):
            if lab is None:
                fh.write(f"{x:.8g} {y:.8g} {z:.8g}\n")
            else:
                fh.write(f"{x:.8g} {y:.8g} {z:.8g} {lab[i]}\n")


def _resample(pts: np.ndarray, lab: np.ndarray | None, n_points: int, seed: int):
    n = pts.shape[0]
    rng = np.random.default_rng(seed)
    if n >= n_points:
        idx = rng.choice(n, size=n_points, replace=False)
    else:
        idx = rng.choice(n, size=n_points, replace=True)
    idx.sort()
    return pts[idx], None if lab is None else lab[idx]


def load_cloud_file(path, n_points: int | None = None) -> LabeledCloud:
    """Read one cloud file (xyz or binary), optionally resampled to a fixed
    cardinality seeded by the file's content hash."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    raw = path.read_bytes()
    if raw[:4] == BINARY_MAGIC:
        pts, lab = _parse_binary(raw, path)
    else:
        pts, lab = _parse_xyz(raw, path)
    if not np.isfinite(pts).all():
        raise CloudFormatError(f"{path}: non-finite coordinates")
    if n_points is not None and pts.shape[0] != n_points:
        seed = int.from_bytes(hashlib.sha256(raw).digest()[:8], "little") % (2**63)
        pts, lab = _resample(pts, lab, n_points, seed)
    return LabeledCloud(cloud=torch.from_numpy(np.ascontiguousarray(pts)), labels=lab)


def load_clouds(path, n_points: int | None = None) -> list[LabeledCloud]:
    """Load a single cloud file or every cloud file in a directory (sorted)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    if path.is_file():
        return [load_cloud_file(path, n_points)]
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in CLOUD_SUFFIXES)
    if not files:
        raise CloudFormatError(f"{path}: no cloud files ({'/'.join(CLOUD_SUFFIXES)})")
    return [load_cloud_file(p, n_points) for p in files]


def normalize(cloud: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, float]:
    """Center on the centroid and divide by the max point norm.

    Returns (normalized, center, scale); a degenerate cloud (all points
    identical) keeps scale 1 so the map stays invertible.
    """
    cloud = torch.as_tensor(cloud)
    if cloud.ndim != 2 or cloud.shape[1] != 3 or cloud.shape[0] < 1:
        raise ValueError("normalize expects a non-empty (N, 3) cloud")
    center = cloud.mean(dim=0)
    shifted = cloud - center
    scale = float(shifted.norm(dim=1).max())
    if scale < 1e-12:
        scale = 1.0
    return shifted / scale, center, scale


def denormalize(cloud: torch.Tensor, center: torch.Tensor, scale: float) -> torch.Tensor:
    return torch.as_tensor(cloud) * scale + center


def _box(rng, n, center, half) -> np.ndarray:
    lo = np.asarray(center) - np.asarray(half)
    hi = np.asarray(center) + np.asarray(half)
    return rng.uniform(lo, hi, size=(n, 3))


def _cylinder(rng, n, center, radius, half_h) -> np.ndarray:
    # Uniform in the solid cylinder, axis along z.
    theta = rng.uniform(0, 2 * np.pi, n)
    r = radius * np.sqrt(rng.uniform(0, 1, n))
    z = rng.uniform(-half_h, half_h, n)
    pts = np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)
    return pts + np.asarray(center)


def _allocate(n_points: int, fractions: list[float]) -> list[int]:
    # Largest-remainder allocation summing exactly to n_points.
    raw = [f * n_points for f in fractions]
    counts = [max(1, int(r)) for r in raw]
    while sum(counts) > n_points:
        counts[counts.index(max(counts))] -= 1
    order = sorted(range(len(raw)), key=lambda i: raw[i] - int(raw[i]), reverse=True)
    i = 0
    while sum(counts) < n_points:
        counts[order[i % len(order)]] += 1
        i += 1
    return counts


def _toychair(rng, n_points):
    w = rng.uniform(0.8, 1.2)
    d = rng.uniform(0.8, 1.2)
    seat_h = rng.uniform(0.7, 1.0)
    back_h = rng.uniform(0.7, 1.2)
    slab = rng.uniform(0.06, 0.12)
    leg_r = rng.uniform(0.05, 0.1)
    round_legs = rng.uniform() < 0.5
    n_back, n_seat, n_legs = _allocate(n_points, [0.3, 0.3, 0.4])
    back = _box(rng, n_back, [0, d / 2 - slab / 2, seat_h + back_h / 2], [w / 2, slab / 2, back_h / 2])
    seat = _box(rng, n_seat, [0, 0, seat_h - slab / 2], [w / 2, d / 2, slab / 2])
    legs = []
    half_h = (seat_h - slab) / 2
    for i, count in enumerate(_allocate(n_legs, [0.25] * 4)):
        cx = (w / 2 - leg_r) * (1 if i % 2 else -1)
        cy = (d / 2 - leg_r) * (1 if i // 2 else -1)
        if round_legs:
            legs.append(_cylinder(rng, count, [cx, cy, half_h], leg_r, half_h))
        else:
            legs.append(_box(rng, count, [cx, cy, half_h], [leg_r, leg_r, half_h]))
    parts = [back, seat, np.concatenate(legs)]
    labels = [0] * n_back + [1] * n_seat + [2] * n_legs
    return parts, labels


def _toytable(rng, n_points):
    w = rng.uniform(1.0, 1.6)
    d = rng.uniform(0.8, 1.2)
    h = rng.uniform(0.7, 1.0)
    slab = rng.uniform(0.06, 0.12)
    leg_r = rng.uniform(0.05, 0.1)
    n_top, n_legs = _allocate(n_points, [0.45, 0.55])
    top = _box(rng, n_top, [0, 0, h - slab / 2], [w / 2, d / 2, slab / 2])
    legs = []
    half_h = (h - slab) / 2
    for i, count in enumerate(_allocate(n_legs, [0.25] * 4)):
        cx = (w / 2 - leg_r) * (1 if i % 2 else -1)
        cy = (d / 2 - leg_r) * (1 if i // 2 else -1)
        legs.append(_box(rng, count, [cx, cy, half_h], [leg_r, leg_r, half_h]))
    return [top, np.concatenate(legs)], [0] * n_top + [1] * n_legs


def _toyplane(rng, n_points):
    body_l = rng.uniform(1.2, 1.8)
    body_r = rng.uniform(0.1, 0.16)
    span = rng.uniform(1.2, 2.0)
    chord = rng.uniform(0.25, 0.4)
    tail_h = rng.uniform(0.25, 0.4)
    n_body, n_wing, n_tail = _allocate(n_points, [0.4, 0.4, 0.2])
    # Body along y, wings along x, tail fins at the rear.
    body = _cylinder(rng, n_body, [0, 0, 0], body_r, body_l / 2)
    body = body[:, [0, 2, 1]]  # rotate axis from z to y
    wing = _box(rng, n_wing, [0, body_l * 0.1, 0], [span / 2, chord / 2, 0.02])
    n_vert, n_horiz = _allocate(n_tail, [0.5, 0.5])
    fin_v = _box(rng, n_vert, [0, -body_l / 2 + chord / 4, tail_h / 2], [0.02, chord / 4, tail_h / 2])
    fin_h = _box(rng, n_horiz, [0, -body_l / 2 + chord / 4, 0], [span / 5, chord / 4, 0.02])
    return [body, wing, np.concatenate([fin_v, fin_h])], (
        [0] * n_body + [1] * n_wing + [2] * n_tail
    )


_TOY_BUILDERS = {"toychair": _toychair, "toytable": _toytable, "toyplane": _toyplane}


def synth_toyshapes(category: str, count: int, n_points: int = 256, seed: int = 0) -> list[LabeledCloud]:
    """Procedurally sampled multi-part shapes with exact part labels.

    Deterministic per (seed, index); every cloud comes out normalized
    (centroid at origin, max norm 1).
    """
    if category not in _TOY_BUILDERS:
        raise ValueError(f"unknown toy category {category!r}; choose from {sorted(_TOY_BUILDERS)}")
    if count < 1:
        raise ValueError("count must be >= 1")
    builder = _TOY_BUILDERS[category]
    out = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        parts, labels = builder(rng, n_points)
        pts = torch.from_numpy(np.concatenate(parts).astype(np.float32))
        pts, _, _ = normalize(pts)
        out.append(LabeledCloud(cloud=pts, labels=torch.tensor(labels), category=category))
    return out
