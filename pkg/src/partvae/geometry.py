"""Superquadric geometry: parametric surfaces, taper deformation, implicit
inside-outside tests, and rigid quaternion poses.

A superquadric with sizes ``alpha = (ax, ay, az)`` and shape exponents
``epsilon = (e1, e2)`` has surface points

    r(eta, omega) = [ ax * c(eta, e1) * c(omega, e2),
                      ay * c(eta, e1) * s(omega, e2),
                      az * s(eta, e1) ]

for eta in [-pi/2, pi/2] and omega in [-pi, pi), where
``c(t, e) = sgn(cos t) * |cos t|**e`` and ``s`` likewise.  The signed power
keeps fractional exponents real on negative bases; ``e1 = e2 = 1`` gives an
ellipsoid and exponents near zero approach a box.  An optional linear taper
scales x and y by ``(1 + k_i * z / az)``, bending the primitive into a
cone-like shape.

The implicit counterpart is the inside-outside function

    F(p) = (|px/ax|**(2/e2) + |py/ay|**(2/e2))**(e2/e1) + |pz/az|**(2/e1)

with F < 1 inside, F = 1 on the surface and F > 1 outside, plus the smoothed
indicator H = F**e1 whose growth rate does not depend on the exponents
(H = squared radial distance for a unit sphere).  H feeds the overlap
penalty max(1 - H, 0).

All functions are pure and differentiable through torch; dtype and device
follow the inputs (python/list inputs are promoted to float64).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch

EPSILON_RANGE = (0.1, 1.9)
ALPHA_RANGE = (0.01, 2.0)
TAPER_RANGE = (-0.9, 0.9)

QUAT_TOL = 1e-6


class ParameterError(ValueError):
    """Raised when a geometric parameter violates its domain."""


def _as_float(x, expected_len: int, name: str) -> torch.Tensor:
    t = torch.as_tensor(x)
    if not torch.is_floating_point(t):
        t = t.to(torch.float64)
    if t.shape != (expected_len,):
        raise ParameterError(f"{name} must have shape ({expected_len},), got {tuple(t.shape)}")
    if not torch.isfinite(t).all():
        raise ParameterError(f"{name} contains non-finite entries")
    return t


def as_points(pts) -> torch.Tensor:
    """Coerce to an (N, 3) floating tensor; rejects empty or non-finite input."""
    t = torch.as_tensor(pts)
    if not torch.is_floating_point(t):
        t = t.to(torch.float64)
    if t.ndim == 1 and t.shape == (3,):
        t = t.unsqueeze(0)
    if t.ndim != 2 or t.shape[-1] != 3 or t.shape[0] < 1:
        raise ParameterError(f"point cloud must be (N, 3) with N >= 1, got {tuple(t.shape)}")
    if not torch.isfinite(t).all():
        raise ParameterError("point cloud contains non-finite coordinates")
    return t


@dataclass
class SuperquadricParams:
    """Size, shape, and taper of a single primitive in its canonical frame."""

    alpha: torch.Tensor
    epsilon: torch.Tensor
    taper: torch.Tensor = field(default_factory=lambda: torch.zeros(2, dtype=torch.float64))

    def __post_init__(self):
        self.alpha = _as_float(self.alpha, 3, "alpha")
        self.epsilon = _as_float(self.epsilon, 2, "epsilon")
        self.taper = _as_float(self.taper, 2, "taper").to(self.alpha.dtype)
        a = self.alpha.detach()
        e = self.epsilon.detach()
        k = self.taper.detach()
        if not (a > 0).all():
            raise ParameterError("alpha components must be strictly positive")
        if not ((e >= EPSILON_RANGE[0] - 1e-9) & (e <= EPSILON_RANGE[1] + 1e-9)).all():
            raise ParameterError(f"epsilon must lie in {EPSILON_RANGE}")
        if not ((k >= TAPER_RANGE[0] - 1e-9) & (k <= TAPER_RANGE[1] + 1e-9)).all():
            raise ParameterError(f"taper must lie in {TAPER_RANGE}")


@dataclass
class Pose:
    """Rigid map x -> R(q) x + t from canonical to world frame.

    The quaternion is (w, x, y, z), normalized on construction; near-zero
    inputs are rejected rather than normalized into garbage.
    """

    q: torch.Tensor
    t: torch.Tensor = field(default_factory=lambda: torch.zeros(3, dtype=torch.float64))

    def __post_init__(self):
        self.q = _as_float(self.q, 4, "q")
        self.t = _as_float(self.t, 3, "t").to(self.q.dtype)
        norm = self.q.detach().norm()
        if norm < 1e-8:
            raise ParameterError("quaternion norm is degenerate (< 1e-8)")
        self.q = self.q / self.q.norm()

    @staticmethod
    def identity(dtype=torch.float64) -> "Pose":
        return Pose(torch.tensor([1.0, 0, 0, 0], dtype=dtype), torch.zeros(3, dtype=dtype))


def signed_pow(base: torch.Tensor, exponent) -> torch.Tensor:
    """sgn(base) * |base|**exponent, elementwise."""
    return torch.sign(base) * torch.abs(base).pow(exponent)


def quaternion_to_rotation(q: torch.Tensor) -> torch.Tensor:
    """Rotation matrix of a unit quaternion (w, x, y, z).

    The result is orthonormal with determinant +1.  Raises for near-zero
    quaternions; anything else is normalized first, so the caller may pass a
    raw decoder output.
    """
    q = _as_float(q, 4, "q")
    norm = q.norm()
    if norm.detach() < 1e-8:
        raise ParameterError("quaternion norm is degenerate (< 1e-8)")
    w, x, y, z = (q / norm).unbind(-1)
    row0 = torch.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)])
    row1 = torch.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)])
    row2 = torch.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)])
    return torch.stack([row0, row1, row2])


def apply_pose(pose: Pose, pts, direction: str = "forward") -> torch.Tensor:
    """Apply a rigid pose to an (N, 3) cloud.

    ``forward`` maps canonical to world (R x + t); ``inverse`` maps world back
    to canonical (R^T (x - t)).  forward then inverse is the identity to
    floating-point precision.
    """
    pts = as_points(pts)
    if (pose.q.detach().norm() - 1).abs() > QUAT_TOL:
        raise ParameterError("pose quaternion is not unit length")
    rot = quaternion_to_rotation(pose.q).to(pts.dtype)
    t = pose.t.to(pts.dtype)
    if direction == "forward":
        return pts @ rot.T + t
    if direction == "inverse":
        return (pts - t) @ rot
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def apply_taper(params: SuperquadricParams, pts) -> torch.Tensor:
    """Linear taper: x and y are scaled by (1 + k_i * z / alpha_z); z is kept.

    Zero taper is the identity.
    """
    pts = as_points(pts)
    k = params.taper.to(pts.dtype)
    az = params.alpha[2].to(pts.dtype)
    z = pts[:, 2:3]
    fx = 1 + k[0] * z / az
    fy = 1 + k[1] * z / az
    return torch.cat([pts[:, 0:1] * fx, pts[:, 1:2] * fy, z], dim=1)


def invert_taper(params: SuperquadricParams, pts) -> torch.Tensor:
    """Exact inverse of :func:`apply_taper` (z is untouched by the taper, so
    the per-point scale factors can be reconstructed from it).

    Scale factors are clamped away from zero: a query far outside the
    primitive along z can make 1 + k z / az cross zero, and such points are
    far outside anyway.
    """
    pts = as_points(pts)
    k = params.taper.to(pts.dtype)
    az = params.alpha[2].to(pts.dtype)
    z = pts[:, 2:3]
    fx = 1 + k[0] * z / az
    fy = 1 + k[1] * z / az
    fx = torch.sign(fx) * torch.clamp(fx.abs(), min=1e-4) + (fx == 0) * 1e-4
    fy = torch.sign(fy) * torch.clamp(fy.abs(), min=1e-4) + (fy == 0) * 1e-4
    return torch.cat([pts[:, 0:1] / fx, pts[:, 1:2] / fy, z], dim=1)


def inside_outside(params: SuperquadricParams, p) -> torch.Tensor:
    """Implicit inside-outside value F(p) in the canonical, pre-taper frame.

    F < 1 inside, F = 1 on the surface, F > 1 outside.  Accepts a single
    3-vector or an (N, 3) batch; returns a scalar or (N,) tensor accordingly.
    """
    single = torch.as_tensor(p).ndim == 1
    pts = as_points(p)
    a = params.alpha.to(pts.dtype)
    e1, e2 = params.epsilon.to(pts.dtype).unbind(-1)
    sx = (pts[:, 0] / a[0]).abs().pow(2 / e2)
    sy = (pts[:, 1] / a[1]).abs().pow(2 / e2)
    sz = (pts[:, 2] / a[2]).abs().pow(2 / e1)
    f = (sx + sy).pow(e2 / e1) + sz
    return f[0] if single else f


def smoothed_indicator(params: SuperquadricParams, pose: Pose, p_world) -> torch.Tensor:
    """H(p) = F(T^-1(p))**e1 with the taper inverted before evaluating F.

    H < 1 strictly inside the posed primitive, 1 on its surface, > 1 outside;
    the overlap loss consumes max(1 - H, 0).
    """
    single = torch.as_tensor(p_world).ndim == 1
    pts = as_points(p_world)
    canonical = invert_taper(params, apply_pose(pose, pts, "inverse"))
    e1 = params.epsilon[0].to(pts.dtype)
    h = inside_outside(params, canonical).pow(e1)
    return h[0] if single else h


def _angle_grid(count: int, dtype, device) -> tuple[torch.Tensor, torch.Tensor]:
    # Near-square lattice over [-pi/2, pi/2] x [-pi, pi), truncated to count.
    n_eta = max(1, int(math.floor(math.sqrt(count))))
    n_omega = int(math.ceil(count / n_eta))
    eta = torch.linspace(-math.pi / 2, math.pi / 2, n_eta, dtype=dtype, device=device)
    omega = torch.arange(n_omega, dtype=dtype, device=device) * (2 * math.pi / n_omega) - math.pi
    ee, oo = torch.meshgrid(eta, omega, indexing="ij")
    return ee.reshape(-1)[:count], oo.reshape(-1)[:count]


def sample_superquadric(
    params: SuperquadricParams,
    count: int,
    scheme: str = "grid",
    seed: int = 0,
) -> torch.Tensor:
    """Sample ``count`` surface points of the (tapered) superquadric.

    ``grid`` tiles the angle domain on a near-square lattice; ``random`` draws
    angles uniformly with the given seed.  Both are deterministic for fixed
    arguments.  Sampling is uniform in the angles, not in surface area.
    """
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    dtype = params.alpha.dtype
    device = params.alpha.device
    if scheme == "grid":
        eta, omega = _angle_grid(count, dtype, device)
    elif scheme == "random":
        gen = torch.Generator(device="cpu").manual_seed(int(seed))
        u = torch.rand(count, 2, generator=gen, dtype=torch.float64).to(dtype=dtype, device=device)
        eta = (u[:, 0] - 0.5) * math.pi
        omega = (u[:, 1] - 0.5) * 2 * math.pi
    else:
        raise ValueError(f"scheme must be 'grid' or 'random', got {scheme!r}")
    a = params.alpha
    e1, e2 = params.epsilon.unbind(-1)
    ce = signed_pow(torch.cos(eta), e1)
    se = signed_pow(torch.sin(eta), e1)
    co = signed_pow(torch.cos(omega), e2)
    so = signed_pow(torch.sin(omega), e2)
    pts = torch.stack([a[0] * ce * co, a[1] * ce * so, a[2] * se], dim=1)
    return apply_taper(params, pts)
