"""HTTP JSON API over a loaded checkpoint.

Endpoints expose sampling, encoding, and the part-level edits.  Latent
bundles live in an in-memory LRU store and are addressed by opaque ids, so
an editing session can chain results without re-uploading anything.  All
floats are rounded to 6 significant digits on the way out; payload-identity
guarantees are stated post-rounding.

Error contract: 400 malformed body, 404 unknown bundle id, 422 part index
out of range, 500 anything else, always as JSON {error, detail}.
"""

from __future__ import annotations

import secrets
import threading
from collections import OrderedDict

import torch
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import editing, latent, networks
from .checkpoint import load_checkpoint
from .latent import LatentBundle
from .networks import DecodedShape, PartVAE

DEFAULT_STORE_CAPACITY = 256


class ApiError(Exception):
    def __init__(self, status: int, error: str, detail: str):
        super().__init__(detail)
        self.status = status
        self.error = error
        self.detail = detail


class BundleStore:
    """Thread-safe LRU map of opaque id -> LatentBundle."""

    def __init__(self, capacity: int = DEFAULT_STORE_CAPACITY):
        self.capacity = capacity
        self._lock = threading.Lock()
        self._items: OrderedDict[str, LatentBundle] = OrderedDict()

    def put(self, bundle: LatentBundle) -> str:
        token = secrets.token_hex(8)
        with self._lock:
            self._items[token] = bundle
            while len(self._items) > self.capacity:
                self._items.popitem(last=False)
        return token

    def get(self, token: str) -> LatentBundle:
        with self._lock:
            if token not in self._items:
                raise ApiError(404, "unknown_bundle", f"no bundle with id {token!r}")
            self._items.move_to_end(token)
            return self._items[token]

    def __len__(self) -> int:
        with self._lock:
            return len(self._items)


def round_sig(value: float) -> float:
    """Round to 6 significant digits (the wire precision)."""
    return float(f"{float(value):.6g}")


def _round_nested(values) -> list:
    return [[round_sig(v) for v in row] for row in values]


def shape_payload(decoded: DecodedShape, bundle_id: str | None = None) -> dict:
    primitives = []
    for pose, prim in zip(decoded.poses, decoded.primitives):
        primitives.append(
            {
                "alpha": [round_sig(v) for v in prim.alpha.tolist()],
                "epsilon": [round_sig(v) for v in prim.epsilon.tolist()],
                "taper": [round_sig(v) for v in prim.taper.tolist()],
                "q": [round_sig(v) for v in pose.q.tolist()],
                "t": [round_sig(v) for v in pose.t.tolist()],
            }
        )
    payload = {
        "points": _round_nested(decoded.points.tolist()),
        "part_index": decoded.part_index.tolist(),
        "primitives": primitives,
    }
    if bundle_id is not None:
        payload["bundle_id"] = bundle_id
    return payload


async def _json_body(request: Request) -> dict:
    try:
        body = await request.json()
    except Exception as exc:
        raise ApiError(400, "malformed_body", f"request body is not valid JSON: {exc}") from exc
    if not isinstance(body, dict):
        raise ApiError(400, "malformed_body", "request body must be a JSON object")
    return body


def _require(body: dict, key: str, kind: type, type_name: str):
    if key not in body:
        raise ApiError(400, "malformed_body", f"missing field {key!r}")
    value = body[key]
    if kind is int and isinstance(value, bool):
        raise ApiError(400, "malformed_body", f"field {key!r} must be {type_name}")
    if not isinstance(value, kind):
        raise ApiError(400, "malformed_body", f"field {key!r} must be {type_name}")
    return value


def _part_indices(body: dict, n_parts: int, key: str = "parts") -> list[int]:
    parts = _require(body, key, list, "a list of part indices")
    for p in parts:
        if isinstance(p, bool) or not isinstance(p, int):
            raise ApiError(400, "malformed_body", f"field {key!r} must contain integers")
        if not 0 <= p < n_parts:
            raise ApiError(422, "invalid_part", f"part index {p} out of range [0, {n_parts})")
    return parts


def build_app(
    model: PartVAE,
    category: str = "",
    store_capacity: int = DEFAULT_STORE_CAPACITY,
) -> FastAPI:
    model.eval()
    app = FastAPI(title="partvae service")
    store = BundleStore(store_capacity)
    dtype = next(model.parameters()).dtype

    @app.exception_handler(ApiError)
    async def _api_error(_request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"error": exc.error, "detail": exc.detail})

    @app.exception_handler(Exception)
    async def _internal_error(_request, exc: Exception):
        return JSONResponse(status_code=500, content={"error": "internal", "detail": str(exc)})

    @app.get("/meta")
    async def meta():
        cfg = model.cfg
        return {
            "M": cfg.n_parts,
            "D_z": cfg.global_dim,
            "part_dims": list(cfg.part_dims),
            "category": category,
        }

    @app.post("/sample")
    async def sample(request: Request):
        body = await _json_body(request)
        seed = _require(body, "seed", int, "an integer")
        n = _require(body, "n", int, "an integer")
        if n < 0:
            raise ApiError(400, "malformed_body", "n must be >= 0")
        z = latent.sample_prior(seed, n, model.cfg.global_dim, dtype=dtype)
        shapes = []
        with torch.no_grad():
            for i in range(n):
                bundle = model.split(z[i])
                decoded = networks.decode_bundle(model, bundle)
                shapes.append(shape_payload(decoded, store.put(bundle)))
        return {"shapes": shapes}

    @app.post("/encode")
    async def encode(request: Request):
        body = await _json_body(request)
        points = _require(body, "points", list, "a list of [x, y, z] points")
        if not points:
            raise ApiError(400, "malformed_body", "points must be non-empty")
        for row in points:
            if (
                not isinstance(row, list)
                or len(row) != 3
                or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in row)
            ):
                raise ApiError(400, "malformed_body", "each point must be [x, y, z] numbers")
        cloud = torch.tensor(points, dtype=dtype)
        if not torch.isfinite(cloud).all():
            raise ApiError(400, "malformed_body", "points must be finite")
        bundle = editing.encode_shape(model, cloud, deterministic=True)
        return {"bundle_id": store.put(bundle)}

    @app.post("/mix")
    async def mix(request: Request):
        body = await _json_body(request)
        target_id = _require(body, "target_id", str, "a string")
        reference_id = _require(body, "reference_id", str, "a string")
        parts = _part_indices(body, model.cfg.n_parts)
        target = store.get(target_id)
        reference = store.get(reference_id)
        transfer_primitive = bool(body.get("transfer_primitive", False))
        bundle = editing.mixed_bundle(model, target, reference, parts, transfer_primitive)
        with torch.no_grad():
            decoded = networks.decode_bundle(model, bundle)
        return shape_payload(decoded, store.put(bundle))

    @app.post("/resample")
    async def resample(request: Request):
        body = await _json_body(request)
        bundle_id = _require(body, "bundle_id", str, "a string")
        seed = _require(body, "seed", int, "an integer")
        parts = _part_indices(body, model.cfg.n_parts)
        bundle = store.get(bundle_id)
        edited = editing.resampled_bundle(model, bundle, parts, seed)
        with torch.no_grad():
            decoded = networks.decode_bundle(model, edited)
        return shape_payload(decoded, store.put(edited))

    @app.post("/interpolate")
    async def interpolate(request: Request):
        body = await _json_body(request)
        id_a = _require(body, "id_a", str, "a string")
        id_b = _require(body, "id_b", str, "a string")
        weights = _require(body, "weights", list, "a list of reals in [0, 1]")
        for w in weights:
            if isinstance(w, bool) or not isinstance(w, (int, float)):
                raise ApiError(400, "malformed_body", "weights must be numbers")
            if not 0.0 <= float(w) <= 1.0:
                raise ApiError(400, "malformed_body", f"weight {w} outside [0, 1]")
        bundle_a = store.get(id_a)
        bundle_b = store.get(id_b)
        shapes = []
        with torch.no_grad():
            for w in weights:
                z = (1.0 - float(w)) * bundle_a.z + float(w) * bundle_b.z
                bundle = model.split(z)
                decoded = networks.decode_bundle(model, bundle)
                shapes.append(shape_payload(decoded, store.put(bundle)))
        return {"shapes": shapes}

    return app


def app_from_checkpoint(path, category: str = "", store_capacity: int = DEFAULT_STORE_CAPACITY) -> FastAPI:
    ckpt = load_checkpoint(path)
    return build_app(ckpt.model, category=category or ckpt.category, store_capacity=store_capacity)
