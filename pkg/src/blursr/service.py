"""HTTP curation service backing the mask-review UI.

The filesystem manifest plus PNGs remain the source of truth; every
mutation is a temp-file-plus-rename on the artifact followed by an atomic
manifest rewrite, so a crash never leaves a half-written mask. Writes are
serialized per sample id; optimistic concurrency via the If-Match header
carrying the record revision (a stale revision gets 409, last-writer-wins
is disabled for clients that send it).
"""

from __future__ import annotations

import io
import threading
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image

from . import dataset as ds
from .dataset import (
    BLUR_TYPES,
    INTENSITIES,
    REVIEW_STATES,
    DatasetManifest,
    atomic_write_bytes,
    blur_area_fraction,
    load_image,
    load_manifest,
    save_manifest,
    size_category,
)

__all__ = ["CurationStore", "create_app"]

PAGE_SIZE = 50


class CurationStore:
    """In-process view of the manifest with per-sample write locks."""

    def __init__(self, manifest_path):
        self.manifest_path = Path(manifest_path)
        self.manifest: DatasetManifest = load_manifest(self.manifest_path)
        self._locks: dict[str, threading.Lock] = {s.id: threading.Lock() for s in self.manifest.samples}
        self._manifest_lock = threading.Lock()
        self._fractions: dict[str, float] = {}
        self._dims: dict[str, tuple[int, int]] = {}
        for s in self.manifest.samples:
            mask = ds.load_mask(self.manifest.mask_file(s))
            self._fractions[s.id] = blur_area_fraction(mask)
            self._dims[s.id] = mask.shape

    def lock(self, sample_id: str) -> threading.Lock:
        return self._locks[sample_id]

    def get(self, sample_id: str) -> Optional[ds.BlurSample]:
        try:
            return self.manifest.by_id(sample_id)
        except KeyError:
            return None

    def record(self, s: ds.BlurSample) -> dict:
        h, w = self._dims[s.id]
        fraction = self._fractions[s.id]
        return {
            "id": s.id,
            "blur_type": s.blur_type,
            "intensity": s.intensity,
            "source": s.source,
            "review_state": s.review_state,
            "revision": s.revision,
            "fraction": fraction,
            "size_category": size_category(fraction),
            "width": w,
            "height": h,
        }

    def persist(self) -> None:
        with self._manifest_lock:
            save_manifest(self.manifest, self.manifest_path)

    def update_mask(self, s: ds.BlurSample, payload: bytes, mask: np.ndarray, review_state: str) -> None:
        atomic_write_bytes(self.manifest.mask_file(s), payload)
        self._fractions[s.id] = blur_area_fraction(mask)
        self._dims[s.id] = mask.shape
        s.review_state = review_state
        s.revision += 1
        self.persist()

    def stats(self) -> dict:
        by_state: dict[str, int] = {}
        by_type: dict[str, int] = {}
        by_intensity: dict[str, int] = {}
        by_size: dict[str, int] = {}
        for s in self.manifest.samples:
            by_state[s.review_state] = by_state.get(s.review_state, 0) + 1
            by_type[s.blur_type] = by_type.get(s.blur_type, 0) + 1
            by_intensity[s.intensity] = by_intensity.get(s.intensity, 0) + 1
            cat = size_category(self._fractions[s.id])
            by_size[cat] = by_size.get(cat, 0) + 1
        return {
            "total": len(self.manifest.samples),
            "by_review_state": by_state,
            "by_blur_type": by_type,
            "by_intensity": by_intensity,
            "by_size_category": by_size,
        }


def _decode_mask_png(payload: bytes) -> tuple[Optional[np.ndarray], Optional[str]]:
    try:
        with Image.open(io.BytesIO(payload)) as im:
            if im.mode != "L":
                return None, f"mask must be 8-bit gray PNG, got mode {im.mode}"
            arr = np.asarray(im)
    except Exception:
        return None, "body is not a decodable PNG"
    if not np.isin(arr, (0, 255)).all():
        return None, "mask not binary (only values 0 and 255 are allowed)"
    return (arr > 0).astype(np.uint8), None


def create_app(manifest_path, ui_dir=None) -> FastAPI:
    store = CurationStore(manifest_path)
    app = FastAPI(title="blur mask curation")
    app.state.store = store

    def not_found(sample_id: str) -> JSONResponse:
        return JSONResponse(status_code=404, content={"detail": f"unknown sample {sample_id!r}"})

    def stale(revision_header: str, current: int) -> bool:
        return revision_header is not None and revision_header != str(current)

    @app.get("/api/samples")
    def list_samples(state: Optional[str] = None, type: Optional[str] = None,
                     page: int = 1, page_size: int = PAGE_SIZE):
        records = [store.record(s) for s in store.manifest.samples]
        if state:
            records = [r for r in records if r["review_state"] == state]
        if type:
            records = [r for r in records if r["blur_type"] == type]
        total = len(records)
        page = max(1, page)
        page_size = max(1, min(page_size, 500))
        start = (page - 1) * page_size
        return {
            "total": total,
            "page": page,
            "page_size": page_size,
            "samples": records[start : start + page_size],
        }

    @app.get("/api/samples/{sample_id}")
    def get_sample(sample_id: str):
        s = store.get(sample_id)
        if s is None:
            return not_found(sample_id)
        return store.record(s)

    @app.get("/api/samples/{sample_id}/image")
    def get_image(sample_id: str):
        s = store.get(sample_id)
        if s is None:
            return not_found(sample_id)
        return Response(content=store.manifest.hr_file(s).read_bytes(), media_type="image/png")

    @app.get("/api/samples/{sample_id}/mask")
    def get_mask(sample_id: str):
        s = store.get(sample_id)
        if s is None:
            return not_found(sample_id)
        return Response(content=store.manifest.mask_file(s).read_bytes(), media_type="image/png")

    @app.put("/api/samples/{sample_id}/mask")
    async def put_mask(sample_id: str, request: Request):
        s = store.get(sample_id)
        if s is None:
            return not_found(sample_id)
        payload = await request.body()
        mask, reason = _decode_mask_png(payload)
        if mask is None:
            return JSONResponse(status_code=422, content={"detail": reason})
        with store.lock(sample_id):
            if stale(request.headers.get("if-match"), s.revision):
                return JSONResponse(status_code=409, content={
                    "detail": "revision conflict", "revision": s.revision})
            expected = store._dims[sample_id]
            if mask.shape != expected:
                return JSONResponse(status_code=422, content={
                    "detail": f"mask extents {mask.shape} do not match image {expected}"})
            store.update_mask(s, payload, mask, review_state="human_verified")
        return store.record(s)

    @app.patch("/api/samples/{sample_id}/labels")
    async def patch_labels(sample_id: str, request: Request):
        s = store.get(sample_id)
        if s is None:
            return not_found(sample_id)
        body = await request.json()
        allowed = {"blur_type": BLUR_TYPES, "intensity": INTENSITIES, "review_state": REVIEW_STATES}
        unknown = set(body) - set(allowed)
        if unknown:
            return JSONResponse(status_code=422, content={
                "detail": f"unknown label field(s): {', '.join(sorted(unknown))}"})
        for key, values in allowed.items():
            if key in body and body[key] not in values:
                return JSONResponse(status_code=422, content={
                    "detail": f"{key} must be one of {list(values)}, got {body[key]!r}"})
        with store.lock(sample_id):
            if stale(request.headers.get("if-match"), s.revision):
                return JSONResponse(status_code=409, content={
                    "detail": "revision conflict", "revision": s.revision})
            for key in allowed:
                if key in body:
                    setattr(s, key, body[key])
            s.revision += 1
            store.persist()
        return store.record(s)

    @app.post("/api/samples/{sample_id}/estimate")
    async def rerun_estimate(sample_id: str, request: Request):
        s = store.get(sample_id)
        if s is None:
            return not_found(sample_id)
        body = await request.json() if await request.body() else {}
        threshold = float(body.get("threshold", 0.5))
        if not 0.0 <= threshold <= 1.0:
            return JSONResponse(status_code=422, content={"detail": "threshold must lie in [0,1]"})
        img = load_image(store.manifest.hr_file(s))
        window = max(4, min(16, min(img.shape[:2])))
        mask = ds.estimate_blur_map(img, window=window, threshold=threshold)
        payload = ds.encode_mask_png(mask)
        with store.lock(sample_id):
            store.update_mask(s, payload, mask, review_state="auto")
        return Response(content=payload, media_type="image/png",
                        headers={"X-Revision": str(s.revision)})

    @app.get("/api/stats")
    def get_stats():
        return store.stats()

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
