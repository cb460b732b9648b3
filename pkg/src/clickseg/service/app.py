"""Session-oriented annotation service over the adaptation engine.

One in-process model instance serves every session. All adaptation-bearing
operations (prediction after a click, persistent updates on finish) run
under a single lock, so parameter updates never interleave mid-step even
when requests for different sessions arrive concurrently.
"""
from __future__ import annotations

import asyncio
import dataclasses
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse

from .. import dataio
from ..adapt import AdaptationConfig, AdaptationEngine
from ..clicksim import Click
from ..masks import binarize
from ..model import (
    DecoderParams,
    ImageFeatures,
    encode_image,
    encode_prompts,
    init_params,
    load_params,
    predict,
)
from .schemas import (
    ClickRequest,
    ClickResponse,
    ConfigModel,
    CreateSessionRequest,
    CreateSessionResponse,
    FinishRequest,
    FinishResponse,
    ImageInfo,
    ImageListResponse,
    RlePayload,
    SessionInfo,
    UndoResponse,
)


@dataclass
class SessionRecord:
    session_id: str
    image_id: str
    features: ImageFeatures
    clicks: list[Click] = field(default_factory=list)
    prev_mask: np.ndarray | None = None  # input to the next prediction
    last_prev_input: np.ndarray | None = None  # input to the latest prediction
    latest_prob: np.ndarray | None = None
    status: str = "active"
    ca_touched: bool = False
    snapshot: DecoderParams | None = None
    created: float = field(default_factory=time.time)
    updated: float = field(default_factory=time.time)


class AnnotationService:
    """Holds the model, the image library and all live sessions."""

    def __init__(
        self,
        image_root: str | Path,
        params_path: str | Path | None = None,
        config: AdaptationConfig | None = None,
        export_dir: str | Path | None = None,
        seed: int = 0,
    ):
        self.image_root = Path(image_root)
        params = load_params(params_path) if params_path else init_params(seed)
        self.engine = AdaptationEngine(params, config or AdaptationConfig())
        self.export_dir = Path(export_dir) if export_dir else None
        self.lock = threading.Lock()
        self.sessions: dict[str, SessionRecord] = {}
        self._feature_cache: dict[str, ImageFeatures] = {}

    # -- image library ------------------------------------------------------

    def list_images(self) -> list[ImageInfo]:
        infos = []
        if self.image_root.is_dir():
            for p in sorted(self.image_root.iterdir()):
                if p.suffix.lower() in dataio.IMAGE_EXTENSIONS:
                    img = dataio.load_image(p)
                    infos.append(ImageInfo(image_id=p.name, h=img.shape[0], w=img.shape[1]))
        return infos

    def _features_for(self, image_id: str) -> ImageFeatures:
        if image_id not in self._feature_cache:
            path = self.image_root / image_id
            if not path.is_file():
                raise KeyError(image_id)
            self._feature_cache[image_id] = encode_image(dataio.load_image(path))
        return self._feature_cache[image_id]

    # -- session operations -------------------------------------------------

    def create_session(self, image_id: str) -> SessionRecord:
        features = self._features_for(image_id)
        record = SessionRecord(
            session_id=uuid.uuid4().hex[:12],
            image_id=image_id,
            features=features,
            prev_mask=np.zeros((features.height, features.width)),
        )
        with self.lock:
            record.snapshot = self.engine.begin_image()
            self.sessions[record.session_id] = record
        return record

    def _get_active(self, session_id: str) -> SessionRecord:
        record = self.sessions.get(session_id)
        if record is None:
            raise HTTPException(404, f"unknown session {session_id!r}")
        if record.status != "active":
            raise HTTPException(409, f"session {session_id!r} is finished")
        return record

    def post_click(self, session_id: str, row: int, col: int, positive: bool):
        record = self._get_active(session_id)
        h, w = record.features.height, record.features.width
        if not (0 <= row < h and 0 <= col < w):
            raise HTTPException(
                422, f"click ({row}, {col}) outside image of size {h}x{w}"
            )
        with self.lock:
            record.clicks.append(Click(row, col, positive))
            adapted = self.engine.config.ca_mode != "off"
            if adapted:
                prob = self.engine.click_adapt_step(
                    record.features, record.clicks, record.prev_mask
                )
                record.ca_touched = True
            else:
                prompts = encode_prompts(
                    record.clicks, record.prev_mask, self.engine.config.sigma
                )
                prob = predict(record.features, prompts, self.engine.params)
            record.last_prev_input = record.prev_mask
            record.prev_mask = prob
            record.latest_prob = prob
            record.updated = time.time()
        return record, adapted

    def undo_click(self, session_id: str) -> tuple[SessionRecord, bool]:
        record = self._get_active(session_id)
        if not record.clicks:
            raise HTTPException(409, "no clicks to undo")
        with self.lock:
            record.clicks.pop()
            # replay predictions through the truncated history with the
            # current parameters; CA steps are not replayed, so the result
            # is approximate whenever click adaptation already ran
            prev = np.zeros((record.features.height, record.features.width))
            sigma = self.engine.config.sigma
            prob = prev
            last_input = prev
            for i in range(len(record.clicks)):
                prompts = encode_prompts(record.clicks[: i + 1], prev, sigma)
                last_input = prev
                prob = predict(record.features, prompts, self.engine.params)
                prev = prob
            if not record.clicks:
                prompts = encode_prompts([], prev, sigma)
                prob = predict(record.features, prompts, self.engine.params)
            record.prev_mask = prev if record.clicks else np.zeros_like(prev)
            record.last_prev_input = last_input
            record.latest_prob = prob
            record.updated = time.time()
        return record, record.ca_touched

    def finish_session(self, session_id: str, accept: bool) -> np.ndarray:
        record = self._get_active(session_id)
        with self.lock:
            record.status = "finished"
            record.updated = time.time()
            h, w = record.features.height, record.features.width
            prob = (
                record.latest_prob
                if record.latest_prob is not None
                else np.zeros((h, w))
            )
            if accept:
                prev_input = (
                    record.last_prev_input
                    if record.last_prev_input is not None
                    else np.zeros((h, w))
                )
                self.engine.finish_image(
                    record.features, record.clicks, prev_input, prob,
                    snapshot=record.snapshot,
                )
            elif record.snapshot is not None and record.ca_touched:
                # rejecting a session still reverts its CA drift
                self.engine.params.load_(record.snapshot)
        final = binarize(prob, 0.5)
        if accept and self.export_dir is not None:
            self.export_dir.mkdir(parents=True, exist_ok=True)
            rle = dataio.rle_encode(final)
            out = self.export_dir / f"{record.image_id}.{record.session_id}.json"
            out.write_text(
                f'{{"h": {rle.height}, "w": {rle.width}, "runs": {list(rle.runs)}}}'
            )
        return final


def _rle_payload(mask: np.ndarray) -> RlePayload:
    rle = dataio.rle_encode(mask)
    return RlePayload(h=rle.height, w=rle.width, runs=list(rle.runs))


def create_app(
    image_root: str | Path,
    params_path: str | Path | None = None,
    config: AdaptationConfig | None = None,
    export_dir: str | Path | None = None,
    seed: int = 0,
) -> FastAPI:
    service = AnnotationService(image_root, params_path, config, export_dir, seed)
    app = FastAPI(title="clickseg annotation service", version="1")
    # the browser frontend is served from its own origin; no auth by design
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.service = service
    subscribers: list[asyncio.Queue] = []

    @app.post("/v1/sessions", response_model=CreateSessionResponse, status_code=201)
    def create_session(req: CreateSessionRequest):
        try:
            record = service.create_session(req.image_id)
        except KeyError:
            raise HTTPException(404, f"unknown image {req.image_id!r}")
        return CreateSessionResponse(
            session_id=record.session_id,
            h=record.features.height,
            w=record.features.width,
        )

    @app.get("/v1/sessions/{session_id}", response_model=SessionInfo)
    def get_session(session_id: str):
        record = service.sessions.get(session_id)
        if record is None:
            raise HTTPException(404, f"unknown session {session_id!r}")
        return SessionInfo(
            session_id=record.session_id,
            image_id=record.image_id,
            clicks=len(record.clicks),
            status=record.status,
            created=record.created,
            updated=record.updated,
        )

    @app.post("/v1/sessions/{session_id}/clicks", response_model=ClickResponse)
    async def post_click(session_id: str, req: ClickRequest):
        record, adapted = service.post_click(
            session_id, req.row, req.col, req.label == "pos"
        )
        mask = binarize(record.latest_prob, 0.5)
        payload = _rle_payload(mask)
        for queue in list(subscribers):
            queue.put_nowait({"session_id": session_id, "mask_rle": payload.model_dump()})
        return ClickResponse(
            mask_rle=payload,
            clicks=len(record.clicks),
            adapted=adapted,
            prob_min=float(record.latest_prob.min()),
            prob_max=float(record.latest_prob.max()),
        )

    @app.post("/v1/sessions/{session_id}/undo", response_model=UndoResponse)
    def undo(session_id: str):
        record, approximate = service.undo_click(session_id)
        return UndoResponse(
            mask_rle=_rle_payload(binarize(record.latest_prob, 0.5)),
            clicks=len(record.clicks),
            approximate=approximate,
        )

    @app.post("/v1/sessions/{session_id}/finish", response_model=FinishResponse)
    def finish(session_id: str, req: FinishRequest):
        final = service.finish_session(session_id, req.accept)
        return FinishResponse(mask_rle=_rle_payload(final))

    @app.get("/v1/images", response_model=ImageListResponse)
    def images():
        return ImageListResponse(images=service.list_images())

    @app.get("/v1/images/{image_id}/raw")
    def image_raw(image_id: str):
        path = service.image_root / image_id
        if (
            "/" in image_id
            or path.suffix.lower() not in dataio.IMAGE_EXTENSIONS
            or not path.is_file()
        ):
            raise HTTPException(404, f"unknown image {image_id!r}")
        return FileResponse(path)

    @app.get("/v1/config", response_model=ConfigModel)
    def get_config():
        return ConfigModel(**dataclasses.asdict(service.engine.config))

    @app.put("/v1/config", response_model=ConfigModel)
    def put_config(model: ConfigModel):
        try:
            new_config = AdaptationConfig(**model.model_dump())
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        with service.lock:
            service.engine.config = new_config
        return ConfigModel(**dataclasses.asdict(service.engine.config))

    @app.websocket("/v1/events")
    async def events(ws: WebSocket):
        await ws.accept()
        queue: asyncio.Queue = asyncio.Queue()
        subscribers.append(queue)
        try:
            while True:
                message = await queue.get()
                await ws.send_json(message)
        except WebSocketDisconnect:
            pass
        finally:
            subscribers.remove(queue)

    return app
