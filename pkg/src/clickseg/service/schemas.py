"""Pydantic request/response models for the annotation service API."""
from __future__ import annotations

from pydantic import BaseModel, Field


class RlePayload(BaseModel):
    """Run-length encoded binary mask, starting with a background run."""

    h: int
    w: int
    runs: list[int]


class CreateSessionRequest(BaseModel):
    image_id: str


class CreateSessionResponse(BaseModel):
    session_id: str
    h: int
    w: int


class ClickRequest(BaseModel):
    row: int
    col: int
    label: str = Field(pattern="^(pos|neg)$")


class ClickResponse(BaseModel):
    mask_rle: RlePayload
    clicks: int
    adapted: bool
    prob_min: float
    prob_max: float


class UndoResponse(BaseModel):
    mask_rle: RlePayload
    clicks: int
    approximate: bool


class FinishRequest(BaseModel):
    accept: bool = True


class FinishResponse(BaseModel):
    mask_rle: RlePayload


class ImageInfo(BaseModel):
    image_id: str
    h: int
    w: int


class ImageListResponse(BaseModel):
    images: list[ImageInfo]


class ConfigModel(BaseModel):
    ca_mode: str = "off"
    rm_mode: str = "off"
    cm_enabled: bool = False
    lr: float = 1e-4
    erosion_k: int = 5
    delta: float = 0.45
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    steps_per_event: int = 1
    iou_threshold: float = 0.85
    max_clicks: int = 20
    sigma: float = 10.0


class SessionInfo(BaseModel):
    session_id: str
    image_id: str
    clicks: int
    status: str
    created: float
    updated: float
